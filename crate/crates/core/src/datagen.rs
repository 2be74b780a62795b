//! Seeded synthetic application corpus with a known logistic ground truth.
//!
//! Labels come from `sigmoid(systematic + noise)`. The systematic part uses
//! only observable fields (degree, rank, GPA, year, program, plus local
//! university-level effects), so `1[systematic > 0]` is the Bayes rule.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::enrichment::{
    normalize_name, ProgramMapping, QsRank, UniversityProfile, UniversityStatus,
};
use crate::error::{Error, Result};
use crate::math::{median, sigmoid, skewness};
use crate::records::{ApplicantStatus, Decision, RawApplicationRecord};

pub const US: &str = "United States";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthCoefficients {
    pub is_phd: f64,
    /// Multiplies `(ln rank - ln 100) / ln 10`; positive means top-ranked schools admit fewer.
    pub rank: f64,
    /// Multiplies `(gpa - median) / 0.3`.
    pub gpa: f64,
    pub gpa_phd_extra: f64,
    /// GPA term times rank term.
    pub interaction: f64,
    /// Per year after 2023.
    pub year: f64,
    pub international: f64,
    /// Standard deviation of per-program offsets.
    pub program_sd: f64,
    /// Standard deviation of per (university, degree, applicant status) offsets.
    pub cell_sd: f64,
    /// Standard deviation of per (cell, decision year) offsets.
    pub cohort_sd: f64,
    /// Standard deviation of per-row logit noise outside the systematic part.
    pub noise_sd: f64,
}

impl Default for TruthCoefficients {
    fn default() -> Self {
        TruthCoefficients {
            is_phd: 2.2,
            rank: 0.9,
            gpa: 0.6,
            gpa_phd_extra: 0.6,
            interaction: 0.2,
            year: -0.05,
            international: -0.2,
            program_sd: 0.4,
            cell_sd: 0.6,
            cohort_sd: 2.4,
            noise_sd: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Final-outcome rows for the two supported degree types.
    pub n: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub us_share: f64,
    pub gpa_median: f64,
    /// Log-scale spread of the GPA shortfall below 4.0.
    pub gpa_sigma: f64,
    pub masters_share: f64,
    pub international_share: f64,
    pub missing_gpa_share: f64,
    pub n_universities: usize,
    /// Extra raw rows that the cleaning stages are expected to drop.
    pub noise_rows: usize,
    pub coefficients: TruthCoefficients,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 13_000,
            seed: 42,
            target_acceptance: 0.51,
            us_share: 0.8453,
            gpa_median: 3.8,
            gpa_sigma: 0.75,
            masters_share: 0.3679,
            international_share: 0.5198,
            missing_gpa_share: 0.02,
            n_universities: 70,
            noise_rows: 0,
            coefficients: TruthCoefficients::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("target_acceptance", self.target_acceptance),
            ("us_share", self.us_share),
            ("masters_share", self.masters_share),
            ("international_share", self.international_share),
            ("missing_gpa_share", self.missing_gpa_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidInput(
                "target_acceptance must be strictly between 0 and 1".into(),
            ));
        }
        if !(self.gpa_median > 1.1 && self.gpa_median < 4.0) || self.gpa_sigma <= 0.0 {
            return Err(Error::InvalidInput(
                "gpa_median must lie in (1.1, 4.0) and gpa_sigma be positive".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        if !(8..=PLACES.len()).contains(&self.n_universities) {
            return Err(Error::InvalidInput(format!(
                "n_universities must be in 8..={}",
                PLACES.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    /// Index into the generated record list.
    pub row: usize,
    pub systematic_logit: f64,
    pub true_prob: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub records: Vec<RawApplicationRecord>,
    pub universities: Vec<UniversityProfile>,
    /// `(raw program spelling, mapping)` rows for `disciplines.csv`.
    pub disciplines: Vec<(String, ProgramMapping)>,
    /// One row per final-outcome record; noise rows have none.
    pub truth: Vec<GroundTruthRow>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub rows: usize,
    pub acceptance_rate: f64,
    pub gpa_median: f64,
    pub gpa_skewness: f64,
    pub us_share: f64,
    pub masters_share: f64,
    pub international_share: f64,
    pub bayes_accuracy: f64,
    pub records_by_year: BTreeMap<i32, usize>,
}

impl GeneratedCorpus {
    /// Statistics over the final-outcome rows.
    pub fn summary(&self) -> CorpusSummary {
        let rows: Vec<&RawApplicationRecord> =
            self.truth.iter().map(|t| &self.records[t.row]).collect();
        let n = rows.len().max(1) as f64;
        let us: BTreeSet<&str> = self
            .universities
            .iter()
            .filter(|u| u.country == US)
            .map(|u| u.canonical_name.as_str())
            .collect();
        let alias_to_canonical = canonical_lookup(&self.universities);
        let gpas: Vec<f64> = rows.iter().filter_map(|r| r.gpa).collect();
        let mut by_year = BTreeMap::new();
        for r in &rows {
            *by_year.entry(r.decision_year.unwrap_or(0)).or_insert(0) += 1;
        }
        let share = |f: &dyn Fn(&RawApplicationRecord) -> bool| {
            rows.iter().filter(|r| f(r)).count() as f64 / n
        };
        let acceptance = self.truth.iter().filter(|t| t.label == 1).count() as f64 / n;
        let bayes = self
            .truth
            .iter()
            .filter(|t| u8::from(t.systematic_logit > 0.0) == t.label)
            .count() as f64
            / n;
        CorpusSummary {
            rows: rows.len(),
            acceptance_rate: acceptance,
            gpa_median: median(&gpas).unwrap_or(f64::NAN),
            gpa_skewness: skewness(&gpas).unwrap_or(f64::NAN),
            us_share: share(&|r| {
                alias_to_canonical
                    .get(&normalize_name(&r.university_name))
                    .is_some_and(|c| us.contains(c.as_str()))
            }),
            masters_share: share(&|r| {
                crate::records::DegreeType::normalize(&r.degree_type)
                    == Some(crate::records::DegreeType::Masters)
            }),
            international_share: share(&|r| r.applicant_status == ApplicantStatus::International),
            bayes_accuracy: bayes,
            records_by_year: by_year,
        }
    }
}

fn canonical_lookup(universities: &[UniversityProfile]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for u in universities {
        m.insert(normalize_name(&u.canonical_name), u.canonical_name.clone());
        for a in &u.aliases {
            m.entry(normalize_name(a))
                .or_insert_with(|| u.canonical_name.clone());
        }
    }
    m
}

const PLACES: [&str; 80] = [
    "Ashford",
    "Brookhaven",
    "Cedar Falls",
    "Dunmore",
    "Eastvale",
    "Fairmont",
    "Glenwood",
    "Harrowgate",
    "Ironbridge",
    "Juniper Bay",
    "Kingsport",
    "Lakemont",
    "Maplewood",
    "Northfield",
    "Oakridge",
    "Pinecrest",
    "Queensbury",
    "Riverton",
    "Silverlake",
    "Thornbury",
    "Upton",
    "Valemont",
    "Westbrook",
    "Yarmouth",
    "Zephyr Hills",
    "Alderney",
    "Blackwater",
    "Crestview",
    "Dover Heights",
    "Elmhurst",
    "Foxborough",
    "Greystone",
    "Highland Park",
    "Islington",
    "Jasper",
    "Kestrel",
    "Linden",
    "Marston",
    "Newhaven",
    "Orchard",
    "Portland Bay",
    "Quarry Hill",
    "Redwood",
    "Stonebridge",
    "Tamarind",
    "Umberleigh",
    "Vickers",
    "Willowdale",
    "Yorkton",
    "Zurichberg",
    "Amberley",
    "Bellhaven",
    "Coldstream",
    "Danbury",
    "Everton",
    "Fernhill",
    "Goldcrest",
    "Hawthorne",
    "Inverleith",
    "Jericho",
    "Kilmore",
    "Lochside",
    "Montclair",
    "Norwood",
    "Oldcastle",
    "Penrose",
    "Quinton",
    "Rosedale",
    "Sheffield Vale",
    "Tidewater",
    "Ulverston",
    "Valletta Bay",
    "Whitmore",
    "Yewdale",
    "Zennor",
    "Abbotsford",
    "Briarwood",
    "Claremont",
    "Darnley",
    "Eskdale",
];

const PROGRAMS: [(&str, &str, f64); 20] = [
    ("Computer Science", "Computer & Information Sciences", 5.0),
    ("Data Science", "Computer & Information Sciences", 2.0),
    (
        "Software Engineering",
        "Computer & Information Sciences",
        1.0,
    ),
    ("Electrical Engineering", "Engineering", 2.5),
    ("Mechanical Engineering", "Engineering", 2.0),
    ("Civil Engineering", "Engineering", 1.0),
    ("Chemical Engineering", "Engineering", 1.0),
    ("Physics", "Physical & Mathematical Sciences", 1.5),
    ("Chemistry", "Physical & Mathematical Sciences", 1.5),
    ("Mathematics", "Physical & Mathematical Sciences", 1.5),
    ("Statistics", "Physical & Mathematical Sciences", 1.2),
    ("Biology", "Life Sciences", 1.5),
    ("Neuroscience", "Life Sciences", 1.0),
    ("Biochemistry", "Life Sciences", 0.8),
    ("Economics", "Social Sciences", 1.5),
    ("Psychology", "Social Sciences", 1.5),
    ("Sociology", "Social Sciences", 0.6),
    ("Political Science", "Social Sciences", 0.8),
    ("History", "Humanities", 0.6),
    ("Philosophy", "Humanities", 0.5),
];

/// Alternative spellings that applicants type, mapped by the discipline table.
const PROGRAM_VARIANTS: [(&str, &str); 6] = [
    ("CS", "Computer Science"),
    ("Comp Sci", "Computer Science"),
    ("EE", "Electrical Engineering"),
    ("ECE", "Electrical Engineering"),
    ("MechE", "Mechanical Engineering"),
    ("Econ", "Economics"),
];

/// Country and share of non-US universities.
const COUNTRIES: [(&str, usize); 7] = [
    ("United Kingdom", 6),
    ("Canada", 5),
    ("Germany", 4),
    ("Australia", 3),
    ("Switzerland", 2),
    ("Netherlands", 2),
    ("Singapore", 2),
];

struct University {
    profile: UniversityProfile,
    popularity: f64,
    /// Indices into [`PROGRAMS`].
    programs: Vec<usize>,
    spellings: Vec<String>,
}

fn university_name(place: &str, country: &str, i: usize) -> String {
    match (country, i % 5) {
        ("Germany", 0 | 1) => format!("Universität {place}"),
        ("Germany", _) => format!("Technische Universität {place}"),
        ("Switzerland", _) => format!("École Polytechnique de {place}"),
        ("Netherlands", _) => format!("{place} University of Technology"),
        (US, 0) => format!("University of {place}"),
        (US, 1) => format!("{place} State University"),
        (US, 2) => format!("{place} Institute of Technology"),
        (US, 3) => format!("{place} University"),
        (US, _) => format!("{place} College"),
        (_, 0 | 2) => format!("University of {place}"),
        _ => format!("{place} University"),
    }
}

fn acronym(name: &str) -> String {
    name.split_whitespace()
        .filter(|w| !matches!(*w, "of" | "de" | "the"))
        .filter_map(|w| w.chars().next())
        .collect::<String>()
        .to_uppercase()
}

/// Ranks spread over every admission-threshold band, plus unranked schools.
fn rank_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let n_unranked = (n / 9).max(2);
    let ranked = n - n_unranked;
    let bands: [(u32, u32, f64); 4] = [
        (1, 50, 0.18),
        (51, 150, 0.22),
        (151, 300, 0.22),
        (301, 1200, 0.38),
    ];
    let mut counts: Vec<usize> = bands
        .iter()
        .map(|b| (b.2 * ranked as f64).floor() as usize)
        .collect();
    let short = ranked - counts.iter().sum::<usize>();
    counts[3] += short;
    let mut ranks = BTreeSet::new();
    for (&(lo, hi, _), &c) in bands.iter().zip(&counts) {
        let start = ranks.len();
        while ranks.len() < start + c {
            ranks.insert(rng.gen_range(lo..=hi));
        }
    }
    let mut labels: Vec<String> = ranks
        .into_iter()
        .map(|r| match r {
            601..=650 => "601-650".to_string(),
            1001.. => "1001+".to_string(),
            r if r % 7 == 0 => format!("={r}"),
            r => r.to_string(),
        })
        .collect();
    if !labels.iter().any(|l| l == "601-650") {
        if let Some(l) = labels
            .iter_mut()
            .rev()
            .find(|l| l.parse::<u32>().is_ok_and(|r| r > 300))
        {
            *l = "601-650".to_string();
        }
    }
    labels.extend((0..n_unranked).map(|_| "unranked".to_string()));
    labels
}

fn build_catalog(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<University> {
    let n = cfg.n_universities;
    let n_foreign: usize = COUNTRIES.iter().map(|c| c.1).sum::<usize>().min(n / 3);
    let mut countries: Vec<&str> = Vec::with_capacity(n);
    'outer: for &(c, k) in &COUNTRIES {
        for _ in 0..k {
            if countries.len() == n_foreign {
                break 'outer;
            }
            countries.push(c);
        }
    }
    countries.resize(n, US);

    let mut labels = rank_labels(n, rng);
    for i in (1..labels.len()).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    let score_noise = Normal::new(0.0, 9.0).unwrap();
    let mut acronyms: BTreeMap<String, usize> = BTreeMap::new();
    let mut out: Vec<University> = Vec::with_capacity(n);
    for i in 0..n {
        let country = countries[i];
        let canonical = university_name(PLACES[i], country, i);
        let qs = QsRank::parse(&labels[i]).expect("generated rank label parses");
        let r = qs.rank().unwrap_or(1400) as f64;
        let mut score = |base: f64| -> f64 {
            let v: f64 = base - 11.0 * r.ln() + score_noise.sample(rng);
            (v.clamp(1.0, 100.0) * 10.0).round() / 10.0
        };
        let (fsr, cpf, isr) = (score(100.0), score(105.0), score(95.0));
        let status = if country == US {
            match i % 10 {
                0..=3 => UniversityStatus::Public,
                4..=8 => UniversityStatus::PrivateNfp,
                _ => UniversityStatus::PrivateFp,
            }
        } else if i % 11 == 0 {
            UniversityStatus::PrivateNfp
        } else {
            UniversityStatus::Public
        };
        let mut programs: Vec<usize> = (0..PROGRAMS.len())
            .filter(|&p| p == 0 || rng.gen_bool(0.7))
            .collect();
        while programs.len() < 8 {
            let p = rng.gen_range(0..PROGRAMS.len());
            if !programs.contains(&p) {
                programs.push(p);
            }
        }
        programs.sort_unstable();
        let popularity = 1.0 / (1.0 + r / 150.0) + 0.05;
        *acronyms.entry(acronym(&canonical)).or_insert(0) += 1;
        out.push(University {
            profile: UniversityProfile {
                canonical_name: canonical.clone(),
                country: country.to_string(),
                qs_rank: qs,
                fsr_score: fsr,
                cpf_score: cpf,
                isr_score: isr,
                status,
                aliases: BTreeSet::new(),
            },
            popularity,
            programs,
            spellings: vec![canonical],
        });
    }
    for u in &mut out {
        let a = acronym(&u.profile.canonical_name);
        if a.len() >= 2 && acronyms[&a] == 1 {
            u.profile.aliases.insert(a.clone());
            u.spellings.push(a);
        }
        let folded = deunicode::deunicode(&u.profile.canonical_name);
        if folded != u.profile.canonical_name {
            u.spellings.push(folded);
        } else {
            u.spellings.push(u.profile.canonical_name.to_uppercase());
        }
    }
    out
}

fn sample_gpa(dist: &LogNormal<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let g: f64 = 4.0 - dist.sample(rng);
    (g.clamp(1.1, 4.0) * 100.0).round() / 100.0
}

fn degree_spelling(is_phd: bool, rng: &mut ChaCha8Rng) -> &'static str {
    let phd = ["PhD", "PhD", "PhD", "Ph.D.", "phd"];
    let ms = ["Masters", "Masters", "MS", "MSc", "MEng", "MA", "Master's"];
    if is_phd {
        phd[rng.gen_range(0..phd.len())]
    } else {
        ms[rng.gen_range(0..ms.len())]
    }
}

struct Draft {
    record: RawApplicationRecord,
    systematic: f64,
    noise: f64,
}

pub fn generate(cfg: &GeneratorConfig) -> Result<GeneratedCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let catalog = build_catalog(cfg, &mut rng);
    let co = cfg.coefficients;
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let program_effect: Vec<f64> = (0..PROGRAMS.len())
        .map(|_| co.program_sd * std_normal.sample(&mut rng))
        .collect();
    // Offsets by (university, is_phd, is_international).
    let cell_effect: Vec<[f64; 4]> = (0..catalog.len())
        .map(|_| [0; 4].map(|_| co.cell_sd * std_normal.sample(&mut rng)))
        .collect();

    let cohort_effect: Vec<[[f64; 5]; 4]> = (0..catalog.len())
        .map(|_| [0; 4].map(|_| [0; 5].map(|_| co.cohort_sd * std_normal.sample(&mut rng))))
        .collect();
    let us_idx: Vec<usize> = (0..catalog.len())
        .filter(|&i| catalog[i].profile.country == US)
        .collect();
    let foreign_idx: Vec<usize> = (0..catalog.len())
        .filter(|&i| catalog[i].profile.country != US)
        .collect();
    let weights =
        |idx: &[usize]| WeightedIndex::new(idx.iter().map(|&i| catalog[i].popularity)).unwrap();
    let us_pick = weights(&us_idx);
    let foreign_pick = (!foreign_idx.is_empty()).then(|| weights(&foreign_idx));
    let gpa_dist = LogNormal::new((4.0 - cfg.gpa_median).ln(), cfg.gpa_sigma).unwrap();
    let years = [2021, 2022, 2023, 2024, 2025];
    let year_pick = WeightedIndex::new([0.17, 0.19, 0.21, 0.21, 0.22]).unwrap();

    let mut drafts: Vec<Draft> = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let ui = match &foreign_pick {
            Some(fp) if !rng.gen_bool(cfg.us_share) => foreign_idx[fp.sample(&mut rng)],
            _ => us_idx[us_pick.sample(&mut rng)],
        };
        let u = &catalog[ui];
        let prog_pick = WeightedIndex::new(u.programs.iter().map(|&p| PROGRAMS[p].2)).unwrap();
        let pi = u.programs[prog_pick.sample(&mut rng)];
        let is_phd = !rng.gen_bool(cfg.masters_share);
        let intl = rng.gen_bool(cfg.international_share);
        let year = years[year_pick.sample(&mut rng)];
        let gpa = sample_gpa(&gpa_dist, &mut rng);
        let gpa_missing = rng.gen_bool(cfg.missing_gpa_share);

        let rank = u.profile.qs_rank.rank().unwrap_or(1001) as f64;
        let rank_term = (rank.ln() - 100f64.ln()) / 10f64.ln();
        let gpa_term = (gpa - cfg.gpa_median) / 0.3;
        let phd = f64::from(u8::from(is_phd));
        let systematic = co.is_phd * phd
            + co.rank * rank_term
            + (co.gpa + co.gpa_phd_extra * phd) * gpa_term
            + co.interaction * gpa_term * rank_term
            + co.year * (year - 2023) as f64
            + co.international * f64::from(u8::from(intl))
            + program_effect[pi]
            + cell_effect[ui][usize::from(is_phd) * 2 + usize::from(intl)]
            + cohort_effect[ui][usize::from(is_phd) * 2 + usize::from(intl)]
                [(year - 2021) as usize];
        let noise = co.noise_sd * std_normal.sample(&mut rng);

        let spelling = &u.spellings[match rng.gen_range(0..10) {
            0..=7 => 0,
            8 => 1 % u.spellings.len(),
            _ => u.spellings.len() - 1,
        }];
        let program_name = match rng.gen_range(0..12) {
            0 => PROGRAM_VARIANTS
                .iter()
                .find(|v| v.1 == PROGRAMS[pi].0)
                .map_or(PROGRAMS[pi].0.to_string(), |v| v.0.to_string()),
            1 => PROGRAMS[pi].0.to_lowercase(),
            _ => PROGRAMS[pi].0.to_string(),
        };
        let record = RawApplicationRecord {
            program_name,
            university_name: spelling.clone(),
            decision: Decision::Rejected,
            decision_day: Some(rng.gen_range(1..=28)),
            decision_month: Some(rng.gen_range(1..=5)),
            decision_year: Some(year),
            season: Some(format!("Fall {year}")),
            gpa: (!gpa_missing).then_some(gpa),
            gre_verbal: rng.gen_bool(0.1).then(|| rng.gen_range(145..=170) as f64),
            gre_aw: None,
            gre_total: None,
            degree_type: degree_spelling(is_phd, &mut rng).to_string(),
            applicant_status: if intl {
                ApplicantStatus::International
            } else {
                ApplicantStatus::American
            },
            notes: None,
        };
        drafts.push(Draft {
            record,
            systematic,
            noise,
        });
    }

    let intercept = solve_intercept(&drafts, cfg.target_acceptance);
    let mut records = Vec::with_capacity(cfg.n + cfg.noise_rows);
    let mut truth = Vec::with_capacity(cfg.n);
    for (row, mut d) in drafts.into_iter().enumerate() {
        let systematic = d.systematic + intercept;
        let p = sigmoid(systematic + d.noise);
        let label = u8::from(rng.gen_bool(p));
        d.record.decision = if label == 1 {
            Decision::Accepted
        } else {
            Decision::Rejected
        };
        records.push(d.record);
        truth.push(GroundTruthRow {
            row,
            systematic_logit: systematic,
            true_prob: p,
            label,
        });
    }
    for k in 0..cfg.noise_rows {
        let mut r = records[k % cfg.n].clone();
        match k % 4 {
            0 => r.decision = [Decision::Waitlisted, Decision::Interview, Decision::Other][k % 3],
            1 => r.decision_year = Some(rng.gen_range(2014..=2020)),
            2 => r.degree_type = ["MFA", "MBA", "JD", "PsyD"][k % 4].to_string(),
            _ => {
                r.university_name =
                    format!("Unlisted College of {}", PLACES[PLACES.len() - 1 - k % 10])
            }
        }
        records.push(r);
    }

    let mut disciplines: Vec<(String, ProgramMapping)> = PROGRAMS
        .iter()
        .map(|&(p, d, _)| {
            (
                p.to_string(),
                ProgramMapping {
                    canonical_program: p.to_string(),
                    discipline: d.to_string(),
                },
            )
        })
        .collect();
    for &(variant, canonical) in &PROGRAM_VARIANTS {
        let d = PROGRAMS
            .iter()
            .find(|p| p.0 == canonical)
            .map(|p| p.1)
            .unwrap_or_default();
        disciplines.push((
            variant.to_string(),
            ProgramMapping {
                canonical_program: canonical.to_string(),
                discipline: d.to_string(),
            },
        ));
    }
    let mut universities: Vec<UniversityProfile> = catalog.into_iter().map(|u| u.profile).collect();
    universities.sort_by(|a, b| a.canonical_name.cmp(&b.canonical_name));
    Ok(GeneratedCorpus {
        records,
        universities,
        disciplines,
        truth,
        intercept,
    })
}

/// Intercept making the mean true probability equal `target`, by bisection.
fn solve_intercept(drafts: &[Draft], target: f64) -> f64 {
    let mean_p = |c: f64| {
        drafts
            .iter()
            .map(|d| sigmoid(d.systematic + d.noise + c))
            .sum::<f64>()
            / drafts.len() as f64
    };
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
