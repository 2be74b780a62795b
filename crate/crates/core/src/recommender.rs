//! Alternative universities and programs for rejected applicants.
//!
//! Every candidate is scored as a counterfactual application: the applicant's
//! own fields stay fixed and the target columns are swapped for the candidate.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enrichment::{EnrichedRecord, QsRank, Rate, UniversityMetrics, UniversityStatus};
use crate::error::{Error, Result};
use crate::features::FeatureInput;
use crate::math::median;
use crate::records::{ApplicantStatus, DegreeType, MAX_GPA};

/// Entries per university-based strategy.
pub const TOP_N: usize = 5;
/// Universities with fewer accepted training rows use the global requirement.
pub const MIN_ACCEPTED_FOR_REQUIREMENT: usize = 5;
const GPA_TOLERANCE: f64 = 1e-9;

/// Largest admissible gap between applicant GPA and a university's requirement.
pub fn gpa_delta_max(qs_rank: QsRank) -> f64 {
    match qs_rank.rank() {
        Some(r) if r <= 50 => 0.10,
        Some(r) if r <= 150 => 0.15,
        Some(r) if r <= 300 => 0.20,
        _ => 0.25,
    }
}

/// `1 - |gpa_a - gpa_u| / delta_max`, clipped to [0, 1].
pub fn gpa_proximity(applicant_gpa: f64, requirement: f64, delta_max: f64) -> f64 {
    (1.0 - (applicant_gpa - requirement).abs() / delta_max).clamp(0.0, 1.0)
}

pub fn affordability_ok(original: UniversityStatus, candidate: UniversityStatus) -> bool {
    use UniversityStatus::*;
    match original {
        Public | PrivateNfp => matches!(candidate, Public | PrivateNfp),
        PrivateFp => true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolUniversity {
    pub metrics: UniversityMetrics,
    pub gpa_requirement: f64,
    pub accepted_train_rows: usize,
    /// Canonical program name to discipline.
    pub programs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub universities: BTreeMap<String, PoolUniversity>,
    pub global_gpa_requirement: f64,
}

impl CandidatePool {
    /// Pairs come from `corpus`; GPA requirements from accepted rows of `train`.
    pub fn build(corpus: &[EnrichedRecord], train: &[EnrichedRecord]) -> Result<CandidatePool> {
        let accepted: Vec<(&str, f64)> = train
            .iter()
            .filter(|r| r.record.label == 1)
            .filter_map(|r| {
                Some((
                    r.university.as_ref()?.canonical_name.as_str(),
                    r.record.gpa?,
                ))
            })
            .collect();
        let global = median(&accepted.iter().map(|a| a.1).collect::<Vec<_>>())
            .ok_or(Error::Empty("accepted training rows with GPA"))?;
        let mut by_uni: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (u, g) in &accepted {
            by_uni.entry(u).or_default().push(*g);
        }
        let mut universities: BTreeMap<String, PoolUniversity> = BTreeMap::new();
        for r in corpus {
            let Some(m) = &r.university else { continue };
            let entry = universities
                .entry(m.canonical_name.clone())
                .or_insert_with(|| {
                    let gpas = by_uni.get(m.canonical_name.as_str());
                    let n = gpas.map_or(0, Vec::len);
                    let requirement = match gpas {
                        Some(g) if n >= MIN_ACCEPTED_FOR_REQUIREMENT => median(g).unwrap_or(global),
                        _ => global,
                    };
                    PoolUniversity {
                        metrics: m.clone(),
                        gpa_requirement: requirement,
                        accepted_train_rows: n,
                        programs: BTreeMap::new(),
                    }
                });
            entry
                .programs
                .entry(r.canonical_program.clone())
                .or_insert_with(|| r.discipline.clone());
        }
        if universities.is_empty() {
            return Err(Error::Empty("candidate pool"));
        }
        Ok(CandidatePool {
            universities,
            global_gpa_requirement: global,
        })
    }

    pub fn university(&self, name: &str) -> Result<&PoolUniversity> {
        self.universities.get(name).ok_or_else(|| {
            Error::InvalidInput(format!("university {name:?} is not in the candidate pool"))
        })
    }

    pub fn discipline(&self, university: &str, program: &str) -> Result<&str> {
        self.university(university)?
            .programs
            .get(program)
            .map(String::as_str)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{university:?} does not offer {program:?} in the candidate pool"
                ))
            })
    }

    pub fn feature_input(
        &self,
        applicant: &ApplicantProfile,
        university: &str,
        program: &str,
    ) -> Result<FeatureInput> {
        let u = self.university(university)?;
        let discipline = self.discipline(university, program)?;
        let m = &u.metrics;
        Ok(FeatureInput {
            gpa: applicant.gpa,
            decision_year: applicant.decision_year,
            fsr_score: m.fsr_score,
            cpf_score: m.cpf_score,
            isr_score: m.isr_score,
            qs_rank: m.qs_rank,
            program: program.to_string(),
            discipline: discipline.to_string(),
            university: m.canonical_name.clone(),
            country: m.country.clone(),
            degree_type: applicant.degree_type,
            applicant_status: applicant.applicant_status,
            university_status: m.status,
        })
    }

    /// Universities offering `program`, as `(name, university)`.
    pub fn offering(&self, program: &str) -> impl Iterator<Item = (&String, &PoolUniversity)> + '_ {
        let program = program.to_string();
        self.universities
            .iter()
            .filter(move |(_, u)| u.programs.contains_key(&program))
    }
}

/// Probability of acceptance for a counterfactual application.
pub trait Scorer: Sync {
    fn score(&self, input: &FeatureInput) -> Result<f64>;
}

impl<F: Fn(&FeatureInput) -> f64 + Sync> Scorer for F {
    fn score(&self, input: &FeatureInput) -> Result<f64> {
        Ok(self(input))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicantProfile {
    pub gpa: f64,
    pub decision_year: i32,
    pub degree_type: DegreeType,
    pub applicant_status: ApplicantStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preferences {
    #[serde(default = "yes")]
    pub respect_country: bool,
    #[serde(default = "yes")]
    pub respect_affordability: bool,
}

fn yes() -> bool {
    true
}

impl Default for Preferences {
    fn default() -> Self {
        Preferences {
            respect_country: true,
            respect_affordability: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicantQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub applicant: ApplicantProfile,
    pub university: String,
    pub program: String,
    #[serde(default)]
    pub preferences: Preferences,
    /// Probability of the original application; scored when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
}

impl ApplicantQuery {
    pub fn validate(&self) -> Result<()> {
        let g = self.applicant.gpa;
        if !g.is_finite() || !(0.0..=MAX_GPA).contains(&g) {
            return Err(Error::InvalidInput(format!(
                "applicant.gpa {g} outside [0, {MAX_GPA}]"
            )));
        }
        if let Some(p) = self.p0 {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("p0 {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    UniversityOnly,
    ProgramOnly,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::UniversityOnly,
        Strategy::ProgramOnly,
        Strategy::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::UniversityOnly => "university_only",
            Strategy::ProgramOnly => "program_only",
            Strategy::Hybrid => "hybrid",
        }
    }

    pub fn parse(raw: &str) -> Result<Strategy> {
        match raw.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "university_only" | "university" => Ok(Strategy::UniversityOnly),
            "program_only" | "program" => Ok(Strategy::ProgramOnly),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryAudit {
    pub gpa_difference: f64,
    pub gpa_delta_max: f64,
    /// `None` when the strategy does not apply the filter.
    pub gpa_ok: Option<bool>,
    pub affordability_ok: Option<bool>,
    pub same_country: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEntry {
    pub university: String,
    pub program: String,
    pub discipline: String,
    pub country: String,
    pub qs_rank: QsRank,
    pub status: UniversityStatus,
    pub predicted_probability: f64,
    pub delta: f64,
    pub gpa_proximity: f64,
    pub gpa_requirement: f64,
    pub filter_audit: EntryAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterCounts {
    pub considered: usize,
    pub eliminated_gpa: usize,
    pub eliminated_affordability: usize,
    pub not_improving: usize,
    pub truncated: usize,
    pub program_swaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub strategy: Strategy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    pub original_university: String,
    pub original_program: String,
    pub p0: f64,
    pub entries: Vec<RecommendationEntry>,
    pub audit: FilterCounts,
}

impl RecommendationResult {
    pub fn best_probability(&self) -> Option<f64> {
        self.entries
            .iter()
            .map(|e| e.predicted_probability)
            .max_by(f64::total_cmp)
    }

    pub fn best_delta(&self) -> Option<f64> {
        self.best_probability().map(|p| p - self.p0)
    }
}

fn rank_cmp(a: &RecommendationEntry, b: &RecommendationEntry, respect_country: bool) -> Ordering {
    let country = if respect_country {
        b.filter_audit
            .same_country
            .cmp(&a.filter_audit.same_country)
    } else {
        Ordering::Equal
    };
    b.predicted_probability
        .total_cmp(&a.predicted_probability)
        .then(b.gpa_proximity.total_cmp(&a.gpa_proximity))
        .then(country)
        .then(a.qs_rank.sort_key().cmp(&b.qs_rank.sort_key()))
        .then(a.university.cmp(&b.university))
        .then(a.program.cmp(&b.program))
}

struct Context<'a> {
    query: &'a ApplicantQuery,
    original: &'a PoolUniversity,
    discipline: &'a str,
    p0: f64,
}

fn context<'a>(
    query: &'a ApplicantQuery,
    pool: &'a CandidatePool,
    scorer: &dyn Scorer,
) -> Result<Context<'a>> {
    query.validate()?;
    let original = pool.university(&query.university)?;
    let discipline = pool.discipline(&query.university, &query.program)?;
    let p0 = match query.p0 {
        Some(p) => p,
        None => scorer.score(&pool.feature_input(
            &query.applicant,
            &query.university,
            &query.program,
        )?)?,
    };
    Ok(Context {
        query,
        original,
        discipline,
        p0,
    })
}

fn entry(
    ctx: &Context,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
    university: &str,
    program: &str,
    gpa_ok: Option<bool>,
    affordability: Option<bool>,
) -> Result<RecommendationEntry> {
    let u = pool.university(university)?;
    let prob = scorer.score(&pool.feature_input(&ctx.query.applicant, university, program)?)?;
    let delta_max = gpa_delta_max(u.metrics.qs_rank);
    let diff = (ctx.query.applicant.gpa - u.gpa_requirement).abs();
    Ok(RecommendationEntry {
        university: university.to_string(),
        program: program.to_string(),
        discipline: pool.discipline(university, program)?.to_string(),
        country: u.metrics.country.clone(),
        qs_rank: u.metrics.qs_rank,
        status: u.metrics.status,
        predicted_probability: prob,
        delta: prob - ctx.p0,
        gpa_proximity: gpa_proximity(ctx.query.applicant.gpa, u.gpa_requirement, delta_max),
        gpa_requirement: u.gpa_requirement,
        filter_audit: EntryAudit {
            gpa_difference: diff,
            gpa_delta_max: delta_max,
            gpa_ok,
            affordability_ok: affordability,
            same_country: u.metrics.country == ctx.original.metrics.country,
        },
    })
}

fn result(
    ctx: &Context,
    strategy: Strategy,
    entries: Vec<RecommendationEntry>,
    audit: FilterCounts,
) -> RecommendationResult {
    RecommendationResult {
        strategy,
        query_id: ctx.query.id.clone(),
        original_university: ctx.query.university.clone(),
        original_program: ctx.query.program.clone(),
        p0: ctx.p0,
        entries,
        audit,
    }
}

fn university_only(
    ctx: &Context,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
) -> Result<(Vec<RecommendationEntry>, FilterCounts)> {
    let q = ctx.query;
    let mut audit = FilterCounts::default();
    let mut kept = Vec::new();
    for (name, u) in pool.offering(&q.program) {
        if *name == q.university {
            continue;
        }
        audit.considered += 1;
        let delta_max = gpa_delta_max(u.metrics.qs_rank);
        if (q.applicant.gpa - u.gpa_requirement).abs() > delta_max + GPA_TOLERANCE {
            audit.eliminated_gpa += 1;
            continue;
        }
        let afford = affordability_ok(ctx.original.metrics.status, u.metrics.status);
        if q.preferences.respect_affordability && !afford {
            audit.eliminated_affordability += 1;
            continue;
        }
        let e = entry(
            ctx,
            pool,
            scorer,
            name,
            &q.program,
            Some(true),
            Some(afford),
        )?;
        if e.predicted_probability > ctx.p0 {
            kept.push(e);
        } else {
            audit.not_improving += 1;
        }
    }
    kept.sort_by(|a, b| rank_cmp(a, b, q.preferences.respect_country));
    audit.truncated = kept.len().saturating_sub(TOP_N);
    kept.truncate(TOP_N);
    Ok((kept, audit))
}

/// Same-discipline programs at `university` other than `exclude`, best first.
fn program_swaps(
    ctx: &Context,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
    university: &str,
    exclude: &str,
) -> Result<Vec<RecommendationEntry>> {
    let u = pool.university(university)?;
    let mut out = Vec::new();
    for (program, discipline) in &u.programs {
        if program == exclude || discipline != ctx.discipline {
            continue;
        }
        out.push(entry(ctx, pool, scorer, university, program, None, None)?);
    }
    out.sort_by(|a, b| rank_cmp(a, b, ctx.query.preferences.respect_country));
    Ok(out)
}

pub fn recommend_university(
    query: &ApplicantQuery,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
) -> Result<RecommendationResult> {
    let ctx = context(query, pool, scorer)?;
    let (entries, audit) = university_only(&ctx, pool, scorer)?;
    Ok(result(&ctx, Strategy::UniversityOnly, entries, audit))
}

pub fn recommend_program(
    query: &ApplicantQuery,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
) -> Result<RecommendationResult> {
    let ctx = context(query, pool, scorer)?;
    let candidates = program_swaps(&ctx, pool, scorer, &query.university, &query.program)?;
    let mut audit = FilterCounts {
        considered: candidates.len(),
        ..Default::default()
    };
    let entries: Vec<_> = candidates
        .into_iter()
        .filter(|e| e.predicted_probability > ctx.p0)
        .collect();
    audit.not_improving = audit.considered - entries.len();
    Ok(result(&ctx, Strategy::ProgramOnly, entries, audit))
}

pub fn recommend_hybrid(
    query: &ApplicantQuery,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
) -> Result<RecommendationResult> {
    let ctx = context(query, pool, scorer)?;
    let (base, mut audit) = university_only(&ctx, pool, scorer)?;
    let mut entries = Vec::with_capacity(base.len());
    for e in base {
        let best = program_swaps(&ctx, pool, scorer, &e.university, &e.program)?
            .into_iter()
            .next();
        match best {
            Some(mut swap) if swap.predicted_probability > e.predicted_probability => {
                swap.filter_audit = e.filter_audit;
                audit.program_swaps += 1;
                entries.push(swap);
            }
            _ => entries.push(e),
        }
    }
    entries.sort_by(|a, b| rank_cmp(a, b, query.preferences.respect_country));
    Ok(result(&ctx, Strategy::Hybrid, entries, audit))
}

pub fn recommend(
    query: &ApplicantQuery,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
    strategy: Strategy,
) -> Result<RecommendationResult> {
    match strategy {
        Strategy::UniversityOnly => recommend_university(query, pool, scorer),
        Strategy::ProgramOnly => recommend_program(query, pool, scorer),
        Strategy::Hybrid => recommend_hybrid(query, pool, scorer),
    }
}

/// One result per query, in query order.
pub fn recommend_batch(
    queries: &[ApplicantQuery],
    pool: &CandidatePool,
    scorer: &dyn Scorer,
    strategy: Strategy,
) -> Result<Vec<RecommendationResult>> {
    queries
        .par_iter()
        .map(|q| recommend(q, pool, scorer, strategy))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub applicants: usize,
    pub matched: usize,
    pub match_rate: Rate,
    /// Best delta per applicant, unmatched applicants counting as 0.
    pub mean_improvement_overall: Rate,
    pub mean_improvement_matched: Rate,
    pub pct_with_improvement: Rate,
    pub pct_with_improvement_matched: Rate,
}

impl StrategyStats {
    pub fn from_results(results: &[RecommendationResult]) -> StrategyStats {
        let n = results.len();
        let deltas: Vec<f64> = results
            .iter()
            .filter_map(RecommendationResult::best_delta)
            .collect();
        let matched = deltas.len();
        let improved = deltas.iter().filter(|&&d| d > 0.0).count();
        let sum: f64 = deltas.iter().sum();
        let mean = |den: usize| {
            Rate(if den == 0 {
                None
            } else {
                Some(sum / den as f64)
            })
        };
        StrategyStats {
            applicants: n,
            matched,
            match_rate: Rate::of(matched, n),
            mean_improvement_overall: mean(n),
            mean_improvement_matched: mean(matched),
            pct_with_improvement: Rate::of(improved, n),
            pct_with_improvement_matched: Rate::of(improved, matched),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub rejected_applicants: usize,
    pub strategies: BTreeMap<Strategy, StrategyStats>,
}

pub fn aggregate_stats(results: &BTreeMap<Strategy, Vec<RecommendationResult>>) -> AggregateStats {
    let rejected_applicants = results.values().map(Vec::len).max().unwrap_or(0);
    let strategies = results
        .iter()
        .map(|(s, r)| (*s, StrategyStats::from_results(r)))
        .collect();
    AggregateStats {
        rejected_applicants,
        strategies,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_max_bands() {
        let r = |n| gpa_delta_max(QsRank::Ranked(n));
        assert_eq!(r(1), 0.10);
        assert_eq!(r(50), 0.10);
        assert_eq!(r(51), 0.15);
        assert_eq!(r(150), 0.15);
        assert_eq!(r(151), 0.20);
        assert_eq!(r(300), 0.20);
        assert_eq!(r(301), 0.25);
        assert_eq!(gpa_delta_max(QsRank::Unranked), 0.25);
    }

    #[test]
    fn proximity_formula_and_clipping() {
        assert_eq!(gpa_proximity(3.8, 3.8, 0.10), 1.0);
        assert_eq!(gpa_proximity(3.5, 3.75, 0.25), 0.0);
        assert!((gpa_proximity(3.8, 3.75, 0.10) - 0.5).abs() < 1e-12);
        assert_eq!(gpa_proximity(2.0, 3.9, 0.10), 0.0);
    }

    #[test]
    fn affordability_matrix() {
        use UniversityStatus::*;
        assert!(!affordability_ok(Public, PrivateFp));
        assert!(affordability_ok(PrivateFp, Public));
        assert!(affordability_ok(Public, PrivateNfp));
        assert!(!affordability_ok(PrivateNfp, PrivateFp));
        for s in [Public, PrivateNfp, PrivateFp] {
            assert!(affordability_ok(s, s));
        }
    }

    #[test]
    fn empty_stats_are_not_available() {
        let s = StrategyStats::from_results(&[]);
        assert_eq!(s.match_rate, Rate(None));
        assert_eq!(
            serde_json::to_value(&s).unwrap()["mean_improvement_matched"],
            "n/a"
        );
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::parse(s.as_str()).unwrap(), s);
        }
        assert!(Strategy::parse("random").is_err());
    }
}
