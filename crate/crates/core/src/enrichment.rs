//! University and program enrichment from offline tables.
//!
//! University matching is exact-then-alias over normalized names; there is no
//! fuzzy distance. Program names map to a canonical program and a parent
//! discipline through a lookup table keyed by the normalized raw name.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::records::CleanRecord;

/// Lowercase, fold diacritics to ASCII, drop punctuation, collapse whitespace.
pub fn normalize_name(raw: &str) -> String {
    let spaced: String = raw
        .chars()
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .collect();
    let folded = deunicode::deunicode(&spaced).to_lowercase();
    let kept: String = folded
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A QS world rank. Banded ranks ("601-650") keep their lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QsRank {
    Ranked(u32),
    Unranked,
}

impl QsRank {
    pub fn parse(raw: &str) -> Result<QsRank> {
        let t = raw.trim().trim_start_matches('=').trim();
        if t.is_empty() || t.eq_ignore_ascii_case("unranked") || t.eq_ignore_ascii_case("n/a") {
            return Ok(QsRank::Unranked);
        }
        let lower = t
            .split(['-', '–'])
            .next()
            .unwrap_or("")
            .trim()
            .trim_end_matches('+');
        match lower.parse::<u32>() {
            Ok(r) if r > 0 => Ok(QsRank::Ranked(r)),
            _ => Err(Error::InvalidInput(format!("unparseable QS rank {raw:?}"))),
        }
    }

    pub fn rank(self) -> Option<u32> {
        match self {
            QsRank::Ranked(r) => Some(r),
            QsRank::Unranked => None,
        }
    }

    /// Sort key: ranked ascending, unranked last.
    pub fn sort_key(self) -> u32 {
        self.rank().unwrap_or(u32::MAX)
    }
}

impl fmt::Display for QsRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QsRank::Ranked(r) => write!(f, "{r}"),
            QsRank::Unranked => f.write_str("unranked"),
        }
    }
}

impl Serialize for QsRank {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QsRank::Ranked(r) => s.serialize_u32(*r),
            QsRank::Unranked => s.serialize_str("unranked"),
        }
    }
}

impl<'de> Deserialize<'de> for QsRank {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u32),
            Text(#[allow(dead_code)] String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(0) => Err(serde::de::Error::custom("QS rank must be positive")),
            Repr::Num(r) => Ok(QsRank::Ranked(r)),
            Repr::Text(t) => QsRank::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniversityStatus {
    Public,
    PrivateNfp,
    PrivateFp,
}

impl UniversityStatus {
    pub fn parse(raw: &str) -> Result<UniversityStatus> {
        let key: String = raw
            .to_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect();
        match key.as_str() {
            "public" => Ok(UniversityStatus::Public),
            "privatenfp" | "privatenotforprofit" | "private" => Ok(UniversityStatus::PrivateNfp),
            "privatefp" | "privateforprofit" => Ok(UniversityStatus::PrivateFp),
            _ => Err(Error::InvalidInput(format!(
                "unknown university status {raw:?}"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UniversityStatus::Public => "public",
            UniversityStatus::PrivateNfp => "private_nfp",
            UniversityStatus::PrivateFp => "private_fp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversityProfile {
    pub canonical_name: String,
    pub country: String,
    pub qs_rank: QsRank,
    pub fsr_score: f64,
    pub cpf_score: f64,
    pub isr_score: f64,
    pub status: UniversityStatus,
    pub aliases: BTreeSet<String>,
}

impl UniversityProfile {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fsr_score", self.fsr_score),
            ("cpf_score", self.cpf_score),
            ("isr_score", self.isr_score),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "{}: {name} {v} outside [0, 100]",
                    self.canonical_name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct UniversityRow {
    canonical_name: String,
    country: String,
    qs_rank: String,
    fsr_score: f64,
    cpf_score: f64,
    isr_score: f64,
    status: String,
    aliases: String,
}

/// Read `universities.csv`; profiles come back sorted by canonical name.
pub fn read_universities_csv<R: Read>(input: R) -> Result<Vec<UniversityProfile>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize::<UniversityRow>() {
        let row = row?;
        let profile = UniversityProfile {
            canonical_name: row.canonical_name.trim().to_string(),
            country: row.country.trim().to_string(),
            qs_rank: QsRank::parse(&row.qs_rank)?,
            fsr_score: row.fsr_score,
            cpf_score: row.cpf_score,
            isr_score: row.isr_score,
            status: UniversityStatus::parse(&row.status)?,
            aliases: row
                .aliases
                .split('|')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(String::from)
                .collect(),
        };
        profile.validate()?;
        out.push(profile);
    }
    out.sort_by(|a, b| a.canonical_name.cmp(&b.canonical_name));
    Ok(out)
}

pub fn write_universities_csv<W: Write>(profiles: &[UniversityProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in profiles {
        w.serialize(UniversityRow {
            canonical_name: p.canonical_name.clone(),
            country: p.country.clone(),
            qs_rank: p.qs_rank.to_string(),
            fsr_score: p.fsr_score,
            cpf_score: p.cpf_score,
            isr_score: p.isr_score,
            status: p.status.as_str().to_string(),
            aliases: p.aliases.iter().cloned().collect::<Vec<_>>().join("|"),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramMapping {
    pub canonical_program: String,
    pub discipline: String,
}

/// Normalized raw program name → canonical program and parent discipline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisciplineMap {
    entries: BTreeMap<String, ProgramMapping>,
}

pub const UNMAPPED_DISCIPLINE: &str = "Unmapped";

impl DisciplineMap {
    /// Add a mapping. Re-inserting a key with a different target is an error.
    pub fn insert(&mut self, raw_program: &str, mapping: ProgramMapping) -> Result<()> {
        if mapping.discipline.trim().is_empty() || mapping.canonical_program.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "empty mapping for program {raw_program:?}"
            )));
        }
        let key = normalize_name(raw_program);
        match self.entries.get(&key) {
            Some(existing) if *existing != mapping => Err(Error::InvalidInput(format!(
                "program {raw_program:?} mapped twice ({} / {})",
                existing.discipline, mapping.discipline
            ))),
            _ => {
                self.entries.insert(key, mapping);
                Ok(())
            }
        }
    }

    pub fn lookup(&self, raw_program: &str) -> Option<&ProgramMapping> {
        self.entries.get(&normalize_name(raw_program))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ProgramMapping)> {
        self.entries.iter()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct DisciplineRow {
    raw_program: String,
    canonical_program: String,
    discipline: String,
}

pub fn read_disciplines_csv<R: Read>(input: R) -> Result<DisciplineMap> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut map = DisciplineMap::default();
    for row in rdr.deserialize::<DisciplineRow>() {
        let row = row?;
        map.insert(
            &row.raw_program,
            ProgramMapping {
                canonical_program: row.canonical_program.trim().to_string(),
                discipline: row.discipline.trim().to_string(),
            },
        )?;
    }
    Ok(map)
}

/// Writes `(raw_program, mapping)` rows as given, preserving the caller's spelling.
pub fn write_disciplines_csv<W: Write>(rows: &[(String, ProgramMapping)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (raw, m) in rows {
        w.serialize(DisciplineRow {
            raw_program: raw.clone(),
            canonical_program: m.canonical_program.clone(),
            discipline: m.discipline.clone(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Exact,
    Alias,
    Unmatched,
}

/// Lookup structure over profiles sorted by canonical name. Alias collisions
/// resolve to the first profile in that order.
#[derive(Debug, Clone)]
pub struct UniversityIndex {
    profiles: Vec<UniversityProfile>,
    exact: HashMap<String, usize>,
    alias: HashMap<String, usize>,
}

impl UniversityIndex {
    pub fn new(profiles: &[UniversityProfile]) -> Self {
        let mut profiles = profiles.to_vec();
        profiles.sort_by(|a, b| a.canonical_name.cmp(&b.canonical_name));
        let mut exact = HashMap::new();
        let mut alias = HashMap::new();
        for (i, p) in profiles.iter().enumerate() {
            exact.entry(normalize_name(&p.canonical_name)).or_insert(i);
            for a in &p.aliases {
                alias.entry(normalize_name(a)).or_insert(i);
            }
        }
        UniversityIndex {
            profiles,
            exact,
            alias,
        }
    }

    pub fn profiles(&self) -> &[UniversityProfile] {
        &self.profiles
    }

    pub fn by_canonical(&self, canonical_name: &str) -> Option<&UniversityProfile> {
        self.exact
            .get(&normalize_name(canonical_name))
            .map(|&i| &self.profiles[i])
    }

    pub fn match_name(&self, name: &str) -> (Option<&UniversityProfile>, MatchMethod) {
        let key = normalize_name(name);
        if let Some(&i) = self.exact.get(&key) {
            return (Some(&self.profiles[i]), MatchMethod::Exact);
        }
        if let Some(&i) = self.alias.get(&key) {
            return (Some(&self.profiles[i]), MatchMethod::Alias);
        }
        (None, MatchMethod::Unmatched)
    }
}

/// One-shot matching against an unindexed profile list.
pub fn match_university(
    name: &str,
    profiles: &[UniversityProfile],
) -> (Option<UniversityProfile>, MatchMethod) {
    let index = UniversityIndex::new(profiles);
    let (p, m) = index.match_name(name);
    (p.cloned(), m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversityMetrics {
    pub canonical_name: String,
    pub country: String,
    pub qs_rank: QsRank,
    pub fsr_score: f64,
    pub cpf_score: f64,
    pub isr_score: f64,
    pub status: UniversityStatus,
}

impl From<&UniversityProfile> for UniversityMetrics {
    fn from(p: &UniversityProfile) -> Self {
        UniversityMetrics {
            canonical_name: p.canonical_name.clone(),
            country: p.country.clone(),
            qs_rank: p.qs_rank,
            fsr_score: p.fsr_score,
            cpf_score: p.cpf_score,
            isr_score: p.isr_score,
            status: p.status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    #[serde(flatten)]
    pub record: CleanRecord,
    /// `None` exactly when `match_method` is `unmatched`.
    pub university: Option<UniversityMetrics>,
    pub canonical_program: String,
    pub discipline: String,
    pub match_method: MatchMethod,
}

impl EnrichedRecord {
    pub fn is_matched(&self) -> bool {
        self.university.is_some()
    }
}

/// A percentage that is undefined on an empty denominator; serializes as `"n/a"` then.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate(pub Option<f64>);

impl Rate {
    pub fn of(num: usize, den: usize) -> Rate {
        if den == 0 {
            Rate(None)
        } else {
            Rate(Some(num as f64 / den as f64))
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(r) => write!(f, "{:.2}%", r * 100.0),
            None => f.write_str("n/a"),
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(r) => s.serialize_f64(r),
            None => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(#[allow(dead_code)] String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(Rate(Some(x))),
            Repr::Text(_) => Ok(Rate(None)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    pub records: usize,
    pub exact: usize,
    pub alias: usize,
    pub unmatched: usize,
    pub record_match_rate: Rate,
    pub distinct_names: usize,
    pub distinct_matched: usize,
    pub university_match_rate: Rate,
    pub unmapped_programs: usize,
    /// Normalized names with no match, for manual review.
    pub unmatched_names: Vec<String>,
}

pub fn enrich(
    records: &[CleanRecord],
    index: &UniversityIndex,
    disciplines: &DisciplineMap,
) -> (Vec<EnrichedRecord>, EnrichmentReport) {
    let mut out = Vec::with_capacity(records.len());
    let (mut exact, mut alias, mut unmatched, mut unmapped) = (0, 0, 0, 0);
    let mut names: BTreeMap<String, bool> = BTreeMap::new();
    for r in records {
        let (profile, method) = index.match_name(&r.university_name);
        match method {
            MatchMethod::Exact => exact += 1,
            MatchMethod::Alias => alias += 1,
            MatchMethod::Unmatched => unmatched += 1,
        }
        names.insert(normalize_name(&r.university_name), profile.is_some());
        let (canonical_program, discipline) = match disciplines.lookup(&r.program_name) {
            Some(m) => (m.canonical_program.clone(), m.discipline.clone()),
            None => {
                unmapped += 1;
                (
                    normalize_name(&r.program_name),
                    UNMAPPED_DISCIPLINE.to_string(),
                )
            }
        };
        out.push(EnrichedRecord {
            record: r.clone(),
            university: profile.map(UniversityMetrics::from),
            canonical_program,
            discipline,
            match_method: method,
        });
    }
    let distinct_matched = names.values().filter(|&&m| m).count();
    let report = EnrichmentReport {
        records: records.len(),
        exact,
        alias,
        unmatched,
        record_match_rate: Rate::of(exact + alias, records.len()),
        distinct_names: names.len(),
        distinct_matched,
        university_match_rate: Rate::of(distinct_matched, names.len()),
        unmapped_programs: unmapped,
        unmatched_names: names
            .iter()
            .filter(|(_, &m)| !m)
            .map(|(n, _)| n.clone())
            .collect(),
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{classify, ApplicantStatus, Decision, RawApplicationRecord};

    pub(crate) fn profile(name: &str, aliases: &[&str]) -> UniversityProfile {
        UniversityProfile {
            canonical_name: name.into(),
            country: "United States".into(),
            qs_rank: QsRank::Ranked(10),
            fsr_score: 50.0,
            cpf_score: 60.0,
            isr_score: 70.0,
            status: UniversityStatus::Public,
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn clean(university: &str) -> CleanRecord {
        classify(
            &RawApplicationRecord {
                program_name: "Physics".into(),
                university_name: university.into(),
                decision: Decision::Accepted,
                decision_day: None,
                decision_month: None,
                decision_year: Some(2023),
                season: None,
                gpa: Some(3.7),
                gre_verbal: None,
                gre_aw: None,
                gre_total: None,
                degree_type: "PhD".into(),
                applicant_status: ApplicantStatus::American,
                notes: None,
            },
            2021,
        )
        .unwrap()
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(
            normalize_name("  Massachusetts  Institute of Technology. "),
            "massachusetts institute of technology"
        );
        assert_eq!(normalize_name("École Polytechnique"), "ecole polytechnique");
        assert_eq!(
            normalize_name("King's College, London"),
            "kings college london"
        );
        assert_eq!(
            normalize_name("\tUniversität\nZürich "),
            "universitat zurich"
        );
    }

    #[test]
    fn alias_hit_and_miss() {
        let profiles = vec![profile("Massachusetts Institute of Technology", &["MIT"])];
        let (p, m) = match_university("MIT", &profiles);
        assert_eq!(m, MatchMethod::Alias);
        assert_eq!(
            p.unwrap().canonical_name,
            "Massachusetts Institute of Technology"
        );
        let (p, m) = match_university("zzq university of nowhere", &profiles);
        assert!(p.is_none());
        assert_eq!(m, MatchMethod::Unmatched);
    }

    #[test]
    fn exact_beats_alias_of_another_profile() {
        let profiles = vec![
            profile("Alpha University", &["beta college"]),
            profile("Beta College", &[]),
        ];
        let (p, m) = match_university("Beta College", &profiles);
        assert_eq!(m, MatchMethod::Exact);
        assert_eq!(p.unwrap().canonical_name, "Beta College");
    }

    #[test]
    fn alias_collision_resolves_to_first_sorted_profile() {
        let profiles = vec![
            profile("Zeta University", &["ZU"]),
            profile("Alpha Zu", &["ZU"]),
        ];
        let (p, _) = match_university("zu", &profiles);
        assert_eq!(p.unwrap().canonical_name, "Alpha Zu");
    }

    #[test]
    fn fifty_name_fixture() {
        let mut profiles = Vec::new();
        for i in 0..48 {
            let aliases: Vec<String> = if i < 3 {
                vec![format!("U{i}X")]
            } else {
                vec![]
            };
            let refs: Vec<&str> = aliases.iter().map(String::as_str).collect();
            profiles.push(profile(&format!("University Number {i}"), &refs));
        }
        let mut queries: Vec<String> = (0..45)
            .map(|i| format!("university number {}", i + 3))
            .collect();
        queries.extend((0..3).map(|i| format!("u{i}x")));
        queries.push("Nowhere Polytechnic".into());
        queries.push("Atlantis College".into());
        let index = UniversityIndex::new(&profiles);
        let mut counts = (0, 0, 0);
        for q in &queries {
            match index.match_name(q).1 {
                MatchMethod::Exact => counts.0 += 1,
                MatchMethod::Alias => counts.1 += 1,
                MatchMethod::Unmatched => counts.2 += 1,
            }
        }
        assert_eq!(counts, (45, 3, 2));
    }

    #[test]
    fn qs_rank_parsing() {
        assert_eq!(QsRank::parse("601-650").unwrap(), QsRank::Ranked(601));
        assert_eq!(QsRank::parse("=45").unwrap(), QsRank::Ranked(45));
        assert_eq!(QsRank::parse("1001+").unwrap(), QsRank::Ranked(1001));
        assert_eq!(QsRank::parse("unranked").unwrap(), QsRank::Unranked);
        assert!(QsRank::parse("abc").is_err());
    }

    #[test]
    fn empty_enrichment_reports_na() {
        let (out, rep) = enrich(&[], &UniversityIndex::new(&[]), &DisciplineMap::default());
        assert!(out.is_empty());
        assert_eq!(rep.record_match_rate.to_string(), "n/a");
        assert_eq!(serde_json::to_value(rep.record_match_rate).unwrap(), "n/a");
    }

    #[test]
    fn all_exact_is_full_match_rate() {
        let index = UniversityIndex::new(&[profile("Alpha University", &[])]);
        let recs = vec![clean("alpha university"), clean("ALPHA  University")];
        let (_, rep) = enrich(&recs, &index, &DisciplineMap::default());
        assert_eq!(rep.record_match_rate, Rate(Some(1.0)));
        assert_eq!(rep.unmapped_programs, 2);
    }

    #[test]
    fn seventy_university_fixture_reproduces_match_rate() {
        let profiles: Vec<UniversityProfile> = (0..69)
            .map(|i| profile(&format!("Inst {i}"), &[]))
            .collect();
        let index = UniversityIndex::new(&profiles);
        let mut recs: Vec<CleanRecord> = (0..69).map(|i| clean(&format!("Inst {i}"))).collect();
        recs.push(clean("Unlisted Academy"));
        let (out, rep) = enrich(&recs, &index, &DisciplineMap::default());
        assert_eq!(rep.distinct_names, 70);
        assert_eq!(rep.university_match_rate.to_string(), "98.57%");
        assert_eq!(rep.unmatched_names, vec!["unlisted academy".to_string()]);
        let unmatched = out
            .iter()
            .find(|r| r.match_method == MatchMethod::Unmatched)
            .unwrap();
        assert!(unmatched.university.is_none());
    }

    #[test]
    fn discipline_map_is_a_function() {
        let mut map = DisciplineMap::default();
        let m = ProgramMapping {
            canonical_program: "Computer Science".into(),
            discipline: "Engineering".into(),
        };
        map.insert("Computer Science", m.clone()).unwrap();
        map.insert("computer science.", m).unwrap();
        let clash = ProgramMapping {
            canonical_program: "Computer Science".into(),
            discipline: "Mathematics".into(),
        };
        assert!(map.insert("COMPUTER SCIENCE", clash).is_err());
        assert_eq!(
            map.lookup("Computer  Science").unwrap().discipline,
            "Engineering"
        );
    }

    #[test]
    fn csv_round_trip() {
        let profiles = vec![profile("Beta", &["b", "bb"]), profile("Alpha", &[])];
        let mut buf = Vec::new();
        write_universities_csv(&profiles, &mut buf).unwrap();
        let back = read_universities_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].canonical_name, "Alpha");
        assert_eq!(back[1].aliases.len(), 2);
    }

    #[test]
    fn out_of_range_scores_are_rejected() {
        let csv = "canonical_name,country,qs_rank,fsr_score,cpf_score,isr_score,status,aliases\nA,US,5,101,1,1,public,\n";
        assert!(read_universities_csv(csv.as_bytes()).is_err());
    }
}
