//! Raw application records: JSONL parsing, validation, outcome binarization,
//! year/degree filtering and GPA imputation.
//!
//! Parsing never aborts on a bad line. Each malformed line becomes a
//! [`ParseError`] carrying its 1-based line number, and unknown keys are
//! tolerated but counted.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::math;

pub const MIN_DECISION_YEAR: i32 = 2001;
pub const MAX_DECISION_YEAR: i32 = 2100;
pub const MAX_GPA: f64 = 4.33;
/// Median GPA of the reference corpus, used as the default imputation constant.
pub const DEFAULT_GPA_MEDIAN: f64 = 3.8;
pub const DEFAULT_MIN_YEAR: i32 = 2021;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected,
    Waitlisted,
    Interview,
    Other,
    None,
}

impl Decision {
    /// Lenient parse of the free-text decision labels found in scraped data.
    pub fn parse(raw: &str) -> Decision {
        let key: String = raw
            .trim()
            .to_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect();
        match key.as_str() {
            "accepted" | "accept" | "admitted" => Decision::Accepted,
            "rejected" | "reject" | "denied" => Decision::Rejected,
            "waitlisted" | "waitlist" => Decision::Waitlisted,
            "interview" | "interviewed" => Decision::Interview,
            "" | "none" | "null" => Decision::None,
            _ => Decision::Other,
        }
    }

    pub fn label(self) -> Option<u8> {
        match self {
            Decision::Accepted => Some(1),
            Decision::Rejected => Some(0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplicantStatus {
    International,
    American,
    Unknown,
}

impl ApplicantStatus {
    pub fn parse(raw: &str) -> ApplicantStatus {
        match raw.trim().to_lowercase().as_str() {
            "international" | "intl" | "i" => ApplicantStatus::International,
            "american" | "domestic" | "us" | "u.s." | "a" => ApplicantStatus::American,
            _ => ApplicantStatus::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeType {
    Masters,
    Phd,
}

impl DegreeType {
    /// Case-insensitive degree normalization; anything outside the two
    /// research-degree families is `None`.
    pub fn normalize(raw: &str) -> Option<DegreeType> {
        let key = raw.trim().to_lowercase();
        let key = key.trim_end_matches('.');
        match key {
            "phd" | "ph.d" | "doctorate" => Some(DegreeType::Phd),
            "masters" | "master's" | "ms" | "msc" | "ma" | "meng" => Some(DegreeType::Masters),
            _ => None,
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DegreeType::Masters => "Masters",
            DegreeType::Phd => "PhD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawApplicationRecord {
    pub program_name: String,
    pub university_name: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_day: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_month: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub season: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gre_verbal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gre_aw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gre_total: Option<f64>,
    pub degree_type: String,
    pub applicant_status: ApplicantStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// A record with a final outcome, a supported degree and a recent decision year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub program_name: String,
    pub university_name: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_day: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_month: Option<u8>,
    pub decision_year: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub season: Option<String>,
    /// Present on every record once [`impute_gpa`] has run.
    pub gpa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gre_verbal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gre_aw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gre_total: Option<f64>,
    pub degree_type: DegreeType,
    pub applicant_status: ApplicantStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub label: u8,
    pub gpa_imputed_flag: bool,
}

impl From<&CleanRecord> for RawApplicationRecord {
    fn from(r: &CleanRecord) -> Self {
        RawApplicationRecord {
            program_name: r.program_name.clone(),
            university_name: r.university_name.clone(),
            decision: r.decision,
            decision_day: r.decision_day,
            decision_month: r.decision_month,
            decision_year: Some(r.decision_year),
            season: r.season.clone(),
            gpa: r.gpa,
            gre_verbal: r.gre_verbal,
            gre_aw: r.gre_aw,
            gre_total: r.gre_total,
            degree_type: r.degree_type.display_name().to_string(),
            applicant_status: r.applicant_status,
            notes: r.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<RawApplicationRecord>,
    pub errors: Vec<ParseError>,
    /// Number of unrecognized keys seen across all lines.
    pub unknown_fields: usize,
}

const KNOWN_FIELDS: &[&str] = &[
    "program_name",
    "university_name",
    "decision",
    "decision_day",
    "decision_month",
    "decision_year",
    "season",
    "gpa",
    "gre_verbal",
    "gre_aw",
    "gre_total",
    "degree_type",
    "applicant_status",
    "notes",
];

/// Parse a JSONL stream into raw records. Blank lines are skipped.
pub fn parse_jsonl<R: BufRead>(mut input: R) -> ParseOutcome {
    let mut outcome = ParseOutcome::default();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        match input.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                outcome.errors.push(ParseError {
                    line: line_no + 1,
                    reason: format!("read error: {e}"),
                });
                break;
            }
        }
        line_no += 1;
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t.trim(),
            Err(_) => {
                outcome.errors.push(ParseError {
                    line: line_no,
                    reason: "invalid UTF-8".into(),
                });
                continue;
            }
        };
        if text.is_empty() {
            continue;
        }
        match parse_line(text) {
            Ok((record, unknown)) => {
                outcome.unknown_fields += unknown;
                outcome.records.push(record);
            }
            Err(reason) => outcome.errors.push(ParseError {
                line: line_no,
                reason,
            }),
        }
    }
    if outcome.unknown_fields > 0 {
        log::warn!(
            "ignored {} unknown field(s) while parsing",
            outcome.unknown_fields
        );
    }
    outcome
}

fn parse_line(text: &str) -> std::result::Result<(RawApplicationRecord, usize), String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or("line is not a JSON object")?;
    let unknown = obj
        .keys()
        .filter(|k| !KNOWN_FIELDS.contains(&k.as_str()))
        .count();

    let program_name = required_text(obj, "program_name")?;
    let university_name = required_text(obj, "university_name")?;
    let decision = optional_text(obj, "decision")?
        .map(|s| Decision::parse(&s))
        .unwrap_or(Decision::None);
    let decision_day = optional_int(obj, "decision_day")?
        .map(|d| check_range(d, 1, 31, "decision_day").map(|v| v as u8))
        .transpose()?;
    let decision_month = optional_int(obj, "decision_month")?
        .map(|m| check_range(m, 1, 12, "decision_month").map(|v| v as u8))
        .transpose()?;
    let decision_year = optional_int(obj, "decision_year")?
        .map(|y| {
            check_range(
                y,
                MIN_DECISION_YEAR as i64,
                MAX_DECISION_YEAR as i64,
                "decision_year",
            )
            .map(|v| v as i32)
        })
        .transpose()?;
    let gpa = optional_real(obj, "gpa")?;
    if let Some(g) = gpa {
        if !(0.0..=MAX_GPA).contains(&g) {
            return Err(format!("gpa {g} outside [0, {MAX_GPA}]"));
        }
    }
    let record = RawApplicationRecord {
        program_name,
        university_name,
        decision,
        decision_day,
        decision_month,
        decision_year,
        season: optional_text(obj, "season")?,
        gpa,
        gre_verbal: optional_real(obj, "gre_verbal")?,
        gre_aw: optional_real(obj, "gre_aw")?,
        gre_total: optional_real(obj, "gre_total")?,
        degree_type: optional_text(obj, "degree_type")?.unwrap_or_default(),
        applicant_status: optional_text(obj, "applicant_status")?
            .map(|s| ApplicantStatus::parse(&s))
            .unwrap_or(ApplicantStatus::Unknown),
        notes: optional_text(obj, "notes")?,
    };
    Ok((record, unknown))
}

fn check_range(v: i64, lo: i64, hi: i64, field: &str) -> std::result::Result<i64, String> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{field} {v} outside [{lo}, {hi}]"))
    }
}

fn required_text(obj: &Map<String, Value>, key: &str) -> std::result::Result<String, String> {
    match optional_text(obj, key)? {
        Some(s) if !s.trim().is_empty() => Ok(s),
        _ => Err(format!("missing required field {key}")),
    }
}

fn optional_text(
    obj: &Map<String, Value>,
    key: &str,
) -> std::result::Result<Option<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(format!("field {key} must be a string")),
    }
}

fn optional_real(obj: &Map<String, Value>, key: &str) -> std::result::Result<Option<f64>, String> {
    let v = match obj.get(key) {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) if s.trim().is_empty() => return Ok(None),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
        Some(_) => None,
    };
    match v {
        Some(x) if x.is_finite() && x >= 0.0 => Ok(Some(x)),
        Some(x) => Err(format!("field {key} has invalid value {x}")),
        None => Err(format!("field {key} must be a number")),
    }
}

fn optional_int(obj: &Map<String, Value>, key: &str) -> std::result::Result<Option<i64>, String> {
    match optional_real(obj, key)? {
        None => Ok(None),
        Some(x) if x.fract() == 0.0 => Ok(Some(x as i64)),
        Some(x) => Err(format!("field {key} must be an integer, got {x}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NonFinalDecision,
    YearTooOld,
    DegreeTypeOther,
    MissingDecisionYear,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub input: usize,
    pub kept: usize,
    pub non_final_decision: usize,
    pub year_too_old: usize,
    pub degree_type_other: usize,
    pub missing_decision_year: usize,
}

impl DropReport {
    pub fn total_dropped(&self) -> usize {
        self.non_final_decision
            + self.year_too_old
            + self.degree_type_other
            + self.missing_decision_year
    }

    fn count(&mut self, reason: DropReason) {
        match reason {
            DropReason::NonFinalDecision => self.non_final_decision += 1,
            DropReason::YearTooOld => self.year_too_old += 1,
            DropReason::DegreeTypeOther => self.degree_type_other += 1,
            DropReason::MissingDecisionYear => self.missing_decision_year += 1,
        }
    }
}

/// Decide whether a raw record survives filtering; the first failing check is the reason.
pub fn classify(
    record: &RawApplicationRecord,
    min_year: i32,
) -> std::result::Result<CleanRecord, DropReason> {
    let label = record
        .decision
        .label()
        .ok_or(DropReason::NonFinalDecision)?;
    let year = record
        .decision_year
        .ok_or(DropReason::MissingDecisionYear)?;
    if year < min_year {
        return Err(DropReason::YearTooOld);
    }
    let degree_type =
        DegreeType::normalize(&record.degree_type).ok_or(DropReason::DegreeTypeOther)?;
    Ok(CleanRecord {
        program_name: record.program_name.clone(),
        university_name: record.university_name.clone(),
        decision: record.decision,
        decision_day: record.decision_day,
        decision_month: record.decision_month,
        decision_year: year,
        season: record.season.clone(),
        gpa: record.gpa,
        gre_verbal: record.gre_verbal,
        gre_aw: record.gre_aw,
        gre_total: record.gre_total,
        degree_type,
        applicant_status: record.applicant_status,
        notes: record.notes.clone(),
        label,
        gpa_imputed_flag: false,
    })
}

pub fn filter_and_binarize(
    records: &[RawApplicationRecord],
    min_year: i32,
) -> Result<(Vec<CleanRecord>, DropReport)> {
    if min_year < MIN_DECISION_YEAR {
        return Err(Error::InvalidInput(format!(
            "min_year {min_year} below {MIN_DECISION_YEAR}"
        )));
    }
    let mut report = DropReport {
        input: records.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        match classify(r, min_year) {
            Ok(c) => kept.push(c),
            Err(reason) => report.count(reason),
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy", content = "value")]
pub enum ImputeStrategy {
    MedianConstant(f64),
    /// Median of the observed GPAs in the records passed in.
    TrainMedian,
}

impl Default for ImputeStrategy {
    fn default() -> Self {
        ImputeStrategy::MedianConstant(DEFAULT_GPA_MEDIAN)
    }
}

/// Fill missing GPAs; returns the imputed records and how many were filled.
pub fn impute_gpa(
    records: &[CleanRecord],
    strategy: ImputeStrategy,
) -> Result<(Vec<CleanRecord>, usize)> {
    let fill = match strategy {
        ImputeStrategy::MedianConstant(v) => {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "imputation constant {v} is not finite"
                )));
            }
            v
        }
        ImputeStrategy::TrainMedian => {
            let observed: Vec<f64> = records.iter().filter_map(|r| r.gpa).collect();
            math::median(&observed).ok_or(Error::NoObservedGpa)?
        }
    };
    let mut count = 0;
    let out = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.gpa.is_none() {
                r.gpa = Some(fill);
                r.gpa_imputed_flag = true;
                count += 1;
            }
            r
        })
        .collect();
    Ok((out, count))
}

/// Drop records lacking a GPA whose program has fewer than `min_program_count`
/// records overall; the rest are left for imputation. A threshold of 0 drops nothing.
pub fn drop_sparse_missing_gpa(
    records: &[CleanRecord],
    min_program_count: usize,
) -> (Vec<CleanRecord>, usize) {
    let mut per_program: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *per_program
            .entry(r.program_name.trim().to_lowercase())
            .or_default() += 1;
    }
    let before = records.len();
    let kept: Vec<CleanRecord> = records
        .iter()
        .filter(|r| {
            r.gpa.is_some()
                || per_program[&r.program_name.trim().to_lowercase()] >= min_program_count
        })
        .cloned()
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}
