//! Design-matrix construction: the fixed 15-column predictor schema, its
//! train-only fitted statistics, and the stratified train/validation/test split.
//!
//! Every statistic (scaler moments, frequency tables, program admission rates)
//! is fitted on training rows only and then applied unchanged everywhere.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::enrichment::{EnrichedRecord, QsRank, UniversityStatus};
use crate::error::{Error, Result};
use crate::records::{ApplicantStatus, DegreeType};

pub const SCHEMA_VERSION: u32 = 1;
/// Number rank assigned to unranked universities before standardization.
pub const UNRANKED_QS_VALUE: f64 = 1001.0;

pub const COL_GPA: usize = 0;
pub const COL_YEAR: usize = 1;
pub const COL_FSR: usize = 2;
pub const COL_CPF: usize = 3;
pub const COL_ISR: usize = 4;
pub const COL_QS_RANK: usize = 5;
pub const COL_PROGRAM: usize = 6;
pub const COL_DISCIPLINE: usize = 7;
pub const COL_UNIVERSITY: usize = 8;
pub const COL_COUNTRY: usize = 9;
pub const COL_DEGREE: usize = 10;
pub const COL_APPLICANT_STATUS: usize = 11;
pub const COL_UNIVERSITY_STATUS: usize = 12;
pub const COL_ADMISSION_RATE: usize = 13;
pub const COL_INTERACTION: usize = 14;
pub const N_FEATURES: usize = 15;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "Applicant_GPA",
    "Decision_Year",
    "Target_University_FSR_Score",
    "Target_University_CPF_Score",
    "Target_University_ISR_Score",
    "Target_University_QS_Rank",
    "Target_Program",
    "Target_Program_Discipline",
    "Target_University",
    "Target_Country",
    "Target_Degree_Type",
    "Applicant_Status",
    "Target_University_Status",
    "Program_Admission_Rate",
    "Program_x_QS_Rank",
];

pub fn degree_code(d: DegreeType) -> f64 {
    match d {
        DegreeType::Masters => 1.0,
        DegreeType::Phd => 2.0,
    }
}

/// `unknown` sits halfway between the two observed codes.
pub fn applicant_status_code(s: ApplicantStatus) -> f64 {
    match s {
        ApplicantStatus::American => 0.0,
        ApplicantStatus::International => 1.0,
        ApplicantStatus::Unknown => 0.5,
    }
}

pub fn university_status_code(s: UniversityStatus) -> f64 {
    match s {
        UniversityStatus::Public => 0.0,
        UniversityStatus::PrivateNfp => 1.0,
        UniversityStatus::PrivateFp => 2.0,
    }
}

pub fn qs_numeric(rank: QsRank) -> f64 {
    rank.rank().map(f64::from).unwrap_or(UNRANKED_QS_VALUE)
}

/// The per-row inputs the schema needs, independent of where they came from
/// (an enriched record, or a counterfactual application built by the recommender).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInput {
    /// NaN when missing; assembly rejects it.
    pub gpa: f64,
    pub decision_year: i32,
    pub fsr_score: f64,
    pub cpf_score: f64,
    pub isr_score: f64,
    pub qs_rank: QsRank,
    pub program: String,
    pub discipline: String,
    pub university: String,
    pub country: String,
    pub degree_type: DegreeType,
    pub applicant_status: ApplicantStatus,
    pub university_status: UniversityStatus,
}

impl FeatureInput {
    pub fn from_enriched(r: &EnrichedRecord) -> Result<FeatureInput> {
        let u = r.university.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!(
                "record for {:?} has no matched university",
                r.record.university_name
            ))
        })?;
        Ok(FeatureInput {
            gpa: r.record.gpa.unwrap_or(f64::NAN),
            decision_year: r.record.decision_year,
            fsr_score: u.fsr_score,
            cpf_score: u.cpf_score,
            isr_score: u.isr_score,
            qs_rank: u.qs_rank,
            program: r.canonical_program.clone(),
            discipline: r.discipline.clone(),
            university: u.canonical_name.clone(),
            country: u.country.clone(),
            degree_type: r.record.degree_type,
            applicant_status: r.record.applicant_status,
            university_status: u.status,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEncoder {
    pub table: BTreeMap<String, f64>,
}

impl FrequencyEncoder {
    pub fn fit<S: AsRef<str>>(values: &[S]) -> Result<FrequencyEncoder> {
        if values.is_empty() {
            return Err(Error::Empty("frequency encoder input"));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for v in values {
            *counts.entry(v.as_ref().to_string()).or_default() += 1;
        }
        let total = values.len() as f64;
        Ok(FrequencyEncoder {
            table: counts
                .into_iter()
                .map(|(k, c)| (k, c as f64 / total))
                .collect(),
        })
    }

    /// Unseen categories encode to 0.
    pub fn apply(&self, value: &str) -> f64 {
        self.table.get(value).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
    /// Set when the fit column was constant; `std` is then 1.
    pub degenerate: bool,
}

impl Scaler {
    /// Population (denominator n) mean and standard deviation.
    pub fn fit(column: &[f64]) -> Result<Scaler> {
        if column.is_empty() {
            return Err(Error::Empty("scaler input"));
        }
        let n = column.len() as f64;
        let mean = column.iter().sum::<f64>() / n;
        let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= f64::EPSILON * mean.abs().max(1.0) {
            log::warn!("degenerate constant column (value {mean}); standardized values will be 0");
            return Ok(Scaler {
                mean,
                std: 1.0,
                degenerate: true,
            });
        }
        Ok(Scaler {
            mean,
            std,
            degenerate: false,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRates {
    pub rates: BTreeMap<String, f64>,
    /// Training acceptance rate, used for programs absent from training.
    pub global_rate: f64,
}

impl AdmissionRates {
    pub fn apply(&self, program: &str) -> f64 {
        self.rates.get(program).copied().unwrap_or(self.global_rate)
    }
}

/// Accepted/total per program over the given (training) rows.
pub fn compute_program_admission_rate<S: AsRef<str>>(
    programs: &[S],
    labels: &[u8],
) -> Result<AdmissionRates> {
    if programs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: programs.len(),
            right: labels.len(),
        });
    }
    if programs.is_empty() {
        return Err(Error::Empty("admission-rate input"));
    }
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (p, &y) in programs.iter().zip(labels) {
        let e = acc.entry(p.as_ref().to_string()).or_default();
        e.0 += y as usize;
        e.1 += 1;
    }
    let positives: usize = labels.iter().map(|&y| y as usize).sum();
    Ok(AdmissionRates {
        rates: acc
            .into_iter()
            .map(|(k, (a, t))| (k, a as f64 / t as f64))
            .collect(),
        global_rate: positives as f64 / labels.len() as f64,
    })
}

/// Program frequency × standardized QS rank.
pub fn build_interaction(program_freq: f64, qs_rank_standardized: f64) -> f64 {
    program_freq * qs_rank_standardized
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    NumericStandardized,
    FrequencyEncoded,
    Binary,
    Rate,
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ColumnStats {
    Standardized(Scaler),
    Frequency(FrequencyEncoder),
    /// Fixed integer coding; nothing fitted.
    Coded {
        codes: BTreeMap<String, f64>,
    },
    AdmissionRate(AdmissionRates),
    Product {
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub stats: ColumnStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub columns: Vec<ColumnSpec>,
}

fn codes(pairs: &[(&str, f64)]) -> ColumnStats {
    ColumnStats::Coded {
        codes: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

impl FeatureSchema {
    /// Fit all column statistics on training rows.
    pub fn fit(train: &[FeatureInput], labels: &[u8]) -> Result<FeatureSchema> {
        if train.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: train.len(),
                right: labels.len(),
            });
        }
        if train.is_empty() {
            return Err(Error::Empty("schema fit rows"));
        }
        let numeric = |f: fn(&FeatureInput) -> f64| -> Result<ColumnStats> {
            let col: Vec<f64> = train.iter().map(f).collect();
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: i,
                    column: "fit input".into(),
                });
            }
            Ok(ColumnStats::Standardized(Scaler::fit(&col)?))
        };
        let freq = |f: fn(&FeatureInput) -> &str| -> Result<ColumnStats> {
            let col: Vec<&str> = train.iter().map(f).collect();
            Ok(ColumnStats::Frequency(FrequencyEncoder::fit(&col)?))
        };
        let programs: Vec<&str> = train.iter().map(|r| r.program.as_str()).collect();
        let stats = vec![
            numeric(|r| r.gpa)?,
            numeric(|r| r.decision_year as f64)?,
            numeric(|r| r.fsr_score)?,
            numeric(|r| r.cpf_score)?,
            numeric(|r| r.isr_score)?,
            numeric(|r| qs_numeric(r.qs_rank))?,
            freq(|r| &r.program)?,
            freq(|r| &r.discipline)?,
            freq(|r| &r.university)?,
            freq(|r| &r.country)?,
            codes(&[("masters", 1.0), ("phd", 2.0)]),
            codes(&[("american", 0.0), ("international", 1.0), ("unknown", 0.5)]),
            codes(&[("public", 0.0), ("private_nfp", 1.0), ("private_fp", 2.0)]),
            ColumnStats::AdmissionRate(compute_program_admission_rate(&programs, labels)?),
            ColumnStats::Product {
                left: COL_PROGRAM,
                right: COL_QS_RANK,
            },
        ];
        let columns = stats
            .into_iter()
            .enumerate()
            .map(|(i, stats)| {
                let kind = match (&stats, i) {
                    (ColumnStats::Standardized(_), _) => ColumnKind::NumericStandardized,
                    (ColumnStats::Frequency(_), _) => ColumnKind::FrequencyEncoded,
                    (ColumnStats::Coded { .. }, _) => ColumnKind::Binary,
                    (ColumnStats::AdmissionRate(_), _) => ColumnKind::Rate,
                    (ColumnStats::Product { .. }, _) => ColumnKind::Interaction,
                };
                ColumnSpec {
                    name: FEATURE_NAMES[i].to_string(),
                    kind,
                    stats,
                }
            })
            .collect();
        Ok(FeatureSchema {
            version: SCHEMA_VERSION,
            columns,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// SHA-256 over the canonical JSON form; ties models to the schema they were trained on.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn scaler(&self, col: usize) -> &Scaler {
        match &self.columns[col].stats {
            ColumnStats::Standardized(s) => s,
            other => panic!("column {col} is not standardized: {other:?}"),
        }
    }

    fn frequency(&self, col: usize) -> &FrequencyEncoder {
        match &self.columns[col].stats {
            ColumnStats::Frequency(f) => f,
            other => panic!("column {col} is not frequency-encoded: {other:?}"),
        }
    }

    pub fn admission_rates(&self) -> &AdmissionRates {
        match &self.columns[COL_ADMISSION_RATE].stats {
            ColumnStats::AdmissionRate(a) => a,
            other => panic!("admission-rate column holds {other:?}"),
        }
    }

    pub fn transform(&self, r: &FeatureInput) -> Vec<f64> {
        if self.version != SCHEMA_VERSION || self.columns.len() != N_FEATURES {
            panic!("schema layout mismatch");
        }
        let qs = self.scaler(COL_QS_RANK).apply(qs_numeric(r.qs_rank));
        let program_freq = self.frequency(COL_PROGRAM).apply(&r.program);
        vec![
            self.scaler(COL_GPA).apply(r.gpa),
            self.scaler(COL_YEAR).apply(r.decision_year as f64),
            self.scaler(COL_FSR).apply(r.fsr_score),
            self.scaler(COL_CPF).apply(r.cpf_score),
            self.scaler(COL_ISR).apply(r.isr_score),
            qs,
            program_freq,
            self.frequency(COL_DISCIPLINE).apply(&r.discipline),
            self.frequency(COL_UNIVERSITY).apply(&r.university),
            self.frequency(COL_COUNTRY).apply(&r.country),
            degree_code(r.degree_type),
            applicant_status_code(r.applicant_status),
            university_status_code(r.university_status),
            self.admission_rates().apply(&r.program),
            build_interaction(program_freq, qs),
        ]
    }

    /// Transform one row and reject non-finite entries.
    pub fn transform_checked(&self, r: &FeatureInput, row: usize) -> Result<Vec<f64>> {
        let v = self.transform(r);
        if let Some(c) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row,
                column: self.columns[c].name.clone(),
            });
        }
        Ok(v)
    }

    pub fn assemble(
        &self,
        rows: &[FeatureInput],
        labels: &[u8],
        row_ids: &[usize],
    ) -> Result<FeatureMatrix> {
        if rows.len() != labels.len() || rows.len() != row_ids.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len().min(row_ids.len()),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for (r, &id) in rows.iter().zip(row_ids) {
            data.extend(self.transform_checked(r, id)?);
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols(),
            column_names: self.names(),
            data,
            labels: labels.to_vec(),
            row_ids: row_ids.to_vec(),
        })
    }
}

/// Dense row-major design matrix plus aligned labels and source row ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub column_names: Vec<String>,
    pub data: Vec<f64>,
    pub labels: Vec<u8>,
    pub row_ids: Vec<usize>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<FeatureMatrix> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            if let Some(c) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: i,
                    column: format!("x{c}"),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            column_names: (0..n_cols).map(|c| format!("x{c}")).collect(),
            data,
            row_ids: (0..rows.len()).collect(),
            labels,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    /// Select a subset of rows (in the given order).
    pub fn subset(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            column_names: self.column_names.clone(),
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// CSV with header `row_id,<columns...>,label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["row_id".to_string()];
        header.extend(self.column_names.iter().cloned());
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows {
            let mut rec = vec![self.row_ids[i].to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<FeatureMatrix> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if header.len() < 2 || header[0] != "row_id" || header[header.len() - 1] != "label" {
            return Err(Error::InvalidInput(
                "matrix CSV needs row_id ... label header".into(),
            ));
        }
        let column_names = header[1..header.len() - 1].to_vec();
        let n_cols = column_names.len();
        let (mut data, mut labels, mut row_ids) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad =
                |what: &str| Error::InvalidInput(format!("matrix row {}: bad {what}", line + 1));
            row_ids.push(rec[0].parse::<usize>().map_err(|_| bad("row_id"))?);
            for j in 0..n_cols {
                let v: f64 = rec[j + 1].parse().map_err(|_| bad(&column_names[j]))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: line,
                        column: column_names[j].clone(),
                    });
                }
                data.push(v);
            }
            let y: u8 = rec[n_cols + 1].parse().map_err(|_| bad("label"))?;
            if y > 1 {
                return Err(bad("label"));
            }
            labels.push(y);
        }
        Ok(FeatureMatrix {
            n_rows: labels.len(),
            n_cols,
            column_names,
            data,
            labels,
            row_ids,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split sizes from fractions: train and validation rounded, test takes the rest.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> (usize, usize, usize) {
    let train = (n as f64 * fractions.0).round() as usize;
    let val = (n as f64 * fractions.1).round() as usize;
    (train, val, n - train - val)
}

/// Largest-remainder apportionment of `total` items proportional to `weights`;
/// ties on the remainder go to the earlier slot.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    let mut counts: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rems: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (total * w % sum, i))
        .collect();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total - counts.iter().sum::<usize>();
    for (_, i) in rems {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified three-way split. Sorted index lists; deterministic per seed.
pub fn stratified_split(
    labels: &[u8],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitIndices> {
    let n = labels.len();
    if n < 10 {
        return Err(Error::Split(format!("need at least 10 rows, got {n}")));
    }
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "fractions {fractions:?} must be in [0,1] and sum to 1"
        )));
    }
    let sizes = split_sizes(n, fractions);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        if y > 1 {
            return Err(Error::Split(format!("label {y} at row {i} is not binary")));
        }
        by_class[y as usize].push(i);
    }
    for (cls, members) in by_class.iter().enumerate() {
        if members.len() < 3 {
            return Err(Error::Split(format!(
                "class {cls} has {} member(s), fewer than the 3 splits",
                members.len()
            )));
        }
    }
    let size_vec = [sizes.0, sizes.1, sizes.2];
    let class0 = apportion(by_class[0].len(), &size_vec);
    let class1: Vec<usize> = size_vec.iter().zip(&class0).map(|(s, c)| s - c).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (members, counts) in by_class.iter_mut().zip([class0, class1]) {
        members.shuffle(&mut rng);
        let mut start = 0;
        for (s, &k) in counts.iter().enumerate() {
            out[s].extend_from_slice(&members[start..start + k]);
            start += k;
        }
    }
    for set in out.iter_mut() {
        set.sort_unstable();
    }
    let [train, validation, test] = out;
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}
