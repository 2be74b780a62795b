//! End-to-end wiring: raw records to a trained, versioned model bundle.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{brier_score, fit_isotonic, fit_platt, Calibrator};
use crate::enrichment::{
    enrich, DisciplineMap, EnrichedRecord, EnrichmentReport, UniversityIndex, UniversityProfile,
};
use crate::error::{Error, Result};
use crate::features::{stratified_split, FeatureInput, FeatureMatrix, FeatureSchema, SplitIndices};
use crate::gbdt::GbdtModel;
use crate::hybrid::{
    fit_hybrid, HybridConfig, HybridMode, HybridModel, HybridPrediction, KnnReference,
    ResidualReason,
};
use crate::io::{read_json_file, read_jsonl_file, write_json_file, write_jsonl_file};
use crate::learners::{
    fit_classification_tree, fit_logreg, fit_random_forest, Classifier, KnnModel, LogRegParams,
    RandomForestParams, TreeParams,
};
use crate::math::sigmoid;
use crate::metrics::{classification_report, ClassificationReport};
use crate::recommender::{ApplicantProfile, ApplicantQuery, Preferences, Scorer};
use crate::records::{
    drop_sparse_missing_gpa, filter_and_binarize, impute_gpa, CleanRecord, DropReport,
    ImputeStrategy, RawApplicationRecord, DEFAULT_MIN_YEAR,
};

pub const BUNDLE_FORMAT: &str = "gradrec-bundle";
pub const BUNDLE_VERSION: u32 = 1;
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.7, 0.15, 0.15);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub min_year: i32,
    pub impute: ImputeStrategy,
    /// Records missing GPA are dropped when their program has fewer rows than this.
    pub min_program_count_for_missing_gpa: usize,
    pub split: (f64, f64, f64),
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            min_year: DEFAULT_MIN_YEAR,
            impute: ImputeStrategy::default(),
            min_program_count_for_missing_gpa: 0,
            split: DEFAULT_SPLIT,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub drops: DropReport,
    pub sparse_missing_gpa_dropped: usize,
    pub gpa_imputed: usize,
}

/// Stage reports are absent when the stage ran in a separate invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparationReport {
    pub cleaning: Option<CleaningReport>,
    pub enrichment: Option<EnrichmentReport>,
    pub unmatched_dropped: usize,
    pub rows: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Matched, imputed records; matrix row ids index into this list.
    pub records: Vec<EnrichedRecord>,
    pub inputs: Vec<FeatureInput>,
    pub labels: Vec<u8>,
    pub split: SplitIndices,
    pub schema: FeatureSchema,
    pub train: FeatureMatrix,
    pub validation: FeatureMatrix,
    pub test: FeatureMatrix,
    pub report: PreparationReport,
}

const RECORDS_FILE: &str = "records.jsonl";
const SPLIT_FILE: &str = "split.json";
const SCHEMA_FILE: &str = "schema.json";
const REPORT_FILE: &str = "report.json";

impl PreparedData {
    pub fn records_at(&self, idx: &[usize]) -> Vec<EnrichedRecord> {
        idx.iter().map(|&i| self.records[i].clone()).collect()
    }

    /// Writes the records, split, schema and report, plus the three matrices
    /// as `train.csv`, `validation.csv` and `test.csv`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl_file(&dir.join(RECORDS_FILE), &self.records)?;
        write_json_file(&dir.join(SPLIT_FILE), &self.split)?;
        write_json_file(&dir.join(SCHEMA_FILE), &self.schema)?;
        write_json_file(&dir.join(REPORT_FILE), &self.report)?;
        for (name, m) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            m.write_csv(BufWriter::new(File::create(
                dir.join(format!("{name}.csv")),
            )?))?;
        }
        Ok(())
    }

    /// Rebuilds the matrices from records, split and schema; the CSV files are not read.
    pub fn load_dir(dir: &Path) -> Result<PreparedData> {
        let records: Vec<EnrichedRecord> = read_jsonl_file(&dir.join(RECORDS_FILE))?;
        let split: SplitIndices = read_json_file(&dir.join(SPLIT_FILE))?;
        let schema: FeatureSchema = read_json_file(&dir.join(SCHEMA_FILE))?;
        let report: PreparationReport = read_json_file(&dir.join(REPORT_FILE))?;
        let n = records.len();
        if split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .any(|&i| i >= n)
        {
            return Err(Error::Split(format!(
                "split references rows beyond the {n} records"
            )));
        }
        let inputs = records
            .iter()
            .map(FeatureInput::from_enriched)
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<u8> = records.iter().map(|r| r.record.label).collect();
        assemble(records, inputs, labels, split, schema, report)
    }
}

fn assemble(
    records: Vec<EnrichedRecord>,
    inputs: Vec<FeatureInput>,
    labels: Vec<u8>,
    split: SplitIndices,
    schema: FeatureSchema,
    mut report: PreparationReport,
) -> Result<PreparedData> {
    let matrix = |idx: &[usize]| {
        let rows: Vec<FeatureInput> = idx.iter().map(|&i| inputs[i].clone()).collect();
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        schema.assemble(&rows, &y, idx)
    };
    let train = matrix(&split.train)?;
    let validation = matrix(&split.validation)?;
    let test = matrix(&split.test)?;
    report.rows = records.len();
    report.train = train.n_rows;
    report.validation = validation.n_rows;
    report.test = test.n_rows;
    Ok(PreparedData {
        records,
        inputs,
        labels,
        split,
        schema,
        train,
        validation,
        test,
        report,
    })
}

pub fn discipline_map(
    rows: &[(String, crate::enrichment::ProgramMapping)],
) -> Result<DisciplineMap> {
    let mut m = DisciplineMap::default();
    for (raw, mapping) in rows {
        m.insert(raw, mapping.clone())?;
    }
    Ok(m)
}

/// Filter, binarize, drop sparse missing-GPA rows and impute the rest.
pub fn clean(
    raw: &[RawApplicationRecord],
    cfg: &PipelineConfig,
) -> Result<(Vec<CleanRecord>, CleaningReport)> {
    let (kept, drops) = filter_and_binarize(raw, cfg.min_year)?;
    let (kept, sparse) = drop_sparse_missing_gpa(&kept, cfg.min_program_count_for_missing_gpa);
    let (kept, imputed) = impute_gpa(&kept, cfg.impute)?;
    Ok((
        kept,
        CleaningReport {
            drops,
            sparse_missing_gpa_dropped: sparse,
            gpa_imputed: imputed,
        },
    ))
}

/// Keep matched records, split, and fit the schema on training rows only.
pub fn featurize(enriched: Vec<EnrichedRecord>, cfg: &PipelineConfig) -> Result<PreparedData> {
    let before = enriched.len();
    let records: Vec<EnrichedRecord> = enriched
        .into_iter()
        .filter(EnrichedRecord::is_matched)
        .collect();
    let unmatched_dropped = before - records.len();
    let inputs = records
        .iter()
        .map(FeatureInput::from_enriched)
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = records.iter().map(|r| r.record.label).collect();
    let split = stratified_split(&labels, cfg.split, cfg.seed)?;
    let train_in: Vec<FeatureInput> = split.train.iter().map(|&i| inputs[i].clone()).collect();
    let train_y: Vec<u8> = split.train.iter().map(|&i| labels[i]).collect();
    let schema = FeatureSchema::fit(&train_in, &train_y)?;
    let report = PreparationReport {
        cleaning: None,
        enrichment: None,
        unmatched_dropped,
        rows: 0,
        train: 0,
        validation: 0,
        test: 0,
    };
    assemble(records, inputs, labels, split, schema, report)
}

/// Clean, enrich, split and featurize in one pass.
pub fn prepare(
    raw: &[RawApplicationRecord],
    universities: &[UniversityProfile],
    disciplines: &DisciplineMap,
    cfg: &PipelineConfig,
) -> Result<PreparedData> {
    let (kept, cleaning) = clean(raw, cfg)?;
    let index = UniversityIndex::new(universities);
    let (enriched, enrichment) = enrich(&kept, &index, disciplines);
    let mut data = featurize(enriched, cfg)?;
    data.report.cleaning = Some(cleaning);
    data.report.enrichment = Some(enrichment);
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub trees: usize,
    pub rejected_rounds: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub calibrator: String,
    pub knn_reference: KnnReference,
    pub k: usize,
    pub oof_folds: usize,
    pub train_residuals: usize,
    pub residual_reasons: BTreeMap<ResidualReason, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub schema_fingerprint: String,
    pub schema: FeatureSchema,
    pub config: HybridConfig,
    pub metadata: TrainMetadata,
    pub hybrid: HybridModel,
}

impl ModelBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_file(path, self)
    }

    pub fn load(path: &Path) -> Result<ModelBundle> {
        let b: ModelBundle = read_json_file(path)?;
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        if self.format != BUNDLE_FORMAT {
            return Err(Error::InvalidInput(format!(
                "not a model bundle (format {:?})",
                self.format
            )));
        }
        if self.version != BUNDLE_VERSION {
            return Err(Error::Version {
                expected: BUNDLE_VERSION,
                found: self.version,
            });
        }
        let fp = self.schema.fingerprint();
        if fp != self.schema_fingerprint {
            return Err(Error::SchemaMismatch {
                expected: self.schema_fingerprint.clone(),
                got: fp,
            });
        }
        self.hybrid.gbdt.check_schema(&fp)
    }

    pub fn gbdt(&self) -> &GbdtModel {
        &self.hybrid.gbdt
    }

    pub fn encode(&self, input: &FeatureInput) -> Result<Vec<f64>> {
        self.schema.transform_checked(input, 0)
    }

    /// Deployment-mode prediction; labels are never consulted.
    pub fn predict_input(&self, input: &FeatureInput) -> Result<HybridPrediction> {
        self.hybrid
            .predict_with_mode(&self.encode(input)?, HybridMode::Deployment, None)
    }
}

impl Scorer for ModelBundle {
    fn score(&self, input: &FeatureInput) -> Result<f64> {
        Ok(self.predict_input(input)?.proba)
    }
}

/// Deployment-mode hybrid as a plain classifier.
impl Classifier for HybridModel {
    fn n_features(&self) -> usize {
        self.gbdt.feature_count
    }

    fn predict_proba_row(&self, x: &[f64]) -> Result<f64> {
        Ok(self
            .predict_with_mode(x, HybridMode::Deployment, None)?
            .proba)
    }

    fn predict_proba(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self
            .predict_batch(m, HybridMode::Deployment, None)?
            .into_iter()
            .map(|p| p.proba)
            .collect())
    }
}

pub fn train_bundle(data: &PreparedData, config: HybridConfig) -> Result<ModelBundle> {
    train_on(&data.schema, &data.train, &data.validation, config)
}

pub fn train_on(
    schema: &FeatureSchema,
    train: &FeatureMatrix,
    validation: &FeatureMatrix,
    config: HybridConfig,
) -> Result<ModelBundle> {
    let fit = fit_hybrid(train, validation, config)?;
    let fingerprint = schema.fingerprint();
    let mut hybrid = fit.model;
    hybrid.gbdt.schema_fingerprint = Some(fingerprint.clone());
    let g = &hybrid.gbdt;
    let mut reasons = BTreeMap::new();
    for (_, r) in &fit.train_residuals.members {
        *reasons.entry(*r).or_insert(0) += 1;
    }
    let metadata = TrainMetadata {
        seed: config.gbdt.seed,
        n_train: train.n_rows,
        n_validation: validation.n_rows,
        trees: g.trees.len(),
        rejected_rounds: g.rejected_rounds.len(),
        initial_train_loss: g.loss_trace.first().copied().unwrap_or(f64::NAN),
        final_train_loss: g.loss_trace.last().copied().unwrap_or(f64::NAN),
        calibrator: hybrid.calibrator.name().to_string(),
        knn_reference: config.reference,
        k: config.k,
        oof_folds: config.oof_folds,
        train_residuals: fit.train_residuals.len(),
        residual_reasons: reasons,
    };
    Ok(ModelBundle {
        format: BUNDLE_FORMAT.to_string(),
        version: BUNDLE_VERSION,
        schema_fingerprint: fingerprint,
        schema: schema.clone(),
        config,
        metadata,
        hybrid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Platt,
    Isotonic,
}

/// Refit the bundle's calibrator on validation margins. The kNN model and the
/// band are kept; routing follows the new calibrated probabilities.
pub fn recalibrate(
    bundle: &ModelBundle,
    validation: &FeatureMatrix,
    method: CalibrationMethod,
) -> Result<ModelBundle> {
    let margins = bundle.gbdt().predict_margins(validation)?;
    let calibrator = match method {
        CalibrationMethod::Platt => Calibrator::Platt(fit_platt(&margins, &validation.labels)?),
        CalibrationMethod::Isotonic => {
            Calibrator::Isotonic(fit_isotonic(&margins, &validation.labels)?)
        }
    };
    let mut out = bundle.clone();
    out.metadata.calibrator = calibrator.name().to_string();
    out.hybrid.calibrator = calibrator;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    /// Boosted model, `sigmoid(margin) >= 0.5`.
    pub gbdt: ClassificationReport,
    /// Boosted model after calibration; the routing rule uses these predictions.
    pub gbdt_calibrated: ClassificationReport,
    pub hybrid_deployment: ClassificationReport,
    pub hybrid_paper_faithful: ClassificationReport,
    pub routed_deployment: usize,
    pub routed_paper_faithful: usize,
    pub brier_uncalibrated: f64,
    pub brier_calibrated: f64,
}

fn report_of(labels: &[u8], probs: &[f64]) -> Result<ClassificationReport> {
    let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
    classification_report(labels, &preds, Some(probs))
}

fn report_of_predictions(
    labels: &[u8],
    preds: &[HybridPrediction],
) -> Result<ClassificationReport> {
    let labels_hat: Vec<u8> = preds.iter().map(|p| p.label).collect();
    let probs: Vec<f64> = preds.iter().map(|p| p.proba).collect();
    classification_report(labels, &labels_hat, Some(&probs))
}

pub fn evaluate(bundle: &ModelBundle, data: &FeatureMatrix) -> Result<EvaluationReport> {
    let h = &bundle.hybrid;
    let margins = h.gbdt.predict_margins(data)?;
    let raw: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
    let calibrated: Vec<f64> = margins.iter().map(|&m| h.calibrator.apply(m)).collect();
    let deployment = h.predict_batch(data, HybridMode::Deployment, None)?;
    let faithful = h.predict_batch(data, HybridMode::PaperFaithful, Some(&data.labels))?;
    Ok(EvaluationReport {
        n: data.n_rows,
        gbdt: report_of(&data.labels, &raw)?,
        gbdt_calibrated: report_of(&data.labels, &calibrated)?,
        hybrid_deployment: report_of_predictions(&data.labels, &deployment)?,
        hybrid_paper_faithful: report_of_predictions(&data.labels, &faithful)?,
        routed_deployment: deployment.iter().filter(|p| p.routed).count(),
        routed_paper_faithful: faithful.iter().filter(|p| p.routed).count(),
        brier_uncalibrated: brier_score(&raw, &data.labels)?,
        brier_calibrated: brier_score(&calibrated, &data.labels)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationComparison {
    pub split: String,
    pub uncalibrated: f64,
    pub platt: f64,
    pub isotonic: f64,
}

/// Brier scores of both calibrators, each fitted on validation margins.
pub fn compare_calibrators(
    gbdt: &GbdtModel,
    validation: &FeatureMatrix,
    test: &FeatureMatrix,
) -> Result<Vec<CalibrationComparison>> {
    let vm = gbdt.predict_margins(validation)?;
    let platt = fit_platt(&vm, &validation.labels)?;
    let iso = fit_isotonic(&vm, &validation.labels)?;
    let mut out = Vec::new();
    for (name, m) in [("validation", validation), ("test", test)] {
        let margins = gbdt.predict_margins(m)?;
        let raw: Vec<f64> = margins.iter().map(|&v| sigmoid(v)).collect();
        let p: Vec<f64> = margins.iter().map(|&v| platt.apply(v)).collect();
        let i: Vec<f64> = margins.iter().map(|&v| iso.apply(v)).collect();
        out.push(CalibrationComparison {
            split: name.to_string(),
            uncalibrated: brier_score(&raw, &m.labels)?,
            platt: brier_score(&p, &m.labels)?,
            isotonic: brier_score(&i, &m.labels)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub model: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
}

impl BaselineRow {
    fn from_report(model: &str, r: &ClassificationReport) -> BaselineRow {
        BaselineRow {
            model: model.to_string(),
            accuracy: r.accuracy,
            precision: r.macro_avg.precision,
            recall: r.macro_avg.recall,
            f1: r.macro_avg.f1,
            roc_auc: r.roc_auc,
        }
    }
}

/// Test-split metrics for each baseline next to the bundle's models.
pub fn compare_baselines(
    data: &PreparedData,
    bundle: &ModelBundle,
    seed: u64,
) -> Result<Vec<BaselineRow>> {
    let (train, test) = (&data.train, &data.test);
    let mut rows = Vec::new();
    let lr = fit_logreg(train, &train.labels, LogRegParams::default())?;
    rows.push(BaselineRow::from_report(
        "logistic_regression",
        &report_of(&test.labels, &lr.model.predict_proba(test)?)?,
    ));
    let tp = TreeParams::default();
    let tree = fit_classification_tree(train, &train.labels, tp.max_depth, tp.min_samples_leaf)?;
    rows.push(BaselineRow::from_report(
        "decision_tree",
        &report_of(&test.labels, &tree.predict_proba(test)?)?,
    ));
    let rf = fit_random_forest(
        train,
        &train.labels,
        RandomForestParams {
            seed,
            ..Default::default()
        },
    )?;
    rows.push(BaselineRow::from_report(
        "random_forest",
        &report_of(&test.labels, &rf.predict_proba(test)?)?,
    ));
    let knn = KnnModel::fit(train, &train.labels, bundle.config.k)?;
    rows.push(BaselineRow::from_report(
        "knn",
        &report_of(&test.labels, &knn.predict_proba(test)?)?,
    ));
    let eval = evaluate(bundle, test)?;
    rows.push(BaselineRow::from_report("gbdt", &eval.gbdt));
    rows.push(BaselineRow::from_report(
        "hybrid_deployment",
        &eval.hybrid_deployment,
    ));
    rows.push(BaselineRow::from_report(
        "hybrid_paper_faithful",
        &eval.hybrid_paper_faithful,
    ));
    Ok(rows)
}

/// One query per rejected record, targeting the program it was rejected from.
pub fn rejected_queries(
    records: &[EnrichedRecord],
    row_ids: impl IntoIterator<Item = usize>,
) -> Vec<ApplicantQuery> {
    row_ids
        .into_iter()
        .filter(|&i| records[i].record.label == 0)
        .filter_map(|i| {
            let r = &records[i];
            let u = r.university.as_ref()?;
            Some(ApplicantQuery {
                id: Some(format!("row-{i}")),
                applicant: ApplicantProfile {
                    gpa: r.record.gpa?,
                    decision_year: r.record.decision_year,
                    degree_type: r.record.degree_type,
                    applicant_status: r.record.applicant_status,
                },
                university: u.canonical_name.clone(),
                program: r.canonical_program.clone(),
                preferences: Preferences::default(),
                p0: None,
            })
        })
        .collect()
}
