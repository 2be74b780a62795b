//! Plot-ready data behind the diagnostic figures and summary tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::enrichment::{EnrichedRecord, Rate};
use crate::error::Result;
use crate::explain::{
    mean_abs_attribution, permutation_importance, FeatureImportance, ImportanceMetric,
};
use crate::features::FeatureMatrix;
use crate::hybrid::HybridMode;
use crate::learners::{fit_classification_tree, TreeModel};
use crate::math::{mean, median, quantile, sigmoid, skewness};
use crate::metrics::{pca_fit, pca_project, PcaModel};
use crate::pipeline::ModelBundle;
use crate::records::{ApplicantStatus, DegreeType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub row_id: usize,
    pub label: u8,
    pub gbdt_proba: f64,
    pub calibrated_proba: f64,
    pub hybrid_proba: f64,
    pub routed: bool,
}

pub fn probability_rows(bundle: &ModelBundle, m: &FeatureMatrix) -> Result<Vec<ProbabilityRow>> {
    let h = &bundle.hybrid;
    let margins = h.gbdt.predict_margins(m)?;
    let hybrid = h.predict_batch(m, HybridMode::Deployment, None)?;
    Ok((0..m.n_rows)
        .map(|i| ProbabilityRow {
            row_id: m.row_ids.get(i).copied().unwrap_or(i),
            label: m.labels[i],
            gbdt_proba: sigmoid(margins[i]),
            calibrated_proba: h.calibrator.apply(margins[i]),
            hybrid_proba: hybrid[i].proba,
            routed: hybrid[i].routed,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRow {
    pub row_id: usize,
    pub label: u8,
    pub predicted: u8,
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub model: PcaModel,
    pub explained_ratio: Vec<f64>,
    pub rows: Vec<PcaRow>,
}

/// Projection of `m` onto its first `q` components, tagged with deployment predictions.
pub fn pca_report(bundle: &ModelBundle, m: &FeatureMatrix, q: usize) -> Result<PcaReport> {
    let model = pca_fit(m, q)?;
    let scores = pca_project(&model, m)?;
    let preds = bundle
        .hybrid
        .predict_batch(m, HybridMode::Deployment, None)?;
    let explained_ratio = model
        .explained_variance
        .iter()
        .map(|v| {
            if model.total_variance > 0.0 {
                v / model.total_variance
            } else {
                0.0
            }
        })
        .collect();
    let rows = scores
        .into_iter()
        .enumerate()
        .map(|(i, components)| PcaRow {
            row_id: m.row_ids.get(i).copied().unwrap_or(i),
            label: m.labels[i],
            predicted: preds[i].label,
            components,
        })
        .collect();
    Ok(PcaReport {
        model,
        explained_ratio,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub feature: usize,
    pub name: String,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub metric: ImportanceMetric,
    pub n_repeats: usize,
    pub seed: u64,
    pub gbdt_permutation: Vec<FeatureImportance>,
    pub hybrid_permutation: Vec<FeatureImportance>,
    pub gbdt_mean_abs_attribution: Vec<AttributionSummary>,
}

pub fn importance_report(
    bundle: &ModelBundle,
    m: &FeatureMatrix,
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    let gbdt = bundle.gbdt();
    let mean_abs = mean_abs_attribution(gbdt, m)?;
    Ok(ImportanceReport {
        metric,
        n_repeats,
        seed,
        gbdt_permutation: permutation_importance(gbdt, m, metric, n_repeats, seed)?,
        hybrid_permutation: permutation_importance(&bundle.hybrid, m, metric, n_repeats, seed)?,
        gbdt_mean_abs_attribution: mean_abs
            .into_iter()
            .enumerate()
            .map(|(feature, mean_abs)| AttributionSummary {
                feature,
                name: m
                    .column_names
                    .get(feature)
                    .cloned()
                    .unwrap_or_else(|| format!("f{feature}")),
                mean_abs,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRow {
    pub records: usize,
    pub accepted: usize,
    pub acceptance_rate: Rate,
    pub masters: usize,
    pub phd: usize,
}

pub fn yearly_report(records: &[EnrichedRecord]) -> BTreeMap<i32, YearRow> {
    let mut out: BTreeMap<i32, YearRow> = BTreeMap::new();
    for r in records {
        let row = out.entry(r.record.decision_year).or_insert(YearRow {
            records: 0,
            accepted: 0,
            acceptance_rate: Rate(None),
            masters: 0,
            phd: 0,
        });
        row.records += 1;
        row.accepted += usize::from(r.record.label);
        match r.record.degree_type {
            DegreeType::Masters => row.masters += 1,
            DegreeType::Phd => row.phd += 1,
        }
    }
    for row in out.values_mut() {
        row.acceptance_rate = Rate::of(row.accepted, row.records);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTree {
    pub feature_names: Vec<String>,
    pub rules: Vec<String>,
    pub tree: TreeModel,
}

/// Shallow CART on the training matrix, printed as human-readable split rules.
pub fn threshold_tree(
    train: &FeatureMatrix,
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<ThresholdTree> {
    let tree = fit_classification_tree(train, &train.labels, max_depth, min_samples_leaf)?;
    let mut rules = Vec::new();
    write_rules(&tree.root, &train.column_names, 0, &mut rules);
    Ok(ThresholdTree {
        feature_names: train.column_names.clone(),
        rules,
        tree,
    })
}

fn write_rules(
    node: &crate::learners::TreeNode,
    names: &[String],
    depth: usize,
    out: &mut Vec<String>,
) {
    use crate::learners::TreeNode;
    let pad = "  ".repeat(depth);
    match node {
        TreeNode::Leaf { value, count } => out.push(format!("{pad}leaf p={value:.4} n={count}")),
        TreeNode::Internal {
            feature,
            threshold,
            count,
            left,
            right,
            ..
        } => {
            let name = names.get(*feature).map_or("?", String::as_str);
            out.push(format!("{pad}{name} <= {threshold:.6} (n={count})"));
            write_rules(left, names, depth + 1, out);
            out.push(format!("{pad}{name} > {threshold:.6}"));
            write_rules(right, names, depth + 1, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpaSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub q75: f64,
    pub max: f64,
    pub skewness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub accepted: usize,
    pub acceptance_rate: Rate,
    pub gpa: Option<GpaSummary>,
    pub us_share: Rate,
    pub masters_share: Rate,
    pub international_share: Rate,
    pub universities: usize,
    pub programs: usize,
    pub by_country: BTreeMap<String, usize>,
    pub by_discipline: BTreeMap<String, usize>,
}

pub fn dataset_summary(records: &[EnrichedRecord], us_country: &str) -> DatasetSummary {
    let n = records.len();
    let gpas: Vec<f64> = records.iter().filter_map(|r| r.record.gpa).collect();
    let gpa = (!gpas.is_empty()).then(|| {
        let mu = mean(&gpas);
        let var =
            gpas.iter().map(|g| (g - mu).powi(2)).sum::<f64>() / (gpas.len().max(2) - 1) as f64;
        GpaSummary {
            count: gpas.len(),
            mean: mu,
            median: median(&gpas).unwrap_or(f64::NAN),
            std: var.sqrt(),
            min: gpas.iter().copied().fold(f64::INFINITY, f64::min),
            q25: quantile(&gpas, 0.25).unwrap_or(f64::NAN),
            q75: quantile(&gpas, 0.75).unwrap_or(f64::NAN),
            max: gpas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            skewness: skewness(&gpas),
        }
    });
    let mut by_country = BTreeMap::new();
    let mut by_discipline = BTreeMap::new();
    let mut universities = std::collections::BTreeSet::new();
    let mut programs = std::collections::BTreeSet::new();
    let mut us = 0;
    for r in records {
        if let Some(u) = &r.university {
            *by_country.entry(u.country.clone()).or_insert(0) += 1;
            us += usize::from(u.country == us_country);
            universities.insert(u.canonical_name.clone());
        }
        *by_discipline.entry(r.discipline.clone()).or_insert(0) += 1;
        programs.insert(r.canonical_program.clone());
    }
    let accepted = records.iter().filter(|r| r.record.label == 1).count();
    DatasetSummary {
        rows: n,
        accepted,
        acceptance_rate: Rate::of(accepted, n),
        gpa,
        us_share: Rate::of(us, n),
        masters_share: Rate::of(
            records
                .iter()
                .filter(|r| r.record.degree_type == DegreeType::Masters)
                .count(),
            n,
        ),
        international_share: Rate::of(
            records
                .iter()
                .filter(|r| r.record.applicant_status == ApplicantStatus::International)
                .count(),
            n,
        ),
        universities: universities.len(),
        programs: programs.len(),
        by_country,
        by_discipline,
    }
}
