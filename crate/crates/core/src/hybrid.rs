//! Global boosted model plus a local kNN refiner for residual samples.
//!
//! A sample is residual when the calibrated probability falls inside the band
//! or, when its label is known, when the boosted model misclassifies it.
//! Residual samples take the kNN answer and everything else keeps the boosted
//! answer. Deployment mode routes on the band alone and refuses labels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{fit_platt, Calibrator};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::gbdt::{fit_gbdt, GbdtConfig, GbdtModel};
use crate::learners::{Classifier, KnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band {
            low: 0.4,
            high: 0.6,
        }
    }
}

impl Band {
    pub fn new(low: f64, high: f64) -> Result<Band> {
        let b = Band { low, high };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low < self.high && self.high < 1.0) {
            return Err(Error::InvalidInput(format!(
                "band [{}, {}] must satisfy 0 < low < high < 1",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Endpoints inclusive.
    pub fn contains(&self, p: f64) -> bool {
        p >= self.low && p <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualReason {
    FalsePositive,
    FalseNegative,
    Borderline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    pub n: usize,
    /// Sorted by index.
    pub members: Vec<(usize, ResidualReason)>,
}

impl ResidualSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.0).collect()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search_by_key(&i, |m| m.0).is_ok()
    }

    pub fn count(&self, reason: ResidualReason) -> usize {
        self.members.iter().filter(|m| m.1 == reason).count()
    }
}

fn residual_reason(p: f64, pred: u8, label: u8, band: &Band) -> Option<ResidualReason> {
    match (pred, label) {
        (1, 0) => Some(ResidualReason::FalsePositive),
        (0, 1) => Some(ResidualReason::FalseNegative),
        _ if band.contains(p) => Some(ResidualReason::Borderline),
        _ => None,
    }
}

pub fn build_residual_set(
    probs: &[f64],
    predictions: &[u8],
    labels: &[u8],
    band: Band,
) -> Result<ResidualSet> {
    band.validate()?;
    if probs.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: predictions.len(),
        });
    }
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    let members = (0..probs.len())
        .filter_map(|i| residual_reason(probs[i], predictions[i], labels[i], &band).map(|r| (i, r)))
        .collect();
    Ok(ResidualSet {
        n: probs.len(),
        members,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridMode {
    PaperFaithful,
    Deployment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnReference {
    AllTraining,
    ResidualsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub gbdt: GbdtConfig,
    pub k: usize,
    pub band: Band,
    pub reference: KnnReference,
    pub oof_folds: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            gbdt: GbdtConfig::default(),
            k: 9,
            band: Band::default(),
            reference: KnnReference::AllTraining,
            oof_folds: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub gbdt: GbdtModel,
    pub calibrator: Calibrator,
    /// `None` when training produced no residuals; the hybrid is then the boosted model.
    pub knn: Option<KnnModel>,
    pub band: Band,
    pub mode: HybridMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridPrediction {
    pub label: u8,
    pub proba: f64,
    pub routed: bool,
    /// Calibrated boosted probability before routing.
    pub gbdt_proba: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<ResidualReason>,
}

impl HybridModel {
    pub fn calibrated_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(self.calibrator.apply(self.gbdt.predict_margin(x)?))
    }

    pub fn predict(&self, x: &[f64], oracle_label: Option<u8>) -> Result<HybridPrediction> {
        self.predict_with_mode(x, self.mode, oracle_label)
    }

    pub fn predict_with_mode(
        &self,
        x: &[f64],
        mode: HybridMode,
        oracle_label: Option<u8>,
    ) -> Result<HybridPrediction> {
        let p = self.calibrated_proba(x)?;
        self.route(x, p, mode, oracle_label)
    }

    /// Routing for a precomputed calibrated probability `p_hat`.
    pub fn route(
        &self,
        x: &[f64],
        p_hat: f64,
        mode: HybridMode,
        oracle_label: Option<u8>,
    ) -> Result<HybridPrediction> {
        let pred = u8::from(p_hat >= 0.5);
        let reason = match (mode, oracle_label) {
            (HybridMode::Deployment, Some(_)) => {
                return Err(Error::Leakage(
                    "deployment-mode prediction must not receive a label".into(),
                ))
            }
            (HybridMode::PaperFaithful, None) => {
                return Err(Error::InvalidInput(
                    "paper_faithful mode requires the true label".into(),
                ))
            }
            (HybridMode::Deployment, None) => self
                .band
                .contains(p_hat)
                .then_some(ResidualReason::Borderline),
            (HybridMode::PaperFaithful, Some(y)) => {
                if y > 1 {
                    return Err(Error::InvalidInput(format!("label {y} is not binary")));
                }
                residual_reason(p_hat, pred, y, &self.band)
            }
        };
        match (&self.knn, reason) {
            (Some(knn), Some(reason)) => {
                let proba = knn.predict_proba_row(x)?;
                Ok(HybridPrediction {
                    label: u8::from(proba >= 0.5),
                    proba,
                    routed: true,
                    gbdt_proba: p_hat,
                    reason: Some(reason),
                })
            }
            _ => Ok(HybridPrediction {
                label: pred,
                proba: p_hat,
                routed: false,
                gbdt_proba: p_hat,
                reason: None,
            }),
        }
    }

    pub fn predict_batch(
        &self,
        m: &FeatureMatrix,
        mode: HybridMode,
        labels: Option<&[u8]>,
    ) -> Result<Vec<HybridPrediction>> {
        if let Some(l) = labels {
            if l.len() != m.n_rows {
                return Err(Error::LengthMismatch {
                    left: m.n_rows,
                    right: l.len(),
                });
            }
        }
        let margins = self.gbdt.predict_margins(m)?;
        (0..m.n_rows)
            .into_par_iter()
            .map(|i| {
                self.route(
                    m.row(i),
                    self.calibrator.apply(margins[i]),
                    mode,
                    labels.map(|l| l[i]),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridFit {
    pub model: HybridModel,
    pub train_residuals: ResidualSet,
    pub oof_margins: Vec<f64>,
    pub validation_margins: Vec<f64>,
}

/// Margins for each training row from a model that never saw that row.
pub fn out_of_fold_margins(
    x: &FeatureMatrix,
    y: &[u8],
    config: GbdtConfig,
    folds: usize,
) -> Result<Vec<f64>> {
    if folds < 2 || folds > x.n_rows {
        return Err(Error::InvalidInput(format!(
            "{folds} folds for {} rows",
            x.n_rows
        )));
    }
    let mut order: Vec<usize> = (0..x.n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut fold_of = vec![0usize; x.n_rows];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let parts = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (held, kept): (Vec<usize>, Vec<usize>) =
                (0..x.n_rows).partition(|&i| fold_of[i] == f);
            let train = x.subset(&kept);
            let labels: Vec<u8> = kept.iter().map(|&i| y[i]).collect();
            let model = fit_gbdt(&train, &labels, config)?;
            let margins = model.predict_margins(&x.subset(&held))?;
            Ok(held.into_iter().zip(margins).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; x.n_rows];
    for (i, m) in parts.into_iter().flatten() {
        out[i] = m;
    }
    Ok(out)
}

/// Boost on `train`, calibrate on `validation`, find train residuals out of
/// fold and attach the kNN refiner. The returned model is in deployment mode.
pub fn fit_hybrid(
    train: &FeatureMatrix,
    validation: &FeatureMatrix,
    config: HybridConfig,
) -> Result<HybridFit> {
    config.band.validate()?;
    let gbdt = fit_gbdt(train, &train.labels, config.gbdt)?;
    let validation_margins = gbdt.predict_margins(validation)?;
    let calibrator = Calibrator::Platt(fit_platt(&validation_margins, &validation.labels)?);
    let oof_margins = out_of_fold_margins(train, &train.labels, config.gbdt, config.oof_folds)?;
    let probs: Vec<f64> = oof_margins.iter().map(|&m| calibrator.apply(m)).collect();
    let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
    let train_residuals = build_residual_set(&probs, &preds, &train.labels, config.band)?;
    let knn = if train_residuals.is_empty() {
        log::warn!("no training residuals; the hybrid reduces to the boosted model");
        None
    } else {
        match config.reference {
            KnnReference::AllTraining => Some(KnnModel::fit(
                train,
                &train.labels,
                config.k.min(train.n_rows),
            )?),
            KnnReference::ResidualsOnly => {
                let rows = train_residuals.indices();
                Some(KnnModel::fit_rows(
                    train,
                    &train.labels,
                    &rows,
                    config.k.min(rows.len()),
                )?)
            }
        }
    };
    Ok(HybridFit {
        model: HybridModel {
            gbdt,
            calibrator,
            knn,
            band: config.band,
            mode: HybridMode::Deployment,
        },
        train_residuals,
        oof_margins,
        validation_margins,
    })
}
