//! Experiment configuration: a JSON file of optional settings, then flags on top.

use std::path::Path;

use gradrec::datagen::GeneratorConfig;
use gradrec::hybrid::{Band, HybridConfig, KnnReference};
use gradrec::pipeline::PipelineConfig;
use gradrec::records::ImputeStrategy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,

    pub n: Option<usize>,
    pub n_universities: Option<usize>,
    pub noise_rows: Option<usize>,

    pub min_year: Option<i32>,
    pub impute_gpa: Option<f64>,
    pub min_program_count_for_missing_gpa: Option<usize>,
    pub split: Option<(f64, f64, f64)>,

    pub n_estimators: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub subsample: Option<f64>,
    pub colsample_bytree: Option<f64>,
    pub reg_alpha: Option<f64>,
    pub reg_lambda: Option<f64>,
    pub min_child_weight: Option<f64>,
    pub k: Option<usize>,
    pub band: Option<(f64, f64)>,
    pub knn_reference: Option<KnnReference>,
    pub oof_folds: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> gradrec::Result<ConfigFile> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| gradrec::Error::InvalidInput(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: &ConfigFile) -> ConfigFile {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            seed,
            n,
            n_universities,
            noise_rows,
            min_year,
            impute_gpa,
            min_program_count_for_missing_gpa,
            split,
            n_estimators,
            learning_rate,
            max_depth,
            subsample,
            colsample_bytree,
            reg_alpha,
            reg_lambda,
            min_child_weight,
            k,
            band,
            knn_reference,
            oof_folds
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    pub fn generator(&self) -> GeneratorConfig {
        let d = GeneratorConfig::default();
        GeneratorConfig {
            n: self.n.unwrap_or(d.n),
            seed: self.seed(),
            n_universities: self.n_universities.unwrap_or(d.n_universities),
            noise_rows: self.noise_rows.unwrap_or(d.noise_rows),
            ..d
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let d = PipelineConfig::default();
        PipelineConfig {
            min_year: self.min_year.unwrap_or(d.min_year),
            impute: self
                .impute_gpa
                .map_or(d.impute, ImputeStrategy::MedianConstant),
            min_program_count_for_missing_gpa: self
                .min_program_count_for_missing_gpa
                .unwrap_or(d.min_program_count_for_missing_gpa),
            split: self.split.unwrap_or(d.split),
            seed: self.seed(),
        }
    }

    pub fn hybrid(&self) -> gradrec::Result<HybridConfig> {
        let d = HybridConfig::default();
        let g = d.gbdt;
        let band = match self.band {
            Some((lo, hi)) => Band::new(lo, hi)?,
            None => d.band,
        };
        let mut cfg = HybridConfig {
            k: self.k.unwrap_or(d.k),
            band,
            reference: self.knn_reference.unwrap_or(d.reference),
            oof_folds: self.oof_folds.unwrap_or(d.oof_folds),
            ..d
        };
        cfg.gbdt.n_estimators = self.n_estimators.unwrap_or(g.n_estimators);
        cfg.gbdt.learning_rate = self.learning_rate.unwrap_or(g.learning_rate);
        cfg.gbdt.max_depth = self.max_depth.unwrap_or(g.max_depth);
        cfg.gbdt.subsample = self.subsample.unwrap_or(g.subsample);
        cfg.gbdt.colsample_bytree = self.colsample_bytree.unwrap_or(g.colsample_bytree);
        cfg.gbdt.reg_alpha = self.reg_alpha.unwrap_or(g.reg_alpha);
        cfg.gbdt.reg_lambda = self.reg_lambda.unwrap_or(g.reg_lambda);
        cfg.gbdt.min_child_weight = self.min_child_weight.unwrap_or(g.min_child_weight);
        cfg.gbdt.seed = self.seed();
        cfg.gbdt.validate()?;
        if cfg.k == 0 || cfg.oof_folds < 2 {
            return Err(gradrec::Error::InvalidInput(
                "k must be positive and oof_folds at least 2".into(),
            ));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file = ConfigFile {
            seed: Some(7),
            n_estimators: Some(10),
            k: Some(5),
            ..Default::default()
        };
        let flags = ConfigFile {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overlay(&flags);
        assert_eq!(merged.seed(), 9);
        let h = merged.hybrid().unwrap();
        assert_eq!((h.gbdt.n_estimators, h.k, h.gbdt.seed), (10, 5, 9));
    }

    #[test]
    fn defaults_match_the_library() {
        let c = ConfigFile::default();
        assert_eq!(c.hybrid().unwrap(), HybridConfig::default());
        assert_eq!(c.pipeline(), PipelineConfig::default());
        assert_eq!(c.generator(), GeneratorConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"trees": 5}"#).is_err());
        let bad = ConfigFile {
            band: Some((0.7, 0.3)),
            ..Default::default()
        };
        assert!(bad.hybrid().is_err());
        let bad = ConfigFile {
            learning_rate: Some(0.0),
            ..Default::default()
        };
        assert!(bad.hybrid().is_err());
    }
}
