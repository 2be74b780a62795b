//! Request handling shared by the HTTP handlers and the command-line batch
//! modes. Both serialize through [`to_body`], so equal inputs give equal bytes.

use std::path::Path;

use gradrec::explain::attribute_path;
use gradrec::features::FEATURE_NAMES;
use gradrec::hybrid::{Band, HybridConfig};
use gradrec::io::read_json_file;
use gradrec::pipeline::{ModelBundle, TrainMetadata};
use gradrec::recommender::{
    recommend, ApplicantProfile, ApplicantQuery, CandidatePool, Preferences, RecommendationResult,
    Strategy,
};
use gradrec::records::{MAX_DECISION_YEAR, MAX_GPA, MIN_DECISION_YEAR};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    /// The body does not match the request schema.
    #[error("{field}: {message}")]
    Schema { field: String, message: String },
    /// Well-formed, but the values make no sense for this model.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("model is still loading")]
    NotReady,
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    fn invalid(field: &str, message: impl Into<String>) -> ApiError {
        ApiError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::Schema { .. } => "schema",
            ApiError::Invalid { .. } => "invalid",
            ApiError::NotReady => "not_ready",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ApiError::Schema { field, .. } | ApiError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl From<gradrec::Error> for ApiError {
    fn from(e: gradrec::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody<'a> {
    pub error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<&'a str>,
    pub message: String,
}

impl<'a> From<&'a ApiError> for ErrorBody<'a> {
    fn from(e: &'a ApiError) -> Self {
        let message = match e {
            ApiError::Schema { message, .. } | ApiError::Invalid { message, .. } => message.clone(),
            other => other.to_string(),
        };
        ErrorBody {
            error: e.kind(),
            field: e.field(),
            message,
        }
    }
}

/// Deserialize with the path of the offending field in the error.
pub fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        // Missing fields are reported against their parent; name the field itself.
        let at_root = path == "." || path == "?";
        let field = match message
            .strip_prefix("missing field `")
            .and_then(|m| m.split('`').next())
        {
            Some(name) if at_root => name.to_string(),
            Some(name) => format!("{path}.{name}"),
            None if at_root => "body".to_string(),
            None => path,
        };
        ApiError::Schema { field, message }
    })?;
    de.end().map_err(|e| ApiError::Schema {
        field: "body".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub fn to_body<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("response types always serialize")
}

/// The loaded model bundle and the candidate pool it scores against.
#[derive(Debug, Clone)]
pub struct Engine {
    pub bundle: ModelBundle,
    pub pool: CandidatePool,
}

impl Engine {
    pub fn new(bundle: ModelBundle, pool: CandidatePool) -> gradrec::Result<Engine> {
        bundle.check()?;
        Ok(Engine { bundle, pool })
    }

    pub fn load(bundle: &Path, pool: &Path) -> gradrec::Result<Engine> {
        Engine::new(ModelBundle::load(bundle)?, read_json_file(pool)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub applicant: ApplicantProfile,
    pub university: String,
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub university: String,
    pub program: String,
    pub probability: f64,
    pub label: u8,
    /// True when the kNN model refined a borderline boosted prediction.
    pub routed: bool,
    pub gbdt_probability: f64,
    pub base_margin: f64,
    pub margin: f64,
    /// Path attributions of the boosted margin, largest magnitude first.
    pub attributions: Vec<FeatureContribution>,
}

fn check_profile(a: &ApplicantProfile) -> Result<(), ApiError> {
    if !a.gpa.is_finite() || !(0.0..=MAX_GPA).contains(&a.gpa) {
        return Err(ApiError::invalid(
            "applicant.gpa",
            format!("GPA {} is outside [0, {MAX_GPA}]", a.gpa),
        ));
    }
    if !(MIN_DECISION_YEAR..=MAX_DECISION_YEAR).contains(&a.decision_year) {
        return Err(ApiError::invalid(
            "applicant.decision_year",
            format!(
                "year {} is outside [{MIN_DECISION_YEAR}, {MAX_DECISION_YEAR}]",
                a.decision_year
            ),
        ));
    }
    Ok(())
}

fn check_target(pool: &CandidatePool, university: &str, program: &str) -> Result<(), ApiError> {
    let u = pool.universities.get(university).ok_or_else(|| {
        ApiError::invalid(
            "university",
            format!("{university:?} is not in the candidate pool"),
        )
    })?;
    if !u.programs.contains_key(program) {
        return Err(ApiError::invalid(
            "program",
            format!("{university:?} does not offer {program:?}"),
        ));
    }
    Ok(())
}

pub fn predict(engine: &Engine, req: &PredictRequest) -> Result<PredictResponse, ApiError> {
    check_profile(&req.applicant)?;
    check_target(&engine.pool, &req.university, &req.program)?;
    let top_k = req.top_k.unwrap_or(DEFAULT_TOP_K);
    if top_k > FEATURE_NAMES.len() {
        return Err(ApiError::invalid(
            "top_k",
            format!("top_k {top_k} exceeds {} features", FEATURE_NAMES.len()),
        ));
    }
    let input = engine
        .pool
        .feature_input(&req.applicant, &req.university, &req.program)?;
    let x = engine.bundle.encode(&input)?;
    let pred = engine.bundle.predict_input(&input)?;
    let attr = attribute_path(engine.bundle.gbdt(), &x)?;
    let names = engine.bundle.schema.names();
    Ok(PredictResponse {
        id: req.id.clone(),
        university: req.university.clone(),
        program: req.program.clone(),
        probability: pred.proba,
        label: pred.label,
        routed: pred.routed,
        gbdt_probability: pred.gbdt_proba,
        base_margin: attr.base_value,
        margin: attr.prediction_margin,
        attributions: attr
            .top_k(top_k)
            .into_iter()
            .map(|(f, c)| FeatureContribution {
                feature: names[f].clone(),
                contribution: c,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub applicant: ApplicantProfile,
    pub university: String,
    pub program: String,
    pub strategy: Strategy,
    #[serde(default)]
    pub preferences: Preferences,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
}

impl RecommendRequest {
    pub fn from_query(query: ApplicantQuery, strategy: Strategy) -> RecommendRequest {
        RecommendRequest {
            id: query.id,
            applicant: query.applicant,
            university: query.university,
            program: query.program,
            strategy,
            preferences: query.preferences,
            p0: query.p0,
        }
    }

    pub fn query(&self) -> ApplicantQuery {
        ApplicantQuery {
            id: self.id.clone(),
            applicant: self.applicant.clone(),
            university: self.university.clone(),
            program: self.program.clone(),
            preferences: self.preferences,
            p0: self.p0,
        }
    }
}

pub fn recommend_one(
    engine: &Engine,
    req: &RecommendRequest,
) -> Result<RecommendationResult, ApiError> {
    check_profile(&req.applicant)?;
    check_target(&engine.pool, &req.university, &req.program)?;
    if let Some(p) = req.p0 {
        if !(0.0..=1.0).contains(&p) {
            return Err(ApiError::invalid("p0", format!("p0 {p} is outside [0, 1]")));
        }
    }
    Ok(recommend(
        &req.query(),
        &engine.pool,
        &engine.bundle,
        req.strategy,
    )?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UniversityQuery {
    pub program: Option<String>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversityItem {
    pub university: String,
    pub country: String,
    pub qs_rank: gradrec::enrichment::QsRank,
    pub status: gradrec::enrichment::UniversityStatus,
    pub gpa_requirement: f64,
    pub programs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversityPage {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<UniversityItem>,
}

pub fn universities(engine: &Engine, q: &UniversityQuery) -> Result<UniversityPage, ApiError> {
    let limit = q.limit.unwrap_or(DEFAULT_PAGE_LIMIT);
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        return Err(ApiError::invalid(
            "limit",
            format!("limit must be in 1..={MAX_PAGE_LIMIT}"),
        ));
    }
    let offset = q.offset.unwrap_or(0);
    let matching: Vec<UniversityItem> = engine
        .pool
        .universities
        .iter()
        .filter(|(_, u)| {
            q.program
                .as_ref()
                .is_none_or(|p| u.programs.contains_key(p))
        })
        .map(|(name, u)| UniversityItem {
            university: name.clone(),
            country: u.metrics.country.clone(),
            qs_rank: u.metrics.qs_rank,
            status: u.metrics.status,
            gpa_requirement: u.gpa_requirement,
            programs: match &q.program {
                Some(p) => vec![p.clone()],
                None => u.programs.keys().cloned().collect(),
            },
        })
        .collect();
    let total = matching.len();
    Ok(UniversityPage {
        program: q.program.clone(),
        total,
        offset,
        limit,
        items: matching.into_iter().skip(offset).take(limit).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelInfo<'a> {
    pub format: &'a str,
    pub version: u32,
    pub schema_fingerprint: &'a str,
    pub features: Vec<String>,
    pub calibrator: &'static str,
    pub band: Band,
    pub config: &'a HybridConfig,
    pub metadata: &'a TrainMetadata,
    pub pool_universities: usize,
}

pub fn model_info(engine: &Engine) -> ModelInfo<'_> {
    let b = &engine.bundle;
    ModelInfo {
        format: &b.format,
        version: b.version,
        schema_fingerprint: &b.schema_fingerprint,
        features: b.schema.names(),
        calibrator: b.hybrid.calibrator.name(),
        band: b.hybrid.band,
        config: &b.config,
        metadata: &b.metadata,
        pool_universities: engine.pool.universities.len(),
    }
}

/// Published request and response shapes.
pub const SCHEMA_DOCUMENT: &str = include_str!("schema.json");
