use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use gradrec::datagen::{generate, GeneratorConfig};
use gradrec::hybrid::HybridConfig;
use gradrec::pipeline::{discipline_map, prepare, rejected_queries, train_bundle, PipelineConfig};
use gradrec::recommender::{recommend, CandidatePool, Strategy};
use gradrec_service::api::{self, RecommendRequest};
use gradrec_service::{router, AppState, Engine};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    engine: Engine,
    queries: Vec<gradrec::recommender::ApplicantQuery>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = generate(&GeneratorConfig {
            n: 2000,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let dm = discipline_map(&corpus.disciplines).unwrap();
        let data = prepare(
            &corpus.records,
            &corpus.universities,
            &dm,
            &PipelineConfig::default(),
        )
        .unwrap();
        let mut cfg = HybridConfig::default();
        cfg.gbdt.n_estimators = 30;
        cfg.oof_folds = 3;
        let bundle = train_bundle(&data, cfg).unwrap();
        let pool =
            CandidatePool::build(&data.records, &data.records_at(&data.split.train)).unwrap();
        let queries = rejected_queries(&data.records, data.split.test.iter().copied())
            .into_iter()
            .take(12)
            .collect();
        Fixture {
            engine: Engine::new(bundle, pool).unwrap(),
            queries,
        }
    })
}

fn ready() -> AppState {
    AppState::ready(fixture().engine.clone())
}

async fn call(
    state: AppState,
    method: &str,
    uri: &str,
    body: Option<Vec<u8>>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

async fn post(state: AppState, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, b) = call(state, "POST", uri, Some(serde_json::to_vec(&body).unwrap())).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn predict_body() -> Value {
    let q = &fixture().queries[0];
    json!({
        "applicant": q.applicant,
        "university": q.university,
        "program": q.program,
    })
}

#[tokio::test]
async fn model_routes_answer_503_until_loaded() {
    let state = AppState::loading();
    let (s, b) = call(state.clone(), "GET", "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    let health: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(health["ready"], false);
    assert_eq!(health["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(
        call(state.clone(), "GET", "/api/v1/model", None).await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    assert_eq!(
        post(state.clone(), "/api/v1/predict", predict_body())
            .await
            .0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    assert_eq!(
        call(state.clone(), "GET", "/api/v1/universities", None)
            .await
            .0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    // The schema document does not depend on the model.
    assert_eq!(
        call(state.clone(), "GET", "/api/v1/schema", None).await.0,
        StatusCode::OK
    );

    assert!(state.install(fixture().engine.clone()));
    assert!(!state.install(fixture().engine.clone()));
    let (s, b) = call(state.clone(), "GET", "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap()["ready"], true);
    assert_eq!(
        post(state, "/api/v1/predict", predict_body()).await.0,
        StatusCode::OK
    );
}

#[tokio::test]
async fn predict_returns_probability_and_attributions() {
    let (s, v) = post(ready(), "/api/v1/predict", predict_body()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let p = v["probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(v["routed"].is_boolean());
    let attrs = v["attributions"].as_array().unwrap();
    assert_eq!(attrs.len(), api::DEFAULT_TOP_K);
    let mags: Vec<f64> = attrs
        .iter()
        .map(|a| a["contribution"].as_f64().unwrap().abs())
        .collect();
    assert!(mags.windows(2).all(|w| w[0] >= w[1]));

    let mut body = predict_body();
    body["top_k"] = json!(2);
    let (_, v) = post(ready(), "/api/v1/predict", body).await;
    assert_eq!(v["attributions"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn out_of_range_gpa_is_422_naming_the_field() {
    let mut body = predict_body();
    body["applicant"]["gpa"] = json!(7.0);
    let (s, v) = post(ready(), "/api/v1/predict", body.clone()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "invalid");
    assert_eq!(v["field"], "applicant.gpa");
    assert!(v["message"].as_str().unwrap().contains('7'));

    let mut rec = body;
    rec["strategy"] = json!("hybrid");
    let (s, v) = post(ready(), "/api/v1/recommend", rec).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["field"], "applicant.gpa");
}

#[tokio::test]
async fn semantic_errors_name_their_field() {
    let cases = [
        ("/university", json!("Nowhere Institute"), "university"),
        ("/program", json!("Underwater Basket Weaving"), "program"),
        (
            "/applicant/decision_year",
            json!(1850),
            "applicant.decision_year",
        ),
        ("/top_k", json!(99), "top_k"),
    ];
    for (pointer, value, field) in cases {
        let mut body = predict_body();
        if pointer == "/top_k" {
            body["top_k"] = value;
        } else {
            *body.pointer_mut(pointer).unwrap() = value;
        }
        let (s, v) = post(ready(), "/api/v1/predict", body).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{field}: {v}");
        assert_eq!(v["field"], field);
    }
}

#[tokio::test]
async fn schema_violations_are_400_with_field_paths() {
    let mut missing = predict_body();
    missing["applicant"].as_object_mut().unwrap().remove("gpa");
    let mut wrong_type = predict_body();
    wrong_type["applicant"]["gpa"] = json!("high");
    let mut bad_enum = predict_body();
    bad_enum["applicant"]["degree_type"] = json!("bachelor");
    // Label-dependent routing has no way in over the wire.
    let mut leaked = predict_body();
    leaked["label"] = json!(1);
    let mut no_program = predict_body();
    no_program.as_object_mut().unwrap().remove("program");
    for (body, field) in [
        (missing, "applicant.gpa"),
        (wrong_type, "applicant.gpa"),
        (bad_enum, "applicant.degree_type"),
        (leaked, "label"),
        (no_program, "program"),
    ] {
        let (s, v) = post(ready(), "/api/v1/predict", body).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
        assert_eq!(v["error"], "schema");
        assert_eq!(v["field"], field, "{v}");
    }
    let (s, b) = call(
        ready(),
        "POST",
        "/api/v1/predict",
        Some(b"{not json".to_vec()),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_slice::<Value>(&b).unwrap()["field"],
        "body"
    );
    let (s, _) = call(ready(), "POST", "/api/v1/predict", Some(b"{} {}".to_vec())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn recommend_matches_the_library_byte_for_byte() {
    let f = fixture();
    for strategy in Strategy::ALL {
        for q in &f.queries {
            let req = RecommendRequest::from_query(q.clone(), strategy);
            let direct = recommend(q, &f.engine.pool, &f.engine.bundle, strategy).unwrap();
            let (s, body) = call(
                ready(),
                "POST",
                "/api/v1/recommend",
                Some(api::to_body(&req)),
            )
            .await;
            assert_eq!(s, StatusCode::OK);
            assert_eq!(body, api::to_body(&direct));
            let (_, again) = call(
                ready(),
                "POST",
                "/api/v1/recommend",
                Some(api::to_body(&req)),
            )
            .await;
            assert_eq!(body, again);
        }
    }
}

#[tokio::test]
async fn recommend_without_candidates_returns_empty_list_and_audit() {
    let q = &fixture().queries[0];
    let body = json!({
        "applicant": q.applicant,
        "university": q.university,
        "program": q.program,
        "strategy": "university_only",
        "p0": 1.0,
    });
    let (s, v) = post(ready(), "/api/v1/recommend", body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["entries"], json!([]));
    let audit = &v["audit"];
    let considered = audit["considered"].as_u64().unwrap();
    let removed: u64 = [
        "eliminated_gpa",
        "eliminated_affordability",
        "not_improving",
    ]
    .iter()
    .map(|k| audit[*k].as_u64().unwrap())
    .sum();
    assert_eq!(considered, removed);
}

#[tokio::test]
async fn universities_filter_and_page() {
    let f = fixture();
    let program = &f.queries[0].program;
    let offering = f.engine.pool.offering(program).count();
    let uri = format!(
        "/api/v1/universities?program={}",
        program.replace(' ', "%20")
    );
    let (s, b) = call(ready(), "GET", &uri, None).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["total"], offering);
    assert!(v["items"]
        .as_array()
        .unwrap()
        .iter()
        .all(|i| i["programs"] == json!([program])));

    let (_, b) = call(
        ready(),
        "GET",
        "/api/v1/universities?offset=3&limit=4",
        None,
    )
    .await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["total"], f.engine.pool.universities.len());
    let names: Vec<&str> = v["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["university"].as_str().unwrap())
        .collect();
    let expected: Vec<&str> = f
        .engine
        .pool
        .universities
        .keys()
        .skip(3)
        .take(4)
        .map(String::as_str)
        .collect();
    assert_eq!(names, expected);

    let (_, b) = call(ready(), "GET", "/api/v1/universities?program=nothing", None).await;
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap()["total"], 0);
    assert_eq!(
        call(ready(), "GET", "/api/v1/universities?limit=abc", None)
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(ready(), "GET", "/api/v1/universities?limit=0", None)
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

#[tokio::test]
async fn model_and_schema_documents() {
    let f = fixture();
    let (s, b) = call(ready(), "GET", "/api/v1/model", None).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["schema_fingerprint"], f.engine.bundle.schema_fingerprint);
    assert_eq!(
        v["features"].as_array().unwrap().len(),
        gradrec::features::N_FEATURES
    );
    assert_eq!(v["metadata"]["trees"], f.engine.bundle.metadata.trees);

    let (_, b) = call(ready(), "GET", "/api/v1/schema", None).await;
    let doc: Value = serde_json::from_slice(&b).unwrap();
    let endpoints = doc["endpoints"].as_object().unwrap();
    for route in [
        "POST /api/v1/predict",
        "POST /api/v1/recommend",
        "GET /api/v1/universities",
        "GET /api/v1/model",
        "GET /healthz",
    ] {
        assert!(endpoints.contains_key(route), "{route}");
    }
    // Every documented request property is accepted by the request type.
    let props = doc["endpoints"]["POST /api/v1/predict"]["request"]["properties"]
        .as_object()
        .unwrap();
    let mut full = predict_body();
    full["id"] = json!("x");
    full["top_k"] = json!(3);
    assert_eq!(
        props.keys().collect::<Vec<_>>().len(),
        full.as_object().unwrap().len()
    );
    for k in props.keys() {
        assert!(full.get(k).is_some(), "{k}");
    }
    assert_eq!(
        post(ready(), "/api/v1/predict", full).await.0,
        StatusCode::OK
    );
}
