//! `gradrec`: run the admission-prediction pipeline stage by stage.
//!
//! Exit status is 0 on success, 1 on validation errors (bad flags, bad input
//! data, bad config) and 2 on runtime errors (I/O, bind failures).

mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradrec::datagen::{generate, US};
use gradrec::enrichment::{
    enrich, read_disciplines_csv, read_universities_csv, write_disciplines_csv,
    write_universities_csv, UniversityIndex,
};
use gradrec::explain::ImportanceMetric;
use gradrec::features::FeatureMatrix;
use gradrec::io::{read_json_file, read_jsonl_file, write_json_file, write_jsonl_file};
use gradrec::pipeline::{
    clean, compare_baselines, compare_calibrators, evaluate, featurize, recalibrate,
    rejected_queries, train_on, CalibrationMethod, ModelBundle, PreparedData,
};
use gradrec::recommender::{aggregate_stats, ApplicantQuery, CandidatePool, Strategy};
use gradrec::records::{parse_jsonl, CleanRecord};
use gradrec::reports;
use gradrec_service::api::{self, Engine, PredictRequest, RecommendRequest};
use serde::Serialize;
use serde_json::{json, Value};

use config::ConfigFile;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] gradrec::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(gradrec::Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Invalid(_) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "gradrec",
    version,
    about = "Admission prediction and alternative-university recommendation"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Random seed for every stage [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print nothing but errors
    #[arg(long, global = true, conflicts_with = "json")]
    quiet: bool,
    /// Print the run summary as JSON
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with university and discipline tables
    Datagen {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Parse raw JSONL, drop non-final rows, impute missing GPA
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_year: Option<i32>,
        /// Fail on the first malformed line instead of skipping it
        #[arg(long)]
        strict: bool,
    },
    /// Match universities and map programs to disciplines
    Enrich {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        universities: PathBuf,
        #[arg(long)]
        disciplines: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split, fit the feature schema and write matrices plus the candidate pool
    Featurize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the boosted model, calibrator and kNN refiner
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_estimators: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
        band: Option<Vec<f64>>,
    },
    /// Refit the calibrator on validation margins and compare both methods
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "platt")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test-split metrics for the boosted model and both hybrid modes
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Matrix CSV as written by `featurize`
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        test: Option<PathBuf>,
        /// Featurized directory; its test split is used
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score prediction requests with attributions, one JSON line per request
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recommend alternatives for a batch of applicant queries
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        /// JSONL of applicant queries
        #[arg(long)]
        batch: PathBuf,
        #[arg(long, value_enum, default_value = "hybrid")]
        strategy: StrategyArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Aggregate statistics across the batch
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Write one query per rejected applicant
    ExportRejected {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Data behind the diagnostic plots and summary tables
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
    /// Baseline classifiers against the bundle on the test split
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Subcommand, Debug)]
enum ReportKind {
    /// Per-row probabilities from each stage of the model
    Probs {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Principal-component projection of the test split
    Pca {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        components: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Permutation importance and mean attribution magnitude
    Importance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "accuracy")]
        metric: MetricArg,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Records and acceptance by decision year
    Yearly {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shallow decision tree on the training split, as split rules
    Tree {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
        #[arg(long, default_value_t = 20)]
        min_samples_leaf: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset composition and GPA distribution
    Summary {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    Platt,
    Isotonic,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum StrategyArg {
    UniversityOnly,
    ProgramOnly,
    Hybrid,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SplitArg {
    All,
    Train,
    Validation,
    Test,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MetricArg {
    Accuracy,
    RocAuc,
    NegLogLoss,
}

const POOL_FILE: &str = "pool.json";

struct Ctx {
    cfg: ConfigFile,
    quiet: bool,
    json: bool,
}

impl Ctx {
    /// Print a run summary in the selected output mode.
    fn summary(&self, title: &str, value: Value) {
        if self.quiet {
            return;
        }
        if self.json {
            println!(
                "{}",
                serde_json::to_string_pretty(&value).unwrap_or_default()
            );
            return;
        }
        println!("{title}");
        if let Value::Object(map) = value {
            for (k, v) in map {
                println!("  {k}: {v}");
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty JSON to `out`, or to standard output when no path is given.
fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => Ok(write_json_file(p, value)?),
        None => {
            let mut s = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut s, value).map_err(gradrec::Error::from)?;
            writeln!(s)?;
            Ok(())
        }
    }
}

fn line_sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

/// Name the path in I/O errors so the message says which file failed.
fn at<T>(path: &Path, r: gradrec::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        gradrec::Error::Io(io) => CliError::Runtime(format!("{}: {io}", path.display())),
        e => CliError::Core(e),
    })
}

fn open(path: &Path) -> Result<File> {
    at(path, File::open(path).map_err(gradrec::Error::Io))
}

fn load_bundle(path: &Path) -> Result<ModelBundle> {
    at(path, ModelBundle::load(path))
}

fn load_data(dir: &Path) -> Result<PreparedData> {
    at(dir, PreparedData::load_dir(dir))
}

fn load_engine(model: &Path, pool: &Path) -> Result<Engine> {
    Ok(Engine::new(
        load_bundle(model)?,
        at(pool, read_json_file(pool))?,
    )?)
}

fn datagen(ctx: &Ctx, out_dir: &Path, n: Option<usize>) -> Result<()> {
    let mut g = ctx.cfg.generator();
    if let Some(n) = n {
        g.n = n;
    }
    let corpus = generate(&g)?;
    std::fs::create_dir_all(out_dir)?;
    write_jsonl_file(&out_dir.join("corpus.jsonl"), &corpus.records)?;
    write_jsonl_file(&out_dir.join("truth.jsonl"), &corpus.truth)?;
    write_universities_csv(
        &corpus.universities,
        create(&out_dir.join("universities.csv"))?,
    )?;
    write_disciplines_csv(
        &corpus.disciplines,
        create(&out_dir.join("disciplines.csv"))?,
    )?;
    write_json_file(&out_dir.join("generator.json"), &g)?;
    let s = corpus.summary();
    write_json_file(&out_dir.join("summary.json"), &s)?;
    ctx.summary(
        "datagen",
        json!({
            "records": corpus.records.len(),
            "universities": corpus.universities.len(),
            "acceptance_rate": s.acceptance_rate,
            "gpa_median": s.gpa_median,
            "bayes_accuracy": s.bayes_accuracy,
        }),
    );
    Ok(())
}

fn ingest(ctx: &Ctx, input: &Path, out: &Path, min_year: Option<i32>, strict: bool) -> Result<()> {
    let parsed = parse_jsonl(BufReader::new(open(input)?));
    if strict {
        if let Some(e) = parsed.errors.first() {
            return Err(CliError::Invalid(format!(
                "{}: line {}: {}",
                input.display(),
                e.line,
                e.reason
            )));
        }
    }
    for e in &parsed.errors {
        log::warn!("{}: line {}: {}", input.display(), e.line, e.reason);
    }
    let mut p = ctx.cfg.pipeline();
    if let Some(y) = min_year {
        p.min_year = y;
    }
    let (kept, report) = clean(&parsed.records, &p)?;
    write_jsonl_file(out, &kept)?;
    ctx.summary(
        "ingest",
        json!({
            "parsed": parsed.records.len(),
            "malformed_lines": parsed.errors.len(),
            "unknown_fields": parsed.unknown_fields,
            "kept": kept.len(),
            "cleaning": report,
        }),
    );
    Ok(())
}

fn enrich_cmd(
    ctx: &Ctx,
    input: &Path,
    universities: &Path,
    disciplines: &Path,
    out: &Path,
) -> Result<()> {
    let records: Vec<CleanRecord> = at(input, read_jsonl_file(input))?;
    let profiles = read_universities_csv(open(universities)?)?;
    let dm = read_disciplines_csv(open(disciplines)?)?;
    let (enriched, report) = enrich(&records, &UniversityIndex::new(&profiles), &dm);
    write_jsonl_file(out, &enriched)?;
    ctx.summary(
        "enrich",
        serde_json::to_value(&report).map_err(gradrec::Error::from)?,
    );
    Ok(())
}

fn featurize_cmd(ctx: &Ctx, input: &Path, out_dir: &Path) -> Result<()> {
    let enriched = at(input, read_jsonl_file(input))?;
    let data = featurize(enriched, &ctx.cfg.pipeline())?;
    data.save_dir(out_dir)?;
    let pool = CandidatePool::build(&data.records, &data.records_at(&data.split.train))?;
    write_json_file(&out_dir.join(POOL_FILE), &pool)?;
    ctx.summary(
        "featurize",
        json!({
            "rows": data.report.rows,
            "train": data.report.train,
            "validation": data.report.validation,
            "test": data.report.test,
            "unmatched_dropped": data.report.unmatched_dropped,
            "schema_fingerprint": data.schema.fingerprint(),
            "pool_universities": pool.universities.len(),
        }),
    );
    Ok(())
}

fn train(ctx: &Ctx, data: &Path, out: &Path, flags: ConfigFile) -> Result<()> {
    let cfg = ctx.cfg.clone().overlay(&flags).hybrid()?;
    let d = load_data(data)?;
    let bundle = train_on(&d.schema, &d.train, &d.validation, cfg)?;
    bundle.save(out)?;
    let m = &bundle.metadata;
    ctx.summary(
        "train",
        json!({
            "trees": m.trees,
            "rejected_rounds": m.rejected_rounds,
            "final_train_loss": m.final_train_loss,
            "train_residuals": m.train_residuals,
            "schema_fingerprint": bundle.schema_fingerprint,
        }),
    );
    Ok(())
}

fn calibrate(ctx: &Ctx, model: &Path, data: &Path, method: Method, out: &Path) -> Result<()> {
    let bundle = load_bundle(model)?;
    let d = load_data(data)?;
    let method = match method {
        Method::Platt => CalibrationMethod::Platt,
        Method::Isotonic => CalibrationMethod::Isotonic,
    };
    let updated = recalibrate(&bundle, &d.validation, method)?;
    updated.save(out)?;
    let cmp = compare_calibrators(bundle.gbdt(), &d.validation, &d.test)?;
    ctx.summary(
        "calibrate",
        json!({ "calibrator": updated.hybrid.calibrator.name(), "brier": cmp }),
    );
    Ok(())
}

fn evaluate_cmd(
    model: &Path,
    test: Option<&Path>,
    data: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let bundle = load_bundle(model)?;
    let m = match (test, data) {
        (Some(t), _) => FeatureMatrix::read_csv(open(t)?)?,
        (None, Some(d)) => load_data(d)?.test,
        (None, None) => return Err(CliError::Invalid("evaluate needs --test or --data".into())),
    };
    let names = bundle.schema.names();
    if m.column_names != names {
        return Err(CliError::Invalid(format!(
            "matrix columns {:?} do not match the model schema {:?}",
            m.column_names, names
        )));
    }
    emit_json(&evaluate(&bundle, &m)?, out)
}

/// Apply `f` to each non-blank line; the output line is the response or error body.
fn batch_lines(
    input: &Path,
    out: Option<&Path>,
    mut f: impl FnMut(&[u8]) -> std::result::Result<Vec<u8>, api::ApiError>,
) -> Result<(usize, usize)> {
    let mut sink = line_sink(out)?;
    let (mut ok, mut failed) = (0, 0);
    for (i, line) in BufReader::new(open(input)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let body = match f(line.as_bytes()) {
            Ok(b) => {
                ok += 1;
                b
            }
            Err(e) => {
                failed += 1;
                log::warn!("{}: line {}: {e}", input.display(), i + 1);
                api::to_body(&api::ErrorBody::from(&e))
            }
        };
        sink.write_all(&body)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok((ok, failed))
}

fn explain(
    ctx: &Ctx,
    model: &Path,
    pool: &Path,
    requests: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let engine = load_engine(model, pool)?;
    let (ok, failed) = batch_lines(requests, out, |line| {
        let req: PredictRequest = api::parse(line)?;
        Ok(api::to_body(&api::predict(&engine, &req)?))
    })?;
    if out.is_some() {
        ctx.summary("explain", json!({ "scored": ok, "rejected": failed }));
    }
    Ok(())
}

fn recommend_cmd(
    ctx: &Ctx,
    model: &Path,
    pool: &Path,
    batch: &Path,
    strategy: StrategyArg,
    out: Option<&Path>,
    stats: Option<&Path>,
) -> Result<()> {
    let engine = load_engine(model, pool)?;
    let strategies: Vec<Strategy> = match strategy {
        StrategyArg::UniversityOnly => vec![Strategy::UniversityOnly],
        StrategyArg::ProgramOnly => vec![Strategy::ProgramOnly],
        StrategyArg::Hybrid => vec![Strategy::Hybrid],
        StrategyArg::All => Strategy::ALL.to_vec(),
    };
    let mut results: BTreeMap<Strategy, Vec<_>> = BTreeMap::new();
    let (ok, failed) = batch_lines(batch, out, |line| {
        let q: ApplicantQuery = api::parse(line)?;
        let mut bodies = Vec::new();
        for &s in &strategies {
            let r = api::recommend_one(&engine, &RecommendRequest::from_query(q.clone(), s))?;
            bodies.push(api::to_body(&r));
            results.entry(s).or_default().push(r);
        }
        Ok(bodies.join(&b'\n'))
    })?;
    let agg = aggregate_stats(&results);
    if let Some(p) = stats {
        write_json_file(p, &agg)?;
    }
    if out.is_some() {
        ctx.summary(
            "recommend",
            json!({ "queries": ok, "rejected": failed, "stats": agg }),
        );
    }
    Ok(())
}

fn export_rejected(ctx: &Ctx, data: &Path, split: SplitArg, out: &Path) -> Result<()> {
    let d = load_data(data)?;
    let rows: Vec<usize> = match split {
        SplitArg::All => (0..d.records.len()).collect(),
        SplitArg::Train => d.split.train.clone(),
        SplitArg::Validation => d.split.validation.clone(),
        SplitArg::Test => d.split.test.clone(),
    };
    let queries = rejected_queries(&d.records, rows);
    write_jsonl_file(out, &queries)?;
    ctx.summary("export-rejected", json!({ "queries": queries.len() }));
    Ok(())
}

fn report(ctx: &Ctx, kind: &ReportKind) -> Result<()> {
    match kind {
        ReportKind::Probs { model, data, out } => {
            let rows = reports::probability_rows(&load_bundle(model)?, &load_data(data)?.test)?;
            let mut sink = line_sink(out.as_deref())?;
            for r in &rows {
                serde_json::to_writer(&mut sink, r).map_err(gradrec::Error::from)?;
                sink.write_all(b"\n")?;
            }
            sink.flush()?;
            Ok(())
        }
        ReportKind::Pca {
            model,
            data,
            components,
            out,
        } => emit_json(
            &reports::pca_report(&load_bundle(model)?, &load_data(data)?.test, *components)?,
            out.as_deref(),
        ),
        ReportKind::Importance {
            model,
            data,
            metric,
            repeats,
            out,
        } => {
            let metric = match metric {
                MetricArg::Accuracy => ImportanceMetric::Accuracy,
                MetricArg::RocAuc => ImportanceMetric::RocAuc,
                MetricArg::NegLogLoss => ImportanceMetric::NegLogLoss,
            };
            let r = reports::importance_report(
                &load_bundle(model)?,
                &load_data(data)?.test,
                metric,
                *repeats,
                ctx.cfg.seed(),
            )?;
            emit_json(&r, out.as_deref())
        }
        ReportKind::Yearly { data, out } => emit_json(
            &reports::yearly_report(&load_data(data)?.records),
            out.as_deref(),
        ),
        ReportKind::Tree {
            data,
            max_depth,
            min_samples_leaf,
            out,
        } => {
            let t =
                reports::threshold_tree(&load_data(data)?.train, *max_depth, *min_samples_leaf)?;
            if !ctx.quiet && !ctx.json && out.is_some() {
                for rule in &t.rules {
                    println!("{rule}");
                }
            }
            emit_json(&t, out.as_deref())
        }
        ReportKind::Summary { data, out } => emit_json(
            &reports::dataset_summary(&load_data(data)?.records, US),
            out.as_deref(),
        ),
    }
}

fn compare(ctx: &Ctx, model: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let bundle = load_bundle(model)?;
    let d = load_data(data)?;
    let baselines = compare_baselines(&d, &bundle, ctx.cfg.seed())?;
    let calibration = compare_calibrators(bundle.gbdt(), &d.validation, &d.test)?;
    emit_json(
        &json!({ "baselines": baselines, "calibration": calibration }),
        out,
    )
}

fn serve(model: &Path, pool: &Path, addr: &str) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let state = gradrec_service::AppState::loading();
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        log::info!("listening on {}", listener.local_addr()?);
        let loader = state.clone();
        let (model, pool) = (model.to_path_buf(), pool.to_path_buf());
        // Requests get 503 until the bundle is in place.
        let load = tokio::task::spawn_blocking(move || {
            Engine::load(&model, &pool).map(|e| loader.install(e))
        });
        let server = tokio::spawn(gradrec_service::serve(listener, state));
        load.await.map_err(|e| CliError::Runtime(e.to_string()))??;
        log::info!("model loaded");
        server
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))??;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if cli.global.seed.is_some() {
        cfg.seed = cli.global.seed;
    }
    let ctx = Ctx {
        cfg,
        quiet: cli.global.quiet,
        json: cli.global.json,
    };
    match &cli.command {
        Command::Datagen { out_dir, n } => datagen(&ctx, out_dir, *n),
        Command::Ingest {
            input,
            out,
            min_year,
            strict,
        } => ingest(&ctx, input, out, *min_year, *strict),
        Command::Enrich {
            input,
            universities,
            disciplines,
            out,
        } => enrich_cmd(&ctx, input, universities, disciplines, out),
        Command::Featurize { input, out_dir } => featurize_cmd(&ctx, input, out_dir),
        Command::Train {
            data,
            out,
            n_estimators,
            learning_rate,
            max_depth,
            k,
            band,
        } => {
            let flags = ConfigFile {
                n_estimators: *n_estimators,
                learning_rate: *learning_rate,
                max_depth: *max_depth,
                k: *k,
                band: band.as_ref().map(|b| (b[0], b[1])),
                ..Default::default()
            };
            train(&ctx, data, out, flags)
        }
        Command::Calibrate {
            model,
            data,
            method,
            out,
        } => calibrate(&ctx, model, data, *method, out),
        Command::Evaluate {
            model,
            test,
            data,
            out,
        } => evaluate_cmd(model, test.as_deref(), data.as_deref(), out.as_deref()),
        Command::Explain {
            model,
            pool,
            requests,
            out,
        } => explain(&ctx, model, pool, requests, out.as_deref()),
        Command::Recommend {
            model,
            pool,
            batch,
            strategy,
            out,
            stats,
        } => recommend_cmd(
            &ctx,
            model,
            pool,
            batch,
            *strategy,
            out.as_deref(),
            stats.as_deref(),
        ),
        Command::ExportRejected { data, split, out } => export_rejected(&ctx, data, *split, out),
        Command::Report { kind } => report(&ctx, kind),
        Command::Compare { model, data, out } => compare(&ctx, model, data, out.as_deref()),
        Command::Serve { model, pool, addr } => serve(model, pool, addr),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.global.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // Output piped into `head` and similar.
        Err(CliError::Core(gradrec::Error::Io(e)))
            if e.kind() == std::io::ErrorKind::BrokenPipe =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
