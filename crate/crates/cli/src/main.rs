//! `killfie`: config-driven pipeline for characterizing selfie casualties
//! and classifying dangerous selfies.
//!
//! Exit codes: 0 ok, 2 config error, 3 provider error, 4 data error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use killfie_core::corpus::annotations::{load_annotations, ratings_matrix};
use killfie_core::corpus::incidents::{load_incidents, shipped_fixture, BreakdownDimension};
use killfie_core::corpus::{load_tweets, CorpusFormat};
use killfie_core::error::Error as CoreError;
use killfie_core::learn::{
    cross_validate, metrics as eval_metrics, train, FeatureBlock, FeatureConfig, FeatureMatrix,
    Imputer,
};
use killfie_core::pipeline::config::PipelineConfig;
use killfie_core::pipeline::demo::{generate_demo, DemoSpec};
use killfie_core::pipeline::featurize::{build_rows, corpus_features};
use killfie_core::pipeline::{
    build_services, emit_report, family_grid, run_pipeline, single_spec, ReportKind,
};
use killfie_core::stats::{ecdf_export, fleiss_kappa, ks_two_sample, Kappa};
use killfie_core::textfeat::{
    fit_vocab, tfidf, tokenize, DocumentEmbedder, HashingEmbedder, Vocabulary,
};

#[derive(Parser)]
#[command(
    name = "killfie",
    version,
    about = "Dangerous-selfie analysis pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a tweet corpus file into canonical JSONL plus a reject report.
    Ingest(IngestArgs),
    /// Incident database operations.
    Incidents(IncidentsArgs),
    /// Compute location features for a corpus.
    Geofeat(GeofeatArgs),
    /// Tokenize and vectorize tweet text or captions.
    Textfeat(TextfeatArgs),
    /// Two-sample KS test on one feature column split by labels.
    Ks(KsArgs),
    /// Fleiss' kappa over a common annotation set.
    Kappa(KappaArgs),
    /// Train one classifier on a feature matrix and save the model.
    Train(TrainArgs),
    /// Cross-validate classifiers on a feature matrix.
    Cv(CvArgs),
    /// Run the full pipeline from a config file.
    Run(RunArgs),
    /// Print the overall classification matrix from a finished run.
    Table4(OutDirArgs),
    /// Print one per-risk classification column from a finished run.
    RiskCv(RiskCvArgs),
    /// Locate report artifacts from a finished run.
    Report(ReportArgs),
    /// Generate a self-contained offline demo workspace.
    Demo(DemoArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    tweets: PathBuf,
    #[arg(long, default_value = "jsonl")]
    format: String,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the reject report (default: <out>.rejects.jsonl).
    #[arg(long)]
    rejects: Option<PathBuf>,
}

#[derive(Args)]
struct IncidentsArgs {
    #[command(subcommand)]
    command: IncidentsCommand,
}

#[derive(Subcommand)]
enum IncidentsCommand {
    /// Aggregate counts along one dimension.
    Stats(IncidentStatsArgs),
}

#[derive(Args)]
struct IncidentStatsArgs {
    /// country | reason | group_size | gender | age_band
    #[arg(long)]
    by: String,
    /// Incidents CSV; omit to use the shipped fixture.
    #[arg(long)]
    incidents: Option<PathBuf>,
}

#[derive(Args)]
struct GeofeatArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Pipeline config supplying the provider and feature settings.
    #[arg(long)]
    config: PathBuf,
    /// Override the provider mode (offline | http).
    #[arg(long)]
    providers: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Override requests/second for HTTP providers.
    #[arg(long)]
    rate_limit: Option<f64>,
}

#[derive(Args)]
struct TextfeatArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// text | captions
    #[arg(long, default_value = "text")]
    field: String,
    /// Output prefix: writes <out>.tfidf.txt and <out>.emb.csv.
    #[arg(long)]
    out: PathBuf,
    /// Fit a vocabulary on this corpus and save it here.
    #[arg(long)]
    fit_vocab: Option<PathBuf>,
    /// Use an existing vocabulary instead of fitting.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    min_df: usize,
    #[arg(long, default_value_t = 20_000)]
    max_features: usize,
}

#[derive(Args)]
struct KsArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    column: String,
    /// CSV with id,label rows; labels dangerous/not_dangerous or 1/0.
    #[arg(long)]
    labels: PathBuf,
    /// Where to write the two ECDF CSVs (default: next to the features).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct KappaArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// File with one tweet id per line: the common set.
    #[arg(long)]
    common_set: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Comma-separated blocks: text,image,location.
    #[arg(long, default_value = "text,image,location")]
    blocks: String,
    /// rf | knn | svm | tree (or full names).
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "text,image,location")]
    blocks: String,
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    inner_k: usize,
    /// default (full hyperparameter grid) | single (one fixed spec).
    #[arg(long, default_value = "default")]
    grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed (writes a derived config next to the original).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OutDirArgs {
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RiskCvArgs {
    /// water | height | vehicle
    #[arg(long)]
    risk: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// table4 | table5 | ecdf | incidents
    #[arg(long)]
    kind: String,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<CoreError>() {
        Some(CoreError::Config(_)) => 2,
        Some(CoreError::Provider { .. }) => 3,
        Some(CoreError::Data(_))
        | Some(CoreError::Learn(_))
        | Some(CoreError::Csv(_))
        | Some(CoreError::Json(_)) => 4,
        _ => 1,
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Incidents(args) => match args.command {
            IncidentsCommand::Stats(args) => cmd_incident_stats(args),
        },
        Command::Geofeat(args) => cmd_geofeat(args),
        Command::Textfeat(args) => cmd_textfeat(args),
        Command::Ks(args) => cmd_ks(args),
        Command::Kappa(args) => cmd_kappa(args),
        Command::Train(args) => cmd_train(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Run(args) => cmd_run(args),
        Command::Table4(args) => cmd_table4(args),
        Command::RiskCv(args) => cmd_risk_cv(args),
        Command::Report(args) => cmd_report(args),
        Command::Demo(args) => cmd_demo(args),
    }
}

fn parse_format(s: &str) -> anyhow::Result<CorpusFormat> {
    match s {
        "jsonl" => Ok(CorpusFormat::Jsonl),
        "csv" => Ok(CorpusFormat::Csv),
        other => Err(CoreError::config(format!("unknown corpus format {other:?}")).into()),
    }
}

fn cmd_ingest(args: IngestArgs) -> anyhow::Result<()> {
    let format = parse_format(&args.format)?;
    let outcome = load_tweets(&args.tweets, format)?;
    outcome.corpus.save_jsonl(&args.out)?;
    let rejects_path = args
        .rejects
        .unwrap_or_else(|| args.out.with_extension("rejects.jsonl"));
    killfie_core::corpus::save_rejects(&outcome.rejects, &rejects_path)?;
    let stats = killfie_core::corpus::corpus_stats(&outcome.corpus);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    eprintln!(
        "ingested {} tweets, {} rejected (report: {})",
        outcome.corpus.len(),
        outcome.rejects.len(),
        rejects_path.display()
    );
    Ok(())
}

fn cmd_incident_stats(args: IncidentStatsArgs) -> anyhow::Result<()> {
    let set = match &args.incidents {
        Some(path) => load_incidents(path)?,
        None => shipped_fixture(),
    };
    let dimension: BreakdownDimension = args.by.parse()?;
    let table = set.breakdown(dimension);
    for (key, count) in &table {
        println!("{key},{count}");
    }
    eprintln!(
        "total deaths: {}, incidents: {}, group incidents: {}",
        set.total_deaths(),
        set.len(),
        set.group_incidents()
    );
    Ok(())
}

fn cmd_geofeat(args: GeofeatArgs) -> anyhow::Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(mode) = &args.providers {
        config.providers.mode = match mode.as_str() {
            "offline" => killfie_core::pipeline::config::ProviderMode::Offline,
            "http" => killfie_core::pipeline::config::ProviderMode::Http,
            other => {
                return Err(CoreError::config(format!("unknown provider mode {other:?}")).into())
            }
        };
        config.validate()?;
    }
    if let Some(dir) = &args.cache_dir {
        config.paths.cache_dir = dir.clone();
    }
    if let Some(rate) = args.rate_limit {
        config.providers.rate_limit_per_s = rate;
    }
    let seed = args.seed.unwrap_or(config.seed);
    let (services, _) = build_services(&config)?;
    let corpus = load_tweets(&args.corpus, CorpusFormat::Jsonl)?.corpus;
    let rows = build_rows(
        corpus.records(),
        &services,
        &config.features.geo,
        config.features.embed_dim,
        seed,
    )?;
    let features = corpus_features(&rows, &config.features.vocab)?;
    features.location.write_csv(&features.ids, &args.out)?;
    eprintln!(
        "wrote {} rows to {}",
        features.ids.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_textfeat(args: TextfeatArgs) -> anyhow::Result<()> {
    let corpus = load_tweets(&args.corpus, CorpusFormat::Jsonl)?.corpus;
    let docs: Vec<(String, Vec<String>)> = corpus
        .records()
        .iter()
        .map(|r| {
            let tokens = match args.field.as_str() {
                "captions" => r
                    .captions
                    .as_ref()
                    .map(|c| tokenize(&c.join(" ")))
                    .unwrap_or_default(),
                _ => tokenize(&r.text),
            };
            (r.id.clone(), tokens)
        })
        .collect();

    let vocab = match (&args.vocab, &args.fit_vocab) {
        (Some(path), _) => Vocabulary::load_json(path)?,
        (None, fit_out) => {
            let streams: Vec<Vec<String>> = docs.iter().map(|(_, t)| t.clone()).collect();
            let vocab = fit_vocab(&streams, args.min_df, args.max_features)?;
            if let Some(path) = fit_out {
                vocab.save_json(path)?;
                eprintln!(
                    "vocabulary ({} terms) saved to {}",
                    vocab.len(),
                    path.display()
                );
            }
            vocab
        }
    };

    let embedder = HashingEmbedder::new(args.dim, args.seed)?;
    let tfidf_path = args.out.with_extension("tfidf.txt");
    let emb_path = args.out.with_extension("emb.csv");
    let mut sparse = String::new();
    let mut wtr = csv::Writer::from_path(&emb_path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..args.dim).map(|i| format!("e{i}")));
    wtr.write_record(&header)?;
    for (id, tokens) in &docs {
        sparse.push_str(id);
        sparse.push('\t');
        sparse.push_str(&tfidf(tokens, &vocab).to_text());
        sparse.push('\n');
        let mut rec = vec![id.clone()];
        rec.extend(embedder.embed(tokens).iter().map(|v| format!("{v:?}")));
        wtr.write_record(&rec)?;
    }
    std::fs::write(&tfidf_path, sparse)?;
    wtr.flush()?;
    eprintln!("wrote {} and {}", tfidf_path.display(), emb_path.display());
    Ok(())
}

fn read_labels(path: &Path) -> anyhow::Result<Vec<(String, bool)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(CoreError::data(format!(
                "{} row {}: expected id,label",
                path.display(),
                i + 2
            ))
            .into());
        }
        let label = match rec[1].trim() {
            "1" | "true" | "dangerous" => true,
            "0" | "false" | "not_dangerous" => false,
            other => {
                return Err(
                    CoreError::data(format!("unknown label {other:?} on row {}", i + 2)).into(),
                )
            }
        };
        out.push((rec[0].to_string(), label));
    }
    Ok(out)
}

/// Join a feature CSV with an id,label CSV; order follows the features file.
fn load_dataset(features: &Path, labels: &Path) -> anyhow::Result<(FeatureMatrix<f64>, Vec<bool>)> {
    let (ids, matrix) = FeatureMatrix::read_csv(features)?;
    let label_map: std::collections::BTreeMap<String, bool> =
        read_labels(labels)?.into_iter().collect();
    let mut y = Vec::with_capacity(ids.len());
    for id in &ids {
        let Some(&label) = label_map.get(id) else {
            return Err(CoreError::data(format!("no label for feature row {id}")).into());
        };
        y.push(label);
    }
    Ok((matrix, y))
}

fn parse_blocks(s: &str) -> anyhow::Result<FeatureConfig> {
    let blocks = s
        .split(',')
        .filter(|b| !b.is_empty())
        .map(|b| b.trim().parse::<FeatureBlock>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureConfig::new(blocks)?)
}

fn family_name(s: &str) -> anyhow::Result<&'static str> {
    Ok(match s {
        "rf" | "random_forest" => "random_forest",
        "knn" | "nearest_neighbors" => "knn",
        "svm" | "linear_svm" => "linear_svm",
        "tree" | "decision_tree" => "decision_tree",
        other => return Err(CoreError::config(format!("unknown family {other:?}")).into()),
    })
}

fn cmd_ks(args: KsArgs) -> anyhow::Result<()> {
    let (ids, matrix) = FeatureMatrix::read_csv(&args.features)?;
    let label_map: std::collections::BTreeMap<String, bool> =
        read_labels(&args.labels)?.into_iter().collect();
    let col = matrix
        .names()
        .iter()
        .position(|n| n == &args.column || n.strip_prefix("loc:") == Some(&args.column))
        .ok_or_else(|| CoreError::data(format!("no column {:?} in features", args.column)))?;
    let mut dangerous = Vec::new();
    let mut benign = Vec::new();
    for (r, id) in ids.iter().enumerate() {
        if matrix.is_missing(r, col) {
            continue;
        }
        match label_map.get(id) {
            Some(true) => dangerous.push(matrix.get(r, col)),
            Some(false) => benign.push(matrix.get(r, col)),
            None => {}
        }
    }
    let ks = ks_two_sample(&dangerous, &benign)?;
    println!("{}", serde_json::to_string_pretty(&ks)?);

    let out_dir = args.out_dir.unwrap_or_else(|| {
        args.features
            .parent()
            .unwrap_or(Path::new("."))
            .to_path_buf()
    });
    std::fs::create_dir_all(&out_dir)?;
    let mut grid: Vec<f64> = dangerous.iter().chain(benign.iter()).copied().collect();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    grid.dedup();
    for (class, samples) in [("dangerous", &dangerous), ("not_dangerous", &benign)] {
        let table = ecdf_export(samples, &grid)?;
        let mut csv = String::from("x,f\n");
        for (x, f) in table {
            csv.push_str(&format!("{x:?},{f:?}\n"));
        }
        let path = out_dir.join(format!("ecdf_{}_{class}.csv", args.column));
        std::fs::write(&path, csv)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_kappa(args: KappaArgs) -> anyhow::Result<()> {
    let annotations = load_annotations(&args.annotations)?;
    let text = std::fs::read_to_string(&args.common_set)?;
    let common: BTreeSet<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if common.is_empty() {
        return Err(CoreError::data("common set is empty").into());
    }
    let matrix = ratings_matrix(&annotations, &common)?;
    match fleiss_kappa::<f64>(&matrix) {
        Kappa::Value(v) => println!("{v}"),
        Kappa::Undefined => println!("undefined (expected agreement is 1)"),
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let (matrix, y) = load_dataset(&args.features, &args.labels)?;
    let blocks = parse_blocks(&args.blocks)?;
    let mut x = killfie_core::learn::select_blocks(&matrix, &blocks);
    if x.n_cols() == 0 {
        return Err(CoreError::data("selected blocks match no columns").into());
    }
    if x.has_missing() {
        Imputer::fit(&x).transform(&mut x);
    }
    let spec = single_spec(family_name(&args.family)?, args.seed)?;
    let model = train(&spec, &x, &y)?;
    std::fs::write(&args.out, serde_json::to_vec_pretty(&model)?)?;
    let preds = model.predict(&x);
    let m = eval_metrics(&y, &preds, true)?;
    eprintln!(
        "trained {} on {} rows x {} cols; training accuracy {:.4}; model: {}",
        spec.family.kind(),
        x.n_rows(),
        x.n_cols(),
        m.accuracy,
        args.out.display()
    );
    Ok(())
}

fn cmd_cv(args: CvArgs) -> anyhow::Result<()> {
    let (matrix, y) = load_dataset(&args.features, &args.labels)?;
    let blocks = parse_blocks(&args.blocks)?;
    let x = killfie_core::learn::select_blocks(&matrix, &blocks);
    let grid = family_grid(family_name(&args.family)?, &args.grid, args.seed)?;
    let cfg = killfie_core::learn::CvConfig {
        k: args.k,
        inner_k: args.inner_k,
        seed: args.seed,
    };
    let report = cross_validate(&grid, &x, &y, &cfg, None)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)?;
            eprintln!(
                "accuracy {:.4} ± {:.4}; report: {}",
                report.accuracy.mean,
                report.accuracy.sd,
                path.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let config_path = match args.seed {
        None => args.config.clone(),
        Some(seed) => {
            let text = std::fs::read_to_string(&args.config)?;
            let mut value: serde_json::Value = serde_json::from_str(&text)?;
            value["seed"] = serde_json::json!(seed);
            let derived = args.config.with_extension(format!("seed{seed}.json"));
            std::fs::write(&derived, serde_json::to_string_pretty(&value)?)?;
            derived
        }
    };
    let manifest = run_pipeline(&config_path)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

fn cmd_table4(args: OutDirArgs) -> anyhow::Result<()> {
    let path = args.out_dir.join("cv").join("table4.csv");
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CoreError::data(format!(
            "{} not found: run the pipeline first (killfie run --config ...)",
            path.display()
        ))
    })?;
    print!("{text}");
    Ok(())
}

fn cmd_risk_cv(args: RiskCvArgs) -> anyhow::Result<()> {
    let path = args.out_dir.join("risk").join("table5.json");
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CoreError::data(format!(
            "{} not found: run the pipeline first (killfie run --config ...)",
            path.display()
        ))
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let want = match args.risk.as_str() {
        "water" => "water",
        "height" => "height",
        "vehicle" | "road" | "vehicle_road" => "vehicle_road",
        other => return Err(CoreError::config(format!("unknown risk {other:?}")).into()),
    };
    let column = value
        .as_array()
        .and_then(|cols| cols.iter().find(|c| c["risk"] == want))
        .ok_or_else(|| CoreError::data(format!("risk {want} not present in table5.json")))?;
    println!("{}", serde_json::to_string_pretty(column)?);
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let kind: ReportKind = args.kind.parse()?;
    for path in emit_report(&args.out_dir, kind)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_demo(args: DemoArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let config_path = generate_demo(&args.out, args.seed, &DemoSpec::default())?;
    eprintln!(
        "demo workspace ready; run:\n  killfie run --config {}",
        config_path.display()
    );
    println!("{}", config_path.display());
    Ok(())
}
