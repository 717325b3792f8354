//! End-to-end pipeline: ingest -> selfie filter -> featurize -> KS reports
//! -> cross-validation -> characterization tables, driven by one config.
//!
//! Each stage persists its outputs under `<out>/<stage>/` together with a
//! key derived from the config and the stage's inputs; reruns with matching
//! keys skip the work and reuse the recorded digests, so runs are idempotent
//! and resumable.

pub mod config;
pub mod demo;
pub mod featurize;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::annotations::{load_annotations, AnnotationRecord, Label, RiskReason};
use crate::corpus::incidents::load_incidents;
use crate::corpus::{
    corpus_stats, filter_selfies, load_tweets, ConstantSelfieFilter, Corpus, HashSelfieFilter,
    SelfieFilter,
};
use crate::error::{Error, Result};
use crate::geo::cache::ProviderCache;
use crate::geo::providers::{
    CallCounter, CsvPlaces, ElevationGrid, GeoServices, GridElevation, HttpBackend,
    HttpElevationProvider, HttpPlacesProvider, HttpTileProvider, SyntheticTileProvider,
    TileDirProvider, WorldModel,
};
use crate::geo::rate_limit::TokenBucket;
use crate::learn::{
    cross_validate_with, CvConfig, EvalMetrics, FamilySpec, FeatureConfig, FeatureMatrix,
    ForestParams, KnnParams, LeakageAudit, ModelSpec, RiskTask, SvmParams, TreeParams,
};
use crate::pipeline::config::{PipelineConfig, ProviderMode, SelfieFilterConfig};
use crate::pipeline::featurize::{
    build_rows, corpus_features, rows_from_parts, TweetFeaturizer, TweetRow,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub wall_ms: u64,
    pub resumed: bool,
    /// Output file name -> sha256 digest.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_digest: String,
    pub input_digests: BTreeMap<String, String>,
    pub transport_calls: u64,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Build the provider stack for a config. The returned counter observes
/// network transport only; offline fixture backends never touch it.
pub fn build_services(config: &PipelineConfig) -> Result<(GeoServices, CallCounter)> {
    let transport = CallCounter::new();
    let cache = Some(ProviderCache::open(&config.paths.cache_dir)?);
    let providers = &config.providers;
    let services = match providers.mode {
        ProviderMode::Offline => {
            let offline = providers
                .offline
                .as_ref()
                .ok_or_else(|| Error::config("offline mode requires providers.offline"))?;
            let grid = ElevationGrid::from_json_file(&offline.elevation_grid)?;
            let tiles: Box<dyn crate::geo::providers::TileProvider> =
                match (&offline.tile_world, &offline.tile_dir) {
                    (Some(world), None) => Box::new(SyntheticTileProvider::new(
                        WorldModel::from_json_file(world)?,
                        CallCounter::new(),
                    )),
                    (None, Some(dir)) => {
                        Box::new(TileDirProvider::new(dir.clone(), CallCounter::new()))
                    }
                    (Some(_), Some(_)) => {
                        return Err(Error::config(
                            "offline providers: set tile_world or tile_dir, not both",
                        ))
                    }
                    (None, None) => {
                        return Err(Error::config(
                            "offline providers need tile_world or tile_dir",
                        ))
                    }
                };
            GeoServices {
                elevation: Box::new(GridElevation::new(grid, CallCounter::new())?),
                tiles,
                places: Box::new(CsvPlaces::from_csv_file(
                    &offline.places_csv,
                    CallCounter::new(),
                )?),
                cache,
                retries: providers.retries,
                retry_backoff: Duration::ZERO,
                search_radius_m: providers.search_radius_m,
            }
        }
        ProviderMode::Http => {
            let http = providers
                .http
                .as_ref()
                .ok_or_else(|| Error::config("http mode requires providers.http"))?;
            let bucket = Arc::new(TokenBucket::new(
                providers.rate_limit_per_s,
                providers.rate_limit_per_s.max(1.0),
            ));
            let backend = |url: &String| {
                HttpBackend::new(
                    url.clone(),
                    http.api_key.clone(),
                    bucket.clone(),
                    transport.clone(),
                )
            };
            GeoServices {
                elevation: Box::new(HttpElevationProvider(backend(&http.elevation_url)?)),
                tiles: Box::new(HttpTileProvider(backend(&http.tile_url)?)),
                places: Box::new(HttpPlacesProvider(backend(&http.places_url)?)),
                cache,
                retries: providers.retries,
                retry_backoff: Duration::from_millis(200),
                search_radius_m: providers.search_radius_m,
            }
        }
    };
    Ok((services, transport))
}

fn build_selfie_filter(cfg: &SelfieFilterConfig, seed: u64) -> Box<dyn SelfieFilter> {
    match cfg.kind.as_str() {
        "hash" => Box::new(HashSelfieFilter { seed }),
        _ => Box::new(ConstantSelfieFilter(cfg.score)),
    }
}

/// Majority label per tweet over its annotations; ties count as unsure.
/// Risk reasons are the union over dangerous votes.
pub fn consensus_labels(
    annotations: &[AnnotationRecord],
) -> BTreeMap<String, (Label, BTreeSet<RiskReason>)> {
    let mut per_tweet: BTreeMap<String, (usize, usize, usize, BTreeSet<RiskReason>)> =
        BTreeMap::new();
    for a in annotations {
        let entry = per_tweet.entry(a.tweet_id.clone()).or_default();
        match a.label {
            Label::Dangerous => {
                entry.0 += 1;
                entry.3.extend(a.risk_reasons.iter().copied());
            }
            Label::NotDangerous => entry.1 += 1,
            Label::Unsure => entry.2 += 1,
        }
    }
    per_tweet
        .into_iter()
        .map(|(id, (dangerous, not_dangerous, _unsure, reasons))| {
            let label = if dangerous > not_dangerous {
                Label::Dangerous
            } else if not_dangerous > dangerous {
                Label::NotDangerous
            } else {
                Label::Unsure
            };
            let reasons = if label == Label::Dangerous {
                reasons
            } else {
                BTreeSet::new()
            };
            (id, (label, reasons))
        })
        .collect()
}

/// One fixed spec per family for the "single" grid policy.
pub fn single_spec(family: &str, seed: u64) -> Result<ModelSpec> {
    let family = match family {
        "decision_tree" => FamilySpec::DecisionTree(TreeParams::default()),
        "random_forest" => FamilySpec::RandomForest(ForestParams::default()),
        "knn" => FamilySpec::Knn(KnnParams { k: 5 }),
        "linear_svm" => FamilySpec::LinearSvm(SvmParams::default()),
        other => {
            return Err(Error::config(format!(
                "unknown classifier family {other:?}"
            )))
        }
    };
    ModelSpec::new(family, seed)
}

pub fn family_grid(family: &str, policy: &str, seed: u64) -> Result<Vec<ModelSpec>> {
    match policy {
        "single" => Ok(vec![single_spec(family, seed)?]),
        _ => ModelSpec::default_grid(family, seed),
    }
}

// ---------------------------------------------------------------------------
// Stage runner
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StageMarker {
    key: String,
    outputs: BTreeMap<String, String>,
}

struct StageRunner<'a> {
    out_root: &'a Path,
    config_digest: String,
    records: Vec<StageRecord>,
}

impl StageRunner<'_> {
    fn stage_dir(&self, name: &str) -> PathBuf {
        self.out_root.join(name)
    }

    /// Run a stage unless its marker shows identical inputs and intact
    /// outputs. The closure writes files into the stage directory and
    /// returns their names.
    fn run(
        &mut self,
        name: &str,
        input_digests: &[String],
        f: impl FnOnce(&Path) -> Result<Vec<String>>,
    ) -> Result<()> {
        let dir = self.stage_dir(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let mut key_material = self.config_digest.to_string();
        for d in input_digests {
            key_material.push(':');
            key_material.push_str(d);
        }
        // Chain on upstream stages so edits invalidate downstream work.
        for rec in &self.records {
            for digest in rec.outputs.values() {
                key_material.push(':');
                key_material.push_str(digest);
            }
        }
        let key = sha256_hex(key_material.as_bytes());

        let marker_path = dir.join(".stage");
        if let Ok(text) = std::fs::read_to_string(&marker_path) {
            if let Ok(marker) = serde_json::from_str::<StageMarker>(&text) {
                if marker.key == key {
                    let intact = marker.outputs.iter().all(|(file, digest)| {
                        digest_file(&dir.join(file)).is_ok_and(|d| &d == digest)
                    });
                    if intact {
                        self.records.push(StageRecord {
                            name: name.to_string(),
                            wall_ms: 0,
                            resumed: true,
                            outputs: marker.outputs,
                        });
                        return Ok(());
                    }
                }
            }
        }

        let start = Instant::now();
        let files = f(&dir)?;
        let wall_ms = start.elapsed().as_millis() as u64;
        let mut outputs = BTreeMap::new();
        for file in files {
            outputs.insert(file.clone(), digest_file(&dir.join(&file))?);
        }
        let marker = StageMarker {
            key,
            outputs: outputs.clone(),
        };
        std::fs::write(&marker_path, serde_json::to_vec_pretty(&marker)?)
            .map_err(|e| Error::io(marker_path.display().to_string(), e))?;
        self.records.push(StageRecord {
            name: name.to_string(),
            wall_ms,
            resumed: false,
            outputs,
        });
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// run_pipeline
// ---------------------------------------------------------------------------

/// Execute every stage for the given config file. On stage failure the
/// manifest with all completed stages is still written.
pub fn run_pipeline(config_path: &Path) -> Result<RunManifest> {
    let config = PipelineConfig::load(config_path)?;
    let config_bytes =
        std::fs::read(config_path).map_err(|e| Error::io(config_path.display().to_string(), e))?;
    let config_digest = sha256_hex(&config_bytes);

    std::fs::create_dir_all(&config.paths.out_dir)
        .map_err(|e| Error::io(config.paths.out_dir.display().to_string(), e))?;

    let mut input_digests = BTreeMap::new();
    input_digests.insert("config".to_string(), config_digest.clone());
    input_digests.insert("tweets".to_string(), digest_file(&config.paths.tweets)?);
    input_digests.insert(
        "annotations".to_string(),
        digest_file(&config.paths.annotations)?,
    );
    if let Some(incidents) = &config.paths.incidents {
        input_digests.insert("incidents".to_string(), digest_file(incidents)?);
    }

    let (services, transport) = build_services(&config)?;
    let mut runner = StageRunner {
        out_root: &config.paths.out_dir,
        config_digest: config_digest.clone(),
        records: Vec::new(),
    };

    let result = run_stages(&config, &services, &mut runner, &input_digests);

    let manifest = RunManifest {
        version: TOOL_VERSION.to_string(),
        config_digest,
        input_digests,
        transport_calls: transport.get(),
        stages: runner.records,
    };
    manifest.save(&config.paths.out_dir.join("manifest.json"))?;
    result?;
    Ok(manifest)
}

fn run_stages(
    config: &PipelineConfig,
    services: &GeoServices,
    runner: &mut StageRunner<'_>,
    input_digests: &BTreeMap<String, String>,
) -> Result<()> {
    let tweets_digest = input_digests["tweets"].clone();
    let annotations_digest = input_digests["annotations"].clone();

    // Stage: ingest.
    runner.run("ingest", &[tweets_digest], |dir| {
        let outcome = load_tweets(&config.paths.tweets, config.paths.tweets_format)?;
        outcome.corpus.save_jsonl(&dir.join("corpus.jsonl"))?;
        crate::corpus::save_rejects(&outcome.rejects, &dir.join("rejects.jsonl"))?;
        let stats = corpus_stats(&outcome.corpus);
        std::fs::write(
            dir.join("corpus_stats.json"),
            serde_json::to_vec_pretty(&stats)?,
        )
        .map_err(|e| Error::io("corpus_stats.json", e))?;
        Ok(vec![
            "corpus.jsonl".into(),
            "rejects.jsonl".into(),
            "corpus_stats.json".into(),
        ])
    })?;

    // Stage: selfie filter.
    let ingest_dir = runner.stage_dir("ingest");
    runner.run("filter", &[], |dir| {
        let outcome = load_tweets(
            &ingest_dir.join("corpus.jsonl"),
            crate::corpus::CorpusFormat::Jsonl,
        )?;
        let filter = build_selfie_filter(&config.features.selfie_filter, config.seed);
        let filtered = filter_selfies(
            &outcome.corpus,
            filter.as_ref(),
            config.features.selfie_threshold,
        )?;
        filtered.corpus.save_jsonl(&dir.join("filtered.jsonl"))?;
        crate::corpus::save_rejects(&filtered.rejects, &dir.join("rejects.jsonl"))?;
        Ok(vec!["filtered.jsonl".into(), "rejects.jsonl".into()])
    })?;

    // Stage: featurize (location per geo-tagged tweet, full-corpus text and
    // caption exports).
    let filter_dir = runner.stage_dir("filter");
    let fixture_digests = offline_fixture_digests(config)?;
    runner.run("features", &fixture_digests, |dir| {
        let corpus = load_tweets(
            &filter_dir.join("filtered.jsonl"),
            crate::corpus::CorpusFormat::Jsonl,
        )?
        .corpus;
        let rows = build_rows(
            corpus.records(),
            services,
            &config.features.geo,
            config.features.embed_dim,
            config.seed,
        )?;
        let features = corpus_features(&rows, &config.features.vocab)?;
        features
            .location
            .write_csv(&features.ids, &dir.join("location.csv"))?;
        write_sparse_file(
            &features.ids,
            &features.text_tfidf,
            &dir.join("text_tfidf.txt"),
        )?;
        write_dense_csv(
            &features.ids,
            &features.text_embeddings,
            &dir.join("text_emb.csv"),
        )?;
        write_sparse_file(
            &features.ids,
            &features.caption_tfidf,
            &dir.join("caption_tfidf.txt"),
        )?;
        write_dense_csv(
            &features.ids,
            &features.caption_embeddings,
            &dir.join("caption_emb.csv"),
        )?;
        let mut files = vec![
            "location.csv".to_string(),
            "text_tfidf.txt".to_string(),
            "text_emb.csv".to_string(),
            "caption_tfidf.txt".to_string(),
            "caption_emb.csv".to_string(),
        ];
        if let Some(v) = &features.text_vocab {
            v.save_json(&dir.join("text_vocab.json"))?;
            files.push("text_vocab.json".into());
        }
        if let Some(v) = &features.caption_vocab {
            v.save_json(&dir.join("caption_vocab.json"))?;
            files.push("caption_vocab.json".into());
        }
        Ok(files)
    })?;

    // Load shared intermediates for the analysis stages.
    let features_dir = runner.stage_dir("features");
    let corpus = load_tweets(
        &filter_dir.join("filtered.jsonl"),
        crate::corpus::CorpusFormat::Jsonl,
    )?
    .corpus;
    let annotations = load_annotations(&config.paths.annotations)?;
    let labels = consensus_labels(&annotations);
    let (loc_ids, location) = FeatureMatrix::read_csv(&features_dir.join("location.csv"))?;

    // Stage: KS separation reports per location feature.
    runner.run("ks", std::slice::from_ref(&annotations_digest), |dir| {
        report::write_ks_reports(dir, &corpus, &labels, &loc_ids, &location)
    })?;

    // Stage: overall classification table.
    let rows = rows_from_parts(
        corpus.records(),
        &loc_ids,
        &location,
        config.features.embed_dim,
        config.seed,
    )?;
    runner.run("cv", std::slice::from_ref(&annotations_digest), |dir| {
        report::write_table4(dir, config, &rows, &corpus, &labels)
    })?;

    // Stage: per-risk classification table.
    runner.run("risk", &[annotations_digest], |dir| {
        report::write_table5(dir, config, &rows, &corpus, &labels)
    })?;

    // Stage: incident characterization tables.
    let incidents_digest = match &config.paths.incidents {
        Some(p) => vec![digest_file(p)?],
        None => vec!["embedded-fixture".to_string()],
    };
    runner.run("incidents", &incidents_digest, |dir| {
        let set = match &config.paths.incidents {
            Some(p) => load_incidents(p)?,
            None => crate::corpus::incidents::shipped_fixture(),
        };
        report::write_incident_reports(dir, &set)
    })?;

    Ok(())
}

fn offline_fixture_digests(config: &PipelineConfig) -> Result<Vec<String>> {
    let mut digests = Vec::new();
    if let Some(offline) = &config.providers.offline {
        digests.push(digest_file(&offline.elevation_grid)?);
        if let Some(world) = &offline.tile_world {
            digests.push(digest_file(world)?);
        }
        digests.push(digest_file(&offline.places_csv)?);
    }
    Ok(digests)
}

fn write_sparse_file(
    ids: &[String],
    vectors: &[crate::textfeat::SparseVector],
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    for (id, v) in ids.iter().zip(vectors) {
        out.push_str(id);
        out.push('\t');
        out.push_str(&v.to_text());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_dense_csv(ids: &[String], vectors: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::Csv)?;
    let dim = vectors.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    wtr.write_record(&header).map_err(Error::Csv)?;
    for (id, v) in ids.iter().zip(vectors) {
        let mut rec = vec![id.clone()];
        rec.extend(v.iter().map(|x| format!("{x:?}")));
        wtr.write_record(&rec).map_err(Error::Csv)?;
    }
    wtr.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Dataset for the overall classifier: filtered tweets with a non-unsure
/// consensus label.
pub fn overall_dataset<'a>(
    corpus: &'a Corpus,
    labels: &BTreeMap<String, (Label, BTreeSet<RiskReason>)>,
) -> (Vec<usize>, Vec<bool>, Vec<&'a str>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut ids = Vec::new();
    for (i, r) in corpus.records().iter().enumerate() {
        match labels.get(&r.id) {
            Some((Label::Dangerous, _)) => {
                rows.push(i);
                y.push(true);
                ids.push(r.id.as_str());
            }
            Some((Label::NotDangerous, _)) => {
                rows.push(i);
                y.push(false);
                ids.push(r.id.as_str());
            }
            _ => {}
        }
    }
    (rows, y, ids)
}

/// Evaluate one feature configuration x one family over the labeled subset.
pub fn evaluate_cell(
    rows: &[TweetRow],
    keep: &[usize],
    y: &[bool],
    blocks: FeatureConfig,
    risk: Option<RiskTask>,
    grid: &[ModelSpec],
    config: &PipelineConfig,
    audit: Option<&LeakageAudit>,
) -> Result<EvalMetrics> {
    let subset: Vec<TweetRow> = keep.iter().map(|&i| rows[i].clone()).collect();
    let featurizer = TweetFeaturizer {
        rows: &subset,
        blocks,
        risk,
        vocab_cfg: config.features.vocab.clone(),
        embed_dim: config.features.embed_dim,
    };
    let cv = CvConfig {
        k: config.learn.k,
        inner_k: config.learn.inner_k,
        seed: config.seed,
    };
    cross_validate_with(grid, &featurizer, y, &cv, audit)
}

pub use report::{emit_report, ReportKind};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_majority_and_tie_rules() {
        use crate::corpus::annotations::AnnotationRecord;
        let ann = |tweet: &str, label: Label, reasons: &[RiskReason], who: &str| AnnotationRecord {
            tweet_id: tweet.into(),
            label,
            risk_reasons: reasons.iter().copied().collect(),
            annotator_id: who.into(),
        };
        let annotations = vec![
            ann("t1", Label::Dangerous, &[RiskReason::Water], "a1"),
            ann("t1", Label::Dangerous, &[RiskReason::Height], "a2"),
            ann("t1", Label::NotDangerous, &[], "a3"),
            ann("t2", Label::Dangerous, &[RiskReason::Animal], "a1"),
            ann("t2", Label::NotDangerous, &[], "a2"),
            ann("t3", Label::NotDangerous, &[], "a1"),
        ];
        let labels = consensus_labels(&annotations);
        let (l1, r1) = &labels["t1"];
        assert_eq!(*l1, Label::Dangerous);
        assert_eq!(r1.len(), 2); // union of dangerous votes
        assert_eq!(labels["t2"].0, Label::Unsure); // 1-1 tie
        assert!(labels["t2"].1.is_empty());
        assert_eq!(labels["t3"].0, Label::NotDangerous);
    }

    #[test]
    fn grid_policies() {
        assert_eq!(family_grid("knn", "single", 1).unwrap().len(), 1);
        assert_eq!(family_grid("knn", "default", 1).unwrap().len(), 4);
        assert!(family_grid("nope", "single", 1).is_err());
    }
}
