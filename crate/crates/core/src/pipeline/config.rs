//! Pipeline configuration: one JSON document drives an entire run. One
//! global seed governs every stochastic operation. Relative paths resolve
//! against the config file's directory, so a config directory can be copied
//! anywhere and reproduce the same run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusFormat;
use crate::error::{Error, Result};
use crate::geofeat::GeoFeatConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub providers: ProvidersConfig,
    pub features: FeaturesConfig,
    pub learn: LearnConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub tweets: PathBuf,
    #[serde(default = "default_format")]
    pub tweets_format: CorpusFormat,
    pub annotations: PathBuf,
    /// Incidents CSV; omit to use the embedded fixture.
    #[serde(default)]
    pub incidents: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Jsonl
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Offline,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvidersConfig {
    pub mode: ProviderMode,
    #[serde(default)]
    pub offline: Option<OfflineProviders>,
    #[serde(default)]
    pub http: Option<HttpProviders>,
    #[serde(default = "default_rate_limit")]
    pub rate_limit_per_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_radius")]
    pub search_radius_m: f64,
}

fn default_rate_limit() -> f64 {
    10.0
}

fn default_retries() -> u32 {
    3
}

fn default_radius() -> f64 {
    10_000.0
}

/// Offline fixture backends: an elevation grid JSON, either a procedural
/// tile world JSON or a directory of PNGs, and a places CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineProviders {
    pub elevation_grid: PathBuf,
    #[serde(default)]
    pub tile_world: Option<PathBuf>,
    #[serde(default)]
    pub tile_dir: Option<PathBuf>,
    pub places_csv: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpProviders {
    pub elevation_url: String,
    pub tile_url: String,
    pub places_url: String,
    #[serde(default)]
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfieFilterConfig {
    /// "constant" scores every image the same; "hash" scores by a keyed
    /// hash of the image reference.
    pub kind: String,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    1.0
}

impl Default for SelfieFilterConfig {
    fn default() -> Self {
        SelfieFilterConfig {
            kind: "constant".into(),
            score: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturesConfig {
    #[serde(default = "default_threshold")]
    pub selfie_threshold: f64,
    #[serde(default)]
    pub selfie_filter: SelfieFilterConfig,
    #[serde(default)]
    pub geo: GeoFeatConfig,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_embed_dim() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabConfig {
    pub min_df: usize,
    pub max_features: usize,
    /// TF-IDF block width cap before tree/KNN training.
    pub tfidf_max_cols: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            min_df: 2,
            max_features: 20_000,
            tfidf_max_cols: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_inner_k")]
    pub inner_k: usize,
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    /// "default" runs the full hyperparameter grid per family; "single"
    /// uses one fixed spec per family (no inner search).
    #[serde(default = "default_grid")]
    pub grid: String,
}

fn default_k() -> usize {
    10
}

fn default_inner_k() -> usize {
    3
}

fn default_families() -> Vec<String> {
    ["linear_svm", "random_forest", "knn", "decision_tree"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_grid() -> String {
    "default".into()
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            k: default_k(),
            inner_k: default_inner_k(),
            families: default_families(),
            grid: default_grid(),
        }
    }
}

impl PipelineConfig {
    /// Parse a config file and resolve its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.paths.tweets);
        resolve(&mut self.paths.annotations);
        if let Some(p) = &mut self.paths.incidents {
            resolve(p);
        }
        resolve(&mut self.paths.cache_dir);
        resolve(&mut self.paths.out_dir);
        if let Some(offline) = &mut self.providers.offline {
            resolve(&mut offline.elevation_grid);
            if let Some(p) = &mut offline.tile_world {
                resolve(p);
            }
            if let Some(p) = &mut offline.tile_dir {
                resolve(p);
            }
            resolve(&mut offline.places_csv);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.providers.mode {
            ProviderMode::Offline => {
                let Some(offline) = &self.providers.offline else {
                    return Err(Error::config("offline mode requires providers.offline"));
                };
                if offline.tile_world.is_none() && offline.tile_dir.is_none() {
                    return Err(Error::config(
                        "offline providers need tile_world or tile_dir",
                    ));
                }
            }
            ProviderMode::Http => {
                if self.providers.http.is_none() {
                    return Err(Error::config("http mode requires providers.http"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.features.selfie_threshold) {
            return Err(Error::config("selfie_threshold must lie in [0, 1]"));
        }
        match self.features.selfie_filter.kind.as_str() {
            "constant" | "hash" => {}
            other => {
                return Err(Error::config(format!(
                    "unknown selfie filter kind {other:?}"
                )))
            }
        }
        if self.features.embed_dim < 2 {
            return Err(Error::config("embed_dim must be at least 2"));
        }
        if self.learn.k < 2 || self.learn.inner_k < 2 {
            return Err(Error::config(
                "learn.k and learn.inner_k must be at least 2",
            ));
        }
        match self.learn.grid.as_str() {
            "default" | "single" => {}
            other => return Err(Error::config(format!("unknown grid policy {other:?}"))),
        }
        for family in &self.learn.families {
            crate::learn::ModelSpec::default_grid(family, 0)?;
        }
        Ok(())
    }

    /// Pretty JSON for writing config files. The run manifest digests the
    /// config file bytes, not this serialization.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "seed": 42,
            "paths": {
                "tweets": "tweets.jsonl",
                "annotations": "annotations.csv",
                "cache_dir": "cache",
                "out_dir": "out"
            },
            "providers": {
                "mode": "offline",
                "offline": {
                    "elevation_grid": "fixtures/elevation.json",
                    "tile_world": "fixtures/world.json",
                    "places_csv": "fixtures/places.csv"
                }
            },
            "features": {},
            "learn": {}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, minimal_json()).unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.learn.k, 10);
        assert_eq!(config.features.embed_dim, 100);
        assert_eq!(config.features.vocab.min_df, 2);
        // Relative paths resolved against the config directory.
        assert!(config.paths.tweets.starts_with(dir.path()));
        assert!(config
            .providers
            .offline
            .unwrap()
            .elevation_grid
            .starts_with(dir.path()));
    }

    #[test]
    fn offline_mode_requires_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let broken = minimal_json().replace(r#""offline": {"#, r#""unused": {"#);
        std::fs::write(&path, broken).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn bad_family_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let bad = minimal_json().replace(
            r#""learn": {}"#,
            r#""learn": {"families": ["boosted_stump"]}"#,
        );
        std::fs::write(&path, bad).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }

    #[test]
    fn config_roundtrips_to_canonical_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, minimal_json()).unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        let json = config.canonical_json().unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.canonical_json().unwrap(), json);
    }
}
