//! Tweet corpus: ingestion, validation, persistence, summary statistics,
//! and the pluggable selfie filter.
//!
//! The canonical corpus format is JSONL, one record per line, UTF-8.
//! Malformed records are quarantined with per-line diagnostics, never
//! silently skipped.

pub mod annotations;
pub mod incidents;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::seed::keyed_hash;

/// One social-media post.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Dense-caption sentences describing the referenced image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<Vec<String>>,
    pub posted_at: DateTime<Utc>,
    pub user_id: String,
}

impl TweetRecord {
    /// Invariants that do not need corpus-level context.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::data("tweet id must be non-empty"));
        }
        if let Some(captions) = &self.captions {
            if captions.iter().any(|c| c.trim().is_empty()) {
                return Err(Error::data(format!(
                    "tweet {}: captions must be non-empty strings",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Immutable collection of validated tweets with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<TweetRecord>,
}

impl Corpus {
    pub fn from_records(records: Vec<TweetRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.clone()) {
                return Err(Error::data(format!("duplicate tweet id {}", r.id)));
            }
        }
        Ok(Corpus { records })
    }

    pub fn records(&self) -> &[TweetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Canonical JSONL: one record per line in corpus order.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// A record that failed ingestion, with where and why.
#[derive(Debug, Clone, Serialize)]
pub struct RejectedRecord {
    /// 1-based line (JSONL) or row (CSV) number in the source file.
    pub line: usize,
    pub cause: String,
}

/// Result of an ingestion or filtering pass: the surviving corpus plus a
/// rejection report.
#[derive(Debug)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    pub rejects: Vec<RejectedRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

/// Load tweets from JSONL or CSV. Records failing parsing or invariants go
/// to the rejection report; more than 50% malformed is a hard failure.
pub fn load_tweets(path: &Path, format: CorpusFormat) -> Result<LoadOutcome> {
    let raw: Vec<(usize, std::result::Result<TweetRecord, String>)> = match format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::Csv => read_csv(path)?,
    };

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = BTreeSet::new();
    let total = raw.len();
    for (line, parsed) in raw {
        match parsed {
            Ok(rec) => {
                if let Err(e) = rec.validate() {
                    rejects.push(RejectedRecord {
                        line,
                        cause: e.to_string(),
                    });
                } else if !seen.insert(rec.id.clone()) {
                    rejects.push(RejectedRecord {
                        line,
                        cause: format!("duplicate tweet id {}", rec.id),
                    });
                } else {
                    records.push(rec);
                }
            }
            Err(cause) => rejects.push(RejectedRecord { line, cause }),
        }
    }

    if total > 0 && rejects.len() * 2 > total {
        let mut msg = format!(
            "{} of {} records malformed in {}:",
            rejects.len(),
            total,
            path.display()
        );
        for r in rejects.iter().take(20) {
            msg.push_str(&format!("\n  line {}: {}", r.line, r.cause));
        }
        if rejects.len() > 20 {
            msg.push_str(&format!("\n  ... and {} more", rejects.len() - 20));
        }
        return Err(Error::data(msg));
    }

    Ok(LoadOutcome {
        corpus: Corpus { records },
        rejects,
    })
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, std::result::Result<TweetRecord, String>)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((
            i + 1,
            serde_json::from_str::<TweetRecord>(&line).map_err(|e| e.to_string()),
        ));
    }
    Ok(out)
}

/// CSV columns: id,user_id,posted_at,lat,lon,image_ref,captions,hashtags,text.
/// `captions` and `hashtags` are pipe-separated; empty lat/lon means no geo.
fn read_csv(path: &Path) -> Result<Vec<(usize, std::result::Result<TweetRecord, String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(Error::Csv)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2; // header is row 1
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.push((row, Err(e.to_string())));
                continue;
            }
        };
        out.push((row, parse_csv_tweet(&rec)));
    }
    Ok(out)
}

fn parse_csv_tweet(rec: &csv::StringRecord) -> std::result::Result<TweetRecord, String> {
    if rec.len() < 9 {
        return Err(format!("expected 9 fields, found {}", rec.len()));
    }
    let field = |i: usize| rec.get(i).unwrap_or("").trim();
    let posted_at = DateTime::parse_from_rfc3339(field(2))
        .map_err(|e| format!("posted_at: {e}"))?
        .with_timezone(&Utc);
    let geo = match (field(3), field(4)) {
        ("", "") => None,
        (lat, lon) => {
            let lat: f64 = lat.parse().map_err(|_| "lat: not a number".to_string())?;
            let lon: f64 = lon.parse().map_err(|_| "lon: not a number".to_string())?;
            Some(GeoPoint::new(lat, lon).map_err(|e| e.to_string())?)
        }
    };
    let split_pipe = |s: &str| -> Vec<String> {
        if s.is_empty() {
            Vec::new()
        } else {
            s.split('|').map(str::to_string).collect()
        }
    };
    let captions = {
        let c = split_pipe(field(6));
        if c.is_empty() {
            None
        } else {
            Some(c)
        }
    };
    Ok(TweetRecord {
        id: field(0).to_string(),
        user_id: field(1).to_string(),
        posted_at,
        geo,
        image_ref: match field(5) {
            "" => None,
            s => Some(s.to_string()),
        },
        captions,
        hashtags: split_pipe(field(7)),
        text: field(8).to_string(),
    })
}

/// Corpus-level descriptive statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_tweets: usize,
    pub total_users: usize,
    pub tweets_with_images: usize,
    pub tweets_with_geo: usize,
    pub tweets_with_text_besides_hashtags: usize,
    pub first_tweet_at: Option<DateTime<Utc>>,
    pub last_tweet_at: Option<DateTime<Utc>>,
}

/// A tweet counts toward "text besides hashtags" iff its text, after
/// removing hashtags and URLs, still contains at least one token.
pub fn has_text_besides_hashtags(text: &str) -> bool {
    text.split_whitespace()
        .filter(|chunk| !is_url(chunk) && !chunk.starts_with('#'))
        .any(|chunk| chunk.chars().any(char::is_alphanumeric))
}

pub(crate) fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut users = BTreeSet::new();
    let mut with_images = 0;
    let mut with_geo = 0;
    let mut with_text = 0;
    let mut first: Option<DateTime<Utc>> = None;
    let mut last: Option<DateTime<Utc>> = None;
    for r in corpus.records() {
        users.insert(r.user_id.as_str());
        if r.image_ref.is_some() {
            with_images += 1;
        }
        if r.geo.is_some() {
            with_geo += 1;
        }
        if has_text_besides_hashtags(&r.text) {
            with_text += 1;
        }
        first = Some(first.map_or(r.posted_at, |f| f.min(r.posted_at)));
        last = Some(last.map_or(r.posted_at, |l| l.max(r.posted_at)));
    }
    CorpusStats {
        total_tweets: corpus.len(),
        total_users: users.len(),
        tweets_with_images: with_images,
        tweets_with_geo: with_geo,
        tweets_with_text_besides_hashtags: with_text,
        first_tweet_at: first,
        last_tweet_at: last,
    }
}

/// Pluggable selfie/non-selfie discriminator scoring image references.
pub trait SelfieFilter: Send + Sync {
    /// Probability in [0, 1] that the referenced image is a selfie.
    fn score(&self, image_ref: &str) -> Result<f64>;
}

/// Stub filter returning a fixed score.
pub struct ConstantSelfieFilter(pub f64);

impl SelfieFilter for ConstantSelfieFilter {
    fn score(&self, _image_ref: &str) -> Result<f64> {
        Ok(self.0)
    }
}

/// Deterministic stub scoring by a keyed hash of the image reference.
pub struct HashSelfieFilter {
    pub seed: u64,
}

impl SelfieFilter for HashSelfieFilter {
    fn score(&self, image_ref: &str) -> Result<f64> {
        Ok(keyed_hash(self.seed, image_ref.as_bytes()) as f64 / u64::MAX as f64)
    }
}

/// Retain tweets that have an image and score at or above `threshold`.
/// Tweets without images are removed outright; filter failures are routed to
/// the rejection report with their cause.
pub fn filter_selfies(
    corpus: &Corpus,
    filter: &dyn SelfieFilter,
    threshold: f64,
) -> Result<LoadOutcome> {
    let mut kept = Vec::new();
    let mut rejects = Vec::new();
    for (i, r) in corpus.records().iter().enumerate() {
        let Some(image_ref) = &r.image_ref else {
            continue;
        };
        match filter.score(image_ref) {
            Ok(score) if (0.0..=1.0).contains(&score) => {
                if score >= threshold {
                    kept.push(r.clone());
                }
            }
            Ok(score) => rejects.push(RejectedRecord {
                line: i + 1,
                cause: format!("tweet {}: filter score {score} outside [0, 1]", r.id),
            }),
            Err(e) => rejects.push(RejectedRecord {
                line: i + 1,
                cause: format!("tweet {}: selfie filter failed: {e}", r.id),
            }),
        }
    }
    Ok(LoadOutcome {
        corpus: Corpus { records: kept },
        rejects,
    })
}

/// Write a rejection report as JSONL next to the corpus outputs.
pub fn save_rejects(rejects: &[RejectedRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in rejects {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&out)
        .map_err(|e| Error::io(path.display().to_string(), e))
}
