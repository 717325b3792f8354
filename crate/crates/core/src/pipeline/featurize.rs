//! Per-tweet feature assembly. Location features and hashed embeddings are
//! pure per row and computed once; TF-IDF vocabularies are corpus-fitted,
//! so the featurizer refits them inside every training fold and reports the
//! rows it read to the leakage audit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::providers::GeoServices;
use crate::geofeat::{
    location_feature_vector, GeoFeatConfig, LocationFeatureBlock, LOCATION_COLUMNS,
};
use crate::learn::{
    AuditStage, FeatureBlock, FeatureConfig, FeatureMatrix, FoldFeaturizer, LeakageAudit, RiskTask,
};
use crate::pipeline::config::VocabConfig;
use crate::seed::mix_str;
use crate::textfeat::{
    caption_tokens, fit_vocab, tfidf, tokenize, DocumentEmbedder, HashingEmbedder, SparseVector,
    TokenStream, Vocabulary,
};

/// Raw per-tweet ingredients, computed once per corpus.
#[derive(Debug, Clone)]
pub struct TweetRow {
    pub id: String,
    pub text_tokens: TokenStream,
    pub caption_tokens: Option<TokenStream>,
    pub text_emb: Vec<f64>,
    pub caption_emb: Option<Vec<f64>>,
    pub loc: LocationFeatureBlock,
}

pub fn text_embedder(embed_dim: usize, seed: u64) -> Result<HashingEmbedder> {
    HashingEmbedder::new(embed_dim, mix_str(seed, "text-embed"))
}

pub fn caption_embedder(embed_dim: usize, seed: u64) -> Result<HashingEmbedder> {
    HashingEmbedder::new(embed_dim, mix_str(seed, "caption-embed"))
}

/// Build rows for a corpus. Tweets without a geolocation get an all-missing
/// location block and never touch the providers.
pub fn build_rows(
    records: &[crate::corpus::TweetRecord],
    services: &GeoServices,
    geo_cfg: &GeoFeatConfig,
    embed_dim: usize,
    seed: u64,
) -> Result<Vec<TweetRow>> {
    let text_embedder = text_embedder(embed_dim, seed)?;
    let caption_embedder = caption_embedder(embed_dim, seed)?;
    Ok(records
        .par_iter()
        .map(|r| {
            let loc = match r.geo {
                Some(point) => {
                    location_feature_vector(point, services, geo_cfg, mix_str(seed, &r.id))
                }
                None => LocationFeatureBlock::all_missing(),
            };
            let text_tokens = tokenize(&r.text);
            let caption_tokens = caption_tokens(r);
            TweetRow {
                id: r.id.clone(),
                text_emb: text_embedder.embed(&text_tokens),
                caption_emb: caption_tokens.as_ref().map(|t| caption_embedder.embed(t)),
                text_tokens,
                caption_tokens,
                loc,
            }
        })
        .collect())
}

/// Rebuild rows from persisted intermediates: the filtered corpus provides
/// tokens and embeddings, the location CSV provides the location block.
pub fn rows_from_parts(
    records: &[crate::corpus::TweetRecord],
    location_ids: &[String],
    location: &FeatureMatrix<f64>,
    embed_dim: usize,
    seed: u64,
) -> Result<Vec<TweetRow>> {
    if location_ids.len() != records.len() {
        return Err(Error::data(format!(
            "{} location rows for {} corpus records",
            location_ids.len(),
            records.len()
        )));
    }
    let text_embedder = text_embedder(embed_dim, seed)?;
    let caption_embedder = caption_embedder(embed_dim, seed)?;
    records
        .iter()
        .zip(location_ids)
        .enumerate()
        .map(|(i, (r, loc_id))| {
            if &r.id != loc_id {
                return Err(Error::data(format!(
                    "location row {i} is for {loc_id}, corpus has {}",
                    r.id
                )));
            }
            let mut values = [0.0; 8];
            let mut missing = [true; 8];
            for c in 0..8 {
                values[c] = location.get(i, c);
                missing[c] = location.is_missing(i, c);
            }
            let text_tokens = tokenize(&r.text);
            let caption_tokens = caption_tokens(r);
            Ok(TweetRow {
                id: r.id.clone(),
                text_emb: text_embedder.embed(&text_tokens),
                caption_emb: caption_tokens.as_ref().map(|t| caption_embedder.embed(t)),
                text_tokens,
                caption_tokens,
                loc: LocationFeatureBlock { values, missing },
            })
        })
        .collect()
}

/// Fold featurizer over tweet rows: text and caption vocabularies are fitted
/// on the training rows only; hashed embeddings are stateless; location
/// columns may be restricted to a risk task's relevant subset.
pub struct TweetFeaturizer<'a> {
    pub rows: &'a [TweetRow],
    pub blocks: FeatureConfig,
    pub risk: Option<RiskTask>,
    pub vocab_cfg: VocabConfig,
    pub embed_dim: usize,
}

impl TweetFeaturizer<'_> {
    fn location_columns(&self) -> Vec<usize> {
        LOCATION_COLUMNS
            .iter()
            .enumerate()
            .filter(|(_, name)| match self.risk {
                Some(task) => task.location_columns().contains(name),
                None => true,
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn fit_fold_vocab<'b>(
        &'b self,
        train: &[usize],
        docs: impl Fn(usize) -> Option<&'b TokenStream>,
    ) -> Result<Option<Vocabulary>> {
        let train_docs: Vec<TokenStream> = train
            .iter()
            .map(|&r| docs(r).cloned().unwrap_or_default())
            .collect();
        if train_docs.iter().all(|d| d.is_empty()) {
            return Ok(None);
        }
        let vocab = fit_vocab(
            &train_docs,
            self.vocab_cfg.min_df,
            self.vocab_cfg.max_features,
        )?;
        Ok(Some(vocab.truncated(self.vocab_cfg.tfidf_max_cols)))
    }

    fn build_matrix(
        &self,
        rows: &[usize],
        text_vocab: Option<&Vocabulary>,
        caption_vocab: Option<&Vocabulary>,
    ) -> Result<FeatureMatrix<f64>> {
        let loc_cols = self.location_columns();
        let text_on = self.blocks.contains(FeatureBlock::Text);
        let image_on = self.blocks.contains(FeatureBlock::Image);
        let location_on = self.blocks.contains(FeatureBlock::Location);

        let mut names = Vec::new();
        if location_on {
            for &c in &loc_cols {
                names.push(format!("loc:{}", LOCATION_COLUMNS[c]));
            }
            for &c in &loc_cols {
                names.push(format!("miss:loc:{}", LOCATION_COLUMNS[c]));
            }
        }
        if text_on {
            if let Some(v) = text_vocab {
                for i in 0..v.len() {
                    names.push(format!("txt:tfidf:{i}"));
                }
            }
            for i in 0..self.embed_dim {
                names.push(format!("txt:emb:{i}"));
            }
        }
        if image_on {
            if let Some(v) = caption_vocab {
                for i in 0..v.len() {
                    names.push(format!("img:tfidf:{i}"));
                }
            }
            for i in 0..self.embed_dim {
                names.push(format!("img:emb:{i}"));
            }
            names.push("miss:img:captions".into());
        }

        let zeros = vec![0.0; self.embed_dim];
        let mut matrix = FeatureMatrix::new(names)?;
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for &r in rows {
            let row = &self.rows[r];
            values.clear();
            missing.clear();
            if location_on {
                for &c in &loc_cols {
                    values.push(row.loc.values[c]);
                    missing.push(row.loc.missing[c]);
                }
                for &c in &loc_cols {
                    values.push(if row.loc.missing[c] { 1.0 } else { 0.0 });
                    missing.push(false);
                }
            }
            if text_on {
                if let Some(v) = text_vocab {
                    let sv = tfidf(&row.text_tokens, v);
                    values.extend(sv.to_dense(v.len()));
                    missing.extend(std::iter::repeat_n(false, v.len()));
                }
                values.extend_from_slice(&row.text_emb);
                missing.extend(std::iter::repeat_n(false, self.embed_dim));
            }
            if image_on {
                let empty: TokenStream = Vec::new();
                let tokens = row.caption_tokens.as_ref().unwrap_or(&empty);
                if let Some(v) = caption_vocab {
                    let sv = tfidf(tokens, v);
                    values.extend(sv.to_dense(v.len()));
                    missing.extend(std::iter::repeat_n(false, v.len()));
                }
                values.extend_from_slice(row.caption_emb.as_ref().unwrap_or(&zeros));
                missing.extend(std::iter::repeat_n(false, self.embed_dim));
                values.push(if row.caption_tokens.is_none() {
                    1.0
                } else {
                    0.0
                });
                missing.push(false);
            }
            matrix.push_row(&values, &missing)?;
        }
        Ok(matrix)
    }
}

impl FoldFeaturizer<f64> for TweetFeaturizer<'_> {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn featurize(
        &self,
        train: &[usize],
        test: &[usize],
        audit: Option<(&LeakageAudit, usize)>,
    ) -> Result<(FeatureMatrix<f64>, FeatureMatrix<f64>)> {
        for &r in train.iter().chain(test) {
            if r >= self.rows.len() {
                return Err(Error::Learn(format!("row {r} out of range")));
            }
        }
        let text_vocab = if self.blocks.contains(FeatureBlock::Text) {
            let v = self.fit_fold_vocab(train, |r| Some(&self.rows[r].text_tokens))?;
            if let Some((audit, fold)) = audit {
                audit.record(fold, AuditStage::VocabFit, train);
            }
            v
        } else {
            None
        };
        let caption_vocab = if self.blocks.contains(FeatureBlock::Image) {
            let v = self.fit_fold_vocab(train, |r| self.rows[r].caption_tokens.as_ref())?;
            if let Some((audit, fold)) = audit {
                audit.record(fold, AuditStage::VocabFit, train);
            }
            v
        } else {
            None
        };
        let x_train = self.build_matrix(train, text_vocab.as_ref(), caption_vocab.as_ref())?;
        let x_test = self.build_matrix(test, text_vocab.as_ref(), caption_vocab.as_ref())?;
        Ok((x_train, x_test))
    }
}

/// Full-corpus feature exports (vocabulary fitted on every row): the
/// location CSV plus text/caption vectors. These artifacts are for
/// inspection and external tools; cross-validation refits per fold.
pub struct CorpusFeatures {
    pub ids: Vec<String>,
    pub location: FeatureMatrix<f64>,
    pub text_vocab: Option<Vocabulary>,
    pub text_tfidf: Vec<SparseVector>,
    pub text_embeddings: Vec<Vec<f64>>,
    pub caption_vocab: Option<Vocabulary>,
    pub caption_tfidf: Vec<SparseVector>,
    pub caption_embeddings: Vec<Vec<f64>>,
}

pub fn corpus_features(rows: &[TweetRow], vocab_cfg: &VocabConfig) -> Result<CorpusFeatures> {
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();

    // The export carries the documented bare column names; the block-prefixed
    // scheme is internal to fold matrices.
    let names: Vec<String> = LOCATION_COLUMNS.iter().map(|c| c.to_string()).collect();
    let mut location = FeatureMatrix::new(names)?;
    for row in rows {
        location.push_row(&row.loc.values, &row.loc.missing)?;
    }

    let text_docs: Vec<&TokenStream> = rows.iter().map(|r| &r.text_tokens).collect();
    let empty: TokenStream = Vec::new();
    let caption_docs: Vec<&TokenStream> = rows
        .iter()
        .map(|r| r.caption_tokens.as_ref().unwrap_or(&empty))
        .collect();

    let fit = |docs: &[&TokenStream]| -> Result<Option<Vocabulary>> {
        if docs.iter().all(|d| d.is_empty()) {
            return Ok(None);
        }
        let owned: Vec<TokenStream> = docs.iter().map(|d| (*d).clone()).collect();
        Ok(Some(fit_vocab(
            &owned,
            vocab_cfg.min_df,
            vocab_cfg.max_features,
        )?))
    };
    let text_vocab = fit(&text_docs)?;
    let caption_vocab = fit(&caption_docs)?;

    let empty_sv = SparseVector(Vec::new());
    let text_tfidf = text_docs
        .iter()
        .map(|d| {
            text_vocab
                .as_ref()
                .map_or(empty_sv.clone(), |v| tfidf(d, v))
        })
        .collect();
    let caption_tfidf = caption_docs
        .iter()
        .map(|d| {
            caption_vocab
                .as_ref()
                .map_or(empty_sv.clone(), |v| tfidf(d, v))
        })
        .collect();
    let text_embeddings = rows.iter().map(|r| r.text_emb.clone()).collect();
    let caption_embeddings = rows
        .iter()
        .map(|r| {
            r.caption_emb
                .clone()
                .unwrap_or_else(|| vec![0.0; rows_dim(rows)])
        })
        .collect();

    Ok(CorpusFeatures {
        ids,
        location,
        text_vocab,
        text_tfidf,
        text_embeddings,
        caption_vocab,
        caption_tfidf,
        caption_embeddings,
    })
}

fn rows_dim(rows: &[TweetRow]) -> usize {
    rows.first().map_or(0, |r| r.text_emb.len())
}
