//! Text features for tweet bodies and image dense-captions: tokenization,
//! TF-IDF over unigrams and bigrams, and a deterministic hashed document
//! embedding behind the embedder interface.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_url, TweetRecord};
use crate::error::{Error, Result};
use crate::seed::{keyed_hash, mix};

/// Ordered lowercase tokens: hashtags stripped to their word, mentions kept
/// with their `@`, each emoji codepoint as its own `emoji:<hex>` token.
pub type TokenStream = Vec<String>;

fn is_emoji(c: char) -> bool {
    let cp = c as u32;
    (0x1F000..=0x1FAFF).contains(&cp) || (0x2600..=0x27BF).contains(&cp)
}

fn push_plain(out: &mut TokenStream, text: &str) {
    let mut current = String::new();
    for c in text.chars() {
        if is_emoji(c) {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(format!("emoji:{:x}", c as u32));
        } else if c.is_alphanumeric() {
            for lc in c.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
}

/// Tokenize tweet or caption text. URLs are removed whole; `#tag` yields
/// `tag`; `@user` keeps its `@`; everything splits on non-alphanumeric
/// boundaries and lowercases.
pub fn tokenize(text: &str) -> TokenStream {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            continue;
        }
        if let Some(stripped) = chunk.strip_prefix('#') {
            push_plain(&mut out, stripped.trim_start_matches('#'));
        } else if let Some(rest) = chunk.strip_prefix('@') {
            let name_len = rest
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .count();
            if name_len > 0 {
                let name: String = rest.chars().take(name_len).collect();
                out.push(format!("@{}", name.to_lowercase()));
                let tail: String = rest.chars().skip(name_len).collect();
                push_plain(&mut out, &tail);
            } else {
                push_plain(&mut out, rest);
            }
        } else {
            push_plain(&mut out, chunk);
        }
    }
    out
}

/// Unigrams plus adjacent bigrams (joined with `_`) of a token stream.
pub fn terms_of(doc: &[String]) -> Vec<String> {
    let mut terms: Vec<String> = doc.to_vec();
    for pair in doc.windows(2) {
        terms.push(format!("{}_{}", pair[0], pair[1]));
    }
    terms
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabTerm {
    pub term: String,
    pub index: usize,
    pub df: usize,
    pub idf: f64,
}

/// Term -> index map over unigrams and bigrams with smoothed IDF weights:
/// idf(t) = ln((1 + N) / (1 + df(t))) + 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub terms: Vec<VocabTerm>,
    pub fitted_on: usize,
    #[serde(skip)]
    lookup: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.lookup.get(term).copied()
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.terms[index].idf
    }

    fn rebuild_lookup(&mut self) {
        self.lookup = self
            .terms
            .iter()
            .map(|t| (t.term.clone(), t.index))
            .collect();
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut vocab: Vocabulary = serde_json::from_str(&text)?;
        vocab.rebuild_lookup();
        Ok(vocab)
    }

    /// Restrict to the `n` highest-df terms (ties broken lexicographically),
    /// reindexing densely. Used to cap TF-IDF width before tree training.
    pub fn truncated(&self, n: usize) -> Vocabulary {
        if self.terms.len() <= n {
            return self.clone();
        }
        let mut order: Vec<&VocabTerm> = self.terms.iter().collect();
        order.sort_by(|a, b| b.df.cmp(&a.df).then_with(|| a.term.cmp(&b.term)));
        order.truncate(n);
        let mut kept: Vec<VocabTerm> = order.into_iter().cloned().collect();
        kept.sort_by(|a, b| a.term.cmp(&b.term));
        for (i, t) in kept.iter_mut().enumerate() {
            t.index = i;
        }
        let mut vocab = Vocabulary {
            terms: kept,
            fitted_on: self.fitted_on,
            lookup: BTreeMap::new(),
        };
        vocab.rebuild_lookup();
        vocab
    }
}

/// Fit a vocabulary over token streams: unigrams and adjacent bigrams with
/// document frequency >= `min_df`, capped to the `max_features` most frequent
/// (ties broken lexicographically). Indices are dense, assigned in term
/// order, so fitting is independent of document order.
pub fn fit_vocab(docs: &[TokenStream], min_df: usize, max_features: usize) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::data("cannot fit a vocabulary on zero documents"));
    }
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::data(
            "cannot fit a vocabulary: all documents are empty",
        ));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<String> = terms_of(doc).into_iter().collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let mut candidates: Vec<(String, usize)> =
        df.into_iter().filter(|&(_, d)| d >= min_df).collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    candidates.truncate(max_features);
    candidates.sort_by(|a, b| a.0.cmp(&b.0));

    let n = docs.len();
    let terms: Vec<VocabTerm> = candidates
        .into_iter()
        .enumerate()
        .map(|(index, (term, df))| VocabTerm {
            term,
            index,
            df,
            idf: ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0,
        })
        .collect();
    let mut vocab = Vocabulary {
        terms,
        fitted_on: n,
        lookup: BTreeMap::new(),
    };
    vocab.rebuild_lookup();
    Ok(vocab)
}

/// Sparse vector as sorted (index, value) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector(pub Vec<(usize, f64)>);

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.0 {
            out[i] = v;
        }
        out
    }

    /// `index:value` pairs separated by spaces.
    pub fn to_text(&self) -> String {
        self.0
            .iter()
            .map(|(i, v)| format!("{i}:{v:?}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// TF-IDF of a document against a fitted vocabulary: raw term count times
/// idf, then L2-normalized. Out-of-vocabulary terms are ignored.
pub fn tfidf(doc: &[String], vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for term in terms_of(doc) {
        if let Some(i) = vocab.index_of(&term) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, c)| (i, c * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    SparseVector(entries)
}

/// Maps documents to fixed-dimension dense vectors. The hashed embedder is
/// the shipped implementation; a learned one can be plugged in behind the
/// same interface.
pub trait DocumentEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Unit-norm vector for non-empty documents, the zero vector otherwise.
    fn embed(&self, doc: &[String]) -> Vec<f64>;
}

/// Signed feature hashing over unigrams and bigrams: index and sign come
/// from independent keyed hashes, counts accumulate, the result is
/// L2-normalized. Deterministic in (doc, dim, seed).
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config(format!("embedding dim {dim} must be >= 2")));
        }
        Ok(HashingEmbedder { dim, seed })
    }
}

impl HashingEmbedder {
    /// Accumulate a bag of terms directly. Document concatenation in bag
    /// space is count scaling, which normalization cancels exactly.
    pub fn embed_term_bag(&self, terms: &[String]) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.dim];
        for term in terms {
            let idx = (keyed_hash(mix(self.seed, 1), term.as_bytes()) % self.dim as u64) as usize;
            let sign = if keyed_hash(mix(self.seed, 2), term.as_bytes()) & 1 == 0 {
                1.0
            } else {
                -1.0
            };
            acc[idx] += sign;
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut acc {
                *v /= norm;
            }
        }
        acc
    }
}

impl DocumentEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, doc: &[String]) -> Vec<f64> {
        self.embed_term_bag(&terms_of(doc))
    }
}

/// Caption-derived features for one tweet: sentences joined with single
/// spaces into one document, then vectorized like any text. Missing captions
/// yield zero vectors with the flag set.
#[derive(Debug, Clone)]
pub struct CaptionFeatures {
    pub tfidf: SparseVector,
    pub embedding: Vec<f64>,
    pub missing: bool,
}

pub fn caption_tokens(record: &TweetRecord) -> Option<TokenStream> {
    record.captions.as_ref().map(|c| tokenize(&c.join(" ")))
}

pub fn caption_features(
    record: &TweetRecord,
    vocab: &Vocabulary,
    embedder: &dyn DocumentEmbedder,
) -> CaptionFeatures {
    match caption_tokens(record) {
        Some(tokens) => CaptionFeatures {
            tfidf: tfidf(&tokens, vocab),
            embedding: embedder.embed(&tokens),
            missing: false,
        },
        None => CaptionFeatures {
            tfidf: SparseVector(Vec::new()),
            embedding: vec![0.0; embedder.dim()],
            missing: true,
        },
    }
}
