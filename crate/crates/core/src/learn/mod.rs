//! Native classifiers and the evaluation harness: undersampling, stratified
//! cross-validation with inner grid search, and the per-risk task datasets.
//!
//! Model kernels are generic over the scalar type. All randomness is seeded
//! and sub-seeds hashed per unit, so parallel schedules never change
//! results.

pub mod cv;
pub mod forest;
pub mod knn;
pub mod svm;
pub mod tree;

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::annotations::RiskReason;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::mix;

pub use cv::{
    cross_validate, cross_validate_with, grid_search, metrics, AuditStage, CvConfig, EvalMetrics,
    FoldFeaturizer, FoldMetrics, LeakageAudit, PrecomputedFeatures,
};
pub use forest::{FeatureSubset, ForestParams, RandomForestModel};
pub use knn::{KnnModel, KnnParams};
pub use svm::{LinearSvmModel, SvmParams};
pub use tree::{DecisionTreeModel, TreeParams};

/// Dense row-major numeric matrix with named columns and a per-cell missing
/// mask. Training inputs must be imputed first; prediction paths assume no
/// missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<T> {
    names: Vec<String>,
    data: Vec<T>,
    missing: Vec<bool>,
    n_rows: usize,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::data("feature matrix column names must be unique"));
        }
        Ok(FeatureMatrix {
            names,
            data: Vec::new(),
            missing: Vec::new(),
            n_rows: 0,
        })
    }

    pub fn push_row(&mut self, values: &[T], missing: &[bool]) -> Result<()> {
        if values.len() != self.names.len() || missing.len() != self.names.len() {
            return Err(Error::data(format!(
                "row width {} does not match {} columns",
                values.len(),
                self.names.len()
            )));
        }
        self.data.extend_from_slice(values);
        self.missing.extend_from_slice(missing);
        self.n_rows += 1;
        Ok(())
    }

    pub fn push_complete_row(&mut self, values: &[T]) -> Result<()> {
        let missing = vec![false; values.len()];
        self.push_row(values, &missing)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.names.len() + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.names.len() + col]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn row(&self, row: usize) -> &[T] {
        let w = self.names.len();
        &self.data[row * w..(row + 1) * w]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T, missing: bool) {
        let i = row * self.names.len() + col;
        self.data[i] = value;
        self.missing[i] = missing;
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let w = self.names.len();
        let mut data = Vec::with_capacity(rows.len() * w);
        let mut missing = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            data.extend_from_slice(&self.data[r * w..(r + 1) * w]);
            missing.extend_from_slice(&self.missing[r * w..(r + 1) * w]);
        }
        FeatureMatrix {
            names: self.names.clone(),
            data,
            missing,
            n_rows: rows.len(),
        }
    }

    pub fn select_cols(&self, keep: &[usize]) -> Self {
        let w = self.names.len();
        let names: Vec<String> = keep.iter().map(|&c| self.names[c].clone()).collect();
        let mut data = Vec::with_capacity(self.n_rows * keep.len());
        let mut missing = Vec::with_capacity(self.n_rows * keep.len());
        for r in 0..self.n_rows {
            for &c in keep {
                data.push(self.data[r * w + c]);
                missing.push(self.missing[r * w + c]);
            }
        }
        FeatureMatrix {
            names,
            data,
            missing,
            n_rows: self.n_rows,
        }
    }

    pub fn select_cols_by(&self, mut pred: impl FnMut(&str) -> bool) -> Self {
        let keep: Vec<usize> = (0..self.names.len())
            .filter(|&c| pred(&self.names[c]))
            .collect();
        self.select_cols(&keep)
    }
}

impl FeatureMatrix<f64> {
    /// Write `id,<columns...>` CSV; missing cells are empty.
    pub fn write_csv(&self, ids: &[String], path: &Path) -> Result<()> {
        if ids.len() != self.n_rows {
            return Err(Error::data("id column length does not match matrix rows"));
        }
        let mut wtr = csv::Writer::from_path(path).map_err(Error::Csv)?;
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header).map_err(Error::Csv)?;
        for r in 0..self.n_rows {
            let mut rec = vec![ids[r].clone()];
            for c in 0..self.names.len() {
                if self.is_missing(r, c) {
                    rec.push(String::new());
                } else {
                    rec.push(format!("{:?}", self.get(r, c)));
                }
            }
            wtr.write_record(&rec).map_err(Error::Csv)?;
        }
        wtr.flush()
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Read a features CSV written by [`write_csv`]: empty cells are missing.
    pub fn read_csv(path: &Path) -> Result<(Vec<String>, FeatureMatrix<f64>)> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(Error::Csv)?;
        let headers = rdr.headers().map_err(Error::Csv)?.clone();
        if headers.is_empty() || &headers[0] != "id" {
            return Err(Error::data(format!(
                "{}: first column must be 'id'",
                path.display()
            )));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut matrix = FeatureMatrix::new(names)?;
        let mut ids = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::data(format!(
                    "{} row {}: {} fields, expected {}",
                    path.display(),
                    i + 2,
                    rec.len(),
                    headers.len()
                )));
            }
            ids.push(rec[0].to_string());
            let mut values = Vec::with_capacity(matrix.n_cols());
            let mut missing = Vec::with_capacity(matrix.n_cols());
            for cell in rec.iter().skip(1) {
                if cell.is_empty() {
                    values.push(0.0);
                    missing.push(true);
                } else {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::data(format!(
                            "{} row {}: {cell:?} is not a number",
                            path.display(),
                            i + 2
                        ))
                    })?;
                    values.push(v);
                    missing.push(false);
                }
            }
            matrix.push_row(&values, &missing)?;
        }
        Ok((ids, matrix))
    }
}

/// Column-median imputer fitted on training rows only; missing cells take
/// the training median (zero when a column is entirely missing).
#[derive(Debug, Clone)]
pub struct Imputer<T> {
    medians: Vec<T>,
}

impl<T: Scalar> Imputer<T> {
    pub fn fit(x: &FeatureMatrix<T>) -> Self {
        let mut medians = Vec::with_capacity(x.n_cols());
        for c in 0..x.n_cols() {
            let mut present: Vec<T> = (0..x.n_rows())
                .filter(|&r| !x.is_missing(r, c))
                .map(|r| x.get(r, c))
                .collect();
            if present.is_empty() {
                medians.push(T::zero());
                continue;
            }
            present.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let mid = present.len() / 2;
            let median = if present.len() % 2 == 1 {
                present[mid]
            } else {
                (present[mid - 1] + present[mid]) / T::from_count(2)
            };
            medians.push(median);
        }
        Imputer { medians }
    }

    pub fn transform(&self, x: &mut FeatureMatrix<T>) {
        for r in 0..x.n_rows() {
            for c in 0..x.n_cols() {
                if x.is_missing(r, c) {
                    x.set(r, c, self.medians[c], false);
                }
            }
        }
    }
}

/// Indices of a balanced subsample: the majority class is downsampled
/// uniformly without replacement to the minority count, then the combined
/// order is reshuffled. Deterministic per seed.
pub fn undersample_indices(y: &[bool], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Learn(
            "undersampling requires both classes present".into(),
        ));
    }
    let (minority, mut majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0));
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());
    let mut combined = minority;
    combined.extend(majority);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    combined.shuffle(&mut rng);
    Ok(combined)
}

pub fn undersample<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    seed: u64,
) -> Result<(FeatureMatrix<T>, Vec<bool>)> {
    let idx = undersample_indices(y, seed)?;
    let ys = idx.iter().map(|&i| y[i]).collect();
    Ok((x.select_rows(&idx), ys))
}

/// Disjoint stratified folds covering every index; per-fold class counts
/// deviate from proportional by at most one.
pub fn stratified_kfold(y: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Learn(format!("k = {k} must be at least 2")));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    for (label, class) in [("positive", &pos), ("negative", &neg)] {
        if class.len() < k {
            return Err(Error::Learn(format!(
                "{label} class has {} rows, fewer than k = {k}",
                class.len()
            )));
        }
    }
    let mut folds = vec![Vec::new(); k];
    for (class_id, class) in [pos, neg].into_iter().enumerate() {
        let mut class = class;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, class_id as u64));
        class.shuffle(&mut rng);
        for (i, idx) in class.into_iter().enumerate() {
            folds[i % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

// ---------------------------------------------------------------------------
// Model specs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Knn(KnnParams),
    LinearSvm(SvmParams),
}

impl FamilySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            FamilySpec::DecisionTree(_) => "decision_tree",
            FamilySpec::RandomForest(_) => "random_forest",
            FamilySpec::Knn(_) => "knn",
            FamilySpec::LinearSvm(_) => "linear_svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: FamilySpec,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: FamilySpec, seed: u64) -> Result<Self> {
        let spec = ModelSpec { family, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            FamilySpec::DecisionTree(p) => p.validate(),
            FamilySpec::RandomForest(p) => p.validate(),
            FamilySpec::Knn(p) => p.validate(),
            FamilySpec::LinearSvm(p) => p.validate(),
        }
    }

    /// The default hyperparameter grid per family.
    pub fn default_grid(kind: &str, seed: u64) -> Result<Vec<ModelSpec>> {
        let mut grid = Vec::new();
        match kind {
            "decision_tree" => {
                for max_depth in [Some(3), Some(5), Some(10), None] {
                    grid.push(ModelSpec::new(
                        FamilySpec::DecisionTree(TreeParams {
                            max_depth,
                            min_samples_leaf: 1,
                        }),
                        seed,
                    )?);
                }
            }
            "random_forest" => {
                for n_trees in [50, 100, 200] {
                    for features in [FeatureSubset::Sqrt, FeatureSubset::Log2] {
                        grid.push(ModelSpec::new(
                            FamilySpec::RandomForest(ForestParams {
                                n_trees,
                                features_per_split: features,
                                max_depth: None,
                                min_samples_leaf: 1,
                                bootstrap: true,
                            }),
                            seed,
                        )?);
                    }
                }
            }
            "knn" => {
                for k in [3, 5, 7, 11] {
                    grid.push(ModelSpec::new(FamilySpec::Knn(KnnParams { k }), seed)?);
                }
            }
            "linear_svm" => {
                for lambda in [1e-4, 1e-3, 1e-2, 1e-1] {
                    grid.push(ModelSpec::new(
                        FamilySpec::LinearSvm(SvmParams { lambda, epochs: 50 }),
                        seed,
                    )?);
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown classifier family {other:?}"
                )))
            }
        }
        Ok(grid)
    }
}

/// A fitted classifier. KNN keeps its training rows; the SVM keeps weights
/// plus standardization statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrainedModel<T> {
    DecisionTree(DecisionTreeModel<T>),
    RandomForest(RandomForestModel<T>),
    Knn(KnnModel<T>),
    LinearSvm(LinearSvmModel<T>),
}

impl<T: Scalar> TrainedModel<T> {
    pub fn predict_row(&self, row: &[T]) -> bool {
        match self {
            TrainedModel::DecisionTree(m) => m.predict_row(row),
            TrainedModel::RandomForest(m) => m.predict_row(row),
            TrainedModel::Knn(m) => m.predict_row(row),
            TrainedModel::LinearSvm(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Vec<bool> {
        (0..x.n_rows())
            .map(|r| self.predict_row(x.row(r)))
            .collect()
    }
}

/// Fit a model. The matrix must be complete (imputed); `|y|` must match.
pub fn train<T: Scalar>(
    spec: &ModelSpec,
    x: &FeatureMatrix<T>,
    y: &[bool],
) -> Result<TrainedModel<T>> {
    train_with_ctx(spec, x, y, None)
}

/// Per-fit audit context: which original rows this training matrix holds.
#[derive(Clone, Copy)]
pub struct FitCtx<'a> {
    pub audit: &'a LeakageAudit,
    pub fold: usize,
    pub row_ids: &'a [usize],
}

pub(crate) fn train_with_ctx<T: Scalar>(
    spec: &ModelSpec,
    x: &FeatureMatrix<T>,
    y: &[bool],
    ctx: Option<FitCtx<'_>>,
) -> Result<TrainedModel<T>> {
    spec.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::Learn(format!(
            "{} labels for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if x.n_rows() == 0 {
        return Err(Error::Learn("cannot train on an empty matrix".into()));
    }
    if x.has_missing() {
        return Err(Error::Learn(
            "training input has missing cells; impute first".into(),
        ));
    }
    Ok(match &spec.family {
        FamilySpec::DecisionTree(p) => TrainedModel::DecisionTree(tree::fit(x, y, p)?),
        FamilySpec::RandomForest(p) => TrainedModel::RandomForest(forest::fit(x, y, p, spec.seed)?),
        FamilySpec::Knn(p) => TrainedModel::Knn(knn::fit(x, y, p)?),
        FamilySpec::LinearSvm(p) => {
            if let Some(ctx) = &ctx {
                ctx.audit
                    .record(ctx.fold, AuditStage::Standardize, ctx.row_ids);
            }
            TrainedModel::LinearSvm(svm::fit(x, y, p, spec.seed)?)
        }
    })
}

// ---------------------------------------------------------------------------
// Feature blocks and risk tasks
// ---------------------------------------------------------------------------

/// Column-name prefixes tying every feature to its block: `txt:`, `img:`,
/// `loc:`; missing-indicator columns carry `miss:` before the block prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBlock {
    Text,
    Image,
    Location,
}

impl FeatureBlock {
    pub fn prefix(&self) -> &'static str {
        match self {
            FeatureBlock::Text => "txt",
            FeatureBlock::Image => "img",
            FeatureBlock::Location => "loc",
        }
    }
}

impl std::str::FromStr for FeatureBlock {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(FeatureBlock::Text),
            "image" | "img" => Ok(FeatureBlock::Image),
            "location" | "loc" => Ok(FeatureBlock::Location),
            other => Err(Error::config(format!("unknown feature block {other:?}"))),
        }
    }
}

/// The block a column belongs to, looking through any `miss:` prefix.
pub fn block_of_column(name: &str) -> Option<FeatureBlock> {
    let name = name.strip_prefix("miss:").unwrap_or(name);
    match name.split(':').next() {
        Some("txt") => Some(FeatureBlock::Text),
        Some("img") => Some(FeatureBlock::Image),
        Some("loc") => Some(FeatureBlock::Location),
        _ => None,
    }
}

/// A non-empty subset of blocks; selects exactly those blocks' columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig(BTreeSet<FeatureBlock>);

impl FeatureConfig {
    pub fn new(blocks: impl IntoIterator<Item = FeatureBlock>) -> Result<Self> {
        let set: BTreeSet<FeatureBlock> = blocks.into_iter().collect();
        if set.is_empty() {
            return Err(Error::config("feature config needs at least one block"));
        }
        Ok(FeatureConfig(set))
    }

    pub fn contains(&self, block: FeatureBlock) -> bool {
        self.0.contains(&block)
    }

    pub fn selects(&self, column: &str) -> bool {
        block_of_column(column).is_some_and(|b| self.0.contains(&b))
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (block, name) in [
            (FeatureBlock::Text, "text"),
            (FeatureBlock::Image, "image"),
            (FeatureBlock::Location, "location"),
        ] {
            if self.0.contains(&block) {
                parts.push(name);
            }
        }
        parts.join("+")
    }

    /// The seven block combinations of the overall-classification table.
    pub fn all_seven() -> Vec<FeatureConfig> {
        use FeatureBlock::*;
        [
            vec![Image],
            vec![Text],
            vec![Location],
            vec![Image, Location],
            vec![Text, Location],
            vec![Text, Image],
            vec![Text, Image, Location],
        ]
        .into_iter()
        .map(|blocks| FeatureConfig::new(blocks).expect("non-empty"))
        .collect()
    }
}

pub fn select_blocks<T: Scalar>(x: &FeatureMatrix<T>, cfg: &FeatureConfig) -> FeatureMatrix<T> {
    x.select_cols_by(|name| cfg.selects(name))
}

/// The three per-risk classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskTask {
    Water,
    Height,
    VehicleRoad,
}

impl RiskTask {
    pub fn as_str(&self) -> &'static str {
        match self {
            RiskTask::Water => "water",
            RiskTask::Height => "height",
            RiskTask::VehicleRoad => "vehicle_road",
        }
    }

    /// Reasons counting as positive for this task; height-and-water feeds
    /// both the water and height tasks.
    pub fn matches(&self, reasons: &BTreeSet<RiskReason>) -> bool {
        match self {
            RiskTask::Water => {
                reasons.contains(&RiskReason::Water)
                    || reasons.contains(&RiskReason::HeightAndWater)
            }
            RiskTask::Height => {
                reasons.contains(&RiskReason::Height)
                    || reasons.contains(&RiskReason::HeightAndWater)
            }
            RiskTask::VehicleRoad => {
                reasons.contains(&RiskReason::Vehicle) || reasons.contains(&RiskReason::Road)
            }
        }
    }

    /// Location columns relevant to the task.
    pub fn location_columns(&self) -> &'static [&'static str] {
        match self {
            RiskTask::Water => &["min_water_dist_px", "water_fraction"],
            RiskTask::Height => &[
                "elev_here",
                "max_elev_nearby",
                "max_drop_from_here",
                "max_pairwise_range",
            ],
            RiskTask::VehicleRoad => &["rail_dist_m", "road_dist_m"],
        }
    }

    pub fn selects(&self, column: &str) -> bool {
        match block_of_column(column) {
            Some(FeatureBlock::Text) | Some(FeatureBlock::Image) => true,
            Some(FeatureBlock::Location) => {
                let bare = column.strip_prefix("miss:").unwrap_or(column);
                let bare = bare.strip_prefix("loc:").unwrap_or(bare);
                self.location_columns().contains(&bare)
            }
            None => false,
        }
    }
}

impl std::str::FromStr for RiskTask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "water" => Ok(RiskTask::Water),
            "height" => Ok(RiskTask::Height),
            "vehicle" | "road" | "vehicle_road" => Ok(RiskTask::VehicleRoad),
            other => Err(Error::config(format!("unknown risk task {other:?}"))),
        }
    }
}

/// Minimum positives below which a risk task is refused, mirroring the
/// categories dropped for insufficient positive samples.
pub const MIN_RISK_POSITIVES: usize = 20;

/// Build the per-risk dataset: labels from the annotations' risk reasons and
/// the feature matrix restricted to risk-relevant location columns (text and
/// image blocks always included).
pub fn risk_dataset<T: Scalar>(
    reason_sets: &[BTreeSet<RiskReason>],
    x: &FeatureMatrix<T>,
    task: RiskTask,
) -> Result<(FeatureMatrix<T>, Vec<bool>)> {
    if reason_sets.len() != x.n_rows() {
        return Err(Error::Learn(format!(
            "{} annotation rows for {} feature rows",
            reason_sets.len(),
            x.n_rows()
        )));
    }
    let y: Vec<bool> = reason_sets.iter().map(|r| task.matches(r)).collect();
    let positives = y.iter().filter(|&&p| p).count();
    if positives < MIN_RISK_POSITIVES {
        return Err(Error::Learn(format!(
            "risk task {} has only {positives} positive samples (need at least {MIN_RISK_POSITIVES}); \
             refusing to train a classifier that cannot generalize",
            task.as_str()
        )));
    }
    Ok((x.select_cols_by(|name| task.selects(name)), y))
}
