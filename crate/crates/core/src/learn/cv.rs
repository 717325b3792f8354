//! Evaluation: classification metrics in three averaging conventions,
//! inner-loop grid search, and leakage-free cross-validation.
//!
//! Inside every fold, undersampling, vocabulary fitting, imputation
//! statistics, grid search, and SVM standardization see training rows only;
//! the audit log records which original rows each stage touched so a test
//! can prove the test fold stayed untouched.

use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::learn::{
    stratified_kfold, train_with_ctx, undersample_indices, FeatureMatrix, FitCtx, Imputer,
    ModelSpec,
};
use crate::scalar::Scalar;
use crate::seed::mix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    fn add(&mut self, other: &Confusion) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self.true_neg += other.true_neg;
    }
}

/// Precision/recall/F1 for one class or averaging convention. When a class
/// receives no predictions its precision is reported as 0 with the flag set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> Prf {
    let (precision, precision_undefined) = if tp + fp == 0 {
        (0.0, true)
    } else {
        (tp as f64 / (tp + fp) as f64, false)
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    Prf {
        precision,
        recall,
        f1: harmonic(precision, recall),
        precision_undefined,
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Metrics for one evaluation: accuracy plus per-class and averaged
/// precision/recall/F1. F1 is always the harmonic mean of the reported
/// precision and recall of its convention.
#[derive(Debug, Clone, Serialize)]
pub struct FoldMetrics {
    pub accuracy: f64,
    pub positive: Prf,
    pub negative: Prf,
    pub macro_avg: Prf,
    pub weighted_avg: Prf,
    pub confusion: Confusion,
}

/// Compute metrics with `positive_class` deciding which label is positive.
pub fn metrics(y_true: &[bool], y_pred: &[bool], positive_class: bool) -> Result<FoldMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Learn(format!(
            "{} predictions for {} labels",
            y_pred.len(),
            y_true.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Learn("metrics need at least one example".into()));
    }
    let mut c = Confusion::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == positive_class, p == positive_class) {
            (true, true) => c.true_pos += 1,
            (false, true) => c.false_pos += 1,
            (true, false) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    let accuracy = (c.true_pos + c.true_neg) as f64 / c.total() as f64;
    let positive = prf(c.true_pos, c.false_pos, c.false_neg);
    let negative = prf(c.true_neg, c.false_neg, c.false_pos);

    let macro_p = (positive.precision + negative.precision) / 2.0;
    let macro_r = (positive.recall + negative.recall) / 2.0;
    let macro_avg = Prf {
        precision: macro_p,
        recall: macro_r,
        f1: harmonic(macro_p, macro_r),
        precision_undefined: positive.precision_undefined || negative.precision_undefined,
    };

    let n_pos = (c.true_pos + c.false_neg) as f64;
    let n_neg = (c.true_neg + c.false_pos) as f64;
    let n = n_pos + n_neg;
    let w_p = (n_pos * positive.precision + n_neg * negative.precision) / n;
    let w_r = (n_pos * positive.recall + n_neg * negative.recall) / n;
    let weighted_avg = Prf {
        precision: w_p,
        recall: w_r,
        f1: harmonic(w_p, w_r),
        precision_undefined: positive.precision_undefined || negative.precision_undefined,
    };

    Ok(FoldMetrics {
        accuracy,
        positive,
        negative,
        macro_avg,
        weighted_avg,
        confusion: c,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

fn summarize(values: impl Iterator<Item = f64> + Clone) -> Summary {
    let n = values.clone().count();
    if n == 0 {
        return Summary { mean: 0.0, sd: 0.0 };
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, sd }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrfSummary {
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
}

fn summarize_prf(folds: &[FoldMetrics], pick: impl Fn(&FoldMetrics) -> Prf) -> PrfSummary {
    PrfSummary {
        precision: summarize(folds.iter().map(|f| pick(f).precision)),
        recall: summarize(folds.iter().map(|f| pick(f).recall)),
        f1: summarize(folds.iter().map(|f| pick(f).f1)),
    }
}

/// Fold-wise metrics with their mean and standard deviation, plus the specs
/// the inner grid search chose per fold.
#[derive(Debug, Clone, Serialize)]
pub struct EvalMetrics {
    pub accuracy: Summary,
    pub positive: PrfSummary,
    pub negative: PrfSummary,
    pub macro_avg: PrfSummary,
    pub weighted_avg: PrfSummary,
    pub confusion: Confusion,
    pub folds: Vec<FoldMetrics>,
    pub chosen: Vec<ModelSpec>,
}

impl EvalMetrics {
    fn from_folds(folds: Vec<FoldMetrics>, chosen: Vec<ModelSpec>) -> Self {
        let mut confusion = Confusion::default();
        for f in &folds {
            confusion.add(&f.confusion);
        }
        EvalMetrics {
            accuracy: summarize(folds.iter().map(|f| f.accuracy)),
            positive: summarize_prf(&folds, |f| f.positive),
            negative: summarize_prf(&folds, |f| f.negative),
            macro_avg: summarize_prf(&folds, |f| f.macro_avg),
            weighted_avg: summarize_prf(&folds, |f| f.weighted_avg),
            confusion,
            folds,
            chosen,
        }
    }
}

// ---------------------------------------------------------------------------
// Leakage audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStage {
    Undersample,
    VocabFit,
    Impute,
    GridSearch,
    Standardize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditEvent {
    pub fold: usize,
    pub stage: AuditStage,
    /// Original row indices the stage read.
    pub rows: Vec<usize>,
}

/// Thread-safe log of which rows each training-only stage touched.
#[derive(Debug, Default)]
pub struct LeakageAudit {
    events: Mutex<Vec<AuditEvent>>,
}

impl LeakageAudit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, fold: usize, stage: AuditStage, rows: &[usize]) {
        self.events.lock().expect("audit lock").push(AuditEvent {
            fold,
            stage,
            rows: rows.to_vec(),
        });
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().expect("audit lock").clone()
    }
}

// ---------------------------------------------------------------------------
// Fold featurization
// ---------------------------------------------------------------------------

/// Produces aligned train/test feature matrices for a fold. Implementations
/// that fit anything (vocabularies, statistics) must fit on the given train
/// rows only and report the rows they read to the audit.
pub trait FoldFeaturizer<T: Scalar>: Sync {
    fn n_rows(&self) -> usize;

    fn featurize(
        &self,
        train: &[usize],
        test: &[usize],
        audit: Option<(&LeakageAudit, usize)>,
    ) -> Result<(FeatureMatrix<T>, FeatureMatrix<T>)>;
}

/// Featurizer over an already-computed matrix; selection only, nothing is
/// fitted.
pub struct PrecomputedFeatures<'a, T> {
    pub x: &'a FeatureMatrix<T>,
}

impl<T: Scalar> FoldFeaturizer<T> for PrecomputedFeatures<'_, T> {
    fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    fn featurize(
        &self,
        train: &[usize],
        test: &[usize],
        _audit: Option<(&LeakageAudit, usize)>,
    ) -> Result<(FeatureMatrix<T>, FeatureMatrix<T>)> {
        Ok((self.x.select_rows(train), self.x.select_rows(test)))
    }
}

// ---------------------------------------------------------------------------
// Grid search and cross-validation
// ---------------------------------------------------------------------------

/// Pick the spec with the highest mean inner-CV accuracy; ties keep grid
/// order. A cell whose training fails anywhere scores 0.
pub fn grid_search<T: Scalar>(
    grid: &[ModelSpec],
    x_train: &FeatureMatrix<T>,
    y_train: &[bool],
    inner_k: usize,
    seed: u64,
    ctx: Option<FitCtx<'_>>,
) -> Result<ModelSpec> {
    if grid.is_empty() {
        return Err(Error::Learn("grid search needs a non-empty grid".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0].clone());
    }
    let folds = stratified_kfold(y_train, inner_k, mix(seed, 0x6e6e))?;

    let mut best: Option<(f64, &ModelSpec)> = None;
    for spec in grid {
        let mut total = 0.0;
        let mut failed = false;
        for fold in &folds {
            let train_rows: Vec<usize> = (0..y_train.len()).filter(|i| !fold.contains(i)).collect();
            let x_tr = x_train.select_rows(&train_rows);
            let y_tr: Vec<bool> = train_rows.iter().map(|&i| y_train[i]).collect();
            let child_ctx = ctx.map(|c| FitCtx {
                audit: c.audit,
                fold: c.fold,
                row_ids: c.row_ids,
            });
            // Inner fits see subsets of the outer-train rows; reuse the
            // parent row set for the audit (a superset of what was read).
            match train_with_ctx(spec, &x_tr, &y_tr, child_ctx) {
                Ok(model) => {
                    let x_te = x_train.select_rows(fold);
                    let y_te: Vec<bool> = fold.iter().map(|&i| y_train[i]).collect();
                    let preds = model.predict(&x_te);
                    let correct = preds.iter().zip(&y_te).filter(|(p, t)| p == t).count();
                    total += correct as f64 / y_te.len() as f64;
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        let score = if failed {
            0.0
        } else {
            total / folds.len() as f64
        };
        if best.is_none() || score > best.unwrap().0 {
            best = Some((score, spec));
        }
    }
    Ok(best.expect("non-empty grid").1.clone())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CvConfig {
    pub k: usize,
    pub inner_k: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            inner_k: 3,
            seed: 0,
        }
    }
}

/// Cross-validate with per-fold featurization. Per fold: undersample the
/// training portion, featurize (fitting on the undersampled train rows
/// only), impute from training statistics, grid-search on the training
/// rows, fit, and evaluate on the untouched test fold.
pub fn cross_validate_with<T: Scalar>(
    grid: &[ModelSpec],
    featurizer: &dyn FoldFeaturizer<T>,
    y: &[bool],
    cfg: &CvConfig,
    audit: Option<&LeakageAudit>,
) -> Result<EvalMetrics> {
    if featurizer.n_rows() != y.len() {
        return Err(Error::Learn(format!(
            "{} labels for {} featurizer rows",
            y.len(),
            featurizer.n_rows()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Learn(
            "cross-validation needs a non-empty grid".into(),
        ));
    }
    let folds = stratified_kfold(y, cfg.k, mix(cfg.seed, 0xF01D))?;

    let mut fold_metrics = Vec::with_capacity(folds.len());
    let mut chosen = Vec::with_capacity(folds.len());
    for (fold_i, test) in folds.iter().enumerate() {
        let train_all: Vec<usize> = (0..y.len()).filter(|i| !test.contains(i)).collect();
        let y_train_all: Vec<bool> = train_all.iter().map(|&i| y[i]).collect();

        let us_local = undersample_indices(&y_train_all, mix(cfg.seed, 1_000 + fold_i as u64))?;
        let us_ids: Vec<usize> = us_local.iter().map(|&i| train_all[i]).collect();
        if let Some(audit) = audit {
            audit.record(fold_i, AuditStage::Undersample, &us_ids);
        }

        let (mut x_tr, mut x_te) =
            featurizer.featurize(&us_ids, test, audit.map(|a| (a, fold_i)))?;
        let y_tr: Vec<bool> = us_ids.iter().map(|&i| y[i]).collect();
        let y_te: Vec<bool> = test.iter().map(|&i| y[i]).collect();

        if x_tr.has_missing() || x_te.has_missing() {
            let imputer = Imputer::fit(&x_tr);
            if let Some(audit) = audit {
                audit.record(fold_i, AuditStage::Impute, &us_ids);
            }
            imputer.transform(&mut x_tr);
            imputer.transform(&mut x_te);
        }

        let ctx = audit.map(|a| FitCtx {
            audit: a,
            fold: fold_i,
            row_ids: &us_ids,
        });
        let best = if grid.len() == 1 {
            grid[0].clone()
        } else {
            if let Some(audit) = audit {
                audit.record(fold_i, AuditStage::GridSearch, &us_ids);
            }
            grid_search(
                grid,
                &x_tr,
                &y_tr,
                cfg.inner_k,
                mix(cfg.seed, 2_000 + fold_i as u64),
                ctx,
            )?
        };

        let model = train_with_ctx(&best, &x_tr, &y_tr, ctx)?;
        let preds = model.predict(&x_te);
        fold_metrics.push(metrics(&y_te, &preds, true)?);
        chosen.push(best);
    }

    Ok(EvalMetrics::from_folds(fold_metrics, chosen))
}

/// Cross-validate over a precomputed feature matrix.
pub fn cross_validate<T: Scalar>(
    grid: &[ModelSpec],
    x: &FeatureMatrix<T>,
    y: &[bool],
    cfg: &CvConfig,
    audit: Option<&LeakageAudit>,
) -> Result<EvalMetrics> {
    cross_validate_with(grid, &PrecomputedFeatures { x }, y, cfg, audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{FamilySpec, KnnParams, SvmParams, TreeParams};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix<f64> {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        let mut m = FeatureMatrix::new(names).unwrap();
        for row in rows {
            m.push_complete_row(row).unwrap();
        }
        m
    }

    #[test]
    fn perfect_predictions_score_one() {
        let y = vec![true, false, true, false];
        let m = metrics(&y, &y, true).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.positive.f1, 1.0);
        assert_eq!(m.macro_avg.f1, 1.0);
        assert_eq!(m.weighted_avg.precision, 1.0);
    }

    #[test]
    fn all_negative_predictions_on_balanced_data() {
        let y_true = vec![true, true, false, false];
        let y_pred = vec![false, false, false, false];
        let m = metrics(&y_true, &y_pred, true).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.positive.recall, 0.0);
        assert_eq!(m.positive.precision, 0.0);
        assert!(m.positive.precision_undefined);
        assert!(!m.negative.precision_undefined);
    }

    #[test]
    fn hand_confusion_example() {
        // TP=3, FP=1, FN=2, TN=4.
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        for _ in 0..3 {
            y_true.push(true);
            y_pred.push(true);
        }
        y_true.push(false);
        y_pred.push(true);
        for _ in 0..2 {
            y_true.push(true);
            y_pred.push(false);
        }
        for _ in 0..4 {
            y_true.push(false);
            y_pred.push(false);
        }
        let m = metrics(&y_true, &y_pred, true).unwrap();
        assert!((m.positive.precision - 0.75).abs() < 1e-12);
        assert!((m.positive.recall - 0.6).abs() < 1e-12);
        assert!((m.positive.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        assert_eq!(
            m.confusion,
            Confusion {
                true_pos: 3,
                false_pos: 1,
                false_neg: 2,
                true_neg: 4
            }
        );
    }

    #[test]
    fn f1_is_harmonic_mean_of_reported_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let y_true: Vec<bool> = (0..30).map(|_| rng.gen_bool(0.5)).collect();
            let y_pred: Vec<bool> = (0..30).map(|_| rng.gen_bool(0.5)).collect();
            let m = metrics(&y_true, &y_pred, true).unwrap();
            for prf in [m.positive, m.negative, m.macro_avg, m.weighted_avg] {
                if prf.precision + prf.recall > 0.0 {
                    let expect = 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall);
                    assert!((prf.f1 - expect).abs() < 1e-12);
                } else {
                    assert_eq!(prf.f1, 0.0);
                }
            }
        }
    }

    #[test]
    fn positive_class_flip_swaps_roles() {
        let y_true = vec![true, true, false];
        let y_pred = vec![true, false, false];
        let a = metrics(&y_true, &y_pred, true).unwrap();
        let b = metrics(&y_true, &y_pred, false).unwrap();
        assert_eq!(a.positive.precision, b.negative.precision);
        assert_eq!(a.confusion.true_pos, b.confusion.true_neg);
    }

    /// Positives at odd integers >= 1, negatives at even integers <= -2, so
    /// no point ever coincides with a half-integer midpoint threshold.
    fn separable(n: usize) -> (FeatureMatrix<f64>, Vec<bool>) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                vec![if i % 2 == 0 {
                    i as f64 + 1.0
                } else {
                    -(i as f64) - 1.0
                }]
            })
            .collect();
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        (matrix(&rows), y)
    }

    #[test]
    fn grid_of_one_returns_that_spec() {
        let (x, y) = separable(20);
        let spec = ModelSpec::new(FamilySpec::DecisionTree(TreeParams::default()), 3).unwrap();
        let got = grid_search(&[spec.clone()], &x, &y, 3, 1, None).unwrap();
        assert_eq!(got, spec);
    }

    /// Staircase labels flip at a known depth: a depth-3 tree is needed for
    /// the 8-step staircase, deeper adds nothing.
    fn staircase() -> (FeatureMatrix<f64>, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for step in 0..8 {
            for j in 0..6 {
                rows.push(vec![step as f64 + j as f64 / 10.0]);
                y.push(step % 2 == 0);
            }
        }
        (matrix(&rows), y)
    }

    #[test]
    fn grid_search_finds_the_oracle_best_depth() {
        let (x, y) = staircase();
        let grid: Vec<ModelSpec> = [Some(1), Some(2), Some(3), Some(10)]
            .into_iter()
            .map(|max_depth| {
                ModelSpec::new(
                    FamilySpec::DecisionTree(TreeParams {
                        max_depth,
                        min_samples_leaf: 1,
                    }),
                    5,
                )
                .unwrap()
            })
            .collect();
        let best = grid_search(&grid, &x, &y, 3, 7, None).unwrap();

        // Oracle: exhaustively evaluate every cell the same way.
        let folds = stratified_kfold(&y, 3, mix(7, 0x6e6e)).unwrap();
        let mut scores = Vec::new();
        for spec in &grid {
            let mut total = 0.0;
            for fold in &folds {
                let train_rows: Vec<usize> = (0..y.len()).filter(|i| !fold.contains(i)).collect();
                let x_tr = x.select_rows(&train_rows);
                let y_tr: Vec<bool> = train_rows.iter().map(|&i| y[i]).collect();
                let model = crate::learn::train(spec, &x_tr, &y_tr).unwrap();
                let y_te: Vec<bool> = fold.iter().map(|&i| y[i]).collect();
                let preds = model.predict(&x.select_rows(fold));
                total += preds.iter().zip(&y_te).filter(|(p, t)| p == t).count() as f64
                    / y_te.len() as f64;
            }
            scores.push(total / folds.len() as f64);
        }
        let best_score = scores.iter().cloned().fold(f64::MIN, f64::max);
        let oracle_first_best = grid
            .iter()
            .zip(&scores)
            .find(|(_, s)| **s == best_score)
            .unwrap()
            .0;
        assert_eq!(&best, oracle_first_best);
        // Sanity: a deep-enough tree must be chosen over depth 1.
        match &best.family {
            FamilySpec::DecisionTree(p) => assert!(p.max_depth.unwrap_or(99) >= 3),
            _ => unreachable!(),
        }
    }

    #[test]
    fn grid_search_is_deterministic() {
        let (x, y) = staircase();
        let grid = ModelSpec::default_grid("knn", 3).unwrap();
        let a = grid_search(&grid, &x, &y, 3, 42, None).unwrap();
        let b = grid_search(&grid, &x, &y, 3, 42, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cv_on_separable_data_is_perfect() {
        let (x, y) = separable(60);
        let grid =
            vec![ModelSpec::new(FamilySpec::DecisionTree(TreeParams::default()), 1).unwrap()];
        let cfg = CvConfig {
            k: 5,
            inner_k: 3,
            seed: 9,
        };
        let report = cross_validate(&grid, &x, &y, &cfg, None).unwrap();
        assert_eq!(report.accuracy.mean, 1.0);
        assert_eq!(report.folds.len(), 5);
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let y: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
        let x = matrix(&rows);
        let grid = vec![ModelSpec::new(FamilySpec::Knn(KnnParams { k: 5 }), 2).unwrap()];
        let cfg = CvConfig {
            k: 5,
            inner_k: 3,
            seed: 4,
        };
        let report = cross_validate(&grid, &x, &y, &cfg, None).unwrap();
        assert!(
            (0.4..=0.6).contains(&report.accuracy.mean),
            "null accuracy {}",
            report.accuracy.mean
        );
    }

    #[test]
    fn aggregate_mean_equals_hand_average_of_folds() {
        let (x, y) = separable(40);
        let grid = vec![ModelSpec::new(FamilySpec::Knn(KnnParams { k: 3 }), 1).unwrap()];
        let cfg = CvConfig {
            k: 4,
            inner_k: 3,
            seed: 2,
        };
        let report = cross_validate(&grid, &x, &y, &cfg, None).unwrap();
        let hand: f64 =
            report.folds.iter().map(|f| f.accuracy).sum::<f64>() / report.folds.len() as f64;
        assert!((report.accuracy.mean - hand).abs() < 1e-12);
        let hand_f1: f64 =
            report.folds.iter().map(|f| f.macro_avg.f1).sum::<f64>() / report.folds.len() as f64;
        assert!((report.macro_avg.f1.mean - hand_f1).abs() < 1e-12);
    }

    #[test]
    fn audit_proves_no_test_rows_in_training_stages() {
        let (x, y) = separable(60);
        // SVM in the grid so standardization events appear.
        let grid = vec![
            ModelSpec::new(
                FamilySpec::LinearSvm(SvmParams {
                    lambda: 1e-2,
                    epochs: 10,
                }),
                3,
            )
            .unwrap(),
            ModelSpec::new(FamilySpec::Knn(KnnParams { k: 3 }), 3).unwrap(),
        ];
        let cfg = CvConfig {
            k: 4,
            inner_k: 3,
            seed: 6,
        };
        let audit = LeakageAudit::new();
        cross_validate(&grid, &x, &y, &cfg, Some(&audit)).unwrap();

        let folds = stratified_kfold(&y, cfg.k, mix(cfg.seed, 0xF01D)).unwrap();
        let events = audit.events();
        assert!(!events.is_empty());
        let mut stages_seen = std::collections::BTreeSet::new();
        for ev in &events {
            stages_seen.insert(format!("{:?}", ev.stage));
            for row in &ev.rows {
                assert!(
                    !folds[ev.fold].contains(row),
                    "fold {} stage {:?} touched test row {row}",
                    ev.fold,
                    ev.stage
                );
            }
        }
        assert!(stages_seen.contains("Undersample"));
        assert!(stages_seen.contains("GridSearch"));
        assert!(stages_seen.contains("Standardize"));
    }
}
