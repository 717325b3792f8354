//! Linear SVM: L2-regularized hinge loss minimized by epoch-based stochastic
//! subgradient descent with step 1/(lambda t). Features are standardized to
//! zero mean and unit variance using training statistics; the epoch shuffle
//! is seeded, so training is deterministic.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::FeatureMatrix;
use crate::scalar::Scalar;
use crate::seed::mix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-3,
            epochs: 50,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::config("svm lambda must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("svm needs at least one epoch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSvmModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    /// Training means and standard deviations applied before prediction.
    pub means: Vec<T>,
    pub stds: Vec<T>,
}

impl<T: Scalar> LinearSvmModel<T> {
    fn margin(&self, row: &[T]) -> T {
        let mut acc = self.bias;
        for ((&v, &m), (&s, &w)) in row
            .iter()
            .zip(&self.means)
            .zip(self.stds.iter().zip(&self.weights))
        {
            acc = acc + w * ((v - m) / s);
        }
        acc
    }

    /// Positive margin predicts the positive class; zero goes negative.
    pub fn predict_row(&self, row: &[T]) -> bool {
        self.margin(row) > T::zero()
    }
}

/// Full hinge objective: lambda/2 ||w||^2 + mean_i max(0, 1 - y_i f(x_i)).
pub fn hinge_objective<T: Scalar>(
    model: &LinearSvmModel<T>,
    x: &FeatureMatrix<T>,
    y: &[bool],
    lambda: f64,
) -> f64 {
    let lambda = T::from_f64(lambda).unwrap();
    let norm2 = model.weights.iter().fold(T::zero(), |acc, &w| acc + w * w);
    let mut hinge = T::zero();
    for r in 0..x.n_rows() {
        let sign = if y[r] { T::one() } else { -T::one() };
        let loss = (T::one() - sign * model.margin(x.row(r))).max(T::zero());
        hinge = hinge + loss;
    }
    let obj = lambda / T::from_count(2) * norm2 + hinge / T::from_count(x.n_rows());
    obj.to_f64().unwrap()
}

pub fn fit<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    params: &SvmParams,
    seed: u64,
) -> Result<LinearSvmModel<T>> {
    fit_inner(x, y, params, seed, false).map(|(model, _)| model)
}

/// Fit and report the hinge objective after each epoch.
pub fn fit_traced<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    params: &SvmParams,
    seed: u64,
) -> Result<(LinearSvmModel<T>, Vec<f64>)> {
    fit_inner(x, y, params, seed, true)
}

fn fit_inner<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    params: &SvmParams,
    seed: u64,
    trace: bool,
) -> Result<(LinearSvmModel<T>, Vec<f64>)> {
    params.validate()?;
    let n = x.n_rows();
    let p = x.n_cols();

    // Standardization statistics from the training rows only. Constant
    // columns keep scale 1 so they standardize to zero.
    let mut means = vec![T::zero(); p];
    for r in 0..n {
        for (c, m) in means.iter_mut().enumerate() {
            *m = *m + x.get(r, c);
        }
    }
    for m in &mut means {
        *m = *m / T::from_count(n);
    }
    let mut stds = vec![T::zero(); p];
    for r in 0..n {
        for c in 0..p {
            let d = x.get(r, c) - means[c];
            stds[c] = stds[c] + d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / T::from_count(n)).sqrt();
        if *s == T::zero() {
            *s = T::one();
        }
    }

    let mut standardized: Vec<T> = Vec::with_capacity(n * p);
    for r in 0..n {
        let row = x.row(r);
        for c in 0..p {
            standardized.push((row[c] - means[c]) / stds[c]);
        }
    }
    let srow = |r: usize| &standardized[r * p..(r + 1) * p];

    let lambda = T::from_f64(params.lambda).unwrap();
    let mut weights = vec![T::zero(); p];
    let mut bias = T::zero();
    let mut t: u64 = 1;
    let mut order: Vec<usize> = (0..n).collect();
    let mut objectives = Vec::with_capacity(params.epochs);

    for epoch in 0..params.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, epoch as u64));
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = T::one() / (lambda * T::from_f64(t as f64).unwrap());
            let sign = if y[i] { T::one() } else { -T::one() };
            let row = srow(i);
            let mut margin = bias;
            for (w, &v) in weights.iter().zip(row) {
                margin = margin + *w * v;
            }
            let shrink = T::one() - eta * lambda;
            for w in &mut weights {
                *w = *w * shrink;
            }
            if sign * margin < T::one() {
                for (w, &v) in weights.iter_mut().zip(row) {
                    *w = *w + eta * sign * v;
                }
                bias = bias + eta * sign;
            }
            t += 1;
        }
        if trace {
            let snapshot = LinearSvmModel {
                weights: weights.clone(),
                bias,
                means: vec![T::zero(); p],
                stds: vec![T::one(); p],
            };
            // Objective over the standardized data the optimizer sees.
            let mut sx = FeatureMatrix::new(x.names().to_vec())?;
            for r in 0..n {
                sx.push_complete_row(srow(r))?;
            }
            objectives.push(hinge_objective(&snapshot, &sx, y, params.lambda));
        }
    }

    Ok((
        LinearSvmModel {
            weights,
            bias,
            means,
            stds,
        },
        objectives,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix<f64> {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        let mut m = FeatureMatrix::new(names).unwrap();
        for row in rows {
            m.push_complete_row(row).unwrap();
        }
        m
    }

    /// Two clusters separated by a margin of 2 on the first feature.
    fn margin2(n_per_class: usize) -> (FeatureMatrix<f64>, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n_per_class {
            let jitter = (i as f64) / (n_per_class as f64);
            rows.push(vec![2.0 + jitter, jitter - 0.5]);
            y.push(true);
            rows.push(vec![-2.0 - jitter, 0.5 - jitter]);
            y.push(false);
        }
        (matrix(&rows), y)
    }

    #[test]
    fn separable_data_reaches_full_training_accuracy() {
        let (x, y) = margin2(20);
        let model = fit(
            &x,
            &y,
            &SvmParams {
                lambda: 1e-3,
                epochs: 50,
            },
            7,
        )
        .unwrap();
        for r in 0..x.n_rows() {
            assert_eq!(model.predict_row(x.row(r)), y[r], "row {r}");
        }
    }

    #[test]
    fn objective_decreases_over_epochs_on_separable_data() {
        let (x, y) = margin2(25);
        let (_, trace) = fit_traced(
            &x,
            &y,
            &SvmParams {
                lambda: 1e-2,
                epochs: 40,
            },
            3,
        )
        .unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = margin2(10);
        let a = fit(&x, &y, &SvmParams::default(), 11).unwrap();
        let b = fit(&x, &y, &SvmParams::default(), 11).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn constant_columns_do_not_crash() {
        let x = matrix(&[
            vec![5.0, 1.0],
            vec![5.0, 2.0],
            vec![5.0, -1.0],
            vec![5.0, -2.0],
        ]);
        let y = vec![true, true, false, false];
        let model = fit(
            &x,
            &y,
            &SvmParams {
                lambda: 1e-2,
                epochs: 30,
            },
            1,
        )
        .unwrap();
        assert!(model.weights.iter().all(|w| w.is_finite()));
        let correct = (0..4)
            .filter(|&r| model.predict_row(x.row(r)) == y[r])
            .count();
        assert_eq!(correct, 4);
    }

    #[test]
    fn standardization_stats_are_stored() {
        let x = matrix(&[vec![10.0], vec![20.0], vec![30.0]]);
        let y = vec![false, false, true];
        let model = fit(&x, &y, &SvmParams::default(), 5).unwrap();
        assert!((model.means[0] - 20.0).abs() < 1e-12);
        let expected_sd = (200.0f64 / 3.0).sqrt();
        assert!((model.stds[0] - expected_sd).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SvmParams {
            lambda: 0.0,
            epochs: 10
        }
        .validate()
        .is_err());
        assert!(SvmParams {
            lambda: -1.0,
            epochs: 10
        }
        .validate()
        .is_err());
        assert!(SvmParams {
            lambda: 1.0,
            epochs: 0
        }
        .validate()
        .is_err());
    }
}
