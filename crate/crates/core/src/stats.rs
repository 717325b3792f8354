//! Statistical validation utilities: empirical CDFs, the two-sample
//! Kolmogorov-Smirnov test, and Fleiss' kappa.
//!
//! Everything here is generic over the scalar type and pure over immutable
//! inputs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Empirical distribution function: F(x) = (# samples <= x) / n,
/// right-continuous and nondecreasing.
#[derive(Debug, Clone)]
pub struct Ecdf<S> {
    sorted: Vec<S>,
}

impl<S: Scalar> Ecdf<S> {
    pub fn new(samples: &[S]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::data("ecdf requires at least one sample"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("ecdf samples must be finite"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
        Ok(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: S) -> S {
        let count = self.sorted.partition_point(|&v| v <= x);
        S::from_count(count) / S::from_count(self.sorted.len())
    }

    pub fn min(&self) -> S {
        self.sorted[0]
    }

    pub fn max(&self) -> S {
        *self.sorted.last().expect("non-empty")
    }
}

/// Plot-ready (x, F(x)) table over the given grid.
pub fn ecdf_export<S: Scalar>(samples: &[S], grid: &[S]) -> Result<Vec<(S, S)>> {
    let ecdf = Ecdf::new(samples)?;
    Ok(grid.iter().map(|&x| (x, ecdf.eval(x))).collect())
}

/// Two-sample KS test result.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult<S> {
    /// Supremum over pooled sample points of |F_a - F_b|, computed exactly.
    pub d: S,
    /// P(D >= d) under the null: exact for small tie-free samples, else the
    /// asymptotic series with the Stephens small-sample correction.
    pub p: S,
    pub n: usize,
    pub m: usize,
}

/// Largest pooled size handled by the exact null distribution; beyond it the
/// asymptotic approximation is already accurate.
const KS_EXACT_LIMIT: usize = 256;

/// Two-sample Kolmogorov-Smirnov test.
///
/// The statistic is evaluated at every distinct pooled value, which is where
/// the supremum of the difference of two right-continuous step functions is
/// attained; ties are handled by evaluating both ECDFs at the tied value.
///
/// The asymptotic p-value is a continuous approximation to a heavily
/// discrete null distribution when samples are small, so for tie-free pooled
/// samples up to [`KS_EXACT_LIMIT`] the p-value comes from the exact
/// lattice-path distribution instead.
pub fn ks_two_sample<S: Scalar>(a: &[S], b: &[S]) -> Result<KsResult<S>> {
    let fa = Ecdf::new(a)?;
    let fb = Ecdf::new(b)?;
    let mut pooled: Vec<S> = a.iter().chain(b.iter()).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).expect("finite values compare"));
    pooled.dedup_by(|x, y| x == y);
    let all_distinct = pooled.len() == a.len() + b.len();

    let mut d = S::zero();
    for &v in &pooled {
        let gap = (fa.eval(v) - fb.eval(v)).abs();
        if gap > d {
            d = gap;
        }
    }

    let n = a.len();
    let m = b.len();
    let p = if d == S::zero() {
        S::one()
    } else if all_distinct && n + m <= KS_EXACT_LIMIT {
        S::from_f64(ks_exact_p(n, m, d.to_f64().expect("statistic fits f64")))
            .expect("probability fits scalar")
    } else {
        let ne = S::from_count(n) * S::from_count(m) / S::from_count(n + m);
        let lambda =
            (ne.sqrt() + S::from_f64(0.12).unwrap() + S::from_f64(0.11).unwrap() / ne.sqrt()) * d;
        ks_series(lambda)
    };
    Ok(KsResult { d, p, n, m })
}

/// Exact P(D >= d) for tie-free samples: every interleaving of the pooled
/// order statistics is an equally likely monotone lattice path from (0, 0)
/// to (n, m); the ECDF gap at a path point (i, j) is |i/n - j/m|. Forward
/// probability DP over surviving paths (those that stay strictly below d).
fn ks_exact_p(n: usize, m: usize, d: f64) -> f64 {
    let tol = 1e-10;
    let survives = |i: usize, j: usize| (i as f64 / n as f64 - j as f64 / m as f64).abs() < d - tol;
    // prob[j] = probability of reaching (i, j) without ever attaining d.
    let mut prob = vec![0.0f64; m + 1];
    prob[0] = 1.0;
    for j in 1..=m {
        prob[j] = if survives(0, j) {
            let remaining = (n + m - (j - 1)) as f64;
            prob[j - 1] * (m - (j - 1)) as f64 / remaining
        } else {
            0.0
        };
    }
    for i in 1..=n {
        let mut next = vec![0.0f64; m + 1];
        for j in 0..=m {
            if !survives(i, j) {
                continue;
            }
            // Step 'a' from (i-1, j).
            let rem_a = (n + m - (i - 1) - j) as f64;
            let mut mass = prob[j] * (n - (i - 1)) as f64 / rem_a;
            // Step 'b' from (i, j-1).
            if j > 0 {
                let rem_b = (n + m - i - (j - 1)) as f64;
                mass += next[j - 1] * (m - (j - 1)) as f64 / rem_b;
            }
            next[j] = mass;
        }
        prob = next;
    }
    (1.0 - prob[m]).clamp(0.0, 1.0)
}

/// p = 2 * sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2), truncated once terms
/// drop below 1e-12, clamped to [0, 1].
fn ks_series<S: Scalar>(lambda: S) -> S {
    if lambda <= S::from_f64(1e-9).unwrap() {
        return S::one();
    }
    let two = S::from_f64(2.0).unwrap();
    let tol = S::from_f64(1e-12).unwrap();
    let mut sum = S::zero();
    let mut sign = S::one();
    for k in 1..=10_000usize {
        let kf = S::from_count(k);
        let term = (-two * kf * kf * lambda * lambda).exp();
        sum = sum + sign * term;
        if term < tol {
            break;
        }
        sign = -sign;
    }
    (two * sum).max(S::zero()).min(S::one())
}

/// N items x k categories; entry = number of raters assigning the item to
/// the category. Every row must sum to the same rater count r >= 2.
#[derive(Debug, Clone)]
pub struct RatingsMatrix {
    counts: Vec<Vec<u32>>,
    raters: u32,
}

impl RatingsMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self> {
        if counts.is_empty() || counts[0].is_empty() {
            return Err(Error::data("ratings matrix must have items and categories"));
        }
        let k = counts[0].len();
        let raters: u32 = counts[0].iter().sum();
        if raters < 2 {
            return Err(Error::data(
                "fleiss kappa requires at least 2 raters per item",
            ));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != k {
                return Err(Error::data(format!("ratings row {i} has ragged width")));
            }
            let sum: u32 = row.iter().sum();
            if sum != raters {
                return Err(Error::data(format!(
                    "ratings row {i} sums to {sum}, expected constant {raters} raters per item"
                )));
            }
        }
        Ok(RatingsMatrix { counts, raters })
    }

    pub fn n_items(&self) -> usize {
        self.counts.len()
    }

    pub fn n_categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn raters(&self) -> u32 {
        self.raters
    }
}

/// Fleiss' kappa. `Undefined` when expected agreement is 1 (all mass in a
/// single category), where the chance correction divides by zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Kappa<S> {
    Value(S),
    Undefined,
}

impl<S: Scalar> Kappa<S> {
    pub fn value(&self) -> Option<S> {
        match self {
            Kappa::Value(v) => Some(*v),
            Kappa::Undefined => None,
        }
    }
}

pub fn fleiss_kappa<S: Scalar>(m: &RatingsMatrix) -> Kappa<S> {
    let n_items = S::from_count(m.n_items());
    let r = S::from_count(m.raters as usize);
    let total = n_items * r;

    let mut p_bar = S::zero();
    let mut category_mass = vec![S::zero(); m.n_categories()];
    for row in &m.counts {
        let mut sq = S::zero();
        for (j, &c) in row.iter().enumerate() {
            let c = S::from_count(c as usize);
            sq = sq + c * c;
            category_mass[j] = category_mass[j] + c;
        }
        p_bar = p_bar + (sq - r) / (r * (r - S::one()));
    }
    p_bar = p_bar / n_items;

    let mut pe = S::zero();
    for mass in category_mass {
        let pj = mass / total;
        pe = pe + pj * pj;
    }

    if (S::one() - pe).abs() < S::from_f64(1e-12).unwrap() {
        return Kappa::Undefined;
    }
    Kappa::Value((p_bar - pe) / (S::one() - pe))
}
