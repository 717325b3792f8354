//! k-nearest-neighbors with Euclidean distance. The model stores its
//! training rows. Distance ties break toward the lower row index; vote ties
//! predict the negative class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("knn k must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel<T> {
    pub x: FeatureMatrix<T>,
    pub y: Vec<bool>,
    pub k: usize,
}

pub fn fit<T: Scalar>(x: &FeatureMatrix<T>, y: &[bool], params: &KnnParams) -> Result<KnnModel<T>> {
    params.validate()?;
    // k is clamped to the training size at prediction time.
    Ok(KnnModel {
        x: x.clone(),
        y: y.to_vec(),
        k: params.k,
    })
}

impl<T: Scalar> KnnModel<T> {
    pub fn predict_row(&self, row: &[T]) -> bool {
        let mut dists: Vec<(T, usize)> = (0..self.x.n_rows())
            .map(|r| {
                let d2 = self
                    .x
                    .row(r)
                    .iter()
                    .zip(row)
                    .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                (d2, r)
            })
            .collect();
        dists.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        let k = self.k.min(dists.len());
        let pos = dists[..k].iter().filter(|&&(_, r)| self.y[r]).count();
        pos * 2 > k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix<f64> {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        let mut m = FeatureMatrix::new(names).unwrap();
        for row in rows {
            m.push_complete_row(row).unwrap();
        }
        m
    }

    #[test]
    fn k1_memorizes_training_set() {
        let x = matrix(&[&[0.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[1.0, 0.0]]);
        let y = vec![false, true, true, false];
        let model = fit(&x, &y, &KnnParams { k: 1 }).unwrap();
        for r in 0..x.n_rows() {
            assert_eq!(model.predict_row(x.row(r)), y[r]);
        }
    }

    #[test]
    fn distance_ties_prefer_lower_row_index() {
        // Two training points equidistant from the probe, opposite labels.
        let x = matrix(&[&[1.0], &[-1.0]]);
        let y = vec![true, false];
        let model = fit(&x, &y, &KnnParams { k: 1 }).unwrap();
        assert!(model.predict_row(&[0.0]));
        // Swap rows: the tie now lands on the negative label.
        let x2 = matrix(&[&[-1.0], &[1.0]]);
        let y2 = vec![false, true];
        let model2 = fit(&x2, &y2, &KnnParams { k: 1 }).unwrap();
        assert!(!model2.predict_row(&[0.0]));
    }

    #[test]
    fn vote_tie_predicts_negative() {
        let x = matrix(&[&[0.0], &[2.0]]);
        let y = vec![true, false];
        let model = fit(&x, &y, &KnnParams { k: 2 }).unwrap();
        assert!(!model.predict_row(&[1.0]));
    }

    #[test]
    fn k_clamps_to_training_size() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0]]);
        let y = vec![true, true, false];
        let model = fit(&x, &y, &KnnParams { k: 11 }).unwrap();
        assert!(model.predict_row(&[0.5]));
    }

    #[test]
    fn common_rescaling_preserves_predictions() {
        let x = matrix(&[&[1.0, 5.0], &[2.0, 1.0], &[8.0, 3.0], &[9.0, 9.0]]);
        let y = vec![false, false, true, true];
        let model = fit(&x, &y, &KnnParams { k: 3 }).unwrap();
        let c = 37.5;
        let scaled_rows: Vec<Vec<f64>> = (0..x.n_rows())
            .map(|r| x.row(r).iter().map(|v| v * c).collect())
            .collect();
        let xs = matrix(&scaled_rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let scaled_model = fit(&xs, &y, &KnnParams { k: 3 }).unwrap();
        for probe in [[1.5, 2.0], [7.0, 6.0], [5.0, 5.0]] {
            let scaled_probe = [probe[0] * c, probe[1] * c];
            assert_eq!(
                model.predict_row(&probe),
                scaled_model.predict_row(&scaled_probe)
            );
        }
    }

    #[test]
    fn zero_k_rejected() {
        assert!(KnnParams { k: 0 }.validate().is_err());
    }
}
