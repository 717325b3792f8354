//! Binary CART with Gini impurity. The best split is found by an exhaustive
//! scan over (feature, midpoint-between-sorted-values) pairs; ties break by
//! lowest feature index, then lowest threshold, so training is fully
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Maximum depth; `None` grows until purity or leaf-size limits.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::config("min_samples_leaf must be at least 1"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::config(
                "max_depth 0 cannot split anything; use None or >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode<T> {
    Leaf {
        prediction: bool,
        n_pos: usize,
        n_neg: usize,
    },
    Split {
        feature: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTreeModel<T> {
    pub root: TreeNode<T>,
    pub n_features: usize,
}

impl<T: Scalar> DecisionTreeModel<T> {
    /// Rows go left when `value <= threshold`.
    pub fn predict_row(&self, row: &[T]) -> bool {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(node: &TreeNode<T>) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

pub fn fit<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    params: &TreeParams,
) -> Result<DecisionTreeModel<T>> {
    params.validate()?;
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let root = grow(x, y, &rows, params, 0, &mut NoSampler);
    Ok(DecisionTreeModel {
        root,
        n_features: x.n_cols(),
    })
}

/// Per-split feature ordering hook used by the forest: a scan order plus
/// how many features to consider. The scan keeps going past `consider`
/// while no valid split has been found, so constant columns never stunt a
/// tree. The plain tree scans every feature in index order.
pub(crate) trait FeatureSampler {
    fn order(&mut self, n_features: usize) -> (Vec<usize>, usize);
}

pub(crate) struct NoSampler;

impl FeatureSampler for NoSampler {
    fn order(&mut self, n_features: usize) -> (Vec<usize>, usize) {
        ((0..n_features).collect(), n_features)
    }
}

pub(crate) fn grow<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    rows: &[usize],
    params: &TreeParams,
    depth: usize,
    sampler: &mut dyn FeatureSampler,
) -> TreeNode<T> {
    let n_pos = rows.iter().filter(|&&r| y[r]).count();
    let n_neg = rows.len() - n_pos;
    // Majority leaf; exact ties predict the negative class.
    let leaf = TreeNode::Leaf {
        prediction: n_pos > n_neg,
        n_pos,
        n_neg,
    };

    if n_pos == 0 || n_neg == 0 {
        return leaf;
    }
    if let Some(max_depth) = params.max_depth {
        if depth >= max_depth {
            return leaf;
        }
    }
    if rows.len() < 2 * params.min_samples_leaf {
        return leaf;
    }

    let Some((feature, threshold)) = best_split(x, y, rows, params, sampler) else {
        return leaf;
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| x.get(r, feature) <= threshold);
    let left = grow(x, y, &left_rows, params, depth + 1, sampler);
    let right = grow(x, y, &right_rows, params, depth + 1, sampler);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Exhaustive scan over the sampled features. For each feature, rows are
/// sorted by value and every midpoint between adjacent distinct values is a
/// candidate threshold; the split minimizing weighted Gini impurity wins.
fn best_split<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    rows: &[usize],
    params: &TreeParams,
    sampler: &mut dyn FeatureSampler,
) -> Option<(usize, T)> {
    let n = rows.len() as f64;
    let total_pos = rows.iter().filter(|&&r| y[r]).count();

    let mut best: Option<(f64, usize, T)> = None;
    let (candidates, consider) = sampler.order(x.n_cols());

    let mut ordered: Vec<(T, bool)> = Vec::with_capacity(rows.len());
    for (scanned, feature) in candidates.into_iter().enumerate() {
        if scanned >= consider && best.is_some() {
            break;
        }
        ordered.clear();
        ordered.extend(rows.iter().map(|&r| (x.get(r, feature), y[r])));
        ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

        let mut pos_left = 0usize;
        for i in 0..ordered.len() - 1 {
            if ordered[i].1 {
                pos_left += 1;
            }
            if ordered[i].0 == ordered[i + 1].0 {
                continue;
            }
            let n_left = i + 1;
            let n_right = rows.len() - n_left;
            if n_left < params.min_samples_leaf || n_right < params.min_samples_leaf {
                continue;
            }
            let pl = pos_left as f64;
            let nl = n_left as f64;
            let pr = (total_pos - pos_left) as f64;
            let nr = n_right as f64;
            let gini_left = 1.0 - (pl / nl).powi(2) - ((nl - pl) / nl).powi(2);
            let gini_right = 1.0 - (pr / nr).powi(2) - ((nr - pr) / nr).powi(2);
            let weighted = (nl * gini_left + nr * gini_right) / n;

            let threshold = (ordered[i].0 + ordered[i + 1].0) / T::from_count(2);
            let better = match &best {
                None => true,
                // Strict improvement only: earlier (feature, threshold)
                // pairs win ties because the scan is ordered.
                Some((bw, _, _)) => weighted < bw - 1e-12,
            };
            if better {
                best = Some((weighted, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
