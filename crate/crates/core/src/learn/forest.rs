//! Random forest: bootstrap-sampled CARTs with per-split feature subsets.
//! Tree seeds are hashed from (forest seed, tree index), so trees can train
//! in parallel without affecting results. Votes tie toward the negative
//! class.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::tree::{grow, DecisionTreeModel, FeatureSampler, TreeParams};
use crate::learn::FeatureMatrix;
use crate::scalar::Scalar;
use crate::seed::mix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    Sqrt,
    Log2,
    All,
}

impl FeatureSubset {
    pub fn size(&self, n_features: usize) -> usize {
        let k = match self {
            FeatureSubset::Sqrt => (n_features as f64).sqrt().round() as usize,
            FeatureSubset::Log2 => (n_features as f64).log2().round() as usize,
            FeatureSubset::All => n_features,
        };
        k.clamp(1, n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub features_per_split: FeatureSubset,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            features_per_split: FeatureSubset::Sqrt,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("forest needs at least one tree"));
        }
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
        }
        .validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForestModel<T> {
    pub trees: Vec<DecisionTreeModel<T>>,
}

impl<T: Scalar> RandomForestModel<T> {
    /// Majority vote over trees; an exact tie predicts the negative class.
    pub fn predict_row(&self, row: &[T]) -> bool {
        let pos = self.trees.iter().filter(|t| t.predict_row(row)).count();
        pos * 2 > self.trees.len()
    }
}

struct RngSampler<'a> {
    rng: &'a mut ChaCha8Rng,
    k: usize,
}

impl FeatureSampler for RngSampler<'_> {
    fn order(&mut self, n_features: usize) -> (Vec<usize>, usize) {
        if self.k >= n_features {
            // Identical scan order to the plain tree, including tie-breaks.
            return ((0..n_features).collect(), n_features);
        }
        let mut all: Vec<usize> = (0..n_features).collect();
        all.shuffle(self.rng);
        (all, self.k)
    }
}

pub fn fit<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[bool],
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForestModel<T>> {
    params.validate()?;
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let k = params.features_per_split.size(x.n_cols());

    let trees: Vec<DecisionTreeModel<T>> = (0..params.n_trees)
        .into_par_iter()
        .map(|tree_idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, tree_idx as u64));
            let rows: Vec<usize> = if params.bootstrap {
                (0..x.n_rows())
                    .map(|_| rng.gen_range(0..x.n_rows()))
                    .collect()
            } else {
                (0..x.n_rows()).collect()
            };
            let mut sampler = RngSampler { rng: &mut rng, k };
            let root = grow(x, y, &rows, &tree_params, 0, &mut sampler);
            DecisionTreeModel {
                root,
                n_features: x.n_cols(),
            }
        })
        .collect();

    Ok(RandomForestModel { trees })
}
