use ndarray::{ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{DecisionTreeModel, TreeConfig};
use super::{check_training_set, majority, Classifier, ModelError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub seed: u64,
    /// Features per split; `None` uses `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 53,
            seed: 30,
            max_features: None,
        }
    }
}

/// Bagged Gini trees with per-split feature subsampling and majority voting.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel<T> {
    pub(crate) trees: Vec<DecisionTreeModel<T>>,
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
}

impl<T: Scalar> RandomForestModel<T> {
    pub fn fit(x: ArrayView2<'_, T>, y: &[usize], config: &ForestConfig) -> Result<Self, ModelError> {
        check_training_set(x, y)?;
        if config.n_estimators == 0 {
            return Err(ModelError::Config("forest needs at least one tree".into()));
        }
        let d = x.ncols();
        let max_features = config
            .max_features
            .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
            .min(d);
        let n = y.len();
        let trees = (0..config.n_estimators)
            .into_par_iter()
            .map(|i| {
                let tree_seed = config
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let cfg = TreeConfig {
                    max_features: Some(max_features),
                    seed: rng.gen(),
                    ..TreeConfig::default()
                };
                DecisionTreeModel::fit_rows(x, y, rows, &cfg)
            })
            .collect::<Vec<_>>();
        Ok(RandomForestModel {
            trees,
            n_features: d,
            n_classes: y.iter().max().map_or(0, |m| m + 1),
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl<T: Scalar> Classifier<T> for RandomForestModel<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, row: ArrayView1<'_, T>) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        majority(&votes)
    }
}
