use ndarray::{Array2, ArrayView1, ArrayView2};

use super::{check_training_set, majority, Classifier, ModelError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnConfig {
    pub n_neighbors: usize,
    /// Minkowski exponent; 2 is Euclidean.
    pub p: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            n_neighbors: 5,
            p: 2.0,
        }
    }
}

/// Brute-force k-nearest-neighbour classifier with uniform weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T> {
    pub(crate) config: KnnConfig,
    pub(crate) x: Array2<T>,
    pub(crate) y: Vec<usize>,
    pub(crate) n_classes: usize,
}

impl<T: Scalar> KnnModel<T> {
    pub fn fit(x: ArrayView2<'_, T>, y: &[usize], config: KnnConfig) -> Result<Self, ModelError> {
        // A single stored row is a valid (if trivial) neighbour set.
        if x.nrows() != y.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(ModelError::DegenerateLabels);
        }
        if y.len() > 1 {
            check_training_set(x, y)?;
        }
        if config.n_neighbors == 0 || config.p < 1.0 {
            return Err(ModelError::Config(format!("invalid kNN config {config:?}")));
        }
        Ok(KnnModel {
            n_classes: y.iter().max().map_or(0, |m| m + 1),
            config,
            x: x.to_owned(),
            y: y.to_vec(),
        })
    }

    fn distance(&self, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
        if self.config.p == 2.0 {
            // Squared distance ranks identically.
            a.iter().zip(b).map(|(&u, &v)| (u - v) * (u - v)).sum()
        } else {
            let p = T::of(self.config.p);
            a.iter().zip(b).map(|(&u, &v)| (u - v).abs().powf(p)).sum()
        }
    }
}

impl<T: Scalar> Classifier<T> for KnnModel<T> {
    fn n_features(&self) -> usize {
        self.x.ncols()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, row: ArrayView1<'_, T>) -> usize {
        let mut d: Vec<(T, usize)> = self
            .x
            .outer_iter()
            .enumerate()
            .map(|(i, r)| (self.distance(row, r), i))
            .collect();
        let k = self.config.n_neighbors.min(d.len());
        let cmp = |a: &(T, usize), b: &(T, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in &d[..k] {
            votes[self.y[i]] += 1;
        }
        majority(&votes)
    }
}
