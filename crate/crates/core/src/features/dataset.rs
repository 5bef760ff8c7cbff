use ndarray::{Array2, ArrayView2, Axis};

use super::FeatureError;
use crate::Scalar;

/// Labeled feature matrix: one row per packet, one column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub x: Array2<T>,
    pub y: Vec<usize>,
    pub feature_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Array2<T>, y: Vec<usize>, feature_names: Vec<String>) -> Result<Self, FeatureError> {
        if x.nrows() != y.len() {
            return Err(FeatureError::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() != feature_names.len() {
            return Err(FeatureError::DimensionMismatch(format!(
                "{} columns but {} feature names",
                x.ncols(),
                feature_names.len()
            )));
        }
        Ok(Dataset { x, y, feature_names })
    }

    pub fn empty(feature_names: Vec<String>) -> Self {
        Dataset {
            x: Array2::zeros((0, feature_names.len())),
            y: Vec::new(),
            feature_names,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    /// Largest label + 1 (zero for an empty dataset).
    pub fn n_classes(&self) -> usize {
        self.y.iter().max().map_or(0, |m| m + 1)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Dataset {
            x: self.x.select(Axis(1), idx),
            y: self.y.clone(),
            feature_names: idx.iter().map(|&i| self.feature_names[i].clone()).collect(),
        }
    }

    /// Drops rows holding NaN or infinite values; returns how many went.
    pub fn drop_missing(&mut self) -> usize {
        let keep: Vec<usize> = self
            .x
            .outer_iter()
            .enumerate()
            .filter(|(_, row)| row.iter().all(|v| v.is_finite()))
            .map(|(i, _)| i)
            .collect();
        let dropped = self.len() - keep.len();
        if dropped > 0 {
            *self = self.select_rows(&keep);
        }
        dropped
    }

    /// Stacks two datasets with identical columns.
    pub fn concat(&self, other: &Self) -> Result<Self, FeatureError> {
        if self.feature_names != other.feature_names {
            return Err(FeatureError::DimensionMismatch("feature columns differ".into()));
        }
        let x = ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()])
            .map_err(|e| FeatureError::DimensionMismatch(e.to_string()))?;
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(Dataset {
            x,
            y,
            feature_names: self.feature_names.clone(),
        })
    }

    pub fn map_scalar<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            x: self.x.mapv(|v| U::of(v.as_f64())),
            y: self.y.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn drop_missing_rows() {
        let mut d = Dataset::new(
            array![[1.0, 2.0], [f64::NAN, 0.0], [3.0, f64::INFINITY], [4.0, 5.0]],
            vec![0, 1, 1, 0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(d.drop_missing(), 2);
        assert_eq!(d.x, array![[1.0, 2.0], [4.0, 5.0]]);
        assert_eq!(d.y, vec![0, 0]);
    }

    #[test]
    fn shape_checks() {
        let bad = Dataset::<f32>::new(Array2::zeros((2, 1)), vec![0], vec!["a".into()]);
        assert!(matches!(bad, Err(FeatureError::DimensionMismatch(_))));
    }

    #[test]
    fn row_and_column_selection() {
        let d = Dataset::new(
            array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]],
            vec![0, 2],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        assert_eq!(d.n_classes(), 3);
        assert_eq!(d.class_counts(), vec![1, 0, 1]);
        let c = d.select_columns(&[2, 0]);
        assert_eq!(c.x, array![[3.0, 1.0], [6.0, 4.0]]);
        assert_eq!(c.feature_names, vec!["c", "a"]);
        let r = d.select_rows(&[1]);
        assert_eq!(r.y, vec![2]);
        assert_eq!(d.concat(&r).unwrap().len(), 3);
    }
}
