use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::FeatureError;
use crate::Scalar;

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreModel<T> {
    pub mean: Array1<T>,
    pub std: Array1<T>,
}

impl<T: Scalar> ZScoreModel<T> {
    /// Columns whose fitted deviation is zero; they transform to zeros.
    pub fn constant_features(&self) -> Vec<usize> {
        self.std
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == T::zero())
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn zscore_fit<T: Scalar>(x: ArrayView2<'_, T>) -> Result<ZScoreModel<T>, FeatureError> {
    if x.nrows() < 2 {
        return Err(FeatureError::EmptyDataset);
    }
    let n = T::of_usize(x.nrows());
    let mut mean = Array1::zeros(x.ncols());
    let mut std = Array1::zeros(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            mean[j] = first;
            continue;
        }
        let mu = col.iter().copied().sum::<T>() / n;
        let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
        mean[j] = mu;
        std[j] = var.sqrt();
    }
    Ok(ZScoreModel { mean, std })
}

pub fn zscore_apply<T: Scalar>(model: &ZScoreModel<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>, FeatureError> {
    if x.ncols() != model.mean.len() {
        return Err(FeatureError::DimensionMismatch(format!(
            "model fitted on {} features, got {}",
            model.mean.len(),
            x.ncols()
        )));
    }
    let mut out = x.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, sd) = (model.mean[j], model.std[j]);
        if sd == T::zero() {
            col.fill(T::zero());
        } else {
            col.mapv_inplace(|v| (v - mu) / sd);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_column() {
        let x = array![[2.0], [4.0]];
        let m = zscore_fit(x.view()).unwrap();
        assert_eq!((m.mean[0], m.std[0]), (3.0, 1.0));
        assert_eq!(zscore_apply(&m, x.view()).unwrap(), array![[-1.0], [1.0]]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = array![[5.0f32, 1.0], [5.0, 2.0], [5.0, 3.0]];
        let m = zscore_fit(x.view()).unwrap();
        assert_eq!(m.constant_features(), vec![0]);
        let z = zscore_apply(&m, x.view()).unwrap();
        assert!(z.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_rows() {
        assert_eq!(zscore_fit(array![[1.0]].view()), Err(FeatureError::EmptyDataset));
    }

    #[test]
    fn width_mismatch() {
        let m = zscore_fit(array![[1.0, 2.0], [3.0, 5.0]].view()).unwrap();
        assert!(zscore_apply(&m, array![[1.0]].view()).is_err());
    }
}
