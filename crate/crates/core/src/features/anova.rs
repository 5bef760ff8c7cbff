use std::collections::BTreeMap;

use ndarray::{ArrayView2, Axis};

use super::FeatureError;
use crate::Scalar;

/// One-way ANOVA F statistic of every column against the class labels.
///
/// Columns that are constant within every class score 0 when all classes
/// share the value and `+inf` otherwise.
pub fn anova_f_scores<T: Scalar>(x: ArrayView2<'_, T>, y: &[usize]) -> Result<Vec<T>, FeatureError> {
    if x.nrows() != y.len() {
        return Err(FeatureError::DimensionMismatch(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(FeatureError::DegenerateLabels);
    }
    let n = y.len();
    let k = groups.len();
    let df_between = T::of_usize(k - 1);
    let df_within = T::of_usize(n.saturating_sub(k).max(1));

    let scores = x
        .axis_iter(Axis(1))
        .map(|col| {
            let within_constant = groups
                .values()
                .all(|rows| rows.iter().all(|&i| col[i] == col[rows[0]]));
            if within_constant {
                let v0 = col[0];
                return if col.iter().all(|&v| v == v0) {
                    T::zero()
                } else {
                    T::infinity()
                };
            }
            let grand = col.iter().copied().sum::<T>() / T::of_usize(n);
            let mut ss_between = T::zero();
            let mut ss_within = T::zero();
            for rows in groups.values() {
                let ng = T::of_usize(rows.len());
                let mean = rows.iter().map(|&i| col[i]).sum::<T>() / ng;
                ss_between += ng * (mean - grand) * (mean - grand);
                ss_within += rows.iter().map(|&i| (col[i] - mean) * (col[i] - mean)).sum::<T>();
            }
            (ss_between / df_between) / (ss_within / df_within)
        })
        .collect();
    Ok(scores)
}

/// Indices of the `k` highest scores in ascending index order; ties go to
/// the lower index.
pub fn select_k_best<T: Scalar>(scores: &[T], k: usize) -> Result<Vec<usize>, FeatureError> {
    if k == 0 || k > scores.len() {
        return Err(FeatureError::BadK { k, n: scores.len() });
    }
    let key = |v: T| if v.is_nan() { T::neg_infinity() } else { v };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        key(scores[b])
            .partial_cmp(&key(scores[a]))
            .expect("NaN mapped away")
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}
