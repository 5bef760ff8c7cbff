use ndarray::Array2;

use super::ModelError;

/// Counts indexed `[true class, predicted class]`.
pub type Confusion = Array2<u64>;

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Confusion, ModelError> {
    if y_true.len() != y_pred.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} truths but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true
        .iter()
        .chain(y_pred)
        .map(|&c| c + 1)
        .max()
        .unwrap_or(0)
        .max(n_classes);
    let mut m = Array2::zeros((n, n));
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[[t, p]] += 1;
    }
    Ok(m)
}

/// Mean over folds with sample SD and a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStat {
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricStat {
    pub fn from_samples(v: &[f64]) -> MetricStat {
        let k = v.len() as f64;
        // Identical samples give an exact mean and zero spread.
        let mean = if v.iter().all(|&x| x == v[0]) {
            v[0]
        } else {
            v.iter().sum::<f64>() / k
        };
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * sd / k.sqrt();
        MetricStat {
            mean,
            sd,
            ci_low: (mean - half).clamp(0.0, 1.0),
            ci_high: (mean + half).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: MetricStat,
    pub precision: MetricStat,
    pub recall: MetricStat,
    pub f1: MetricStat,
    /// Sum of the per-fold matrices.
    pub confusion: Confusion,
    pub folds: usize,
}

struct FoldScores {
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn fold_scores(m: &Confusion) -> FoldScores {
    let n = m.nrows();
    let total: u64 = m.sum();
    let trace: u64 = (0..n).map(|i| m[[i, i]]).sum();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..n {
        let tp = m[[c, c]] as f64;
        let predicted: u64 = m.column(c).sum();
        let actual: u64 = m.row(c).sum();
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        p_sum += p;
        r_sum += r;
        f_sum += f;
    }
    let n = n as f64;
    FoldScores {
        accuracy: trace as f64 / total as f64,
        precision: p_sum / n,
        recall: r_sum / n,
        f1: f_sum / n,
    }
}

/// Accuracy and macro precision/recall/F1 per fold, then mean, SD and CI
/// across folds. Matrices of different sizes are padded to the largest.
pub fn compute_metrics(folds: &[Confusion]) -> Result<MetricsReport, ModelError> {
    if folds.is_empty() {
        return Err(ModelError::EmptyConfusion);
    }
    let n = folds.iter().map(|m| m.nrows()).max().unwrap_or(0);
    let mut sum = Array2::zeros((n, n));
    let mut scores = Vec::with_capacity(folds.len());
    for m in folds {
        if m.nrows() != m.ncols() {
            return Err(ModelError::DimensionMismatch(format!("{:?} confusion matrix", m.dim())));
        }
        if m.sum() == 0 {
            return Err(ModelError::EmptyConfusion);
        }
        let mut padded = Array2::zeros((n, n));
        padded.slice_mut(ndarray::s![..m.nrows(), ..m.ncols()]).assign(m);
        sum += &padded;
        scores.push(fold_scores(&padded));
    }
    let stat = |f: fn(&FoldScores) -> f64| MetricStat::from_samples(&scores.iter().map(f).collect::<Vec<_>>());
    Ok(MetricsReport {
        accuracy: stat(|s| s.accuracy),
        precision: stat(|s| s.precision),
        recall: stat(|s| s.recall),
        f1: stat(|s| s.f1),
        confusion: sum,
        folds: folds.len(),
    })
}
