//! The adversary's classifiers, cross-validation and evaluation metrics.
//!
//! Every model implements [`Classifier`]; [`train`] and [`Model`] give a
//! uniform entry point keyed by [`ModelKind`].

mod checkpoint;
mod cv;
mod forest;
mod knn;
mod metrics;
mod mlp;
mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use thiserror::Error;

use crate::Scalar;

pub use checkpoint::{load_model, save_model, CHECKPOINT_MAGIC};
pub use cv::{stratified_kfold, Fold};
pub use forest::{ForestConfig, RandomForestModel};
pub use knn::{KnnConfig, KnnModel};
pub use metrics::{compute_metrics, confusion_matrix, Confusion, MetricStat, MetricsReport};
pub use mlp::{mix_half, AdamState, Gradients, MlpConfig, MlpModel};
pub use tree::{gini_impurity, DecisionTreeModel, Node, TreeConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training labels contain fewer than two classes")]
    DegenerateLabels,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Gini impurity of an empty node")]
    EmptyNode,
    #[error("non-finite value during training: {0}")]
    NumericOverflow(String),
    #[error("feature count changed from {expected} to {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("class {class} has {count} rows, fewer than k = {k}")]
    ClassTooSmall { class: usize, count: usize, k: usize },
    #[error("empty confusion matrix")]
    EmptyConfusion,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// A trained model mapping feature rows to class ids.
pub trait Classifier<T: Scalar> {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    /// Predicts one row; the caller guarantees `row.len() == n_features()`.
    fn predict_row(&self, row: ArrayView1<'_, T>) -> usize;

    fn predict(&self, x: ArrayView2<'_, T>) -> Result<Vec<usize>, ModelError> {
        if x.ncols() != self.n_features() {
            return Err(ModelError::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        Ok(x.outer_iter().map(|r| self.predict_row(r)).collect())
    }
}

/// Index of the largest count; ties go to the smallest index.
pub(crate) fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_training_set<T>(x: ArrayView2<'_, T>, y: &[usize]) -> Result<(), ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(ModelError::DimensionMismatch("no feature columns".into()));
    }
    match y.first() {
        Some(&c) if y.iter().any(|&v| v != c) => Ok(()),
        _ => Err(ModelError::DegenerateLabels),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Knn,
    DecisionTree,
    RandomForest,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Knn,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Mlp,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::DecisionTree => "dt",
            ModelKind::RandomForest => "rf",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Knn => "kNN",
            ModelKind::DecisionTree => "Decision Tree",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::Mlp => "Neural Network",
        }
    }

    /// Parses a comma-separated list such as `knn,dt,rf`.
    pub fn parse_list(s: &str) -> Result<Vec<ModelKind>, ModelError> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(ModelKind::Knn),
            "dt" | "tree" | "decision_tree" => Ok(ModelKind::DecisionTree),
            "rf" | "forest" | "random_forest" => Ok(ModelKind::RandomForest),
            "mlp" | "nn" => Ok(ModelKind::Mlp),
            other => Err(ModelError::Config(format!("unknown classifier '{other}'"))),
        }
    }
}

/// Hyperparameters for every model kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hyper {
    pub knn: KnnConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model<T> {
    Knn(KnnModel<T>),
    DecisionTree(DecisionTreeModel<T>),
    RandomForest(RandomForestModel<T>),
    Mlp(MlpModel<T>),
}

impl<T> Model<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Knn(_) => ModelKind::Knn,
            Model::DecisionTree(_) => ModelKind::DecisionTree,
            Model::RandomForest(_) => ModelKind::RandomForest,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }
}

impl<T: Scalar> Classifier<T> for Model<T> {
    fn n_features(&self) -> usize {
        match self {
            Model::Knn(m) => m.n_features(),
            Model::DecisionTree(m) => m.n_features(),
            Model::RandomForest(m) => m.n_features(),
            Model::Mlp(m) => m.n_features(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Model::Knn(m) => m.n_classes(),
            Model::DecisionTree(m) => m.n_classes(),
            Model::RandomForest(m) => m.n_classes(),
            Model::Mlp(m) => m.n_classes(),
        }
    }

    fn predict_row(&self, row: ArrayView1<'_, T>) -> usize {
        match self {
            Model::Knn(m) => m.predict_row(row),
            Model::DecisionTree(m) => m.predict_row(row),
            Model::RandomForest(m) => m.predict_row(row),
            Model::Mlp(m) => m.predict_row(row),
        }
    }

    fn predict(&self, x: ArrayView2<'_, T>) -> Result<Vec<usize>, ModelError> {
        match self {
            Model::Knn(m) => m.predict(x),
            Model::DecisionTree(m) => m.predict(x),
            Model::RandomForest(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

pub fn train<T: Scalar>(kind: ModelKind, x: ArrayView2<'_, T>, y: &[usize], hyper: &Hyper) -> Result<Model<T>, ModelError> {
    Ok(match kind {
        ModelKind::Knn => Model::Knn(KnnModel::fit(x, y, hyper.knn.clone())?),
        ModelKind::DecisionTree => Model::DecisionTree(DecisionTreeModel::fit(x, y, &hyper.tree)?),
        ModelKind::RandomForest => Model::RandomForest(RandomForestModel::fit(x, y, &hyper.forest)?),
        ModelKind::Mlp => Model::Mlp(MlpModel::fit(x, y, &hyper.mlp)?),
    })
}

pub fn predict<T: Scalar>(model: &Model<T>, x: ArrayView2<'_, T>) -> Result<Vec<usize>, ModelError> {
    model.predict(x)
}
