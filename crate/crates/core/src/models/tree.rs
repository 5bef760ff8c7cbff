use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_training_set, majority, Classifier, ModelError};
use crate::Scalar;

/// `1 - sum((c_i / n)^2)` over the label counts of a node.
pub fn gini_impurity(counts: &[usize]) -> Result<f64, ModelError> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(ModelError::EmptyNode);
    }
    Ok(gini_of(counts, n as f64))
}

fn gini_of(counts: &[usize], n: f64) -> f64 {
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            min_samples_split: 2,
            max_depth: None,
            max_features: None,
            seed: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Leaf {
        class: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

/// CART classification tree grown with the Gini criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTreeModel<T> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) n_features: usize,
    pub(crate) n_classes: usize,
}

struct Best<T> {
    gain: f64,
    feature: usize,
    threshold: T,
}

impl<T: Scalar> DecisionTreeModel<T> {
    pub fn fit(x: ArrayView2<'_, T>, y: &[usize], config: &TreeConfig) -> Result<Self, ModelError> {
        check_training_set(x, y)?;
        let rows: Vec<usize> = (0..y.len()).collect();
        Ok(Self::fit_rows(x, y, rows, config))
    }

    /// Grows a tree on `rows` (which may repeat, as in a bootstrap sample).
    pub(crate) fn fit_rows(x: ArrayView2<'_, T>, y: &[usize], rows: Vec<usize>, config: &TreeConfig) -> Self {
        let n_classes = y.iter().max().map_or(0, |m| m + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut tree = DecisionTreeModel {
            nodes: vec![Node::Leaf { class: 0 }],
            n_features: x.ncols(),
            n_classes,
        };
        let mut stack = vec![(0usize, rows, 0usize)];
        let mut features: Vec<usize> = (0..x.ncols()).collect();
        while let Some((slot, rows, depth)) = stack.pop() {
            let mut counts = vec![0usize; n_classes];
            for &r in &rows {
                counts[y[r]] += 1;
            }
            let leaf = Node::Leaf {
                class: majority(&counts),
            };
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = config.max_depth.is_some_and(|d| depth >= d);
            if pure || rows.len() < config.min_samples_split || depth_capped {
                tree.nodes[slot] = leaf;
                continue;
            }
            if config.max_features.is_some() {
                features.shuffle(&mut rng);
            }
            let Some(best) = best_split(x, y, &rows, &counts, &features, config.max_features) else {
                tree.nodes[slot] = leaf;
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| x[[i, best.feature]] <= best.threshold);
            let left = tree.nodes.len();
            tree.nodes.push(Node::Leaf { class: 0 });
            tree.nodes.push(Node::Leaf { class: 0 });
            tree.nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, r, depth + 1));
            stack.push((left, l, depth + 1));
        }
        tree
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Best (feature, threshold) by Gini gain. Candidate thresholds are midpoints
/// of consecutive distinct values. Equal gains resolve to the lowest feature,
/// then the lowest threshold. With `max_features`, features are visited in
/// the shuffled order until that many non-constant ones have been examined.
fn best_split<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: &[usize],
    rows: &[usize],
    counts: &[usize],
    features: &[usize],
    max_features: Option<usize>,
) -> Option<Best<T>> {
    let n = rows.len() as f64;
    let parent = gini_of(counts, n);
    let budget = max_features.unwrap_or(features.len()).max(1);
    let mut candidates: Vec<usize> = Vec::with_capacity(budget);
    let mut examined = 0;
    let mut sorted: Vec<(T, usize)> = Vec::with_capacity(rows.len());
    let mut best: Option<Best<T>> = None;

    for &f in features {
        if examined == budget {
            break;
        }
        let first = x[[rows[0], f]];
        if rows.iter().all(|&r| x[[r, f]] == first) {
            continue;
        }
        examined += 1;
        candidates.push(f);
    }
    candidates.sort_unstable();

    let mut left = vec![0usize; counts.len()];
    for &f in &candidates {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (x[[r, f]], y[r])));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        left.iter_mut().for_each(|c| *c = 0);
        for i in 0..sorted.len() - 1 {
            left[sorted[i].1] += 1;
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            if a == b {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n - nl;
            let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
            let gain = parent - (nl / n) * gini_of(&left, nl) - (nr / n) * gini_of(&right, nr);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut t = (a + b) / T::of(2.0);
                if t >= b {
                    t = a;
                }
                best = Some(Best {
                    gain,
                    feature: f,
                    threshold: t,
                });
            }
        }
    }
    best
}

impl<T: Scalar> Classifier<T> for DecisionTreeModel<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_row(&self, row: ArrayView1<'_, T>) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}
