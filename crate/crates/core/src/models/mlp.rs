use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_training_set, Classifier, ModelError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64, 64, 64],
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 330,
            batch_size: 32,
            seed: 30,
        }
    }
}

/// Feed-forward network: ReLU hidden layers, softmax output, trained with
/// Adam on categorical cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    /// `weights[l]` has shape `(fan_in, fan_out)`.
    pub(crate) weights: Vec<Array2<T>>,
    pub(crate) biases: Vec<Array1<T>>,
    pub(crate) config: MlpConfig,
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m_w: Vec<Array2<T>>,
    v_w: Vec<Array2<T>>,
    m_b: Vec<Array1<T>>,
    v_b: Vec<Array1<T>>,
    t: i32,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(model: &MlpModel<T>) -> Self {
        let zw: Vec<Array2<T>> = model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let zb: Vec<Array1<T>> = model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
        AdamState {
            m_w: zw.clone(),
            v_w: zw,
            m_b: zb.clone(),
            v_b: zb,
            t: 0,
        }
    }
}

/// Gradients of the mean cross-entropy, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> MlpModel<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(n_features: usize, n_classes: usize, config: &MlpConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut sizes = vec![n_features];
        sizes.extend(&config.hidden);
        sizes.push(n_classes);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fi, fo) = (pair[0], pair[1]);
            let limit = (6.0 / (fi + fo) as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((fi, fo), || {
                T::of(rng.gen_range(-limit..=limit))
            }));
            biases.push(Array1::zeros(fo));
        }
        MlpModel {
            weights,
            biases,
            config: config.clone(),
        }
    }

    pub fn fit(x: ArrayView2<'_, T>, y: &[usize], config: &MlpConfig) -> Result<Self, ModelError> {
        check_training_set(x, y)?;
        if config.batch_size == 0 {
            return Err(ModelError::Config("batch size must be positive".into()));
        }
        let n_classes = y.iter().max().map_or(0, |m| m + 1);
        let mut model = Self::init(x.ncols(), n_classes, config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED);
        model.run_epochs(x, y, config.epochs, config.learning_rate, &mut rng)?;
        Ok(model)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    /// Layer activations, input first, softmax probabilities last.
    fn forward(&self, x: ArrayView2<'_, T>) -> Vec<Array2<T>> {
        let mut acts = vec![x.to_owned()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(T::zero()));
            } else {
                softmax_rows(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        self.forward(x).pop().expect("network has an output layer")
    }

    /// Mean cross-entropy of the batch.
    pub fn loss(&self, x: ArrayView2<'_, T>, y: &[usize]) -> T {
        let logits = self.logits(x);
        cross_entropy(&logits, y)
    }

    fn logits(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut a = x.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = a.dot(w) + b;
            if l < last {
                a.mapv_inplace(|v| v.max(T::zero()));
            }
        }
        a
    }

    /// Backpropagated gradients of the mean cross-entropy and the loss.
    pub fn gradients(&self, x: ArrayView2<'_, T>, y: &[usize]) -> (Gradients<T>, T) {
        let acts = self.forward(x);
        let n = T::of_usize(x.nrows());
        let probs = acts.last().expect("output layer");
        let loss = probs
            .outer_iter()
            .zip(y)
            .map(|(p, &c)| -(p[c].max(T::min_positive_value())).ln())
            .sum::<T>()
            / n;
        let mut delta = probs.clone();
        for (mut row, &c) in delta.outer_iter_mut().zip(y) {
            row[c] -= T::one();
        }
        delta.mapv_inplace(|v| v / n);
        let layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            gw[l] = acts[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l].t());
                Zip::from(&mut prev).and(&acts[l]).for_each(|d, &a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
                delta = prev;
            }
        }
        (Gradients { weights: gw, biases: gb }, loss)
    }

    /// One Adam update on `batch`; returns the batch loss before the update.
    pub fn backprop_step(
        &mut self,
        adam: &mut AdamState<T>,
        x: ArrayView2<'_, T>,
        y: &[usize],
        lr: f64,
    ) -> Result<T, ModelError> {
        if y.is_empty() || x.nrows() != y.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "batch of {} rows with {} labels",
                x.nrows(),
                y.len()
            )));
        }
        let (g, loss) = self.gradients(x, y);
        if !loss.is_finite() {
            return Err(ModelError::NumericOverflow(format!("loss = {loss}")));
        }
        adam.t += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::one() - b1.powi(adam.t);
        let bc2 = T::one() - b2.powi(adam.t);
        let (lr, eps) = (T::of(lr), T::of(c.epsilon));
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        };
        for l in 0..self.weights.len() {
            Zip::from(&mut self.weights[l])
                .and(&mut adam.m_w[l])
                .and(&mut adam.v_w[l])
                .and(&g.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut self.biases[l])
                .and(&mut adam.m_b[l])
                .and(&mut adam.v_b[l])
                .and(&g.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            let finite = self.weights[l].iter().chain(self.biases[l].iter()).all(|v| v.is_finite());
            if !finite {
                return Err(ModelError::NumericOverflow(format!(
                    "layer {l} parameters diverged at step {}",
                    adam.t
                )));
            }
        }
        Ok(loss)
    }

    /// Shuffled mini-batch epochs with a fresh optimizer state.
    fn run_epochs(
        &mut self,
        x: ArrayView2<'_, T>,
        y: &[usize],
        epochs: usize,
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), ModelError> {
        let mut adam = AdamState::new(self);
        let mut order: Vec<usize> = (0..y.len()).collect();
        let bs = self.config.batch_size.max(1);
        for epoch in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(bs) {
                let xb = x.select(Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                self.backprop_step(&mut adam, xb.view(), &yb, lr)
                    .map_err(|e| match e {
                        ModelError::NumericOverflow(m) => ModelError::NumericOverflow(format!("epoch {epoch}: {m}")),
                        other => other,
                    })?;
            }
        }
        Ok(())
    }

    fn check_continuation(&self, x: ArrayView2<'_, T>, y: &[usize]) -> Result<(), ModelError> {
        if x.ncols() != self.n_features() {
            return Err(ModelError::ShapeMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        if x.nrows() != y.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(&c) = y.iter().find(|&&c| c >= self.n_classes()) {
            return Err(ModelError::DimensionMismatch(format!(
                "label {c} outside the model's {} classes",
                self.n_classes()
            )));
        }
        Ok(())
    }

    /// Continues training on obfuscated rows only, at a low learning rate.
    pub fn fine_tune(&self, x: ArrayView2<'_, T>, y: &[usize], epochs: usize, lr: f64) -> Result<Self, ModelError> {
        self.check_continuation(x, y)?;
        let mut model = self.clone();
        if epochs == 0 || y.is_empty() {
            return Ok(model);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0xF1E7);
        model.run_epochs(x, y, epochs, lr, &mut rng)?;
        Ok(model)
    }

    /// Continues training on a mix of original and obfuscated rows at the
    /// base learning rate.
    pub fn incremental_train(&self, x_mixed: ArrayView2<'_, T>, y: &[usize], epochs: usize) -> Result<Self, ModelError> {
        self.check_continuation(x_mixed, y)?;
        let mut model = self.clone();
        if epochs == 0 || y.is_empty() {
            return Ok(model);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x1AC7);
        let lr = self.config.learning_rate;
        model.run_epochs(x_mixed, y, epochs, lr, &mut rng)?;
        Ok(model)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].nrows()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<T>] {
        &self.biases
    }

    /// Mutable parameters, for external gradient checks and surgery.
    pub fn parameters_mut(&mut self) -> (&mut [Array2<T>], &mut [Array1<T>]) {
        (&mut self.weights, &mut self.biases)
    }
}

/// Shuffled 50/50 mix: `min(|a|, |b|)` rows drawn from each side.
pub fn mix_half<T: Scalar>(
    xa: ArrayView2<'_, T>,
    ya: &[usize],
    xb: ArrayView2<'_, T>,
    yb: &[usize],
    seed: u64,
) -> (Array2<T>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = ya.len().min(yb.len());
    let mut ia: Vec<usize> = (0..ya.len()).collect();
    let mut ib: Vec<usize> = (0..yb.len()).collect();
    ia.shuffle(&mut rng);
    ib.shuffle(&mut rng);
    let mut picks: Vec<(bool, usize)> = ia[..half]
        .iter()
        .map(|&i| (false, i))
        .chain(ib[..half].iter().map(|&i| (true, i)))
        .collect();
    picks.shuffle(&mut rng);
    let mut x = Array2::zeros((picks.len(), xa.ncols()));
    let mut y = Vec::with_capacity(picks.len());
    for (r, &(from_b, i)) in picks.iter().enumerate() {
        let (src, lab) = if from_b { (xb.row(i), yb[i]) } else { (xa.row(i), ya[i]) };
        x.row_mut(r).assign(&src);
        y.push(lab);
    }
    (x, y)
}

fn softmax_rows<T: Scalar>(z: &mut Array2<T>) {
    for mut row in z.outer_iter_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

fn cross_entropy<T: Scalar>(logits: &Array2<T>, y: &[usize]) -> T {
    let n = T::of_usize(y.len().max(1));
    logits
        .outer_iter()
        .zip(y)
        .map(|(z, &c)| {
            let m = z.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            lse - z[c]
        })
        .sum::<T>()
        / n
}

impl<T: Scalar> Classifier<T> for MlpModel<T> {
    fn n_features(&self) -> usize {
        self.weights[0].nrows()
    }

    fn n_classes(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    fn predict_row(&self, row: ArrayView1<'_, T>) -> usize {
        let x = row.insert_axis(Axis(0));
        let z = self.logits(x);
        let z = z.slice(s![0, ..]);
        let mut best = 0;
        for (i, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = i;
            }
        }
        best
    }

    fn predict(&self, x: ArrayView2<'_, T>) -> Result<Vec<usize>, ModelError> {
        if x.ncols() != self.n_features() {
            return Err(ModelError::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let z = self.logits(x);
        Ok(z
            .outer_iter()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> MlpModel<f64> {
        let cfg = MlpConfig {
            hidden: vec![4],
            seed: 7,
            ..Default::default()
        };
        MlpModel::init(2, 2, &cfg)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = tiny();
        // Non-zero biases so every parameter participates.
        m.biases[0] = array![0.1, -0.05, 0.2, 0.03];
        m.biases[1] = array![0.01, -0.02];
        let x = array![[0.5, -1.2], [1.5, 0.3], [-0.7, 0.9]];
        let y = [0, 1, 1];
        let (g, _) = m.gradients(x.view(), &y);
        let eps = 1e-4;
        let mut worst: f64 = 0.0;
        for l in 0..m.weights.len() {
            for idx in 0..m.weights[l].len() {
                let (r, c) = (idx / m.weights[l].ncols(), idx % m.weights[l].ncols());
                let mut p = m.clone();
                p.weights[l][[r, c]] += eps;
                let mut q = m.clone();
                q.weights[l][[r, c]] -= eps;
                let num = (p.loss(x.view(), &y) - q.loss(x.view(), &y)) / (2.0 * eps);
                worst = worst.max(rel_err(g.weights[l][[r, c]], num));
            }
            for j in 0..m.biases[l].len() {
                let mut p = m.clone();
                p.biases[l][j] += eps;
                let mut q = m.clone();
                q.biases[l][j] -= eps;
                let num = (p.loss(x.view(), &y) - q.loss(x.view(), &y)) / (2.0 * eps);
                worst = worst.max(rel_err(g.biases[l][j], num));
            }
        }
        assert!(worst < 1e-3, "max relative error {worst}");
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut m = tiny();
        let before = m.clone();
        let mut adam = AdamState::new(&m);
        let x = array![[0.5, -1.2], [1.5, 0.3]];
        m.backprop_step(&mut adam, x.view(), &[0, 1], 0.0).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = tiny();
        let p = m.predict_proba(array![[100.0, -3.0], [0.0, 0.0], [-50.0, 20.0]].view());
        for r in p.outer_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn confident_correct_output_has_small_loss() {
        let mut m = tiny();
        m.weights[1].fill(0.0);
        m.biases[1] = array![10.0, -10.0];
        assert!(m.loss(array![[1.0, 1.0]].view(), &[0]) < 0.01);
    }

    #[test]
    fn loss_falls_on_separable_data() {
        let x = array![[0.0, 0.1], [0.2, 0.0], [0.1, 0.3], [2.0, 2.1], [2.2, 1.9], [1.8, 2.0]];
        let y = [0, 0, 0, 1, 1, 1];
        let cfg = MlpConfig { epochs: 0, ..Default::default() };
        let mut m = MlpModel::fit(x.view(), &y, &cfg).unwrap();
        let mut adam = AdamState::new(&m);
        let mut last = m.loss(x.view(), &y);
        for _ in 0..5 {
            m.backprop_step(&mut adam, x.view(), &y, 0.001).unwrap();
            let now = m.loss(x.view(), &y);
            assert!(now <= last, "{now} > {last}");
            last = now;
        }
        let trained = MlpModel::fit(x.view(), &y, &MlpConfig { epochs: 100, ..Default::default() }).unwrap();
        assert_eq!(trained.predict(x.view()).unwrap(), y.to_vec());
    }

    #[test]
    fn fine_tune_zero_epochs_and_shape_check() {
        let m = tiny();
        let x = array![[0.5, -1.2]];
        assert_eq!(m.fine_tune(x.view(), &[1], 0, 1e-4).unwrap(), m);
        let bad = array![[0.5, -1.2, 3.0]];
        assert_eq!(
            m.fine_tune(bad.view(), &[1], 5, 1e-4).unwrap_err(),
            ModelError::ShapeMismatch { expected: 2, got: 3 }
        );
        let moved = m.incremental_train(x.view(), &[1], 3).unwrap();
        assert_ne!(moved, m);
    }

    #[test]
    fn overflow_is_reported() {
        let mut m = tiny();
        m.weights[0].fill(f64::MAX);
        let mut adam = AdamState::new(&m);
        let r = m.backprop_step(&mut adam, array![[1e300, 1e300]].view(), &[0], 0.001);
        assert!(matches!(r, Err(ModelError::NumericOverflow(_))));
    }

    #[test]
    fn mix_takes_equal_halves() {
        let xa = array![[0.0], [1.0], [2.0]];
        let xb = array![[10.0], [11.0]];
        let (x, y) = mix_half(xa.view(), &[0, 0, 0], xb.view(), &[1, 1], 3);
        assert_eq!(x.nrows(), 4);
        assert_eq!(y.iter().filter(|&&c| c == 1).count(), 2);
    }
}
