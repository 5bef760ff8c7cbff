//! Binary model checkpoints: the magic `CAMOMDL1`, a kind byte, then
//! little-endian `u64` dimensions and `f64` values.

use ndarray::{Array1, Array2};

use super::{
    DecisionTreeModel, KnnConfig, KnnModel, MlpConfig, MlpModel, Model, ModelError, Node, RandomForestModel,
};
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CAMOMDL1";

const KIND_KNN: u8 = 0;
const KIND_TREE: u8 = 1;
const KIND_FOREST: u8 = 2;
const KIND_MLP: u8 = 3;

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn scalar<T: Scalar>(&mut self, v: T) {
        self.f64(v.as_f64());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ModelError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize, ModelError> {
        let b: [u8; 8] = self.take(8)?.try_into().expect("8 bytes");
        usize::try_from(u64::from_le_bytes(b)).map_err(|_| ModelError::Checkpoint("dimension overflow".into()))
    }

    /// A dimension that must fit in the remaining bytes at `unit` bytes each.
    fn dim(&mut self, unit: usize) -> Result<usize, ModelError> {
        let n = self.u64()?;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err(ModelError::Checkpoint(format!("dimension {n} exceeds file size")));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        let b: [u8; 8] = self.take(8)?.try_into().expect("8 bytes");
        Ok(f64::from_le_bytes(b))
    }

    fn scalar<T: Scalar>(&mut self) -> Result<T, ModelError> {
        Ok(T::of(self.f64()?))
    }

    fn matrix<T: Scalar>(&mut self) -> Result<Array2<T>, ModelError> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n.saturating_mul(8) <= self.buf.len() - self.pos)
            .ok_or_else(|| ModelError::Checkpoint(format!("matrix {rows}x{cols} exceeds file size")))?;
        let v = (0..n).map(|_| self.scalar()).collect::<Result<Vec<T>, _>>()?;
        Array2::from_shape_vec((rows, cols), v).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

fn write_matrix<T: Scalar>(w: &mut Writer, m: &Array2<T>) {
    w.u64(m.nrows());
    w.u64(m.ncols());
    for &v in m.iter() {
        w.scalar(v);
    }
}

fn write_tree<T: Scalar>(w: &mut Writer, t: &DecisionTreeModel<T>) {
    w.u64(t.nodes.len());
    for node in &t.nodes {
        match node {
            Node::Leaf { class } => {
                w.0.push(0);
                w.u64(*class);
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.0.push(1);
                w.u64(*feature);
                w.scalar(*threshold);
                w.u64(*left);
                w.u64(*right);
            }
        }
    }
}

fn read_tree<T: Scalar>(r: &mut Reader<'_>, n_features: usize, n_classes: usize) -> Result<DecisionTreeModel<T>, ModelError> {
    let count = r.dim(9)?;
    let mut nodes = Vec::with_capacity(count);
    for i in 0..count {
        let node = match r.u8()? {
            0 => Node::Leaf { class: r.u64()? },
            1 => Node::Split {
                feature: r.u64()?,
                threshold: r.scalar()?,
                left: r.u64()?,
                right: r.u64()?,
            },
            tag => return Err(ModelError::Checkpoint(format!("bad node tag {tag}"))),
        };
        // Children always follow their parent, which rules out cycles.
        let ok = match &node {
            Node::Leaf { class } => *class < n_classes.max(1),
            Node::Split {
                feature, left, right, ..
            } => *feature < n_features && *left > i && *right > i && *left < count && *right < count,
        };
        if !ok {
            return Err(ModelError::Checkpoint(format!("node {i} out of range")));
        }
        nodes.push(node);
    }
    if nodes.is_empty() {
        return Err(ModelError::Checkpoint("tree without nodes".into()));
    }
    Ok(DecisionTreeModel {
        nodes,
        n_features,
        n_classes,
    })
}

pub fn save_model<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    match model {
        Model::Knn(m) => {
            w.0.push(KIND_KNN);
            w.u64(m.n_classes);
            w.u64(m.config.n_neighbors);
            w.f64(m.config.p);
            write_matrix(&mut w, &m.x);
            for &c in &m.y {
                w.u64(c);
            }
        }
        Model::DecisionTree(t) => {
            w.0.push(KIND_TREE);
            w.u64(t.n_features);
            w.u64(t.n_classes);
            write_tree(&mut w, t);
        }
        Model::RandomForest(f) => {
            w.0.push(KIND_FOREST);
            w.u64(f.n_features);
            w.u64(f.n_classes);
            w.u64(f.trees.len());
            for t in &f.trees {
                write_tree(&mut w, t);
            }
        }
        Model::Mlp(m) => {
            w.0.push(KIND_MLP);
            let c = &m.config;
            for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
                w.f64(v);
            }
            w.u64(c.epochs);
            w.u64(c.batch_size);
            w.u64(c.seed as usize);
            w.u64(m.weights.len());
            for (wt, b) in m.weights.iter().zip(&m.biases) {
                write_matrix(&mut w, wt);
                for &v in b.iter() {
                    w.scalar(v);
                }
            }
        }
    }
    w.0
}

pub fn load_model<T: Scalar>(bytes: &[u8]) -> Result<Model<T>, ModelError> {
    if bytes.len() < 9 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("missing CAMOMDL1 magic".into()));
    }
    let mut r = Reader { buf: bytes, pos: 9 };
    let model = match bytes[8] {
        KIND_KNN => {
            let n_classes = r.u64()?;
            let config = KnnConfig {
                n_neighbors: r.u64()?,
                p: r.f64()?,
            };
            let x = r.matrix()?;
            if x.nrows().saturating_mul(8) > bytes.len() - r.pos {
                return Err(ModelError::Checkpoint("truncated labels".into()));
            }
            let y = (0..x.nrows()).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            if y.iter().any(|&c| c >= n_classes) || x.nrows() == 0 || config.n_neighbors == 0 {
                return Err(ModelError::Checkpoint("inconsistent kNN model".into()));
            }
            Model::Knn(KnnModel {
                config,
                x,
                y,
                n_classes,
            })
        }
        KIND_TREE => {
            let d = r.u64()?;
            let c = r.u64()?;
            Model::DecisionTree(read_tree(&mut r, d, c)?)
        }
        KIND_FOREST => {
            let d = r.u64()?;
            let c = r.u64()?;
            let n = r.dim(17)?;
            let trees = (0..n).map(|_| read_tree(&mut r, d, c)).collect::<Result<Vec<_>, _>>()?;
            if trees.is_empty() {
                return Err(ModelError::Checkpoint("forest without trees".into()));
            }
            Model::RandomForest(RandomForestModel {
                trees,
                n_features: d,
                n_classes: c,
            })
        }
        KIND_MLP => {
            let mut config = MlpConfig {
                learning_rate: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                epsilon: r.f64()?,
                epochs: r.u64()?,
                batch_size: r.u64()?,
                seed: r.u64()? as u64,
                hidden: Vec::new(),
            };
            let layers = r.dim(16)?;
            let mut weights: Vec<Array2<T>> = Vec::with_capacity(layers);
            let mut biases = Vec::with_capacity(layers);
            for l in 0..layers {
                let w = r.matrix::<T>()?;
                if l > 0 && w.nrows() != weights[l - 1].ncols() {
                    return Err(ModelError::Checkpoint(format!("layer {l} shape mismatch")));
                }
                if w.ncols().saturating_mul(8) > bytes.len() - r.pos {
                    return Err(ModelError::Checkpoint("truncated bias".into()));
                }
                let b = (0..w.ncols()).map(|_| r.scalar()).collect::<Result<Vec<T>, _>>()?;
                weights.push(w);
                biases.push(Array1::from(b));
            }
            if weights.is_empty() {
                return Err(ModelError::Checkpoint("network without layers".into()));
            }
            config.hidden = weights[..layers - 1].iter().map(|w| w.ncols()).collect();
            Model::Mlp(MlpModel {
                weights,
                biases,
                config,
            })
        }
        k => return Err(ModelError::Checkpoint(format!("unknown model kind {k}"))),
    };
    if r.pos != bytes.len() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}
