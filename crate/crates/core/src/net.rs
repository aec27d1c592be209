//! The shared two-layer network `out · φ(Σ_s blocks[s] · e_{n_s})` with the
//! power activation `φ(x) = x^power`.
//!
//! One-hot inputs only select columns of the embedding blocks, so the forward
//! pass gathers columns instead of materialising the `S·p` input vector.
//!
//! Internally every net keeps a copy of its weights with the hidden neurons in
//! a canonical order (lexicographic on the weights themselves). All forward
//! kernels accumulate in that order, which makes outputs bit-identical under
//! any permutation of the hidden neurons.

use std::cmp::Ordering;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;
use crate::gf::TaskOracle;

/// What produced the weights. Tags match the weight-file encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Addition,
    Multiplication,
    Trained,
}

impl NetKind {
    pub fn tag(self) -> u32 {
        match self {
            NetKind::Addition => 0,
            NetKind::Multiplication => 1,
            NetKind::Trained => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(NetKind::Addition),
            1 => Some(NetKind::Multiplication),
            2 => Some(NetKind::Trained),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetKind::Addition => "addition",
            NetKind::Multiplication => "multiplication",
            NetKind::Trained => "trained",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoLayerNet {
    kind: NetKind,
    p: u32,
    power: u32,
    /// `S` blocks, each `N × p`.
    blocks: Vec<Array2<f64>>,
    /// `p × N`.
    out: Array2<f64>,
    /// Embeddings transposed to `p × N`, neurons in canonical order.
    embed_c: Vec<Array2<f64>>,
    /// Output matrix, neurons in canonical order.
    out_c: Array2<f64>,
}

fn compare_neurons(blocks: &[Array2<f64>], out: &Array2<f64>, a: usize, b: usize) -> Ordering {
    let cols = out.column(a).into_iter().zip(out.column(b));
    let rows = blocks
        .iter()
        .flat_map(|blk| blk.row(a).into_iter().zip(blk.row(b)));
    cols.chain(rows)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

impl TwoLayerNet {
    /// Activation power defaults to the number of input slots.
    pub fn new(
        kind: NetKind,
        p: u32,
        blocks: Vec<Array2<f64>>,
        out: Array2<f64>,
    ) -> Result<Self, NetError> {
        let power = blocks.len() as u32;
        Self::with_power(kind, p, power, blocks, out)
    }

    pub fn with_power(
        kind: NetKind,
        p: u32,
        power: u32,
        blocks: Vec<Array2<f64>>,
        out: Array2<f64>,
    ) -> Result<Self, NetError> {
        if blocks.is_empty() {
            return Err(NetError::Shape("at least one input block is required".into()));
        }
        if power == 0 {
            return Err(NetError::Shape("activation power must be positive".into()));
        }
        let (width, cols) = blocks[0].dim();
        if width == 0 {
            return Err(NetError::Shape("hidden width must be positive".into()));
        }
        if cols != p as usize {
            return Err(NetError::Shape(format!("block has {cols} columns, expected {p}")));
        }
        if let Some(bad) = blocks.iter().find(|b| b.dim() != (width, p as usize)) {
            return Err(NetError::Shape(format!(
                "block shape {:?} differs from {:?}",
                bad.dim(),
                (width, p as usize)
            )));
        }
        if out.dim() != (p as usize, width) {
            return Err(NetError::Shape(format!(
                "output matrix is {:?}, expected {:?}",
                out.dim(),
                (p as usize, width)
            )));
        }
        let finite = blocks.iter().all(|b| b.iter().all(|x| x.is_finite()))
            && out.iter().all(|x| x.is_finite());
        if !finite {
            return Err(NetError::NonFinite);
        }

        let mut order: Vec<usize> = (0..width).collect();
        order.sort_by(|&a, &b| compare_neurons(&blocks, &out, a, b));
        let embed_c = blocks
            .iter()
            .map(|blk| Array2::from_shape_fn((p as usize, width), |(i, j)| blk[[order[j], i]]))
            .collect();
        let out_c = Array2::from_shape_fn((p as usize, width), |(q, j)| out[[q, order[j]]]);

        Ok(Self {
            kind,
            p,
            power,
            blocks,
            out,
            embed_c,
            out_c,
        })
    }

    pub fn kind(&self) -> NetKind {
        self.kind
    }

    pub fn modulus(&self) -> u32 {
        self.p
    }

    /// Number of input slots `S`.
    pub fn slots(&self) -> usize {
        self.blocks.len()
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn width(&self) -> usize {
        self.out.ncols()
    }

    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.blocks
    }

    pub fn out(&self) -> &Array2<f64> {
        &self.out
    }

    fn check_inputs(&self, ns: &[u32]) -> Result<(), NetError> {
        if ns.len() != self.slots() {
            return Err(crate::error::FieldError::ArityMismatch {
                expected: self.slots(),
                got: ns.len(),
            }
            .into());
        }
        if let Some(&n) = ns.iter().find(|&&n| n >= self.p) {
            return Err(crate::error::FieldError::ResidueOutOfRange { value: n, p: self.p }.into());
        }
        Ok(())
    }

    /// Logits for one input tuple.
    pub fn forward(&self, ns: &[u32]) -> Result<Vec<f64>, NetError> {
        self.check_inputs(ns)?;
        let width = self.width();
        let mut hidden = vec![0.0; width];
        for (emb, &n) in self.embed_c.iter().zip(ns) {
            for (h, &w) in hidden.iter_mut().zip(emb.row(n as usize)) {
                *h += w;
            }
        }
        Ok(self.readout(hidden))
    }

    /// Logits for dense (non one-hot) inputs, one vector of length `p` per slot.
    pub fn forward_dense(&self, inputs: &[&[f64]]) -> Result<Vec<f64>, NetError> {
        if inputs.len() != self.slots() {
            return Err(crate::error::FieldError::ArityMismatch {
                expected: self.slots(),
                got: inputs.len(),
            }
            .into());
        }
        if let Some(bad) = inputs.iter().find(|u| u.len() != self.p as usize) {
            return Err(NetError::Shape(format!(
                "dense input has length {}, expected {}",
                bad.len(),
                self.p
            )));
        }
        let width = self.width();
        let mut hidden = vec![0.0; width];
        for (emb, u) in self.embed_c.iter().zip(inputs) {
            for (i, &ui) in u.iter().enumerate() {
                for (h, &w) in hidden.iter_mut().zip(emb.row(i)) {
                    *h += w * ui;
                }
            }
        }
        Ok(self.readout(hidden))
    }

    fn readout(&self, mut hidden: Vec<f64>) -> Vec<f64> {
        let power = self.power as i32;
        hidden.iter_mut().for_each(|h| *h = h.powi(power));
        self.out_c
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&hidden).fold(0.0, |acc, (w, a)| acc + w * a))
            .collect()
    }

    /// Logits for a batch of tuples stored row-major in `inputs` (`B × S`).
    /// Returns `B × p`. Inputs must already be in range.
    pub fn forward_batch(&self, inputs: &[u32]) -> Array2<f64> {
        let slots = self.slots();
        let batch = inputs.len() / slots;
        let width = self.width();
        let mut hidden = Array2::<f64>::zeros((batch, width));
        for (mut row, tuple) in hidden.rows_mut().into_iter().zip(inputs.chunks_exact(slots)) {
            for (emb, &n) in self.embed_c.iter().zip(tuple) {
                row += &emb.row(n as usize);
            }
        }
        self.readout_batch(hidden)
    }

    /// Batched dense forward; each entry of `inputs` is `B × p`.
    pub fn forward_dense_batch(&self, inputs: &[ArrayView2<f64>]) -> Array2<f64> {
        let batch = inputs[0].nrows();
        let mut hidden = Array2::<f64>::zeros((batch, self.width()));
        for (emb, u) in self.embed_c.iter().zip(inputs) {
            hidden += &u.dot(emb);
        }
        self.readout_batch(hidden)
    }

    fn readout_batch(&self, mut hidden: Array2<f64>) -> Array2<f64> {
        let power = self.power as i32;
        hidden.mapv_inplace(|h| h.powi(power));
        hidden.dot(&self.out_c.t())
    }

    /// A copy with hidden neurons reordered: new neuron `j` is old neuron `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, NetError> {
        let width = self.width();
        let mut seen = vec![false; width];
        if perm.len() != width || perm.iter().any(|&k| k >= width || std::mem::replace(&mut seen[k], true)) {
            return Err(NetError::Shape("not a permutation of the hidden neurons".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.select(Axis(0), perm))
            .collect();
        let out = self.out.select(Axis(1), perm);
        Self::with_power(self.kind, self.p, self.power, blocks, out)
    }

    /// Copy with the output matrix replaced.
    pub fn with_out(&self, out: Array2<f64>) -> Result<Self, NetError> {
        Self::with_power(self.kind, self.p, self.power, self.blocks.clone(), out)
    }

    /// Binary dump: `MODPOLY1`, then kind tag, p, S, N as u32 LE, then each
    /// block row-major, then the output matrix row-major, all f64 LE.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NetError> {
        w.write_all(WEIGHTS_MAGIC)?;
        for v in [
            self.kind.tag(),
            self.p,
            self.slots() as u32,
            self.width() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in self.blocks.iter().chain(std::iter::once(&self.out)) {
            for x in m.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`TwoLayerNet::write_to`]. The activation power is set to `S`.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NetError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(NetError::Format("bad magic".into()));
        }
        let mut header = [0u32; 4];
        for h in header.iter_mut() {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf)?;
            *h = u32::from_le_bytes(buf);
        }
        let [tag, p, slots, width] = header;
        let kind = NetKind::from_tag(tag).ok_or_else(|| NetError::Format(format!("unknown kind tag {tag}")))?;
        if slots == 0 || width == 0 || p == 0 {
            return Err(NetError::Format("empty dimensions in header".into()));
        }
        let mut read_matrix = |rows: usize, cols: usize| -> Result<Array2<f64>, NetError> {
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            Array2::from_shape_vec((rows, cols), data).map_err(|e| NetError::Format(e.to_string()))
        };
        let blocks = (0..slots)
            .map(|_| read_matrix(width as usize, p as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let out = read_matrix(p as usize, width as usize)?;
        Self::new(kind, p, blocks, out)
    }
}

pub const WEIGHTS_MAGIC: &[u8; 8] = b"MODPOLY1";

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val || (i == 0 && v.is_nan()) {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Writes the base-`p` digits of `index` into `out`, most significant first.
pub fn decode_tuple(mut index: u64, p: u32, out: &mut [u32]) {
    for slot in out.iter_mut().rev() {
        *slot = (index % p as u64) as u32;
        index /= p as u64;
    }
}

/// Total number of tuples, `None` on overflow.
pub fn tuple_count(p: u32, slots: usize) -> Option<u64> {
    (p as u64).checked_pow(slots as u32)
}

const EVAL_CHUNK: usize = 1024;

/// Inputs used by [`accuracy`]: all tuples in lexicographic order when the
/// input space is no larger than `sample_limit` (or there is no limit),
/// otherwise `sample_limit` distinct tuples drawn uniformly with `seed`.
pub fn evaluation_indices(total: u64, sample_limit: Option<usize>, seed: u64) -> Vec<u64> {
    match sample_limit {
        Some(limit) if (limit as u64) < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<u64> = rand::seq::index::sample(&mut rng, total as usize, limit)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    }
}

/// Fraction of inputs where the argmax logit equals the oracle's label.
pub fn accuracy(
    net: &TwoLayerNet,
    oracle: &dyn TaskOracle,
    sample_limit: Option<usize>,
    seed: u64,
) -> Result<f64, NetError> {
    if oracle.arity() != net.slots() {
        return Err(crate::error::FieldError::ArityMismatch {
            expected: net.slots(),
            got: oracle.arity(),
        }
        .into());
    }
    if oracle.modulus() != net.modulus() {
        return Err(NetError::ModulusMismatch {
            net: net.modulus(),
            ctx: oracle.modulus(),
        });
    }
    let p = net.modulus();
    let slots = net.slots();
    let total = tuple_count(p, slots)
        .filter(|&t| t <= u32::MAX as u64)
        .ok_or_else(|| NetError::Shape("input space too large to enumerate".into()))?;
    let indices = evaluation_indices(total, sample_limit, seed);
    let mut correct = 0usize;
    let mut tuple = vec![0u32; slots];
    for chunk in indices.chunks(EVAL_CHUNK) {
        let mut inputs = Vec::with_capacity(chunk.len() * slots);
        let mut labels = Vec::with_capacity(chunk.len());
        for &idx in chunk {
            decode_tuple(idx, p, &mut tuple);
            labels.push(oracle.label(&tuple));
            inputs.extend_from_slice(&tuple);
        }
        let logits = net.forward_batch(&inputs);
        correct += logits
            .rows()
            .into_iter()
            .zip(&labels)
            .filter(|(row, &label)| argmax(row.iter().copied()) == label as usize)
            .count();
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Smallest gap between the correct logit and the best wrong logit over the
/// given inputs. Negative when some input is misclassified.
pub fn min_margin(net: &TwoLayerNet, oracle: &dyn TaskOracle) -> f64 {
    let p = net.modulus();
    let slots = net.slots();
    let total = tuple_count(p, slots).unwrap_or(0);
    let mut tuple = vec![0u32; slots];
    let mut margin = f64::INFINITY;
    let indices: Vec<u64> = (0..total).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let mut inputs = Vec::with_capacity(chunk.len() * slots);
        let mut labels = Vec::with_capacity(chunk.len());
        for &idx in chunk {
            decode_tuple(idx, p, &mut tuple);
            labels.push(oracle.label(&tuple) as usize);
            inputs.extend_from_slice(&tuple);
        }
        let logits = net.forward_batch(&inputs);
        for (row, &label) in logits.rows().into_iter().zip(&labels) {
            let right = row[label];
            let wrong = row
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != label)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            margin = margin.min(right - wrong);
        }
    }
    margin
}
