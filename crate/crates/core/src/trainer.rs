//! Full-batch training of the two-layer power-activation MLP.
//!
//! The loss is the MSE between raw logits and one-hot targets, averaged over
//! both the batch and the `p` output coordinates. Gradients are written out
//! by hand:
//!
//! ```text
//! H = Σ_s E_s[n_s]        A = H^k        Z = A Wᵀ
//! dZ = 2 (Z - Y) / (B p)
//! dW = dZᵀ A              dH = (dZ W) ⊙ k H^(k-1)
//! dE_s[n] = Σ_{rows with n_s = n} dH
//! ```
//!
//! Optimisation is Adam; weight decay is decoupled by default
//! (`θ ← θ (1 - lr·wd)` every step) with the coupled L2 form available.

use ndarray::{Array2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::NetError;
use crate::gf::{FieldContext, TaskOracle};
use crate::net::{argmax, decode_tuple, tuple_count, NetKind, TwoLayerNet};
use crate::spectral::network_ipr;

/// Largest dataset `generate_dataset` will build.
pub const MAX_DATASET_ROWS: u64 = 1_000_000;

const CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("dataset would have {rows} rows, more than the {MAX_DATASET_ROWS} row budget")]
    DatasetTooLarge { rows: u128 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (train loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        metrics: Box<MetricSeries>,
    },
}

/// Every input tuple of a task with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    p: u32,
    arity: usize,
    /// Row-major `len × arity`.
    inputs: Vec<u32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn modulus(&self) -> u32 {
        self.p
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &[u32] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.inputs[i * self.arity..(i + 1) * self.arity]
    }

    fn select(&self, rows: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(rows.len() * self.arity);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Self {
            p: self.p,
            arity: self.arity,
            inputs,
            labels,
        }
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&rows)
    }
}

/// All `p^S` tuples in lexicographic order, labelled by `oracle`.
pub fn generate_dataset(oracle: &dyn TaskOracle) -> Result<Dataset, TrainError> {
    let p = oracle.modulus();
    let arity = oracle.arity();
    let rows = tuple_count(p, arity)
        .filter(|&r| r <= MAX_DATASET_ROWS)
        .ok_or_else(|| TrainError::DatasetTooLarge {
            rows: (p as u128).pow(arity as u32),
        })?;
    let mut inputs = Vec::with_capacity(rows as usize * arity);
    let mut labels = Vec::with_capacity(rows as usize);
    let mut tuple = vec![0u32; arity];
    for idx in 0..rows {
        decode_tuple(idx, p, &mut tuple);
        labels.push(oracle.label(&tuple));
        inputs.extend_from_slice(&tuple);
    }
    Ok(Dataset {
        p,
        arity,
        inputs,
        labels,
    })
}

/// Seeded shuffle; the first `⌈frac·len⌉` rows train, the rest test.
pub fn split(ds: &Dataset, frac: f64, seed: u64) -> Result<(Dataset, Dataset), TrainError> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(TrainError::InvalidConfig(format!("split fraction {frac} not in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (frac * ds.len() as f64).ceil() as usize;
    Ok((ds.select(&order[..cut]), ds.select(&order[cut..])))
}

/// Gaussian initialisation: first-layer std `init_scale/√p`, second-layer
/// std `init_scale/√N`.
pub fn init_network(
    p: u32,
    slots: usize,
    width: usize,
    power: u32,
    seed: u64,
    init_scale: f64,
) -> Result<TwoLayerNet, NetError> {
    if width == 0 {
        return Err(NetError::Shape("hidden width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |rows: usize, cols: usize, std: f64| {
        Array2::from_shape_simple_fn((rows, cols), || std * rng.sample::<f64, _>(StandardNormal))
    };
    let first_std = init_scale / (p as f64).sqrt();
    let blocks = (0..slots).map(|_| gaussian(width, p as usize, first_std)).collect();
    let out = gaussian(p as usize, width, init_scale / (width as f64).sqrt());
    TwoLayerNet::with_power(NetKind::Trained, p, power, blocks, out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// Multiply weights by `1 - lr·wd` outside the adaptive update.
    #[default]
    Decoupled,
    /// Add `wd·θ` to the gradient before the moment updates.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub wd: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub split_frac: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub eval_every: usize,
    pub stop_at_test_acc: Option<f64>,
    pub decay: DecayMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            wd: 5.0,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            epochs: 100_000,
            split_frac: 0.5,
            seed: 0,
            init_scale: 1.0,
            eval_every: 10,
            stop_at_test_acc: None,
            decay: DecayMode::Decoupled,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.split_frac > 0.0 && self.split_frac < 1.0) {
            return bad("split_frac must lie in (0, 1)");
        }
        if self.wd < 0.0 || !self.wd.is_finite() {
            return bad("wd must be a non-negative number");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

/// Metrics captured at each evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub epochs: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
    pub avg_ipr: Vec<f64>,
}

pub const METRICS_CSV_HEADER: &str = "epoch,train_loss,test_loss,train_acc,test_acc,avg_ipr";

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    fn push(&mut self, epoch: usize, train: Stats, test: Stats, ipr: f64) {
        self.epochs.push(epoch);
        self.train_loss.push(train.loss);
        self.test_loss.push(test.loss);
        self.train_acc.push(train.acc);
        self.test_acc.push(test.acc);
        self.avg_ipr.push(ipr);
    }

    /// First recorded epoch where `series[i] >= threshold`.
    pub fn first_epoch_reaching(series: &[f64], epochs: &[usize], threshold: f64) -> Option<usize> {
        series.iter().position(|&v| v >= threshold).map(|i| epochs[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_CSV_HEADER);
        s.push('\n');
        for i in 0..self.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.epochs[i],
                self.train_loss[i],
                self.test_loss[i],
                self.train_acc[i],
                self.test_acc[i],
                self.avg_ipr[i]
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stats {
    loss: f64,
    acc: f64,
}

/// Adam moments and step count, enough to resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    /// Per slot, row-major `p × N` (input value major).
    pub m_embed: Vec<Vec<f64>>,
    pub v_embed: Vec<Vec<f64>>,
    /// Row-major `p × N`.
    pub m_out: Vec<f64>,
    pub v_out: Vec<f64>,
}

/// Mutable parameters plus optimiser state for one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    p: u32,
    power: u32,
    /// Per slot `p × N`: row `n` is the embedding of residue `n`.
    embed: Vec<Array2<f64>>,
    /// `p × N`.
    out: Array2<f64>,
    m_embed: Vec<Array2<f64>>,
    v_embed: Vec<Array2<f64>>,
    m_out: Array2<f64>,
    v_out: Array2<f64>,
    step: u64,
}

/// Gradients with the same layout as the trainer's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embed: Vec<Array2<f64>>,
    pub out: Array2<f64>,
}

impl Trainer {
    pub fn new(net: &TwoLayerNet) -> Self {
        let embed: Vec<Array2<f64>> = net.blocks().iter().map(|b| b.t().to_owned()).collect();
        let out = net.out().clone();
        let zeros = |m: &Array2<f64>| Array2::zeros(m.dim());
        Self {
            p: net.modulus(),
            power: net.power(),
            m_embed: embed.iter().map(zeros).collect(),
            v_embed: embed.iter().map(zeros).collect(),
            m_out: zeros(&out),
            v_out: zeros(&out),
            embed,
            out,
            step: 0,
        }
    }

    /// Resume from a saved optimiser state.
    pub fn restore(net: &TwoLayerNet, state: &OptimizerState) -> Result<Self, NetError> {
        let mut t = Self::new(net);
        let dim = t.out.dim();
        let mat = |v: &[f64]| {
            Array2::from_shape_vec(dim, v.to_vec()).map_err(|e| NetError::Shape(e.to_string()))
        };
        if state.m_embed.len() != t.embed.len() || state.v_embed.len() != t.embed.len() {
            return Err(NetError::Shape("optimizer state has the wrong slot count".into()));
        }
        t.m_embed = state.m_embed.iter().map(|v| mat(v)).collect::<Result<_, _>>()?;
        t.v_embed = state.v_embed.iter().map(|v| mat(v)).collect::<Result<_, _>>()?;
        t.m_out = mat(&state.m_out)?;
        t.v_out = mat(&state.v_out)?;
        t.step = state.step;
        Ok(t)
    }

    pub fn optimizer_state(&self) -> OptimizerState {
        let flat = |m: &Array2<f64>| m.iter().copied().collect::<Vec<_>>();
        OptimizerState {
            step: self.step,
            m_embed: self.m_embed.iter().map(flat).collect(),
            v_embed: self.v_embed.iter().map(flat).collect(),
            m_out: flat(&self.m_out),
            v_out: flat(&self.v_out),
        }
    }

    pub fn width(&self) -> usize {
        self.out.ncols()
    }

    pub fn network(&self) -> Result<TwoLayerNet, NetError> {
        let blocks = self.embed.iter().map(|e| e.t().to_owned()).collect();
        TwoLayerNet::with_power(NetKind::Trained, self.p, self.power, blocks, self.out.clone())
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<(), TrainError> {
        if ds.arity() != self.embed.len() || ds.modulus() != self.p {
            return Err(TrainError::InvalidConfig(format!(
                "dataset (p={}, arity={}) does not match network (p={}, slots={})",
                ds.modulus(),
                ds.arity(),
                self.p,
                self.embed.len()
            )));
        }
        Ok(())
    }

    fn hidden(&self, inputs: &[u32]) -> Array2<f64> {
        let slots = self.embed.len();
        let rows = inputs.len() / slots;
        let mut h = Array2::<f64>::zeros((rows, self.width()));
        for (mut row, tuple) in h.rows_mut().into_iter().zip(inputs.chunks_exact(slots)) {
            for (emb, &n) in self.embed.iter().zip(tuple) {
                row += &emb.row(n as usize);
            }
        }
        h
    }

    /// Squared error summed over a chunk, and the number of argmax hits.
    fn chunk_error(z: &Array2<f64>, labels: &[u32]) -> (f64, usize) {
        let mut sq = 0.0;
        let mut hits = 0;
        for (row, &label) in z.rows().into_iter().zip(labels) {
            for (q, &v) in row.iter().enumerate() {
                let d = v - if q == label as usize { 1.0 } else { 0.0 };
                sq += d * d;
            }
            if argmax(row.iter().copied()) == label as usize {
                hits += 1;
            }
        }
        (sq, hits)
    }

    fn evaluate(&self, ds: &Dataset) -> Stats {
        if ds.is_empty() {
            return Stats { loss: f64::NAN, acc: f64::NAN };
        }
        let slots = ds.arity();
        let power = self.power as i32;
        let (mut sq, mut hits) = (0.0, 0);
        for (inputs, labels) in ds.inputs().chunks(CHUNK * slots).zip(ds.labels().chunks(CHUNK)) {
            let mut a = self.hidden(inputs);
            a.mapv_inplace(|h| h.powi(power));
            let z = a.dot(&self.out.t());
            let (s, h) = Self::chunk_error(&z, labels);
            sq += s;
            hits += h;
        }
        Stats {
            loss: sq / (ds.len() as f64 * self.p as f64),
            acc: hits as f64 / ds.len() as f64,
        }
    }

    /// Loss statistics and exact gradients of the mean squared error over `ds`.
    fn loss_and_gradients(&self, ds: &Dataset) -> (Stats, Gradients) {
        let slots = ds.arity();
        let power = self.power as i32;
        let k = self.power as f64;
        let scale = 2.0 / (ds.len() as f64 * self.p as f64);
        let mut g_embed: Vec<Array2<f64>> = self.embed.iter().map(|e| Array2::zeros(e.dim())).collect();
        let mut g_out = Array2::<f64>::zeros(self.out.dim());
        let (mut sq, mut hits) = (0.0, 0);

        for (inputs, labels) in ds.inputs().chunks(CHUNK * slots).zip(ds.labels().chunks(CHUNK)) {
            let mut h = self.hidden(inputs);
            let a = h.mapv(|x| x.powi(power));
            let mut dz = a.dot(&self.out.t());
            let (s, hit) = Self::chunk_error(&dz, labels);
            sq += s;
            hits += hit;
            for (mut row, &label) in dz.rows_mut().into_iter().zip(labels) {
                row[label as usize] -= 1.0;
                row *= scale;
            }
            g_out += &dz.t().dot(&a);
            let da = dz.dot(&self.out);
            // h becomes dH in place.
            Zip::from(&mut h).and(&da).for_each(|x, &d| *x = d * k * x.powi(power - 1));
            for (row, tuple) in h.rows().into_iter().zip(inputs.chunks_exact(slots)) {
                for (g, &n) in g_embed.iter_mut().zip(tuple) {
                    let mut target = g.row_mut(n as usize);
                    target += &row;
                }
            }
        }
        let stats = Stats {
            loss: sq / (ds.len() as f64 * self.p as f64),
            acc: hits as f64 / ds.len() as f64,
        };
        (
            stats,
            Gradients {
                embed: g_embed,
                out: g_out,
            },
        )
    }

    /// Analytic gradients in the public block layout (`N × p` per slot).
    pub fn gradients(&self, ds: &Dataset) -> Gradients {
        let (_, g) = self.loss_and_gradients(ds);
        Gradients {
            embed: g.embed.iter().map(|e| e.t().to_owned()).collect(),
            out: g.out,
        }
    }

    fn adam_step(&mut self, grads: Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (lr, wd, b1, b2, eps) = (cfg.lr, cfg.wd, cfg.beta1, cfg.beta2, cfg.eps);
        let decoupled = cfg.decay == DecayMode::Decoupled;
        let shrink = if decoupled { 1.0 - lr * wd } else { 1.0 };
        let update = |theta: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>| {
            Zip::from(theta).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                let g = if decoupled { g } else { g + wd * *w };
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let step = lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                *w = *w * shrink - step;
            });
        };
        for (s, g) in grads.embed.iter().enumerate() {
            update(&mut self.embed[s], g, &mut self.m_embed[s], &mut self.v_embed[s]);
        }
        update(&mut self.out, &grads.out, &mut self.m_out, &mut self.v_out);
    }

    /// Runs full-batch training. Metrics are recorded at epoch 0, every
    /// `eval_every` epochs, and at the last epoch. `ipr_ctx` switches the IPR
    /// metric to exp-map reshuffled weights (multiplication-type tasks).
    pub fn train(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        cfg: &TrainConfig,
        ipr_ctx: Option<&FieldContext>,
    ) -> Result<MetricSeries, TrainError> {
        cfg.validate()?;
        self.check_dataset(train)?;
        self.check_dataset(test)?;
        if train.is_empty() {
            return Err(TrainError::InvalidConfig("empty training set".into()));
        }
        let mut metrics = MetricSeries::default();
        let mut streak = 0usize;
        for epoch in 0..=cfg.epochs {
            let (train_stats, grads) = self.loss_and_gradients(train);
            if !train_stats.loss.is_finite() || train_stats.loss > 1e6 {
                return Err(TrainError::Diverged {
                    epoch,
                    loss: train_stats.loss,
                    metrics: Box::new(metrics),
                });
            }
            let last = epoch == cfg.epochs;
            if epoch % cfg.eval_every == 0 || last {
                let test_stats = self.evaluate(test);
                let ipr = network_ipr(&self.network()?, ipr_ctx)?.average;
                metrics.push(epoch, train_stats, test_stats, ipr);
                if let Some(threshold) = cfg.stop_at_test_acc {
                    streak = if test_stats.acc >= threshold { streak + 1 } else { 0 };
                    if streak >= EARLY_STOP_STREAK {
                        break;
                    }
                }
            }
            if last {
                break;
            }
            self.adam_step(grads, cfg);
        }
        Ok(metrics)
    }
}

/// Consecutive evaluations above the threshold needed to stop early.
pub const EARLY_STOP_STREAK: usize = 10;

/// Mean squared error of `net` on `ds` (same normalisation as training).
pub fn dataset_loss(net: &TwoLayerNet, ds: &Dataset) -> f64 {
    let z = net.forward_batch(ds.inputs());
    let (sq, _) = Trainer::chunk_error(&z, ds.labels());
    sq / (ds.len() as f64 * net.modulus() as f64)
}

/// Largest relative error between analytic gradients and central finite
/// differences over `coords` random weight coordinates.
///
/// The relative error of a coordinate is `|g - ĝ| / max(|g|, |ĝ|, floor)`
/// with `floor = 1e-6 · max|g|`, so coordinates whose true gradient is
/// numerically zero do not turn rounding noise into huge ratios.
pub fn gradient_check(
    net: &TwoLayerNet,
    batch: &Dataset,
    epsilon: f64,
    coords: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::InvalidConfig("gradient check needs a nonempty batch".into()));
    }
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(TrainError::InvalidConfig(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let trainer = Trainer::new(net);
    trainer.check_dataset(batch)?;
    let grads = trainer.gradients(batch);
    let max_grad = grads
        .embed
        .iter()
        .chain(std::iter::once(&grads.out))
        .flat_map(|m| m.iter())
        .fold(0.0f64, |acc, g| acc.max(g.abs()));
    let floor = (1e-6 * max_grad).max(f64::MIN_POSITIVE);

    let slots = net.slots();
    let (width, p) = (net.width(), net.modulus() as usize);
    let per_block = width * p;
    let total = per_block * (slots + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let idx = rng.random_range(0..total);
        let (which, offset) = (idx / per_block, idx % per_block);
        let perturbed = |delta: f64| -> Result<f64, NetError> {
            let mut blocks = net.blocks().to_vec();
            let mut out = net.out().clone();
            if which < slots {
                blocks[which][[offset / p, offset % p]] += delta;
            } else {
                out[[offset / width, offset % width]] += delta;
            }
            let n = TwoLayerNet::with_power(NetKind::Trained, net.modulus(), net.power(), blocks, out)?;
            Ok(dataset_loss(&n, batch))
        };
        let numeric = (perturbed(epsilon)? - perturbed(-epsilon)?) / (2.0 * epsilon);
        let analytic = if which < slots {
            grads.embed[which][[offset / p, offset % p]]
        } else {
            grads.out[[offset / width, offset % width]]
        };
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Gradients of the first layer, exposed for the zero-weight check.
pub fn first_layer_gradients(net: &TwoLayerNet, batch: &Dataset) -> Vec<Array2<f64>> {
    Trainer::new(net).gradients(batch).embed
}
