//! Arbitrary two-variable polynomials from analytical experts.
//!
//! Each monomial `n1^a_s n2^b_s` is solved by its own multiplication expert.
//! The expert logits pass through a temperature-scaled softmax and the S
//! resulting near-one-hot vectors feed an S-term addition expert carrying the
//! coefficients `c_s`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::analytic::{build_addition_solution, build_multiplication_solution};
use crate::error::NetError;
use crate::gf::{mod_pow, FieldContext, ModPolynomial, SumTask, TaskOracle};
use crate::net::{argmax, decode_tuple, evaluation_indices, TwoLayerNet};
use crate::seed::derive_seed;

pub const DEFAULT_BETA: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct CompositeNet {
    poly: ModPolynomial,
    experts: Vec<TwoLayerNet>,
    /// `None` for single-term polynomials.
    adder: Option<TwoLayerNet>,
    beta: f64,
}

/// How expert logits are turned into adder inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gating {
    /// `softmax(β t)`; `β = 0` gives uniform vectors.
    Softmax(f64),
    /// One-hot of each expert's argmax (the `β → ∞` limit).
    Hard,
    /// One-hot of each monomial's true value; bypasses the experts entirely.
    Exact,
}

pub fn build_composite(
    poly: &ModPolynomial,
    ctx: &FieldContext,
    expert_width: usize,
    adder_width: usize,
    beta: f64,
    seed: u64,
) -> Result<CompositeNet, NetError> {
    let p = poly.modulus();
    if ctx.modulus() != p {
        return Err(NetError::ModulusMismatch { net: p, ctx: ctx.modulus() });
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(NetError::Shape(format!("inverse temperature must be positive, got {beta}")));
    }
    for t in poly.terms() {
        if t.a == 0 {
            return Err(NetError::ZeroExponent { name: "a" });
        }
        if t.b == 0 {
            return Err(NetError::ZeroExponent { name: "b" });
        }
    }
    let terms = poly.terms();
    let experts = terms
        .iter()
        .enumerate()
        .map(|(s, t)| build_multiplication_solution(ctx, t.a, t.b, expert_width, derive_seed(seed, s as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let adder = if terms.len() >= 2 {
        let task = SumTask::new(p, terms.iter().map(|t| t.coeff).collect())?;
        Some(build_addition_solution(
            &task,
            adder_width,
            derive_seed(seed, terms.len() as u64),
        )?)
    } else {
        if adder_width < p as usize {
            return Err(NetError::WidthTooSmall { width: adder_width, p });
        }
        None
    };
    Ok(CompositeNet {
        poly: poly.clone(),
        experts,
        adder,
        beta,
    })
}

fn softmax_in_place(row: &mut [f64], beta: f64) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (beta * (*x - max)).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

fn one_hot_in_place(row: &mut [f64], hot: usize) {
    row.iter_mut().enumerate().for_each(|(i, x)| *x = if i == hot { 1.0 } else { 0.0 });
}

/// Pairwise (cascade) summation; result depends only on the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeEval {
    pub mse: f64,
    pub accuracy: f64,
}

/// Inputs covered by [`CompositeNet::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalScope {
    Exhaustive,
    Sample { count: usize, seed: u64 },
}

const CHUNK: usize = 512;

impl CompositeNet {
    pub fn polynomial(&self) -> &ModPolynomial {
        &self.poly
    }

    pub fn modulus(&self) -> u32 {
        self.poly.modulus()
    }

    pub fn experts(&self) -> &[TwoLayerNet] {
        &self.experts
    }

    pub fn adder(&self) -> Option<&TwoLayerNet> {
        self.adder.as_ref()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn monomial_value(&self, s: usize, n1: u32, n2: u32) -> usize {
        let p = self.modulus() as u64;
        let t = self.poly.terms()[s];
        (mod_pow(n1 as u64, t.a as u64, p) * mod_pow(n2 as u64, t.b as u64, p) % p) as usize
    }

    /// Output logits `z` for one input pair, gated with the net's own `β`.
    pub fn forward(&self, n1: u32, n2: u32) -> Result<Vec<f64>, NetError> {
        self.forward_gated(n1, n2, Gating::Softmax(self.beta))
    }

    pub fn forward_gated(&self, n1: u32, n2: u32, gating: Gating) -> Result<Vec<f64>, NetError> {
        let p = self.modulus() as usize;
        let mut gated: Vec<Vec<f64>> = Vec::with_capacity(self.experts.len());
        for (s, expert) in self.experts.iter().enumerate() {
            let mut t = expert.forward(&[n1, n2])?;
            match gating {
                Gating::Softmax(beta) => softmax_in_place(&mut t, beta),
                Gating::Hard => {
                    let hot = argmax(t.iter().copied());
                    one_hot_in_place(&mut t, hot)
                }
                Gating::Exact => one_hot_in_place(&mut t, self.monomial_value(s, n1, n2)),
            }
            gated.push(t);
        }
        match &self.adder {
            Some(adder) => {
                let refs: Vec<&[f64]> = gated.iter().map(Vec::as_slice).collect();
                adder.forward_dense(&refs)
            }
            None => {
                // Single term c·m: logit q reads the expert at m = c⁻¹ q.
                let inv = self.single_term_inverse();
                let raw = match gating {
                    Gating::Softmax(_) => self.experts[0].forward(&[n1, n2])?,
                    _ => gated.swap_remove(0),
                };
                Ok((0..p).map(|q| raw[q * inv % p]).collect())
            }
        }
    }

    fn single_term_inverse(&self) -> usize {
        let p = self.modulus() as u64;
        mod_pow(self.poly.terms()[0].coeff as u64, p - 2, p) as usize
    }

    /// Batched forward over `pairs` (row-major `B × 2`), returns `B × p`.
    fn forward_batch(&self, pairs: &[u32], gating: Gating) -> Array2<f64> {
        let p = self.modulus() as usize;
        let mut gated = Vec::with_capacity(self.experts.len());
        for (s, expert) in self.experts.iter().enumerate() {
            let mut t = expert.forward_batch(pairs);
            for (mut row, pair) in t.axis_iter_mut(Axis(0)).zip(pairs.chunks_exact(2)) {
                let row = row.as_slice_mut().expect("standard layout");
                match gating {
                    Gating::Softmax(beta) => {
                        if self.adder.is_some() {
                            softmax_in_place(row, beta)
                        }
                    }
                    Gating::Hard => {
                        let hot = argmax(row.iter().copied());
                        one_hot_in_place(row, hot)
                    }
                    Gating::Exact => one_hot_in_place(row, self.monomial_value(s, pair[0], pair[1])),
                }
            }
            gated.push(t);
        }
        match &self.adder {
            Some(adder) => {
                let views: Vec<_> = gated.iter().map(|g| g.view()).collect();
                adder.forward_dense_batch(&views)
            }
            None => {
                let inv = self.single_term_inverse();
                let t = &gated[0];
                Array2::from_shape_fn(t.dim(), |(b, q)| t[[b, q * inv % p]])
            }
        }
    }

    /// MSE against one-hot targets (mean over inputs and the `p` outputs) and
    /// argmax accuracy against the polynomial.
    pub fn evaluate(&self, scope: EvalScope) -> CompositeEval {
        self.evaluate_gated(scope, Gating::Softmax(self.beta))
    }

    pub fn evaluate_gated(&self, scope: EvalScope, gating: Gating) -> CompositeEval {
        let p = self.modulus();
        let total = p as u64 * p as u64;
        let indices = match scope {
            EvalScope::Exhaustive => evaluation_indices(total, None, 0),
            EvalScope::Sample { count, seed } => evaluation_indices(total, Some(count), seed),
        };
        let mut row_errors = Vec::with_capacity(indices.len());
        let mut correct = 0usize;
        let mut pair = [0u32; 2];
        for chunk in indices.chunks(CHUNK) {
            let mut pairs = Vec::with_capacity(chunk.len() * 2);
            let mut labels = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                decode_tuple(idx, p, &mut pair);
                labels.push(self.poly.label(&pair) as usize);
                pairs.extend_from_slice(&pair);
            }
            let z = self.forward_batch(&pairs, gating);
            for (row, &label) in z.rows().into_iter().zip(&labels) {
                let err: Vec<f64> = row
                    .iter()
                    .enumerate()
                    .map(|(q, &v)| {
                        let d = v - if q == label { 1.0 } else { 0.0 };
                        d * d
                    })
                    .collect();
                row_errors.push(pairwise_sum(&err));
                if argmax(row.iter().copied()) == label {
                    correct += 1;
                }
            }
        }
        let n = indices.len() as f64;
        CompositeEval {
            mse: pairwise_sum(&row_errors) / (n * p as f64),
            accuracy: correct as f64 / n,
        }
    }
}
