//! Closed-form weights for S-term modular addition and two-variable modular
//! multiplication.
//!
//! Addition: neuron `k` carries frequency `f_k` and phases `ψ_k^(s)`;
//!
//! ```text
//! U^(s)[k, i] = A cos(2π f_k c_s i / p + ψ_k^(s))
//! W[q, k]     = A cos(-2π f_k q / p - Σ_s ψ_k^(s))
//! A           = (2^S / (N · S!))^(1/(S+1))
//! ```
//!
//! Expanding `W φ(Σ_s U^(s) e_{n_s})` with `φ(x) = x^S`, the only term free of
//! random phases is `(1/N) Σ_k cos(2π f_k (Σ c_s n_s - q) / p)`, a modular
//! Kronecker delta once the frequencies cover `Z_p` evenly. Everything else
//! averages out as `O(1/√N)`.
//!
//! Multiplication works the same way on discrete logarithms (cycle length
//! `p-1`), with neuron 0 and row/column 0 reserved for inputs containing zero.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;
use crate::gf::{FieldContext, SumTask};
use crate::net::{NetKind, TwoLayerNet};

/// How hidden neurons are assigned frequencies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyMode {
    /// `f_k = k mod m`, then a seeded shuffle of the neurons. Every class
    /// appears `⌊N/m⌋` or `⌈N/m⌉` times.
    #[default]
    UniformCoverage,
    /// `f_k` drawn i.i.d. uniform on `Z_m`.
    Random,
}

/// Frequencies and phases of every hidden neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronAssignment {
    pub freq: Vec<u32>,
    /// One sequence of `N` phases per input slot, each in `(-π, π]`.
    pub phases: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Uniform on `(-π, π]`.
fn sample_phase(rng: &mut ChaCha8Rng) -> f64 {
    PI - 2.0 * PI * rng.random::<f64>()
}

impl NeuronAssignment {
    /// `count` neurons with frequencies in `Z_modulus` and `slots` phase
    /// sequences.
    pub fn sample(count: usize, modulus: u32, slots: usize, seed: u64, mode: FrequencyMode) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freq = match mode {
            FrequencyMode::UniformCoverage => {
                let mut f: Vec<u32> = (0..count).map(|k| (k % modulus as usize) as u32).collect();
                f.shuffle(&mut rng);
                f
            }
            FrequencyMode::Random => (0..count).map(|_| rng.random_range(0..modulus)).collect(),
        };
        let phases = (0..slots)
            .map(|_| (0..count).map(|_| sample_phase(&mut rng)).collect())
            .collect();
        Self { freq, phases, seed }
    }
}

/// Per-weight normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitude(pub f64);

impl Amplitude {
    /// `(2^S / (N · S!))^(1/(S+1))`.
    pub fn addition(slots: usize, width: usize) -> Self {
        let s = slots as f64;
        let log_fact = if slots <= 12 {
            ((1..=slots as u64).product::<u64>() as f64).ln()
        } else {
            (1..=slots).map(|k| (k as f64).ln()).sum()
        };
        let log_a = (s * 2f64.ln() - (width as f64).ln() - log_fact) / (s + 1.0);
        Amplitude(log_a.exp())
    }

    /// `(2 / (N-1))^(1/3)`; the product of three weights gives `2/(N-1)`.
    pub fn multiplication(width: usize) -> Self {
        Amplitude((2.0 / (width as f64 - 1.0)).cbrt())
    }
}

pub fn build_addition_solution(task: &SumTask, width: usize, seed: u64) -> Result<TwoLayerNet, NetError> {
    build_addition_solution_with(task, width, seed, FrequencyMode::UniformCoverage)
}

pub fn build_addition_solution_with(
    task: &SumTask,
    width: usize,
    seed: u64,
    mode: FrequencyMode,
) -> Result<TwoLayerNet, NetError> {
    let p = task.modulus();
    if width < p as usize {
        return Err(NetError::WidthTooSmall { width, p });
    }
    let coeffs = task.coeffs();
    let slots = coeffs.len();
    let assign = NeuronAssignment::sample(width, p, slots, seed, mode);
    let amp = Amplitude::addition(slots, width).0;
    let m = p as u64;
    let angle = |x: u64| 2.0 * PI * (x % m) as f64 / p as f64;

    let blocks = coeffs
        .iter()
        .zip(&assign.phases)
        .map(|(&c, phases)| {
            Array2::from_shape_fn((width, p as usize), |(k, i)| {
                let f = assign.freq[k] as u64;
                amp * (angle(f * c as u64 % m * i as u64) + phases[k]).cos()
            })
        })
        .collect();
    let phase_sum: Vec<f64> = (0..width)
        .map(|k| assign.phases.iter().map(|ph| ph[k]).sum())
        .collect();
    let out = Array2::from_shape_fn((p as usize, width), |(q, k)| {
        let f = assign.freq[k] as u64;
        amp * (-angle(f * q as u64) - phase_sum[k]).cos()
    });
    TwoLayerNet::new(NetKind::Addition, p, blocks, out)
}

/// The assignment used by [`build_multiplication_solution_with`] for the
/// given arguments: neuron 0 is reserved (its frequency entry is 0 and
/// unused), neurons `1..N` get frequencies in `Z_{p-1}`.
pub fn multiplication_assignment(p: u32, width: usize, seed: u64, mode: FrequencyMode) -> NeuronAssignment {
    let tail = NeuronAssignment::sample(width - 1, p - 1, 2, seed, mode);
    let prepend = |v: &[f64]| std::iter::once(0.0).chain(v.iter().copied()).collect::<Vec<_>>();
    NeuronAssignment {
        freq: std::iter::once(0).chain(tail.freq.iter().copied()).collect(),
        phases: tail.phases.iter().map(|ph| prepend(ph)).collect(),
        seed,
    }
}

pub fn build_multiplication_solution(
    ctx: &FieldContext,
    a: u32,
    b: u32,
    width: usize,
    seed: u64,
) -> Result<TwoLayerNet, NetError> {
    build_multiplication_solution_with(ctx, a, b, width, seed, FrequencyMode::UniformCoverage)
}

pub fn build_multiplication_solution_with(
    ctx: &FieldContext,
    a: u32,
    b: u32,
    width: usize,
    seed: u64,
    mode: FrequencyMode,
) -> Result<TwoLayerNet, NetError> {
    if a == 0 {
        return Err(NetError::ZeroExponent { name: "a" });
    }
    if b == 0 {
        return Err(NetError::ZeroExponent { name: "b" });
    }
    let p = ctx.modulus();
    if width < p as usize {
        return Err(NetError::WidthTooSmall { width, p });
    }
    let assign = multiplication_assignment(p, width, seed, mode);
    let amp = Amplitude::multiplication(width).0;
    let cycle = (p - 1) as u64;
    let angle = |x: u64| 2.0 * PI * (x % cycle) as f64 / cycle as f64;
    let log = |n: usize| ctx.log(n as u32).expect("nonzero residue") as u64;

    let embed = |exponent: u32, phases: &[f64]| {
        let e = exponent as u64 % cycle;
        Array2::from_shape_fn((width, p as usize), |(k, i)| match (k, i) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.0,
            _ => {
                let f = assign.freq[k] as u64;
                amp * (angle(f * e % cycle * log(i)) + phases[k]).cos()
            }
        })
    };
    let p1 = embed(a, &assign.phases[0]);
    let p2 = embed(b, &assign.phases[1]);
    let out = Array2::from_shape_fn((p as usize, width), |(q, k)| match (q, k) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => {
            let f = assign.freq[k] as u64;
            amp * (-angle(f * log(q)) - assign.phases[0][k] - assign.phases[1][k]).cos()
        }
    });
    TwoLayerNet::new(NetKind::Multiplication, p, vec![p1, p2], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::{ModPolynomial, Monomial, TaskOracle};
    use crate::net::{accuracy, argmax};

    #[test]
    fn amplitudes() {
        let a = Amplitude::addition(2, 100).0;
        assert!((a.powi(3) - 4.0 / 200.0).abs() < 1e-15);
        let a = Amplitude::addition(4, 5000).0;
        assert!((a.powi(5) - 16.0 / (5000.0 * 24.0)).abs() < 1e-15);
        let a13 = Amplitude::addition(13, 7).0;
        let fact13 = 6_227_020_800f64;
        assert!((a13.powi(14) / (8192.0 / (7.0 * fact13)) - 1.0).abs() < 1e-12);
        let m = Amplitude::multiplication(500).0;
        assert!((m.powi(3) - 2.0 / 499.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_coverage_balances_classes() {
        let asg = NeuronAssignment::sample(100, 23, 2, 9, FrequencyMode::UniformCoverage);
        let mut counts = [0usize; 23];
        asg.freq.iter().for_each(|&f| counts[f as usize] += 1);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert!(asg.phases.iter().flatten().all(|&ph| ph > -PI && ph <= PI));
        assert_eq!(asg, NeuronAssignment::sample(100, 23, 2, 9, FrequencyMode::UniformCoverage));
        assert_ne!(asg, NeuronAssignment::sample(100, 23, 2, 10, FrequencyMode::UniformCoverage));
    }

    #[test]
    fn small_addition_net_predicts_sum() {
        let task = SumTask::new(5, vec![1, 1]).unwrap();
        let net = build_addition_solution(&task, 500, 1).unwrap();
        assert_eq!(argmax(net.forward(&[3, 4]).unwrap()), 2);
        assert_eq!(accuracy(&net, &task, None, 0).unwrap(), 1.0);
    }

    #[test]
    fn addition_width_below_modulus_rejected() {
        let task = SumTask::new(23, vec![1, 1]).unwrap();
        assert!(matches!(
            build_addition_solution(&task, 22, 0),
            Err(NetError::WidthTooSmall { width: 22, p: 23 })
        ));
    }

    #[test]
    fn addition_is_deterministic_given_seed() {
        let task = SumTask::new(7, vec![2, 3]).unwrap();
        let a = build_addition_solution(&task, 50, 3).unwrap();
        let b = build_addition_solution(&task, 50, 3).unwrap();
        assert_eq!(a.blocks(), b.blocks());
        assert_eq!(a.out(), b.out());
    }

    #[test]
    fn multiplication_zero_structure() {
        let ctx = FieldContext::new(13).unwrap();
        let net = build_multiplication_solution(&ctx, 1, 1, 200, 4).unwrap();
        let (p1, p2, q) = (&net.blocks()[0], &net.blocks()[1], net.out());
        assert_eq!(p1[[0, 0]], 1.0);
        assert_eq!(p2[[0, 0]], 1.0);
        assert_eq!(q[[0, 0]], 1.0);
        for k in 1..200 {
            assert_eq!(p1[[k, 0]], 0.0);
            assert_eq!(p2[[k, 0]], 0.0);
            assert_eq!(q[[0, k]], 0.0);
        }
        for i in 1..13 {
            assert_eq!(p1[[0, i]], 0.0);
            assert_eq!(p2[[0, i]], 0.0);
            assert_eq!(q[[i, 0]], 0.0);
        }
        // One zero input: neuron 0 sees 1, so logit 0 is exactly 1 and maximal.
        // Both zero: it sees 1 + 1, so logit 0 is 4.
        for n in 0..13 {
            let expected = if n == 0 { 4.0 } else { 1.0 };
            for (n1, n2) in [(0, n), (n, 0)] {
                let logits = net.forward(&[n1, n2]).unwrap();
                assert_eq!(logits[0], expected);
                assert!(logits[1..].iter().all(|&l| l < 1.0));
            }
        }
    }

    #[test]
    fn multiplication_rejects_bad_arguments() {
        let ctx = FieldContext::new(7).unwrap();
        assert!(matches!(
            build_multiplication_solution(&ctx, 0, 1, 50, 0),
            Err(NetError::ZeroExponent { name: "a" })
        ));
        assert!(build_multiplication_solution(&ctx, 1, 0, 50, 0).is_err());
        assert!(build_multiplication_solution(&ctx, 1, 1, 6, 0).is_err());
    }

    #[test]
    fn monomial_expert_matches_oracle_exhaustively() {
        let ctx = FieldContext::new(7).unwrap();
        let net = build_multiplication_solution(&ctx, 2, 3, 601, 8).unwrap();
        let mono = ModPolynomial::new(7, vec![Monomial { coeff: 1, a: 2, b: 3 }]).unwrap();
        for n1 in 0..7 {
            for n2 in 0..7 {
                let pred = argmax(net.forward(&[n1, n2]).unwrap());
                assert_eq!(pred as u32, mono.label(&[n1, n2]), "({n1},{n2})");
            }
        }
    }

    #[test]
    fn exponent_multiple_of_cycle_still_correct() {
        // n^(p-1) = 1 for n != 0, and 0 for n = 0; the reserved neuron covers zero.
        let ctx = FieldContext::new(7).unwrap();
        let net = build_multiplication_solution(&ctx, 6, 1, 301, 2).unwrap();
        let mono = ModPolynomial::new(7, vec![Monomial { coeff: 1, a: 6, b: 1 }]).unwrap();
        assert_eq!(accuracy(&net, &mono, None, 0).unwrap(), 1.0);
    }
}
