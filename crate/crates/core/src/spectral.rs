//! Fourier concentration of weight rows and columns.
//!
//! The IPR of a vector is `(‖m‖₄ / ‖m‖₂)⁴` over its spectrum magnitudes `m`.
//! By default the spectrum is folded over conjugate pairs, so a real
//! single-tone cosine has all of its energy in one bin and scores exactly 1;
//! on the raw two-sided spectrum the same vector scores 1/2.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, SpectralError};
use crate::gf::FieldContext;
use crate::net::{NetKind, TwoLayerNet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    #[default]
    Folded,
    Full,
}

/// Magnitudes `|F_f|` of the unnormalised DFT `F_f = Σ_i v_i e^{-2πi f i / L}`.
pub fn dft_magnitudes(v: &[f64]) -> Vec<f64> {
    let len = v.len();
    let twiddle: Vec<(f64, f64)> = (0..len)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / len as f64;
            (t.cos(), t.sin())
        })
        .collect();
    (0..len)
        .map(|f| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &x) in v.iter().enumerate() {
                let (c, s) = twiddle[f * i % len];
                re += x * c;
                im -= x * s;
            }
            re.hypot(im)
        })
        .collect()
}

/// Spectrum with conjugate bins `f` and `L-f` merged in quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedSpectrum {
    pub magnitudes: Vec<f64>,
}

impl FoldedSpectrum {
    pub fn bins(&self) -> usize {
        self.magnitudes.len()
    }
}

pub fn folded_spectrum(v: &[f64]) -> Result<FoldedSpectrum, SpectralError> {
    let len = v.len();
    if len < 2 {
        return Err(SpectralError::TooShort(len));
    }
    let full = dft_magnitudes(v);
    let magnitudes = (0..=len / 2)
        .map(|f| {
            if f == 0 || 2 * f == len {
                full[f]
            } else {
                full[f].hypot(full[len - f])
            }
        })
        .collect();
    Ok(FoldedSpectrum { magnitudes })
}

fn ipr_of_magnitudes(m: &[f64]) -> Option<f64> {
    let sq: f64 = m.iter().map(|x| x * x).sum();
    if !(sq > 0.0) || !sq.is_finite() {
        return None;
    }
    let quartic: f64 = m.iter().map(|x| (x * x) * (x * x)).sum();
    Some(quartic / (sq * sq))
}

/// IPR on the folded spectrum. `None` marks a degenerate (all-zero) vector.
pub fn ipr(v: &[f64]) -> Result<Option<f64>, SpectralError> {
    ipr_with(v, SpectrumMode::Folded)
}

pub fn ipr_with(v: &[f64], mode: SpectrumMode) -> Result<Option<f64>, SpectralError> {
    if v.len() < 2 {
        return Err(SpectralError::TooShort(v.len()));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(None);
    }
    Ok(match mode {
        SpectrumMode::Folded => ipr_of_magnitudes(&folded_spectrum(v)?.magnitudes),
        SpectrumMode::Full => ipr_of_magnitudes(&dft_magnitudes(v)),
    })
}

/// Multiplication weights re-indexed through the exponential map, with the
/// zero input/output and (for analytical nets) the reserved neuron removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReshuffledWeights {
    /// Original indices of the kept neurons.
    pub neurons: Vec<usize>,
    /// `K × (p-1)`: `first[j][r] = P^(1)[neurons[j], g^r]`.
    pub first: Array2<f64>,
    pub second: Array2<f64>,
    /// `(p-1) × K`: `out[r][j] = Q[g^r, neurons[j]]`.
    pub out: Array2<f64>,
}

/// Reshuffle a two-slot multiplication-type net. Neuron 0 is dropped only for
/// analytical multiplication nets, where it is the reserved zero handler.
pub fn reshuffle_multiplication_weights(
    net: &TwoLayerNet,
    ctx: &FieldContext,
) -> Result<ReshuffledWeights, NetError> {
    if net.kind() == NetKind::Addition {
        return Err(NetError::WrongKind {
            expected: "multiplication or trained",
            got: net.kind().name(),
        });
    }
    if net.slots() != 2 {
        return Err(NetError::Shape(format!(
            "reshuffling needs a two-slot net, got {} slots",
            net.slots()
        )));
    }
    if net.modulus() != ctx.modulus() {
        return Err(NetError::ModulusMismatch {
            net: net.modulus(),
            ctx: ctx.modulus(),
        });
    }
    let first_neuron = usize::from(net.kind() == NetKind::Multiplication);
    let neurons: Vec<usize> = (first_neuron..net.width()).collect();
    let cycle = ctx.modulus() as usize - 1;
    let exp = ctx.exp_table();
    let gather = |blk: &Array2<f64>| {
        Array2::from_shape_fn((neurons.len(), cycle), |(j, r)| blk[[neurons[j], exp[r] as usize]])
    };
    let first = gather(&net.blocks()[0]);
    let second = gather(&net.blocks()[1]);
    let out = Array2::from_shape_fn((cycle, neurons.len()), |(r, j)| net.out()[[exp[r] as usize, neurons[j]]]);
    Ok(ReshuffledWeights {
        neurons,
        first,
        second,
        out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins on `[0, 1]`; the last bin is closed.
    pub fn unit_interval(values: &[f64], bins: usize) -> Self {
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let idx = ((v * bins as f64).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Self { edges, counts }
    }
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IprReport {
    pub average: f64,
    pub per_neuron: Vec<f64>,
    pub histogram: Histogram,
    pub excluded_degenerate: usize,
}

/// Per-neuron IPR (mean over the `S` embedding rows and the output column)
/// and its network average.
///
/// Multiplication nets must come with a field context and are reshuffled
/// first; a trained net given a context is treated the same way. A neuron with
/// any all-zero constituent vector is counted as degenerate and left out.
pub fn network_ipr(net: &TwoLayerNet, ctx: Option<&FieldContext>) -> Result<IprReport, NetError> {
    network_ipr_with(net, ctx, SpectrumMode::Folded)
}

pub fn network_ipr_with(
    net: &TwoLayerNet,
    ctx: Option<&FieldContext>,
    mode: SpectrumMode,
) -> Result<IprReport, NetError> {
    let neuron_ipr = |vectors: &[Vec<f64>]| -> Result<Option<f64>, NetError> {
        let mut sum = 0.0;
        for v in vectors {
            match ipr_with(v, mode)? {
                Some(x) => sum += x,
                None => return Ok(None),
            }
        }
        Ok(Some(sum / vectors.len() as f64))
    };

    let mut values = Vec::new();
    let mut degenerate = 0;
    let mut push = |v: Option<f64>| match v {
        Some(x) => values.push(x),
        None => degenerate += 1,
    };

    match (net.kind(), ctx) {
        (NetKind::Multiplication, None) => {
            return Err(NetError::WrongKind {
                expected: "field context for a multiplication",
                got: net.kind().name(),
            })
        }
        (NetKind::Multiplication | NetKind::Trained, Some(ctx)) => {
            let r = reshuffle_multiplication_weights(net, ctx)?;
            for j in 0..r.neurons.len() {
                push(neuron_ipr(&[
                    r.first.row(j).to_vec(),
                    r.second.row(j).to_vec(),
                    r.out.column(j).to_vec(),
                ])?);
            }
        }
        (_, _) => {
            for k in 0..net.width() {
                let mut vectors: Vec<Vec<f64>> = net.blocks().iter().map(|b| b.row(k).to_vec()).collect();
                vectors.push(net.out().column(k).to_vec());
                push(neuron_ipr(&vectors)?);
            }
        }
    }

    let average = if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    Ok(IprReport {
        average,
        histogram: Histogram::unit_interval(&values, HISTOGRAM_BINS),
        per_neuron: values,
        excluded_degenerate: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_vector_is_pure_dc() {
        let s = folded_spectrum(&[2.5; 9]).unwrap();
        assert_eq!(s.bins(), 5);
        assert!((s.magnitudes[0] - 22.5).abs() < 1e-12);
        assert!(s.magnitudes[1..].iter().all(|&m| m < 1e-12));
        assert!((ipr(&[2.5; 9]).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_tone_lands_in_one_bin() {
        for len in [10usize, 11] {
            for psi in [0.0, 0.7, -2.9] {
                let v: Vec<f64> = (0..len)
                    .map(|i| (2.0 * PI * 3.0 * i as f64 / len as f64 + psi).cos())
                    .collect();
                let s = folded_spectrum(&v).unwrap();
                for (f, &m) in s.magnitudes.iter().enumerate() {
                    if f == 3 {
                        assert!(m > 1.0);
                    } else {
                        assert!(m < 1e-9, "len {len} bin {f}: {m}");
                    }
                }
                assert!((ipr(&v).unwrap().unwrap() - 1.0).abs() < 1e-9);
                let full = ipr_with(&v, SpectrumMode::Full).unwrap().unwrap();
                assert!((full - 0.5).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn one_hot_gives_closed_form() {
        let mut v = vec![0.0; 11];
        v[4] = 1.0;
        let got = ipr(&v).unwrap().unwrap();
        assert!((got - 21.0 / 121.0).abs() < 1e-12);
        // Full spectrum of a one-hot is flat over all 11 bins.
        assert!((ipr_with(&v, SpectrumMode::Full).unwrap().unwrap() - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        assert_eq!(ipr(&[0.0; 5]).unwrap(), None);
        assert!(matches!(ipr(&[1.0]), Err(SpectralError::TooShort(1))));
        assert!(folded_spectrum(&[]).is_err());
    }

    #[test]
    fn histogram_edges_and_closed_last_bin() {
        let h = Histogram::unit_interval(&[0.0, 0.05, 0.5, 1.0, 0.999], 10);
        assert_eq!(h.edges.len(), 11);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[5], 1);
        assert_eq!(h.counts[9], 2);
    }
}
