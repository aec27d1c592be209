//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 1 5` runs a subset by number.

use std::time::Instant;

use modpoly::config::{default_hypothesis_rows, ExperimentConfig, COMPOSITE_TABLE, SUITE_P};
use modpoly::experiments::{
    run_composite_table, run_hypothesis_suite, run_width_sweep, suite_train_config, train_once, TrainSpec,
    NON_LEARNABLE_THRESHOLD,
};
use modpoly_core::composite::{build_composite, EvalScope};
use modpoly_core::gf::{FieldContext, ModPolynomial, Monomial, SumTask};
use modpoly_core::net::{accuracy, NetKind};
use modpoly_core::spectral::{folded_spectrum, ipr, reshuffle_multiplication_weights};
use modpoly_core::trainer::{generate_dataset, gradient_check, init_network, Dataset, TrainConfig};
use modpoly_core::{
    build_addition_solution, build_multiplication_solution, derive_seed, FrequencyMode,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let ctx = FieldContext::new(97).unwrap();
    let net = build_multiplication_solution(&ctx, 1, 1, 500, 0).unwrap();
    let mono = ModPolynomial::new(97, vec![Monomial { coeff: 1, a: 1, b: 1 }]).unwrap();
    let acc = accuracy(&net, &mono, None, 0).unwrap();
    outcome(
        acc == 1.0,
        format!("p=97 n1*n2, N=500: exhaustive accuracy {acc:.6} over 9409 pairs"),
    )
}

const SWEEP_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

fn criterion_2() -> Outcome {
    let s = run_width_sweep(23, &[2], &powers_of_two(6, 13), &SWEEP_SEEDS, 10_000, FrequencyMode::UniformCoverage)
        .unwrap();
    let table: Vec<String> = s
        .rows
        .iter()
        .map(|r| format!("{}:{:.4}", r.width, r.best_accuracy))
        .collect();
    match s.min_width[0].width {
        Some(w) => outcome(true, format!("p=23 S=2 reaches 100% at N={w} (best of 10 seeds) [{}]", table.join(" "))),
        None => outcome(false, format!("p=23 S=2 never reaches 100% [{}]", table.join(" "))),
    }
}

fn criterion_3() -> Outcome {
    let s2 = run_width_sweep(23, &[2], &powers_of_two(6, 13), &SWEEP_SEEDS, 10_000, FrequencyMode::UniformCoverage)
        .unwrap();
    let s3 = run_width_sweep(23, &[3], &powers_of_two(6, 15), &SWEEP_SEEDS, 10_000, FrequencyMode::UniformCoverage)
        .unwrap();
    let table: Vec<String> = s3
        .rows
        .iter()
        .map(|r| format!("{}:{:.4}", r.width, r.best_accuracy))
        .collect();
    match (s2.min_width[0].width, s3.min_width[0].width) {
        (Some(w2), Some(w3)) => outcome(
            w3 >= 4 * w2,
            format!("min width S=2 {w2}, S=3 {w3}, ratio {:.1} (need >= 4) [S=3 {}]", w3 as f64 / w2 as f64, table.join(" ")),
        ),
        (w2, w3) => outcome(false, format!("missing minimal width: S=2 {w2:?}, S=3 {w3:?} [S=3 {}]", table.join(" "))),
    }
}

fn criterion_4() -> Outcome {
    let rows = run_composite_table(&ExperimentConfig::default()).unwrap();
    let mut pass = rows.len() == COMPOSITE_TABLE.len();
    let mut parts = Vec::new();
    for r in &rows {
        let reference = r.reference_mse.unwrap();
        let ratio = r.mse / reference;
        let ok = r.accuracy == 1.0 && (0.2..=5.0).contains(&ratio);
        pass &= ok;
        parts.push(format!("mod {} acc {:.4} mse {:.6} (x{:.2})", r.p, r.accuracy, r.mse, ratio));
    }
    outcome(pass, format!("N1=500 N2=2000 beta=100: {}", parts.join("; ")))
}

/// Training settings for the multiplication grokking run.
fn grokking_config() -> TrainConfig {
    TrainConfig {
        lr: 0.005,
        wd: 5.0,
        split_frac: 0.5,
        epochs: 1000,
        eval_every: 1,
        ..TrainConfig::default()
    }
}

fn criterion_5() -> Outcome {
    let p = 97;
    let ctx = FieldContext::new(p).unwrap();
    let mono = ModPolynomial::new(p, vec![Monomial { coeff: 1, a: 1, b: 1 }]).unwrap();
    let spec = TrainSpec {
        oracle: &mono,
        width: 500,
        power: 2,
        ipr_ctx: Some(&ctx),
    };
    let cfg = grokking_config();
    let (run, _) = train_once(&spec, &cfg, 0).unwrap();
    let gap = match (run.first_train_epoch_99, run.first_test_epoch_99) {
        (Some(a), Some(b)) => a < b,
        _ => false,
    };
    let pass = run.diverged.is_none()
        && gap
        && run.final_test_acc() == 1.0
        && run.final_ipr() >= 0.9
        && run.initial_ipr() <= 0.3;
    outcome(
        pass,
        format!(
            "p=97 N=500 lr=0.005 wd=5 decoupled, beta2={}: train>=99% at epoch {:?}, test>=99% at epoch {:?}, \
             final test acc {:.4}, IPR {:.3} -> {:.3}",
            cfg.beta2,
            run.first_train_epoch_99,
            run.first_test_epoch_99,
            run.final_test_acc(),
            run.initial_ipr(),
            run.final_ipr()
        ),
    )
}

fn criterion_6() -> Outcome {
    let rows = default_hypothesis_rows(false);
    let results = run_hypothesis_suite(&rows, SUITE_P, 5000, &suite_train_config(), 0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (row, r) in rows.iter().zip(&results) {
        let ok = match row.learnable {
            Some(true) => r.test_acc == 1.0,
            Some(false) => r.train_acc == 1.0 && r.test_acc <= NON_LEARNABLE_THRESHOLD,
            None => true,
        };
        pass &= ok;
        parts.push(format!("{} train {:.4} test {:.4}", r.task, r.train_acc, r.test_acc));
    }
    outcome(pass, parts.join("; "))
}

/// Inverse DFT of a spectrum with unit folded magnitude in every bin and
/// seeded phases, so the folded spectrum is flat over all `⌊L/2⌋+1` bins.
fn flat_folded_vector(len: usize, seed: u64) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut v = vec![1.0 / len as f64; len];
    for f in 1..=len / 2 {
        let nyquist = 2 * f == len;
        let phase = if nyquist {
            0.0
        } else {
            2.0 * PI * (derive_seed(seed, f as u64) % 10_000) as f64 / 10_000.0
        };
        let amp = if nyquist { 1.0 } else { 2.0_f64.sqrt() };
        for (i, x) in v.iter_mut().enumerate() {
            let t = 2.0 * PI * (f * i) as f64 / len as f64;
            *x += amp * (t + phase).cos() / len as f64;
        }
    }
    v
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut vectors = 0usize;
    let mut check = |v: &[f64]| {
        worst = worst.max((ipr(v).unwrap().unwrap() - 1.0).abs());
        vectors += 1;
    };
    for (p, coeffs, width) in [(23u32, vec![1u32, 1], 256usize), (11, vec![1, 2, 3], 300), (97, vec![3, 5], 200)] {
        for seed in 0..3 {
            let net = build_addition_solution(&SumTask::new(p, coeffs.clone()).unwrap(), width, seed).unwrap();
            for k in 0..width {
                for b in net.blocks() {
                    check(&b.row(k).to_vec());
                }
                check(&net.out().column(k).to_vec());
            }
        }
    }
    for (p, a, b) in [(97u32, 1u32, 1u32), (23, 2, 3)] {
        let ctx = FieldContext::new(p).unwrap();
        let net = build_multiplication_solution(&ctx, a, b, 500, 1).unwrap();
        assert_eq!(net.kind(), NetKind::Multiplication);
        let r = reshuffle_multiplication_weights(&net, &ctx).unwrap();
        for j in 0..r.neurons.len() {
            check(&r.first.row(j).to_vec());
            check(&r.second.row(j).to_vec());
            check(&r.out.column(j).to_vec());
        }
    }
    let mut flat_worst: f64 = 0.0;
    for len in [2usize, 11, 22, 96, 97] {
        let v = flat_folded_vector(len, len as u64);
        let bins = folded_spectrum(&v).unwrap().bins();
        flat_worst = flat_worst.max((ipr(&v).unwrap().unwrap() - 1.0 / bins as f64).abs());
    }
    outcome(
        worst <= 1e-9 && flat_worst <= 1e-9,
        format!(
            "{vectors} analytical rows/columns: max |IPR-1| = {worst:.2e}; flat spectra: max |IPR-1/B'| = {flat_worst:.2e}"
        ),
    )
}

fn gradient_batch(p: u32, slots: usize, rows: usize) -> Dataset {
    let ds = generate_dataset(&SumTask::new(p, vec![1; slots]).unwrap()).unwrap();
    if rows >= ds.len() {
        return ds;
    }
    let (sample, _) = modpoly_core::split(&ds, rows as f64 / ds.len() as f64, 17).unwrap();
    sample
}

fn criterion_8() -> Outcome {
    let quad_batch = gradient_batch(11, 2, 121);
    let quart_batch = gradient_batch(11, 4, 400);
    let (mut quad, mut quart) = (0.0f64, 0.0f64);
    for seed in 0..3 {
        let net = init_network(11, 2, 32, 2, seed, 1.0).unwrap();
        quad = quad.max(gradient_check(&net, &quad_batch, 1e-5, 150, seed).unwrap());
        let net = init_network(11, 4, 32, 4, seed, 1.0).unwrap();
        quart = quart.max(gradient_check(&net, &quart_batch, 1e-5, 150, seed).unwrap());
    }
    outcome(
        quad < 1e-5 && quart < 1e-4,
        format!("150 coordinates x 3 seeds: quadratic max rel err {quad:.2e} (< 1e-5), quartic {quart:.2e} (< 1e-4)"),
    )
}

/// Three distinct monomials with coefficients and exponents drawn from `seed`.
fn random_polynomial(p: u32, seed: u64) -> ModPolynomial {
    let mut stream = 0u64;
    let mut draw = |range: u64| {
        stream += 1;
        derive_seed(seed, stream) % range
    };
    let mut terms: Vec<Monomial> = Vec::new();
    while terms.len() < 3 {
        let m = Monomial {
            coeff: 1 + draw(p as u64 - 1) as u32,
            a: 1 + draw(6) as u32,
            b: 1 + draw(6) as u32,
        };
        if !terms.iter().any(|t| t.a == m.a && t.b == m.b) {
            terms.push(m);
        }
    }
    ModPolynomial::new(p, terms).unwrap()
}

fn criterion_9() -> Outcome {
    let p = 11;
    let ctx = FieldContext::new(p).unwrap();
    let mut failures = Vec::new();
    let mut worst: f64 = 1.0;
    for i in 0..20 {
        let poly = random_polynomial(p, 1000 + i);
        let net = build_composite(&poly, &ctx, 500, 2000, 100.0, i).unwrap();
        let eval = net.evaluate(EvalScope::Exhaustive);
        worst = worst.min(eval.accuracy);
        if eval.accuracy != 1.0 {
            failures.push(format!("{:?}: {:.4}", poly.terms(), eval.accuracy));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "20 random 3-term polynomials mod 11, N1=500 N2=2000: min accuracy {worst:.4}{}",
            if failures.is_empty() { String::new() } else { format!("; failing {}", failures.join(", ")) }
        ),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "analytical multiplication exactness", criterion_1),
        (2, "analytical addition exactness", criterion_2),
        (3, "width scaling S=3 vs S=2", criterion_3),
        (4, "composite polynomial table", criterion_4),
        (5, "grokking reproduction", criterion_5),
        (6, "learnability suite", criterion_6),
        (7, "IPR calibration", criterion_7),
        (8, "gradient oracle", criterion_8),
        (9, "random composite equivalence", criterion_9),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
}
