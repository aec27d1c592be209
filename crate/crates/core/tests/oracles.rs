use modpoly_core::trainer::{dataset_loss, generate_dataset, init_network, split, Trainer};
use modpoly_core::{DecayMode, ModPolynomial, Monomial, SumTask, TaskOracle, TrainConfig};
use num_bigint::BigUint;

/// Exact evaluation in arbitrary precision, reduced only at the end.
fn big_eval(p: u32, terms: &[(u32, u32, u32)], n1: u32, n2: u32) -> u32 {
    let mut total = BigUint::from(0u32);
    for &(c, a, b) in terms {
        total += BigUint::from(c) * BigUint::from(n1).pow(a) * BigUint::from(n2).pow(b);
    }
    let r = total % BigUint::from(p);
    r.to_u32_digits().first().copied().unwrap_or(0)
}

#[test]
fn polynomial_eval_matches_arbitrary_precision() {
    let cases: [(u32, &[(u32, u32, u32)]); 4] = [
        (97, &[(2, 4, 1), (1, 2, 2), (3, 1, 3)]),
        (97, &[(7, 4, 4), (2, 3, 2), (4, 2, 5)]),
        (23, &[(1, 5, 3), (4, 2, 1), (5, 2, 3)]),
        (11, &[(10, 9, 7), (3, 1, 12), (6, 20, 1)]),
    ];
    for (p, terms) in cases {
        let poly = ModPolynomial::new(
            p,
            terms.iter().map(|&(coeff, a, b)| Monomial { coeff, a, b }).collect(),
        )
        .unwrap();
        for n1 in 0..p {
            for n2 in 0..p {
                let want = big_eval(p, terms, n1, n2);
                assert_eq!(poly.eval(n1, n2).unwrap(), want, "p={p} ({n1},{n2})");
            }
        }
    }
}

#[test]
fn loss_is_mean_square_against_one_hot() {
    let task = SumTask::new(5, vec![1, 1]).unwrap();
    let ds = generate_dataset(&task).unwrap();
    let net = init_network(5, 2, 8, 2, 3, 1.0).unwrap();
    let mut sq = 0.0;
    for i in 0..ds.len() {
        let logits = net.forward(ds.row(i)).unwrap();
        for (q, z) in logits.iter().enumerate() {
            let target = if q as u32 == ds.labels()[i] { 1.0 } else { 0.0 };
            sq += (z - target) * (z - target);
        }
    }
    let want = sq / (ds.len() as f64 * 5.0);
    assert!((dataset_loss(&net, &ds) - want).abs() < 1e-12);
    assert_eq!(task.arity(), 2);
}

#[test]
fn first_adam_step_matches_hand_computation() {
    let task = SumTask::new(7, vec![1, 1]).unwrap();
    let (train, test) = split(&generate_dataset(&task).unwrap(), 0.5, 1).unwrap();
    let net = init_network(7, 2, 6, 2, 9, 1.0).unwrap();
    for decay in [DecayMode::Decoupled, DecayMode::Coupled] {
        let cfg = TrainConfig {
            lr: 0.01,
            wd: 0.5,
            epochs: 1,
            eval_every: 1,
            decay,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&net);
        let grads = trainer.gradients(&train);
        trainer.train(&train, &test, &cfg, None).unwrap();
        let after = trainer.network().unwrap();
        // With zero moments, the bias-corrected first step is g / (|g| + eps).
        let expected = |w: f64, g: f64| match decay {
            DecayMode::Decoupled => w * (1.0 - cfg.lr * cfg.wd) - cfg.lr * g / (g.abs() + cfg.eps),
            DecayMode::Coupled => {
                let g = g + cfg.wd * w;
                w - cfg.lr * g / (g.abs() + cfg.eps)
            }
        };
        for s in 0..2 {
            for ((&w, &g), &got) in net.blocks()[s].iter().zip(&grads.embed[s]).zip(&after.blocks()[s]) {
                assert!((got - expected(w, g)).abs() < 1e-12, "{decay:?} slot {s}");
            }
        }
        for ((&w, &g), &got) in net.out().iter().zip(&grads.out).zip(after.out()) {
            assert!((got - expected(w, g)).abs() < 1e-12, "{decay:?} output");
        }
    }
}
