//! The named experiments behind each subcommand.

use modpoly_core::analytic::build_addition_solution_with;
use modpoly_core::composite::{build_composite, EvalScope};
use modpoly_core::gf::{FieldContext, ModPolynomial, SumTask, TaskOracle};
use modpoly_core::net::{accuracy, tuple_count, TwoLayerNet};
use modpoly_core::spectral::network_ipr;
use modpoly_core::trainer::{
    generate_dataset, init_network, split, MetricSeries, OptimizerState, TrainConfig, TrainError, Trainer,
};
use modpoly_core::{build_multiplication_solution_with, derive_seed, FrequencyMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    default_hypothesis_rows, ExperimentConfig, HypothesisRow, IprBasis, COMPOSITE_TABLE, DEFAULT_SUITE_WIDTH,
    DEFAULT_SWEEP_SEEDS, DEFAULT_SWEEP_SUBSET, SUITE_LONG_P, SUITE_P,
};
use crate::error::CliError;
use crate::parse::{parse_task, ParsedTask};

/// Environment variable capping the job pool size.
pub const THREADS_ENV: &str = "MODPOLY_THREADS";

/// Runs `f` over `items` on a pool capped by `MODPOLY_THREADS`; results come
/// back in input order.
pub fn run_jobs<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRow {
    pub seed: u64,
    pub accuracy: f64,
    pub avg_ipr: f64,
    pub excluded_degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: u32,
    pub task: String,
    pub width: usize,
    pub rows: Vec<SolveRow>,
}

fn solve_row(
    net: &TwoLayerNet,
    oracle: &dyn TaskOracle,
    ctx: Option<&FieldContext>,
    sample: Option<usize>,
    seed: u64,
) -> Result<SolveRow, CliError> {
    let ipr = network_ipr(net, ctx)?;
    Ok(SolveRow {
        seed,
        accuracy: accuracy(net, oracle, sample, derive_seed(seed, u64::MAX))?,
        avg_ipr: ipr.average,
        excluded_degenerate: ipr.excluded_degenerate,
    })
}

fn require_width(cfg: &ExperimentConfig) -> Result<usize, CliError> {
    cfg.width.ok_or_else(|| CliError::Config("`width` is required".into()))
}

/// Display form of `Σ c_s n_s mod p`, e.g. `n1 + 3n2 mod 7`.
pub fn sum_task_label(coeffs: &[u32], p: u32) -> String {
    let terms: Vec<String> = coeffs
        .iter()
        .enumerate()
        .map(|(s, c)| if *c == 1 { format!("n{}", s + 1) } else { format!("{c}n{}", s + 1) })
        .collect();
    format!("{} mod {p}", terms.join(" + "))
}

pub fn solve_add(cfg: &ExperimentConfig) -> Result<(SolveReport, Vec<TwoLayerNet>), CliError> {
    let p = cfg.require_p()?;
    let coeffs = cfg
        .coeffs
        .clone()
        .ok_or_else(|| CliError::Config("`coeffs` is required".into()))?;
    let width = require_width(cfg)?;
    let task = SumTask::new(p, coeffs.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let seeds = cfg.seeds_or(|| vec![0])?;
    let mode = cfg.frequency_mode;
    let results = run_jobs(&seeds, |&seed| -> Result<_, CliError> {
        let net = build_addition_solution_with(&task, width, seed, mode)?;
        Ok((solve_row(&net, &task, None, cfg.eval_sample, seed)?, net))
    });
    let (rows, nets) = results.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();
    Ok((
        SolveReport {
            p,
            task: sum_task_label(&coeffs, p),
            width,
            rows,
        },
        nets,
    ))
}

fn power_label(var: usize, exponent: u32) -> String {
    match exponent {
        0 => String::new(),
        1 => format!("n{var}"),
        e => format!("n{var}^{e}"),
    }
}

pub fn solve_mul(cfg: &ExperimentConfig) -> Result<(SolveReport, Vec<TwoLayerNet>), CliError> {
    let p = cfg.require_p()?;
    let (a, b) = (cfg.a.unwrap_or(1), cfg.b.unwrap_or(1));
    let width = require_width(cfg)?;
    let ctx = FieldContext::new(p).map_err(|e| CliError::Config(e.to_string()))?;
    let mono = ModPolynomial::new(p, vec![modpoly_core::Monomial { coeff: 1, a, b }])
        .map_err(|e| CliError::Config(e.to_string()))?;
    let seeds = cfg.seeds_or(|| vec![0])?;
    let mode = cfg.frequency_mode;
    let results = run_jobs(&seeds, |&seed| -> Result<_, CliError> {
        let net = build_multiplication_solution_with(&ctx, a, b, width, seed, mode)?;
        Ok((solve_row(&net, &mono, Some(&ctx), cfg.eval_sample, seed)?, net))
    });
    let (rows, nets) = results.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();
    Ok((
        SolveReport {
            p,
            task: format!("{}{} mod {p}", power_label(1, a), power_label(2, b)),
            width,
            rows,
        },
        nets,
    ))
}

/// One composite evaluation, in the reference table's schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeRow {
    pub polynomial: String,
    pub p: u32,
    pub mse: f64,
    pub accuracy: f64,
    pub n1: usize,
    pub n2: usize,
    pub beta: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_mse: Option<f64>,
}

/// Builds and exhaustively evaluates one composite per (task, seed).
/// With no tasks configured the six reference polynomials are used.
pub fn run_composite_table(cfg: &ExperimentConfig) -> Result<Vec<CompositeRow>, CliError> {
    let tasks: Vec<(String, Option<f64>)> = match (&cfg.tasks, &cfg.task) {
        (Some(list), _) => list.iter().map(|t| (t.clone(), None)).collect(),
        (None, Some(t)) => vec![(t.clone(), None)],
        (None, None) => COMPOSITE_TABLE.iter().map(|(t, m)| (t.to_string(), Some(*m))).collect(),
    };
    let seeds = cfg.seeds_or(|| vec![0])?;
    let (n1, n2, beta) = (cfg.expert_width(), cfg.adder_width(), cfg.beta());
    let mut jobs = Vec::new();
    for (row, (text, reference)) in tasks.iter().enumerate() {
        let expr = parse_task(text)?;
        let poly = expr.to_polynomial(cfg.p)?;
        for &seed in &seeds {
            jobs.push((row, expr.to_string(), poly.clone(), *reference, seed));
        }
    }
    run_jobs(&jobs, |(_, text, poly, reference, seed)| -> Result<CompositeRow, CliError> {
        let ctx = FieldContext::new(poly.modulus()).map_err(|e| CliError::Config(e.to_string()))?;
        let net = build_composite(poly, &ctx, n1, n2, beta, *seed)?;
        let eval = net.evaluate(EvalScope::Exhaustive);
        Ok(CompositeRow {
            polynomial: text.clone(),
            p: poly.modulus(),
            mse: eval.mse,
            accuracy: eval.accuracy,
            n1,
            n2,
            beta,
            seed: *seed,
            reference_mse: *reference,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub slots: usize,
    pub width: usize,
    pub best_accuracy: f64,
    pub best_seed: u64,
    /// Seeds actually built; the scan stops at the first perfect seed.
    pub seeds_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinWidth {
    pub slots: usize,
    pub width: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub p: u32,
    pub subset: usize,
    pub rows: Vec<SweepRow>,
    pub min_width: Vec<MinWidth>,
}

pub const SWEEP_CSV_HEADER: &str = "slots,width,best_accuracy,best_seed,seeds_evaluated";

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.slots, r.width, r.best_accuracy, r.best_seed, r.seeds_evaluated
            ));
        }
        s
    }
}

/// Best-of-seeds accuracy of the analytical addition solution for
/// `Σ n_s mod p` at every (slots, width) pair.
///
/// Accuracy is exhaustive when `p^S ≤ subset` and otherwise measured on a
/// seeded random subset of `subset` tuples.
pub fn run_width_sweep(
    p: u32,
    slots: &[usize],
    widths: &[usize],
    seeds: &[u64],
    subset: usize,
    mode: FrequencyMode,
) -> Result<SweepSummary, CliError> {
    if widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("widths must be strictly ascending".into()));
    }
    if seeds.is_empty() {
        return Err(CliError::Config("seeds must not be empty".into()));
    }
    let mut jobs = Vec::new();
    for &s in slots {
        let task = SumTask::new(p, vec![1; s]).map_err(|e| CliError::Config(e.to_string()))?;
        for &w in widths {
            jobs.push((task.clone(), w));
        }
    }
    let rows = run_jobs(&jobs, |(task, width)| -> Result<SweepRow, CliError> {
        let exhaustive = tuple_count(p, task.coeffs().len()).is_some_and(|t| t <= subset as u64);
        let sample = if exhaustive { None } else { Some(subset) };
        let mut best = (f64::NEG_INFINITY, seeds[0]);
        let mut evaluated = 0;
        for &seed in seeds {
            let net = build_addition_solution_with(task, *width, seed, mode)?;
            let acc = accuracy(&net, task, sample, derive_seed(seed, u64::MAX))?;
            evaluated += 1;
            if acc > best.0 {
                best = (acc, seed);
            }
            if acc == 1.0 {
                break;
            }
        }
        Ok(SweepRow {
            slots: task.coeffs().len(),
            width: *width,
            best_accuracy: best.0,
            best_seed: best.1,
            seeds_evaluated: evaluated,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let min_width = slots
        .iter()
        .map(|&s| MinWidth {
            slots: s,
            width: rows
                .iter()
                .find(|r| r.slots == s && r.best_accuracy == 1.0)
                .map(|r| r.width),
        })
        .collect();
    Ok(SweepSummary {
        p,
        subset,
        rows,
        min_width,
    })
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub seed: u64,
    pub metrics: MetricSeries,
    /// Set when the run diverged; metrics then stop at the last evaluation.
    pub diverged: Option<String>,
    pub first_train_epoch_99: Option<usize>,
    pub first_test_epoch_99: Option<usize>,
}

impl TrainOutcome {
    fn last(series: &[f64]) -> f64 {
        series.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_train_acc(&self) -> f64 {
        Self::last(&self.metrics.train_acc)
    }

    pub fn final_test_acc(&self) -> f64 {
        Self::last(&self.metrics.test_acc)
    }

    pub fn final_train_loss(&self) -> f64 {
        Self::last(&self.metrics.train_loss)
    }

    pub fn final_test_loss(&self) -> f64 {
        Self::last(&self.metrics.test_loss)
    }

    pub fn initial_ipr(&self) -> f64 {
        self.metrics.avg_ipr.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_ipr(&self) -> f64 {
        Self::last(&self.metrics.avg_ipr)
    }
}

/// Everything needed to train on one task.
pub struct TrainSpec<'a> {
    pub oracle: &'a dyn TaskOracle,
    pub width: usize,
    pub power: u32,
    pub ipr_ctx: Option<&'a FieldContext>,
}

/// Trains from a fresh initialisation. The split uses `derive_seed(seed, 1)`
/// and the weights `derive_seed(seed, 0)`.
pub fn train_once(spec: &TrainSpec<'_>, cfg: &TrainConfig, seed: u64) -> Result<(TrainOutcome, Trainer), TrainError> {
    let p = spec.oracle.modulus();
    let ds = generate_dataset(spec.oracle)?;
    let (train, test) = split(&ds, cfg.split_frac, derive_seed(seed, 1))?;
    let net = init_network(p, spec.oracle.arity(), spec.width, spec.power, derive_seed(seed, 0), cfg.init_scale)?;
    let mut trainer = Trainer::new(&net);
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let (metrics, diverged) = match trainer.train(&train, &test, &cfg, spec.ipr_ctx) {
        Ok(m) => (m, None),
        Err(TrainError::Diverged { epoch, loss, metrics }) => {
            (*metrics, Some(format!("loss {loss} at epoch {epoch}")))
        }
        Err(e) => return Err(e),
    };
    let first = |series: &[f64]| MetricSeries::first_epoch_reaching(series, &metrics.epochs, 0.99);
    let outcome = TrainOutcome {
        seed,
        first_train_epoch_99: first(&metrics.train_acc),
        first_test_epoch_99: first(&metrics.test_acc),
        metrics,
        diverged,
    };
    Ok((outcome, trainer))
}

/// JSON sidecar stored next to a weight dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub train: TrainConfig,
    pub power: u32,
    pub optimizer: OptimizerState,
}

/// The task behind a `train` config, plus its slot count.
pub enum TrainTask {
    Sum(SumTask),
    Parsed(ParsedTask),
}

impl TrainTask {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        match (&cfg.coeffs, &cfg.task) {
            (Some(c), None) => {
                let p = cfg.require_p()?;
                Ok(TrainTask::Sum(SumTask::new(p, c.clone()).map_err(|e| CliError::Config(e.to_string()))?))
            }
            (None, Some(t)) => Ok(TrainTask::Parsed(parse_task(t)?.to_task(cfg.p)?)),
            _ => Err(CliError::Config("give exactly one of `coeffs` or `task`".into())),
        }
    }

    pub fn oracle(&self) -> &dyn TaskOracle {
        match self {
            TrainTask::Sum(s) => s,
            TrainTask::Parsed(p) => p.oracle(),
        }
    }

    /// True for a single monomial in both variables.
    pub fn is_multiplicative(&self) -> bool {
        matches!(self, TrainTask::Parsed(ParsedTask::Polynomial(poly))
            if poly.terms().len() == 1 && poly.terms()[0].a > 0 && poly.terms()[0].b > 0)
    }

    pub fn ipr_context(&self, basis: IprBasis) -> Result<Option<FieldContext>, CliError> {
        let multiplicative = match basis {
            IprBasis::Auto => self.is_multiplicative(),
            IprBasis::Additive => false,
            IprBasis::Multiplicative => true,
        };
        if !multiplicative {
            return Ok(None);
        }
        if self.oracle().arity() != 2 {
            return Err(CliError::Config("multiplicative IPR needs a two-variable task".into()));
        }
        Ok(Some(
            FieldContext::new(self.oracle().modulus()).map_err(|e| CliError::Config(e.to_string()))?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub task: String,
    pub p: u32,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub expected_learnable: Option<bool>,
    /// `learnable`, `non-learnable`, `ambiguous` or `diverged`.
    pub verdict: String,
    /// `None` when the row carries no expectation or diverged.
    pub matches_expected: Option<bool>,
}

/// Test accuracy at or above this counts as generalising.
pub const LEARNABLE_THRESHOLD: f64 = 0.995;
/// Test accuracy at or below this counts as not generalising.
pub const NON_LEARNABLE_THRESHOLD: f64 = 0.15;

pub fn verdict(test_acc: f64) -> &'static str {
    if test_acc >= LEARNABLE_THRESHOLD {
        "learnable"
    } else if test_acc <= NON_LEARNABLE_THRESHOLD {
        "non-learnable"
    } else {
        "ambiguous"
    }
}

/// Default training budget for the learnability table.
pub fn suite_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 2000,
        eval_every: 50,
        ..TrainConfig::default()
    }
}

/// Trains every row at modulus `p` with a quadratic activation.
pub fn run_hypothesis_suite(
    rows: &[HypothesisRow],
    p: u32,
    width: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<HypothesisResult>, CliError> {
    let mut tasks = Vec::new();
    for row in rows {
        let expr = parse_task(&row.task)?;
        let task = expr.to_task(Some(p))?;
        let mut shown = expr.clone();
        shown.modulus = Some(p);
        tasks.push((row, shown.to_string(), task));
    }
    run_jobs(&tasks, |(row, text, task)| -> Result<HypothesisResult, CliError> {
        let spec = TrainSpec {
            oracle: task.oracle(),
            width,
            power: 2,
            ipr_ctx: None,
        };
        let (outcome, _) = train_once(&spec, cfg, seed)?;
        let (verdict, matches) = match &outcome.diverged {
            Some(_) => ("diverged".to_string(), None),
            None => {
                let v = verdict(outcome.final_test_acc());
                let matches = row.learnable.map(|l| v == if l { "learnable" } else { "non-learnable" });
                (v.to_string(), matches)
            }
        };
        Ok(HypothesisResult {
            task: text.clone(),
            p,
            train_loss: outcome.final_train_loss(),
            test_loss: outcome.final_test_loss(),
            train_acc: outcome.final_train_acc(),
            test_acc: outcome.final_test_acc(),
            expected_learnable: row.learnable,
            verdict,
            matches_expected: matches,
        })
    })
    .into_iter()
    .collect()
}

/// Suite modulus, width, rows and budget after defaults and `--long`.
pub fn hypothesis_settings(
    cfg: &ExperimentConfig,
    long: bool,
) -> Result<(u32, usize, Vec<HypothesisRow>, TrainConfig), CliError> {
    let p = cfg.p.unwrap_or(if long { SUITE_LONG_P } else { SUITE_P });
    let rows = cfg.rows.clone().unwrap_or_else(|| default_hypothesis_rows(long));
    if rows.is_empty() {
        return Err(CliError::Config("`rows` must not be empty".into()));
    }
    let train = cfg.train.clone().unwrap_or_else(suite_train_config);
    Ok((p, cfg.width.unwrap_or(DEFAULT_SUITE_WIDTH), rows, train))
}

/// Sweep parameters after defaults.
pub fn sweep_settings(cfg: &ExperimentConfig) -> Result<(u32, Vec<usize>, Vec<usize>, Vec<u64>, usize), CliError> {
    let p = cfg.require_p()?;
    let slots = cfg.slots.clone().unwrap_or_else(|| vec![2, 3]);
    let widths = cfg
        .widths
        .clone()
        .unwrap_or_else(|| (6..=13).map(|k| 1usize << k).collect());
    let seeds = cfg.seeds_or(|| (0..DEFAULT_SWEEP_SEEDS).collect())?;
    Ok((p, slots, widths, seeds, cfg.subset.unwrap_or(DEFAULT_SWEEP_SUBSET)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jobs_keep_input_order() {
        let items: Vec<u64> = (0..50).collect();
        let out = run_jobs(&items, |&i| {
            std::thread::sleep(std::time::Duration::from_micros((50 - i) * 20));
            i * i
        });
        assert_eq!(out, items.iter().map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(verdict(1.0), "learnable");
        assert_eq!(verdict(0.995), "learnable");
        assert_eq!(verdict(0.7232), "ambiguous");
        assert_eq!(verdict(0.15), "non-learnable");
        assert_eq!(verdict(0.0189), "non-learnable");
    }

    #[test]
    fn sweep_rejects_unsorted_widths() {
        assert!(run_width_sweep(23, &[2], &[128, 64], &[0], 100, FrequencyMode::UniformCoverage).is_err());
    }

    #[test]
    fn sweep_at_width_p_is_imperfect_and_wide_is_perfect() {
        let s = run_width_sweep(23, &[2], &[23, 2048], &[0, 1], 10_000, FrequencyMode::UniformCoverage).unwrap();
        assert!(s.rows[0].best_accuracy < 1.0);
        assert_eq!(s.rows[1].best_accuracy, 1.0);
        assert_eq!(s.min_width, vec![MinWidth { slots: 2, width: Some(2048) }]);
        let csv = s.to_csv();
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn composite_rows_follow_config_tasks() {
        let cfg = ExperimentConfig {
            tasks: Some(vec!["n1n2 + 2n1^2n2 mod 11".into()]),
            expert_width: Some(300),
            adder_width: Some(600),
            seeds: Some(vec![3, 4]),
            ..Default::default()
        };
        let rows = run_composite_table(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].polynomial, "n1n2 + 2n1^2n2 mod 11");
        assert_eq!((rows[0].seed, rows[1].seed), (3, 4));
        assert_eq!(rows[0].reference_mse, None);
    }
}
