//! Subcommand dispatch: run the experiment and persist its artifacts.

use std::path::PathBuf;

use modpoly_core::net::TwoLayerNet;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::experiments::{
    hypothesis_settings, run_composite_table, run_hypothesis_suite, run_jobs, run_width_sweep, solve_add, solve_mul,
    sum_task_label, sweep_settings, train_once, Checkpoint, TrainSpec, TrainTask,
};
use crate::record::{RunDir, RunRecord};

pub const DEFAULT_OUT: &str = "runs";

fn dump(net: &TwoLayerNet) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    net.write_to(&mut buf)?;
    Ok(buf)
}

fn save_nets(dir: &mut RunDir, nets: &[TwoLayerNet], seeds: &[u64]) -> Result<(), CliError> {
    for (net, seed) in nets.iter().zip(seeds) {
        dir.write(&format!("weights_seed{seed}.bin"), &dump(net)?)?;
    }
    Ok(())
}

/// Runs `cfg` (already carrying its kind) and writes the run directory.
/// A diverged `train` run still writes its metrics and report before the
/// error is returned.
pub fn execute(cfg: &ExperimentConfig, raw_config: &[u8], long: bool) -> Result<RunRecord, CliError> {
    let kind = cfg
        .kind
        .ok_or_else(|| CliError::Config("experiment kind missing".into()))?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut dir = RunDir::create(&out, cfg, raw_config)?;

    let payload: Value = match kind {
        ExperimentKind::SolveAdd | ExperimentKind::SolveMul => {
            let (report, nets) = if kind == ExperimentKind::SolveAdd {
                solve_add(cfg)?
            } else {
                solve_mul(cfg)?
            };
            let mut csv = String::from("seed,accuracy,avg_ipr,excluded_degenerate\n");
            for r in &report.rows {
                csv.push_str(&format!("{},{},{},{}\n", r.seed, r.accuracy, r.avg_ipr, r.excluded_degenerate));
            }
            dir.write("results.csv", csv.as_bytes())?;
            if cfg.save_weights {
                let seeds: Vec<u64> = report.rows.iter().map(|r| r.seed).collect();
                save_nets(&mut dir, &nets, &seeds)?;
            }
            serde_json::to_value(report)?
        }
        ExperimentKind::SolvePoly => {
            let rows = run_composite_table(cfg)?;
            let mut csv = String::from("polynomial,p,mse,accuracy,n1,n2,beta,seed\n");
            for r in &rows {
                csv.push_str(&format!(
                    "\"{}\",{},{},{},{},{},{},{}\n",
                    r.polynomial, r.p, r.mse, r.accuracy, r.n1, r.n2, r.beta, r.seed
                ));
            }
            dir.write("results.csv", csv.as_bytes())?;
            json!({ "rows": rows })
        }
        ExperimentKind::WidthSweep => {
            let (p, slots, widths, seeds, subset) = sweep_settings(cfg)?;
            let summary = run_width_sweep(p, &slots, &widths, &seeds, subset, cfg.frequency_mode)?;
            dir.write("results.csv", summary.to_csv().as_bytes())?;
            serde_json::to_value(summary)?
        }
        ExperimentKind::Train => return execute_train(cfg, dir),
        ExperimentKind::HypothesisSuite => {
            let (p, width, rows, train) = hypothesis_settings(cfg, long)?;
            let seed = cfg.seeds_or(|| vec![0])?[0];
            let results = run_hypothesis_suite(&rows, p, width, &train, seed)?;
            let mut csv = String::from("task,p,train_loss,test_loss,train_acc,test_acc,verdict\n");
            for r in &results {
                csv.push_str(&format!(
                    "\"{}\",{},{},{},{},{},{}\n",
                    r.task, r.p, r.train_loss, r.test_loss, r.train_acc, r.test_acc, r.verdict
                ));
            }
            dir.write("results.csv", csv.as_bytes())?;
            json!({ "p": p, "width": width, "seed": seed, "train": train, "rows": results })
        }
    };
    dir.finish(payload)
}

fn execute_train(cfg: &ExperimentConfig, mut dir: RunDir) -> Result<RunRecord, CliError> {
    let task = TrainTask::from_config(cfg)?;
    let ctx = task.ipr_context(cfg.ipr_basis)?;
    let width = cfg
        .width
        .ok_or_else(|| CliError::Config("`width` is required".into()))?;
    let power = cfg.power.unwrap_or(task.oracle().arity() as u32);
    let train = cfg.train_config();
    train.validate()?;
    let seeds = cfg.seeds_or(|| vec![train.seed])?;
    let spec = TrainSpec {
        oracle: task.oracle(),
        width,
        power,
        ipr_ctx: ctx.as_ref(),
    };
    let runs = run_jobs(&seeds, |&seed| train_once(&spec, &train, seed));
    let mut outcomes = Vec::new();
    let mut diverged = Vec::new();
    for run in runs {
        let (outcome, trainer) = run?;
        let name = if seeds.len() == 1 {
            "metrics.csv".to_string()
        } else {
            format!("metrics_seed{}.csv", outcome.seed)
        };
        dir.write(&name, outcome.metrics.to_csv().as_bytes())?;
        if cfg.save_weights {
            dir.write(&format!("weights_seed{}.bin", outcome.seed), &dump(&trainer.network()?)?)?;
            let checkpoint = Checkpoint {
                train: modpoly_core::TrainConfig {
                    seed: outcome.seed,
                    ..train.clone()
                },
                power,
                optimizer: trainer.optimizer_state(),
            };
            dir.write(
                &format!("weights_seed{}.json", outcome.seed),
                serde_json::to_string(&checkpoint)?.as_bytes(),
            )?;
        }
        if let Some(d) = &outcome.diverged {
            diverged.push(format!("seed {}: {d}", outcome.seed));
        }
        outcomes.push(outcome);
    }
    let summary: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "seed": o.seed,
                "final_train_loss": o.final_train_loss(),
                "final_test_loss": o.final_test_loss(),
                "final_train_acc": o.final_train_acc(),
                "final_test_acc": o.final_test_acc(),
                "initial_avg_ipr": o.initial_ipr(),
                "final_avg_ipr": o.final_ipr(),
                "first_train_epoch_99": o.first_train_epoch_99,
                "first_test_epoch_99": o.first_test_epoch_99,
                "diverged": o.diverged,
            })
        })
        .collect();
    let payload = json!({
        "task": match (&cfg.task, &cfg.coeffs) {
            (Some(t), _) => t.clone(),
            (None, Some(c)) => sum_task_label(c, task.oracle().modulus()),
            (None, None) => String::new(),
        },
        "p": task.oracle().modulus(),
        "width": width,
        "power": power,
        "train": train,
        "runs": summary,
    });
    let record = dir.finish(payload)?;
    if diverged.is_empty() {
        Ok(record)
    } else {
        Err(CliError::Diverged(diverged.join("; ")))
    }
}
