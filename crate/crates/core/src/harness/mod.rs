//! Experiment orchestration: seeds, sweeps, tuning and output files.

mod config;

use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::eval::{final_accuracy, prediction_change_rate, summarize, write_runs_csv, write_summary_json, RunMetrics};
use crate::gmed::{EditConfig, Trainer, TrainerOptions, Variant};
use crate::stream::{build_stream, MnistData, StreamConfig, TaskStream};

pub use config::{parse_config, ExperimentConfig, ALPHA_GRID, BETA_GRID, DATA_DIR_ENV};

/// Number of leading tasks used for hyperparameter selection.
pub const TUNE_TASKS: usize = 3;

pub fn stream_config(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> StreamConfig {
    let mut s = StreamConfig::new(cfg.dataset, seed);
    s.mode = variant.stream_mode(cfg.offline_epochs);
    if let Some(n) = cfg.n_tasks {
        s.n_tasks = n;
    }
    s.examples_per_task = cfg.examples_per_task;
    s.batch_size = cfg.batch_size;
    s.fuzzy = cfg.fuzzy;
    s.fuzzy_start_frac = cfg.fuzzy_start_frac;
    s
}

pub fn trainer_options(cfg: &ExperimentConfig, mem_size: usize, edit: &EditConfig) -> TrainerOptions {
    TrainerOptions {
        layer_sizes: cfg.layer_sizes(),
        lr: cfg.lr,
        mem_size,
        replay_size: cfg.batch_size,
        mir_candidates: cfg.mir_candidates,
        augment: cfg.augment,
        edit: edit.clone(),
        cosine_trace: cfg.cosine_trace,
        pcr: cfg.pcr,
        edit_trace: cfg.edit_trace,
        ..TrainerOptions::default()
    }
}

/// A finished run and the learner that produced it.
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub trainer: Trainer,
}

/// Train one learner over `stream` and evaluate it on the stream's tests.
pub fn run_on_stream(
    cfg: &ExperimentConfig,
    stream: &TaskStream,
    variant: Variant,
    mem_size: usize,
    edit: &EditConfig,
    seed: u64,
) -> Result<RunOutcome> {
    let mut trainer = Trainer::new(variant, trainer_options(cfg, mem_size, edit), seed)?;
    let start = Instant::now();
    trainer.train_stream(stream)?;
    let wall = start.elapsed().as_secs_f64();
    let (per_task, mean) = final_accuracy(trainer.params(), &stream.test_sets, stream.n_tasks())?;
    let pcr = if cfg.pcr && variant.edits() && !trainer.memory().is_empty() {
        Some(prediction_change_rate(trainer.params(), trainer.memory())?)
    } else {
        None
    };
    let edits = variant.edits();
    let metrics = RunMetrics {
        seed,
        variant: variant.as_str().into(),
        dataset: cfg.dataset.as_str().into(),
        mem_size,
        alpha: if edits { edit.alpha } else { 0.0 },
        beta: if edits { edit.beta } else { 0.0 },
        gamma: if edits { edit.gamma } else { 1.0 },
        per_task_accuracy: per_task,
        final_accuracy: mean,
        cosine_trace: (cfg.cosine_trace && edits).then(|| trainer.cosine_trace().to_vec()),
        prediction_change_rate: pcr,
        wall_time_s: wall,
    };
    Ok(RunOutcome { metrics, trainer })
}

/// Build the stream for `seed` and run one learner on it.
pub fn run_single(
    cfg: &ExperimentConfig,
    data: &MnistData,
    variant: Variant,
    mem_size: usize,
    edit: &EditConfig,
    seed: u64,
) -> Result<RunOutcome> {
    let stream = build_stream(data, &stream_config(cfg, variant, seed))?;
    run_on_stream(cfg, &stream, variant, mem_size, edit, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub alpha: f64,
    pub beta: f64,
    /// `(alpha, beta, validation accuracy)` per grid point.
    pub scores: Vec<(f64, f64, f64)>,
}

fn sorted(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Pick `(alpha, beta)` by validation accuracy after training on the first
/// three tasks only. Ties go to the smaller alpha, then the smaller beta.
pub fn tune_hyperparams(
    cfg: &ExperimentConfig,
    data: &MnistData,
    variant: Variant,
    grid_alpha: &[f64],
    grid_beta: &[f64],
) -> Result<TuneResult> {
    if grid_alpha.is_empty() || grid_beta.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let seed = cfg.base_seed;
    let full = build_stream(data, &stream_config(cfg, variant, seed))?;
    let stream = full.first_tasks(TUNE_TASKS)?;
    let mut best: Option<(f64, f64, f64)> = None;
    let mut scores = Vec::new();
    for &alpha in &sorted(grid_alpha) {
        for &beta in &sorted(grid_beta) {
            let edit = EditConfig { alpha, beta, ..cfg.edit.clone() };
            let mut trainer = Trainer::new(variant, trainer_options(cfg, cfg.mem_sizes[0], &edit), seed)?;
            // a grid point that blows up the parameters scores NaN and is never picked
            let acc = match trainer.train_stream(&stream) {
                Ok(()) => final_accuracy(trainer.params(), &stream.validation_sets, stream.validation_sets.len())?.1,
                Err(Error::NonFiniteParams) => f64::NAN,
                Err(e) => return Err(e),
            };
            scores.push((alpha, beta, acc));
            if !acc.is_nan() && best.is_none_or(|b| acc > b.2) {
                best = Some((alpha, beta, acc));
            }
        }
    }
    let (alpha, beta, _) = best.ok_or(Error::NonFiniteParams)?;
    Ok(TuneResult { alpha, beta, scores })
}

/// Every (variant, memory size, seed) combination of `cfg`, in that order.
/// Edit knobs are tuned first when `cfg.tune` is set.
pub fn run_with_data(cfg: &ExperimentConfig, data: &MnistData) -> Result<(Vec<RunMetrics>, Vec<(Variant, TuneResult)>)> {
    let mut runs = Vec::new();
    let mut tuned = Vec::new();
    for &variant in &cfg.variants {
        let mut edit = cfg.edit.clone();
        if cfg.tune && variant.edits() {
            let t = tune_hyperparams(cfg, data, variant, &cfg.alpha_grid, &cfg.beta_grid)?;
            edit.alpha = t.alpha;
            edit.beta = t.beta;
            tuned.push((variant, t));
        }
        for &mem_size in &cfg.mem_sizes {
            for seed in cfg.seeds() {
                let out = run_single(cfg, data, variant, mem_size, &edit, seed)?;
                if cfg.edit_trace && variant.edits() {
                    let dir = &cfg.output_dir;
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    let tag = format!("{variant}_m{mem_size}_s{seed}");
                    out.trainer.write_edit_trace(dir.join(format!("edits_{tag}.csv")))?;
                    out.trainer.memory().dump_csv(dir.join(format!("memory_{tag}.csv")))?;
                }
                runs.push(out.metrics);
            }
        }
    }
    Ok((runs, tuned))
}

/// Write `runs.csv`, `summary.json` and, when present, `tune.csv` and
/// `cosine.csv` into `dir`.
pub fn write_outputs(dir: &Path, runs: &[RunMetrics], tuned: &[(Variant, TuneResult)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_runs_csv(dir.join("runs.csv"), runs)?;
    write_summary_json(dir.join("summary.json"), &summarize(runs)?)?;
    if !tuned.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("tune.csv"))?;
        w.write_record(["variant", "alpha", "beta", "val_acc", "selected"])?;
        for (v, t) in tuned {
            for &(a, b, acc) in &t.scores {
                let sel = a == t.alpha && b == t.beta;
                w.write_record([v.as_str().to_string(), a.to_string(), b.to_string(), acc.to_string(), sel.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("tune.csv"), e))?;
    }
    if runs.iter().any(|r| r.cosine_trace.is_some()) {
        let mut w = csv::Writer::from_path(dir.join("cosine.csv"))?;
        w.write_record(["variant", "mem_size", "seed", "step", "cosine"])?;
        for r in runs {
            for (step, c) in r.cosine_trace.iter().flatten() {
                w.write_record([r.variant.clone(), r.mem_size.to_string(), r.seed.to_string(), step.to_string(), c.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("cosine.csv"), e))?;
    }
    Ok(())
}

/// Load the dataset named by `cfg`, run everything and persist the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunMetrics>> {
    let dir = cfg.data_dir.as_ref().ok_or(Error::MissingDatasetPath)?;
    let data = MnistData::load_dir(dir)?;
    let (runs, tuned) = run_with_data(cfg, &data)?;
    write_outputs(&cfg.output_dir, &runs, &tuned)?;
    Ok(runs)
}
