use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use gmed_core::eval::aggregate_runs;
use gmed_core::harness::{parse_config, run_experiment, DATA_DIR_ENV};

/// Online continual learning with memory editing on MNIST streams.
#[derive(Debug, Parser)]
#[command(name = "gmed", version)]
struct Args {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// split_mnist, permuted_mnist or rotated_mnist.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding the four MNIST IDX files.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// One variant or a comma list.
    #[arg(long)]
    variant: Option<String>,
    /// One size or a comma list (memory sweep).
    #[arg(long)]
    mem_size: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    edit_steps: Option<usize>,
    /// gmed, random, adversarial, none or optimal.
    #[arg(long)]
    edit_kind: Option<String>,
    /// Replay edited examples without storing them.
    #[arg(long)]
    no_writeback: bool,
    #[arg(long)]
    n_extra_edit: Option<usize>,
    #[arg(long)]
    fuzzy: bool,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Pick alpha and beta on the first three tasks before the runs.
    #[arg(long)]
    tune: bool,
    #[arg(long)]
    cosine_trace: bool,
    /// Report the prediction change rate of edited memory.
    #[arg(long)]
    pcr: bool,
    /// Write per-edit traces and memory snapshots.
    #[arg(long)]
    edit_trace: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Args {
    fn overrides(&self) -> anyhow::Result<Vec<(String, String)>> {
        let mut o: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.into(), v));
            }
        };
        push("dataset", self.dataset.clone());
        push("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()));
        push("variant", self.variant.clone());
        push("mem_size", self.mem_size.clone());
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("gamma", self.gamma.map(|v| v.to_string()));
        push("edit_steps", self.edit_steps.map(|v| v.to_string()));
        push("edit_kind", self.edit_kind.clone());
        push("n_extra_edit", self.n_extra_edit.map(|v| v.to_string()));
        push("seeds", self.seeds.map(|v| v.to_string()));
        push("base_seed", self.base_seed.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        let flags = [
            ("writeback", self.no_writeback, "false"),
            ("fuzzy", self.fuzzy, "true"),
            ("tune", self.tune, "true"),
            ("cosine_trace", self.cosine_trace, "true"),
            ("pcr", self.pcr, "true"),
            ("edit_trace", self.edit_trace, "true"),
        ];
        for (k, on, v) in flags {
            if on {
                o.push((k.into(), v.into()));
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            o.push((k.trim().into(), v.trim().into()));
        }
        Ok(o)
    }
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let overrides = args.overrides()?;
    // clap already folded the environment variable into --data-dir
    let cfg = parse_config(args.config.as_deref(), &overrides, None)?;
    let runs = run_experiment(&cfg)?;

    let mut report = String::new();
    let mut groups: Vec<(String, usize)> = Vec::new();
    for r in &runs {
        if !groups.contains(&(r.variant.clone(), r.mem_size)) {
            groups.push((r.variant.clone(), r.mem_size));
        }
    }
    for (variant, mem) in groups {
        let rs: Vec<_> = runs.iter().filter(|r| r.variant == variant && r.mem_size == mem).cloned().collect();
        let agg = aggregate_runs(&rs)?;
        writeln!(
            report,
            "{variant:<12} mem={mem:<5} acc={:.2} ± {:.2} ({} runs, {:.1}s/run)",
            100.0 * agg.final_accuracy.0,
            100.0 * agg.final_accuracy.1,
            agg.n_runs,
            agg.wall_time_s.0
        )?;
    }
    writeln!(report, "results written to {}", cfg.output_dir.display())?;
    // a closed pipe (e.g. `| head`) is not an error
    match std::io::stdout().lock().write_all(report.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
