//! Persisted experiment outputs: one CSV row per run and a JSON summary.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aggregate_runs, paired_t_test_one_sided, Aggregate, RunMetrics};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 12] = [
    "seed",
    "variant",
    "dataset",
    "mem_size",
    "alpha",
    "beta",
    "gamma",
    "final_acc",
    "per_task_acc",
    "pcr",
    "mean_cosine",
    "wall_time_s",
];

pub fn write_runs_csv(path: impl AsRef<Path>, runs: &[RunMetrics]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in runs {
        let per_task: Vec<String> = r.per_task_accuracy.iter().map(|a| a.to_string()).collect();
        w.write_record([
            r.seed.to_string(),
            r.variant.clone(),
            r.dataset.clone(),
            r.mem_size.to_string(),
            r.alpha.to_string(),
            r.beta.to_string(),
            r.gamma.to_string(),
            r.final_accuracy.to_string(),
            per_task.join(";"),
            opt(r.prediction_change_rate),
            opt(r.mean_cosine()),
            r.wall_time_s.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Runs sharing variant, dataset, memory size and edit knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: String,
    pub dataset: String,
    pub mem_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(flatten)]
    pub stats: Aggregate,
}

/// One-sided p-value that group `a` beats group `b`, paired by seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseP {
    pub a: String,
    pub b: String,
    pub dataset: String,
    pub mem_size: usize,
    pub n_pairs: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
    pub pairwise: Vec<PairwiseP>,
}

type GroupKey = (String, String, usize, u64, u64, u64);

fn key(r: &RunMetrics) -> GroupKey {
    (
        r.dataset.clone(),
        r.variant.clone(),
        r.mem_size,
        r.alpha.to_bits(),
        r.beta.to_bits(),
        r.gamma.to_bits(),
    )
}

fn groups(runs: &[RunMetrics]) -> Vec<(GroupKey, Vec<&RunMetrics>)> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut map: BTreeMap<GroupKey, Vec<&RunMetrics>> = BTreeMap::new();
    for r in runs {
        let k = key(r);
        if !map.contains_key(&k) {
            order.push(k.clone());
        }
        map.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let v = map.remove(&k).expect("present");
            (k, v)
        })
        .collect()
}

fn label(k: &GroupKey, runs: &[&RunMetrics]) -> String {
    let r = runs[0];
    format!("{}(alpha={},beta={},gamma={})", k.1, r.alpha, r.beta, r.gamma)
}

/// p-values for every ordered pair of groups on the same dataset and memory
/// size, over the seeds both groups ran.
pub fn pairwise_p_values(runs: &[RunMetrics]) -> Vec<PairwiseP> {
    let gs = groups(runs);
    let mut out = Vec::new();
    for (ka, ra) in &gs {
        for (kb, rb) in &gs {
            if ka == kb || ka.0 != kb.0 || ka.2 != kb.2 {
                continue;
            }
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for x in ra {
                if let Some(y) = rb.iter().find(|y| y.seed == x.seed) {
                    a.push(x.final_accuracy);
                    b.push(y.final_accuracy);
                }
            }
            if let Ok(p) = paired_t_test_one_sided(&a, &b) {
                out.push(PairwiseP {
                    a: label(ka, ra),
                    b: label(kb, rb),
                    dataset: ka.0.clone(),
                    mem_size: ka.2,
                    n_pairs: a.len(),
                    p,
                });
            }
        }
    }
    out
}

pub fn summarize(runs: &[RunMetrics]) -> Result<Summary> {
    let mut out = Vec::new();
    for (_, rs) in groups(runs) {
        let owned: Vec<RunMetrics> = rs.iter().map(|r| (*r).clone()).collect();
        let r = rs[0];
        out.push(GroupSummary {
            variant: r.variant.clone(),
            dataset: r.dataset.clone(),
            mem_size: r.mem_size,
            alpha: r.alpha,
            beta: r.beta,
            gamma: r.gamma,
            stats: aggregate_runs(&owned)?,
        });
    }
    Ok(Summary {
        groups: out,
        pairwise: pairwise_p_values(runs),
    })
}

pub fn write_summary_json(path: impl AsRef<Path>, summary: &Summary) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
