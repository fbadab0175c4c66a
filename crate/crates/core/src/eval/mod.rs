//! Run metrics, aggregation and significance tests.

mod report;
mod stats;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::ReplayMemory;
use crate::nn::{argmax, Mlp, Scalar};
use crate::stream::LabeledSet;

pub use report::{pairwise_p_values, summarize, write_runs_csv, write_summary_json, GroupSummary, PairwiseP, Summary};
pub use stats::{incomplete_beta, ln_gamma, paired_t_test_one_sided, t_sf};

/// Everything recorded about one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub variant: String,
    pub dataset: String,
    pub mem_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub per_task_accuracy: Vec<f64>,
    pub final_accuracy: f64,
    pub cosine_trace: Option<Vec<(u64, f64)>>,
    pub prediction_change_rate: Option<f64>,
    pub wall_time_s: f64,
}

impl RunMetrics {
    /// Mean of the cosine trace, if one was recorded and is non-empty.
    pub fn mean_cosine(&self) -> Option<f64> {
        let trace = self.cosine_trace.as_ref().filter(|t| !t.is_empty())?;
        Some(trace.iter().map(|c| c.1).sum::<f64>() / trace.len() as f64)
    }
}

/// Accuracy on each of the first `n_tasks` test sets and their plain mean.
pub fn final_accuracy<F: Scalar>(theta: &Mlp<F>, test_sets: &[LabeledSet], n_tasks: usize) -> Result<(Vec<f64>, f64)>
where
    f32: Into<F>,
{
    let mut per_task = Vec::with_capacity(n_tasks);
    for t in 0..n_tasks {
        let set = test_sets.get(t).filter(|s| !s.is_empty()).ok_or(Error::MissingTestSet(t))?;
        let x = set.x.mapv(|v| v.into());
        per_task.push(theta.evaluate_accuracy(x.view(), &set.y)?);
    }
    if per_task.is_empty() {
        return Err(Error::EmptySet);
    }
    let mean = per_task.iter().sum::<f64>() / per_task.len() as f64;
    Ok((per_task, mean))
}

/// `a . b / (|a| |b|)`, or 0 when either vector is zero.
pub fn cosine_similarity<F: Scalar>(a: &[F], b: &[F]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of memory slots whose predicted class differs between the
/// stored (possibly edited) example and the original.
pub fn prediction_change_rate(theta: &Mlp<f32>, mem: &ReplayMemory) -> Result<f64> {
    if !mem.has_shadows() {
        return Err(Error::ShadowsDisabled);
    }
    if mem.is_empty() {
        return Err(Error::EmptyMemory);
    }
    let dim = mem.slots()[0].x.len();
    let mut now = Vec::with_capacity(mem.len() * dim);
    let mut orig = Vec::with_capacity(mem.len() * dim);
    for s in mem.slots() {
        now.extend_from_slice(&s.x);
        orig.extend_from_slice(s.original_x.as_ref().ok_or(Error::ShadowsDisabled)?);
    }
    let now = ndarray::Array2::from_shape_vec((mem.len(), dim), now).expect("rows match");
    let orig = ndarray::Array2::from_shape_vec((mem.len(), dim), orig).expect("rows match");
    let a = theta.logits(now.view())?;
    let b = theta.logits(orig.view())?;
    let changed = a
        .axis_iter(Axis(0))
        .zip(b.axis_iter(Axis(0)))
        .filter(|(ra, rb)| argmax(ra.iter().copied()) != argmax(rb.iter().copied()))
        .count();
    Ok(changed as f64 / mem.len() as f64)
}

/// Mean and sample standard deviation (`n - 1`); a single value has std 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Per-field mean and sample std over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_runs: usize,
    pub final_accuracy: (f64, f64),
    pub per_task_accuracy: Vec<(f64, f64)>,
    pub prediction_change_rate: Option<(f64, f64)>,
    pub mean_cosine: Option<(f64, f64)>,
    pub wall_time_s: (f64, f64),
}

pub fn aggregate_runs(runs: &[RunMetrics]) -> Result<Aggregate> {
    if runs.is_empty() {
        return Err(Error::EmptySet);
    }
    let col = |f: &dyn Fn(&RunMetrics) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    let opt = |f: &dyn Fn(&RunMetrics) -> Option<f64>| {
        let v: Vec<f64> = runs.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean_std(&v))
    };
    let n_tasks = runs.iter().map(|r| r.per_task_accuracy.len()).min().unwrap_or(0);
    Ok(Aggregate {
        n_runs: runs.len(),
        final_accuracy: col(&|r| r.final_accuracy),
        per_task_accuracy: (0..n_tasks).map(|t| col(&|r| r.per_task_accuracy[t])).collect(),
        prediction_change_rate: opt(&|r| r.prediction_change_rate),
        mean_cosine: opt(&|r| r.mean_cosine()),
        wall_time_s: col(&|r| r.wall_time_s),
    })
}

#[cfg(test)]
pub(crate) fn sample_run(seed: u64, variant: &str, acc: f64) -> RunMetrics {
    RunMetrics {
        seed,
        variant: variant.into(),
        dataset: "split_mnist".into(),
        mem_size: 500,
        alpha: 0.0,
        beta: 0.0,
        gamma: 1.0,
        per_task_accuracy: vec![acc, acc],
        final_accuracy: acc,
        cosine_trace: None,
        prediction_change_rate: None,
        wall_time_s: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(x: Array2<f32>, y: Vec<usize>) -> LabeledSet {
        LabeledSet { x, y }
    }

    // predicts class 0 when the first feature is positive, else class 1
    fn sign_net() -> Mlp<f32> {
        Mlp::from_layers(vec![Dense {
            weight: array![[1.0f32, 0.0], [-1.0, 0.0]],
            bias: Array1::zeros(2),
        }])
        .unwrap()
    }

    #[test]
    fn final_accuracy_basics() {
        let net = sign_net();
        let sets = vec![
            set(array![[1.0, 0.0], [2.0, 1.0]], vec![0, 0]),
            set(array![[-1.0, 0.0], [1.0, 1.0]], vec![1, 1]),
        ];
        let (per, mean) = final_accuracy(&net, &sets, 2).unwrap();
        assert_eq!(per, vec![1.0, 0.5]);
        assert_eq!(mean, 0.75);
        let swapped = vec![sets[1].clone(), sets[0].clone()];
        assert_eq!(final_accuracy(&net, &swapped, 2).unwrap().1, mean);
        assert!(matches!(final_accuracy(&net, &sets, 3), Err(Error::MissingTestSet(2))));
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0f64, 1.0], &[2.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[0.0f64, 0.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0f64], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50), lambda in 0.01f64..100.0) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            let la: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            let c1 = cosine_similarity(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c1));
            prop_assert!((c1 - cosine_similarity(&la, &b).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_change_rate_cases() {
        let net = sign_net();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut mem = ReplayMemory::with_shadows(2);
        mem.offer(&[1.0, 0.0], 0, &mut r);
        mem.offer(&[-1.0, 0.0], 1, &mut r);
        assert_eq!(prediction_change_rate(&net, &mem).unwrap(), 0.0);
        let refs = mem.sample(2, &mut r).unwrap();
        for s in refs {
            let flipped: Vec<f32> = mem.get(s).unwrap().x.iter().map(|v| -v).collect();
            mem.writeback(s, &flipped).unwrap();
        }
        assert_eq!(prediction_change_rate(&net, &mem).unwrap(), 1.0);
        assert!(matches!(prediction_change_rate(&net, &ReplayMemory::new(2)), Err(Error::ShadowsDisabled)));
    }

    #[test]
    fn aggregation() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[80.0, 82.0]);
        assert_eq!(m, 81.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        let runs = vec![sample_run(0, "er", 0.80), sample_run(1, "er", 0.82)];
        let agg = aggregate_runs(&runs).unwrap();
        assert_eq!(agg.n_runs, 2);
        assert!((agg.final_accuracy.0 - 0.81).abs() < 1e-12);
        assert_eq!(agg.per_task_accuracy.len(), 2);
        assert!(agg.prediction_change_rate.is_none());
        assert!(aggregate_runs(&[]).is_err());
    }
}
