//! Non-stationary labelled streams built from MNIST.
//!
//! A [`TaskStream`] holds its examples in task order together with a visiting
//! order (`order`). Sequential streams visit positions once; iid modes shuffle
//! the order, and offline mode repeats it for several epochs. The latent task
//! of every example rides along for evaluation only.

mod fuzzy;
pub mod idx;
pub mod transform;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, RngStream, StreamRng};

pub use fuzzy::fuzzify;
pub use idx::{load_idx, MnistData};
use transform::{Permutation, SIDE};

pub const INPUT_DIM: usize = SIDE * SIDE;
pub const NUM_CLASSES: usize = 10;

/// One labelled image, features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f32>,
    pub label: usize,
    /// Index in the file the example was read from.
    pub source_index: usize,
}

/// Examples stacked into a matrix, for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Array2<f32>,
    pub y: Vec<usize>,
}

impl LabeledSet {
    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a LabeledExample>) -> Self {
        let mut flat = Vec::new();
        let mut y = Vec::new();
        let mut dim = 0;
        for ex in examples {
            dim = ex.features.len();
            flat.extend_from_slice(&ex.features);
            y.push(ex.label);
        }
        let rows = y.len();
        let x = Array2::from_shape_vec((rows, if rows == 0 { 0 } else { dim }), flat)
            .expect("rows have equal length");
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    SplitMnist,
    PermutedMnist,
    RotatedMnist,
}

impl DatasetKind {
    pub fn default_tasks(self) -> usize {
        match self {
            DatasetKind::SplitMnist => 5,
            DatasetKind::PermutedMnist => 10,
            DatasetKind::RotatedMnist => 20,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::SplitMnist => "split_mnist",
            DatasetKind::PermutedMnist => "permuted_mnist",
            DatasetKind::RotatedMnist => "rotated_mnist",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "split_mnist" | "split" => Ok(DatasetKind::SplitMnist),
            "permuted_mnist" | "permuted" => Ok(DatasetKind::PermutedMnist),
            "rotated_mnist" | "rotated" => Ok(DatasetKind::RotatedMnist),
            other => Err(format!("unknown dataset {other:?}")),
        }
    }
}

/// How stream positions are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    /// Tasks in sequence, single pass.
    Tasks,
    /// All examples shuffled together, single pass.
    IidOnline,
    /// Shuffled, repeated for `epochs` passes.
    IidOffline { epochs: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub dataset: DatasetKind,
    pub mode: StreamMode,
    pub n_tasks: usize,
    pub examples_per_task: usize,
    pub batch_size: usize,
    pub fuzzy: bool,
    pub fuzzy_start_frac: f64,
    pub seed: u64,
    /// Fraction of each of the first three tasks' training pool held out.
    pub validation_frac: f64,
    /// Cap on test examples per task for rotated streams.
    pub rotated_test_per_task: usize,
}

impl StreamConfig {
    pub fn new(dataset: DatasetKind, seed: u64) -> Self {
        Self {
            dataset,
            mode: StreamMode::Tasks,
            n_tasks: dataset.default_tasks(),
            examples_per_task: 1000,
            batch_size: 10,
            fuzzy: false,
            fuzzy_start_frac: 0.5,
            seed,
            validation_frac: 0.05,
            rotated_test_per_task: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidStreamConfig("batch_size must be at least 1".into()));
        }
        if self.n_tasks == 0 || self.examples_per_task == 0 {
            return Err(Error::InvalidStreamConfig("need at least one task and one example".into()));
        }
        if self.dataset == DatasetKind::SplitMnist && self.n_tasks > 5 {
            return Err(Error::InvalidStreamConfig("split MNIST has at most 5 tasks".into()));
        }
        if !(self.fuzzy_start_frac > 0.0 && self.fuzzy_start_frac <= 1.0) {
            return Err(Error::InvalidStreamConfig("fuzzy_start_frac must lie in (0, 1]".into()));
        }
        if let StreamMode::IidOffline { epochs: 0 } = self.mode {
            return Err(Error::InvalidStreamConfig("offline epochs must be positive".into()));
        }
        Ok(())
    }
}

/// A batch handed to a learner. `latent` is for bookkeeping only.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f32>,
    pub y: Vec<usize>,
    pub latent: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Read position in a stream; independent cursors may share one stream.
#[derive(Debug, Clone, Default)]
pub struct StreamCursor {
    pos: usize,
}

impl StreamCursor {
    pub fn position(&self) -> usize {
        self.pos
    }
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    examples: Vec<LabeledExample>,
    latent: Vec<usize>,
    order: Vec<usize>,
    spans: Vec<Range<usize>>,
    batch_size: usize,
    mode: StreamMode,
    pub test_sets: Vec<LabeledSet>,
    pub validation_sets: Vec<LabeledSet>,
    /// Rotation angle per task, rotated streams only.
    pub angles: Vec<f64>,
}

impl TaskStream {
    /// Sequential stream over pre-built tasks; mostly useful for tests.
    pub fn from_tasks(tasks: Vec<Vec<LabeledExample>>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidStreamConfig("batch_size must be at least 1".into()));
        }
        let mut examples = Vec::new();
        let mut latent = Vec::new();
        let mut spans = Vec::new();
        for (t, task) in tasks.into_iter().enumerate() {
            let start = examples.len();
            latent.extend(std::iter::repeat_n(t, task.len()));
            examples.extend(task);
            spans.push(start..examples.len());
        }
        let order = (0..examples.len()).collect();
        Ok(Self {
            examples,
            latent,
            order,
            spans,
            batch_size,
            mode: StreamMode::Tasks,
            test_sets: Vec::new(),
            validation_sets: Vec::new(),
            angles: Vec::new(),
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.spans.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn mode(&self) -> StreamMode {
        self.mode
    }

    /// Number of example visits over the whole stream.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Examples in task order (before any reordering).
    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    /// Latent task of every visit, in visiting order.
    pub fn latent_sequence(&self) -> Vec<usize> {
        self.order.iter().map(|&i| self.latent[i]).collect()
    }

    /// Examples in visiting order.
    pub fn visit_sequence(&self) -> impl Iterator<Item = &LabeledExample> {
        self.order.iter().map(|&i| &self.examples[i])
    }

    pub(crate) fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    pub(crate) fn order_mut(&mut self) -> &mut Vec<usize> {
        &mut self.order
    }

    pub fn cursor(&self) -> StreamCursor {
        StreamCursor::default()
    }

    /// Next batch, or `None` once the stream is exhausted (and forever after).
    pub fn next_batch(&self, cursor: &mut StreamCursor) -> Option<Batch> {
        if cursor.pos >= self.order.len() {
            return None;
        }
        let end = (cursor.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[cursor.pos..end];
        cursor.pos = end;
        let dim = self.examples[idx[0]].features.len();
        let mut x = Array2::zeros((idx.len(), dim));
        for (mut row, &i) in x.rows_mut().into_iter().zip(idx) {
            row.assign(&ndarray::ArrayView1::from(&self.examples[i].features[..]));
        }
        Some(Batch {
            x,
            y: idx.iter().map(|&i| self.examples[i].label).collect(),
            latent: idx.iter().map(|&i| self.latent[i]).collect(),
        })
    }

    pub fn batches(&self) -> Batches<'_> {
        Batches {
            stream: self,
            cursor: self.cursor(),
        }
    }

    /// Keep only the first `n` tasks (sequential streams), with their test
    /// and validation sets. Used for tuning on the leading tasks.
    pub fn first_tasks(&self, n: usize) -> Result<Self> {
        if self.mode != StreamMode::Tasks {
            return Err(Error::InvalidStreamConfig("truncation needs a sequential stream".into()));
        }
        let n = n.min(self.n_tasks());
        let end = self.spans[..n].last().map_or(0, |s| s.end);
        let order = self.order.iter().copied().filter(|&i| self.latent[i] < n).collect();
        Ok(Self {
            examples: self.examples[..end].to_vec(),
            latent: self.latent[..end].to_vec(),
            order,
            spans: self.spans[..n].to_vec(),
            batch_size: self.batch_size,
            mode: self.mode,
            test_sets: self.test_sets.iter().take(n).cloned().collect(),
            validation_sets: self.validation_sets.iter().take(n).cloned().collect(),
            angles: self.angles.iter().take(n).copied().collect(),
        })
    }
}

pub struct Batches<'a> {
    stream: &'a TaskStream,
    cursor: StreamCursor,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        self.stream.next_batch(&mut self.cursor)
    }
}

fn sample_without_replacement(pool: &mut Vec<usize>, n: usize, rng: &mut StreamRng) -> Vec<usize> {
    pool.shuffle(rng);
    pool.drain(..n.min(pool.len())).collect()
}

fn transformed(ex: &LabeledExample, f: &dyn Fn(&[f32]) -> Vec<f32>) -> LabeledExample {
    LabeledExample {
        features: f(&ex.features),
        label: ex.label,
        source_index: ex.source_index,
    }
}

/// Build the stream described by `cfg` from a loaded dataset.
pub fn build_stream(data: &MnistData, cfg: &StreamConfig) -> Result<TaskStream> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, RngStream::Data);
    let per_task = cfg.examples_per_task;
    let n_val_tasks = cfg.n_tasks.min(3);

    let mut tasks: Vec<Vec<LabeledExample>> = Vec::with_capacity(cfg.n_tasks);
    let mut test_sets = Vec::with_capacity(cfg.n_tasks);
    let mut validation_sets = Vec::new();
    let mut angles = Vec::new();

    match cfg.dataset {
        DatasetKind::SplitMnist => {
            for t in 0..cfg.n_tasks {
                let classes = [2 * t, 2 * t + 1];
                let mut pool: Vec<usize> = (0..data.train.len())
                    .filter(|&i| classes.contains(&data.train[i].label))
                    .collect();
                let pool_len = pool.len();
                if pool_len < per_task {
                    return Err(Error::InsufficientData(format!(
                        "task {t} has {pool_len} examples, need {per_task}"
                    )));
                }
                let chosen = sample_without_replacement(&mut pool, per_task, &mut rng);
                tasks.push(chosen.iter().map(|&i| data.train[i].clone()).collect());
                if t < n_val_tasks {
                    let n_val = (cfg.validation_frac * pool_len as f64).round() as usize;
                    let val = sample_without_replacement(&mut pool, n_val, &mut rng);
                    validation_sets.push(LabeledSet::from_examples(val.iter().map(|&i| &data.train[i])));
                }
                test_sets.push(LabeledSet::from_examples(
                    data.test.iter().filter(|e| classes.contains(&e.label)),
                ));
            }
        }
        DatasetKind::PermutedMnist | DatasetKind::RotatedMnist => {
            let total = cfg.n_tasks * per_task;
            let n_val = (cfg.validation_frac * data.train.len() as f64).round() as usize;
            if data.train.len() < total + n_val_tasks * n_val {
                return Err(Error::InsufficientData(format!(
                    "{} training examples cannot fill {} tasks of {per_task} plus validation",
                    data.train.len(),
                    cfg.n_tasks
                )));
            }
            let mut pool: Vec<usize> = (0..data.train.len()).collect();
            pool.shuffle(&mut rng);
            let dim = data.train.first().map_or(INPUT_DIM, |e| e.features.len());
            for t in 0..cfg.n_tasks {
                let f: Box<dyn Fn(&[f32]) -> Vec<f32>> = match cfg.dataset {
                    DatasetKind::PermutedMnist => {
                        let perm = if t == 0 {
                            Permutation::identity(dim)
                        } else {
                            Permutation::random(dim, &mut rng)
                        };
                        Box::new(move |img| perm.apply(img))
                    }
                    _ => {
                        let angle = t as f64 * 180.0 / cfg.n_tasks as f64;
                        angles.push(angle);
                        Box::new(move |img| transform::rotate(img, SIDE, angle))
                    }
                };
                let chosen = &pool[t * per_task..(t + 1) * per_task];
                tasks.push(chosen.iter().map(|&i| transformed(&data.train[i], &*f)).collect());
                if t < n_val_tasks {
                    let start = total + t * n_val;
                    let val: Vec<LabeledExample> = pool[start..start + n_val]
                        .iter()
                        .map(|&i| transformed(&data.train[i], &*f))
                        .collect();
                    validation_sets.push(LabeledSet::from_examples(&val));
                }
                let test: Vec<LabeledExample> = if cfg.dataset == DatasetKind::RotatedMnist {
                    let mut tp: Vec<usize> = (0..data.test.len()).collect();
                    sample_without_replacement(&mut tp, cfg.rotated_test_per_task, &mut rng)
                        .iter()
                        .map(|&i| transformed(&data.test[i], &*f))
                        .collect()
                } else {
                    data.test.iter().map(|e| transformed(e, &*f)).collect()
                };
                test_sets.push(LabeledSet::from_examples(&test));
            }
        }
    }

    let mut stream = TaskStream::from_tasks(tasks, cfg.batch_size)?;
    stream.test_sets = test_sets;
    stream.validation_sets = validation_sets;
    stream.angles = angles;

    match cfg.mode {
        StreamMode::Tasks => {
            if cfg.fuzzy && cfg.fuzzy_start_frac < 1.0 {
                stream = fuzzify(&stream, cfg.fuzzy_start_frac, &mut rng)?;
            }
        }
        StreamMode::IidOnline => {
            stream.order.shuffle(&mut rng);
            stream.mode = cfg.mode;
        }
        StreamMode::IidOffline { epochs } => {
            let n = stream.examples.len();
            let mut order = Vec::with_capacity(n * epochs);
            for _ in 0..epochs {
                let mut epoch: Vec<usize> = (0..n).collect();
                epoch.shuffle(&mut rng);
                order.extend(epoch);
            }
            stream.order = order;
            stream.mode = cfg.mode;
        }
    }
    Ok(stream)
}

/// Synthetic MNIST-shaped data: each class is a noisy blob at its own
/// location. Handy for tests and benchmarks that cannot read real files.
pub fn synthetic_mnist<R: Rng + ?Sized>(train_per_class: usize, test_per_class: usize, rng: &mut R) -> MnistData {
    let make = |n: usize, rng: &mut R, offset: usize| -> Vec<LabeledExample> {
        let mut out = Vec::with_capacity(n * NUM_CLASSES);
        for i in 0..n {
            for class in 0..NUM_CLASSES {
                let (cr, cc) = (6 + (class / 5) * 12, 3 + (class % 5) * 5);
                let mut features = vec![0.0f32; INPUT_DIM];
                for r in 0..SIDE {
                    for c in 0..SIDE {
                        let d2 = (r as f32 - cr as f32).powi(2) + (c as f32 - cc as f32).powi(2);
                        let v = (-d2 / 8.0).exp() + 0.15 * rng.random::<f32>();
                        features[r * SIDE + c] = v.min(1.0);
                    }
                }
                out.push(LabeledExample {
                    features,
                    label: class,
                    source_index: offset + i * NUM_CLASSES + class,
                });
            }
        }
        out
    };
    let train = make(train_per_class, rng, 0);
    let test = make(test_per_class, rng, 0);
    MnistData { train, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn data() -> MnistData {
        synthetic_mnist(260, 20, &mut ChaCha8Rng::seed_from_u64(0))
    }

    fn small(dataset: DatasetKind) -> StreamConfig {
        let mut cfg = StreamConfig::new(dataset, 4);
        cfg.examples_per_task = 100;
        if dataset != DatasetKind::SplitMnist {
            cfg.n_tasks = 4;
        }
        cfg
    }

    #[test]
    fn split_tasks_have_disjoint_label_pairs() {
        let s = build_stream(&data(), &small(DatasetKind::SplitMnist)).unwrap();
        assert_eq!(s.n_tasks(), 5);
        assert_eq!(s.len(), 500);
        let mut seen = HashSet::new();
        for (ex, t) in s.visit_sequence().zip(s.latent_sequence()) {
            assert_eq!(ex.label / 2, t);
        }
        for (t, set) in s.test_sets.iter().enumerate() {
            assert!(set.y.iter().all(|&y| y / 2 == t));
            seen.extend(set.y.iter().copied());
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn validation_is_disjoint_from_training() {
        let d = data();
        let s = build_stream(&d, &small(DatasetKind::SplitMnist)).unwrap();
        assert_eq!(s.validation_sets.len(), 3);
        let train: HashSet<Vec<u32>> = s
            .examples()
            .iter()
            .map(|e| e.features.iter().map(|v| v.to_bits()).collect())
            .collect();
        for set in &s.validation_sets {
            // 5% of a 520-example label pool
            assert_eq!(set.len(), 26);
            for row in set.x.rows() {
                let key: Vec<u32> = row.iter().map(|v| v.to_bits()).collect();
                assert!(!train.contains(&key));
            }
        }
    }

    #[test]
    fn permuted_task_zero_is_identity() {
        let d = synthetic_mnist(80, 5, &mut ChaCha8Rng::seed_from_u64(1));
        let mut cfg = small(DatasetKind::PermutedMnist);
        cfg.examples_per_task = 50;
        cfg.validation_frac = 0.01;
        let s = build_stream(&d, &cfg).unwrap();
        for ex in &s.examples()[..50] {
            assert_eq!(ex.features, d.train[ex.source_index].features);
        }
        let moved = &s.examples()[50];
        assert_ne!(moved.features, d.train[moved.source_index].features);
        let mut a = moved.features.clone();
        let mut b = d.train[moved.source_index].features.clone();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn rotated_angles_evenly_spaced() {
        let d = synthetic_mnist(80, 5, &mut ChaCha8Rng::seed_from_u64(1));
        let mut cfg = small(DatasetKind::RotatedMnist);
        cfg.examples_per_task = 50;
        cfg.validation_frac = 0.01;
        cfg.rotated_test_per_task = 20;
        let s = build_stream(&d, &cfg).unwrap();
        assert_eq!(s.angles, vec![0.0, 45.0, 90.0, 135.0]);
        assert!(s.test_sets.iter().all(|t| t.len() == 20));
        assert!(s.examples().iter().all(|e| e.features.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn batching_and_single_pass() {
        let s = build_stream(&data(), &small(DatasetKind::SplitMnist)).unwrap();
        assert_eq!(s.num_batches(), 50);
        let mut cur = s.cursor();
        let mut n = 0;
        while let Some(b) = s.next_batch(&mut cur) {
            assert_eq!(b.len(), 10);
            n += 1;
        }
        assert_eq!(n, 50);
        assert!(s.next_batch(&mut cur).is_none());
        assert_eq!(s.batches().count(), 50, "fresh cursors start over");
    }

    #[test]
    fn short_last_batch() {
        let mut cfg = small(DatasetKind::SplitMnist);
        cfg.batch_size = 7;
        let s = build_stream(&data(), &cfg).unwrap();
        let sizes: Vec<usize> = s.batches().map(|b| b.len()).collect();
        assert_eq!(sizes.len(), 72);
        assert_eq!(*sizes.last().unwrap(), 500 - 71 * 7);
    }

    #[test]
    fn iid_modes() {
        let d = data();
        let mut cfg = small(DatasetKind::SplitMnist);
        cfg.mode = StreamMode::IidOnline;
        let online = build_stream(&d, &cfg).unwrap();
        assert_eq!(online.len(), 500);
        let lat = online.latent_sequence();
        assert!(lat.windows(2).any(|w| w[0] > w[1]), "shuffled across tasks");

        cfg.mode = StreamMode::IidOffline { epochs: 3 };
        let offline = build_stream(&d, &cfg).unwrap();
        assert_eq!(offline.num_batches(), 150);
    }

    #[test]
    fn deterministic_per_seed() {
        let d = data();
        let a = build_stream(&d, &small(DatasetKind::SplitMnist)).unwrap();
        let b = build_stream(&d, &small(DatasetKind::SplitMnist)).unwrap();
        assert_eq!(a.examples(), b.examples());
        let mut other = small(DatasetKind::SplitMnist);
        other.seed = 5;
        let c = build_stream(&d, &other).unwrap();
        assert_ne!(a.examples(), c.examples());
    }

    #[test]
    fn insufficient_data_and_bad_config() {
        let d = synthetic_mnist(10, 2, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(
            build_stream(&d, &small(DatasetKind::SplitMnist)),
            Err(Error::InsufficientData(_))
        ));
        let mut cfg = small(DatasetKind::SplitMnist);
        cfg.batch_size = 0;
        assert!(matches!(build_stream(&d, &cfg), Err(Error::InvalidStreamConfig(_))));
        assert!("cifar".parse::<DatasetKind>().is_err());
    }

    #[test]
    fn truncation_keeps_leading_tasks() {
        let s = build_stream(&data(), &small(DatasetKind::SplitMnist)).unwrap();
        let t = s.first_tasks(3).unwrap();
        assert_eq!(t.n_tasks(), 3);
        assert_eq!(t.len(), 300);
        assert_eq!(t.test_sets.len(), 3);
        assert_eq!(t.validation_sets.len(), 3);
    }
}
