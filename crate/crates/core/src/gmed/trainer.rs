//! Online learners: one `train_step` per incoming stream batch.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};

use super::{edit_examples, interference, optimal_edit_direction, EditConfig, EditContext, EditKind};
use super::{HISTORY_CAP, ORACLE_EVERY};
use crate::error::{Error, Result};
use crate::eval::cosine_similarity;
use crate::memory::{ReplayMemory, SlotRef};
use crate::nn::{Classifier, MlpParams};
use crate::rng::TrainerRngs;
use crate::strategies::{agem_project, augment, mir_retrieve, AugmentPolicy, AGEM_REF_SIZE, MIR_CANDIDATES};
use crate::stream::{StreamMode, TaskStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Finetune,
    Er,
    ErGmed,
    Mir,
    MirGmed,
    ErAug,
    ErAugGmed,
    Agem,
    IidOnline,
    IidOffline,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Finetune,
        Variant::Er,
        Variant::ErGmed,
        Variant::Mir,
        Variant::MirGmed,
        Variant::ErAug,
        Variant::ErAugGmed,
        Variant::Agem,
        Variant::IidOnline,
        Variant::IidOffline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Finetune => "finetune",
            Variant::Er => "er",
            Variant::ErGmed => "er_gmed",
            Variant::Mir => "mir",
            Variant::MirGmed => "mir_gmed",
            Variant::ErAug => "er_aug",
            Variant::ErAugGmed => "er_aug_gmed",
            Variant::Agem => "agem",
            Variant::IidOnline => "iid_online",
            Variant::IidOffline => "iid_offline",
        }
    }

    /// Whether the variant edits memory.
    pub fn edits(self) -> bool {
        matches!(self, Variant::ErGmed | Variant::MirGmed | Variant::ErAugGmed)
    }

    pub fn stream_mode(self, offline_epochs: usize) -> StreamMode {
        match self {
            Variant::IidOnline => StreamMode::IidOnline,
            Variant::IidOffline => StreamMode::IidOffline { epochs: offline_epochs },
            _ => StreamMode::Tasks,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct TrainerOptions {
    pub layer_sizes: Vec<usize>,
    pub lr: f64,
    pub mem_size: usize,
    /// Memory examples replayed per step.
    pub replay_size: usize,
    pub mir_candidates: usize,
    pub agem_ref_size: usize,
    pub augment: AugmentPolicy,
    pub edit: EditConfig,
    /// Record the cosine between realised edits and the oracle direction.
    pub cosine_trace: bool,
    /// Keep original copies of memory examples.
    pub pcr: bool,
    pub edit_trace: bool,
    /// Steps between oracle measurements.
    pub oracle_every: u64,
}

impl Default for TrainerOptions {
    fn default() -> Self {
        Self {
            layer_sizes: vec![784, 400, 400, 10],
            lr: 0.05,
            mem_size: 500,
            replay_size: 10,
            mir_candidates: MIR_CANDIDATES,
            agem_ref_size: AGEM_REF_SIZE,
            augment: AugmentPolicy::default(),
            edit: EditConfig::default(),
            cosine_trace: false,
            pcr: false,
            edit_trace: false,
            oracle_every: ORACLE_EVERY,
        }
    }
}

/// One edited memory example.
#[derive(Debug, Clone, PartialEq)]
pub struct EditTraceRow {
    pub t: u64,
    pub slot_id: u64,
    pub k: u32,
    pub delta_norm: f64,
    pub d_before: f64,
    pub d_after: f64,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    theta: Arc<MlpParams>,
    memory: ReplayMemory,
    rngs: TrainerRngs,
    variant: Variant,
    opts: TrainerOptions,
    step: u64,
    history: Option<ReplayMemory>,
    cosine_trace: Vec<(u64, f64)>,
    edit_trace: Vec<EditTraceRow>,
}

impl Trainer {
    pub fn new(variant: Variant, opts: TrainerOptions, seed: u64) -> Result<Self> {
        let theta = MlpParams::init(&opts.layer_sizes, seed)?;
        let memory = if opts.pcr {
            ReplayMemory::with_shadows(opts.mem_size)
        } else {
            ReplayMemory::new(opts.mem_size)
        };
        let needs_history = variant.edits() && (opts.cosine_trace || opts.edit.kind == EditKind::Optimal);
        Ok(Self {
            theta: Arc::new(theta),
            memory,
            rngs: TrainerRngs::new(seed),
            variant,
            history: needs_history.then(|| ReplayMemory::new(HISTORY_CAP)),
            opts,
            step: 0,
            cosine_trace: Vec::new(),
            edit_trace: Vec::new(),
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.theta
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn options(&self) -> &TrainerOptions {
        &self.opts
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// `(step, cosine)` pairs, when tracing is on.
    pub fn cosine_trace(&self) -> &[(u64, f64)] {
        &self.cosine_trace
    }

    pub fn edit_trace(&self) -> &[EditTraceRow] {
        &self.edit_trace
    }

    /// Consume every batch of `stream`.
    pub fn train_stream(&mut self, stream: &TaskStream) -> Result<()> {
        for batch in stream.batches() {
            self.train_step(&batch.x, &batch.y)?;
        }
        Ok(())
    }

    fn sgd_on(&mut self, x: &Array2<f32>, y: &[usize]) -> Result<()> {
        let (_, cache) = self.theta.forward(x.view())?;
        let g = self.theta.param_grads(&cache, y)?;
        self.theta = Arc::new(self.theta.sgd_step(&g, self.opts.lr)?);
        Ok(())
    }

    fn history_arrays(&self) -> Option<(Array2<f32>, Vec<usize>)> {
        let h = self.history.as_ref().filter(|h| !h.is_empty())?;
        h.gather(&h.refs()).ok().map(|(x, y, _)| (x, y))
    }

    /// Edit the given slots against `theta_virtual`, write them back when
    /// configured, and return the edited rows. `measure` requests an oracle
    /// comparison for this batch.
    fn edit_slots(
        &mut self,
        refs: &[SlotRef],
        theta_virtual: &dyn Classifier<f32>,
        x_d: &Array2<f32>,
        y_d: &[usize],
        measure: bool,
    ) -> Result<Array2<f32>> {
        let (x, y, k) = self.memory.gather(refs)?;
        let cfg = self.opts.edit.clone();
        let history = if measure || cfg.kind == EditKind::Optimal {
            self.history_arrays()
        } else {
            None
        };
        let ctx = EditContext {
            theta: &self.theta,
            theta_virtual,
            lr: self.opts.lr,
            stream_x: x_d.view(),
            stream_y: y_d,
            history: history.as_ref().map(|(hx, hy)| (hx.view(), &hy[..])),
        };
        let edited = if cfg.kind == EditKind::Optimal && history.is_none() {
            x.clone()
        } else {
            edit_examples(&x, &y, &k, &ctx, &cfg, &mut self.rngs.edit_noise)?
        };

        if measure {
            if let Some((hx, hy)) = &history {
                let oracle =
                    optimal_edit_direction(&self.theta, x.view(), &y, x_d.view(), y_d, self.opts.lr, hx.view(), hy, None)?;
                let delta = &edited - &x;
                let a: Vec<f32> = delta.iter().copied().collect();
                let b: Vec<f32> = oracle.iter().copied().collect();
                self.cosine_trace.push((self.step, cosine_similarity(&a, &b)?));
            }
        }
        if self.opts.edit_trace {
            let before = interference(&self.theta, theta_virtual, x.view(), &y)?;
            let after = interference(&self.theta, theta_virtual, edited.view(), &y)?;
            for (i, r) in refs.iter().enumerate() {
                let dn = x.row(i).iter().zip(edited.row(i)).map(|(a, b)| ((b - a) as f64).powi(2)).sum::<f64>();
                self.edit_trace.push(EditTraceRow {
                    t: self.step,
                    slot_id: self.memory.get(*r)?.id(),
                    k: k[i],
                    delta_norm: dn.sqrt(),
                    d_before: before[i],
                    d_after: after[i],
                });
            }
        }
        if cfg.writeback {
            for (r, row) in refs.iter().zip(edited.rows()) {
                self.memory.writeback(*r, &row.to_vec())?;
            }
        }
        Ok(edited)
    }

    fn extra_edits(&mut self, theta_virtual: &dyn Classifier<f32>, x_d: &Array2<f32>, y_d: &[usize]) -> Result<()> {
        let n = self.opts.edit.n_extra_edit;
        if n > 0 {
            let refs = self.memory.sample_up_to(n, &mut self.rngs.memory_sample);
            self.edit_slots(&refs, theta_virtual, x_d, y_d, false)?;
        }
        Ok(())
    }

    /// Learn from one stream batch.
    pub fn train_step(&mut self, x_d: &Array2<f32>, y_d: &[usize]) -> Result<()> {
        let b = self.opts.replay_size;
        let measure = self.opts.cosine_trace && self.step % self.opts.oracle_every.max(1) == 0;
        let replay_free = matches!(self.variant, Variant::Finetune | Variant::IidOnline | Variant::IidOffline);

        if replay_free || self.memory.is_empty() {
            self.sgd_on(x_d, y_d)?;
        } else {
            match self.variant {
                Variant::Er | Variant::ErGmed => {
                    let refs = self.memory.sample_up_to(b, &mut self.rngs.memory_sample);
                    let x_m = if self.variant.edits() {
                        let theta = Arc::clone(&self.theta);
                        let tv = theta.lookahead(x_d.view(), y_d, self.opts.lr)?;
                        let edited = self.edit_slots(&refs, &tv, x_d, y_d, measure)?;
                        self.extra_edits(&tv, x_d, y_d)?;
                        edited
                    } else {
                        self.memory.gather(&refs)?.0
                    };
                    let y_m: Vec<usize> = refs.iter().map(|r| self.memory.get(*r).map(|s| s.y)).collect::<Result<_>>()?;
                    let x = concatenate![Axis(0), x_m, *x_d];
                    self.sgd_on(&x, &[y_m, y_d.to_vec()].concat())?;
                }
                Variant::Mir | Variant::MirGmed => {
                    let edit_refs = self
                        .variant
                        .edits()
                        .then(|| self.memory.sample_up_to(b, &mut self.rngs.memory_sample));
                    let theta = Arc::clone(&self.theta);
                    let tv = theta.lookahead(x_d.view(), y_d, self.opts.lr)?;
                    let refs = mir_retrieve(
                        &self.memory,
                        &self.theta,
                        &tv,
                        b,
                        self.opts.mir_candidates,
                        &mut self.rngs.memory_sample,
                    )?;
                    let (x_m, y_m, _) = self.memory.gather(&refs)?;
                    if let Some(edit_refs) = edit_refs {
                        self.edit_slots(&edit_refs, &tv, x_d, y_d, measure)?;
                        self.extra_edits(&tv, x_d, y_d)?;
                    }
                    let x = concatenate![Axis(0), x_m, *x_d];
                    self.sgd_on(&x, &[y_m, y_d.to_vec()].concat())?;
                }
                Variant::ErAug | Variant::ErAugGmed => {
                    let refs = self.memory.sample_up_to(b, &mut self.rngs.memory_sample);
                    let (x_e, y_e, _) = self.memory.gather(&refs)?;
                    let second = if self.variant.edits() {
                        let theta = Arc::clone(&self.theta);
                        let tv = theta.lookahead(x_d.view(), y_d, self.opts.lr)?;
                        let edited = self.edit_slots(&refs, &tv, x_d, y_d, measure)?;
                        self.extra_edits(&tv, x_d, y_d)?;
                        edited
                    } else {
                        x_e.clone()
                    };
                    let x_a = augment(&x_e, &mut self.rngs.augment, self.opts.augment);
                    let x = concatenate![Axis(0), x_a, second, *x_d];
                    self.sgd_on(&x, &[y_e.clone(), y_e, y_d.to_vec()].concat())?;
                }
                Variant::Agem => {
                    let (_, cache) = self.theta.forward(x_d.view())?;
                    let g = self.theta.param_grads(&cache, y_d)?;
                    let refs = self.memory.sample_up_to(self.opts.agem_ref_size, &mut self.rngs.memory_sample);
                    let (x_r, y_r, _) = self.memory.gather(&refs)?;
                    let (_, cache_r) = self.theta.forward(x_r.view())?;
                    let g_ref = self.theta.param_grads(&cache_r, &y_r)?;
                    let projected = g.with_flat(&agem_project(&g.to_flat(), &g_ref.to_flat()))?;
                    self.theta = Arc::new(self.theta.sgd_step(&projected, self.opts.lr)?);
                }
                Variant::Finetune | Variant::IidOnline | Variant::IidOffline => unreachable!("handled above"),
            }
        }

        self.memory.reservoir_update(x_d, y_d, &mut self.rngs.reservoir);
        if let Some(h) = self.history.as_mut() {
            h.reservoir_update(x_d, y_d, &mut self.rngs.oracle);
        }
        self.step += 1;
        Ok(())
    }

    /// Write the edit trace as CSV.
    pub fn write_edit_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        w.write_record(["t", "slot_id", "k", "delta_norm", "d_before", "d_after"])?;
        for r in &self.edit_trace {
            w.write_record([
                r.t.to_string(),
                r.slot_id.to_string(),
                r.k.to_string(),
                r.delta_norm.to_string(),
                r.d_before.to_string(),
                r.d_after.to_string(),
            ])?;
        }
        w.into_inner()
            .map_err(|e| Error::io(path, e.into_error()))?
            .flush()
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
