//! Fixed-capacity replay memory filled by reservoir sampling.
//!
//! Slots can be rewritten in place (edited examples) and count how often
//! they have been rewritten. Every stored example gets a unique id, and a
//! [`SlotRef`] carries it so that writing back into a slot that has been
//! replaced in the meantime is caught.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySlot {
    pub x: Vec<f32>,
    pub y: usize,
    /// Number of edit writebacks since insertion (`k`).
    pub replay_count: u32,
    /// The example as inserted; kept only when shadows are enabled.
    pub original_x: Option<Vec<f32>>,
    id: u64,
}

impl MemorySlot {
    pub fn id(&self) -> u64 {
        self.id
    }
}

/// Handle to a sampled slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRef {
    pub index: usize,
    id: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    slots: Vec<MemorySlot>,
    n_seen: u64,
    keep_originals: bool,
    next_id: u64,
    writebacks: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            n_seen: 0,
            keep_originals: false,
            next_id: 0,
            writebacks: 0,
        }
    }

    /// Also keep an untouched copy of every inserted example.
    pub fn with_shadows(capacity: usize) -> Self {
        Self {
            keep_originals: true,
            ..Self::new(capacity)
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn has_shadows(&self) -> bool {
        self.keep_originals
    }

    pub fn slots(&self) -> &[MemorySlot] {
        &self.slots
    }

    /// Total writebacks performed so far.
    pub fn writebacks(&self) -> u64 {
        self.writebacks
    }

    fn new_slot(&mut self, x: &[f32], y: usize) -> MemorySlot {
        self.next_id += 1;
        MemorySlot {
            x: x.to_vec(),
            y,
            replay_count: 0,
            original_x: self.keep_originals.then(|| x.to_vec()),
            id: self.next_id,
        }
    }

    /// Offer one example.
    pub fn offer<R: Rng + ?Sized>(&mut self, x: &[f32], y: usize, rng: &mut R) {
        self.n_seen += 1;
        if self.slots.len() < self.capacity {
            let slot = self.new_slot(x, y);
            self.slots.push(slot);
        } else if self.capacity > 0 {
            let j = rng.random_range(0..self.n_seen);
            if j < self.capacity as u64 {
                let slot = self.new_slot(x, y);
                self.slots[j as usize] = slot;
            }
        }
    }

    /// Offer every row of a batch, in order.
    pub fn reservoir_update<R: Rng + ?Sized>(&mut self, x: &Array2<f32>, y: &[usize], rng: &mut R) {
        for (row, &label) in x.rows().into_iter().zip(y) {
            match row.as_slice() {
                Some(s) => self.offer(s, label, rng),
                None => self.offer(&row.to_vec(), label, rng),
            }
        }
    }

    fn slot_ref(&self, index: usize) -> SlotRef {
        SlotRef {
            index,
            id: self.slots[index].id,
        }
    }

    /// `n` distinct slots drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<SlotRef>> {
        if n > self.slots.len() {
            return Err(Error::SampleTooLarge {
                requested: n,
                available: self.slots.len(),
            });
        }
        Ok(index::sample(rng, self.slots.len(), n)
            .into_iter()
            .map(|i| self.slot_ref(i))
            .collect())
    }

    /// Handles to every slot, in slot order.
    pub fn refs(&self) -> Vec<SlotRef> {
        (0..self.slots.len()).map(|i| self.slot_ref(i)).collect()
    }

    /// Like [`sample`](Self::sample), but returns the whole memory when it
    /// holds fewer than `n` slots.
    pub fn sample_up_to<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<SlotRef> {
        if self.slots.len() <= n {
            self.refs()
        } else {
            self.sample(n, rng).expect("n below len")
        }
    }

    pub fn get(&self, r: SlotRef) -> Result<&MemorySlot> {
        match self.slots.get(r.index) {
            Some(s) if s.id == r.id => Ok(s),
            _ => Err(Error::StaleSlot { index: r.index }),
        }
    }

    /// Replace the slot's example with an edited one and bump its count.
    pub fn writeback(&mut self, r: SlotRef, x_edited: &[f32]) -> Result<()> {
        let slot = match self.slots.get_mut(r.index) {
            Some(s) if s.id == r.id => s,
            _ => return Err(Error::StaleSlot { index: r.index }),
        };
        if slot.x.len() != x_edited.len() {
            return Err(Error::LengthMismatch {
                left: x_edited.len(),
                right: slot.x.len(),
            });
        }
        slot.x.copy_from_slice(x_edited);
        slot.replay_count += 1;
        self.writebacks += 1;
        Ok(())
    }

    /// Stack the referenced slots into `(x, y, k)`.
    pub fn gather(&self, refs: &[SlotRef]) -> Result<(Array2<f32>, Vec<usize>, Vec<u32>)> {
        let dim = self.slots.first().map_or(0, |s| s.x.len());
        let mut x = Array2::zeros((refs.len(), dim));
        let mut y = Vec::with_capacity(refs.len());
        let mut k = Vec::with_capacity(refs.len());
        for (mut row, &r) in x.rows_mut().into_iter().zip(refs) {
            let slot = self.get(r)?;
            row.assign(&ndarray::ArrayView1::from(&slot.x[..]));
            y.push(slot.y);
            k.push(slot.replay_count);
        }
        Ok((x, y, k))
    }

    /// Write `(index, id, label, k, p0, p1, ...)` rows as CSV.
    pub fn dump_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let dim = self.slots.first().map_or(0, |s| s.x.len());
        let mut header = vec!["index".to_string(), "id".into(), "label".into(), "k".into()];
        header.extend((0..dim).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for (i, s) in self.slots.iter().enumerate() {
            let mut rec = vec![i.to_string(), s.id.to_string(), s.y.to_string(), s.replay_count.to_string()];
            rec.extend(s.x.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::io(path, e.into_error()))?
            .flush()
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
