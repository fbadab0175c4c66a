//! Soft task boundaries.
//!
//! Over the tail of task `i` (from `start_frac` of its span to its end) each
//! position draws from task `i + 1` with probability `(u + 0.5) / L`, `u` the
//! offset into a ramp of length `L`. Next-task examples are pulled from the
//! head of task `i + 1`; the task-`i` examples they displace are scattered at
//! random over the rest of task `i + 1`'s pre-ramp stretch, keeping each
//! group's internal order. Nothing is duplicated or dropped.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{StreamMode, TaskStream};
use crate::error::{Error, Result};

pub fn fuzzify<R: Rng + ?Sized>(stream: &TaskStream, start_frac: f64, rng: &mut R) -> Result<TaskStream> {
    if stream.n_tasks() < 2 {
        return Err(Error::SingleTaskStream);
    }
    if stream.mode() != StreamMode::Tasks {
        return Err(Error::InvalidStreamConfig("fuzzy boundaries need a sequential stream".into()));
    }
    if !(start_frac > 0.0 && start_frac <= 1.0) {
        return Err(Error::InvalidStreamConfig("fuzzy_start_frac must lie in (0, 1]".into()));
    }
    let spans = stream.spans().to_vec();
    let ramp_start: Vec<usize> = spans
        .iter()
        .map(|s| s.start + (start_frac * s.len() as f64).floor() as usize)
        .collect();

    let mut out = stream.clone();
    let order = out.order_mut();
    for i in 0..spans.len() - 1 {
        let (r, e) = (ramp_start[i], spans[i].end);
        // task i + 1's stretch before its own ramp (the last task has none)
        let p_end = if i + 2 == spans.len() { spans[i + 1].end } else { ramp_start[i + 1] };
        let len = e - r;
        if len == 0 {
            continue;
        }
        let current: Vec<usize> = order[r..e].to_vec();
        let next: Vec<usize> = order[e..p_end].to_vec();
        let (mut ci, mut ni) = (0, 0);
        for u in 0..len {
            let q = (u as f64 + 0.5) / len as f64;
            let take_next = ni < next.len() && rng.random::<f64>() < q;
            order[r + u] = if take_next {
                ni += 1;
                next[ni - 1]
            } else {
                ci += 1;
                current[ci - 1]
            };
        }
        let leftover = &current[ci..];
        let rest = &next[ni..];
        let mut slots: Vec<bool> = std::iter::repeat_n(true, leftover.len())
            .chain(std::iter::repeat_n(false, rest.len()))
            .collect();
        slots.shuffle(rng);
        let (mut li, mut ri) = (0, 0);
        for (pos, from_current) in (e..p_end).zip(slots) {
            order[pos] = if from_current {
                li += 1;
                leftover[li - 1]
            } else {
                ri += 1;
                rest[ri - 1]
            };
        }
    }
    Ok(out)
}
