use rand::Rng;

use crate::error::{Error, Result};
use crate::memory::{ReplayMemory, SlotRef};
use crate::nn::{Classifier, MlpParams};

/// Default candidate pool size.
pub const MIR_CANDIDATES: usize = 50;

/// Indices of the `k` largest scores, highest first; equal scores keep
/// their original order.
pub fn mir_select(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(k);
    idx
}

/// Draw `candidates` slots, score each by how much its loss grows from
/// `theta` to `theta_virtual`, and keep the `k` worst hit.
pub fn mir_retrieve<R: Rng + ?Sized, C: Classifier<f32> + ?Sized>(
    mem: &ReplayMemory,
    theta: &MlpParams,
    theta_virtual: &C,
    k: usize,
    candidates: usize,
    rng: &mut R,
) -> Result<Vec<SlotRef>> {
    if mem.is_empty() {
        return Err(Error::EmptyMemory);
    }
    let pool = mem.sample(candidates.min(mem.len()), rng)?;
    let (x, y, _) = mem.gather(&pool)?;
    let before = theta.example_losses(x.view(), &y)?;
    let after = theta_virtual.example_losses(x.view(), &y)?;
    let scores: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    Ok(mir_select(&scores, k).into_iter().map(|i| pool[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mlp;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_highest_scores() {
        assert_eq!(mir_select(&[0.5, -0.1, 0.3], 2), vec![0, 2]);
        assert_eq!(mir_select(&[0.0; 5], 3), vec![0, 1, 2]);
        assert_eq!(mir_select(&[1.0, 2.0], 5), vec![1, 0]);
    }

    fn filled_memory(n: usize, seed: u64) -> ReplayMemory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = ReplayMemory::new(n);
        let x = Array2::from_shape_simple_fn((n, 6), || rng.random::<f32>());
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        m.reservoir_update(&x, &y, &mut rng);
        m
    }

    #[test]
    fn unchanged_model_returns_first_candidates() {
        let m = filled_memory(30, 1);
        let net = Mlp::init(&[6, 5, 3], 2).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = a.clone();
        let got = mir_retrieve(&m, &net, &net, 4, 10, &mut a).unwrap();
        let pool = m.sample(10, &mut b).unwrap();
        assert_eq!(got, pool[..4]);
    }

    #[test]
    fn empty_memory_is_an_error() {
        let net = Mlp::init(&[6, 3], 2).unwrap();
        let m = ReplayMemory::new(5);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(mir_retrieve(&m, &net, &net, 2, 5, &mut r), Err(Error::EmptyMemory)));
    }

    #[test]
    fn small_memory_uses_everything() {
        let m = filled_memory(7, 3);
        let net = Mlp::init(&[6, 3], 2).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mir_retrieve(&m, &net, &net, 10, 50, &mut r).unwrap().len(), 7);
    }

    proptest! {
        // reordering distinct scores does not change which items are chosen
        #[test]
        fn selection_ignores_order(scores in prop::collection::vec(-5.0f64..5.0, 1..40), k in 0usize..10, seed in any::<u64>()) {
            let mut perm: Vec<usize> = (0..scores.len()).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
            let mut a: Vec<usize> = mir_select(&scores, k);
            let mut b: Vec<usize> = mir_select(&shuffled, k).into_iter().map(|i| perm[i]).collect();
            let kth = a.last().map(|&i| scores[i]);
            // only compare items strictly above the cut-off value
            a.retain(|&i| Some(scores[i]) != kth);
            b.retain(|&i| Some(scores[i]) != kth);
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }
}
