use ndarray::Array2;
use rand::Rng;

use crate::stream::transform::affine_resample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentPolicy {
    Off,
    /// Rotation uniform in `[-max_degrees, max_degrees]` and an integer shift
    /// in `[-max_shift, max_shift]` along each axis.
    RotShift { max_degrees: f64, max_shift: i32 },
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy::RotShift {
            max_degrees: 15.0,
            max_shift: 2,
        }
    }
}

/// Randomly transformed copy of a batch of square images.
pub fn augment<R: Rng + ?Sized>(x: &Array2<f32>, rng: &mut R, policy: AugmentPolicy) -> Array2<f32> {
    let (max_degrees, max_shift) = match policy {
        AugmentPolicy::Off => return x.clone(),
        AugmentPolicy::RotShift { max_degrees, max_shift } => (max_degrees, max_shift),
    };
    let side = (x.ncols() as f64).sqrt().round() as usize;
    assert_eq!(side * side, x.ncols(), "images must be square");
    let mut out = Array2::zeros(x.raw_dim());
    for (src, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
        let angle = rng.random_range(-max_degrees..=max_degrees);
        let dx = rng.random_range(-max_shift..=max_shift);
        let dy = rng.random_range(-max_shift..=max_shift);
        let img = src.to_vec();
        let moved = affine_resample(&img, side, angle, dx as f64, dy as f64);
        dst.assign(&ndarray::ArrayView1::from(&moved[..]));
    }
    out
}
