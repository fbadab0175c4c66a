//! Image-space transforms on square single-channel images.

use rand::seq::SliceRandom;
use rand::Rng;

/// Side length of an MNIST image.
pub const SIDE: usize = 28;

/// Resample `img` through the inverse of "rotate by `angle_deg` about the
/// centre, then shift by `(dx, dy)` pixels". Bilinear, zero background.
///
/// Positive angles turn the image clockwise as displayed (rows running down).
pub fn affine_resample(img: &[f32], side: usize, angle_deg: f64, dx: f64, dy: f64) -> Vec<f32> {
    debug_assert_eq!(img.len(), side * side);
    let centre = (side as f64 - 1.0) / 2.0;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= side as isize || c >= side as isize {
            0.0
        } else {
            img[r as usize * side + c as usize] as f64
        }
    };
    let mut out = vec![0.0f32; side * side];
    for r in 0..side {
        for c in 0..side {
            // undo the shift, then the rotation
            let x = c as f64 - dx - centre;
            let y = r as f64 - dy - centre;
            let sx = cos * x + sin * y + centre;
            let sy = -sin * x + cos * y + centre;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = at(y0, x0) * (1.0 - fx) * (1.0 - fy)
                + at(y0, x0 + 1) * fx * (1.0 - fy)
                + at(y0 + 1, x0) * (1.0 - fx) * fy
                + at(y0 + 1, x0 + 1) * fx * fy;
            out[r * side + c] = v.clamp(0.0, 1.0) as f32;
        }
    }
    out
}

pub fn rotate(img: &[f32], side: usize, angle_deg: f64) -> Vec<f32> {
    affine_resample(img, side, angle_deg, 0.0, 0.0)
}

/// Integer shift with zero fill; exact.
pub fn translate(img: &[f32], side: usize, dx: isize, dy: isize) -> Vec<f32> {
    let mut out = vec![0.0f32; side * side];
    for r in 0..side as isize {
        for c in 0..side as isize {
            let (sr, sc) = (r - dy, c - dx);
            if sr >= 0 && sc >= 0 && sr < side as isize && sc < side as isize {
                out[(r * side as isize + c) as usize] = img[(sr * side as isize + sc) as usize];
            }
        }
    }
    out
}

/// Fixed pixel permutation: `out[i] = img[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        Self(p)
    }

    pub fn apply(&self, img: &[f32]) -> Vec<f32> {
        self.0.iter().map(|&i| img[i]).collect()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}
