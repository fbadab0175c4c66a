//! Memory editing.
//!
//! A virtual SGD step on the stream batch gives `theta'`. Each replayed
//! memory example is then nudged in input space along
//! `grad_x [l(x; theta') - l(x; theta)] - beta * grad_x l(x; theta)`, i.e. ascent
//! on how much the coming update raises its loss.
//!
//! Input gradients are those of the objective averaged over the edited
//! batch, the same reduction the replay loss uses.

mod optimal;
mod trainer;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::nn::{Classifier, Mlp, Scalar};

pub use optimal::{optimal_edit_direction, HISTORY_CAP, ORACLE_EVERY};
pub use trainer::{EditTraceRow, Trainer, TrainerOptions, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    Gmed,
    /// Gaussian direction scaled to unit length.
    Random,
    /// Sign of the loss gradient at the current parameters.
    Adversarial,
    None,
    /// Hindsight direction from the oracle; needs a history sample.
    Optimal,
}

impl EditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::Gmed => "gmed",
            EditKind::Random => "random",
            EditKind::Adversarial => "adversarial",
            EditKind::None => "none",
            EditKind::Optimal => "optimal",
        }
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EditKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gmed" => Ok(EditKind::Gmed),
            "random" => Ok(EditKind::Random),
            "adversarial" => Ok(EditKind::Adversarial),
            "none" => Ok(EditKind::None),
            "optimal" => Ok(EditKind::Optimal),
            other => Err(format!("unknown edit kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub steps: usize,
    pub kind: EditKind,
    pub writeback: bool,
    pub n_extra_edit: usize,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            beta: 0.01,
            gamma: 1.0,
            steps: 1,
            kind: EditKind::Gmed,
            writeback: true,
            n_extra_edit: 0,
        }
    }
}

impl EditConfig {
    /// Stride for an example that has been edited `k` times.
    pub fn stride(&self, k: u32) -> f64 {
        self.gamma.powi(k as i32) * self.alpha
    }
}

/// `theta - lr * grad l(x, y; theta)`; `theta` is left as is.
pub fn virtual_update<F: Scalar>(theta: &Mlp<F>, x: ArrayView2<F>, y: &[usize], lr: f64) -> Result<Mlp<F>> {
    let (_, cache) = theta.forward(x)?;
    let g = theta.param_grads(&cache, y)?;
    theta.sgd_step(&g, lr)
}

/// Per-example loss change `l(x; theta_virtual) - l(x; theta)`.
pub fn interference<F: Scalar, C: Classifier<F> + ?Sized>(
    theta: &Mlp<F>,
    theta_virtual: &C,
    x: ArrayView2<F>,
    y: &[usize],
) -> Result<Vec<f64>> {
    let before = theta.example_losses(x, y)?;
    let after = theta_virtual.example_losses(x, y)?;
    Ok(after.iter().zip(&before).map(|(a, b)| a - b).collect())
}

/// `grad_x mean(d - beta * l(x; theta))`, one row per example.
pub fn gmed_direction<F: Scalar, C: Classifier<F> + ?Sized>(
    theta: &Mlp<F>,
    theta_virtual: &C,
    x: ArrayView2<F>,
    y: &[usize],
    beta: f64,
) -> Result<Array2<F>> {
    theta_virtual.contrast_input_grads(theta, x, y, F::lift(1.0 + beta))
}

/// Rows of independent Gaussian noise, each scaled to unit length.
pub fn random_direction<F: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<F> {
    let mut out = Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal));
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    out.mapv(F::lift)
}

pub fn adversarial_direction<F: Scalar>(theta: &Mlp<F>, x: ArrayView2<F>, y: &[usize]) -> Result<Array2<F>> {
    let g = theta.mean_input_grads(x, y)?;
    Ok(g.mapv(|v| if v > F::zero() { F::one() } else if v < F::zero() { -F::one() } else { F::zero() }))
}

/// What an edit may look at besides the examples themselves.
#[derive(Clone, Copy)]
pub struct EditContext<'a, F> {
    pub theta: &'a Mlp<F>,
    /// Parameters after the virtual step on the stream batch.
    pub theta_virtual: &'a dyn Classifier<F>,
    pub lr: f64,
    pub stream_x: ArrayView2<'a, F>,
    pub stream_y: &'a [usize],
    /// Sample of past stream examples, for the oracle.
    pub history: Option<(ArrayView2<'a, F>, &'a [usize])>,
}

/// Direction of one edit step of `kind`, before the stride is applied.
pub fn edit_direction<F: Scalar, R: Rng + ?Sized>(
    kind: EditKind,
    ctx: &EditContext<'_, F>,
    x: ArrayView2<F>,
    y: &[usize],
    beta: f64,
    rng: &mut R,
) -> Result<Array2<F>> {
    match kind {
        EditKind::Gmed => gmed_direction(ctx.theta, ctx.theta_virtual, x, y, beta),
        EditKind::Random => Ok(random_direction(x.nrows(), x.ncols(), rng)),
        EditKind::Adversarial => adversarial_direction(ctx.theta, x, y),
        EditKind::None => Ok(Array2::zeros(x.raw_dim())),
        EditKind::Optimal => {
            let (hx, hy) = ctx.history.ok_or(crate::Error::EmptyHistory)?;
            optimal_edit_direction(ctx.theta, x, y, ctx.stream_x, ctx.stream_y, ctx.lr, hx, hy, None)
        }
    }
}

/// Apply `cfg.steps` edit steps to every row of `x`; row `i` moves with
/// stride `gamma^k[i] * alpha`. The direction is recomputed at every step.
pub fn edit_examples<F: Scalar, R: Rng + ?Sized>(
    x: &Array2<F>,
    y: &[usize],
    k: &[u32],
    ctx: &EditContext<'_, F>,
    cfg: &EditConfig,
    rng: &mut R,
) -> Result<Array2<F>> {
    let mut out = x.clone();
    if cfg.kind == EditKind::None {
        return Ok(out);
    }
    for _ in 0..cfg.steps {
        let dir = edit_direction(cfg.kind, ctx, out.view(), y, cfg.beta, rng)?;
        for ((mut row, d), &ki) in out.axis_iter_mut(Axis(0)).zip(dir.rows()).zip(k) {
            row.scaled_add(F::lift(cfg.stride(ki)), &d);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(sizes: &[usize], seed: u64) -> Mlp<f64> {
        Mlp::<f32>::init(sizes, seed).unwrap().cast::<f64>()
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = Array::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0));
        let y = (0..rows).map(|i| (i * 7 + seed as usize) % 3).collect();
        (x, y)
    }

    fn ctx<'a>(theta: &'a Mlp<f64>, tv: &'a Mlp<f64>, sx: &'a Array2<f64>, sy: &'a [usize]) -> EditContext<'a, f64> {
        EditContext {
            theta,
            theta_virtual: tv,
            lr: 0.05,
            stream_x: sx.view(),
            stream_y: sy,
            history: None,
        }
    }

    #[test]
    fn virtual_update_trivia() {
        let theta = net(&[4, 6, 3], 1);
        let (x, y) = batch(5, 4, 2);
        assert_eq!(virtual_update(&theta, x.view(), &y, 0.0).unwrap(), theta);
        let (_, cache) = theta.forward(x.view()).unwrap();
        let g = theta.param_grads(&cache, &y).unwrap();
        assert_eq!(virtual_update(&theta, x.view(), &y, 0.1).unwrap(), theta.sgd_step(&g, 0.1).unwrap());
    }

    #[test]
    fn interference_trivia() {
        let theta = net(&[4, 6, 3], 1);
        let (x, y) = batch(5, 4, 2);
        assert!(interference(&theta, &theta, x.view(), &y).unwrap().iter().all(|&d| d == 0.0));
        let tv = virtual_update(&theta, x.view(), &y, 0.3).unwrap();
        let d = interference(&theta, &tv, x.view(), &y).unwrap();
        let mean_d = d.iter().sum::<f64>() / d.len() as f64;
        let lb = crate::nn::cross_entropy(&theta.logits(x.view()).unwrap().view(), &y).unwrap();
        let la = crate::nn::cross_entropy(&tv.logits(x.view()).unwrap().view(), &y).unwrap();
        assert!((mean_d - (la - lb)).abs() < 1e-12);
        // a step on the batch itself lowers its own loss
        assert!(mean_d < 0.0);
    }

    #[test]
    fn zero_alpha_and_none_are_identities() {
        let theta = net(&[4, 6, 3], 1);
        let (sx, sy) = batch(5, 4, 3);
        let tv = virtual_update(&theta, sx.view(), &sy, 0.05).unwrap();
        let (x, y) = batch(4, 4, 4);
        let c = ctx(&theta, &tv, &sx, &sy);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        for kind in [EditKind::Gmed, EditKind::Random, EditKind::Adversarial, EditKind::None] {
            let cfg = EditConfig { alpha: 0.0, kind, ..Default::default() };
            assert_eq!(edit_examples(&x, &y, &[0, 1, 2, 3], &c, &cfg, &mut r).unwrap(), x);
        }
        let cfg = EditConfig { kind: EditKind::None, ..Default::default() };
        assert_eq!(edit_examples(&x, &y, &[0; 4], &c, &cfg, &mut r).unwrap(), x);
    }

    #[test]
    fn stride_decays_with_k() {
        let cfg = EditConfig { alpha: 2.0, gamma: 0.9, ..Default::default() };
        assert!((cfg.stride(2) - 0.81 * 2.0).abs() < 1e-12);
        assert_eq!(EditConfig { gamma: 1.0, ..cfg.clone() }.stride(7), 2.0);
    }

    #[test]
    fn random_and_adversarial_shapes() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let u: Array2<f64> = random_direction(3, 50, &mut r);
        for row in u.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
        let theta = net(&[4, 6, 3], 1);
        let (x, y) = batch(5, 4, 2);
        let s = adversarial_direction(&theta, x.view(), &y).unwrap();
        assert!(s.iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));
    }

    fn objective(theta: &Mlp<f64>, tv: &Mlp<f64>, x: &Array2<f64>, y: &[usize], beta: f64) -> f64 {
        let d = interference(theta, tv, x.view(), y).unwrap();
        let l = theta.example_losses(x.view(), y).unwrap();
        d.iter().zip(&l).map(|(d, l)| d - beta * l).sum::<f64>() / d.len() as f64
    }

    #[test]
    fn gmed_direction_matches_finite_differences() {
        let mut worst = 0.0f64;
        for trial in 0..20 {
            let theta = net(&[5, 7, 6, 3], trial);
            let (sx, sy) = batch(4, 5, 100 + trial);
            let tv = virtual_update(&theta, sx.view(), &sy, 0.5).unwrap();
            let (x, y) = batch(3, 5, 200 + trial);
            let beta = 0.1 * trial as f64;
            let dir = gmed_direction(&theta, &tv, x.view(), &y, beta).unwrap();
            let eps = 1e-5;
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    let mut xp = x.clone();
                    xp[[i, j]] += eps;
                    let mut xm = x.clone();
                    xm[[i, j]] -= eps;
                    let fd = (objective(&theta, &tv, &xp, &y, beta) - objective(&theta, &tv, &xm, &y, beta)) / (2.0 * eps);
                    let rel = (fd - dir[[i, j]]).abs() / fd.abs().max(dir[[i, j]].abs()).max(1e-8);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn gmed_ascends_interference() {
        let mut wins = 0;
        let trials = 200;
        for trial in 0..trials {
            let theta = net(&[6, 8, 4], trial);
            let (sx, sy) = batch(5, 6, 1000 + trial);
            let tv = virtual_update(&theta, sx.view(), &sy, 0.2).unwrap();
            let (x, y) = batch(1, 6, 2000 + trial);
            let c = ctx(&theta, &tv, &sx, &sy);
            let cfg = EditConfig { alpha: 1e-3, beta: 0.0, ..Default::default() };
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let x2 = edit_examples(&x, &y, &[0], &c, &cfg, &mut r).unwrap();
            let before = interference(&theta, &tv, x.view(), &y).unwrap()[0];
            let after = interference(&theta, &tv, x2.view(), &y).unwrap()[0];
            if after >= before {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * trials as f64, "{wins}");
    }

    #[test]
    fn multi_step_recomputes_direction() {
        let theta = net(&[4, 6, 3], 1);
        let (sx, sy) = batch(5, 4, 3);
        let tv = virtual_update(&theta, sx.view(), &sy, 0.5).unwrap();
        let (x, y) = batch(2, 4, 4);
        let c = ctx(&theta, &tv, &sx, &sy);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let one = EditConfig { alpha: 0.5, gamma: 0.5, ..Default::default() };
        let x1 = edit_examples(&x, &y, &[1, 1], &c, &one, &mut r).unwrap();
        let x11 = edit_examples(&x1, &y, &[1, 1], &c, &one, &mut r).unwrap();
        let two = EditConfig { steps: 2, ..one };
        assert_eq!(edit_examples(&x, &y, &[1, 1], &c, &two, &mut r).unwrap(), x11);
    }

    #[test]
    fn labels_are_untouched() {
        let theta = net(&[4, 3], 1);
        let (x, y) = batch(3, 4, 5);
        let y0 = y.clone();
        let c = ctx(&theta, &theta, &x, &y);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        edit_examples(&x, &y, &[0; 3], &c, &EditConfig::default(), &mut r).unwrap();
        assert_eq!(y, y0);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [EditKind::Gmed, EditKind::Random, EditKind::Adversarial, EditKind::None, EditKind::Optimal] {
            assert_eq!(k.as_str().parse::<EditKind>().unwrap(), k);
        }
        assert!("sideways".parse::<EditKind>().is_err());
    }
}
