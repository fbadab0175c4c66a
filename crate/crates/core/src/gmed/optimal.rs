//! Hindsight edit direction.
//!
//! After a real update on a memory batch and a stream batch,
//! `theta_1 = theta - lr * grad l(x_m) - lr * grad l(x_D)`, the loss over
//! all past examples is `L(theta_1)`. Its gradient with respect to one memory
//! example is `-lr * grad_x [h . grad_theta l(x_m; theta)]` with
//! `h = grad L(theta_1)`; the inner directional derivative is taken by
//! central differences along `h`.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::nn::{Mlp, ParamGrads, Scalar};

/// Size of the past-example sample kept for the oracle.
pub const HISTORY_CAP: usize = 512;
/// Steps between oracle measurements.
pub const ORACLE_EVERY: u64 = 50;

fn mean_grads<F: Scalar>(theta: &Mlp<F>, x: ArrayView2<F>, y: &[usize]) -> Result<ParamGrads<F>> {
    let (_, cache) = theta.forward(x)?;
    theta.param_grads(&cache, y)
}

fn norm<F: Scalar>(v: &[F]) -> f64 {
    v.iter().map(|a| a.as_f64() * a.as_f64()).sum::<f64>().sqrt()
}

/// Direction, one row per memory example, that lowers the post-update loss
/// on `history` fastest (the negative gradient). `eps` defaults to
/// `1e-3 * |theta| / |h|`.
#[allow(clippy::too_many_arguments)]
pub fn optimal_edit_direction<F: Scalar>(
    theta: &Mlp<F>,
    x_m: ArrayView2<F>,
    y_m: &[usize],
    x_d: ArrayView2<F>,
    y_d: &[usize],
    lr: f64,
    hist_x: ArrayView2<F>,
    hist_y: &[usize],
    eps: Option<f64>,
) -> Result<Array2<F>> {
    if hist_x.nrows() == 0 {
        return Err(Error::EmptyHistory);
    }
    let g_m = mean_grads(theta, x_m, y_m)?;
    let g_d = mean_grads(theta, x_d, y_d)?;
    let theta_1 = theta.sgd_step(&g_m, lr)?.sgd_step(&g_d, lr)?;
    let h = mean_grads(&theta_1, hist_x, hist_y)?;
    let h_norm = norm(&h.to_flat());
    if h_norm == 0.0 {
        return Ok(Array2::zeros(x_m.raw_dim()));
    }
    let eps = eps.unwrap_or(1e-3 * norm(&theta.to_flat()) / h_norm);
    let plus = theta.sgd_step(&h, -eps)?;
    let minus = theta.sgd_step(&h, eps)?;
    let (_, cp) = plus.forward(x_m)?;
    let mut gp = plus.input_grads(&cp, y_m)?;
    let (_, cm) = minus.forward(x_m)?;
    let gm = minus.input_grads(&cm, y_m)?;
    let scale = F::lift(lr / (2.0 * eps));
    Zip::from(&mut gp).and(&gm).for_each(|p, &m| *p = (*p - m) * scale);
    Ok(gp)
}
