//! Dense feed-forward classifier with hand-written backpropagation.
//!
//! Layers compute `z = a W^T + b`; hidden layers apply a rectifier and the
//! output layer is the identity (logits). Weights are stored `(out, in)`.
//!
//! The network is generic over [`Scalar`] so training can run in `f32` while
//! gradient checks use an `f64` copy of the same parameters.
//!
//! Every [`Mlp`] value carries a stamp that is renewed whenever a new
//! parameter value is produced. [`ForwardCache`] remembers the stamp it was
//! built with, so feeding a cache to `backward` on other parameters fails
//! with [`Error::StaleCache`] instead of silently mixing two models.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::Float;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, RngStream};

/// Floating point type the network can be instantiated with.
pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn lift(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn lift(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn lift(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// One affine layer. `weight` is `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Classifier parameters.
#[derive(Debug, Clone)]
pub struct Mlp<F> {
    layers: Vec<Dense<F>>,
    stamp: u64,
}

/// Training-precision parameters.
pub type MlpParams = Mlp<f32>;

impl<F: Scalar> PartialEq for Mlp<F> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    stamp: u64,
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Array2<F>>,
}

impl<F: Scalar> ForwardCache<F> {
    pub fn logits(&self) -> &Array2<F> {
        self.activations.last().expect("cache always holds the input")
    }

    pub fn input(&self) -> &Array2<F> {
        &self.activations[0]
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Gradients with respect to every layer's weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<F> {
    pub layers: Vec<Dense<F>>,
}

/// Parameter and input gradients of the mean batch cross-entropy.
#[derive(Debug, Clone)]
pub struct GradBundle<F> {
    pub params: ParamGrads<F>,
    /// `(batch, input_dim)`; row `i` is the gradient of the *mean* loss w.r.t. input `i`.
    pub input: Array2<F>,
}

impl<F: Scalar> ParamGrads<F> {
    pub fn zeros_like(params: &Mlp<F>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flatten as `[W0, b0, W1, b1, ...]` in row-major order.
    pub fn to_flat(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    /// Inverse of [`ParamGrads::to_flat`], shaped like `self`.
    pub fn with_flat(&self, flat: &[F]) -> Result<Self> {
        if flat.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: self.len(),
            });
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let nw = l.weight.len();
            let weight = Array2::from_shape_vec(l.weight.raw_dim(), flat[offset..offset + nw].to_vec())
                .expect("shape checked");
            offset += nw;
            let nb = l.bias.len();
            let bias = Array1::from(flat[offset..offset + nb].to_vec());
            offset += nb;
            layers.push(Dense { weight, bias });
        }
        Ok(Self { layers })
    }
}

impl<F: Scalar> Mlp<F> {
    /// He-initialised network: weights `N(0, 2/fan_in)`, zero biases.
    ///
    /// Draws happen in `f64` so an `f32` and an `f64` network built from the
    /// same seed agree up to rounding.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidLayerSizes(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidLayerSizes(format!(
                "sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut rng = stream_rng(seed, RngStream::Init);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    F::lift(normal.sample(&mut rng))
                });
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            stamp: fresh_stamp(),
        })
    }

    /// Build from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Dense<F>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidLayerSizes("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i}: bias length {} vs {} outputs",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::InvalidLayerSizes(format!("layer {i} has a zero dimension")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            stamp: fresh_stamp(),
        })
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Same parameters in another precision.
    pub fn cast<G: Scalar>(&self) -> Mlp<G> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(|v| G::lift(v.as_f64())),
                    bias: l.bias.mapv(|v| G::lift(v.as_f64())),
                })
                .collect(),
            stamp: fresh_stamp(),
        }
    }

    /// Flattened parameters, same layout as [`ParamGrads::to_flat`].
    pub fn to_flat(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    fn affine(layer: &Dense<F>, a: &ArrayView2<F>) -> Array2<F> {
        let mut z = a.dot(&layer.weight.t());
        z += &layer.bias;
        z
    }

    /// Logits for a batch plus the cache needed by [`Mlp::backward`].
    pub fn forward(&self, x: ArrayView2<F>) -> Result<(Array2<F>, ForwardCache<F>)> {
        self.check_input(&x)?;
        let cache = self.forward_from(x, None);
        Ok((cache.logits().clone(), cache))
    }

    /// Forward pass; `xw0` is `x W_0^T` when the caller already has it.
    fn forward_from(&self, x: ArrayView2<F>, xw0: Option<&Array2<F>>) -> ForwardCache<F> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = match xw0 {
                Some(p) if i == 0 => p + &layer.bias,
                _ => Self::affine(layer, &activations[i].view()),
            };
            if i < last {
                z.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
            }
            activations.push(z);
        }
        ForwardCache {
            stamp: self.stamp,
            activations,
        }
    }

    /// Logits without keeping intermediate activations.
    pub fn logits(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut a = Self::affine(&self.layers[0], &x);
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            a.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
            a = Self::affine(layer, &a.view());
            debug_assert!(i <= last);
        }
        Ok(a)
    }

    /// Gradients of the mean cross-entropy of the cached batch.
    pub fn backward(&self, cache: &ForwardCache<F>, labels: &[usize]) -> Result<GradBundle<F>> {
        let (params, input) = self.backprop(cache, labels, true, true)?;
        Ok(GradBundle {
            params: params.expect("requested"),
            input: input.expect("requested"),
        })
    }

    /// Parameter gradients only.
    pub fn param_grads(&self, cache: &ForwardCache<F>, labels: &[usize]) -> Result<ParamGrads<F>> {
        Ok(self.backprop(cache, labels, true, false)?.0.expect("requested"))
    }

    /// Input gradients of the mean loss only.
    pub fn input_grads(&self, cache: &ForwardCache<F>, labels: &[usize]) -> Result<Array2<F>> {
        Ok(self.backprop(cache, labels, false, true)?.1.expect("requested"))
    }

    /// Error signal at the pre-activation of every layer, for the mean loss.
    fn layer_deltas(&self, cache: &ForwardCache<F>, labels: &[usize]) -> Result<Vec<Array2<F>>> {
        if cache.stamp != self.stamp {
            return Err(Error::StaleCache);
        }
        let batch = cache.batch_size();
        if labels.len() != batch {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: batch,
            });
        }
        let mut delta = softmax_minus_onehot(cache.logits(), labels)?;
        let scale = F::lift(1.0 / batch as f64);
        delta.mapv_inplace(|v| v * scale);

        let n = self.layers.len();
        let mut deltas = Vec::with_capacity(n);
        for l in (1..n).rev() {
            let mut d_prev = delta.dot(&self.layers[l].weight);
            mask_inactive(&mut d_prev, &cache.activations[l]);
            deltas.push(std::mem::replace(&mut delta, d_prev));
        }
        deltas.push(delta);
        deltas.reverse();
        Ok(deltas)
    }

    fn backprop(
        &self,
        cache: &ForwardCache<F>,
        labels: &[usize],
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<ParamGrads<F>>, Option<Array2<F>>)> {
        let deltas = self.layer_deltas(cache, labels)?;
        let params = want_params.then(|| ParamGrads {
            layers: deltas
                .iter()
                .zip(&cache.activations)
                .map(|(d, a)| Dense {
                    weight: d.t().dot(a),
                    bias: column_sums(d),
                })
                .collect(),
        });
        let input = want_input.then(|| deltas[0].dot(&self.layers[0].weight));
        Ok((params, input))
    }

    /// The parameters one SGD step on `(x, labels)` would produce, evaluated
    /// through the rank-`batch` form of that step instead of a new copy.
    pub fn lookahead(&self, x: ArrayView2<F>, labels: &[usize], lr: f64) -> Result<Lookahead<'_, F>> {
        if !lr.is_finite() {
            return Err(Error::NonFiniteLearningRate(lr));
        }
        let (_, cache) = self.forward(x)?;
        let deltas = self.layer_deltas(&cache, labels)?;
        if deltas.iter().any(|d| d.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteParams);
        }
        let lr = F::lift(lr);
        let bias_shift = deltas.iter().map(|d| column_sums(d).mapv(|v| v * lr)).collect();
        let mut inputs = cache.activations;
        inputs.pop();
        Ok(Lookahead {
            theta: self,
            lr,
            inputs,
            deltas,
            bias_shift,
        })
    }

    /// `p <- p - lr * g`, returning a new value and leaving `self` untouched.
    pub fn sgd_step(&self, grads: &ParamGrads<F>, lr: f64) -> Result<Self> {
        if !lr.is_finite() {
            return Err(Error::NonFiniteLearningRate(lr));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} gradient layers for {} parameter layers",
                grads.layers.len(),
                self.layers.len()
            )));
        }
        let lr = F::lift(lr);
        let mut layers = Vec::with_capacity(self.layers.len());
        for (p, g) in self.layers.iter().zip(&grads.layers) {
            if p.weight.raw_dim() != g.weight.raw_dim() || p.bias.raw_dim() != g.bias.raw_dim() {
                return Err(Error::DimensionMismatch("gradient shape differs from parameters".into()));
            }
            let mut weight = p.weight.clone();
            weight.scaled_add(-lr, &g.weight);
            let mut bias = p.bias.clone();
            bias.scaled_add(-lr, &g.bias);
            layers.push(Dense { weight, bias });
        }
        let next = Self {
            layers,
            stamp: fresh_stamp(),
        };
        if !next.all_finite() {
            return Err(Error::NonFiniteParams);
        }
        Ok(next)
    }

    /// Predicted class per row; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView2<F>) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(x.nrows());
        for chunk in x.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
            let logits = self.logits(chunk)?;
            out.extend(logits.rows().into_iter().map(|r| argmax(r.iter().copied())));
        }
        Ok(out)
    }

    /// Fraction of rows whose argmax matches the label.
    pub fn evaluate_accuracy(&self, x: ArrayView2<F>, labels: &[usize]) -> Result<f64> {
        if x.nrows() == 0 {
            return Err(Error::EmptySet);
        }
        if labels.len() != x.nrows() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: x.nrows(),
            });
        }
        let preds = self.predict(x)?;
        let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(correct as f64 / labels.len() as f64)
    }

    /// Per-example cross-entropy.
    pub fn example_losses(&self, x: ArrayView2<F>, labels: &[usize]) -> Result<Vec<f64>> {
        let logits = self.logits(x)?;
        cross_entropy_per_example(&logits.view(), labels)
    }
}

const EVAL_CHUNK: usize = 1000;

/// What the edit and retrieval code needs from a model.
pub trait Classifier<F: Scalar> {
    fn logits(&self, x: ArrayView2<F>) -> Result<Array2<F>>;

    /// Input gradients of the batch-mean cross-entropy.
    fn mean_input_grads(&self, x: ArrayView2<F>, labels: &[usize]) -> Result<Array2<F>>;

    fn example_losses(&self, x: ArrayView2<F>, labels: &[usize]) -> Result<Vec<f64>> {
        cross_entropy_per_example(&self.logits(x)?.view(), labels)
    }

    /// `grad_x mean l(x; self) - w * grad_x mean l(x; base)`.
    fn contrast_input_grads(&self, base: &Mlp<F>, x: ArrayView2<F>, labels: &[usize], w: F) -> Result<Array2<F>> {
        let mut g = self.mean_input_grads(x, labels)?;
        g.scaled_add(-w, &base.mean_input_grads(x, labels)?);
        Ok(g)
    }
}

impl<F: Scalar> Classifier<F> for Mlp<F> {
    fn logits(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        Mlp::logits(self, x)
    }

    fn mean_input_grads(&self, x: ArrayView2<F>, labels: &[usize]) -> Result<Array2<F>> {
        let (_, cache) = self.forward(x)?;
        self.input_grads(&cache, labels)
    }
}

/// `theta - lr * grad`, kept as `theta` plus the per-layer factors of the
/// gradient: layer `l` has `W' = W - lr * delta_l^T a_l` and
/// `b' = b - lr * colsum(delta_l)`.
#[derive(Debug, Clone)]
pub struct Lookahead<'a, F> {
    theta: &'a Mlp<F>,
    lr: F,
    inputs: Vec<Array2<F>>,
    deltas: Vec<Array2<F>>,
    bias_shift: Vec<Array1<F>>,
}

impl<F: Scalar> Lookahead<'_, F> {
    /// `a W'^T + b'` for layer `l`; `aw` is `a W_l^T` when already known.
    fn affine(&self, l: usize, a: &ArrayView2<F>, aw: Option<&Array2<F>>) -> Array2<F> {
        let layer = &self.theta.layers[l];
        let mut z = match aw {
            Some(p) => p.clone(),
            None => a.dot(&layer.weight.t()),
        };
        let coef = a.dot(&self.inputs[l].t());
        z.scaled_add(-self.lr, &coef.dot(&self.deltas[l]));
        z += &layer.bias;
        z -= &self.bias_shift[l];
        z
    }

    /// Activations entering each layer, then the logits.
    fn activations(&self, x: ArrayView2<F>, xw0: Option<&Array2<F>>) -> Vec<Array2<F>> {
        let n = self.theta.layers.len();
        let mut acts = Vec::with_capacity(n + 1);
        acts.push(x.to_owned());
        for l in 0..n {
            let mut z = self.affine(l, &acts[l].view(), if l == 0 { xw0 } else { None });
            if l + 1 < n {
                z.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
            }
            acts.push(z);
        }
        acts
    }

    /// Error signal at the first layer's pre-activation.
    fn first_delta(&self, acts: &[Array2<F>], labels: &[usize]) -> Result<Array2<F>> {
        let logits = acts.last().expect("non-empty");
        let mut g = softmax_minus_onehot(logits, labels)?;
        let scale = F::lift(1.0 / logits.nrows().max(1) as f64);
        g.mapv_inplace(|v| v * scale);
        for l in (1..self.theta.layers.len()).rev() {
            let mut prev = self.back_through(l, &g);
            mask_inactive(&mut prev, &acts[l]);
            g = prev;
        }
        Ok(g)
    }

    /// `g W'_l = g W_l - lr (g delta_l^T) a_l`.
    fn back_through(&self, l: usize, g: &Array2<F>) -> Array2<F> {
        let mut prev = g.dot(&self.theta.layers[l].weight);
        prev.scaled_add(-self.lr, &g.dot(&self.deltas[l].t()).dot(&self.inputs[l]));
        prev
    }

    /// Copy of the stepped parameters.
    pub fn materialize(&self) -> Result<Mlp<F>> {
        let layers = (0..self.theta.layers.len())
            .map(|l| {
                let p = &self.theta.layers[l];
                let mut weight = p.weight.clone();
                weight.scaled_add(-self.lr, &self.deltas[l].t().dot(&self.inputs[l]));
                Dense {
                    weight,
                    bias: &p.bias - &self.bias_shift[l],
                }
            })
            .collect();
        Mlp::from_layers(layers)
    }
}

impl<F: Scalar> Classifier<F> for Lookahead<'_, F> {
    fn logits(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.theta.check_input(&x)?;
        Ok(self.activations(x, None).pop().expect("non-empty"))
    }

    fn mean_input_grads(&self, x: ArrayView2<F>, labels: &[usize]) -> Result<Array2<F>> {
        self.theta.check_input(&x)?;
        let acts = self.activations(x, None);
        Ok(self.back_through(0, &self.first_delta(&acts, labels)?))
    }

    /// Both passes see the same input, so the first layer's products with
    /// `W_0` are shared when `base` is the model this step starts from.
    fn contrast_input_grads(&self, base: &Mlp<F>, x: ArrayView2<F>, labels: &[usize], w: F) -> Result<Array2<F>> {
        if base.stamp != self.theta.stamp {
            let mut g = self.mean_input_grads(x, labels)?;
            g.scaled_add(-w, &base.mean_input_grads(x, labels)?);
            return Ok(g);
        }
        base.check_input(&x)?;
        let w0 = &base.layers[0].weight;
        let xw0 = x.dot(&w0.t());
        let cache = base.forward_from(x, Some(&xw0));
        let d_base = base.layer_deltas(&cache, labels)?.swap_remove(0);
        let acts = self.activations(x, Some(&xw0));
        let d_look = self.first_delta(&acts, labels)?;
        let mut out = d_look.dot(&self.deltas[0].t()).dot(&self.inputs[0]);
        out.mapv_inplace(|v| -self.lr * v);
        let mut mixed = d_look;
        mixed.scaled_add(-w, &d_base);
        out += &mixed.dot(w0);
        Ok(out)
    }
}

/// Index of the largest value, first one on ties.
pub fn argmax<F: PartialOrd + Copy>(values: impl IntoIterator<Item = F>) -> usize {
    let mut best = 0;
    let mut best_val: Option<F> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best_val {
            Some(b) if v <= b => {}
            _ => {
                best = i;
                best_val = Some(v);
            }
        }
    }
    best
}

fn mask_inactive<F: Scalar>(d: &mut Array2<F>, activation: &Array2<F>) {
    Zip::from(d).and(activation).for_each(|d, &a| {
        if a <= F::zero() {
            *d = F::zero();
        }
    });
}

fn column_sums<F: Scalar>(m: &Array2<F>) -> Array1<F> {
    let mut acc = vec![0.0f64; m.ncols()];
    for row in m.rows() {
        for (a, &v) in acc.iter_mut().zip(row.iter()) {
            *a += v.as_f64();
        }
    }
    acc.into_iter().map(F::lift).collect()
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: rows,
        });
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

fn softmax_minus_onehot<F: Scalar>(logits: &Array2<F>, labels: &[usize]) -> Result<Array2<F>> {
    check_labels(labels, logits.nrows(), logits.ncols())?;
    let mut out = Array2::zeros(logits.raw_dim());
    for ((row, mut o), &y) in logits.rows().into_iter().zip(out.rows_mut()).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let sum: f64 = row.iter().map(|v| (v.as_f64() - max).exp()).sum();
        for (j, (o, v)) in o.iter_mut().zip(row.iter()).enumerate() {
            let p = (v.as_f64() - max).exp() / sum;
            *o = F::lift(if j == y { p - 1.0 } else { p });
        }
    }
    Ok(out)
}

/// Softmax cross-entropy of each row, computed with max subtraction in `f64`.
pub fn cross_entropy_per_example<F: Scalar>(
    logits: &ArrayView2<F>,
    labels: &[usize],
) -> Result<Vec<f64>> {
    check_labels(labels, logits.nrows(), logits.ncols())?;
    Ok(logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
            lse - row[y].as_f64()
        })
        .collect())
}

/// Mean softmax cross-entropy over the batch.
pub fn cross_entropy<F: Scalar>(logits: &ArrayView2<F>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() == 0 {
        return Err(Error::EmptySet);
    }
    let losses = cross_entropy_per_example(logits, labels)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}
