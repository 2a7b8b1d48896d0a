//! The main network `f(x; w)` and the weight generator `g(ε; Θ)`.
//!
//! The main network stores no weights of its own: every forward pass is
//! handed a flat weight vector (or a batch of them, one per input row).
//! The generator maps noise through a small MLP to produce exactly such
//! vectors, entirely on the differentiation tape, so gradients flow from
//! task loss through sampled weights into the generator parameters.

mod layout;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, Tape, Tensor};
use crate::error::{Error, Result};
use crate::real::{inv_softplus, Real};
use crate::rng::RngStream;

pub use layout::{ParamLayout, Segment};

pub const INPUT_SCALE: &str = "input_scale";

/// What the final layer's raw outputs mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// Raw outputs are predictions (squared-error tasks).
    Regression,
    /// Raw outputs are class logits.
    Logits,
}

/// Architecture of the task network: layer extents, ReLU hidden
/// activations, and an output head. Weights arrive externally as a flat
/// vector in the [`ParamLayout::of_layers`] convention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MainNetSpec {
    sizes: Vec<usize>,
    pub head: OutputHead,
}

impl MainNetSpec {
    /// `sizes` is `[input, hidden…, output]`; at least one hidden layer.
    pub fn new(sizes: Vec<usize>, head: OutputHead) -> Result<Self> {
        if sizes.len() < 3 {
            return Err(Error::contract(format!(
                "main network needs at least one hidden layer, got sizes {sizes:?}"
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::contract(format!(
                "main network extents must be positive, got {sizes:?}"
            )));
        }
        Ok(MainNetSpec { sizes, head })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::of_layers(&self.sizes)
    }

    /// Total flat weight count: Σ over layer pairs of `in·out + out`.
    pub fn weight_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }
}

/// A flat weight vector checked against a [`MainNetSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<F> {
    values: Vec<F>,
}

impl<F: Real> WeightVector<F> {
    pub fn new(spec: &MainNetSpec, values: Vec<F>) -> Result<Self> {
        if values.len() != spec.weight_count() {
            return Err(Error::contract(format!(
                "weight vector length {} does not match spec weight count {}",
                values.len(),
                spec.weight_count()
            )));
        }
        Ok(WeightVector { values })
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn into_values(self) -> Vec<F> {
        self.values
    }
}

/// Split a flat weight vector into `(weights, biases)` per layer.
pub fn unpack<F: Real>(spec: &MainNetSpec, w: &[F]) -> Result<Vec<(Vec<F>, Vec<F>)>> {
    if w.len() != spec.weight_count() {
        return Err(Error::contract(format!(
            "unpack: expected {} weights, got {}",
            spec.weight_count(),
            w.len()
        )));
    }
    let layout = spec.layout();
    let mut out = Vec::new();
    for i in 0..spec.sizes().len() - 1 {
        let ws = layout.segment(&format!("w{i}"))?;
        let bs = layout.segment(&format!("b{i}"))?;
        out.push((w[ws.range()].to_vec(), w[bs.range()].to_vec()));
    }
    Ok(out)
}

/// Inverse of [`unpack`]: flatten per-layer `(weights, biases)` pairs.
pub fn pack<F: Real>(spec: &MainNetSpec, layers: &[(Vec<F>, Vec<F>)]) -> Result<WeightVector<F>> {
    let sizes = spec.sizes();
    if layers.len() != sizes.len() - 1 {
        return Err(Error::contract(format!(
            "pack: expected {} layers, got {}",
            sizes.len() - 1,
            layers.len()
        )));
    }
    let mut values = Vec::with_capacity(spec.weight_count());
    for (i, (w, b)) in layers.iter().enumerate() {
        if w.len() != sizes[i] * sizes[i + 1] || b.len() != sizes[i + 1] {
            return Err(Error::contract(format!(
                "pack: layer {i} has {}+{} values, expected {}+{}",
                w.len(),
                b.len(),
                sizes[i] * sizes[i + 1],
                sizes[i + 1]
            )));
        }
        values.extend_from_slice(w);
        values.extend_from_slice(b);
    }
    WeightVector::new(spec, values)
}

/// Distribution of the generator's latent noise input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on (-1, 1).
    Uniform,
    /// ε ≡ 0: collapses the generator to a deterministic map. Used by the
    /// delta-distribution diagnostics and equivalence tests.
    Zero,
}

/// Architecture of the weight generator `g(ε; Θ)`.
///
/// Noise is scaled by `softplus(s)` (s is a trained parameter, part of Θ),
/// passes through ReLU hidden layers with inverted dropout on the hidden
/// units in train mode, and exits through a linear layer sized to the main
/// network's flat weight count.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperNetSpec {
    pub noise_dim: usize,
    pub noise_kind: NoiseKind,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    /// Keep-probability for hidden units during training.
    pub dropout_keep: f64,
    /// Effective input scale softplus(s) at initialization.
    pub input_scale_init: f64,
}

impl HyperNetSpec {
    pub fn new(noise_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = HyperNetSpec {
            noise_dim,
            noise_kind: NoiseKind::Gaussian,
            hidden_sizes,
            output_dim,
            dropout_keep: 0.5,
            input_scale_init: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default generator for the regression benchmarks: 16 noise
    /// dimensions through hidden layers [64, 32].
    pub fn regression_default(main: &MainNetSpec) -> Self {
        HyperNetSpec {
            noise_dim: 16,
            noise_kind: NoiseKind::Gaussian,
            hidden_sizes: vec![64, 32],
            output_dim: main.weight_count(),
            dropout_keep: 0.5,
            input_scale_init: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.output_dim == 0 {
            return Err(Error::contract(
                "generator noise_dim and output_dim must be positive".into(),
            ));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::contract(format!(
                "generator hidden sizes must be positive, got {:?}",
                self.hidden_sizes
            )));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::contract(format!(
                "dropout keep-probability must be in (0, 1], got {}",
                self.dropout_keep
            )));
        }
        if !(self.input_scale_init > 0.0) {
            return Err(Error::contract(format!(
                "input scale init must be positive, got {}",
                self.input_scale_init
            )));
        }
        Ok(())
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(self.noise_dim);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(self.output_dim);
        sizes
    }

    /// Flat layout of Θ: layer weights/biases plus the input scale s.
    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::of_layers(&self.layer_sizes());
        layout.push(INPUT_SCALE, &[1]);
        layout
    }

    pub fn param_count(&self) -> usize {
        self.layout().total()
    }

    /// Draw a `(rows, noise_dim)` noise batch as an untracked constant.
    pub fn draw_noise<F: Real>(&self, rows: usize, stream: &mut RngStream) -> Result<Tensor<F>> {
        let mut data = vec![F::zero(); rows * self.noise_dim];
        match self.noise_kind {
            NoiseKind::Gaussian => stream.fill_normal(&mut data),
            NoiseKind::Uniform => stream.fill_uniform(-1.0, 1.0, &mut data),
            NoiseKind::Zero => {}
        }
        Tensor::constant(data, &[rows, self.noise_dim])
    }
}

// ── initialization ──────────────────────────────────────────────────

fn glorot_fill<F: Real>(params: &mut [F], layout: &ParamLayout, stream: &mut RngStream) {
    for seg in layout.segments() {
        if seg.shape.len() == 2 {
            let limit = (6.0 / (seg.shape[0] + seg.shape[1]) as f64).sqrt();
            stream.fill_uniform(-limit, limit, &mut params[seg.range()]);
        }
        // biases (and any rank-1 segment) stay zero
    }
}

/// Initialize generator parameters Θ: Glorot-uniform layer weights, zero
/// biases, and s chosen so softplus(s) equals the configured input scale.
pub fn init_hyper_params<F: Real>(spec: &HyperNetSpec, stream: &mut RngStream) -> Result<Vec<F>> {
    spec.validate()?;
    let layout = spec.layout();
    let mut params = vec![F::zero(); layout.total()];
    glorot_fill(&mut params, &layout, stream);
    let s = layout.segment(INPUT_SCALE)?;
    params[s.start] = F::from_f64(inv_softplus(spec.input_scale_init));
    Ok(params)
}

/// Initialize a baseline point-weight vector with the same per-layer rule.
pub fn init_main_params<F: Real>(spec: &MainNetSpec, stream: &mut RngStream) -> Result<Vec<F>> {
    let layout = spec.layout();
    let mut params = vec![F::zero(); layout.total()];
    glorot_fill(&mut params, &layout, stream);
    Ok(params)
}

/// Parameters for an affine (no hidden layer) generator that always emits
/// `w0`: output weights zero, output bias `w0`. Combined with
/// [`NoiseKind::Zero`] this is the delta-distribution generator whose
/// training step matches a plain network's step exactly.
pub fn init_delta_hyper_params<F: Real>(spec: &HyperNetSpec, w0: &[F]) -> Result<Vec<F>> {
    if !spec.hidden_sizes.is_empty() {
        return Err(Error::contract(
            "delta generator requires an affine spec (no hidden layers)".into(),
        ));
    }
    if w0.len() != spec.output_dim {
        return Err(Error::contract(format!(
            "delta generator: w0 length {} does not match output_dim {}",
            w0.len(),
            spec.output_dim
        )));
    }
    let layout = spec.layout();
    let mut params = vec![F::zero(); layout.total()];
    params[layout.segment("b0")?.range()].copy_from_slice(w0);
    let s = layout.segment(INPUT_SCALE)?;
    params[s.start] = F::from_f64(inv_softplus(spec.input_scale_init));
    Ok(params)
}

// ── forward passes ──────────────────────────────────────────────────

/// Run the main network on a batch.
///
/// `w` rank 1: one weight vector shared by every row of `x`.
/// `w` rank 2 with the same leading extent as `x`: row `i` of `x` is
/// evaluated under weight row `i` (one weight sample per data point).
pub fn main_forward<F: Real>(
    tape: &Tape<F>,
    spec: &MainNetSpec,
    w: &Tensor<F>,
    x: &Tensor<F>,
) -> Result<Tensor<F>> {
    if x.rank() != 2 || x.shape()[1] != spec.input_dim() {
        return Err(Error::contract(format!(
            "main_forward: input shape {:?} does not match input dim {}",
            x.shape(),
            spec.input_dim()
        )));
    }
    match w.rank() {
        1 => {
            if w.numel() != spec.weight_count() {
                return Err(Error::contract(format!(
                    "main_forward: weight length {} does not match weight count {}",
                    w.numel(),
                    spec.weight_count()
                )));
            }
            forward_shared(tape, spec, w, x)
        }
        2 => {
            if w.shape()[0] != x.shape()[0] || w.shape()[1] != spec.weight_count() {
                return Err(Error::contract(format!(
                    "main_forward: batched weights {:?} do not match batch {} × weight count {}",
                    w.shape(),
                    x.shape()[0],
                    spec.weight_count()
                )));
            }
            forward_batched(tape, spec, w, x)
        }
        r => Err(Error::contract(format!(
            "main_forward: weights must be rank 1 or 2, got rank {r}"
        ))),
    }
}

fn forward_shared<F: Real>(
    tape: &Tape<F>,
    spec: &MainNetSpec,
    w: &Tensor<F>,
    x: &Tensor<F>,
) -> Result<Tensor<F>> {
    let layout = spec.layout();
    let n_layers = spec.sizes().len() - 1;
    let mut h = x.clone();
    for i in 0..n_layers {
        let wi = layout.slice_segment(tape, w, &format!("w{i}"))?;
        let bi = layout.slice_segment(tape, w, &format!("b{i}"))?;
        h = tape.add(&tape.matmul(&h, &wi)?, &bi)?;
        if i + 1 < n_layers {
            h = tape.relu(&h)?;
        }
    }
    Ok(h)
}

fn forward_batched<F: Real>(
    tape: &Tape<F>,
    spec: &MainNetSpec,
    w: &Tensor<F>,
    x: &Tensor<F>,
) -> Result<Tensor<F>> {
    let layout = spec.layout();
    let n_layers = spec.sizes().len() - 1;
    let mut h = x.clone();
    for i in 0..n_layers {
        let ws = layout.segment(&format!("w{i}"))?;
        let bs = layout.segment(&format!("b{i}"))?;
        let w_cols = tape.slice_cols(w, ws.start, ws.len())?;
        let b_cols = tape.slice_cols(w, bs.start, bs.len())?;
        h = tape.rowwise_affine(&h, &w_cols, &b_cols)?;
        if i + 1 < n_layers {
            h = tape.relu(&h)?;
        }
    }
    Ok(h)
}

/// Sample a batch of main-network weight vectors from the generator.
///
/// `theta` is the flat Θ tensor (a tape leaf or a slice of one); `eps` is
/// a `(rows, noise_dim)` noise batch. The whole computation — including
/// the softplus input scale — stays on the tape, so the result is
/// differentiable with respect to Θ. Dropout masks the hidden units only,
/// in train mode only, drawing from `stream`.
pub fn sample_weights<F: Real>(
    tape: &Tape<F>,
    spec: &HyperNetSpec,
    theta: &Tensor<F>,
    eps: &Tensor<F>,
    mode: Mode,
    stream: &mut RngStream,
) -> Result<Tensor<F>> {
    if eps.rank() != 2 || eps.shape()[1] != spec.noise_dim {
        return Err(Error::contract(format!(
            "sample_weights: noise shape {:?} does not match noise_dim {}",
            eps.shape(),
            spec.noise_dim
        )));
    }
    if theta.rank() != 1 || theta.numel() != spec.param_count() {
        return Err(Error::contract(format!(
            "sample_weights: theta length {} does not match parameter count {}",
            theta.numel(),
            spec.param_count()
        )));
    }
    let layout = spec.layout();
    let scale = tape.softplus(&layout.slice_segment(tape, theta, INPUT_SCALE)?)?;
    let mut h = tape.mul(eps, &scale)?;
    let n_layers = spec.hidden_sizes.len() + 1;
    for i in 0..n_layers {
        let wi = layout.slice_segment(tape, theta, &format!("w{i}"))?;
        let bi = layout.slice_segment(tape, theta, &format!("b{i}"))?;
        h = tape.add(&tape.matmul(&h, &wi)?, &bi)?;
        if i + 1 < n_layers {
            h = tape.relu(&h)?;
            h = tape.dropout(&h, spec.dropout_keep, mode, stream)?;
        }
    }
    Ok(h)
}

/// Draw `n` raw weight vectors in eval mode on a throwaway tape.
pub fn sample_weight_vectors<F: Real>(
    spec: &HyperNetSpec,
    theta: &[F],
    n: usize,
    stream: &mut RngStream,
) -> Result<Vec<Vec<F>>> {
    let tape: Tape<F> = Tape::new();
    let theta_t = Tensor::constant(theta.to_vec(), &[theta.len()])?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let eps = spec.draw_noise(1, stream)?;
        let w = sample_weights(&tape, spec, &theta_t, &eps, Mode::Eval, stream)?;
        out.push(w.to_vec());
    }
    Ok(out)
}
