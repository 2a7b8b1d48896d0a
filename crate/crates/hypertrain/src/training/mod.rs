//! The stochastic training objective and the two trainers.
//!
//! One training step: draw noise, generate weight sample(s), run the main
//! network on the (noise-injected) batch, take the batch-mean loss, and
//! backpropagate through the whole composition into the generator
//! parameters Θ and the input-noise scale ρ. The baseline trainer runs
//! the identical loop with a point weight vector in place of Θ.
//!
//! All trainable state is one flat vector `[Θ | ρ]` (or `[w | ρ]`), so the
//! optimizer and the finite-difference oracle see a plain slice.

mod gradcheck;
mod optimizer;
mod record;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, Tape, Tensor};
use crate::bench::diffusion::weight_diffusion_detail;
use crate::bench::metrics::{classification_error, rmse};
use crate::data::{
    default_batch_size, BatchIter, Prepared, PreparedTargets, TaskKind,
};
use crate::error::{Error, Result};
use crate::models::{
    init_hyper_params, init_main_params, main_forward, sample_weights, HyperNetSpec, MainNetSpec,
    OutputHead,
};
use crate::real::{inv_softplus, Real};
use crate::rng::{labels, RngStream};

pub use gradcheck::{gradcheck_suite, GradcheckReport};
pub use optimizer::{optimizer_step, OptimizerKind, OptimizerState};
pub use record::{params_digest, Method, RunRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    CrossEntropy,
}

/// One weight sample per data point, or one shared by the minibatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    PerExample,
    PerBatch,
}

/// Every knob of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` applies the protocol rule from [`default_batch_size`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub sample_mode: SampleMode,
    /// Monte Carlo samples S for prediction averaging.
    pub predict_samples: usize,
    pub seed: u64,
    /// Initial input-noise scale softplus(ρ).
    pub input_noise_init: f64,
    pub strict: bool,
    /// Stop after this many epochs without test-metric improvement.
    /// Off for reproduction runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: None,
            optimizer: OptimizerKind::default(),
            loss: LossKind::SquaredError,
            sample_mode: SampleMode::PerExample,
            predict_samples: 100,
            seed: 0,
            input_noise_init: 0.5,
            strict: false,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::contract(format!(
                "epochs must be ≥ 1, got {}",
                self.epochs
            )));
        }
        if let Some(b) = self.batch_size {
            if b < 1 {
                return Err(Error::contract("batch size must be ≥ 1".into()));
            }
        }
        if self.predict_samples < 1 {
            return Err(Error::contract(format!(
                "predict_samples must be ≥ 1, got {}",
                self.predict_samples
            )));
        }
        if !(self.input_noise_init > 0.0) {
            return Err(Error::contract(format!(
                "input_noise_init must be positive, got {}",
                self.input_noise_init
            )));
        }
        self.optimizer.validate()
    }
}

/// Targets for one minibatch.
pub enum BatchTargets<F> {
    /// `(batch, out_dim)` constant tensor.
    Values(Tensor<F>),
    Labels(Vec<usize>),
}

/// The exogenous randomness of one objective evaluation. Rebuilding the
/// same `Draws` (same stream keys) makes the objective a deterministic
/// function of the parameters, which is what the gradient oracle needs.
pub struct Draws<F> {
    pub eps: Tensor<F>,
    pub eta: Option<Tensor<F>>,
    pub dropout: RngStream,
    pub mode: Mode,
}

/// Draw ε (per-example or per-batch) and train-mode input noise η.
pub fn draw_for_batch<F: Real>(
    hyper: &HyperNetSpec,
    sample_mode: SampleMode,
    batch: usize,
    d: usize,
    mode: Mode,
    eps_stream: &mut RngStream,
    noise_stream: &mut RngStream,
    dropout_stream: RngStream,
) -> Result<Draws<F>> {
    let rows = match sample_mode {
        SampleMode::PerExample => batch,
        SampleMode::PerBatch => 1,
    };
    let eps = hyper.draw_noise(rows, eps_stream)?;
    let eta = if mode == Mode::Train {
        let mut v = vec![F::zero(); batch * d];
        noise_stream.fill_normal(&mut v);
        Some(Tensor::constant(v, &[batch, d])?)
    } else {
        None
    };
    Ok(Draws {
        eps,
        eta,
        dropout: dropout_stream,
        mode,
    })
}

/// `x̃ = x + softplus(ρ)·η`. The softplus scale stays on the tape so ρ is
/// tuned by the same backward pass as everything else.
pub fn inject_input_noise<F: Real>(
    tape: &Tape<F>,
    x: &Tensor<F>,
    rho: &Tensor<F>,
    eta: &Tensor<F>,
) -> Result<Tensor<F>> {
    let sigma = tape.softplus(rho)?;
    let scaled = tape.mul(eta, &sigma)?;
    tape.add(x, &scaled)
}

fn check_loss_head(head: OutputHead, loss: LossKind) -> Result<()> {
    let ok = matches!(
        (head, loss),
        (OutputHead::Regression, LossKind::SquaredError)
            | (OutputHead::Logits, LossKind::CrossEntropy)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "loss kind {loss:?} incompatible with output head {head:?}"
        )))
    }
}

fn batch_loss<F: Real>(
    tape: &Tape<F>,
    loss: LossKind,
    pred: &Tensor<F>,
    y: &BatchTargets<F>,
) -> Result<Tensor<F>> {
    match (loss, y) {
        (LossKind::SquaredError, BatchTargets::Values(t)) => tape.mse_loss(pred, t),
        (LossKind::CrossEntropy, BatchTargets::Labels(l)) => tape.cross_entropy_loss(pred, l),
        _ => Err(Error::contract(
            "loss kind incompatible with batch targets".into(),
        )),
    }
}

/// The stochastic objective: mean over the batch of the per-example loss
/// under sampled weights and noise-injected inputs.
#[allow(clippy::too_many_arguments)]
pub fn objective<F: Real>(
    tape: &Tape<F>,
    main: &MainNetSpec,
    hyper: &HyperNetSpec,
    loss: LossKind,
    theta: &Tensor<F>,
    rho: &Tensor<F>,
    x: &Tensor<F>,
    y: &BatchTargets<F>,
    draws: &mut Draws<F>,
) -> Result<Tensor<F>> {
    check_loss_head(main.head, loss)?;
    let x_in = match &draws.eta {
        Some(eta) => inject_input_noise(tape, x, rho, eta)?,
        None => x.clone(),
    };
    let w = sample_weights(tape, hyper, theta, &draws.eps, draws.mode, &mut draws.dropout)?;
    let w = if draws.eps.shape()[0] == 1 {
        tape.reshape(&w, &[hyper.output_dim])?
    } else {
        w
    };
    let pred = main_forward(tape, main, &w, &x_in)?;
    batch_loss(tape, loss, &pred, y)
}

/// Same objective with a point weight vector instead of a generator.
#[allow(clippy::too_many_arguments)]
pub fn baseline_objective<F: Real>(
    tape: &Tape<F>,
    main: &MainNetSpec,
    loss: LossKind,
    w: &Tensor<F>,
    rho: &Tensor<F>,
    x: &Tensor<F>,
    y: &BatchTargets<F>,
    eta: Option<&Tensor<F>>,
) -> Result<Tensor<F>> {
    check_loss_head(main.head, loss)?;
    let x_in = match eta {
        Some(eta) => inject_input_noise(tape, x, rho, eta)?,
        None => x.clone(),
    };
    let pred = main_forward(tape, main, w, &x_in)?;
    batch_loss(tape, loss, &pred, y)
}

// ── prediction ──────────────────────────────────────────────────────

/// Monte Carlo prediction: average main-network outputs over `s` weight
/// samples drawn in eval mode (no dropout, no input noise).
pub fn predict<F: Real>(
    main: &MainNetSpec,
    hyper: &HyperNetSpec,
    theta: &[F],
    x: &[F],
    n: usize,
    s: usize,
    stream: &mut RngStream,
) -> Result<Vec<F>> {
    if s < 1 {
        return Err(Error::contract(format!(
            "prediction sample count S must be ≥ 1, got {s}"
        )));
    }
    let tape: Tape<F> = Tape::new();
    let theta_t = Tensor::constant(theta.to_vec(), &[theta.len()])?;
    let x_t = Tensor::constant(x.to_vec(), &[n, main.input_dim()])?;
    let mut acc = vec![F::zero(); n * main.output_dim()];
    for _ in 0..s {
        let eps = hyper.draw_noise(1, stream)?;
        let w = sample_weights(&tape, hyper, &theta_t, &eps, Mode::Eval, stream)?;
        let w = tape.reshape(&w, &[hyper.output_dim])?;
        let y = main_forward(&tape, main, &w, &x_t)?;
        for (a, &v) in acc.iter_mut().zip(y.data()) {
            *a += v;
        }
    }
    let inv = F::from_f64(1.0 / s as f64);
    for a in &mut acc {
        *a *= inv;
    }
    Ok(acc)
}

/// Classification prediction: logits are averaged over samples, then each
/// row is argmaxed.
pub fn predict_labels<F: Real>(
    main: &MainNetSpec,
    hyper: &HyperNetSpec,
    theta: &[F],
    x: &[F],
    n: usize,
    s: usize,
    stream: &mut RngStream,
) -> Result<Vec<usize>> {
    let logits = predict(main, hyper, theta, x, n, s, stream)?;
    Ok(argmax_rows(&logits, main.output_dim()))
}

/// One deterministic forward pass of the main network under fixed weights.
pub fn plain_forward<F: Real>(
    main: &MainNetSpec,
    w: &[F],
    x: &[F],
    n: usize,
) -> Result<Vec<F>> {
    let tape: Tape<F> = Tape::new();
    let w_t = Tensor::constant(w.to_vec(), &[w.len()])?;
    let x_t = Tensor::constant(x.to_vec(), &[n, main.input_dim()])?;
    Ok(main_forward(&tape, main, &w_t, &x_t)?.to_vec())
}

/// Row-wise argmax; ties resolve to the first maximum.
pub fn argmax_rows<F: Real>(values: &[F], cols: usize) -> Vec<usize> {
    values
        .chunks_exact(cols)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

// ── training loops ──────────────────────────────────────────────────

enum ModelKind<'a> {
    Hyper(&'a HyperNetSpec),
    Baseline,
}

fn validate_setup<F: Real>(
    data: &Prepared<F>,
    main: &MainNetSpec,
    hyper: Option<&HyperNetSpec>,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if main.input_dim() != data.d {
        return Err(Error::contract(format!(
            "main network input dim {} does not match dataset features {}",
            main.input_dim(),
            data.d
        )));
    }
    if main.output_dim() != data.out_dim {
        return Err(Error::contract(format!(
            "main network output dim {} does not match dataset targets {}",
            main.output_dim(),
            data.out_dim
        )));
    }
    check_loss_head(main.head, cfg.loss)?;
    let task_ok = matches!(
        (data.task, cfg.loss),
        (TaskKind::Regression, LossKind::SquaredError)
            | (TaskKind::Classification, LossKind::CrossEntropy)
    );
    if !task_ok {
        return Err(Error::contract(format!(
            "loss kind {:?} incompatible with task {:?}",
            cfg.loss, data.task
        )));
    }
    if let Some(h) = hyper {
        h.validate()?;
        if h.output_dim != main.weight_count() {
            return Err(Error::contract(format!(
                "generator output dim {} does not match main weight count {}",
                h.output_dim,
                main.weight_count()
            )));
        }
    }
    Ok(())
}

/// Train the generator on prepared (already normalized and split) data.
pub fn train<F: Real>(
    data: &Prepared<F>,
    main: &MainNetSpec,
    hyper: &HyperNetSpec,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    validate_setup(data, main, Some(hyper), cfg)?;
    let root = RngStream::seed_from(cfg.seed);
    let theta = init_hyper_params(hyper, &mut root.child(labels::INIT))?;
    train_from(data, main, hyper, cfg, theta)
}

/// Train the generator starting from explicit Θ values.
pub fn train_from<F: Real>(
    data: &Prepared<F>,
    main: &MainNetSpec,
    hyper: &HyperNetSpec,
    cfg: &TrainConfig,
    theta: Vec<F>,
) -> Result<RunRecord> {
    validate_setup(data, main, Some(hyper), cfg)?;
    if theta.len() != hyper.param_count() {
        return Err(Error::contract(format!(
            "theta length {} does not match generator parameter count {}",
            theta.len(),
            hyper.param_count()
        )));
    }
    let mut params = theta;
    params.push(F::from_f64(inv_softplus(cfg.input_noise_init)));
    run_engine(data, main, ModelKind::Hyper(hyper), cfg, params)
}

/// Train the plain point-weight baseline with the same loop, including the
/// learned input-noise scale.
pub fn train_baseline<F: Real>(
    data: &Prepared<F>,
    main: &MainNetSpec,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    validate_setup(data, main, None, cfg)?;
    let root = RngStream::seed_from(cfg.seed);
    let w0 = init_main_params(main, &mut root.child(labels::INIT))?;
    train_baseline_from(data, main, cfg, w0)
}

/// Baseline trainer starting from explicit point weights.
pub fn train_baseline_from<F: Real>(
    data: &Prepared<F>,
    main: &MainNetSpec,
    cfg: &TrainConfig,
    w0: Vec<F>,
) -> Result<RunRecord> {
    validate_setup(data, main, None, cfg)?;
    if w0.len() != main.weight_count() {
        return Err(Error::contract(format!(
            "weight vector length {} does not match weight count {}",
            w0.len(),
            main.weight_count()
        )));
    }
    let mut params = w0;
    params.push(F::from_f64(inv_softplus(cfg.input_noise_init)));
    run_engine(data, main, ModelKind::Baseline, cfg, params)
}

fn with_step_context(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

fn run_engine<F: Real>(
    data: &Prepared<F>,
    main: &MainNetSpec,
    model: ModelKind<'_>,
    cfg: &TrainConfig,
    mut params: Vec<F>,
) -> Result<RunRecord> {
    let theta_len = params.len() - 1; // ρ is the final coordinate
    let batch_size = cfg
        .batch_size
        .unwrap_or_else(|| default_batch_size(data.n_train, data.task));
    let mut opt_state = OptimizerState::new(&cfg.optimizer, params.len());
    let root = RngStream::seed_from(cfg.seed);
    let t0 = Instant::now();

    let mut test_metric = Vec::with_capacity(cfg.epochs);
    let mut weight_std = Vec::with_capacity(cfg.epochs);
    let mut weight_std_spread = Vec::with_capacity(cfg.epochs);
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut best_metric = f64::INFINITY;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.epochs {
        let es = root.child(labels::EPOCH).child(epoch as u64);
        let mut shuffle_s = es.child(labels::SHUFFLE);
        let mut noise_s = es.child(labels::INPUT_NOISE);
        let mut eps_s = es.child(labels::WEIGHT_NOISE);
        let drop_root = es.child(labels::DROPOUT);
        let eval_s = es.child(labels::EVAL);

        let mut loss_sum = 0.0f64;
        for (bi, batch) in BatchIter::new(data.n_train, batch_size, &mut shuffle_s).enumerate() {
            let b = batch.len();
            let x = Tensor::constant(
                crate::data::gather_rows(&data.train_x, data.d, &batch),
                &[b, data.d],
            )?;
            let y = gather_batch_targets(data, &batch)?;
            let tape: Tape<F> = Tape::with_strict(cfg.strict);
            let leaf = tape.leaf(params.clone(), &[params.len()])?;
            let rho = tape.slice(&leaf, theta_len, 1)?;
            let loss_t = match model {
                ModelKind::Hyper(hyper) => {
                    let theta = tape.slice(&leaf, 0, theta_len)?;
                    let mut draws = draw_for_batch(
                        hyper,
                        cfg.sample_mode,
                        b,
                        data.d,
                        Mode::Train,
                        &mut eps_s,
                        &mut noise_s,
                        drop_root.child(bi as u64),
                    )?;
                    objective(
                        &tape, main, hyper, cfg.loss, &theta, &rho, &x, &y, &mut draws,
                    )
                }
                ModelKind::Baseline => {
                    let w = tape.slice(&leaf, 0, theta_len)?;
                    let mut eta_buf = vec![F::zero(); b * data.d];
                    noise_s.fill_normal(&mut eta_buf);
                    let eta = Tensor::constant(eta_buf, &[b, data.d])?;
                    baseline_objective(&tape, main, cfg.loss, &w, &rho, &x, &y, Some(&eta))
                }
            }
            .map_err(|e| with_step_context(e, epoch, bi))?;
            loss_sum += loss_t.item()?.to_f64() * b as f64;
            let mut grads = tape.backward(&loss_t)?;
            let g = grads.take(&leaf);
            optimizer_step(&mut params, &g, &mut opt_state, &cfg.optimizer, cfg.strict)
                .map_err(|e| with_step_context(e, epoch, bi))?;
        }
        train_loss.push(loss_sum / data.n_train as f64);

        let (metric, diffusion) = evaluate_epoch(data, main, &model, &params[..theta_len], cfg, &eval_s)?;
        test_metric.push(metric);
        weight_std.push(diffusion.0);
        weight_std_spread.push(diffusion.1);

        if let Some(patience) = cfg.early_stop_patience {
            if metric < best_metric {
                best_metric = metric;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= patience {
                    break;
                }
            }
        }
    }

    let method = match model {
        ModelKind::Hyper(_) => Method::Hyper,
        ModelKind::Baseline => Method::Baseline,
    };
    let config_snapshot = toml::to_string(cfg)
        .map_err(|e| Error::config(format!("cannot snapshot config: {e}")))?;
    Ok(RunRecord {
        dataset: data.name.clone(),
        task: data.task,
        method,
        seed: cfg.seed,
        epochs: test_metric.len(),
        sample_mode: cfg.sample_mode,
        test_metric,
        weight_std,
        weight_std_spread,
        train_loss,
        params_digest: params_digest(&params),
        config_snapshot,
        wall_time_secs: t0.elapsed().as_secs_f64(),
    })
}

fn gather_batch_targets<F: Real>(data: &Prepared<F>, rows: &[usize]) -> Result<BatchTargets<F>> {
    match &data.train_y {
        PreparedTargets::Values(v) => Ok(BatchTargets::Values(Tensor::constant(
            crate::data::gather_rows(v, data.out_dim, rows),
            &[rows.len(), data.out_dim],
        )?)),
        PreparedTargets::Labels(l) => {
            Ok(BatchTargets::Labels(rows.iter().map(|&r| l[r]).collect()))
        }
    }
}

/// Per-epoch test metric (original-scale RMSE or error percent) and the
/// weight-dispersion statistic `(mean_std, spread)` from 10 samples.
fn evaluate_epoch<F: Real>(
    data: &Prepared<F>,
    main: &MainNetSpec,
    model: &ModelKind<'_>,
    theta: &[F],
    cfg: &TrainConfig,
    eval_stream: &RngStream,
) -> Result<(f64, (f64, f64))> {
    let mut predict_s = eval_stream.child(1);
    let mut diffusion_s = eval_stream.child(2);
    let metric = match (&data.test_y, model) {
        (PreparedTargets::Values(truth), ModelKind::Hyper(hyper)) => {
            let preds = predict(
                main,
                hyper,
                theta,
                &data.test_x,
                data.n_test,
                cfg.predict_samples,
                &mut predict_s,
            )?;
            rmse(&preds, truth, data.out_dim, data.stats.as_ref())?
        }
        (PreparedTargets::Values(truth), ModelKind::Baseline) => {
            let preds = plain_forward(main, theta, &data.test_x, data.n_test)?;
            rmse(&preds, truth, data.out_dim, data.stats.as_ref())?
        }
        (PreparedTargets::Labels(truth), ModelKind::Hyper(hyper)) => {
            let labels = predict_labels(
                main,
                hyper,
                theta,
                &data.test_x,
                data.n_test,
                cfg.predict_samples,
                &mut predict_s,
            )?;
            classification_error(&labels, truth)?
        }
        (PreparedTargets::Labels(truth), ModelKind::Baseline) => {
            let logits = plain_forward(main, theta, &data.test_x, data.n_test)?;
            let labels = argmax_rows(&logits, data.out_dim);
            classification_error(&labels, truth)?
        }
    };
    let diffusion = match model {
        ModelKind::Hyper(hyper) => {
            let stat = weight_diffusion_detail(hyper, theta, 10, &mut diffusion_s)?;
            (stat.mean_std, stat.spread)
        }
        ModelKind::Baseline => (0.0, 0.0),
    };
    Ok((metric, diffusion))
}

#[cfg(test)]
mod tests;
