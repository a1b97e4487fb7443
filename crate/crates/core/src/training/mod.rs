//! Optimizers, schedules, and the per-iteration updates of every method.
//!
//! One DANN iteration is three updates in a fixed order:
//!
//! 1. `F` and `C` on the source cross entropy,
//! 2. `D` on the discriminator loss with `F`'s output held constant,
//! 3. `F` on `λ ·` the adversarial loss with `D` frozen.
//!
//! Pseudo-labeling methods follow with a forward-only pseudo-label step on
//! the target batch and a weighted update of `T` and `F`. Instance weighting
//! instead trains `T` and `F` on weighted source data.

mod adam;
mod method;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use method::{EvalHead, Method, MethodKind};

use std::io::Write;

use thiserror::Error;

use crate::data::{BatchIterator, DataError, DomainPair, SourceBatch, TargetBatch};
use crate::losses::{self, ConfidenceSource, WeightNorm};
use crate::models::{self, BundleDims, Mlp, ModelError, NetworkBundle, DOMAIN_EPS};
use crate::numeric::{NumericError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite value while updating on {term}")]
    NonFinite { term: &'static str },
    #[error("{term}: {source}")]
    Numeric {
        term: &'static str,
        source: NumericError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("aborted at step {step} (last good step: {last_good:?}): {source}")]
    Aborted {
        step: usize,
        last_good: Option<usize>,
        source: Box<TrainError>,
    },
    #[error("metrics i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn numeric(term: &'static str) -> impl Fn(NumericError) -> TrainError {
    move |source| match source {
        NumericError::NonFinite { .. } => TrainError::NonFinite { term },
        source => TrainError::Numeric { term, source },
    }
}

/// Learning-rate and adversarial-weight schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            alpha: 10.0,
            beta: 0.75,
        }
    }
}

impl Schedule {
    /// With `p = step / total_steps`:
    /// `lr = base_lr / (1 + α p)^β` and `λ = 2 / (1 + e^{-γ p}) - 1`.
    pub fn at(&self, step: usize, total_steps: usize, base_lr: f64) -> (f64, f64) {
        let p = if total_steps == 0 {
            0.0
        } else {
            step.min(total_steps) as f64 / total_steps as f64
        };
        let lr = base_lr / (1.0 + self.alpha * p).powf(self.beta);
        let lambda = 2.0 / (1.0 + (-self.gamma * p).exp()) - 1.0;
        (lr, lambda)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub steps: usize,
    pub lr_main: f64,
    pub lr_target: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub weight_norm: WeightNorm,
    /// Iterations before pseudo-label / instance updates start.
    pub burn_in: usize,
    /// Apply the decaying schedule to the target-classifier learning rate.
    pub target_lr_schedule: bool,
    pub hidden: usize,
    pub feat_dim: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults for the synthetic pairs.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            steps: 4000,
            lr_main: 1e-3,
            lr_target: 5e-4,
            batch_size: 64,
            schedule: Schedule::default(),
            weight_norm: WeightNorm::BatchSize,
            burn_in: 0,
            target_lr_schedule: false,
            hidden: 64,
            feat_dim: 32,
            seed: 0,
        }
    }

    /// 80,000 steps with batches of 128.
    pub fn full_scale(method: Method) -> Self {
        Self {
            steps: 80_000,
            batch_size: 128,
            ..Self::new(method)
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr_main > 0.0) || !(self.lr_target > 0.0) {
            return bad(format!("learning rates must be > 0 ({}, {})", self.lr_main, self.lr_target));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be >= 2, got {}", self.batch_size));
        }
        if self.hidden == 0 || self.feat_dim == 0 {
            return bad("hidden and feature widths must be >= 1".into());
        }
        self.method.validate().map_err(TrainError::Config)
    }

    pub fn dims(&self, pair: &DomainPair) -> BundleDims {
        BundleDims {
            input_dim: pair.input_dim(),
            feat_dim: self.feat_dim,
            hidden: self.hidden,
            num_classes: pair.num_classes(),
        }
    }
}

/// Losses and schedule values of one iteration. Terms that a method does not
/// compute are reported as 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub task_loss: f64,
    pub disc_loss: f64,
    pub adv_loss: f64,
    pub pseudo_loss: f64,
    pub mean_weight: f64,
    pub lambda: f64,
    pub lr: f64,
}

impl StepMetrics {
    pub const CSV_HEADER: &'static str =
        "step,task_loss,disc_loss,adv_loss,pseudo_loss,mean_weight,lambda,lr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.task_loss,
            self.disc_loss,
            self.adv_loss,
            self.pseudo_loss,
            self.mean_weight,
            self.lambda,
            self.lr
        )
    }
}

/// Writes a metrics history as CSV.
pub fn write_metrics_csv<W: Write>(history: &[StepMetrics], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", StepMetrics::CSV_HEADER)?;
    for m in history {
        writeln!(w, "{}", m.csv_row())?;
    }
    Ok(())
}

/// Separate Adam states per update, each over the networks it changes.
#[derive(Clone, Debug)]
pub struct Optimizers {
    /// `F` and `C`, update (1).
    pub task: Adam,
    /// `D`, update (2).
    pub disc: Adam,
    /// `F`, update (3).
    pub adv: Adam,
    /// `F` and `T`, pseudo-label or instance updates.
    pub target: Adam,
}

impl Optimizers {
    pub fn new(bundle: &NetworkBundle) -> Self {
        let f = bundle.features.params();
        Self {
            task: Adam::new(f.iter().copied().chain(bundle.task.params())),
            disc: Adam::new(bundle.domain.params()),
            adv: Adam::new(f.iter().copied()),
            target: Adam::new(f.iter().copied().chain(bundle.target.params())),
        }
    }
}

fn domain_head(tape: &mut Tape, d: &Mlp, feats: Var, params: Vec<Var>) -> Result<Var, NumericError> {
    let out = d.forward_with(tape, feats, params)?;
    let p = tape.sigmoid(out.output);
    Ok(tape.clamp(p, DOMAIN_EPS, 1.0 - DOMAIN_EPS))
}

fn grads_for(grads: &mut crate::numeric::Gradients, vars: &[Var]) -> Vec<Tensor> {
    vars.iter().map(|&v| grads.take(v)).collect()
}

/// Update (1): `F` and `C` on source cross entropy. Returns the loss.
pub fn task_step(
    bundle: &mut NetworkBundle,
    src: &SourceBatch,
    opt: &mut Adam,
    lr: f64,
) -> Result<f64, TrainError> {
    const TERM: &str = "task_loss";
    let mut tape = Tape::new();
    let x = tape.leaf(src.features.clone());
    let f = models::taped::features(&mut tape, &bundle.features, x).map_err(numeric(TERM))?;
    let c = models::taped::classifier(&mut tape, &bundle.task, f.output).map_err(numeric(TERM))?;
    let loss = losses::taped::task_loss(&mut tape, c.output, &src.labels).map_err(numeric(TERM))?;
    let mut g = tape.backward(loss).map_err(numeric(TERM))?;
    let value = tape.value(loss).item().map_err(numeric(TERM))?;
    let mut grads = grads_for(&mut g, &f.params);
    grads.extend(grads_for(&mut g, &c.params));
    let params = bundle
        .features
        .params_mut()
        .into_iter()
        .chain(bundle.task.params_mut())
        .collect();
    opt.step(params, &grads, lr, TERM)?;
    Ok(value)
}

/// Update (2): `D` on the discriminator loss. `F` is evaluated outside the
/// tape, so nothing but `D` can receive a gradient.
pub fn disc_step(
    bundle: &mut NetworkBundle,
    src: &SourceBatch,
    tgt: &TargetBatch,
    opt: &mut Adam,
    lr: f64,
) -> Result<f64, TrainError> {
    const TERM: &str = "disc_loss";
    let fs = models::forward_features(&bundle.features, &src.features).map_err(numeric(TERM))?;
    let ft = models::forward_features(&bundle.features, &tgt.features).map_err(numeric(TERM))?;
    let mut tape = Tape::new();
    let fs = tape.leaf(fs);
    let ft = tape.leaf(ft);
    let dp = bundle.domain.tape_params(&mut tape, None);
    let d_src = domain_head(&mut tape, &bundle.domain, fs, dp.clone()).map_err(numeric(TERM))?;
    let d_tgt = domain_head(&mut tape, &bundle.domain, ft, dp.clone()).map_err(numeric(TERM))?;
    let loss = losses::taped::disc_loss(&mut tape, d_src, d_tgt).map_err(numeric(TERM))?;
    let mut g = tape.backward(loss).map_err(numeric(TERM))?;
    let value = tape.value(loss).item().map_err(numeric(TERM))?;
    let grads = grads_for(&mut g, &dp);
    opt.step(bundle.domain.params_mut(), &grads, lr, TERM)?;
    Ok(value)
}

/// Update (3): `F` on `lambda · feat_adv_loss`; `D`'s parameters are read
/// but never written. Returns the unscaled adversarial loss.
pub fn adversarial_step(
    bundle: &mut NetworkBundle,
    src: &SourceBatch,
    tgt: &TargetBatch,
    opt: &mut Adam,
    lr: f64,
    lambda: f64,
) -> Result<f64, TrainError> {
    const TERM: &str = "feat_adv_loss";
    let mut tape = Tape::new();
    let xs = tape.leaf(src.features.clone());
    let xt = tape.leaf(tgt.features.clone());
    let fp = bundle.features.tape_params(&mut tape, None);
    let fs = bundle
        .features
        .forward_with(&mut tape, xs, fp.clone())
        .map_err(numeric(TERM))?;
    let ft = bundle
        .features
        .forward_with(&mut tape, xt, fp.clone())
        .map_err(numeric(TERM))?;
    let dp = bundle.domain.tape_params(&mut tape, None);
    let d_src = domain_head(&mut tape, &bundle.domain, fs.output, dp.clone()).map_err(numeric(TERM))?;
    let d_tgt = domain_head(&mut tape, &bundle.domain, ft.output, dp).map_err(numeric(TERM))?;
    let loss = losses::taped::feat_adv_loss(&mut tape, d_src, d_tgt).map_err(numeric(TERM))?;
    let scaled = tape.scale(loss, lambda).map_err(numeric(TERM))?;
    let mut g = tape.backward(scaled).map_err(numeric(TERM))?;
    let value = tape.value(loss).item().map_err(numeric(TERM))?;
    let grads = grads_for(&mut g, &fp);
    opt.step(bundle.features.params_mut(), &grads, lr, TERM)?;
    Ok(value)
}

/// Updates (1), (2), and (3) in that order.
pub fn dann_step(
    bundle: &mut NetworkBundle,
    src: &SourceBatch,
    tgt: &TargetBatch,
    opts: &mut Optimizers,
    lr: f64,
    lambda: f64,
) -> Result<StepMetrics, TrainError> {
    let task_loss = task_step(bundle, src, &mut opts.task, lr)?;
    let disc_loss = disc_step(bundle, src, tgt, &mut opts.disc, lr)?;
    let adv_loss = adversarial_step(bundle, src, tgt, &mut opts.adv, lr, lambda)?;
    Ok(StepMetrics {
        task_loss,
        disc_loss,
        adv_loss,
        lambda,
        lr,
        ..StepMetrics::default()
    })
}

/// Output of the forward-only pseudo-label step.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabels {
    /// Argmax of `C`, lowest index on ties.
    pub labels: Vec<usize>,
    /// Per-sample confidence, `batch x 1`.
    pub weights: Tensor,
    /// `D(F(x))` on the batch, `batch x 1`.
    pub d_values: Tensor,
}

/// Labels a target batch with `C` and records `D`'s output. Takes the
/// bundle by shared reference: no parameter can change.
pub fn pseudo_label_step(
    bundle: &NetworkBundle,
    tgt: &TargetBatch,
    source: ConfidenceSource,
) -> Result<PseudoLabels, TrainError> {
    const TERM: &str = "pseudo_label";
    let feats = models::forward_features(&bundle.features, &tgt.features).map_err(numeric(TERM))?;
    let log_probs = models::forward_task(&bundle.task, &feats).map_err(numeric(TERM))?;
    let d_values = models::forward_domain(&bundle.domain, &feats).map_err(numeric(TERM))?;
    Ok(PseudoLabels {
        labels: log_probs.argmax_rows(),
        weights: losses::confidence(source, &log_probs, &d_values),
        d_values,
    })
}

/// Weighted cross entropy of `T` on `(x, labels, weights)`, updating `T`
/// and `F`.
fn weighted_target_update(
    bundle: &mut NetworkBundle,
    x: &Tensor,
    labels: &[usize],
    weights: &Tensor,
    opt: &mut Adam,
    lr: f64,
    norm: WeightNorm,
    term: &'static str,
) -> Result<f64, TrainError> {
    if weights.data().iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(TrainError::Config(format!("{term}: weights must lie in [0, 1]")));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let f = models::taped::features(&mut tape, &bundle.features, xv).map_err(numeric(term))?;
    let t = models::taped::classifier(&mut tape, &bundle.target, f.output).map_err(numeric(term))?;
    let loss = losses::taped::weighted_pseudo_loss(&mut tape, t.output, labels, weights, norm)
        .map_err(numeric(term))?;
    let mut g = tape.backward(loss).map_err(numeric(term))?;
    let value = tape.value(loss).item().map_err(numeric(term))?;
    let mut grads = grads_for(&mut g, &f.params);
    grads.extend(grads_for(&mut g, &t.params));
    let params = bundle
        .features
        .params_mut()
        .into_iter()
        .chain(bundle.target.params_mut())
        .collect();
    opt.step(params, &grads, lr, term)?;
    Ok(value)
}

/// Trains `T` (and the shared `F`) on pseudo-labeled target data.
pub fn target_update_step(
    bundle: &mut NetworkBundle,
    tgt: &TargetBatch,
    pseudo: &PseudoLabels,
    opt: &mut Adam,
    lr: f64,
    norm: WeightNorm,
) -> Result<f64, TrainError> {
    weighted_target_update(
        bundle,
        &tgt.features,
        &pseudo.labels,
        &pseudo.weights,
        opt,
        lr,
        norm,
        "pseudo_loss",
    )
}

/// Per-sample weights for instance weighting on a source batch:
/// `D(F(x))` for [`ConfidenceSource::DomainDisc`], the max softmax
/// probability of `C` for [`ConfidenceSource::TaskSoftmax`].
pub fn instance_weights(
    bundle: &NetworkBundle,
    src: &SourceBatch,
    source: ConfidenceSource,
) -> Result<Tensor, TrainError> {
    const TERM: &str = "instance_weight";
    let feats = models::forward_features(&bundle.features, &src.features).map_err(numeric(TERM))?;
    Ok(match source {
        ConfidenceSource::DomainDisc => losses::instance_weight(
            &models::forward_domain(&bundle.domain, &feats).map_err(numeric(TERM))?,
        ),
        ConfidenceSource::TaskSoftmax => losses::confidence_task(
            &models::forward_task(&bundle.task, &feats).map_err(numeric(TERM))?,
        ),
    })
}

/// Trains `T` (and `F`) on source data with true labels, weighted by
/// [`instance_weights`]. Returns `(loss, mean weight)`.
pub fn instance_update_step(
    bundle: &mut NetworkBundle,
    src: &SourceBatch,
    source: ConfidenceSource,
    opt: &mut Adam,
    lr: f64,
    norm: WeightNorm,
) -> Result<(f64, f64), TrainError> {
    let weights = instance_weights(bundle, src, source)?;
    let loss = weighted_target_update(
        bundle,
        &src.features,
        &src.labels,
        &weights,
        opt,
        lr,
        norm,
        "instance_loss",
    )?;
    Ok((loss, weights.mean()))
}

/// How many times each kind of update ran; used to verify method wiring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateCounts {
    pub task: usize,
    pub disc: usize,
    pub adversarial: usize,
    pub pseudo_label: usize,
    pub target: usize,
    pub instance: usize,
    pub target_batches: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub bundle: NetworkBundle,
    pub history: Vec<StepMetrics>,
    pub counts: UpdateCounts,
}

/// Runs `config.steps` iterations of `config.method` on `pair`.
pub fn train(config: &TrainConfig, pair: &DomainPair) -> Result<TrainOutcome, TrainError> {
    train_with(config, pair, |_, _| {})
}

/// Like [`train`], calling `observer(completed_steps, &bundle)` after every
/// iteration.
pub fn train_with<O>(
    config: &TrainConfig,
    pair: &DomainPair,
    mut observer: O,
) -> Result<TrainOutcome, TrainError>
where
    O: FnMut(usize, &NetworkBundle),
{
    config.validate()?;
    let mut bundle = NetworkBundle::init(config.dims(pair), config.seed)?;
    let mut opts = Optimizers::new(&bundle);
    let mut batches = BatchIterator::new(pair, config.batch_size, config.seed)?;
    let mut history = Vec::with_capacity(config.steps);
    let mut counts = UpdateCounts::default();
    let method = config.method;

    for step in 0..config.steps {
        let result = iteration(
            config,
            method,
            step,
            pair,
            &mut bundle,
            &mut opts,
            &mut batches,
            &mut counts,
        );
        match result {
            Ok(m) => history.push(m),
            Err(e) => {
                return Err(TrainError::Aborted {
                    step,
                    last_good: step.checked_sub(1),
                    source: Box::new(e),
                })
            }
        }
        observer(step + 1, &bundle);
    }
    Ok(TrainOutcome {
        bundle,
        history,
        counts,
    })
}

#[allow(clippy::too_many_arguments)]
fn iteration(
    config: &TrainConfig,
    method: Method,
    step: usize,
    pair: &DomainPair,
    bundle: &mut NetworkBundle,
    opts: &mut Optimizers,
    batches: &mut BatchIterator,
    counts: &mut UpdateCounts,
) -> Result<StepMetrics, TrainError> {
    let (lr, lambda) = config.schedule.at(step, config.steps, config.lr_main);
    let lr_target = if config.target_lr_schedule {
        config.schedule.at(step, config.steps, config.lr_target).0
    } else {
        config.lr_target
    };
    let src = batches.next_source(pair);

    if method.kind == MethodKind::NoAdapt {
        let task_loss = task_step(bundle, &src, &mut opts.task, lr)?;
        counts.task += 1;
        return Ok(StepMetrics {
            step,
            task_loss,
            lr,
            ..StepMetrics::default()
        });
    }

    let tgt = batches.next_target(pair);
    counts.target_batches += 1;
    let mut metrics = if method.kind == MethodKind::PseudoNoAdv {
        let task_loss = task_step(bundle, &src, &mut opts.task, lr)?;
        let disc_loss = disc_step(bundle, &src, &tgt, &mut opts.disc, lr)?;
        counts.task += 1;
        counts.disc += 1;
        StepMetrics {
            task_loss,
            disc_loss,
            lr,
            ..StepMetrics::default()
        }
    } else {
        let m = dann_step(bundle, &src, &tgt, opts, lr, lambda)?;
        counts.task += 1;
        counts.disc += 1;
        counts.adversarial += 1;
        m
    };
    metrics.step = step;

    if step < config.burn_in {
        return Ok(metrics);
    }
    match (method.kind, method.confidence) {
        (MethodKind::Instance, Some(source)) => {
            let (loss, mean_w) = instance_update_step(
                bundle,
                &src,
                source,
                &mut opts.target,
                lr_target,
                config.weight_norm,
            )?;
            counts.instance += 1;
            metrics.pseudo_loss = loss;
            metrics.mean_weight = mean_w;
        }
        (MethodKind::PseudoNoAdv | MethodKind::Pseudo, Some(source)) => {
            let pseudo = pseudo_label_step(bundle, &tgt, source)?;
            counts.pseudo_label += 1;
            let loss = target_update_step(
                bundle,
                &tgt,
                &pseudo,
                &mut opts.target,
                lr_target,
                config.weight_norm,
            )?;
            counts.target += 1;
            metrics.pseudo_loss = loss;
            metrics.mean_weight = pseudo.weights.mean();
        }
        _ => {}
    }
    Ok(metrics)
}
