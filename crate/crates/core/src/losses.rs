//! Loss and confidence formulas.
//!
//! The domain classifier outputs the probability that a representation came
//! from the *target* domain (0 = source, 1 = target). Both adversarial
//! objectives are written in that convention:
//!
//! * discriminator: `-mean log(1 - D(F(x_s))) - mean log D(F(x_t))`
//! * feature extractor: the same expression with the domains swapped.
//!
//! Inputs to the logs are already clamped by
//! [`forward_domain`](crate::models::forward_domain).

use crate::numeric::{NumericError, Tape, Tensor, Var};

/// Where the per-sample pseudo-label confidence comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConfidenceSource {
    /// Maximum softmax probability of the task classifier.
    TaskSoftmax,
    /// `1 - D(F(x))`: how source-like the discriminator finds the sample.
    DomainDisc,
}

impl ConfidenceSource {
    pub fn tag(self) -> &'static str {
        match self {
            ConfidenceSource::TaskSoftmax => "task",
            ConfidenceSource::DomainDisc => "domain",
        }
    }
}

/// Denominator of the weighted pseudo-label loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum WeightNorm {
    /// Divide by the batch size; weights used raw.
    #[default]
    BatchSize,
    /// Divide by the sum of weights in the batch.
    WeightSum,
}

/// Mean negative log-likelihood of the true class.
pub fn task_loss(log_probs: &Tensor, labels: &[usize]) -> Result<f64, NumericError> {
    eval_scalar(|t| {
        let lp = t.leaf(log_probs.clone());
        taped::task_loss(t, lp, labels)
    })
}

pub fn disc_loss(d_src: &Tensor, d_tgt: &Tensor) -> Result<f64, NumericError> {
    eval_scalar(|t| {
        let s = t.leaf(d_src.clone());
        let g = t.leaf(d_tgt.clone());
        taped::disc_loss(t, s, g)
    })
}

pub fn feat_adv_loss(d_src: &Tensor, d_tgt: &Tensor) -> Result<f64, NumericError> {
    disc_loss(d_tgt, d_src)
}

/// `w = 1 - d` on target samples.
pub fn confidence_domain(d_tgt: &Tensor) -> Tensor {
    d_tgt
        .map("confidence_domain", |d| 1.0 - d)
        .expect("1 - finite is finite")
}

/// `w = exp(max_c log_probs[i, c])`, one row per sample.
pub fn confidence_task(log_probs: &Tensor) -> Tensor {
    let data = (0..log_probs.rows())
        .map(|r| {
            log_probs
                .row(r)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
                .exp()
        })
        .collect();
    Tensor::new(log_probs.rows(), 1, data).expect("probabilities are finite")
}

/// `w = d` on source samples: target-looking source samples count more.
pub fn instance_weight(d_src: &Tensor) -> Tensor {
    d_src.clone()
}

/// Weights for `source`, computed from whichever head it names.
pub fn confidence(source: ConfidenceSource, log_probs: &Tensor, d_tgt: &Tensor) -> Tensor {
    match source {
        ConfidenceSource::TaskSoftmax => confidence_task(log_probs),
        ConfidenceSource::DomainDisc => confidence_domain(d_tgt),
    }
}

/// `(1/n) Σ wᵢ · (-log_probs[i, yᵢ])` (or divided by `Σ w` under
/// [`WeightNorm::WeightSum`]).
pub fn weighted_pseudo_loss(
    log_probs: &Tensor,
    pseudo_labels: &[usize],
    weights: &Tensor,
    norm: WeightNorm,
) -> Result<f64, NumericError> {
    eval_scalar(|t| {
        let lp = t.leaf(log_probs.clone());
        taped::weighted_pseudo_loss(t, lp, pseudo_labels, weights, norm)
    })
}

fn eval_scalar(
    f: impl FnOnce(&mut Tape) -> Result<Var, NumericError>,
) -> Result<f64, NumericError> {
    let mut tape = Tape::new();
    let out = f(&mut tape)?;
    tape.value(out).item()
}

/// The same losses recorded on a tape.
pub mod taped {
    use super::*;

    pub fn task_loss(tape: &mut Tape, log_probs: Var, labels: &[usize]) -> Result<Var, NumericError> {
        let n = tape.value(log_probs).rows();
        tape.weighted_nll(log_probs, labels, &vec![1.0; n], n.max(1) as f64)
    }

    pub fn disc_loss(tape: &mut Tape, d_src: Var, d_tgt: Var) -> Result<Var, NumericError> {
        let src_as_source = tape.one_minus(d_src);
        let src_term = tape.log(src_as_source)?;
        let src_term = tape.mean(src_term);
        let tgt_term = tape.log(d_tgt)?;
        let tgt_term = tape.mean(tgt_term);
        let total = tape.add(src_term, tgt_term)?;
        tape.scale(total, -1.0)
    }

    pub fn feat_adv_loss(tape: &mut Tape, d_src: Var, d_tgt: Var) -> Result<Var, NumericError> {
        disc_loss(tape, d_tgt, d_src)
    }

    /// Weights are constants: no gradient flows into whatever produced them.
    pub fn weighted_pseudo_loss(
        tape: &mut Tape,
        log_probs: Var,
        pseudo_labels: &[usize],
        weights: &Tensor,
        norm: WeightNorm,
    ) -> Result<Var, NumericError> {
        let n = tape.value(log_probs).rows();
        if weights.shape() != (n, 1) {
            return Err(NumericError::Shape {
                op: "weighted_pseudo_loss",
                left: tape.value(log_probs).shape(),
                right: weights.shape(),
            });
        }
        let denom = match norm {
            WeightNorm::BatchSize => n.max(1) as f64,
            WeightNorm::WeightSum => {
                let s = weights.sum();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            }
        };
        tape.weighted_nll(log_probs, pseudo_labels, weights.data(), denom)
    }
}
