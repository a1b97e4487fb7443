// Finite-difference check of every loss, differentiated with respect to
// the logits a freshly initialized bundle produces on a random batch.

use std::error::Error;

use pseudo_dann::losses::{self, WeightNorm};
use pseudo_dann::models::{BundleDims, NetworkBundle, DOMAIN_EPS};
use pseudo_dann::numeric::{grad_check_report, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = BundleDims {
        input_dim: 3,
        feat_dim: 6,
        hidden: 10,
        num_classes: 4,
    };
    let bundle = NetworkBundle::init(dims, 7)?;
    let n = 12;
    let mut batch = || Tensor::new(n, 3, (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let (xs, xt) = (batch()?, batch()?);
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let weights = Tensor::new(n, 1, (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect())?;

    let fs = bundle.features.forward(&xs)?;
    let class_logits = bundle.task.forward(&fs)?;
    let d_tgt = bundle.domain.forward(&bundle.features.forward(&xt)?)?;
    let d_src = bundle.domain.forward(&fs)?;

    let domain = |t: &mut Tape, z: Var| {
        let p = t.sigmoid(z);
        t.clamp(p, DOMAIN_EPS, 1.0 - DOMAIN_EPS)
    };
    let checks = [
        (
            "task_loss",
            grad_check_report(
                |t, z| {
                    let lp = t.log_softmax(z);
                    losses::taped::task_loss(t, lp, &labels)
                },
                &class_logits,
                1e-5,
            )?,
        ),
        (
            "weighted_pseudo_loss",
            grad_check_report(
                |t, z| {
                    let lp = t.log_softmax(z);
                    losses::taped::weighted_pseudo_loss(t, lp, &labels, &weights, WeightNorm::BatchSize)
                },
                &class_logits,
                1e-5,
            )?,
        ),
        (
            "disc_loss",
            grad_check_report(
                |t, z| {
                    let tgt = t.leaf(d_tgt.clone());
                    let (ds, dt) = (domain(t, z), domain(t, tgt));
                    losses::taped::disc_loss(t, ds, dt)
                },
                &d_src,
                1e-5,
            )?,
        ),
        (
            "feat_adv_loss",
            grad_check_report(
                |t, z| {
                    let tgt = t.leaf(d_tgt.clone());
                    let (ds, dt) = (domain(t, z), domain(t, tgt));
                    losses::taped::feat_adv_loss(t, ds, dt)
                },
                &d_src,
                1e-5,
            )?,
        ),
    ];
    for (name, r) in checks {
        println!(
            "{name:>22}: relative error {:.2e}, worst entry {:.2e}",
            r.norm_rel, r.max_entry_rel
        );
        if r.norm_rel >= 1e-4 {
            return Err(format!("{name} gradient disagrees with finite differences").into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
