// Instance weighting: the target classifier learns from source samples
// weighted by how target-like the discriminator finds them.

use std::error::Error;

use pseudo_dann::data::{gen_moons_pair, BatchIterator};
use pseudo_dann::harness::evaluate;
use pseudo_dann::losses::ConfidenceSource;
use pseudo_dann::training::{instance_weights, train, EvalHead, Method, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let pair = gen_moons_pair(1000, 2000, 0.1, 30.0, 2)?;
    for source in [ConfidenceSource::TaskSoftmax, ConfidenceSource::DomainDisc] {
        let method = Method::instance(source);
        let out = train(
            &TrainConfig {
                steps: 1000,
                ..TrainConfig::new(method)
            },
            &pair,
        )?;
        let mut batches = BatchIterator::new(&pair, 256, 0)?;
        let w = instance_weights(&out.bundle, &batches.next_source(&pair), source)?;
        let (lo, hi) = w
            .data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        println!(
            "{:<18} T on target {:.3}, C on target {:.3}; source weights mean {:.3} in [{lo:.3}, {hi:.3}]",
            method.label(),
            evaluate(&out.bundle, &pair.target_test, EvalHead::Target)?,
            evaluate(&out.bundle, &pair.target_test, EvalHead::Task)?,
            w.mean()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
