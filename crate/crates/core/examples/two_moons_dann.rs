// Source-only training against DANN on two moons with the target rotated
// by 30 degrees.

use std::error::Error;

use pseudo_dann::data::gen_moons_pair;
use pseudo_dann::harness::evaluate;
use pseudo_dann::training::{train, EvalHead, Method, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let pair = gen_moons_pair(1000, 2000, 0.1, 30.0, 0)?;
    println!(
        "source {} / target train {} / holdout {} / test {}",
        pair.source.len(),
        pair.target_train.len(),
        pair.target_holdout.len(),
        pair.target_test.len()
    );
    for method in [Method::NO_ADAPT, Method::DANN] {
        let config = TrainConfig {
            steps: 1500,
            ..TrainConfig::new(method)
        };
        let out = train(&config, &pair)?;
        let last = out.history.last().expect("steps > 0");
        println!(
            "{:<14} source acc {:.3}  target acc {:.3}  (final task loss {:.4}, disc loss {:.4}, lambda {:.3})",
            method.label(),
            evaluate(&out.bundle, &pair.source, EvalHead::Task)?,
            evaluate(&out.bundle, &pair.target_test, EvalHead::Task)?,
            last.task_loss,
            last.disc_loss,
            last.lambda
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
