// Pseudo-labeling with discriminator confidence: one iteration by hand,
// then a full run with holdout model selection.

use std::error::Error;

use pseudo_dann::data::{gen_moons_pair, BatchIterator};
use pseudo_dann::harness::run_cell;
use pseudo_dann::losses::{ConfidenceSource, WeightNorm};
use pseudo_dann::models::NetworkBundle;
use pseudo_dann::training::{
    dann_step, pseudo_label_step, target_update_step, Method, Optimizers, TrainConfig,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let pair = gen_moons_pair(1000, 2000, 0.1, 40.0, 1)?;
    let method = Method::pseudo(ConfidenceSource::DomainDisc);
    let config = TrainConfig {
        steps: 1500,
        ..TrainConfig::new(method)
    };

    let mut bundle = NetworkBundle::init(config.dims(&pair), 1)?;
    let mut opts = Optimizers::new(&bundle);
    let mut batches = BatchIterator::new(&pair, 8, 1)?;
    let (src, tgt) = batches.next_batches(&pair);
    let m = dann_step(&mut bundle, &src, &tgt, &mut opts, 1e-3, 0.0)?;
    let pseudo = pseudo_label_step(&bundle, &tgt, ConfidenceSource::DomainDisc)?;
    println!("after one DANN step: task {:.3}, disc {:.3}", m.task_loss, m.disc_loss);
    for i in 0..tgt.features.rows() {
        println!(
            "  target sample {i}: pseudo label {}, D = {:.3}, weight 1 - D = {:.3}",
            pseudo.labels[i],
            pseudo.d_values.get(i, 0),
            pseudo.weights.get(i, 0)
        );
    }
    let loss = target_update_step(
        &mut bundle,
        &tgt,
        &pseudo,
        &mut opts.target,
        config.lr_target,
        WeightNorm::BatchSize,
    )?;
    println!("weighted pseudo-label loss {loss:.4}");

    let run = run_cell(&config, &pair, "moons:rot=40", 100)?;
    println!(
        "{}: best holdout {:.3} at step {}, test accuracy there {:.3}",
        method.label(),
        run.result.holdout_acc,
        run.result.best_step,
        run.result.test_acc
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
