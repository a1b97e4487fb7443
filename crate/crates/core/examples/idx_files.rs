// Writes two small image domains in IDX format, loads them back through a
// dataset spec and trains on the pair.
//
// Images are 28x28 strokes (horizontal, vertical, diagonal). The target
// domain draws thinner strokes on a noisy background.

use std::error::Error;
use std::fs;
use std::path::Path;

use pseudo_dann::data::{IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
use pseudo_dann::harness::{run_cell, DatasetSpec};
use pseudo_dann::losses::ConfidenceSource;
use pseudo_dann::training::{Method, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 28;

fn draw(class: usize, thick: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let offset = rng.gen_range(4..SIDE - 4 - thick);
    (0..SIDE * SIDE)
        .map(|i| {
            let (r, c) = (i / SIDE, i % SIDE);
            let on = match class {
                0 => (offset..offset + thick).contains(&r),
                1 => (offset..offset + thick).contains(&c),
                _ => r.abs_diff(c) < thick,
            };
            let v = if on { 1.0 - noise } else { 0.0 } + noise * rng.gen::<f64>();
            (v.min(1.0) * 255.0) as u8
        })
        .collect()
}

fn write_domain(dir: &Path, name: &str, n: usize, thick: usize, noise: f64, seed: u64) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for v in [IDX_IMAGES_MAGIC, n as u32, SIDE as u32, SIDE as u32] {
        images.extend(v.to_be_bytes());
    }
    for v in [IDX_LABELS_MAGIC, n as u32] {
        labels.extend(v.to_be_bytes());
    }
    for i in 0..n {
        let class = i % 3;
        images.extend(draw(class, thick, noise, &mut rng));
        labels.push(class as u8);
    }
    fs::write(dir.join(format!("{name}-images.idx")), images)?;
    fs::write(dir.join(format!("{name}-labels.idx")), labels)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    write_domain(dir.path(), "src", 600, 2, 0.05, 1)?;
    write_domain(dir.path(), "tgt", 900, 1, 0.4, 2)?;
    let p = |f: &str| dir.path().join(f).display().to_string();
    let spec: DatasetSpec = format!(
        "idx:{},{},{},{}",
        p("src-images.idx"),
        p("src-labels.idx"),
        p("tgt-images.idx"),
        p("tgt-labels.idx")
    )
    .parse()?;
    let pair = spec.load(0)?;
    println!(
        "{} classes, input dim {} after pooling, {} source / {} unlabeled target images",
        pair.num_classes(),
        pair.input_dim(),
        pair.source.len(),
        pair.target_train.len()
    );
    for method in [Method::NO_ADAPT, Method::pseudo(ConfidenceSource::DomainDisc)] {
        let config = TrainConfig {
            steps: 300,
            ..TrainConfig::new(method)
        };
        let run = run_cell(&config, &pair, "strokes", 100)?;
        println!("{:<20} target test accuracy {:.3}", method.label(), run.result.test_acc);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
