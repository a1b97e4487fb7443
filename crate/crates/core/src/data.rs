//! Datasets, synthetic domain shifts, IDX ingestion, and batching.
//!
//! Target-domain training labels live behind a [`LabelGate`]. Reading them
//! is possible (the label-isolation tests need to prove nobody did) but every
//! read is counted, and no training code path calls it.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::numeric::{NumericError, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Largest flattened image the IDX loader keeps before mean-pooling stops.
pub const MAX_POOLED_DIM: usize = 196;

/// Radius of the circle the Gaussian class means sit on.
pub const GAUSS_RADIUS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{file}: bad IDX magic, expected {expected:#010x}, found {actual:#010x}")]
    BadMagic {
        file: &'static str,
        expected: u32,
        actual: u32,
    },
    #[error("{file}: truncated IDX payload, expected {expected} bytes, found {actual}")]
    Truncated {
        file: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("IDX count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("cannot reconcile input dimensions {source_dims:?} and {target_dims:?}")]
    Irreconcilable {
        source_dims: (usize, usize),
        target_dims: (usize, usize),
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainTag {
    Source,
    Target,
}

/// Labeled samples from one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    domain: DomainTag,
    image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        domain: DomainTag,
    ) -> Result<Self, DataError> {
        if labels.len() != features.rows() {
            return Err(DataError::Invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(NumericError::Label {
                label: bad,
                num_classes,
            }
            .into());
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            domain,
            image_shape: None,
        })
    }

    /// Marks the rows as flattened `rows x cols` images.
    pub fn with_image_shape(mut self, shape: (usize, usize)) -> Result<Self, DataError> {
        if shape.0 * shape.1 != self.dim() {
            return Err(DataError::Invalid(format!(
                "image shape {shape:?} does not match {} features",
                self.dim()
            )));
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            domain: self.domain,
            image_shape: self.image_shape,
        }
    }

    /// CSV with a header row `x0,...,x{d-1},label`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        out.write_record(&header)?;
        for (r, &label) in self.labels.iter().enumerate() {
            let mut rec: Vec<String> = self.features.row(r).iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Labels that training must not see. Every read is counted.
#[derive(Debug)]
pub struct LabelGate {
    labels: Vec<usize>,
    accesses: AtomicUsize,
}

impl LabelGate {
    fn new(labels: Vec<usize>) -> Self {
        Self {
            labels,
            accesses: AtomicUsize::new(0),
        }
    }

    /// Evaluation-only access.
    pub fn open(&self) -> &[usize] {
        self.accesses.fetch_add(1, Ordering::SeqCst);
        &self.labels
    }

    pub fn access_count(&self) -> usize {
        self.accesses.load(Ordering::SeqCst)
    }
}

impl Clone for LabelGate {
    fn clone(&self) -> Self {
        Self {
            labels: self.labels.clone(),
            accesses: AtomicUsize::new(self.access_count()),
        }
    }
}

/// Unlabeled target training data.
#[derive(Clone, Debug)]
pub struct TargetTrain {
    features: Tensor,
    pub gate: LabelGate,
}

impl TargetTrain {
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

/// Source data plus the three disjoint target splits.
#[derive(Clone, Debug)]
pub struct DomainPair {
    pub source: Dataset,
    pub target_train: TargetTrain,
    pub target_holdout: Dataset,
    pub target_test: Dataset,
}

impl DomainPair {
    pub fn input_dim(&self) -> usize {
        self.source.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.source.num_classes()
    }
}

/// Two interleaved half circles with Gaussian noise, rotated about the
/// origin. Class 0 is the upper arc, class 1 the lower one.
pub fn gen_two_moons(
    n: usize,
    noise_std: f64,
    rotation_deg: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::Invalid(format!("two moons needs n >= 2, got {n}")));
    }
    if !(noise_std >= 0.0) {
        return Err(DataError::Invalid(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("validated std");
    let (sin_r, cos_r) = rotation_deg.to_radians().sin_cos();
    let n_upper = n.div_ceil(2);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.gen_range(0.0..PI);
        let (x, y, label) = if i < n_upper {
            (t.cos(), t.sin(), 0)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), 1)
        };
        let x = x + noise.sample(&mut rng);
        let y = y + noise.sample(&mut rng);
        data.push(cos_r * x - sin_r * y);
        data.push(sin_r * x + cos_r * y);
        labels.push(label);
    }
    Dataset::new(Tensor::new(n, 2, data)?, labels, 2, DomainTag::Source)
}

/// Unrotated source moons against target moons rotated by `rotation_deg`,
/// drawn with seeds `seed` and `seed + 1`.
pub fn gen_moons_pair(
    n_source: usize,
    n_target: usize,
    noise_std: f64,
    rotation_deg: f64,
    seed: u64,
) -> Result<DomainPair, DataError> {
    let source = gen_two_moons(n_source, noise_std, 0.0, seed)?;
    let target = gen_two_moons(n_target, noise_std, rotation_deg, seed.wrapping_add(1))?;
    preprocess_pair(
        source,
        target,
        &PreprocessOptions {
            seed,
            ..PreprocessOptions::default()
        },
    )
}

/// Class means: evenly spaced on a circle of radius [`GAUSS_RADIUS`] in the
/// first two coordinates (or along the line for `dim == 1`).
pub fn gauss_class_means(num_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|c| {
            let mut m = vec![0.0; dim];
            if dim == 1 {
                m[0] = GAUSS_RADIUS * c as f64;
            } else if dim > 1 {
                let a = 2.0 * PI * c as f64 / num_classes as f64;
                m[0] = GAUSS_RADIUS * a.cos();
                m[1] = GAUSS_RADIUS * a.sin();
            }
            m
        })
        .collect()
}

/// One domain of class-conditional isotropic Gaussians. Means are
/// [`gauss_class_means`] translated by `shift`; the standard deviation is
/// `scale`. Classes are assigned round-robin so counts differ by at most 1.
pub fn gen_gauss_domain(
    n: usize,
    num_classes: usize,
    shift: &[f64],
    scale: f64,
    seed: u64,
    domain: DomainTag,
) -> Result<Dataset, DataError> {
    let dim = shift.len();
    if num_classes == 0 || dim == 0 || !(scale > 0.0) {
        return Err(DataError::Invalid(format!(
            "gaussian domain needs classes >= 1, dim >= 1, scale > 0 (got {num_classes}, {dim}, {scale})"
        )));
    }
    let means = gauss_class_means(num_classes, dim);
    let noise = Normal::new(0.0, scale).expect("validated scale");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        for (m, s) in means[c].iter().zip(shift) {
            data.push(m + s + noise.sample(&mut rng));
        }
        labels.push(c);
    }
    Dataset::new(Tensor::new(n, dim, data)?, labels, num_classes, domain)
}

/// Source: unit-variance Gaussians around [`gauss_class_means`]. Target:
/// the same classes with every mean translated by `mean_shift` and the
/// standard deviation multiplied by `scale`. `n` samples per domain.
pub fn gen_gauss_shift(
    n: usize,
    num_classes: usize,
    dim: usize,
    mean_shift: &[f64],
    scale: f64,
    seed: u64,
) -> Result<DomainPair, DataError> {
    if mean_shift.len() != dim {
        return Err(DataError::Invalid(format!(
            "shift has {} entries for dim {dim}",
            mean_shift.len()
        )));
    }
    let source = gen_gauss_domain(n, num_classes, &vec![0.0; dim], 1.0, seed, DomainTag::Source)?;
    let target = gen_gauss_domain(
        n,
        num_classes,
        mean_shift,
        scale,
        seed.wrapping_add(0x9E37_79B9),
        DomainTag::Target,
    )?;
    preprocess_pair(
        source,
        target,
        &PreprocessOptions {
            seed,
            ..PreprocessOptions::default()
        },
    )
}

fn read_u32_be(bytes: &[u8], at: usize, file: &'static str) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DataError::Truncated {
            file,
            expected: at + 4,
            actual: bytes.len(),
        })
}

/// Parses in-memory IDX image and label files.
pub fn parse_idx(images: &[u8], labels: &[u8], downscale: bool) -> Result<Dataset, DataError> {
    let magic = read_u32_be(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            file: "images",
            expected: IDX_IMAGES_MAGIC,
            actual: magic,
        });
    }
    let count = read_u32_be(images, 4, "images")? as usize;
    let rows = read_u32_be(images, 8, "images")? as usize;
    let cols = read_u32_be(images, 12, "images")? as usize;
    let need = 16 + count * rows * cols;
    if images.len() < need {
        return Err(DataError::Truncated {
            file: "images",
            expected: need,
            actual: images.len(),
        });
    }

    let magic = read_u32_be(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            file: "labels",
            expected: IDX_LABELS_MAGIC,
            actual: magic,
        });
    }
    let label_count = read_u32_be(labels, 4, "labels")? as usize;
    if labels.len() < 8 + label_count {
        return Err(DataError::Truncated {
            file: "labels",
            expected: 8 + label_count,
            actual: labels.len(),
        });
    }
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let pixels: Vec<f64> = images[16..need].iter().map(|&b| b as f64 / 255.0).collect();
    let label_vec: Vec<usize> = labels[8..8 + count].iter().map(|&b| b as usize).collect();
    let mut features = Tensor::new(count, rows * cols, pixels)?;
    let mut shape = (rows, cols);
    if downscale {
        while shape.0 * shape.1 > MAX_POOLED_DIM && shape.0 % 2 == 0 && shape.1 % 2 == 0 {
            features = mean_pool_2x(&features, shape)?;
            shape = (shape.0 / 2, shape.1 / 2);
        }
    }
    let num_classes = label_vec.iter().max().map_or(1, |m| m + 1);
    Dataset::new(features, label_vec, num_classes, DomainTag::Source)?.with_image_shape(shape)
}

/// Reads an IDX image file and its label file from disk.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    downscale: bool,
) -> Result<Dataset, DataError> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    parse_idx(&images, &labels, downscale)
}

/// Averages non-overlapping 2x2 blocks of each flattened `shape` image.
pub fn mean_pool_2x(features: &Tensor, shape: (usize, usize)) -> Result<Tensor, NumericError> {
    let (h, w) = shape;
    let (oh, ow) = (h / 2, w / 2);
    let mut data = Vec::with_capacity(features.rows() * oh * ow);
    for r in 0..features.rows() {
        let img = features.row(r);
        for i in 0..oh {
            for j in 0..ow {
                let at = |y: usize, x: usize| img[y * w + x];
                data.push(
                    (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1))
                        / 4.0,
                );
            }
        }
    }
    Tensor::new(features.rows(), oh * ow, data)
}

fn pad_image(features: &Tensor, from: (usize, usize), to: (usize, usize)) -> Result<Tensor, NumericError> {
    let top = (to.0 - from.0) / 2;
    let left = (to.1 - from.1) / 2;
    let mut data = vec![0.0; features.rows() * to.0 * to.1];
    for r in 0..features.rows() {
        let img = features.row(r);
        let out = &mut data[r * to.0 * to.1..(r + 1) * to.0 * to.1];
        for y in 0..from.0 {
            for x in 0..from.1 {
                out[(y + top) * to.1 + x + left] = img[y * from.1 + x];
            }
        }
    }
    Tensor::new(features.rows(), to.0 * to.1, data)
}

fn pad_flat(features: &Tensor, to: usize) -> Result<Tensor, NumericError> {
    let mut data = Vec::with_capacity(features.rows() * to);
    for r in 0..features.rows() {
        data.extend_from_slice(features.row(r));
        data.extend(std::iter::repeat(0.0).take(to - features.cols()));
    }
    Tensor::new(features.rows(), to, data)
}

/// Per-dimension standardization statistics source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Standardization {
    /// Each domain standardized with its own mean and variance.
    #[default]
    PerDomain,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessOptions {
    /// Upper bound on the labeled target holdout.
    pub holdout_max: usize,
    pub test_fraction: f64,
    pub standardization: Standardization,
    pub seed: u64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            holdout_max: 1000,
            test_fraction: 0.25,
            standardization: Standardization::PerDomain,
            seed: 0,
        }
    }
}

/// Zero mean and unit variance per column. Constant columns are only
/// centered.
pub fn standardize(features: &Tensor) -> Result<Tensor, NumericError> {
    let (n, d) = features.shape();
    if n == 0 {
        return Ok(features.clone());
    }
    let mean = features.sum_rows().map("mean", |v| v / n as f64)?;
    let mut var = vec![0.0; d];
    for r in 0..n {
        for (c, v) in features.row(r).iter().enumerate() {
            var[c] += (v - mean.get(0, c)).powi(2);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut data = features.data().to_vec();
    for row in data.chunks_mut(d) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - mean.get(0, c)) / std[c];
        }
    }
    Tensor::new(n, d, data)
}

/// Reconciles input dimensions, standardizes each domain, and splits the
/// target into disjoint train / holdout / test sets.
///
/// Split sizes: `test = round(n · test_fraction)`, then
/// `holdout = min(holdout_max, (n - test) / 2)`, the rest is training data.
pub fn preprocess_pair(
    source: Dataset,
    target: Dataset,
    opts: &PreprocessOptions,
) -> Result<DomainPair, DataError> {
    let (source, target) = reconcile_dims(source, target)?;
    let num_classes = source.num_classes.max(target.num_classes);
    let standardize_fn = |ds: Dataset| -> Result<Dataset, DataError> {
        let features = match opts.standardization {
            Standardization::PerDomain => standardize(&ds.features)?,
            Standardization::None => ds.features.clone(),
        };
        Ok(Dataset {
            features,
            num_classes,
            ..ds
        })
    };
    let source = Dataset {
        domain: DomainTag::Source,
        ..standardize_fn(source)?
    };
    let target = Dataset {
        domain: DomainTag::Target,
        ..standardize_fn(target)?
    };

    let n = target.len();
    if !(0.0..1.0).contains(&opts.test_fraction) {
        return Err(DataError::Invalid(format!(
            "test_fraction must be in [0, 1), got {}",
            opts.test_fraction
        )));
    }
    let test_n = (n as f64 * opts.test_fraction).round() as usize;
    let holdout_n = opts.holdout_max.min((n - test_n) / 2);
    let train_n = n - test_n - holdout_n;
    if train_n == 0 || source.is_empty() {
        return Err(DataError::Invalid(format!(
            "not enough data: {} source and {n} target samples",
            source.len()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5EED_5911));
    let (test_idx, rest) = order.split_at(test_n);
    let (holdout_idx, train_idx) = rest.split_at(holdout_n);

    let train = target.subset(train_idx);
    Ok(DomainPair {
        target_test: target.subset(test_idx),
        target_holdout: target.subset(holdout_idx),
        target_train: TargetTrain {
            features: train.features,
            gate: LabelGate::new(train.labels),
        },
        source,
    })
}

fn reconcile_dims(source: Dataset, target: Dataset) -> Result<(Dataset, Dataset), DataError> {
    if source.dim() == target.dim() && source.image_shape == target.image_shape {
        return Ok((source, target));
    }
    let dims_err = || DataError::Irreconcilable {
        source_dims: source.image_shape.unwrap_or((1, source.dim())),
        target_dims: target.image_shape.unwrap_or((1, target.dim())),
    };
    if source.dim() == 0 || target.dim() == 0 {
        return Err(dims_err());
    }
    match (source.image_shape, target.image_shape) {
        (Some(s), Some(t)) => {
            let fits = |a: (usize, usize), b: (usize, usize)| a.0 <= b.0 && a.1 <= b.1;
            if fits(s, t) {
                let features = pad_image(&source.features, s, t)?;
                let source = Dataset {
                    features,
                    image_shape: Some(t),
                    ..source
                };
                Ok((source, target))
            } else if fits(t, s) {
                let features = pad_image(&target.features, t, s)?;
                let target = Dataset {
                    features,
                    image_shape: Some(s),
                    ..target
                };
                Ok((source, target))
            } else {
                Err(dims_err())
            }
        }
        _ => {
            let d = source.dim().max(target.dim());
            let pad = |ds: Dataset| -> Result<Dataset, DataError> {
                if ds.dim() == d {
                    return Ok(Dataset {
                        image_shape: None,
                        ..ds
                    });
                }
                Ok(Dataset {
                    features: pad_flat(&ds.features, d)?,
                    image_shape: None,
                    ..ds
                })
            };
            Ok((pad(source)?, pad(target)?))
        }
    }
}

/// A labeled source batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceBatch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

/// A target batch. It carries no labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBatch {
    pub features: Tensor,
}

#[derive(Clone, Debug)]
struct Cursor {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Cursor {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { rng, order, pos: 0 }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Draws source and target batches independently: each domain walks its own
/// permutation with its own generator and reshuffles when exhausted, so any
/// `n` consecutive draws from a domain of size `n` starting at an epoch
/// boundary visit every sample exactly once, and the source stream does not
/// depend on whether target batches are drawn.
#[derive(Clone, Debug)]
pub struct BatchIterator {
    batch_size: usize,
    source: Cursor,
    target: Cursor,
}

impl BatchIterator {
    pub fn new(pair: &DomainPair, batch_size: usize, seed: u64) -> Result<Self, DataError> {
        if batch_size == 0
            || batch_size > pair.source.len()
            || batch_size > pair.target_train.len()
        {
            return Err(DataError::Invalid(format!(
                "batch size {batch_size} must be in 1..={}",
                pair.source.len().min(pair.target_train.len())
            )));
        }
        Ok(Self {
            batch_size,
            source: Cursor::new(pair.source.len(), seed),
            target: Cursor::new(pair.target_train.len(), seed ^ 0x7A26_E7B1_D0C4_9F35),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn next_source(&mut self, pair: &DomainPair) -> SourceBatch {
        let idx = self.source.take(self.batch_size);
        SourceBatch {
            features: pair.source.features().select_rows(&idx),
            labels: idx.iter().map(|&i| pair.source.labels()[i]).collect(),
        }
    }

    pub fn next_target(&mut self, pair: &DomainPair) -> TargetBatch {
        let idx = self.target.take(self.batch_size);
        TargetBatch {
            features: pair.target_train.features().select_rows(&idx),
        }
    }

    pub fn next_batches(&mut self, pair: &DomainPair) -> (SourceBatch, TargetBatch) {
        let s = self.next_source(pair);
        let t = self.next_target(pair);
        (s, t)
    }
}
