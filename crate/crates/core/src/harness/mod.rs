//! Grid execution over methods, datasets, and seeds with holdout model
//! selection, plus the results table and the ordering-claim checks.

mod config;
mod dataset;
mod report;

pub use config::RunOptions;
pub use dataset::DatasetSpec;
pub use report::{
    ordering_verdicts, CellStats, Claim, Mark, Status, Table, TableRow, Verdict, CLAIM_A_MARGIN,
    CLAIM_TOLERANCE, DISPLAY_DECIMALS,
};

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, DomainPair};
use crate::losses;
use crate::models::{self, NetworkBundle};
use crate::numeric::{NumericError, Tape, Tensor};
use crate::training::{self, Adam, EvalHead, Method, StepMetrics, TrainConfig, TrainError};

pub const DEFAULT_EVAL_EVERY: usize = 200;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Fraction of `dataset` classified correctly through `F` and `head`.
pub fn evaluate(bundle: &NetworkBundle, dataset: &Dataset, head: EvalHead) -> Result<f64, NumericError> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let feats = models::forward_features(&bundle.features, dataset.features())?;
    let net = match head {
        EvalHead::Task => &bundle.task,
        EvalHead::Target => &bundle.target,
    };
    let predictions = net.forward(&feats)?.argmax_rows();
    let correct = predictions
        .iter()
        .zip(dataset.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / dataset.len() as f64)
}

/// Accuracies recorded at one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub holdout_acc: f64,
    pub test_acc: f64,
}

/// Index of the checkpoint with the highest holdout accuracy, earliest on
/// ties.
pub fn model_select(checkpoints: &[Checkpoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in checkpoints.iter().enumerate() {
        if best.map_or(true, |b| c.holdout_acc > checkpoints[b].holdout_acc) {
            best = Some(i);
        }
    }
    best
}

/// Outcome of one successful grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub method: Method,
    pub dataset: String,
    pub seed: u64,
    pub steps: usize,
    /// Step of the holdout-selected checkpoint.
    pub best_step: usize,
    pub holdout_acc: f64,
    /// Test accuracy of the holdout-selected checkpoint.
    pub test_acc: f64,
    pub wall_time_s: f64,
}

impl RunResult {
    /// Builds the result from recorded checkpoints; `None` if there are none.
    pub fn from_checkpoints(
        method: Method,
        dataset: String,
        seed: u64,
        steps: usize,
        checkpoints: &[Checkpoint],
        wall_time_s: f64,
    ) -> Option<Self> {
        let best = checkpoints[model_select(checkpoints)?];
        Some(Self {
            method,
            dataset,
            seed,
            steps,
            best_step: best.step,
            holdout_acc: best.holdout_acc,
            test_acc: best.test_acc,
            wall_time_s,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub method: Method,
    pub dataset: String,
    pub seed: u64,
    pub error: String,
}

/// A completed cell with everything needed to write its artifacts.
#[derive(Clone, Debug)]
pub struct CellRun {
    pub result: RunResult,
    pub checkpoints: Vec<Checkpoint>,
    pub history: Vec<StepMetrics>,
    /// Parameters at the selected checkpoint.
    pub best_bundle: NetworkBundle,
    /// Label-gate reads on the target-train split of the pair when the run
    /// ended.
    pub label_reads: usize,
}

pub type CellOutcome = Result<CellRun, CellFailure>;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub methods: Vec<Method>,
    pub datasets: Vec<DatasetSpec>,
    pub seeds: Vec<u64>,
    /// Template for every cell; `method` and `seed` are overwritten.
    pub config: TrainConfig,
    pub eval_every: usize,
}

impl GridSpec {
    pub fn new(methods: Vec<Method>, datasets: Vec<DatasetSpec>, seeds: Vec<u64>) -> Self {
        Self {
            methods,
            datasets,
            seeds,
            config: TrainConfig::new(Method::NO_ADAPT),
            eval_every: DEFAULT_EVAL_EVERY,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() || self.datasets.is_empty() || self.seeds.is_empty() {
            return Err(HarnessError::Invalid(
                "grid needs at least one method, dataset, and seed".into(),
            ));
        }
        if self.eval_every == 0 {
            return Err(HarnessError::Invalid("eval_every must be >= 1".into()));
        }
        for m in &self.methods {
            TrainConfig {
                method: *m,
                ..self.config.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    /// Cells in (dataset, seed, method) order.
    pub fn cells(&self) -> Vec<(usize, u64, Method)> {
        let mut cells = Vec::new();
        for d in 0..self.datasets.len() {
            for &s in &self.seeds {
                for &m in &self.methods {
                    cells.push((d, s, m));
                }
            }
        }
        cells
    }
}

/// Trains one cell, evaluating every `eval_every` steps and at the end.
pub fn run_cell(
    config: &TrainConfig,
    pair: &DomainPair,
    dataset: &str,
    eval_every: usize,
) -> Result<CellRun, TrainError> {
    let start = Instant::now();
    let head = config.method.eval_head;
    let mut checkpoints = Vec::new();
    let mut best: Option<(f64, NetworkBundle)> = None;
    let mut eval_error = None;
    let outcome = training::train_with(config, pair, |step, bundle| {
        if eval_error.is_some() || (step % eval_every != 0 && step != config.steps) {
            return;
        }
        let accs = evaluate(bundle, &pair.target_holdout, head)
            .and_then(|h| Ok((h, evaluate(bundle, &pair.target_test, head)?)));
        match accs {
            Ok((holdout_acc, test_acc)) => {
                checkpoints.push(Checkpoint {
                    step,
                    holdout_acc,
                    test_acc,
                });
                if best.as_ref().map_or(true, |(b, _)| holdout_acc > *b) {
                    best = Some((holdout_acc, bundle.clone()));
                }
            }
            Err(e) => eval_error = Some(e),
        }
    })?;
    if let Some(e) = eval_error {
        return Err(TrainError::Numeric {
            term: "evaluation",
            source: e,
        });
    }
    let result = RunResult::from_checkpoints(
        config.method,
        dataset.to_string(),
        config.seed,
        config.steps,
        &checkpoints,
        start.elapsed().as_secs_f64(),
    )
    .ok_or_else(|| TrainError::Config("no evaluation points (steps = 0)".into()))?;
    let best_bundle = best.map_or(outcome.bundle, |(_, b)| b);
    Ok(CellRun {
        result,
        checkpoints,
        history: outcome.history,
        best_bundle,
        label_reads: pair.target_train.gate.access_count(),
    })
}

/// Runs every cell in parallel. Results come back in [`GridSpec::cells`]
/// order whatever the execution order; a failed cell is recorded and the
/// rest continue.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<CellOutcome>, HarnessError> {
    spec.validate()?;
    let cells = spec.cells();
    let outcomes = cells
        .par_iter()
        .map(|&(d, seed, method)| {
            let dataset = &spec.datasets[d];
            let name = dataset.to_string();
            let fail = |error: String| CellFailure {
                method,
                dataset: name.clone(),
                seed,
                error,
            };
            let pair = dataset.load(seed).map_err(|e| fail(e.to_string()))?;
            let config = TrainConfig {
                method,
                seed,
                ..spec.config.clone()
            };
            run_cell(&config, &pair, &name, spec.eval_every).map_err(|e| fail(e.to_string()))
        })
        .collect();
    Ok(outcomes)
}

/// Trains a fresh discriminator-shaped probe to tell source from target
/// features of `bundle` and returns its accuracy on held-out balanced
/// samples; 0.5 means the domains are indistinguishable.
pub fn domain_probe(
    bundle: &NetworkBundle,
    pair: &DomainPair,
    steps: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = models::forward_features(&bundle.features, pair.source.features())?;
    let tgt = models::forward_features(&bundle.features, pair.target_train.features())?;
    let n = src.rows().min(tgt.rows());
    if n < 4 {
        return Err(HarnessError::Invalid("domain probe needs >= 4 samples per domain".into()));
    }
    let mut pick = |rows: usize| {
        let mut idx: Vec<usize> = (0..rows).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx
    };
    let (si, ti) = (pick(src.rows()), pick(tgt.rows()));
    let half = n / 2;
    let split = |t: &Tensor, idx: &[usize]| (t.select_rows(&idx[..half]), t.select_rows(&idx[half..]));
    let (s_fit, s_eval) = split(&src, &si);
    let (t_fit, t_eval) = split(&tgt, &ti);

    let mut probe = NetworkBundle::init(bundle.dims(), seed ^ 0x9B0B_E5EE).map_err(TrainError::from)?.domain;
    let mut opt = Adam::new(probe.params());
    let batch = 64.min(half);
    for step in 0..steps {
        let rows: Vec<usize> = (0..batch).map(|i| (step * batch + i) % half).collect();
        let mut tape = Tape::new();
        let xs = tape.leaf(s_fit.select_rows(&rows));
        let xt = tape.leaf(t_fit.select_rows(&rows));
        let params = probe.tape_params(&mut tape, None);
        let head = |tape: &mut Tape, x| -> Result<_, NumericError> {
            let out = probe.forward_with(tape, x, params.clone())?;
            let p = tape.sigmoid(out.output);
            Ok(tape.clamp(p, models::DOMAIN_EPS, 1.0 - models::DOMAIN_EPS))
        };
        let ds = head(&mut tape, xs)?;
        let dt = head(&mut tape, xt)?;
        let loss = losses::taped::disc_loss(&mut tape, ds, dt)?;
        let mut g = tape.backward(loss)?;
        let grads: Vec<Tensor> = params.iter().map(|&v| g.take(v)).collect();
        opt.step(probe.params_mut(), &grads, 1e-3, "domain_probe")?;
    }
    let ds = models::forward_domain(&probe, &s_eval)?;
    let dt = models::forward_domain(&probe, &t_eval)?;
    let correct = ds.data().iter().filter(|&&d| d < 0.5).count()
        + dt.data().iter().filter(|&&d| d >= 0.5).count();
    Ok(correct as f64 / (ds.rows() + dt.rows()) as f64)
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub status: String,
    pub steps: usize,
    pub best_step: Option<usize>,
    pub holdout_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub error: String,
}

impl ResultRecord {
    pub fn from_outcome(outcome: &CellOutcome, steps: usize) -> Self {
        match outcome {
            Ok(run) => {
                let r = &run.result;
                Self {
                    method: r.method.id(),
                    dataset: r.dataset.clone(),
                    seed: r.seed,
                    status: "ok".into(),
                    steps: r.steps,
                    best_step: Some(r.best_step),
                    holdout_acc: Some(r.holdout_acc),
                    test_acc: Some(r.test_acc),
                    wall_time_s: Some(r.wall_time_s),
                    error: String::new(),
                }
            }
            Err(f) => Self {
                method: f.method.id(),
                dataset: f.dataset.clone(),
                seed: f.seed,
                status: "aborted".into(),
                steps,
                best_step: None,
                holdout_acc: None,
                test_acc: None,
                wall_time_s: None,
                error: f.error.clone(),
            },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn to_result(&self) -> Result<Option<RunResult>, HarnessError> {
        if !self.is_ok() {
            return Ok(None);
        }
        let method: Method = self.method.parse().map_err(HarnessError::Invalid)?;
        let missing = || HarnessError::Invalid(format!("incomplete ok row for {}", self.method));
        let acc = |v: Option<f64>| -> Result<f64, HarnessError> {
            let v = v.ok_or_else(missing)?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(HarnessError::Invalid(format!("accuracy {v} outside [0, 1]")))
            }
        };
        Ok(Some(RunResult {
            method,
            dataset: self.dataset.clone(),
            seed: self.seed,
            steps: self.steps,
            best_step: self.best_step.ok_or_else(missing)?,
            holdout_acc: acc(self.holdout_acc)?,
            test_acc: acc(self.test_acc)?,
            wall_time_s: self.wall_time_s.unwrap_or(0.0),
        }))
    }
}

pub const RESULTS_FILE: &str = "results.csv";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";

pub fn write_results(path: &Path, records: &[ResultRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(HarnessError::from)).collect()
}

/// Successful results of a records file.
pub fn successful(records: &[ResultRecord]) -> Result<Vec<RunResult>, HarnessError> {
    let mut out = Vec::new();
    for r in records {
        if let Some(res) = r.to_result()? {
            out.push(res);
        }
    }
    Ok(out)
}

pub(crate) fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `results.csv`, the reports, and per-cell metrics and best
/// parameters under `dir`.
pub fn write_outputs(dir: &Path, outcomes: &[CellOutcome], steps: usize) -> Result<Table, HarnessError> {
    fs::create_dir_all(dir.join("metrics"))?;
    fs::create_dir_all(dir.join("models"))?;
    for run in outcomes.iter().flatten() {
        let r = &run.result;
        let stem = format!(
            "{}__{}__seed{}",
            file_safe(&r.method.id()),
            file_safe(&r.dataset),
            r.seed
        );
        let f = fs::File::create(dir.join("metrics").join(format!("{stem}.csv")))?;
        training::write_metrics_csv(&run.history, std::io::BufWriter::new(f))?;
        let f = fs::File::create(dir.join("models").join(format!("{stem}.bin")))?;
        run.best_bundle
            .write_to(std::io::BufWriter::new(f))
            .map_err(TrainError::from)?;
    }
    let records: Vec<ResultRecord> = outcomes
        .iter()
        .map(|o| ResultRecord::from_outcome(o, steps))
        .collect();
    write_results(&dir.join(RESULTS_FILE), &records)?;
    let table = Table::from_results(&successful(&records)?);
    fs::write(dir.join(REPORT_MD), render_markdown(&table))?;
    fs::write(dir.join(REPORT_CSV), table.to_csv()?)?;
    Ok(table)
}

/// Markdown table followed by the ordering-claim verdicts.
pub fn render_markdown(table: &Table) -> String {
    let mut out = table.to_markdown();
    out.push('\n');
    for v in ordering_verdicts(table) {
        out.push_str(&format!("- {v}\n"));
    }
    out
}
