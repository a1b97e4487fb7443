use std::path::PathBuf;

use crate::losses::WeightNorm;
use crate::training::{EvalHead, Method, MethodKind, TrainConfig};

use super::{DatasetSpec, GridSpec, DEFAULT_EVAL_EVERY, DEFAULT_SEEDS};

/// Settings of a `run` invocation. Every field has a `key=value` form,
/// shared by the config file and the command-line flags:
///
/// ```text
/// methods = all                 # or a comma list of method ids
/// dataset = moons:rot=45        # several separated by `;`
/// steps = 4000
/// seeds = 0,1,2,3,4
/// batch-size = 64
/// out = results/
/// weight-norm = true            # divide by the weight sum
/// burn-in = 0
/// eval-every = 200
/// eval-head = T                 # instance rows only: C or T
/// lr-main = 0.001
/// lr-target = 0.0005
/// target-lr-schedule = false
/// hidden = 64
/// feat-dim = 32
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub methods: Vec<Method>,
    pub datasets: Vec<DatasetSpec>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub eval_every: usize,
    pub instance_head: Option<EvalHead>,
    pub config: TrainConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            methods: Method::table_rows(),
            datasets: Vec::new(),
            seeds: DEFAULT_SEEDS.to_vec(),
            out: None,
            eval_every: DEFAULT_EVAL_EVERY,
            instance_head: None,
            config: TrainConfig::new(Method::NO_ADAPT),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse `{value}`"))
}

fn boolean(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got `{value}`")),
    }
}

impl RunOptions {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        let c = &mut self.config;
        match key.trim() {
            "methods" => {
                self.methods = if value == "all" {
                    Method::table_rows()
                } else {
                    value
                        .split(',')
                        .map(|m| m.trim().parse())
                        .collect::<Result<_, _>>()?
                };
            }
            "dataset" => {
                self.datasets = value
                    .split(';')
                    .filter(|d| !d.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()?;
            }
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| num("seeds", s.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "eval-every" => self.eval_every = num(key, value)?,
            "eval-head" => {
                self.instance_head = Some(match value {
                    "C" | "c" | "task" => EvalHead::Task,
                    "T" | "t" | "target" => EvalHead::Target,
                    _ => return Err(format!("eval-head: expected C or T, got `{value}`")),
                })
            }
            "steps" => c.steps = num(key, value)?,
            "batch-size" => c.batch_size = num(key, value)?,
            "burn-in" => c.burn_in = num(key, value)?,
            "lr-main" => c.lr_main = num(key, value)?,
            "lr-target" => c.lr_target = num(key, value)?,
            "hidden" => c.hidden = num(key, value)?,
            "feat-dim" => c.feat_dim = num(key, value)?,
            "target-lr-schedule" => c.target_lr_schedule = boolean(key, value)?,
            "weight-norm" => {
                c.weight_norm = if boolean(key, value)? {
                    WeightNorm::WeightSum
                } else {
                    WeightNorm::BatchSize
                }
            }
            other => return Err(format!("unknown option `{other}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<(), String> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            self.set(k, v).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn grid(&self) -> GridSpec {
        let methods = self
            .methods
            .iter()
            .map(|&m| match (m.kind, self.instance_head) {
                (MethodKind::Instance, Some(h)) => Method { eval_head: h, ..m },
                _ => m,
            })
            .collect();
        GridSpec {
            methods,
            datasets: self.datasets.clone(),
            seeds: self.seeds.clone(),
            config: self.config.clone(),
            eval_every: self.eval_every,
        }
    }
}
