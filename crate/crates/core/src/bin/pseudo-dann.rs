use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pseudo_dann::harness::{self, RunOptions, Status, Table};

#[derive(Parser)]
#[command(version, about = "Domain adaptation with pseudo-labeling: training grid and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every method x dataset x seed cell and write results to --out.
    Run(RunArgs),
    /// Print the results table of a previous run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Evaluate the ordering claims on a previous run.
    Check {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(clap::Args)]
struct RunArgs {
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `all` or a comma list of method ids.
    #[arg(long)]
    methods: Option<String>,
    /// moons:rot=45, gauss:shift=2.0, or idx:<img>,<lbl>,<img>,<lbl>. Repeatable.
    #[arg(long)]
    dataset: Vec<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Comma list, e.g. 0,1,2,3,4.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Normalize weighted losses by the sum of weights instead of the batch size.
    #[arg(long)]
    weight_norm: bool,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Head evaluated for the instance-weighting rows: C or T.
    #[arg(long)]
    eval_head: Option<String>,
}

impl RunArgs {
    fn options(&self) -> Result<RunOptions, String> {
        let mut o = RunOptions::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            o.apply_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        let mut flags: Vec<(&str, String)> = Vec::new();
        let mut add = |k, v: Option<String>| {
            if let Some(v) = v {
                flags.push((k, v));
            }
        };
        add("methods", self.methods.clone());
        add("dataset", (!self.dataset.is_empty()).then(|| self.dataset.join(";")));
        add("steps", self.steps.map(|v| v.to_string()));
        add("seeds", self.seeds.clone());
        add("batch-size", self.batch_size.map(|v| v.to_string()));
        add("out", self.out.as_ref().map(|p| p.display().to_string()));
        add("weight-norm", self.weight_norm.then(|| "true".into()));
        add("burn-in", self.burn_in.map(|v| v.to_string()));
        add("eval-every", self.eval_every.map(|v| v.to_string()));
        add("eval-head", self.eval_head.clone());
        for (k, v) in flags {
            o.set(k, &v).map_err(|e| format!("--{k}: {e}"))?;
        }
        if o.datasets.is_empty() {
            return Err("no dataset given (--dataset or `dataset =` in --config)".into());
        }
        if o.out.is_none() {
            return Err("no output directory given (--out)".into());
        }
        Ok(o)
    }
}

fn run(args: &RunArgs) -> Result<bool, String> {
    let opts = args.options()?;
    let grid = opts.grid();
    let out = opts.out.as_deref().expect("checked in options");
    eprintln!(
        "running {} cells ({} methods x {} datasets x {} seeds, {} steps)",
        grid.cells().len(),
        grid.methods.len(),
        grid.datasets.len(),
        grid.seeds.len(),
        grid.config.steps
    );
    let outcomes = harness::run_grid(&grid).map_err(|e| e.to_string())?;
    let table = harness::write_outputs(out, &outcomes, grid.config.steps).map_err(|e| e.to_string())?;
    let mut clean = true;
    for f in outcomes.iter().filter_map(|o| o.as_ref().err()) {
        eprintln!("aborted: {} on {} seed {}: {}", f.method, f.dataset, f.seed, f.error);
        clean = false;
    }
    print!("{}", harness::render_markdown(&table));
    eprintln!("wrote {}", out.display());
    Ok(clean)
}

fn load(dir: &Path) -> Result<(Table, usize), String> {
    let records = harness::read_results(&dir.join(harness::RESULTS_FILE)).map_err(|e| e.to_string())?;
    let aborted = records.iter().filter(|r| !r.is_ok()).count();
    let results = harness::successful(&records).map_err(|e| e.to_string())?;
    Ok((Table::from_results(&results), aborted))
}

fn report(dir: &Path, format: Format) -> Result<bool, String> {
    let (table, aborted) = load(dir)?;
    match format {
        Format::Md => print!("{}", table.to_markdown()),
        Format::Csv => print!("{}", table.to_csv().map_err(|e| e.to_string())?),
    }
    if aborted > 0 {
        eprintln!("{aborted} aborted cell(s) in {}", dir.display());
    }
    Ok(aborted == 0)
}

fn check(dir: &Path) -> Result<bool, String> {
    let (table, aborted) = load(dir)?;
    let verdicts = harness::ordering_verdicts(&table);
    for v in &verdicts {
        println!("{v}");
    }
    if aborted > 0 {
        println!("{aborted} aborted cell(s)");
    }
    Ok(aborted == 0 && verdicts.iter().all(|v| v.status != Status::Fail))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Report { input, format } => report(input, *format),
        Command::Check { input } => check(input),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
