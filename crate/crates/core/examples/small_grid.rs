// A reduced method x dataset x seed grid written to disk, then read back
// the way `pseudo-dann report` and `pseudo-dann check` do.

use std::error::Error;

use pseudo_dann::harness::{
    ordering_verdicts, read_results, run_grid, successful, write_outputs, DatasetSpec, GridSpec,
    Table, RESULTS_FILE,
};
use pseudo_dann::training::Method;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let datasets = vec![
        "moons:rot=30,n_source=500,n_target=1000".parse::<DatasetSpec>()?,
        "gauss:shift=1.5,n=900".parse()?,
    ];
    let mut grid = GridSpec::new(Method::table_rows(), datasets, vec![0, 1]);
    grid.config.steps = 400;
    grid.config.batch_size = 32;
    grid.eval_every = 100;
    println!("{} cells", grid.cells().len());

    let outcomes = run_grid(&grid)?;
    let dir = tempfile::tempdir()?;
    write_outputs(dir.path(), &outcomes, grid.config.steps)?;

    let records = read_results(&dir.path().join(RESULTS_FILE))?;
    let table = Table::from_results(&successful(&records)?);
    print!("{}", table.to_markdown());
    for v in ordering_verdicts(&table) {
        println!("{v}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
