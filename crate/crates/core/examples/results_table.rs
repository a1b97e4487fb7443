// Renders a results table with its marks and checks the method ordering,
// starting from plain accuracy values rather than training runs.

use std::error::Error;

use pseudo_dann::harness::{ordering_verdicts, Status, Table};
use pseudo_dann::losses::ConfidenceSource::{DomainDisc, TaskSoftmax};
use pseudo_dann::training::Method;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let rows: Vec<(Method, [f64; 6])> = vec![
        (Method::NO_ADAPT, [0.888, 0.869, 0.797, 0.246, 0.827, 0.954]),
        (Method::DANN, [0.961, 0.965, 0.855, 0.949, 0.881, 0.932]),
        (Method::instance(TaskSoftmax), [0.960, 0.964, 0.831, 0.943, 0.876, 0.936]),
        (Method::instance(DomainDisc), [0.937, 0.958, 0.864, 0.939, 0.880, 0.915]),
        (Method::pseudo_no_adv(TaskSoftmax), [0.968, 0.965, 0.741, 0.789, 0.909, 0.972]),
        (Method::pseudo_no_adv(DomainDisc), [0.970, 0.960, 0.869, 0.721, 0.901, 0.963]),
        (Method::pseudo_task_c(TaskSoftmax), [0.962, 0.970, 0.861, 0.986, 0.891, 0.919]),
        (Method::pseudo_task_c(DomainDisc), [0.954, 0.978, 0.898, 0.983, 0.881, 0.905]),
        (Method::pseudo(TaskSoftmax), [0.952, 0.972, 0.873, 0.985, 0.898, 0.934]),
        (Method::pseudo(DomainDisc), [0.950, 0.979, 0.910, 0.985, 0.894, 0.924]),
    ];
    let columns = ["MN→US", "US→MN", "SV→MN", "MN→MN-M", "SynN→SV", "SynS→GTSRB"];
    let table = Table::from_values(
        columns.map(String::from).to_vec(),
        rows.into_iter()
            .map(|(m, v)| (m, v.into_iter().map(Some).collect()))
            .collect(),
    );
    print!("{}", table.to_markdown());
    println!();
    print!("{}", table.to_csv()?);
    println!();
    let verdicts = ordering_verdicts(&table);
    for v in &verdicts {
        println!("{v}");
    }
    let failed = verdicts.iter().filter(|v| v.status == Status::Fail).count();
    println!("{failed} of {} verdicts fail", verdicts.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
