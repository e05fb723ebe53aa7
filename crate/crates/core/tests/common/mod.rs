#![allow(dead_code)]

use std::io::Write;

use ctbart::data::Dataset;
use ctbart::simdata::step_toy;

/// Twenty points on one variable with two cutpoints; trees have depth at
/// most two and cells of 7, 6 and 7 rows.
pub fn toy() -> Dataset {
    step_toy(20, 99, 5).unwrap()
}

/// Print one result line straight to stdout so it shows without
/// `--nocapture`.
pub fn report(id: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance {id} [{verdict}] {name}: {detail}\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}
