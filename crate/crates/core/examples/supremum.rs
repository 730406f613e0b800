//! Per-axis droop-slope suprema from the quadratic slope constraints at one
//! expansion point, checked against the eigenvalue-loci oracle.
//!
//! `cargo run --release --example supremum [case.json]`

use std::path::PathBuf;

use mtdc::region::{self, LociOptions};
use mtdc::study::{load_case, load_config, Study};
use mtdc::units::MW_PER_KV;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data"));
    let case_path = std::env::args().nth(1).map(PathBuf::from).unwrap_or(data.join("case1.json"));
    let base = Study::new(&load_config(&data.join("ref14.json"), &[])?, None)?;
    let study = base.with_case(&load_case(&case_path)?)?;

    let set = study.constraints()?;
    println!(
        "case {}: {} constraints, {} modes excluded",
        study.case_name,
        set.constraints.len(),
        set.excluded.len()
    );
    let zero = vec![0.0; set.n_axes()];
    println!("{:>5} {:>9} {:>11} {:>11} {:>8}", "axis", "k MW/kV", "Taylor", "loci", "gap %");
    for (axis, name) in study.axis_names().iter().enumerate() {
        let k = study.slopes()[axis];
        let taylor = region::estimate_supremum(&set, axis, &zero, 1e3 * MW_PER_KV)?;
        let exact = study.loci_supremum(axis, (k, 400.0 * MW_PER_KV), &LociOptions::default())?;
        println!(
            "{name:>5} {:>9.2} {:>11.4} {:>11.4} {:>8.2}",
            k / MW_PER_KV,
            taylor.k_sup / MW_PER_KV,
            exact.k_sup / MW_PER_KV,
            100.0 * (taylor.k_sup - exact.k_sup) / exact.k_sup
        );
    }
    Ok(())
}
