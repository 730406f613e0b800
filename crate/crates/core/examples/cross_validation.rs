//! Self- and cross-validation of two expansion points: each case's suprema
//! are estimated from its own constraints and from the other case's
//! constraints started at the slope difference.
//!
//! `cargo run --release --example cross_validation`

use std::path::PathBuf;

use mtdc::cli::{render_report, validate_cases};
use mtdc::study::{load_case, load_config, Study};
use mtdc::units::MW_PER_KV;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data"));
    let base = Study::new(&load_config(&data.join("ref14.json"), &[])?, None)?;
    let cases = [load_case(&data.join("case1.json"))?, load_case(&data.join("case2.json"))?];
    let rows = validate_cases(&base, &cases, true, 1e3 * MW_PER_KV, 400.0 * MW_PER_KV)?;
    print!("{}", render_report(&rows));
    for r in &rows {
        let cross = r.cross.as_ref().expect("two cases give cross rows");
        let worst = r
            .self_estimate
            .iter()
            .zip(&cross.estimate)
            .map(|(s, c)| ((s - c) / s).abs())
            .fold(0.0, f64::max);
        println!("{}: largest self/cross difference {:.3}%", r.name, 100.0 * worst);
    }
    Ok(())
}
