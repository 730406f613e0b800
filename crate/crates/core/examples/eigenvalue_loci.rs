//! Trace the rightmost eigenvalue while one droop slope grows, and locate
//! the exact stability limit by bisection on the re-assembled Jacobian.
//!
//! `cargo run --release --example eigenvalue_loci [axis]`

use mtdc::region::LociOptions;
use mtdc::study::{load_config, Study};
use mtdc::units::MW_PER_KV;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ref14.json");
    let study = Study::new(&load_config(path.as_ref(), &[])?, None)?;
    let name = std::env::args().nth(1).unwrap_or_else(|| "k1".into());
    let axis = study.axis_index(&name)?;
    let k0 = study.slopes()[axis];
    let opts = LociOptions {
        scan_points: 21,
        ..LociOptions::default()
    };
    let r = study.loci_supremum(axis, (k0, 200.0 * MW_PER_KV), &opts)?;
    println!("{:>10} {:>12}  rightmost eigenvalue", format!("{name} MW/kV"), "max Re");
    for p in &r.table {
        let top = p
            .eigenvalues
            .iter()
            .max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.abs().total_cmp(&b.im.abs())))
            .expect("non-empty spectrum");
        println!("{:>10.2} {:>12.5}  {:.4} {:+.2}j", p.k / MW_PER_KV, p.max_re, top.re, top.im.abs());
    }
    println!("exact supremum {:.4} MW/kV after {} eigen-solves", r.k_sup / MW_PER_KV, r.evaluations);
    for w in &r.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
