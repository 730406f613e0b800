//! Two-slope stability region from the Taylor constraints, drawn as text.
//! `#` marks stable cells; the expansion point is `o`.
//!
//! `cargo run --release --example stability_region`

use mtdc::region;
use mtdc::study::{load_config, Study};
use mtdc::units::MW_PER_KV;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ref14.json");
    let study = Study::new(&load_config(path.as_ref(), &[])?, None)?;
    let set = study.constraints()?;
    let axes = (study.axis_index("k1")?, study.axis_index("k2")?);
    let range = (0.0, 120.0 * MW_PER_KV);
    let res = 40;
    let grid = region::scan_region_taylor(&set, axes, (range, range), (res, res), &study.slopes());

    let k = study.slopes();
    let here = |a: usize, b: usize| {
        let step = (range.1 - range.0) / res as f64;
        (grid.k_i(a) - k[axes.0]).abs() <= step / 2.0 && (grid.k_j(b) - k[axes.1]).abs() <= step / 2.0
    };
    println!("k2 (MW/kV) up, k1 (MW/kV) right, both 0..120");
    for b in (0..res).rev() {
        let row: String = (0..res)
            .map(|a| match (here(a, b), grid.is_stable(a, b)) {
                (true, _) => 'o',
                (false, true) => '#',
                (false, false) => '.',
            })
            .collect();
        println!("{row}");
    }
    let stable = grid.stable.iter().filter(|s| **s).count();
    println!("{stable} of {} cells stable", grid.stable.len());
    Ok(())
}
