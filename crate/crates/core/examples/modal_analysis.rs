//! Eigen-decomposition of the global state matrix and the sensitivities of
//! the least damped modes to each droop slope.
//!
//! `cargo run --release --example modal_analysis`

use mtdc::study::{load_config, Study};
use mtdc::units::MW_PER_KV;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ref14.json");
    let study = Study::new(&load_config(path.as_ref(), &[])?, None)?;
    let sol = study.eig()?;
    let bundle = study.bundle(&sol);
    let names = study.sys.state_names();
    let axes = study.axis_names();

    println!(
        "{} modes, {} excluded as degenerate (gap below {:.3} rad/s), biorthogonality error {:.1e}",
        sol.len(),
        sol.excluded().len(),
        sol.degeneracy_threshold(),
        sol.biorthogonality_error()
    );
    // values are sorted by real part: the last entries are the least damped
    let mut shown = 0;
    for i in (0..sol.len()).rev() {
        if sol.values[i].im < 0.0 || bundle.is_excluded(i) {
            continue;
        }
        let dominant = (0..sol.right.nrows())
            .max_by(|&a, &b| sol.right[(a, i)].norm().total_cmp(&sol.right[(b, i)].norm()))
            .expect("non-empty");
        print!("mode {i:>3} {:>9.3} {:+10.2}j  {:<10}", sol.values[i].re, sol.values[i].im, names[dominant]);
        for (j, a) in axes.iter().enumerate() {
            // per MW/kV
            print!("  d/d{a} {:+.3e}", bundle.first[(i, j)].re * MW_PER_KV);
        }
        println!();
        shown += 1;
        if shown == 8 {
            break;
        }
    }
    Ok(())
}
