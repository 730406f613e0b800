//! A synthetic system whose eigenvalues are exactly quadratic in the
//! slopes: the Taylor constraints then reproduce every crossing exactly,
//! from any expansion point.
//!
//! `cargo run --release --example planted_spectrum`

use mtdc::region;
use mtdc::synthetic::planted_example;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = planted_example(4, 3, 3, 17);
    let k = sys.k_ref.clone();
    let set = sys.constraints(&k)?;
    let mut other = k.clone();
    other[0] += 1.5;
    other[2] -= 2.0;
    let other_set = sys.constraints(&other)?;
    let zero = vec![0.0; sys.n_axes()];

    println!("{:>5} {:>16} {:>16} {:>16}", "axis", "planted", "self", "cross");
    for axis in 0..sys.n_axes() {
        let own = region::estimate_supremum(&set, axis, &zero, 1e4)?;
        let dev: Vec<f64> = (0..sys.n_axes()).map(|j| k[j] - other[j]).collect();
        let cross = region::estimate_supremum(&other_set, axis, &dev, 1e4)?;
        let planted = sys
            .crossing(&k, axis, k[axis])
            .map_or("none".to_string(), |c| format!("{c:.10}"));
        println!("{axis:>5} {planted:>16} {:>16.10} {:>16.10}", own.k_sup, cross.k_sup);
    }
    Ok(())
}
