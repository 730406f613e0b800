//! Validate the bundled 14-bus grid, solve its operating point and print
//! the dc voltages and power references per station.
//!
//! `cargo run --release --example equilibrium [config.json]`

use std::path::PathBuf;

use mtdc::study::{load_config, Study};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ref14.json")));
    let config = load_config(&path, &[])?;
    println!("{} nodes, {} lines, {} states", config.n_nodes(), config.n_lines(), config.state_dimension());

    let study = Study::new(&config, None)?;
    println!(
        "residual {:.2e} after {} iterations ({:?})",
        study.op.residual_norm, study.op.iterations, study.op.method
    );
    println!("{:>6} {:>10} {:>10}", "node", "v_dc kV", "P_ref MW");
    for (u, v) in study.v_eq().iter().enumerate() {
        println!("{:>6} {:>10.3} {:>10.2}", config.nodes[u], v / 1e3, study.op.p_ref[u] / 1e6);
    }
    Ok(())
}
