//! Apply the config's power-command step to the nonlinear model and to its
//! linearization, and compare the two responses.
//!
//! `cargo run --release --example step_response`

use mtdc::cli::trajectory_rms_difference;
use mtdc::dynamics::{simulate_linearized, simulate_nonlinear, SimOptions};
use mtdc::study::{load_config, Study};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ref14.json");
    let config = load_config(path.as_ref(), &[])?;
    let study = Study::new(&config, None)?;
    let opts = SimOptions {
        t_end: 1.0,
        record_every: 100,
        ..SimOptions::default()
    };
    let nl = simulate_nonlinear(&study.sys, &study.op, &config.scenario, &opts)?;
    let lin = simulate_linearized(&study.sys, &study.op, &config.scenario, &opts)?;

    let bus = config.node_index("4").expect("bus 4 exists");
    println!("{:>7} {:>14} {:>14}", "t s", "P4 nonlin MW", "P4 lin MW");
    for c in (0..nl.len()).step_by(20) {
        println!("{:>7.3} {:>14.4} {:>14.4}", nl.time[c], nl.p[(bus, c)] / 1e6, lin.p[(bus, c)] / 1e6);
    }
    println!("relative RMS difference: {:.3e}", trajectory_rms_difference(&nl, &lin));
    Ok(())
}
