//! Integrate one converter's six arms with the arm switching functions and
//! compare the harmonic content of phase a with the dq steady state.
//!
//! `cargo run --release --example arm_switching_oracle`

use mtdc::converter::{MmcInput, MmcParams};
use mtdc::dynamics::asf_phase_reference;
use mtdc::study::load_config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ref14.json");
    let config = load_config(path.as_ref(), &[])?;
    let spec = &config.converters[0];
    let params = MmcParams::from_spec(spec);
    let v_dc = spec.v_dc_nom / 2.0;
    let input = MmcInput::new(v_dc, 0.8 * v_dc, 0.1 * v_dc);
    let r = asf_phase_reference(&params, &input, 2.0, 2e-6)?;

    let dq = mtdc::dynamics::PhaseHarmonics::from_dq(&r.dq_steady_state);
    println!("{:<6} {:<5} {:>26} {:>26}", "signal", "order", "arm switching (d, q)", "dq model (d, q)");
    for (asf, model) in r.harmonics.components().iter().zip(dq.components()) {
        let (name, order, (d, q)) = *asf;
        println!(
            "{name:<6} {order:<5} {:>12.4e} {:>12.4e}   {:>12.4e} {:>12.4e}",
            d, q, model.2 .0, model.2 .1
        );
    }
    Ok(())
}
