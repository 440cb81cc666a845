//! Verify every parameter tensor's reverse-mode gradient against central
//! finite differences in f64.
//!
//! Run with: cargo run --release --example gradient_check

use multicam::commands::{cmd_gradcheck, GRADCHECK_TOLERANCE};
use multicam::model::ModelConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ModelConfig::tiny();
    println!(
        "checking a tiny model (d_model={}, w={}, {}+{} layers) on a 3-track group\n",
        config.d_model, config.w, config.n_layers_t, config.n_layers_c
    );
    let report = cmd_gradcheck(&config, 3, 0)?;
    print!("{report}");
    assert!(
        report.passed(),
        "worst relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:.0e}",
        report.worst()
    );
    Ok(())
}
