//! Stationary end-of-cycle voltage and energy outage for Uniform and Weibull charging.

use lora_eh::capacitor::{build_model, ModelMode};
use lora_eh::markov::{convergence_report, steady_state, SteadyStateOptions};
use lora_eh::phy::{ChargingScheme, PhyConfig};

fn main() -> lora_eh::error::Result<()> {
    let cfg = PhyConfig::default();
    let model = build_model(&cfg, ModelMode::Thevenin)?;
    let opts = SteadyStateOptions::default();
    for scheme in [
        ChargingScheme::uniform(0.0, 100.0)?,
        ChargingScheme::weibull(1.0, 50.0)?,
    ] {
        let st = steady_state(&model, &scheme, 0.204, cfg.v_op, &opts)?;
        let d = &st.distribution;
        println!(
            "{}: outage {:.2} %, mean {:.4} V (estimator {:.4} V), std {:.4} V, mode {:.3} V",
            scheme.kind().label(),
            100.0 * st.outage,
            d.mean(),
            st.estimator_mean,
            d.std_dev(),
            d.mode()
        );
        for (m, o) in convergence_report(
            &model,
            &scheme,
            0.204,
            cfg.v_op,
            &opts,
            &[250, 500, 1000, 2000],
        )? {
            println!("  M = {m:4}: {:.3} %", 100.0 * o);
        }
    }
    Ok(())
}
