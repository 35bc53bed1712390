//! Overall success probability against distance, with the connection bounds.

use lora_eh::capacitor::{build_model, ModelMode};
use lora_eh::geometry::{coverage_profile, distance_grid, CoverageOptions};
use lora_eh::markov::{ring_outages, SteadyStateOptions};
use lora_eh::phy::{ChargingScheme, PhyConfig};

fn main() -> lora_eh::error::Result<()> {
    let cfg = PhyConfig::default();
    let model = build_model(&cfg, ModelMode::Thevenin)?;
    let scheme = ChargingScheme::uniform(0.0, 100.0)?;
    let outage = ring_outages(&cfg, &model, &scheme, &SteadyStateOptions::default())?;
    let opts = CoverageOptions {
        upper_bound_samples: 20_000,
        ..CoverageOptions::default()
    };
    let prof = coverage_profile(&cfg, &scheme, &outage, &distance_grid(&cfg, 24), &opts)?;
    println!("d km  SF  SNR     SIR     C lower C upper E       Q");
    for p in &prof.points {
        println!(
            "{:4.2}  {:2}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}",
            p.distance_km,
            p.sf,
            p.snr_success,
            p.sir_success,
            p.conn_lower,
            p.conn_upper.unwrap_or(f64::NAN),
            p.energy_avail,
            p.overall_q
        );
    }
    Ok(())
}
