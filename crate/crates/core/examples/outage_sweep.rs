//! Energy outage for every spreading factor.

use lora_eh::capacitor::{build_model, ModelMode};
use lora_eh::markov::{ring_outages, SteadyStateOptions};
use lora_eh::phy::{ChargingScheme, PhyConfig, SF_TABLE};

fn main() -> lora_eh::error::Result<()> {
    let cfg = PhyConfig::default();
    let model = build_model(&cfg, ModelMode::Thevenin)?;
    let schemes = [
        ChargingScheme::uniform(0.0, 100.0)?,
        ChargingScheme::weibull(1.0, 50.0)?,
    ];
    let outages = schemes
        .iter()
        .map(|s| ring_outages(&cfg, &model, s, &SteadyStateOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;
    println!("SF  airtime    UD       WD");
    for (n, e) in SF_TABLE.iter().enumerate() {
        println!(
            "{:2}  {:.4} s  {:6.2} %  {:6.2} %",
            e.sf,
            e.airtime_s,
            100.0 * outages[0][n],
            100.0 * outages[1][n]
        );
    }
    Ok(())
}
