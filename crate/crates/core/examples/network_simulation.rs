//! Event-driven simulation of a harvesting network, with per-ring estimates.

use lora_eh::capacitor::{build_model, ModelMode};
use lora_eh::geometry::sample_network;
use lora_eh::montecarlo::{empirical_collision_fraction, run_simulation, SimOptions, CI_Z};
use lora_eh::phy::{ChargingScheme, PhyConfig};

fn main() -> lora_eh::error::Result<()> {
    let cfg = PhyConfig::default();
    let model = build_model(&cfg, ModelMode::Thevenin)?;
    let schemes = [ChargingScheme::uniform(0.0, 100.0)?; 6];
    let mut net = sample_network(&cfg, 7)?;
    let probes = net.add_ring_probes(&cfg)?;
    println!("{} devices, ring counts {:?}", net.len(), net.ring_counts());
    let report = run_simulation(&net, &cfg, &model, &schemes, &SimOptions::new(2e5, 7))?;
    let on_air = empirical_collision_fraction(&report)?;
    for (n, ring) in report.rings.iter().enumerate() {
        let c = &ring.counters;
        let probe = report.devices[probes[n]].counters.overall();
        println!(
            "SF{:2}: E {:.4}, C {:.4}, Q {:.4}, on air {:.5}, midpoint probe Q {:.4} ± {:.4}",
            ring.sf,
            c.energy_avail().value,
            c.conn().value,
            c.overall().value,
            on_air[n].value,
            probe.value,
            probe.ci_half_width(CI_Z)
        );
    }
    Ok(())
}
