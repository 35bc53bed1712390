//! Adaptive charging plans: common duty cycle and common mean voltage.

use lora_eh::act::{plan_cdc, plan_cve, ActOptions};
use lora_eh::capacitor::{build_model, ModelMode};
use lora_eh::phy::{PhyConfig, SchemeKind};

fn main() -> lora_eh::error::Result<()> {
    let cfg = PhyConfig {
        capacitance: 40e-3,
        ..PhyConfig::default()
    };
    let model = build_model(&cfg, ModelMode::Thevenin)?;
    let opts = ActOptions::default();
    for kind in [SchemeKind::Uniform, SchemeKind::Weibull] {
        for result in [
            plan_cdc(150.0, kind, &cfg, &model, &opts)?,
            plan_cve(1.0, kind, &cfg, &model, &opts)?,
        ] {
            let plan = &result.plan;
            println!(
                "{} {} (target {}):",
                plan.kind.label(),
                kind.label(),
                plan.target
            );
            for e in &plan.entries {
                let (p1, p2) = e.scheme.params();
                println!(
                    "  SF{:2}: ({p1:.2}, {p2:8.3}) E[nu] {:8.3} s, duty {:.5}, mean {:.4} V, std {:.4} V, outage {:5.2} %",
                    e.sf,
                    e.mean_nu_s,
                    e.duty_cycle,
                    e.stationary_mean_v,
                    e.stationary_std_v,
                    100.0 * e.predicted_outage
                );
            }
        }
    }
    Ok(())
}
