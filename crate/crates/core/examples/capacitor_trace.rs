//! Voltage over a few charge/transmit cycles of an SF10 device.

use lora_eh::capacitor::{build_model, simulate_trajectory, ModelMode, TrajectoryOptions};
use lora_eh::phy::{ChargingScheme, PhyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lora_eh::error::Result<()> {
    let cfg = PhyConfig::default();
    let model = build_model(&cfg, ModelMode::Thevenin)?;
    println!(
        "charge toward {:.4} V (tau {:.2} s), discharge toward {:.4} V (tau {:.3} s)",
        model.v_inf_off, model.tau_off, model.v_inf_on, model.tau_on
    );
    let scheme = ChargingScheme::uniform(0.0, 100.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let opts = TrajectoryOptions {
        samples_per_phase: 4,
    };
    let traj = simulate_trajectory(&model, 1.8, &scheme, 0.204, 5, opts, &mut rng)?;
    for p in &traj.points {
        println!(
            "{:9.3} s  {:.4} V  {:9}  cycle {}",
            p.time_s,
            p.voltage,
            p.phase.label(),
            p.cycle
        );
    }
    Ok(())
}
