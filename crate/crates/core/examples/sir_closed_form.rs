//! SIR success probability through the hypergeometric closed form.

use lora_eh::geometry::{interference_integral, sir_success};
use lora_eh::phy::PhyConfig;
use lora_eh::special::hyp2f1_special;

fn main() -> lora_eh::error::Result<()> {
    println!("2F1(1, 1/2; 3/2; -5) = {:.15}", hyp2f1_special(4.0, -5.0)?);
    println!(
        "2F1(1, 1; 2; -1)     = {:.15} (ln 2)",
        hyp2f1_special(2.0, -1.0)?
    );
    for eta in [2.5, 2.75, 3.5] {
        let cfg = PhyConfig {
            eta,
            ..PhyConfig::default()
        };
        println!("eta = {eta}");
        for d in [0.5, 1.5, 2.5, 3.5, 4.5, 5.5] {
            println!(
                "  d = {d} km: integral {:.5} km^2, P(SIR) at p = 0.01: {:.6}",
                interference_integral(d, &cfg)?,
                sir_success(d, 0.01, &cfg)?
            );
        }
    }
    Ok(())
}
