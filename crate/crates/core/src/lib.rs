//! Energy-harvesting LoRa end devices: capacitor dynamics, a Markov model of
//! the end-of-cycle voltage, stochastic-geometry connection probabilities,
//! adaptive charging plans and a discrete-event network simulator.

pub mod act;
pub mod capacitor;
pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod geometry;
pub mod markov;
pub mod montecarlo;
pub mod phy;
pub mod quad;
pub mod special;
