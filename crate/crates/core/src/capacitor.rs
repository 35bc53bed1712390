//! Two-phase RC dynamics of the storage capacitor.
//!
//! Each cycle charges the capacitor for a random time ν with the radio off and
//! then discharges it for the packet airtime τ with the radio on. Within one
//! phase the voltage relaxes exponentially toward that phase's asymptote, so a
//! full cycle is the affine map `v ↦ c1 + c2·X·(v − c3)` with `X = e^{−ν/τ_off}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::DecayFactorDistribution;
use crate::phy::{ChargingScheme, PhyConfig};

/// How the harvester, capacitor and load are reduced to an RC circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    /// `V∞ = R_L·V_H / R_H`, `τ = R_L·C`, exactly as the constants are usually
    /// printed. With realistic loads the charging asymptote exceeds `V_H`.
    Literal,
    /// Thevenin reduction: `V∞ = V_H·R_L / (R_H + R_L)`, `τ = (R_H ∥ R_L)·C`.
    #[default]
    Thevenin,
}

impl std::str::FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(ModelMode::Literal),
            "thevenin" => Ok(ModelMode::Thevenin),
            other => Err(Error::Config(format!(
                "unknown model mode '{other}' (literal|thevenin)"
            ))),
        }
    }
}

/// Asymptote and time constant of the charging (radio off) and discharging
/// (radio on) phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacitorModel {
    pub v_inf_off: f64,
    pub tau_off: f64,
    pub v_inf_on: f64,
    pub tau_on: f64,
    pub mode: ModelMode,
}

impl CapacitorModel {
    pub fn new(
        v_inf_off: f64,
        tau_off: f64,
        v_inf_on: f64,
        tau_on: f64,
        mode: ModelMode,
    ) -> Result<Self> {
        if !(tau_on > 0.0 && tau_off > 0.0) {
            return Err(Error::Model(format!(
                "time constants must be positive (on {tau_on} s, off {tau_off} s)"
            )));
        }
        if v_inf_on >= v_inf_off {
            return Err(Error::Model(format!(
                "discharge asymptote {v_inf_on} V must lie below charge asymptote {v_inf_off} V"
            )));
        }
        if tau_on >= tau_off {
            return Err(Error::Model(format!(
                "discharge time constant {tau_on} s must be shorter than charge time constant {tau_off} s"
            )));
        }
        Ok(Self {
            v_inf_off,
            tau_off,
            v_inf_on,
            tau_on,
            mode,
        })
    }

    /// Voltage range `[v_inf_on, v_inf_off]` visited by the cycle dynamics.
    pub fn range(&self) -> (f64, f64) {
        (self.v_inf_on, self.v_inf_off)
    }

    pub fn step_charge(&self, v0: f64, nu: f64) -> f64 {
        self.v_inf_off + (v0 - self.v_inf_off) * (-nu / self.tau_off).exp()
    }

    pub fn step_discharge(&self, v0: f64, airtime: f64) -> f64 {
        self.v_inf_on + (v0 - self.v_inf_on) * (-airtime / self.tau_on).exp()
    }

    /// One charge of length `nu` followed by one transmission of length `airtime`.
    pub fn cycle(&self, v0: f64, nu: f64, airtime: f64) -> f64 {
        self.step_discharge(self.step_charge(v0, nu), airtime)
    }

    pub fn cycle_constants(&self, airtime: f64) -> CycleConstants {
        CycleConstants::new(self, airtime)
    }

    /// Voltage `t` seconds into a phase that started at `v0`.
    pub fn voltage_in_phase(&self, phase: Phase, v0: f64, t: f64) -> f64 {
        match phase {
            Phase::Charge => self.step_charge(v0, t),
            Phase::Tx => self.step_discharge(v0, t),
        }
    }
}

pub fn build_model(cfg: &PhyConfig, mode: ModelMode) -> Result<CapacitorModel> {
    let r_h = cfg.r_h();
    let c = cfg.capacitance;
    let state = |r_l: f64| match mode {
        ModelMode::Literal => (r_l * cfg.v_h / r_h, r_l * c),
        ModelMode::Thevenin => (cfg.v_h * r_l / (r_h + r_l), r_h * r_l / (r_h + r_l) * c),
    };
    let (v_inf_off, tau_off) = state(cfg.r_load_off);
    let (v_inf_on, tau_on) = state(cfg.r_load_on);
    let model = CapacitorModel::new(v_inf_off, tau_off, v_inf_on, tau_on, mode)?;
    if mode == ModelMode::Thevenin && model.v_inf_off >= cfg.v_h {
        return Err(Error::Model(
            "Thevenin asymptote must stay below V_H".into(),
        ));
    }
    Ok(model)
}

/// Constants of the affine cycle map for one airtime:
/// `v_{n+1} = c1 + c2·X·(v_n − c3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub airtime: f64,
}

impl CycleConstants {
    pub fn new(model: &CapacitorModel, airtime: f64) -> Self {
        let c2 = (-airtime / model.tau_on).exp();
        let c3 = model.v_inf_off;
        let c1 = model.v_inf_on + (c3 - model.v_inf_on) * c2;
        Self {
            c1,
            c2,
            c3,
            airtime,
        }
    }

    /// End-of-cycle voltage for decay factor `x = e^{−ν/τ_off}`.
    pub fn next_voltage(&self, v: f64, x: f64) -> f64 {
        self.c1 + self.c2 * x * (v - self.c3)
    }

    /// Fixed point of the mean map for a given `E[X]`.
    pub fn mean_fixed_point(&self, mean_decay: f64) -> Result<f64> {
        let denom = self.c2 * mean_decay - 1.0;
        if denom.abs() < 1e-12 {
            return Err(Error::Singularity(format!(
                "c2·E[X] = {} is too close to 1 for the mean-voltage estimator",
                self.c2 * mean_decay
            )));
        }
        Ok((self.c2 * self.c3 * mean_decay - self.c1) / denom)
    }
}

/// Mean end-of-cycle voltage `(c2·c3·E[X] − c1) / (c2·E[X] − 1)`.
pub fn estimate_mean_voltage(
    scheme: &ChargingScheme,
    cc: &CycleConstants,
    model: &CapacitorModel,
) -> Result<f64> {
    let mean_decay = DecayFactorDistribution::new(*scheme, model.tau_off)?.mean()?;
    cc.mean_fixed_point(mean_decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Charge,
    Tx,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Charge => "charge",
            Phase::Tx => "tx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub time_s: f64,
    pub voltage: f64,
    pub phase: Phase,
    pub cycle: usize,
}

/// Sampled capacitor voltage over a run of cycles.
///
/// The last sample of every phase is the exact closed-form phase-end voltage;
/// the end of each `Tx` phase is the end-of-cycle state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoltageTrajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Sampled charging times, one per cycle.
    pub charging_times: Vec<f64>,
    end_of_cycle: Vec<usize>,
}

impl VoltageTrajectory {
    pub fn end_of_cycle_voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.end_of_cycle.iter().map(|&i| self.points[i].voltage)
    }

    pub fn cycles(&self) -> usize {
        self.end_of_cycle.len()
    }

    pub fn voltage_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.voltage), hi.max(p.voltage))
            })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    /// Samples recorded per phase, the exact phase end included. At least 1.
    pub samples_per_phase: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            samples_per_phase: 20,
        }
    }
}

/// Runs `n_cycles` charge/transmit cycles starting from `v0`.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    model: &CapacitorModel,
    v0: f64,
    scheme: &ChargingScheme,
    airtime: f64,
    n_cycles: usize,
    opts: TrajectoryOptions,
    rng: &mut R,
) -> Result<VoltageTrajectory> {
    let (lo, hi) = model.range();
    if !(lo..=hi).contains(&v0) {
        return Err(Error::Model(format!(
            "initial voltage {v0} V lies outside the reachable range [{lo}, {hi}] V"
        )));
    }
    let per_phase = opts.samples_per_phase.max(1);
    let mut traj = VoltageTrajectory {
        points: Vec::with_capacity(1 + 2 * per_phase * n_cycles),
        charging_times: Vec::with_capacity(n_cycles),
        end_of_cycle: Vec::with_capacity(n_cycles),
    };
    traj.points.push(TrajectoryPoint {
        time_s: 0.0,
        voltage: v0,
        phase: Phase::Charge,
        cycle: 0,
    });

    let mut t = 0.0;
    let mut v = v0;
    for cycle in 0..n_cycles {
        let nu = scheme.sample(rng);
        traj.charging_times.push(nu);
        for (phase, duration) in [(Phase::Charge, nu), (Phase::Tx, airtime)] {
            for j in 1..per_phase {
                let dt = duration * j as f64 / per_phase as f64;
                traj.points.push(TrajectoryPoint {
                    time_s: t + dt,
                    voltage: model.voltage_in_phase(phase, v, dt),
                    phase,
                    cycle,
                });
            }
            v = model.voltage_in_phase(phase, v, duration);
            t += duration;
            traj.points.push(TrajectoryPoint {
                time_s: t,
                voltage: v,
                phase,
                cycle,
            });
        }
        traj.end_of_cycle.push(traj.points.len() - 1);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn baseline(mode: ModelMode) -> CapacitorModel {
        build_model(&PhyConfig::default(), mode).unwrap()
    }

    #[test]
    fn literal_constants() {
        let m = baseline(ModelMode::Literal);
        assert_relative_eq!(
            m.v_inf_off,
            600_000.0 * 3.3 / 10_890.0,
            max_relative = 1e-12
        );
        assert!((m.v_inf_off - 181.82).abs() < 0.01);
        assert_relative_eq!(m.tau_off, 6000.0, max_relative = 1e-12);
        assert_relative_eq!(m.tau_on, 1.17, max_relative = 1e-12);
    }

    #[test]
    fn thevenin_constants() {
        let m = baseline(ModelMode::Thevenin);
        assert_relative_eq!(
            m.v_inf_off,
            3.3 * 600_000.0 / 610_890.0,
            max_relative = 1e-12
        );
        assert!((m.v_inf_off - 3.2412).abs() < 1e-4);
        assert!((m.tau_off - 106.96).abs() < 0.01);
        assert!(m.v_inf_off < 3.3);
    }

    #[test]
    fn symmetric_divider() {
        let cfg = PhyConfig {
            r_load_off: 10_890.0,
            r_load_on: 100.0,
            v_op: 1.0,
            ..PhyConfig::default()
        };
        let m = build_model(&cfg, ModelMode::Thevenin).unwrap();
        assert_relative_eq!(m.v_inf_off, 3.3 / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn step_identities() {
        let m = baseline(ModelMode::Thevenin);
        assert_eq!(m.step_charge(1.234, 0.0), 1.234);
        assert_eq!(m.step_discharge(1.234, 0.0), 1.234);
        assert_eq!(m.step_charge(m.v_inf_off, 77.0), m.v_inf_off);
        assert_eq!(m.step_discharge(m.v_inf_on, 0.3), m.v_inf_on);
    }

    #[test]
    fn thevenin_charge_from_default_start() {
        let m = baseline(ModelMode::Thevenin);
        let expected = m.v_inf_off + (1.8 - m.v_inf_off) * (-50.0 / m.tau_off).exp();
        assert_relative_eq!(m.step_charge(1.8, 50.0), expected, max_relative = 1e-15);
        // 3.2412 + (1.8 − 3.2412)·e^{−50/106.96}
        assert!((m.step_charge(1.8, 50.0) - 2.3389).abs() < 1e-3);
    }

    #[test]
    fn cycle_constants_relations() {
        let m = baseline(ModelMode::Thevenin);
        let cc = m.cycle_constants(0.204);
        assert_eq!(cc.c2, (-0.204 / m.tau_on).exp());
        assert_eq!(cc.c3, m.v_inf_off);
        assert_eq!(cc.c1, m.v_inf_on + (cc.c3 - m.v_inf_on) * cc.c2);
    }

    #[test]
    fn estimator_limits() {
        let m = baseline(ModelMode::Thevenin);
        // No airtime: c2 = 1, c1 = c3, so the estimator returns the charge asymptote.
        let cc = m.cycle_constants(0.0);
        assert_relative_eq!(
            cc.mean_fixed_point(0.7).unwrap(),
            m.v_inf_off,
            max_relative = 1e-14
        );
        // No charging: X = 1, the estimator collapses onto the discharge asymptote.
        let cc = m.cycle_constants(0.204);
        assert_relative_eq!(
            cc.mean_fixed_point(1.0).unwrap(),
            m.v_inf_on,
            max_relative = 1e-9
        );
        let singular = m.cycle_constants(0.0);
        assert!(matches!(
            singular.mean_fixed_point(1.0),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn empty_trajectory() {
        let m = baseline(ModelMode::Thevenin);
        let ud = ChargingScheme::uniform(0.0, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = simulate_trajectory(
            &m,
            1.8,
            &ud,
            0.204,
            0,
            TrajectoryOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(t.points.len(), 1);
        assert_eq!((t.points[0].time_s, t.points[0].voltage), (0.0, 1.8));
    }

    #[test]
    fn trajectory_rejects_out_of_range_start() {
        let m = baseline(ModelMode::Thevenin);
        let ud = ChargingScheme::uniform(0.0, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(simulate_trajectory(
            &m,
            3.3,
            &ud,
            0.204,
            3,
            TrajectoryOptions::default(),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn trajectory_sample_layout() {
        let m = baseline(ModelMode::Thevenin);
        let ud = ChargingScheme::uniform(0.0, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let opts = TrajectoryOptions {
            samples_per_phase: 4,
        };
        let t = simulate_trajectory(&m, 1.8, &ud, 0.204, 3, opts, &mut rng).unwrap();
        assert_eq!(t.points.len(), 1 + 3 * 2 * 4);
        assert_eq!(t.cycles(), 3);
        assert!(t.points.windows(2).all(|w| w[1].time_s >= w[0].time_s));
        // End-of-cycle voltages replay through the closed form.
        let mut v = 1.8;
        for (nu, end) in t.charging_times.iter().zip(t.end_of_cycle_voltages()) {
            v = m.cycle(v, *nu, 0.204);
            assert_eq!(v, end);
        }
    }
}
