//! Adaptive charging-time plans: per-SF charging schemes chosen either for a
//! constant duty cycle (CDC) or for an equal mean capacitor voltage (CVE).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacitor::{CapacitorModel, CycleConstants};
use crate::error::{Error, Result};
use crate::markov::{steady_state, DecayFactorDistribution, SteadyState, SteadyStateOptions};
use crate::phy::{
    etsi_duty_cycle, ChargingScheme, PhyConfig, SchemeKind, SfEntry, ETSI_DUTY_CYCLE_CAP, SF_TABLE,
};

/// Smallest solved `b` or `w`, seconds.
pub const MIN_FREE_PARAMETER_S: f64 = 1.0;

/// Required accuracy of the solved `E[X]`.
pub const DECAY_TARGET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    Cdc,
    Cve,
}

impl ActKind {
    pub fn label(self) -> &'static str {
        match self {
            ActKind::Cdc => "cdc",
            ActKind::Cve => "cve",
        }
    }
}

impl std::str::FromStr for ActKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cdc" => Ok(ActKind::Cdc),
            "cve" => Ok(ActKind::Cve),
            other => Err(Error::Config(format!(
                "unknown ACT scheme '{other}' (cdc|cve)"
            ))),
        }
    }
}

/// Fixed parameter of each family: `a` for Uniform, `k` for Weibull.
#[derive(Debug, Clone, PartialEq)]
pub struct ActOptions {
    pub uniform_low: f64,
    pub weibull_shape: f64,
    pub steady_state: SteadyStateOptions,
}

impl Default for ActOptions {
    fn default() -> Self {
        Self {
            uniform_low: 0.0,
            weibull_shape: 1.0,
            steady_state: SteadyStateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SfPlan {
    pub sf: u8,
    pub airtime_s: f64,
    pub scheme: ChargingScheme,
    pub mean_nu_s: f64,
    /// `τ / (E[ν] + τ)`.
    pub duty_cycle: f64,
    pub etsi_compliant: bool,
    pub mean_decay: f64,
    /// Closed-form mean-voltage estimate.
    pub predicted_mean_v: f64,
    pub stationary_mean_v: f64,
    pub stationary_std_v: f64,
    pub predicted_outage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActPlan {
    pub kind: ActKind,
    /// θ for CDC, ϑ for CVE.
    pub target: f64,
    pub dist_kind: SchemeKind,
    pub entries: Vec<SfPlan>,
}

impl ActPlan {
    pub fn schemes(&self) -> [ChargingScheme; 6] {
        std::array::from_fn(|n| self.entries[n].scheme)
    }
}

/// Steady states backing a plan, one per SF.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub plan: ActPlan,
    pub states: Vec<SteadyState>,
}

/// `E[ν] = θ·τ` per SF: Uniform `(a, a + 2(θτ − a))`, Weibull `(k, θτ/Γ(1+1/k))`.
pub fn plan_cdc(
    theta: f64,
    kind: SchemeKind,
    cfg: &PhyConfig,
    model: &CapacitorModel,
    opts: &ActOptions,
) -> Result<PlanResult> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Config(format!(
            "CDC multiplier must be positive, got {theta}"
        )));
    }
    let schemes = SF_TABLE
        .iter()
        .map(|e| cdc_scheme(theta * e.airtime_s, kind, e, opts))
        .collect::<Result<Vec<_>>>()?;
    finish(ActKind::Cdc, theta, kind, schemes, cfg, model, opts)
}

fn cdc_scheme(
    mean: f64,
    kind: SchemeKind,
    e: &SfEntry,
    opts: &ActOptions,
) -> Result<ChargingScheme> {
    match kind {
        SchemeKind::Uniform => {
            let a = opts.uniform_low;
            if mean <= a {
                return Err(Error::Infeasible {
                    sf: e.sf,
                    reason: format!(
                        "target mean {mean} s does not exceed the fixed lower bound a = {a} s"
                    ),
                });
            }
            ChargingScheme::uniform(a, 2.0 * mean - a)
        }
        SchemeKind::Weibull => {
            let k = opts.weibull_shape;
            ChargingScheme::weibull(k, mean / statrs::function::gamma::gamma(1.0 + 1.0 / k))
        }
    }
}

/// `E[X]` that puts the estimator's mean voltage at `target_v`.
pub fn cve_target_decay(target_v: f64, cc: &CycleConstants) -> f64 {
    (target_v - cc.c1) / (cc.c2 * (target_v - cc.c3))
}

/// Mean end-of-cycle voltage `ϑ·𝒱` for every SF.
pub fn plan_cve(
    vartheta: f64,
    kind: SchemeKind,
    cfg: &PhyConfig,
    model: &CapacitorModel,
    opts: &ActOptions,
) -> Result<PlanResult> {
    if !(vartheta > 0.0 && vartheta.is_finite()) {
        return Err(Error::Config(format!(
            "CVE multiplier must be positive, got {vartheta}"
        )));
    }
    let target_v = vartheta * cfg.v_op;
    let schemes = SF_TABLE
        .iter()
        .map(|e| {
            let cc = model.cycle_constants(e.airtime_s);
            let target = cve_target_decay(target_v, &cc);
            if !(target > 0.0 && target < 1.0) {
                return Err(Error::Infeasible {
                    sf: e.sf,
                    reason: format!(
                        "mean voltage {target_v} V needs E[X] = {target}, outside (0, 1)"
                    ),
                });
            }
            let (scheme, free) = match kind {
                SchemeKind::Uniform => {
                    let b = solve_uniform_high(target, opts.uniform_low, model.tau_off)?;
                    (ChargingScheme::uniform(opts.uniform_low, b)?, b)
                }
                SchemeKind::Weibull => {
                    let w = solve_weibull_scale(target, opts.weibull_shape, model.tau_off)?;
                    (ChargingScheme::weibull(opts.weibull_shape, w)?, w)
                }
            };
            if free < MIN_FREE_PARAMETER_S {
                return Err(Error::Infeasible {
                    sf: e.sf,
                    reason: format!(
                        "solved parameter {free:.3e} s is below the {MIN_FREE_PARAMETER_S} s floor"
                    ),
                });
            }
            Ok(scheme)
        })
        .collect::<Result<Vec<_>>>()?;
    finish(ActKind::Cve, vartheta, kind, schemes, cfg, model, opts)
}

/// `b` with `E[e^{−ν/τ_off}] = target` for `ν ~ U(a, b)`.
pub fn solve_uniform_high(target: f64, a: f64, tau_off: f64) -> Result<f64> {
    let mean = |b: f64| {
        DecayFactorDistribution::new(ChargingScheme::Uniform { low: a, high: b }, tau_off)?.mean()
    };
    let at_a = (-a / tau_off).exp();
    if target >= at_a {
        return Err(Error::Numerical(format!(
            "E[X] = {target} needs b <= a = {a}"
        )));
    }
    bisect_decreasing(mean, a, a + tau_off, target)
}

/// `w` with `E[e^{−ν/τ_off}] = target` for `ν ~ Weibull(k, w)`.
pub fn solve_weibull_scale(target: f64, k: f64, tau_off: f64) -> Result<f64> {
    let mean = |w: f64| {
        DecayFactorDistribution::new(ChargingScheme::Weibull { shape: k, scale: w }, tau_off)?
            .mean()
    };
    bisect_decreasing(mean, 0.0, tau_off, target)
}

/// Closed-form inverse for exponential charging times.
pub fn weibull_k1_scale(target: f64, tau_off: f64) -> f64 {
    tau_off * (1.0 - target) / target
}

/// Root of a decreasing `f(x) = target` for `x > lo`, growing the bracket
/// from `hi` as needed.
fn bisect_decreasing<F: Fn(f64) -> Result<f64>>(
    f: F,
    lo: f64,
    mut hi: f64,
    target: f64,
) -> Result<f64> {
    let mut expansions = 0;
    while f(hi)? > target {
        hi = lo + 2.0 * (hi - lo);
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numerical(format!(
                "could not bracket E[X] = {target}"
            )));
        }
    }
    let mut lo = lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if (v - target).abs() < DECAY_TARGET_TOL * 1e-3 || hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if (f(mid)? - target).abs() < DECAY_TARGET_TOL {
        Ok(mid)
    } else {
        Err(Error::Numerical(format!(
            "bisection for E[X] = {target} stalled"
        )))
    }
}

fn finish(
    kind: ActKind,
    target: f64,
    dist_kind: SchemeKind,
    schemes: Vec<ChargingScheme>,
    cfg: &PhyConfig,
    model: &CapacitorModel,
    opts: &ActOptions,
) -> Result<PlanResult> {
    let states = SF_TABLE
        .par_iter()
        .zip(schemes.par_iter())
        .map(|(e, s)| steady_state(model, s, e.airtime_s, cfg.v_op, &opts.steady_state))
        .collect::<Result<Vec<_>>>()?;
    let entries = SF_TABLE
        .iter()
        .zip(&states)
        .map(|(e, st)| {
            let duty = etsi_duty_cycle(&st.scheme, e.airtime_s);
            SfPlan {
                sf: e.sf,
                airtime_s: e.airtime_s,
                scheme: st.scheme,
                mean_nu_s: st.scheme.mean(),
                duty_cycle: duty,
                etsi_compliant: duty <= ETSI_DUTY_CYCLE_CAP * (1.0 + 1e-12),
                mean_decay: st.mean_decay,
                predicted_mean_v: st.estimator_mean,
                stationary_mean_v: st.distribution.mean(),
                stationary_std_v: st.distribution.std_dev(),
                predicted_outage: st.outage,
            }
        })
        .collect();
    Ok(PlanResult {
        plan: ActPlan {
            kind,
            target,
            dist_kind,
            entries,
        },
        states,
    })
}
