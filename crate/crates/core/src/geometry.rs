//! Uplink coverage on the deployment disk: path gain, SNR and SIR success
//! under Rayleigh fading, connection-probability bounds, and sampling of the
//! device point process.
//!
//! Interference at the gateway comes only from devices in the same SF ring,
//! each on air with probability `p`, so interferers form a thinned PPP of
//! intensity `p·λ` on the victim's annulus.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{
    collision_fraction, occupancy_fraction, sf_for_distance, ChargingScheme, PhyConfig, SfEntry,
    SF_TABLE,
};
use crate::special::hyp2f1_special;

/// Distances closer than this are clamped before evaluating the path gain.
pub const MIN_DISTANCE_KM: f64 = 1e-3;

/// Default Monte Carlo sample count for the connection upper bound.
pub const DEFAULT_UPPER_BOUND_SAMPLES: usize = 100_000;

pub fn clamp_distance(d_km: f64) -> f64 {
    d_km.max(MIN_DISTANCE_KM)
}

/// `g(d) = (ψ / 4πd)^η` with `d` converted to meters.
pub fn path_gain(d_km: f64, cfg: &PhyConfig) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::Singularity(format!(
            "path gain is unbounded at distance {d_km} km"
        )));
    }
    Ok((cfg.wavelength_m / (4.0 * PI * d_km * 1e3)).powf(cfg.eta))
}

/// `P[|h|² ≥ 𝒩·q_SF / (P_T·g(d))]` for the SF allocated at `d_km`.
pub fn snr_success(d_km: f64, cfg: &PhyConfig) -> Result<f64> {
    let sf = sf_for_distance(d_km, cfg)?;
    snr_success_for(d_km, &sf, cfg)
}

fn snr_success_for(d_km: f64, sf: &SfEntry, cfg: &PhyConfig) -> Result<f64> {
    if cfg.noise_w == 0.0 {
        return Ok(1.0);
    }
    let g = path_gain(clamp_distance(d_km), cfg)?;
    Ok((-cfg.noise_w * sf.snr_threshold() / (cfg.p_t * g)).exp())
}

/// `∫ r / (1 + r^η/(℘d^η)) dr` over the ring containing `d_km`, in km².
///
/// The antiderivative is `(r²/2)·₂F₁(1, 2/η; 1+2/η; −r^η/(℘d^η))`, which
/// vanishes at `r = 0`.
pub fn interference_integral(d_km: f64, cfg: &PhyConfig) -> Result<f64> {
    let ring = cfg.ring_index(d_km)?;
    let (lo, hi) = cfg.ring_edges(ring);
    let d = clamp_distance(d_km);
    let antiderivative = |x: f64| -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let z = -(x / d).powf(cfg.eta) / cfg.sir_threshold;
        Ok(0.5 * x * x * hyp2f1_special(cfg.eta, z)?)
    };
    Ok(antiderivative(hi)? - antiderivative(lo)?)
}

/// SIR success `exp(−2πpλ·∫…)` for a victim at `d_km` with co-SF activity `p`.
pub fn sir_success(d_km: f64, p: f64, cfg: &PhyConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Model(format!(
            "collision fraction must be a probability, got {p}"
        )));
    }
    if p == 0.0 || cfg.lambda_per_km2 == 0.0 {
        return Ok(1.0);
    }
    Ok((-sir_exponent(d_km, cfg)? * p).exp())
}

/// `2πλ·∫…`, so that the SIR success is `e^{−p·exponent}`.
pub fn sir_exponent(d_km: f64, cfg: &PhyConfig) -> Result<f64> {
    Ok(2.0 * PI * cfg.lambda_per_km2 * interference_integral(d_km, cfg)?)
}

/// Bounds on the probability that an uplink from `d_km` clears both the SNR
/// and SIR thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConnectionBounds {
    /// `snr_success · sir_success`.
    pub lower: f64,
    /// Monte Carlo estimate of `E[exp(−max(𝒩q, ℘ℐ)/(P_T g))]`.
    pub upper: f64,
    /// Standard error of `upper`.
    pub upper_std_err: f64,
}

/// Lower bound in closed form and upper bound by Monte Carlo over interferer
/// configurations.
///
/// The sampler uses `e^{−A−BI}` as a control variate: its expectation is the
/// lower bound, and every sample of `e^{−max(A,BI)} − e^{−A−BI}` is
/// nonnegative, so `upper ≥ lower` holds for every seed.
pub fn connection_prob<R: Rng + ?Sized>(
    d_km: f64,
    p: f64,
    cfg: &PhyConfig,
    samples: usize,
    rng: &mut R,
) -> Result<ConnectionBounds> {
    let sf = sf_for_distance(d_km, cfg)?;
    let snr = snr_success_for(d_km, &sf, cfg)?;
    let sir = sir_success(d_km, p, cfg)?;
    let lower = snr * sir;
    let ring = sf.ring();
    let (lo, hi) = cfg.ring_edges(ring);
    let mean_interferers = p * cfg.lambda_per_km2 * PI * (hi * hi - lo * lo);
    if samples == 0 || mean_interferers == 0.0 {
        return Ok(ConnectionBounds {
            lower,
            upper: lower,
            upper_std_err: 0.0,
        });
    }
    let g_victim = path_gain(clamp_distance(d_km), cfg)?;
    let a = cfg.noise_w * sf.snr_threshold() / (cfg.p_t * g_victim);
    let count = Poisson::new(mean_interferers).map_err(|e| Error::Numerical(e.to_string()))?;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let n = count.sample(rng) as usize;
        let mut bi = 0.0;
        for _ in 0..n {
            let r = (lo * lo + rng.random::<f64>() * (hi * hi - lo * lo)).sqrt();
            let fade: f64 = Exp1.sample(rng);
            bi += path_gain(clamp_distance(r), cfg)? * fade;
        }
        bi *= cfg.sir_threshold / g_victim;
        let diff = (-a.max(bi)).exp() - (-a - bi).exp();
        sum += diff;
        sum_sq += diff * diff;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(ConnectionBounds {
        lower,
        upper: (lower + mean).min(1.0),
        upper_std_err: (var / n).sqrt(),
    })
}

/// Which per-device activity enters the SIR term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollisionModel {
    /// `p = 𝓔·E[τ/(ν+τ)]`.
    #[default]
    Duty,
    /// `p = 𝓔·τ/(E[ν]+τ)`, the fraction of time a device is on air.
    Occupancy,
}

impl std::str::FromStr for CollisionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "duty" => Ok(CollisionModel::Duty),
            "occupancy" => Ok(CollisionModel::Occupancy),
            other => Err(Error::Config(format!(
                "unknown collision model '{other}' (duty|occupancy)"
            ))),
        }
    }
}

/// Co-SF activity `p` for a ring with availability `energy_avail`.
pub fn ring_activity(
    model: CollisionModel,
    energy_avail: f64,
    scheme: &ChargingScheme,
    airtime_s: f64,
) -> Result<f64> {
    match model {
        CollisionModel::Duty => collision_fraction(energy_avail, scheme, airtime_s),
        CollisionModel::Occupancy => Ok(occupancy_fraction(energy_avail, scheme, airtime_s)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageOptions {
    pub collision: CollisionModel,
    /// Monte Carlo samples for the upper bound; 0 disables it.
    pub upper_bound_samples: usize,
    pub seed: u64,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            collision: CollisionModel::Duty,
            upper_bound_samples: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveragePoint {
    pub distance_km: f64,
    pub sf: u8,
    pub snr_success: f64,
    pub sir_success: f64,
    pub conn_lower: f64,
    pub conn_upper: Option<f64>,
    pub energy_avail: f64,
    pub overall_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageProfile {
    pub points: Vec<CoveragePoint>,
    /// `𝓔` per ring.
    pub energy_avail: [f64; 6],
    /// `p` per ring.
    pub collision_fraction: [f64; 6],
}

/// `𝓠 = 𝓔·𝓒` at each distance, with one charging scheme for every ring.
pub fn coverage_profile(
    cfg: &PhyConfig,
    scheme: &ChargingScheme,
    outage_per_ring: &[f64; 6],
    distances_km: &[f64],
    opts: &CoverageOptions,
) -> Result<CoverageProfile> {
    coverage_profile_per_ring(cfg, &[*scheme; 6], outage_per_ring, distances_km, opts)
}

/// As [`coverage_profile`] with a scheme per ring, e.g. from an adaptive plan.
pub fn coverage_profile_per_ring(
    cfg: &PhyConfig,
    schemes: &[ChargingScheme; 6],
    outage_per_ring: &[f64; 6],
    distances_km: &[f64],
    opts: &CoverageOptions,
) -> Result<CoverageProfile> {
    let energy_avail: [f64; 6] =
        std::array::from_fn(|n| (1.0 - outage_per_ring[n]).clamp(0.0, 1.0));
    let mut collision = [0.0; 6];
    for n in 0..6 {
        collision[n] = ring_activity(
            opts.collision,
            energy_avail[n],
            &schemes[n],
            SF_TABLE[n].airtime_s,
        )?;
    }
    let points = distances_km
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let sf = sf_for_distance(d, cfg)?;
            let ring = sf.ring();
            let p = collision[ring];
            let snr = snr_success_for(d, &sf, cfg)?;
            let sir = sir_success(d, p, cfg)?;
            let conn_upper = if opts.upper_bound_samples > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(i as u64 + 1);
                Some(connection_prob(d, p, cfg, opts.upper_bound_samples, &mut rng)?.upper)
            } else {
                None
            };
            let conn_lower = snr * sir;
            Ok(CoveragePoint {
                distance_km: d,
                sf: sf.sf,
                snr_success: snr,
                sir_success: sir,
                conn_lower,
                conn_upper,
                energy_avail: energy_avail[ring],
                overall_q: energy_avail[ring] * conn_lower,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoverageProfile {
        points,
        energy_avail,
        collision_fraction: collision,
    })
}

/// `n` evenly spaced distances on `(0, R]`.
pub fn distance_grid(cfg: &PhyConfig, n: usize) -> Vec<f64> {
    let r = cfg.ring_radii_km[6];
    (1..=n).map(|i| r * i as f64 / n as f64).collect()
}

/// Availability maximizing `𝓔·e^{−A𝓔}` on `[0, 1]`.
pub fn optimal_energy_avail(a: f64) -> f64 {
    if a <= 1.0 {
        1.0
    } else {
        1.0 / a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Device {
    pub x_km: f64,
    pub y_km: f64,
    pub distance_km: f64,
    pub ring: usize,
    pub sf: u8,
    pub airtime_s: f64,
    /// Probes are measured like any device but do not interfere with others.
    pub probe: bool,
}

impl Device {
    pub fn at(x_km: f64, y_km: f64, cfg: &PhyConfig) -> Result<Self> {
        let distance_km = x_km.hypot(y_km);
        let sf = sf_for_distance(distance_km, cfg)?;
        Ok(Self {
            x_km,
            y_km,
            distance_km,
            ring: sf.ring(),
            sf: sf.sf,
            airtime_s: sf.airtime_s,
            probe: false,
        })
    }
}

/// Device positions and SF assignments for one network draw.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NetworkRealization {
    pub devices: Vec<Device>,
}

impl NetworkRealization {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// Devices per ring, probes excluded.
    pub fn ring_counts(&self) -> [usize; 6] {
        let mut counts = [0; 6];
        for d in self.devices.iter().filter(|d| !d.probe) {
            counts[d.ring] += 1;
        }
        counts
    }

    /// Adds a non-interfering probe at `distance_km` on the x axis.
    pub fn add_probe(&mut self, distance_km: f64, cfg: &PhyConfig) -> Result<usize> {
        let mut device = Device::at(distance_km, 0.0, cfg)?;
        device.probe = true;
        self.devices.push(device);
        Ok(self.devices.len() - 1)
    }

    /// Adds one probe at the midpoint of every ring and returns their indices.
    pub fn add_ring_probes(&mut self, cfg: &PhyConfig) -> Result<[usize; 6]> {
        let mut idx = [0; 6];
        for (n, slot) in idx.iter_mut().enumerate() {
            *slot = self.add_probe(cfg.ring_midpoint(n), cfg)?;
        }
        Ok(idx)
    }
}

fn uniform_on_disk<R: Rng + ?Sized>(radius_km: f64, rng: &mut R) -> (f64, f64) {
    let r = radius_km * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    (r * theta.cos(), r * theta.sin())
}

/// Poisson number of devices with mean `λπR²`, placed uniformly on the disk.
pub fn sample_network(cfg: &PhyConfig, seed: u64) -> Result<NetworkRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = cfg.expected_devices();
    let n = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    place_devices(cfg, n, &mut rng)
}

/// Exactly `n` devices placed uniformly on the disk.
pub fn sample_network_fixed(cfg: &PhyConfig, n: usize, seed: u64) -> Result<NetworkRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    place_devices(cfg, n, &mut rng)
}

fn place_devices<R: Rng + ?Sized>(
    cfg: &PhyConfig,
    n: usize,
    rng: &mut R,
) -> Result<NetworkRealization> {
    let radius = cfg.ring_radii_km[6];
    let devices = (0..n)
        .map(|_| {
            let (x, y) = uniform_on_disk(radius, rng);
            Device::at(x, y, cfg).or_else(|_| Device::at(x.clamp(-radius, radius), 0.0, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkRealization { devices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_square_at_eta_two() {
        let cfg = PhyConfig {
            eta: 2.0,
            ..PhyConfig::default()
        };
        let ratio = path_gain(1.0, &cfg).unwrap() / path_gain(2.0, &cfg).unwrap();
        assert_relative_eq!(ratio, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn path_gain_rejects_zero() {
        assert!(matches!(
            path_gain(0.0, &PhyConfig::default()),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn snr_limits() {
        let cfg = PhyConfig::default();
        assert!(snr_success(0.0, &cfg).unwrap() > 0.999_999);
        let quiet = PhyConfig {
            noise_w: 0.0,
            ..cfg.clone()
        };
        assert_eq!(snr_success(5.5, &quiet).unwrap(), 1.0);
        assert!(snr_success(7.0, &cfg).is_err());
    }

    #[test]
    fn sir_trivial_cases() {
        let cfg = PhyConfig::default();
        assert_eq!(sir_success(2.5, 0.0, &cfg).unwrap(), 1.0);
        let empty = PhyConfig {
            lambda_per_km2: 0.0,
            ..cfg.clone()
        };
        assert_eq!(sir_success(2.5, 0.3, &empty).unwrap(), 1.0);
        assert!(sir_success(2.5, 1.5, &cfg).is_err());
    }

    #[test]
    fn sir_at_eta_two_has_log_form() {
        // At η = 2 the ring integral is (℘d²/2)·ln((℘d² + l_hi²)/(℘d² + l_lo²)).
        let cfg = PhyConfig {
            eta: 2.0,
            ..PhyConfig::default()
        };
        let d = 2.4;
        let k = cfg.sir_threshold * d * d;
        let expected = 0.5 * k * ((k + 9.0) / (k + 4.0)).ln();
        assert_relative_eq!(
            interference_integral(d, &cfg).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn trivial_connection_bounds() {
        let cfg = PhyConfig {
            noise_w: 0.0,
            ..PhyConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = connection_prob(3.3, 0.0, &cfg, 1000, &mut rng).unwrap();
        assert_eq!((b.lower, b.upper), (1.0, 1.0));
    }

    #[test]
    fn dead_network_coverage() {
        let cfg = PhyConfig::default();
        let ud = ChargingScheme::uniform(0.0, 100.0).unwrap();
        let grid = distance_grid(&cfg, 30);
        let prof =
            coverage_profile(&cfg, &ud, &[1.0; 6], &grid, &CoverageOptions::default()).unwrap();
        for pt in &prof.points {
            assert_eq!(pt.overall_q, 0.0);
            assert_eq!(pt.sir_success, 1.0);
            assert_eq!(pt.conn_lower, snr_success(pt.distance_km, &cfg).unwrap());
        }
    }

    #[test]
    fn optimal_availability() {
        assert_eq!(optimal_energy_avail(0.5), 1.0);
        assert_eq!(optimal_energy_avail(4.0), 0.25);
    }

    #[test]
    fn fixed_network_is_reproducible() {
        let cfg = PhyConfig::default();
        let a = sample_network_fixed(&cfg, 50, 9).unwrap();
        let b = sample_network_fixed(&cfg, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.devices.iter().all(|d| d.distance_km <= 6.0));
    }

    #[test]
    fn empty_ppp() {
        let cfg = PhyConfig {
            lambda_per_km2: 0.0,
            ..PhyConfig::default()
        };
        assert!(sample_network(&cfg, 3).unwrap().is_empty());
    }

    #[test]
    fn probes_sit_at_ring_midpoints() {
        let cfg = PhyConfig::default();
        let mut net = NetworkRealization::default();
        let idx = net.add_ring_probes(&cfg).unwrap();
        for (n, &i) in idx.iter().enumerate() {
            assert_eq!(net.devices[i].ring, n);
            assert!(net.devices[i].probe);
        }
        assert_eq!(net.ring_counts(), [0; 6]);
    }
}
