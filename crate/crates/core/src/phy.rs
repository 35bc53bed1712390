//! Radio, harvester and deployment constants plus the charging-time
//! distributions that drive every other model.
//!
//! All quantities are SI internally (volts, ohms, farads, watts, seconds,
//! meters) except distances, which stay in kilometers to match the ring
//! layout and the PPP intensity given per km².

use rand::Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Payload length assumed for every uplink, in bytes.
pub const PAYLOAD_BYTES: f64 = 25.0;

/// Thermal noise density at room temperature.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Receiver noise figure folded into the default noise floor.
pub const DEFAULT_NOISE_FIGURE_DB: f64 = 6.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise floor over `bandwidth_hz` for a receiver with `noise_figure_db`.
pub fn thermal_noise_watts(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    dbm_to_watts(THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db)
}

/// One row of the LoRa characteristics table (25 byte payload, 125 kHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SfEntry {
    pub sf: u8,
    pub bitrate_kbps: f64,
    /// Time on air of one packet, seconds.
    pub airtime_s: f64,
    /// Demodulation SNR floor in dB (negative).
    pub snr_threshold_db: f64,
}

impl SfEntry {
    /// Linear SNR threshold `q_SF`.
    pub fn snr_threshold(&self) -> f64 {
        db_to_linear(self.snr_threshold_db)
    }

    /// Ring index 0..6 (SF7 is ring 0).
    pub fn ring(&self) -> usize {
        usize::from(self.sf - 7)
    }
}

pub const SF_TABLE: [SfEntry; 6] = [
    SfEntry {
        sf: 7,
        bitrate_kbps: 5.47,
        airtime_s: 0.0366,
        snr_threshold_db: -6.0,
    },
    SfEntry {
        sf: 8,
        bitrate_kbps: 3.13,
        airtime_s: 0.064,
        snr_threshold_db: -9.0,
    },
    SfEntry {
        sf: 9,
        bitrate_kbps: 1.76,
        airtime_s: 0.113,
        snr_threshold_db: -12.0,
    },
    SfEntry {
        sf: 10,
        bitrate_kbps: 0.98,
        airtime_s: 0.204,
        snr_threshold_db: -15.0,
    },
    SfEntry {
        sf: 11,
        bitrate_kbps: 0.54,
        airtime_s: 0.372,
        snr_threshold_db: -17.5,
    },
    SfEntry {
        sf: 12,
        bitrate_kbps: 0.29,
        airtime_s: 0.682,
        snr_threshold_db: -20.0,
    },
];

pub fn sf_entry(sf: u8) -> Result<SfEntry> {
    SF_TABLE
        .iter()
        .find(|e| e.sf == sf)
        .copied()
        .ok_or_else(|| Error::Config(format!("spreading factor {sf} is not in 7..=12")))
}

/// Electrical, radio and deployment parameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhyConfig {
    /// Harvester open-circuit voltage, V.
    pub v_h: f64,
    /// Harvested power, W.
    pub p_h: f64,
    /// Storage capacitance, F.
    pub capacitance: f64,
    /// Load with the radio off, Ω.
    pub r_load_off: f64,
    /// Load with the radio transmitting, Ω.
    pub r_load_on: f64,
    /// Radio operating threshold, V.
    pub v_op: f64,
    /// Capacitor voltage at t = 0, V.
    pub v_initial: f64,
    /// Transmit power, W.
    pub p_t: f64,
    /// Transmit chain overhead, W.
    pub p_op: f64,
    pub bandwidth_hz: f64,
    /// Path-loss exponent.
    pub eta: f64,
    /// Carrier wavelength, m.
    pub wavelength_m: f64,
    /// Noise power at the gateway, W.
    pub noise_w: f64,
    /// Linear SIR capture threshold.
    pub sir_threshold: f64,
    /// Deployment disk radius, km.
    pub radius_km: f64,
    /// Device intensity, devices per km².
    pub lambda_per_km2: f64,
    /// SF ring edges l0..l6, km.
    pub ring_radii_km: [f64; 7],
}

impl Default for PhyConfig {
    fn default() -> Self {
        let radius_km = 6.0;
        let bandwidth_hz = 125e3;
        Self {
            v_h: 3.3,
            p_h: 1e-3,
            capacitance: 10e-3,
            r_load_off: 600e3,
            r_load_on: 117.0,
            v_op: 1.8,
            v_initial: 1.8,
            p_t: dbm_to_watts(13.0),
            p_op: dbm_to_watts(6.0),
            bandwidth_hz,
            eta: 2.75,
            wavelength_m: 0.345,
            noise_w: thermal_noise_watts(bandwidth_hz, DEFAULT_NOISE_FIGURE_DB),
            sir_threshold: db_to_linear(1.0),
            radius_km,
            lambda_per_km2: 4.0,
            ring_radii_km: equal_width_rings(radius_km),
        }
    }
}

/// Six annuli of equal width covering a disk of `radius_km`.
pub fn equal_width_rings(radius_km: f64) -> [f64; 7] {
    std::array::from_fn(|n| radius_km * n as f64 / 6.0)
}

impl PhyConfig {
    /// Harvester series resistance `V_H² / P_H`.
    pub fn r_h(&self) -> f64 {
        self.v_h * self.v_h / self.p_h
    }

    pub fn expected_devices(&self) -> f64 {
        self.lambda_per_km2 * std::f64::consts::PI * self.radius_km * self.radius_km
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_h", self.v_h),
            ("p_h", self.p_h),
            ("capacitance", self.capacitance),
            ("r_load_off", self.r_load_off),
            ("r_load_on", self.r_load_on),
            ("v_op", self.v_op),
            ("p_t", self.p_t),
            ("bandwidth_hz", self.bandwidth_hz),
            ("wavelength_m", self.wavelength_m),
            ("sir_threshold", self.sir_threshold),
            ("radius_km", self.radius_km),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        for (name, value) in [
            ("noise_w", self.noise_w),
            ("p_op", self.p_op),
            ("lambda_per_km2", self.lambda_per_km2),
            ("v_initial", self.v_initial),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {value}"
                )));
            }
        }
        if !(self.eta >= 2.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "path-loss exponent must be >= 2, got {}",
                self.eta
            )));
        }
        if self.r_load_on >= self.r_load_off {
            return Err(Error::Config(format!(
                "radio-on load ({} Ω) must be below radio-off load ({} Ω)",
                self.r_load_on, self.r_load_off
            )));
        }
        if self.v_op >= self.v_h {
            return Err(Error::Config(format!(
                "operating threshold {} V must be below the harvester voltage {} V",
                self.v_op, self.v_h
            )));
        }
        let l = &self.ring_radii_km;
        if l[0] < 0.0 || l.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(format!(
                "ring radii must be non-negative and nondecreasing, got {l:?}"
            )));
        }
        if (l[6] - self.radius_km).abs() > 1e-9 * self.radius_km {
            return Err(Error::Config(format!(
                "outermost ring radius {} km must equal the deployment radius {} km",
                l[6], self.radius_km
            )));
        }
        Ok(())
    }

    /// Ring index (0 for SF7 ... 5 for SF12) of a device at distance `d_km`.
    ///
    /// Ring `n` is the half-open annulus `(l_n, l_{n+1}]`; anything closer than
    /// `l_1`, the gateway itself included, belongs to ring 0.
    pub fn ring_index(&self, d_km: f64) -> Result<usize> {
        let outer = self.ring_radii_km[6];
        if !(0.0..=outer).contains(&d_km) {
            return Err(Error::OutOfRange {
                distance_km: d_km,
                max_km: outer,
            });
        }
        Ok(self.ring_radii_km[1..]
            .iter()
            .position(|&edge| d_km <= edge)
            .unwrap_or(5))
    }

    /// Inner and outer radius of ring `ring`, km.
    pub fn ring_edges(&self, ring: usize) -> (f64, f64) {
        (self.ring_radii_km[ring], self.ring_radii_km[ring + 1])
    }

    pub fn ring_midpoint(&self, ring: usize) -> f64 {
        let (lo, hi) = self.ring_edges(ring);
        0.5 * (lo + hi)
    }
}

/// SF allocated to a device at distance `d_km` by the ring model.
pub fn sf_for_distance(d_km: f64, cfg: &PhyConfig) -> Result<SfEntry> {
    cfg.ring_index(d_km).map(|n| SF_TABLE[n])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "wd", alias = "weibull")]
    Weibull,
    #[serde(rename = "ud", alias = "uniform")]
    Uniform,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Weibull => "wd",
            SchemeKind::Uniform => "ud",
        }
    }
}

/// Distribution of the charging (inter-transmission) time ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ChargingScheme {
    Weibull { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
}

impl ChargingScheme {
    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(Error::Config(format!(
                "Weibull parameters must be positive, got k={shape}, w={scale}"
            )));
        }
        Ok(ChargingScheme::Weibull { shape, scale })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(low >= 0.0 && high > low && high.is_finite()) {
            return Err(Error::Config(format!(
                "Uniform parameters must satisfy 0 <= a < b, got a={low}, b={high}"
            )));
        }
        Ok(ChargingScheme::Uniform { low, high })
    }

    pub fn kind(&self) -> SchemeKind {
        match self {
            ChargingScheme::Weibull { .. } => SchemeKind::Weibull,
            ChargingScheme::Uniform { .. } => SchemeKind::Uniform,
        }
    }

    /// The two parameters in declaration order: (k, w) or (a, b).
    pub fn params(&self) -> (f64, f64) {
        match *self {
            ChargingScheme::Weibull { shape, scale } => (shape, scale),
            ChargingScheme::Uniform { low, high } => (low, high),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            ChargingScheme::Weibull { shape, scale } => {
                if x < 0.0 {
                    return 0.0;
                }
                let r = x / scale;
                if x == 0.0 {
                    return match shape {
                        k if k < 1.0 => f64::INFINITY,
                        k if k == 1.0 => 1.0 / scale,
                        _ => 0.0,
                    };
                }
                shape / scale * r.powf(shape - 1.0) * (-r.powf(shape)).exp()
            }
            ChargingScheme::Uniform { low, high } => {
                if (low..=high).contains(&x) {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ChargingScheme::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            ChargingScheme::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
        }
    }

    /// `P[ν > x]`, evaluated without cancellation in the tail.
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            ChargingScheme::Weibull { shape, scale } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-(x / scale).powf(shape)).exp()
                }
            }
            ChargingScheme::Uniform { low, high } => ((high - x) / (high - low)).clamp(0.0, 1.0),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            ChargingScheme::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            ChargingScheme::Uniform { low, high } => low + u * (high - low),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ChargingScheme::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
            ChargingScheme::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ChargingScheme::Weibull { shape, scale } => Weibull::new(scale, shape)
                .expect("parameters validated at construction")
                .sample(rng),
            ChargingScheme::Uniform { low, high } => rng.random_range(low..high),
        }
    }

    /// `E[g(ν)]` for a bounded `g`.
    ///
    /// Uniform schemes integrate against the density on `[a, b]`; Weibull
    /// schemes integrate `g` composed with the quantile function over
    /// `(0, 1)`, which stays bounded even when the density diverges at 0.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G, tol: Tolerance) -> Result<f64> {
        let integral = match *self {
            ChargingScheme::Uniform { low, high } => {
                let density = 1.0 / (high - low);
                quad::integrate(|x| g(x) * density, low, high, tol)?
            }
            ChargingScheme::Weibull { .. } => {
                quad::integrate(|u| g(self.quantile(u)), 0.0, 1.0, tol)?
            }
        };
        Ok(integral.value)
    }
}

pub fn charging_pdf(scheme: &ChargingScheme, x: f64) -> f64 {
    scheme.pdf(x)
}

pub fn mean_charging_time(scheme: &ChargingScheme) -> f64 {
    scheme.mean()
}

/// Cycle-averaged duty cycle `E[τ / (ν + τ)]`.
pub fn duty_cycle(scheme: &ChargingScheme, airtime_s: f64) -> Result<f64> {
    if airtime_s <= 0.0 {
        return Ok(0.0);
    }
    let tol = Tolerance {
        abs: 1e-16,
        rel: 1e-10,
        max_intervals: 20_000,
    };
    scheme.expectation(|nu| airtime_s / (nu + airtime_s), tol)
}

/// Ratio of mean airtime to mean cycle length, `τ / (E[ν] + τ)`, used for the
/// regulatory duty-cycle cap. It is also the long-run fraction of time a
/// device spends on air.
pub fn etsi_duty_cycle(scheme: &ChargingScheme, airtime_s: f64) -> f64 {
    if airtime_s <= 0.0 {
        return 0.0;
    }
    airtime_s / (scheme.mean() + airtime_s)
}

/// ETSI 868 MHz sub-band limit.
pub const ETSI_DUTY_CYCLE_CAP: f64 = 0.01;

/// Fraction of co-SF devices on air, `p = 𝓔 · E[τ / (ν + τ)]`.
pub fn collision_fraction(
    energy_avail: f64,
    scheme: &ChargingScheme,
    airtime_s: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&energy_avail) {
        return Err(Error::Model(format!(
            "energy availability must be a probability, got {energy_avail}"
        )));
    }
    if energy_avail == 0.0 {
        return Ok(0.0);
    }
    Ok(energy_avail * duty_cycle(scheme, airtime_s)?)
}

/// Occupancy variant `𝓔 · τ / (E[ν] + τ)`: the probability that a co-SF
/// device is on air at a given instant.
pub fn occupancy_fraction(energy_avail: f64, scheme: &ChargingScheme, airtime_s: f64) -> f64 {
    energy_avail * etsi_duty_cycle(scheme, airtime_s)
}
