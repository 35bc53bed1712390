//! Event-driven network simulation.
//!
//! Every device alternates a random charging interval with a transmission
//! attempt. Attempts are resolved at the gateway per SF ring: the SNR test
//! uses one Rayleigh block-fading draw per packet, and the SIR test compares
//! the packet's received power with the summed power of co-SF packets that
//! overlap it in time.
//!
//! Each device owns a ChaCha8 stream keyed by the run seed and its index, and
//! draws from it in a fixed per-device order, so results depend only on the
//! seed and never on scheduling.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacitor::CapacitorModel;
use crate::error::{Error, Result};
use crate::geometry::{clamp_distance, path_gain, NetworkRealization};
use crate::phy::{ChargingScheme, PhyConfig, SF_TABLE};

/// Normal quantile used for the reported confidence half-widths.
pub const CI_Z: f64 = 1.96;

/// Minimum on-air attempts per ring for an empirical collision fraction.
pub const MIN_RING_ATTEMPTS: u64 = 100;

/// What happens when a device lacks the energy to transmit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyPolicy {
    /// The radio always switches on and drains the capacitor for the packet
    /// duration; the packet is lost (and not radiated) when the voltage at the
    /// end of the cycle is at or below the operating threshold.
    #[default]
    Brownout,
    /// A device whose voltage is below the threshold at the end of charging
    /// skips the transmission without discharging.
    Skip,
}

/// When two co-SF packets count as interfering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    /// Any time overlap, full power.
    #[default]
    Any,
    /// Power weighted by the overlapping fraction of the packet.
    Fractional,
    /// Only packets on air at the victim's start instant.
    Instant,
}

macro_rules! impl_from_str {
    ($ty:ty, $what:literal, $($name:literal => $variant:expr),+) => {
        impl std::str::FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
    };
}

impl_from_str!(EnergyPolicy, "energy policy", "brownout" => EnergyPolicy::Brownout, "skip" => EnergyPolicy::Skip);
impl_from_str!(OverlapMode, "overlap mode", "any" => OverlapMode::Any, "fractional" => OverlapMode::Fractional, "instant" => OverlapMode::Instant);

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Length of the measured window, seconds.
    pub duration_s: f64,
    /// Discarded lead-in; defaults to 100 mean charging times.
    pub warmup_s: Option<f64>,
    pub energy_policy: EnergyPolicy,
    pub overlap: OverlapMode,
    pub seed: u64,
    /// Record every cycle of this device.
    pub trace_device: Option<usize>,
}

impl SimOptions {
    pub fn new(duration_s: f64, seed: u64) -> Self {
        Self {
            duration_s,
            warmup_s: None,
            energy_policy: EnergyPolicy::default(),
            overlap: OverlapMode::default(),
            seed,
            trace_device: None,
        }
    }
}

/// Per-device or per-ring event counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Counters {
    pub cycles: u64,
    pub energy_skips: u64,
    pub attempts: u64,
    pub snr_fails: u64,
    pub sir_fails: u64,
    pub successes: u64,
    /// Time spent radiating, seconds.
    pub on_air_s: f64,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.cycles += o.cycles;
        self.energy_skips += o.energy_skips;
        self.attempts += o.attempts;
        self.snr_fails += o.snr_fails;
        self.sir_fails += o.sir_fails;
        self.successes += o.successes;
        self.on_air_s += o.on_air_s;
    }

    /// `𝓔̂`: share of cycles with enough energy to transmit.
    pub fn energy_avail(&self) -> Estimate {
        Estimate::binomial(self.cycles - self.energy_skips, self.cycles)
    }

    /// `𝓒̂`: share of attempts decoded.
    pub fn conn(&self) -> Estimate {
        Estimate::binomial(self.successes, self.attempts)
    }

    /// `𝓠̂`: share of cycles ending in a decoded packet.
    pub fn overall(&self) -> Estimate {
        Estimate::binomial(self.successes, self.cycles)
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    /// Proportion with the normal-approximation binomial error. Zero trials
    /// give NaN.
    pub fn binomial(hits: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                value: f64::NAN,
                std_err: f64::NAN,
            };
        }
        let n = trials as f64;
        let p = hits as f64 / n;
        Self {
            value: p,
            std_err: (p * (1.0 - p) / n).sqrt(),
        }
    }

    /// Mean and standard error of the mean of independent values.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                value: f64::NAN,
                std_err: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self {
                value: mean,
                std_err: f64::NAN,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            value: mean,
            std_err: (var / n).sqrt(),
        }
    }

    pub fn ci_half_width(&self, z: f64) -> f64 {
        z * self.std_err
    }

    /// Whether `x` lies within `k` standard errors.
    pub fn covers(&self, x: f64, k: f64) -> bool {
        (self.value - x).abs() <= k * self.std_err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceStats {
    pub index: usize,
    pub distance_km: f64,
    pub ring: usize,
    pub sf: u8,
    pub probe: bool,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingStats {
    pub ring: usize,
    pub sf: u8,
    /// Non-probe devices in the ring.
    pub devices: usize,
    pub counters: Counters,
}

/// One charge/transmit cycle of the traced device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleRecord {
    /// End of charging, seconds.
    pub time_s: f64,
    pub v_start: f64,
    pub nu: f64,
    pub v_end: f64,
    pub on_air: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub devices: Vec<DeviceStats>,
    pub rings: Vec<RingStats>,
    pub trace: Vec<CycleRecord>,
}

impl SimReport {
    pub fn ring(&self, ring: usize) -> &RingStats {
        &self.rings[ring]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    device: usize,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so that the max-heap pops the earliest event, lowest index first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.device.cmp(&self.device))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct PendingTx {
    start: f64,
    end: f64,
    device: usize,
    power: f64,
    interference: f64,
    snr_ok: bool,
    counted: bool,
    probe: bool,
}

struct DeviceRun {
    rng: ChaCha8Rng,
    /// Voltage at the start of the current charging interval.
    v: f64,
    nu: f64,
    gain: f64,
    snr_fade_threshold: f64,
    scheme: ChargingScheme,
    airtime: f64,
}

pub fn device_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Runs the network for `warmup + duration` seconds and reports the measured
/// window. `schemes[n]` drives the devices of ring `n`.
pub fn run_simulation(
    net: &NetworkRealization,
    cfg: &PhyConfig,
    model: &CapacitorModel,
    schemes: &[ChargingScheme; 6],
    opts: &SimOptions,
) -> Result<SimReport> {
    if !(opts.duration_s > 0.0 && opts.duration_s.is_finite()) {
        return Err(Error::Config(format!(
            "simulation duration must be positive, got {}",
            opts.duration_s
        )));
    }
    let max_mean = schemes.iter().map(ChargingScheme::mean).fold(0.0, f64::max);
    let warmup = opts.warmup_s.unwrap_or(100.0 * max_mean);
    if !(warmup >= 0.0) {
        return Err(Error::Config(format!(
            "warm-up must be non-negative, got {warmup}"
        )));
    }
    let t_end = warmup + opts.duration_s;
    let horizon = t_end + SF_TABLE[5].airtime_s;
    let v_op = cfg.v_op;
    let (_, v_off) = model.range();

    let mut runs = Vec::with_capacity(net.len());
    let mut heap = BinaryHeap::with_capacity(net.len());
    for (i, d) in net.devices.iter().enumerate() {
        let mut rng = device_rng(opts.seed, i);
        let v = if v_op < v_off {
            rng.random_range(v_op..v_off)
        } else {
            v_off
        };
        let scheme = schemes[d.ring];
        let nu = scheme.sample(&mut rng);
        let gain = path_gain(clamp_distance(d.distance_km), cfg)?;
        let snr_fade_threshold = cfg.noise_w * SF_TABLE[d.ring].snr_threshold() / (cfg.p_t * gain);
        heap.push(Event {
            time: nu,
            device: i,
        });
        runs.push(DeviceRun {
            rng,
            v,
            nu,
            gain,
            snr_fade_threshold,
            scheme,
            airtime: d.airtime_s,
        });
    }

    let mut counters = vec![Counters::default(); net.len()];
    let mut pipelines: Vec<VecDeque<PendingTx>> = (0..6).map(|_| VecDeque::new()).collect();
    let mut trace = Vec::new();

    let finalize = |tx: PendingTx, counters: &mut [Counters]| {
        if !tx.counted {
            return;
        }
        let c = &mut counters[tx.device];
        c.attempts += 1;
        if !tx.snr_ok {
            c.snr_fails += 1;
        } else if tx.power < cfg.sir_threshold * tx.interference {
            c.sir_fails += 1;
        } else {
            c.successes += 1;
        }
    };

    while let Some(Event { time: s, device: i }) = heap.pop() {
        if s >= horizon {
            break;
        }
        for pipe in pipelines.iter_mut() {
            while pipe.front().is_some_and(|tx| tx.end <= s) {
                finalize(pipe.pop_front().expect("front checked"), &mut counters);
            }
        }

        let dev = &mut runs[i];
        let v_start = dev.v;
        let v_charged = model.step_charge(dev.v, dev.nu);
        let (on_air, v_next, next_start) = match opts.energy_policy {
            EnergyPolicy::Brownout => {
                let v_end = model.step_discharge(v_charged, dev.airtime);
                (v_end > v_op, v_end, s + dev.airtime)
            }
            EnergyPolicy::Skip => {
                if v_charged < v_op {
                    (false, v_charged, s)
                } else {
                    (
                        true,
                        model.step_discharge(v_charged, dev.airtime),
                        s + dev.airtime,
                    )
                }
            }
        };
        let counted = s >= warmup && s < t_end;
        if counted {
            let c = &mut counters[i];
            c.cycles += 1;
            if on_air {
                c.on_air_s += dev.airtime;
            } else {
                c.energy_skips += 1;
            }
        }
        if opts.trace_device == Some(i) {
            trace.push(CycleRecord {
                time_s: s,
                v_start,
                nu: dev.nu,
                v_end: v_next,
                on_air,
            });
        }

        if on_air {
            let fade: f64 = Exp1.sample(&mut dev.rng);
            let probe = net.devices[i].probe;
            let mut tx = PendingTx {
                start: s,
                end: s + dev.airtime,
                device: i,
                power: cfg.p_t * dev.gain * fade,
                interference: 0.0,
                snr_ok: fade >= dev.snr_fade_threshold,
                counted,
                probe,
            };
            let pipe = &mut pipelines[net.devices[i].ring];
            for k in pipe.iter_mut() {
                let (to_new, to_old) = match opts.overlap {
                    OverlapMode::Any => (1.0, 1.0),
                    OverlapMode::Fractional => {
                        let w = (k.end - s) / dev.airtime;
                        (w, w)
                    }
                    OverlapMode::Instant => (1.0, if k.start == s { 1.0 } else { 0.0 }),
                };
                if !k.probe {
                    tx.interference += to_new * k.power;
                }
                if !probe {
                    k.interference += to_old * tx.power;
                }
            }
            pipe.push_back(tx);
        }

        dev.v = v_next;
        dev.nu = dev.scheme.sample(&mut dev.rng);
        heap.push(Event {
            time: next_start + dev.nu,
            device: i,
        });
    }
    for pipe in pipelines.iter_mut() {
        while let Some(tx) = pipe.pop_front() {
            finalize(tx, &mut counters);
        }
    }

    let devices: Vec<DeviceStats> = net
        .devices
        .iter()
        .zip(&counters)
        .enumerate()
        .map(|(index, (d, c))| DeviceStats {
            index,
            distance_km: d.distance_km,
            ring: d.ring,
            sf: d.sf,
            probe: d.probe,
            counters: *c,
        })
        .collect();
    let mut rings: Vec<RingStats> = SF_TABLE
        .iter()
        .enumerate()
        .map(|(ring, e)| RingStats {
            ring,
            sf: e.sf,
            devices: 0,
            counters: Counters::default(),
        })
        .collect();
    for d in devices.iter().filter(|d| !d.probe) {
        rings[d.ring].devices += 1;
        rings[d.ring].counters.add(&d.counters);
    }
    Ok(SimReport {
        seed: opts.seed,
        duration_s: opts.duration_s,
        warmup_s: warmup,
        devices,
        rings,
        trace,
    })
}

/// Time fraction each ring's devices spend on air, averaged over devices.
///
/// A ring whose devices never had energy reports 0. Rings without devices or
/// with fewer than [`MIN_RING_ATTEMPTS`] attempts are errors.
pub fn empirical_collision_fraction(report: &SimReport) -> Result<[Estimate; 6]> {
    let mut out = [Estimate {
        value: 0.0,
        std_err: 0.0,
    }; 6];
    for (n, ring) in report.rings.iter().enumerate() {
        if ring.counters.cycles == 0 {
            return Err(Error::Statistics {
                ring: n,
                reason: "no cycles observed".into(),
            });
        }
        if ring.counters.attempts == 0 {
            continue;
        }
        if ring.counters.attempts < MIN_RING_ATTEMPTS {
            return Err(Error::Statistics {
                ring: n,
                reason: format!(
                    "{} attempts, need at least {MIN_RING_ATTEMPTS}",
                    ring.counters.attempts
                ),
            });
        }
        let fractions: Vec<f64> = report
            .devices
            .iter()
            .filter(|d| d.ring == n && !d.probe)
            .map(|d| d.counters.on_air_s / report.duration_s)
            .collect();
        out[n] = if fractions.len() >= 2 {
            Estimate::from_samples(&fractions)
        } else {
            // Poisson approximation on the attempt count.
            let tau = SF_TABLE[n].airtime_s;
            let a = ring.counters.attempts as f64;
            Estimate {
                value: fractions[0],
                std_err: tau * a.sqrt() / report.duration_s,
            }
        };
    }
    Ok(out)
}

/// Seed of replication `rep`, decorrelated from neighbouring replications.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    let mut z = seed.wrapping_add((rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `n` independent replications in parallel; `run(rep, seed)` builds
/// and simulates one network. Results come back in replication order.
pub fn run_replications<F>(n: usize, seed: u64, run: F) -> Result<Vec<SimReport>>
where
    F: Fn(usize, u64) -> Result<SimReport> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|rep| run(rep, replication_seed(seed, rep)))
        .collect()
}

/// Mean and between-replication standard error of a per-report statistic.
pub fn across_replications<F: Fn(&SimReport) -> f64>(reports: &[SimReport], stat: F) -> Estimate {
    let values: Vec<f64> = reports.iter().map(stat).filter(|v| v.is_finite()).collect();
    Estimate::from_samples(&values)
}
