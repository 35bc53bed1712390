//! Command-line front end. Every subcommand writes CSV files plus a JSON
//! manifest into the output directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::act::{plan_cdc, plan_cve, ActKind, ActOptions};
use crate::capacitor::{simulate_trajectory, ModelMode, TrajectoryOptions};
use crate::config::{Config, ConfigFile, CONFIG_ENV};
use crate::error::{Error, Result};
use crate::export;
use crate::geometry::{
    coverage_profile, distance_grid, sample_network, sample_network_fixed, CollisionModel,
    CoverageOptions, NetworkRealization,
};
use crate::markov::{
    convergence_report, ring_steady_states, steady_state, Construction, SteadyStateOptions,
    DEFAULT_BINS,
};
use crate::montecarlo::{
    replication_seed, run_replications, run_simulation, Counters, EnergyPolicy, OverlapMode,
    RingStats, SimOptions, SimReport, CI_Z,
};
use crate::phy::{sf_entry, ChargingScheme, SchemeKind, SF_TABLE};

#[derive(Debug, Parser)]
#[command(
    name = "lora-eh",
    version,
    about = "Energy-harvesting LoRa device and network models"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Capacitor model: literal | thevenin.
    #[arg(long, global = true)]
    pub mode: Option<ModelMode>,
    /// Charging scheme: ud | wd. Commands that cover both schemes restrict
    /// themselves to this one.
    #[arg(long, global = true)]
    pub scheme: Option<SchemeKind>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Sampled capacitor voltage over charge/transmit cycles.
    CapacitorTrace {
        #[arg(long, default_value_t = 100)]
        cycles: usize,
        #[arg(long, default_value_t = 20)]
        samples_per_phase: usize,
        #[arg(long, default_value_t = 10)]
        sf: u8,
    },
    /// Stationary voltage distribution and energy outage for one SF.
    SteadyState {
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 10)]
        sf: u8,
        /// density | cdf
        #[arg(long, default_value = "density")]
        construction: Construction,
    },
    /// Energy outage for every SF.
    OutageSweep {
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Success probabilities over distance.
    Coverage {
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// duty | occupancy
        #[arg(long, default_value = "duty")]
        collision: CollisionModel,
        /// Monte Carlo samples for the connection upper bound; 0 disables it.
        #[arg(long, default_value_t = 0)]
        upper_samples: usize,
        /// Simulated seconds for a cross-check at ring midpoints; 0 disables it.
        #[arg(long, default_value_t = 0.0)]
        mc_duration: f64,
        /// Fixed device count for the cross-check instead of a Poisson draw.
        #[arg(long)]
        mc_devices: Option<usize>,
    },
    /// Adaptive charging-time plan.
    ActPlan {
        /// cdc | cve
        #[arg(long, default_value = "cdc")]
        kind: ActKind,
        #[arg(long, default_value_t = 150.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        vartheta: f64,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Event-driven network simulation.
    Simulate {
        #[arg(long, default_value_t = 1e6)]
        duration: f64,
        #[arg(long)]
        warmup: Option<f64>,
        /// Fixed device count instead of a Poisson draw.
        #[arg(long)]
        devices: Option<usize>,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        /// any | fractional | instant
        #[arg(long, default_value = "any")]
        overlap: OverlapMode,
        /// brownout | skip
        #[arg(long, default_value = "brownout")]
        energy_policy: EnergyPolicy,
        /// Also write per-device counters.
        #[arg(long)]
        per_device: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CapacitorTrace { .. } => "capacitor-trace",
            Command::SteadyState { .. } => "steady-state",
            Command::OutageSweep { .. } => "outage-sweep",
            Command::Coverage { .. } => "coverage",
            Command::ActPlan { .. } => "act-plan",
            Command::Simulate { .. } => "simulate",
        }
    }
}

/// Run record written next to every run's CSV files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub config: ConfigFile,
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` wins when set.
    pub timestamp: u64,
}

/// `SOURCE_DATE_EPOCH` if set, else 0, so reruns stay byte-identical.
fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0)
}

struct Run<'a> {
    cfg: Config,
    out: &'a Path,
    seed: u64,
    schemes: Vec<SchemeKind>,
    outputs: Vec<String>,
    notes: Vec<String>,
    quiet: bool,
}

impl Run<'_> {
    fn say(&self, line: String) {
        if !self.quiet {
            println!("{line}");
        }
    }

    fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut dyn std::io::Write) -> Result<()>,
    {
        export::to_file(&self.out.join(name), f)?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
        cfg.model()?;
    }
    if let Some(kind) = cli.scheme {
        cfg.scheme_kind = kind;
    }
    Ok(cfg)
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(|| run_inner(cli)),
        None => run_inner(cli),
    }
}

fn run_inner(cli: &Cli) -> Result<RunManifest> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    let schemes = match cli.scheme {
        Some(k) => vec![k],
        None => vec![SchemeKind::Uniform, SchemeKind::Weibull],
    };
    let mut run = Run {
        cfg,
        out: &cli.out,
        seed: cli.seed,
        schemes,
        outputs: Vec::new(),
        notes: Vec::new(),
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::CapacitorTrace {
            cycles,
            samples_per_phase,
            sf,
        } => capacitor_trace(&mut run, *cycles, *samples_per_phase, *sf)?,
        Command::SteadyState {
            bins,
            sf,
            construction,
        } => steady(&mut run, *bins, *sf, *construction)?,
        Command::OutageSweep { bins } => sweep(&mut run, *bins)?,
        Command::Coverage {
            points,
            bins,
            collision,
            upper_samples,
            mc_duration,
            mc_devices,
        } => coverage(
            &mut run,
            *points,
            *bins,
            *collision,
            *upper_samples,
            *mc_duration,
            *mc_devices,
        )?,
        Command::ActPlan {
            kind,
            theta,
            vartheta,
            bins,
        } => act_plan(&mut run, *kind, *theta, *vartheta, *bins)?,
        Command::Simulate {
            duration,
            warmup,
            devices,
            replications,
            overlap,
            energy_policy,
            per_device,
        } => {
            let opts = SimOptions {
                warmup_s: *warmup,
                energy_policy: *energy_policy,
                overlap: *overlap,
                ..SimOptions::new(*duration, run.seed)
            };
            simulate(&mut run, opts, *devices, *replications, *per_device)?
        }
    }
    for note in &run.notes {
        eprintln!("{note}");
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: cli.command.name().to_string(),
        seed: cli.seed,
        parameters: serde_json::to_value(&cli.command).map_err(|e| Error::Config(e.to_string()))?,
        config: run.cfg.to_file(),
        outputs: run.outputs.clone(),
        timestamp: timestamp(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(
        cli.out.join(format!(
            "manifest_{}.json",
            manifest.subcommand.replace('-', "_")
        )),
        text + "\n",
    )?;
    Ok(manifest)
}

fn capacitor_trace(run: &mut Run, cycles: usize, samples_per_phase: usize, sf: u8) -> Result<()> {
    let model = run.cfg.model()?;
    let airtime = sf_entry(sf)?.airtime_s;
    let v0 = run.cfg.phy.v_initial.clamp(model.v_inf_on, model.v_inf_off);
    for (i, kind) in run.schemes.clone().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        rng.set_stream(i as u64 + 1);
        let traj = simulate_trajectory(
            &model,
            v0,
            &run.cfg.scheme(kind),
            airtime,
            cycles,
            TrajectoryOptions { samples_per_phase },
            &mut rng,
        )?;
        let below = traj
            .end_of_cycle_voltages()
            .filter(|&v| v <= run.cfg.phy.v_op)
            .count();
        run.say(format!(
            "{}: {cycles} cycles, {below} end-of-cycle samples at or below {} V",
            kind.label(),
            run.cfg.phy.v_op
        ));
        run.write(&format!("trace_{}.csv", kind.label()), |w| {
            export::write_trajectory(w, &traj)
        })?;
    }
    Ok(())
}

fn steady(run: &mut Run, bins: usize, sf: u8, construction: Construction) -> Result<()> {
    let model = run.cfg.model()?;
    let airtime = sf_entry(sf)?.airtime_s;
    if bins < 100 {
        run.notes.push(format!(
            "warning: {bins} bins is a coarse grid; outage values carry large discretization error"
        ));
    }
    let opts = SteadyStateOptions {
        bins,
        construction,
        ..SteadyStateOptions::default()
    };
    for kind in run.schemes.clone() {
        let scheme = run.cfg.scheme(kind);
        let st = steady_state(&model, &scheme, airtime, run.cfg.phy.v_op, &opts)?;
        run.say(format!(
            "{} SF{sf}: energy outage {:.2} %, stationary mean {:.4} V, estimator {:.4} V",
            kind.label(),
            100.0 * st.outage,
            st.distribution.mean(),
            st.estimator_mean
        ));
        run.write(&format!("steady_state_{}.csv", kind.label()), |w| {
            export::write_stationary(w, &st.distribution)
        })?;
        let conv = convergence_report(
            &model,
            &scheme,
            airtime,
            run.cfg.phy.v_op,
            &opts,
            &[bins, 2 * bins],
        )?;
        run.write(&format!("convergence_{}.csv", kind.label()), |w| {
            export::write_convergence(w, &conv)
        })?;
    }
    Ok(())
}

fn sweep(run: &mut Run, bins: usize) -> Result<()> {
    let model = run.cfg.model()?;
    let opts = SteadyStateOptions::with_bins(bins);
    let mut rows = Vec::new();
    for kind in run.schemes.clone() {
        let states = ring_steady_states(&run.cfg.phy, &model, &[run.cfg.scheme(kind); 6], &opts)?;
        let pct: Vec<String> = states
            .iter()
            .map(|s| format!("{:.2}", 100.0 * s.outage))
            .collect();
        run.say(format!(
            "{} outage % by SF7..SF12: {}",
            kind.label(),
            pct.join(", ")
        ));
        rows.extend(SF_TABLE.iter().zip(&states).map(|(e, s)| export::SweepRow {
            sf: e.sf,
            airtime_s: e.airtime_s,
            dist_kind: kind.label(),
            outage: s.outage,
            stationary_mean_v: s.distribution.mean(),
            estimator_mean_v: s.estimator_mean,
        }));
    }
    run.write("outage_sweep.csv", |w| export::write_outage_sweep(w, &rows))
}

fn network(run: &Run, devices: Option<usize>, seed: u64) -> Result<NetworkRealization> {
    match devices {
        Some(n) => sample_network_fixed(&run.cfg.phy, n, seed),
        None => sample_network(&run.cfg.phy, seed),
    }
}

#[derive(Serialize)]
struct MidpointCheck {
    ring: usize,
    distance_km: f64,
    analytical_q: f64,
    q_hat: f64,
    ci_half_width: f64,
}

fn coverage(
    run: &mut Run,
    points: usize,
    bins: usize,
    collision: CollisionModel,
    upper_samples: usize,
    mc_duration: f64,
    mc_devices: Option<usize>,
) -> Result<()> {
    let model = run.cfg.model()?;
    let kind = run.cfg.scheme_kind;
    let scheme = run.cfg.active_scheme();
    let states = ring_steady_states(
        &run.cfg.phy,
        &model,
        &[scheme; 6],
        &SteadyStateOptions::with_bins(bins),
    )?;
    let outage: [f64; 6] = std::array::from_fn(|n| states[n].outage);
    let opts = CoverageOptions {
        collision,
        upper_bound_samples: upper_samples,
        seed: run.seed,
    };
    let grid = distance_grid(&run.cfg.phy, points);
    let prof = coverage_profile(&run.cfg.phy, &scheme, &outage, &grid, &opts)?;
    run.write(&format!("coverage_{}.csv", kind.label()), |w| {
        export::write_coverage(w, &prof)
    })?;

    if mc_duration > 0.0 {
        let mut net = network(run, mc_devices, replication_seed(run.seed, 0))?;
        let probes = net.add_ring_probes(&run.cfg.phy)?;
        let sim = SimOptions::new(mc_duration, replication_seed(run.seed, 1));
        let report = run_simulation(&net, &run.cfg.phy, &model, &[scheme; 6], &sim)?;
        let mids: Vec<f64> = (0..6).map(|n| run.cfg.phy.ring_midpoint(n)).collect();
        let at_mid = coverage_profile(&run.cfg.phy, &scheme, &outage, &mids, &opts)?;
        let rows: Vec<MidpointCheck> = probes
            .iter()
            .enumerate()
            .map(|(n, &i)| {
                let q = report.devices[i].counters.overall();
                MidpointCheck {
                    ring: n,
                    distance_km: mids[n],
                    analytical_q: at_mid.points[n].overall_q,
                    q_hat: q.value,
                    ci_half_width: q.ci_half_width(CI_Z),
                }
            })
            .collect();
        let header = [
            "ring",
            "distance_km",
            "analytical_Q",
            "Q_hat",
            "ci_half_width",
        ];
        let name = format!("coverage_mc_{}.csv", kind.label());
        export::rows_to_file(&run.out.join(&name), &header, &rows)?;
        run.outputs.push(name);
    }
    Ok(())
}

#[derive(Serialize)]
struct PdfRow {
    sf: u8,
    voltage_v: f64,
    pdf: f64,
    cdf: f64,
}

fn act_plan(run: &mut Run, kind: ActKind, theta: f64, vartheta: f64, bins: usize) -> Result<()> {
    let model = run.cfg.model()?;
    let opts = ActOptions {
        steady_state: SteadyStateOptions::with_bins(bins),
        ..ActOptions::default()
    };
    for dist in run.schemes.clone() {
        let result = match kind {
            ActKind::Cdc => plan_cdc(theta, dist, &run.cfg.phy, &model, &opts)?,
            ActKind::Cve => plan_cve(vartheta, dist, &run.cfg.phy, &model, &opts)?,
        };
        for e in result.plan.entries.iter().filter(|e| !e.etsi_compliant) {
            run.notes.push(format!(
                "warning: SF{} duty cycle {:.4} exceeds the 1 % cap",
                e.sf, e.duty_cycle
            ));
        }
        let stem = format!("act_{}_{}", kind.label(), dist.label());
        run.write(&format!("{stem}.csv"), |w| {
            export::write_plan(w, &result.plan)
        })?;
        let rows: Vec<PdfRow> = SF_TABLE
            .iter()
            .zip(&result.states)
            .flat_map(|(e, st)| {
                st.distribution
                    .pdf()
                    .into_iter()
                    .zip(st.distribution.cdf())
                    .map(move |((v, f), (_, c))| PdfRow {
                        sf: e.sf,
                        voltage_v: v,
                        pdf: f,
                        cdf: c,
                    })
            })
            .collect();
        let name = format!("{stem}_pdf.csv");
        export::rows_to_file(
            &run.out.join(&name),
            &["sf", "voltage_V", "pdf", "cdf"],
            &rows,
        )?;
        run.outputs.push(name);
    }
    Ok(())
}

fn simulate(
    run: &mut Run,
    opts: SimOptions,
    devices: Option<usize>,
    reps: usize,
    per_device: bool,
) -> Result<()> {
    let model = run.cfg.model()?;
    let schemes: [ChargingScheme; 6] = [run.cfg.active_scheme(); 6];
    let reports = run_replications(reps.max(1), run.seed, |_, seed| {
        let net = network(run, devices, replication_seed(seed, 0))?;
        let o = SimOptions {
            seed: replication_seed(seed, 1),
            ..opts.clone()
        };
        run_simulation(&net, &run.cfg.phy, &model, &schemes, &o)
    })?;
    let pooled = pool(&reports);
    run.write("sim_rings.csv", |w| export::write_sim_rings(w, &pooled))?;
    if per_device {
        for (r, report) in reports.iter().enumerate() {
            let name = if reports.len() == 1 {
                "sim_devices.csv".to_string()
            } else {
                format!("sim_devices_{r}.csv")
            };
            run.write(&name, |w| export::write_sim_devices(w, report))?;
        }
    }
    Ok(())
}

/// Sums ring counters over replications.
fn pool(reports: &[SimReport]) -> SimReport {
    let mut out = reports[0].clone();
    out.devices.clear();
    out.trace.clear();
    out.duration_s = reports.iter().map(|r| r.duration_s).sum();
    out.rings = (0..6)
        .map(|n| {
            let mut c = Counters::default();
            let mut devices = 0;
            for r in reports {
                let s = &r.rings[n].counters;
                c.cycles += s.cycles;
                c.energy_skips += s.energy_skips;
                c.attempts += s.attempts;
                c.snr_fails += s.snr_fails;
                c.sir_fails += s.sir_fails;
                c.successes += s.successes;
                c.on_air_s += s.on_air_s;
                devices += r.rings[n].devices;
            }
            RingStats {
                ring: n,
                sf: SF_TABLE[n].sf,
                devices,
                counters: c,
            }
        })
        .collect();
    out
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
