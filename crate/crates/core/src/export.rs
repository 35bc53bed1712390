//! CSV writers. Each file has one header row and fixed column order; floats
//! are written in shortest round-trip form.

use std::io::Write;
use std::path::Path;

use crate::act::ActPlan;
use crate::capacitor::VoltageTrajectory;
use crate::error::Result;
use crate::geometry::CoverageProfile;
use crate::markov::StationaryDistribution;
use crate::montecarlo::{SimReport, CI_Z};

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// `time_s, voltage_V, phase, cycle_index`
pub fn write_trajectory<W: Write>(out: W, traj: &VoltageTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "voltage_V", "phase", "cycle_index"])?;
    for p in &traj.points {
        w.serialize((p.time_s, p.voltage, p.phase.label(), p.cycle))?;
    }
    finish(w)
}

/// `voltage_V, pdf, cdf` at bin centers; `cdf` is the mass through the bin.
pub fn write_stationary<W: Write>(out: W, sd: &StationaryDistribution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["voltage_V", "pdf", "cdf"])?;
    for ((v, f), (_, c)) in sd.pdf().into_iter().zip(sd.cdf()) {
        w.serialize((v, f, c))?;
    }
    finish(w)
}

/// `M, outage`
pub fn write_convergence<W: Write>(out: W, rows: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["M", "outage"])?;
    for row in rows {
        w.serialize(row)?;
    }
    finish(w)
}

/// One row of the per-SF outage sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub sf: u8,
    pub airtime_s: f64,
    pub dist_kind: &'static str,
    pub outage: f64,
    #[serde(rename = "stationary_mean_V")]
    pub stationary_mean_v: f64,
    #[serde(rename = "estimator_mean_V")]
    pub estimator_mean_v: f64,
}

/// `sf, airtime_s, dist_kind, outage, stationary_mean_V, estimator_mean_V`
pub fn write_outage_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "sf",
            "airtime_s",
            "dist_kind",
            "outage",
            "stationary_mean_V",
            "estimator_mean_V",
        ])?;
    }
    finish(w)
}

/// `distance_km, sf, snr_success, sir_success, conn_lower, energy_avail,
/// overall_Q`, plus `conn_upper` when the upper bound was computed.
pub fn write_coverage<W: Write>(out: W, prof: &CoverageProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let upper = prof.points.first().is_some_and(|p| p.conn_upper.is_some());
    let mut header = vec![
        "distance_km",
        "sf",
        "snr_success",
        "sir_success",
        "conn_lower",
        "energy_avail",
        "overall_Q",
    ];
    if upper {
        header.push("conn_upper");
    }
    w.write_record(&header)?;
    for p in &prof.points {
        let mut rec = vec![
            p.distance_km.to_string(),
            p.sf.to_string(),
            p.snr_success.to_string(),
            p.sir_success.to_string(),
            p.conn_lower.to_string(),
            p.energy_avail.to_string(),
            p.overall_q.to_string(),
        ];
        if let Some(u) = p.conn_upper.filter(|_| upper) {
            rec.push(u.to_string());
        }
        w.write_record(&rec)?;
    }
    finish(w)
}

/// `sf, dist_kind, param_a_or_k, param_b_or_w, mean_nu_s, duty_cycle,
/// predicted_mean_V, predicted_outage`
pub fn write_plan<W: Write>(out: W, plan: &ActPlan) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sf",
        "dist_kind",
        "param_a_or_k",
        "param_b_or_w",
        "mean_nu_s",
        "duty_cycle",
        "predicted_mean_V",
        "predicted_outage",
    ])?;
    for e in &plan.entries {
        let (p1, p2) = e.scheme.params();
        w.serialize((
            e.sf,
            e.scheme.kind().label(),
            p1,
            p2,
            e.mean_nu_s,
            e.duty_cycle,
            e.predicted_mean_v,
            e.predicted_outage,
        ))?;
    }
    finish(w)
}

/// `ring, attempts, energy_skips, snr_fails, sir_fails, successes, E_hat,
/// C_hat, Q_hat, ci_half_width`; the half-width is the 95 % interval of `Q_hat`.
pub fn write_sim_rings<W: Write>(out: W, report: &SimReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "ring",
        "attempts",
        "energy_skips",
        "snr_fails",
        "sir_fails",
        "successes",
        "E_hat",
        "C_hat",
        "Q_hat",
        "ci_half_width",
    ])?;
    for r in &report.rings {
        let c = &r.counters;
        let q = c.overall();
        w.serialize((
            r.ring,
            c.attempts,
            c.energy_skips,
            c.snr_fails,
            c.sir_fails,
            c.successes,
            c.energy_avail().value,
            c.conn().value,
            q.value,
            q.ci_half_width(CI_Z),
        ))?;
    }
    finish(w)
}

/// `device, distance_km, ring, sf, probe, cycles, energy_skips, attempts,
/// snr_fails, sir_fails, successes, on_air_s`
pub fn write_sim_devices<W: Write>(out: W, report: &SimReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "device",
        "distance_km",
        "ring",
        "sf",
        "probe",
        "cycles",
        "energy_skips",
        "attempts",
        "snr_fails",
        "sir_fails",
        "successes",
        "on_air_s",
    ])?;
    for d in &report.devices {
        let c = &d.counters;
        w.serialize((
            d.index,
            d.distance_km,
            d.ring,
            d.sf,
            d.probe,
            c.cycles,
            c.energy_skips,
            c.attempts,
            c.snr_fails,
            c.sir_fails,
            c.successes,
            c.on_air_s,
        ))?;
    }
    finish(w)
}

/// Writes with `f` into a new file at `path`.
pub fn to_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut file)?;
    file.flush()?;
    Ok(())
}

/// Generic writer for callers that assemble their own rows.
pub fn rows_to_file<S: serde::Serialize>(path: &Path, header: &[&str], rows: &[S]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    finish(w)
}
