//! Discretized Markov chain over end-of-cycle capacitor voltages.
//!
//! Bins of equal width cover `[v_inf_on, v_inf_off]`. Moving from bin `i` to
//! bin `j` in one cycle requires the decay factor `X = e^{−ν/τ_off}` to take
//! the value `(v_j − c1) / (c2·(v_i − c3))`, so row `i` of the transition
//! matrix is the density of `X` along that line, row-normalized. Because the
//! map is monotone in `v_j`, every row is a contiguous band and the matrix is
//! stored that way.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacitor::{CapacitorModel, CycleConstants};
use crate::error::{Error, Result};
use crate::phy::{ChargingScheme, PhyConfig, SF_TABLE};
use crate::quad::Tolerance;

/// Largest chain handed to the dense LU solver.
pub const DENSE_SOLVER_MAX_BINS: usize = 512;

/// Distribution of the per-cycle decay factor `X = e^{−ν/τ_off}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFactorDistribution {
    pub scheme: ChargingScheme,
    /// Charging time constant (`R_L^(0)·C` in literal mode), seconds.
    pub tau_off: f64,
}

impl DecayFactorDistribution {
    pub fn new(scheme: ChargingScheme, tau_off: f64) -> Result<Self> {
        if !(tau_off > 0.0 && tau_off.is_finite()) {
            return Err(Error::Model(format!(
                "charging time constant must be positive, got {tau_off}"
            )));
        }
        Ok(Self { scheme, tau_off })
    }

    /// Closed support `[x_lo, x_hi]` of `X`.
    pub fn support(&self) -> (f64, f64) {
        match self.scheme {
            ChargingScheme::Uniform { low, high } => {
                ((-high / self.tau_off).exp(), (-low / self.tau_off).exp())
            }
            ChargingScheme::Weibull { .. } => (0.0, 1.0),
        }
    }

    /// Density `f_X(x) = (τ_off / x)·f_ν(−τ_off ln x)`.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(x > 0.0 && x <= 1.0) {
            return 0.0;
        }
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let nu = -self.tau_off * x.ln();
        self.tau_off / x * self.scheme.pdf(nu.max(0.0))
    }

    /// `P[X ≤ x] = P[ν ≥ −τ_off ln x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            self.scheme.survival(-self.tau_off * x.ln())
        }
    }

    /// `E[X]`, in closed form for uniform and exponential charging times.
    pub fn mean(&self) -> Result<f64> {
        let tau = self.tau_off;
        match self.scheme {
            ChargingScheme::Uniform { low, high } => {
                let width = high - low;
                Ok((-low / tau).exp() * -(-width / tau).exp_m1() * tau / width)
            }
            ChargingScheme::Weibull { shape, scale } if shape == 1.0 => Ok(tau / (tau + scale)),
            ChargingScheme::Weibull { .. } => self
                .scheme
                .expectation(|nu| (-nu / tau).exp(), Tolerance::relative(1e-12)),
        }
    }
}

/// `E[e^{−ν/τ_off}]` for the distribution's scheme.
pub fn expected_decay_factor(d: &DecayFactorDistribution) -> Result<f64> {
    d.mean()
}

/// `m` equal bins over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoltageGrid {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl VoltageGrid {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::Model(format!(
                "invalid voltage grid [{lo}, {hi}] with {bins} bins"
            )));
        }
        Ok(Self { lo, hi, bins })
    }

    pub fn for_model(model: &CapacitorModel, bins: usize) -> Result<Self> {
        Self::new(model.v_inf_on, model.v_inf_off, bins)
    }

    pub fn delta(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.delta()
    }

    pub fn edge(&self, k: usize) -> f64 {
        if k == self.bins {
            self.hi
        } else {
            self.lo + k as f64 * self.delta()
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|k| self.edge(k)).collect()
    }
}

/// How a row of the transition matrix is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    /// Density of `X` at each destination bin center, then row-normalized.
    #[default]
    DensityAtCenter,
    /// Exact probability mass of each destination bin via the cdf of `X`.
    CdfMass,
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "density" | "density-at-center" => Ok(Construction::DensityAtCenter),
            "cdf" | "cdf-mass" => Ok(Construction::CdfMass),
            other => Err(Error::Config(format!(
                "unknown matrix construction '{other}' (density|cdf)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BandRow {
    start: usize,
    values: Vec<f64>,
}

/// Row-stochastic matrix with one contiguous band of nonzeros per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    grid: VoltageGrid,
    rows: Vec<BandRow>,
    /// Rows without any feasible transition, replaced by a self-loop.
    degenerate: Vec<bool>,
}

impl TransitionMatrix {
    /// Wraps a dense row-stochastic matrix. States are placed on a unit grid.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let grid = VoltageGrid::new(0.0, m as f64, m)?;
        let mut bands = Vec::with_capacity(m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Model(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(Error::Model(format!(
                    "row {i} has negative or non-finite entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Model(format!("row {i} sums to {sum}, not 1")));
            }
            bands.push(BandRow {
                start: 0,
                values: row.clone(),
            });
        }
        Ok(Self {
            grid,
            rows: bands,
            degenerate: vec![false; m],
        })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn grid(&self) -> &VoltageGrid {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        if j < row.start {
            return 0.0;
        }
        row.values.get(j - row.start).copied().unwrap_or(0.0)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].values.iter().sum()
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.degenerate[i]
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.values.len()).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.size();
        (0..m)
            .map(|i| (0..m).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `out = u·S`.
    fn left_multiply(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (ui, row) in u.iter().zip(&self.rows) {
            if *ui == 0.0 {
                continue;
            }
            for (o, s) in out[row.start..row.start + row.values.len()]
                .iter_mut()
                .zip(&row.values)
            {
                *o += ui * s;
            }
        }
    }
}

/// Builds the normalized transition matrix for cycles with constants `cc` on
/// `grid`.
pub fn build_transition_matrix(
    d: &DecayFactorDistribution,
    cc: &CycleConstants,
    grid: &VoltageGrid,
    construction: Construction,
) -> Result<TransitionMatrix> {
    let m = grid.bins;
    let (x_lo, x_hi) = d.support();
    let delta = grid.delta();

    let built: Vec<(BandRow, bool)> = (0..m)
        .into_par_iter()
        .map(|i| {
            // v_j = c1 − k·x, so x in [x_lo, x_hi] maps to a voltage interval.
            let k = cc.c2 * (cc.c3 - grid.center(i));
            let band = if k > 0.0 && m > 1 {
                let v_min = cc.c1 - k * x_hi;
                let v_max = cc.c1 - k * x_lo;
                let first = (((v_min - grid.lo) / delta).floor() as i64 - 1).clamp(0, m as i64 - 1)
                    as usize;
                let last =
                    (((v_max - grid.lo) / delta).ceil() as i64 + 1).clamp(0, m as i64 - 1) as usize;
                let values: Vec<f64> = (first..=last)
                    .map(|j| match construction {
                        Construction::DensityAtCenter => d.pdf((cc.c1 - grid.center(j)) / k),
                        Construction::CdfMass => {
                            let upper = (cc.c1 - grid.edge(j)) / k;
                            let lower = (cc.c1 - grid.edge(j + 1)) / k;
                            (d.cdf(upper) - d.cdf(lower)).max(0.0)
                        }
                    })
                    .collect();
                trim(first, values)
            } else if m == 1 {
                BandRow {
                    start: 0,
                    values: vec![1.0],
                }
            } else {
                BandRow {
                    start: i,
                    values: Vec::new(),
                }
            };
            normalize(i, band)
        })
        .collect();

    if built.iter().all(|(_, degenerate)| *degenerate) && m > 1 {
        return Err(Error::Model(
            "no feasible transitions: every row of the transition matrix is empty".into(),
        ));
    }
    for (i, (row, _)) in built.iter().enumerate() {
        if row.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "row {i} of the transition matrix is not finite; try the cdf-mass construction"
            )));
        }
    }
    let (rows, degenerate) = built.into_iter().unzip();
    Ok(TransitionMatrix {
        grid: *grid,
        rows,
        degenerate,
    })
}

fn trim(start: usize, mut values: Vec<f64>) -> BandRow {
    let lead = values.iter().take_while(|&&v| v == 0.0).count();
    if lead == values.len() {
        return BandRow {
            start,
            values: Vec::new(),
        };
    }
    let tail = values.iter().rev().take_while(|&&v| v == 0.0).count();
    values.truncate(values.len() - tail);
    values.drain(..lead);
    BandRow {
        start: start + lead,
        values,
    }
}

fn normalize(i: usize, mut row: BandRow) -> (BandRow, bool) {
    let sum: f64 = row.values.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        row.values.iter_mut().for_each(|v| *v /= sum);
        (row, false)
    } else if sum.is_finite() {
        (
            BandRow {
                start: i,
                values: vec![1.0],
            },
            true,
        )
    } else {
        (row, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StationarySolver {
    PowerIteration {
        max_iter: usize,
        tol: f64,
    },
    /// LU solve of `(Sᵀ − I)u = 0` with `Σu = 1`; only for small chains.
    Dense,
}

impl Default for StationarySolver {
    fn default() -> Self {
        StationarySolver::PowerIteration {
            max_iter: 100_000,
            tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationaryOptions {
    pub solver: StationarySolver,
    /// Starting vector for power iteration. Defaults to uniform mass on the
    /// states that have feasible transitions; mass on the other states is
    /// dropped.
    pub start: Option<Vec<f64>>,
}

/// Maximum allowed `‖ûᵀŜ − ûᵀ‖∞`.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Stationary distribution `û` of end-of-cycle voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub grid: VoltageGrid,
    pub probabilities: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn stationary_distribution(
    s: &TransitionMatrix,
    opts: &StationaryOptions,
) -> Result<StationaryDistribution> {
    let m = s.size();
    let (mut u, iterations) = match &opts.solver {
        StationarySolver::Dense => (dense_stationary(s)?, 0),
        StationarySolver::PowerIteration { max_iter, tol } => {
            let start = match &opts.start {
                Some(v) => {
                    if v.len() != m
                        || v.iter().any(|&x| !(x >= 0.0))
                        || v.iter().sum::<f64>() <= 0.0
                    {
                        return Err(Error::Model(
                            "start vector must be a nonnegative vector of matching length".into(),
                        ));
                    }
                    let restricted: Vec<f64> = v
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| if s.is_degenerate(i) { 0.0 } else { x })
                        .collect();
                    if restricted.iter().sum::<f64>() <= 0.0 {
                        return Err(Error::Model(
                            "start vector has no mass on reachable states".into(),
                        ));
                    }
                    restricted
                }
                None => (0..m)
                    .map(|i| if s.is_degenerate(i) { 0.0 } else { 1.0 })
                    .collect(),
            };
            power_iteration(s, start, *max_iter, *tol)?
        }
    };
    let total: f64 = u.iter().sum();
    u.iter_mut().for_each(|x| *x /= total);

    let mut next = vec![0.0; m];
    s.left_multiply(&u, &mut next);
    let residual = next
        .iter()
        .zip(&u)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "stationary vector residual {residual:e} exceeds {STATIONARY_RESIDUAL_TOL:e}"
        )));
    }
    Ok(StationaryDistribution {
        grid: *s.grid(),
        probabilities: u,
        iterations,
        residual,
    })
}

fn power_iteration(
    s: &TransitionMatrix,
    mut u: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<(Vec<f64>, usize)> {
    let total: f64 = u.iter().sum();
    u.iter_mut().for_each(|x| *x /= total);
    let mut next = vec![0.0; u.len()];
    for iter in 1..=max_iter {
        s.left_multiply(&u, &mut next);
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= norm);
        let change: f64 = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut u, &mut next);
        if change < tol {
            return Ok((u, iter));
        }
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge in {max_iter} iterations"
    )))
}

fn dense_stationary(s: &TransitionMatrix) -> Result<Vec<f64>> {
    let m = s.size();
    if m > DENSE_SOLVER_MAX_BINS {
        return Err(Error::Numerical(format!(
            "dense stationary solve is limited to {DENSE_SOLVER_MAX_BINS} states, got {m}"
        )));
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        if s.is_degenerate(i) {
            continue;
        }
        for j in 0..m {
            a[(j, i)] = s.get(i, j);
        }
    }
    for i in 0..m {
        // Unreachable self-loop states are pinned to zero mass.
        a[(i, i)] -= 1.0;
    }
    // One balance equation is redundant; swap it for the normalization.
    let r = (0..m)
        .rev()
        .find(|&i| !s.is_degenerate(i))
        .ok_or_else(|| Error::Model("no state has feasible transitions".into()))?;
    for j in 0..m {
        a[(r, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[r] = 1.0;
    let u = a.lu().solve(&rhs).ok_or_else(|| {
        Error::Numerical("chain is reducible; dense solve has no unique answer".into())
    })?;
    Ok(u.iter().map(|&x| x.max(0.0)).collect())
}

impl StationaryDistribution {
    pub fn bins(&self) -> usize {
        self.probabilities.len()
    }

    pub fn delta(&self) -> f64 {
        self.grid.delta()
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        self.grid.edges()
    }

    /// Mass at or below `v_op`, interpolating linearly inside the straddling bin.
    pub fn energy_outage(&self, v_op: f64) -> f64 {
        let g = &self.grid;
        if v_op <= g.lo {
            return 0.0;
        }
        if v_op >= g.hi {
            return 1.0;
        }
        let pos = (v_op - g.lo) / g.delta();
        let full = (pos.floor() as usize).min(self.bins());
        let below: f64 = self.probabilities[..full].iter().sum();
        let partial = self
            .probabilities
            .get(full)
            .map_or(0.0, |p| p * (pos - full as f64));
        (below + partial).min(1.0)
    }

    /// Step version: total mass of bins whose center lies at or below `v_op`.
    pub fn energy_outage_step(&self, v_op: f64) -> f64 {
        (0..self.bins())
            .take_while(|&k| self.grid.center(k) <= v_op)
            .map(|k| self.probabilities[k])
            .sum()
    }

    /// Bin centers paired with `û_k / δ`.
    pub fn pdf(&self) -> Vec<(f64, f64)> {
        let delta = self.delta();
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| (self.grid.center(k), p / delta))
            .collect()
    }

    /// Upper bin edges paired with the cumulative mass through that bin.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let mut acc = 0.0;
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| {
                acc += p;
                (self.grid.edge(k + 1), acc.min(1.0))
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| p * self.grid.center(k))
            .sum()
    }

    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| p * (self.grid.center(k) - mean).powi(2))
            .sum();
        second.sqrt()
    }

    /// Center of the most probable bin.
    pub fn mode(&self) -> f64 {
        let (k, _) =
            self.probabilities
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &p)| {
                    if p > best.1 {
                        (k, p)
                    } else {
                        best
                    }
                });
        self.grid.center(k)
    }

    /// Total-variation distance to another distribution on the same grid.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self
            .probabilities
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

pub fn energy_outage(sd: &StationaryDistribution, v_op: f64) -> f64 {
    sd.energy_outage(v_op)
}

pub fn stationary_pdf(sd: &StationaryDistribution) -> Vec<(f64, f64)> {
    sd.pdf()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateOptions {
    pub bins: usize,
    pub construction: Construction,
    pub stationary: StationaryOptions,
}

/// Default bin count for steady-state analyses.
pub const DEFAULT_BINS: usize = 2000;

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            construction: Construction::default(),
            stationary: StationaryOptions::default(),
        }
    }
}

impl SteadyStateOptions {
    pub fn with_bins(bins: usize) -> Self {
        Self {
            bins,
            ..Self::default()
        }
    }
}

/// Everything known about one (scheme, airtime) steady state.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub scheme: ChargingScheme,
    pub constants: CycleConstants,
    pub mean_decay: f64,
    /// Closed-form mean-voltage estimate.
    pub estimator_mean: f64,
    pub distribution: StationaryDistribution,
    /// Energy outage probability at the operating threshold.
    pub outage: f64,
}

pub fn steady_state(
    model: &CapacitorModel,
    scheme: &ChargingScheme,
    airtime: f64,
    v_op: f64,
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    let dist = DecayFactorDistribution::new(*scheme, model.tau_off)?;
    let cc = model.cycle_constants(airtime);
    let grid = VoltageGrid::for_model(model, opts.bins)?;
    let matrix = build_transition_matrix(&dist, &cc, &grid, opts.construction)?;
    let distribution = stationary_distribution(&matrix, &opts.stationary)?;
    let mean_decay = dist.mean()?;
    let estimator_mean = cc.mean_fixed_point(mean_decay)?;
    let outage = distribution.energy_outage(v_op);
    Ok(SteadyState {
        scheme: *scheme,
        constants: cc,
        mean_decay,
        estimator_mean,
        distribution,
        outage,
    })
}

/// Outage at each bin count in `bins`, for grid-convergence reporting.
pub fn convergence_report(
    model: &CapacitorModel,
    scheme: &ChargingScheme,
    airtime: f64,
    v_op: f64,
    opts: &SteadyStateOptions,
    bins: &[usize],
) -> Result<Vec<(usize, f64)>> {
    bins.iter()
        .map(|&m| {
            let o = SteadyStateOptions {
                bins: m,
                ..opts.clone()
            };
            steady_state(model, scheme, airtime, v_op, &o).map(|s| (m, s.outage))
        })
        .collect()
}

/// Steady state of every SF ring, one scheme per ring.
pub fn ring_steady_states(
    cfg: &PhyConfig,
    model: &CapacitorModel,
    schemes: &[ChargingScheme; 6],
    opts: &SteadyStateOptions,
) -> Result<Vec<SteadyState>> {
    SF_TABLE
        .par_iter()
        .zip(schemes.par_iter())
        .map(|(entry, scheme)| steady_state(model, scheme, entry.airtime_s, cfg.v_op, opts))
        .collect()
}

/// Energy outage of every SF ring under a single charging scheme.
pub fn ring_outages(
    cfg: &PhyConfig,
    model: &CapacitorModel,
    scheme: &ChargingScheme,
    opts: &SteadyStateOptions,
) -> Result<[f64; 6]> {
    let states = ring_steady_states(cfg, model, &[*scheme; 6], opts)?;
    Ok(std::array::from_fn(|n| states[n].outage))
}
