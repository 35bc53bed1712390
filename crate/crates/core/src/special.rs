//! Gauss hypergeometric function for the parameter pattern `(1, b; 1 + b; z)`
//! with `b = 2/η`, `η ≥ 2` and `z ≤ 0`.
//!
//! Three evaluation branches cover the half line:
//!
//! * `|z| < 0.9`: the defining series `Σ b/(b+n)·zⁿ`.
//! * `−9 ≤ z ≤ −0.9`: Pfaff's transformation
//!   `(1−z)^{−b}·₂F₁(b, b; 1+b; z/(z−1))`, whose argument lies in `[0.47, 0.9]`.
//! * `z < −9`: the expansion in powers of `1/z`, obtained by splitting
//!   `b∫₀¹ t^{b−1}/(1+yt) dt` at `t = 1/y`. Pfaff alone degrades there because
//!   its argument approaches 1, where the series diverges for `b = 1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest `|z|` handled by the direct series.
pub const SERIES_RADIUS: f64 = 0.9;

/// Switch from Pfaff to the reciprocal expansion below this `z`.
pub const RECIPROCAL_SWITCH: f64 = -9.0;

const REL_TOL: f64 = 1e-16;
const DEFAULT_MAX_TERMS: usize = 2_000;

/// Validated `(η, z)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp2F1Params {
    pub eta: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Series,
    Pfaff,
    Reciprocal,
}

impl Hyp2F1Params {
    pub fn new(eta: f64, z: f64) -> Result<Self> {
        if !(eta >= 2.0 && eta.is_finite()) {
            return Err(Error::Model(format!(
                "path-loss exponent must be >= 2, got {eta}"
            )));
        }
        if !(z <= 0.0) || z.is_infinite() {
            return Err(Error::Model(format!(
                "argument must be finite and <= 0, got {z}"
            )));
        }
        Ok(Self { eta, z })
    }

    /// `b = 2/η`.
    pub fn b(&self) -> f64 {
        2.0 / self.eta
    }

    pub fn branch(&self) -> Branch {
        if self.z.abs() < SERIES_RADIUS {
            Branch::Series
        } else if self.z >= RECIPROCAL_SWITCH {
            Branch::Pfaff
        } else {
            Branch::Reciprocal
        }
    }

    pub fn eval(&self) -> Result<f64> {
        match self.branch() {
            Branch::Series => direct_series(self.b(), self.z, DEFAULT_MAX_TERMS),
            Branch::Pfaff => pfaff(self.b(), self.z, DEFAULT_MAX_TERMS),
            Branch::Reciprocal => reciprocal(self.b(), self.z, DEFAULT_MAX_TERMS),
        }
    }
}

/// `₂F₁(1, 2/η; 1 + 2/η; z)` for `η ≥ 2`, `z ≤ 0`. The result lies in `(0, 1]`.
pub fn hyp2f1_special(eta: f64, z: f64) -> Result<f64> {
    Hyp2F1Params::new(eta, z)?.eval()
}

/// Evaluates one branch regardless of where `z` falls, with a custom term
/// budget. Used to cross-check branches against each other.
pub fn hyp2f1_branch(eta: f64, z: f64, branch: Branch, max_terms: usize) -> Result<f64> {
    let p = Hyp2F1Params::new(eta, z)?;
    match branch {
        Branch::Series => direct_series(p.b(), z, max_terms),
        Branch::Pfaff => pfaff(p.b(), z, max_terms),
        Branch::Reciprocal => {
            if z >= -1.0 {
                return Err(Error::Model(format!(
                    "reciprocal expansion needs z < -1, got {z}"
                )));
            }
            reciprocal(p.b(), z, max_terms)
        }
    }
}

fn no_convergence(what: &str, z: f64, terms: usize) -> Error {
    Error::Numerical(format!(
        "{what} for 2F1 did not converge at z = {z} within {terms} terms"
    ))
}

/// `Σ_{n≥0} b/(b+n)·zⁿ`.
fn direct_series(b: f64, z: f64, max_terms: usize) -> Result<f64> {
    let mut sum = 1.0;
    let mut zn = 1.0;
    for n in 1..max_terms {
        zn *= z;
        let term = b / (b + n as f64) * zn;
        sum += term;
        if term.abs() <= REL_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(no_convergence("direct series", z, max_terms))
}

/// `(1−z)^{−b}·₂F₁(b, b; 1+b; w)`, `w = z/(z−1)`.
fn pfaff(b: f64, z: f64, max_terms: usize) -> Result<f64> {
    let w = z / (z - 1.0);
    let mut sum = 1.0;
    let mut term = 1.0;
    for n in 0..max_terms {
        let nf = n as f64;
        term *= (b + nf) * (b + nf) / ((1.0 + b + nf) * (nf + 1.0)) * w;
        sum += term;
        if term.abs() <= REL_TOL * sum {
            return Ok((1.0 - z).powf(-b) * sum);
        }
    }
    Err(no_convergence("Pfaff series", z, max_terms))
}

/// Expansion for `y = −z > 1` with `ε = 1 − b`:
/// `F = (b/y)·[(s·y^ε − 1)/ε − Σ_{n≥1} (−1/y)ⁿ/(n+ε)]`, `s = πε/sin(πε)`.
fn reciprocal(b: f64, z: f64, max_terms: usize) -> Result<f64> {
    let y = -z;
    let eps = 1.0 - b;
    let ln_y = y.ln();
    let lead = if eps == 0.0 {
        ln_y
    } else {
        let s_minus_one = pi_eps_over_sin_minus_one(eps);
        (s_minus_one * (eps * ln_y).exp() + (eps * ln_y).exp_m1()) / eps
    };
    let mut tail = 0.0;
    let mut power = 1.0;
    let mut converged = false;
    for n in 1..max_terms {
        power *= -1.0 / y;
        let term = power / (n as f64 + eps);
        tail += term;
        if term.abs() <= REL_TOL * lead.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(no_convergence("reciprocal expansion", z, max_terms));
    }
    Ok(b / y * (lead - tail))
}

/// `πε/sin(πε) − 1` without cancellation for small `ε`.
fn pi_eps_over_sin_minus_one(eps: f64) -> f64 {
    let x = PI * eps;
    if x < 0.1 {
        let x2 = x * x;
        // x/sin x = 1 + x²/6 + 7x⁴/360 + 31x⁶/15120 + 127x⁸/604800 + ...
        x2 * (1.0 / 6.0
            + x2 * (7.0 / 360.0
                + x2 * (31.0 / 15120.0 + x2 * (127.0 / 604_800.0 + x2 * 73.0 / 3_421_440.0))))
    } else {
        x / x.sin() - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn origin() {
        assert_eq!(hyp2f1_special(2.75, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn logarithm_identity() {
        for z in [-0.3f64, -1.0, -5.0, -50.0, -1e6] {
            let expected = (-z).ln_1p() / -z;
            assert_relative_eq!(
                hyp2f1_special(2.0, z).unwrap(),
                expected,
                max_relative = 1e-13
            );
        }
        assert!((hyp2f1_special(2.0, -1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn branch_selection() {
        assert_eq!(
            Hyp2F1Params::new(3.0, -0.5).unwrap().branch(),
            Branch::Series
        );
        assert_eq!(
            Hyp2F1Params::new(3.0, -0.9).unwrap().branch(),
            Branch::Pfaff
        );
        assert_eq!(
            Hyp2F1Params::new(3.0, -9.0).unwrap().branch(),
            Branch::Pfaff
        );
        assert_eq!(
            Hyp2F1Params::new(3.0, -9.5).unwrap().branch(),
            Branch::Reciprocal
        );
    }

    #[test]
    fn small_eps_series_matches_direct_formula() {
        for eps in [1e-3, 0.01, 0.03] {
            let x = PI * eps;
            assert_relative_eq!(
                pi_eps_over_sin_minus_one(eps),
                x / x.sin() - 1.0,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn domain_errors() {
        assert!(hyp2f1_special(1.5, -1.0).is_err());
        assert!(hyp2f1_special(3.0, 0.5).is_err());
        assert!(hyp2f1_special(3.0, f64::NAN).is_err());
        assert!(hyp2f1_branch(3.0, -0.5, Branch::Reciprocal, 100).is_err());
    }

    #[test]
    fn series_budget_exhaustion_is_reported() {
        assert!(matches!(
            hyp2f1_branch(3.0, -0.999, Branch::Series, 50),
            Err(Error::Numerical(_))
        ));
    }
}
