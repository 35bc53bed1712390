//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's own quadrature or special-function
//! code, so agreement is a genuine cross-check.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Adaptive Simpson with Richardson correction.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Simpson over `[a, b]` split at geometric breakpoints around `knee`, with a
/// tolerance relative to a first-pass estimate.
pub fn simpson_rel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, knee: f64, rel: f64) -> f64 {
    let mut pts = vec![a];
    if knee > a && knee < b {
        let mut k = knee;
        let mut below = Vec::new();
        while k > a + (b - a) * 1e-15 && below.len() < 40 {
            below.push(k);
            k /= 8.0;
        }
        below.reverse();
        pts.extend(below);
        let mut k = knee * 8.0;
        while k < b {
            pts.push(k);
            k *= 8.0;
        }
    }
    pts.push(b);
    let rough: f64 = pts
        .windows(2)
        .map(|w| simpson(f, w[0], w[1], 1e-6 * (w[1] - w[0])))
        .sum();
    let tol = rel * rough.abs() / pts.len() as f64;
    pts.windows(2).map(|w| simpson(f, w[0], w[1], tol)).sum()
}

/// Euler integral for `₂F₁(1, b; 1+b; z)`, `b = 2/η`, after substituting
/// `s = t^b`: `∫₀¹ ds / (1 − z·s^{η/2})`.
pub fn hyp2f1_euler(eta: f64, z: f64) -> f64 {
    let y = -z;
    let p = eta / 2.0;
    let knee = if y > 1.0 { y.powf(-1.0 / p) } else { 1.0 };
    simpson_rel(&|s: f64| 1.0 / (1.0 + y * s.powf(p)), 0.0, 1.0, knee, 1e-13)
}

/// SIR success by quadrature of
/// `exp(−2πpλ ∫ ℘(d/r)^η / (1 + ℘(d/r)^η) · r dr)` over `[lo, hi]`.
pub fn sir_by_quadrature(d: f64, p: f64, lambda: f64, eta: f64, wp: f64, lo: f64, hi: f64) -> f64 {
    let f = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let x = wp * (d / r).powf(eta);
        x / (1.0 + x) * r
    };
    let knee = (wp.powf(1.0 / eta) * d).clamp(lo, hi);
    let integral = simpson_rel(&f, lo, hi, if knee > lo { knee } else { hi }, 1e-14);
    (-2.0 * PI * p * lambda * integral).exp()
}

/// Fourth-order Runge-Kutta for `dv/dt = (v∞ − v)/τ`.
pub fn rk4_relax(v0: f64, v_inf: f64, tau: f64, t: f64, steps: usize) -> f64 {
    let h = t / steps as f64;
    let f = |v: f64| (v_inf - v) / tau;
    let mut v = v0;
    for _ in 0..steps {
        let k1 = f(v);
        let k2 = f(v + 0.5 * h * k1);
        let k3 = f(v + 0.5 * h * k2);
        let k4 = f(v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    v
}

/// Thevenin reduction of the harvester/capacitor/load circuit, derived from
/// nodal analysis: `C dv/dt = (V_H − v)/R_H − v/R_L`.
pub fn thevenin(v_h: f64, r_h: f64, r_l: f64, c: f64) -> (f64, f64) {
    let g = 1.0 / r_h + 1.0 / r_l;
    (v_h / r_h / g, c / g)
}

/// Histogram of `samples` on `bins` equal bins over `[lo, hi]`, normalized.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let w = (hi - lo) / bins as f64;
    for &s in samples {
        let k = (((s - lo) / w).floor() as isize).clamp(0, bins as isize - 1) as usize;
        h[k] += 1.0;
    }
    let n = samples.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Regularized upper incomplete gamma `Q(a, x)` by series / continued
/// fraction, for χ² tail probabilities.
pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    let a = dof / 2.0;
    let x = stat / 2.0;
    let ln_gamma_a = ln_gamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut n = a;
        for _ in 0..10_000 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        1.0 - sum * (-x + a * x.ln() - ln_gamma_a).exp()
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / 1e-300;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            d = if d.abs() < 1e-300 { 1e-300 } else { d };
            c = b + an / c;
            c = if c.abs() < 1e-300 { 1e-300 } else { c };
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x + a * x.ln() - ln_gamma_a).exp() * h
    }
}

/// Lanczos approximation of `ln Γ(x)`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// End-of-cycle voltages from iterating the charge/discharge relaxation
/// directly, with charging times drawn independently of the library sampler.
pub fn cycle_samples(
    model: &lora_eh::capacitor::CapacitorModel,
    scheme: &lora_eh::phy::ChargingScheme,
    airtime: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    use lora_eh::phy::ChargingScheme;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Weibull};

    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let weibull = match *scheme {
        ChargingScheme::Weibull { shape, scale } => Some(Weibull::new(scale, shape).unwrap()),
        ChargingScheme::Uniform { .. } => None,
    };
    let draw = |rng: &mut rand_chacha::ChaCha20Rng| match (*scheme, &weibull) {
        (ChargingScheme::Uniform { low, high }, _) => low + (high - low) * rng.random::<f64>(),
        (_, Some(w)) => w.sample(rng),
        _ => unreachable!(),
    };
    let relax = |v: f64, vi: f64, tau: f64, t: f64| vi + (v - vi) * (-t / tau).exp();
    let mut v = 1.8_f64.clamp(model.v_inf_on, model.v_inf_off);
    for _ in 0..10_000 {
        let nu = draw(&mut rng);
        v = relax(
            relax(v, model.v_inf_off, model.tau_off, nu),
            model.v_inf_on,
            model.tau_on,
            airtime,
        );
    }
    (0..n)
        .map(|_| {
            let nu = draw(&mut rng);
            v = relax(
                relax(v, model.v_inf_off, model.tau_off, nu),
                model.v_inf_on,
                model.tau_on,
                airtime,
            );
            v
        })
        .collect()
}

/// Sums consecutive groups of `factor` entries.
pub fn coarsen(p: &[f64], factor: usize) -> Vec<f64> {
    p.chunks(factor).map(|c| c.iter().sum()).collect()
}
