mod common;

use approx::assert_relative_eq;
use lora_eh::geometry::*;
use lora_eh::phy::{collision_fraction, duty_cycle, ChargingScheme, PhyConfig, SF_TABLE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use common::{chi2_sf, sir_by_quadrature};

fn cfg_with(eta: f64, lambda: f64) -> PhyConfig {
    PhyConfig {
        eta,
        lambda_per_km2: lambda,
        ..PhyConfig::default()
    }
}

fn ud() -> ChargingScheme {
    ChargingScheme::uniform(0.0, 100.0).unwrap()
}

#[test]
fn path_gain_reference_value() {
    let cfg = PhyConfig::default();
    // 50-digit reference for (0.345 / 4π·1000)^2.75
    assert_relative_eq!(
        path_gain(1.0, &cfg).unwrap(),
        2.858_744_785_177_853_6e-13,
        max_relative = 1e-13
    );
}

#[test]
fn path_gain_scaling() {
    let cfg = cfg_with(2.0, 4.0);
    assert_relative_eq!(
        path_gain(2.0, &cfg).unwrap() / path_gain(1.0, &cfg).unwrap(),
        0.25,
        max_relative = 1e-14
    );
    assert!(path_gain(0.0, &cfg).is_err());
    let cfg = PhyConfig::default();
    let g: Vec<f64> = (1..=600)
        .map(|i| path_gain(i as f64 * 0.01, &cfg).unwrap())
        .collect();
    assert!(g.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn snr_limits() {
    let cfg = PhyConfig::default();
    assert!(snr_success(1e-9, &cfg).unwrap() > 1.0 - 1e-9);
    let quiet = PhyConfig {
        noise_w: 0.0,
        ..PhyConfig::default()
    };
    for d in [0.1, 2.0, 5.9] {
        assert_eq!(snr_success(d, &quiet).unwrap(), 1.0);
    }
    assert!(snr_success(6.5, &cfg).is_err());
}

#[test]
fn snr_matches_fading_samples() {
    let cfg = PhyConfig::default();
    let d = 4.5;
    let sf = lora_eh::phy::sf_for_distance(d, &cfg).unwrap();
    let thr = cfg.noise_w * sf.snr_threshold() / (cfg.p_t * path_gain(d, &cfg).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000_000u64;
    let hits = (0..n)
        .filter(|_| {
            let h: f64 = Exp1.sample(&mut rng);
            h >= thr
        })
        .count() as f64;
    let p = hits / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let exact = snr_success(d, &cfg).unwrap();
    assert!((p - exact).abs() < 3.0 * se, "{p} vs {exact} (se {se})");
}

#[test]
fn snr_saw_tooth_jumps_up_at_ring_edges() {
    let cfg = PhyConfig::default();
    for n in 1..6 {
        let edge = cfg.ring_radii_km[n];
        let inside = snr_success(edge, &cfg).unwrap();
        let outside = snr_success(edge + 1e-9, &cfg).unwrap();
        assert!(outside >= inside);
    }
}

#[test]
fn sir_trivial_cases() {
    let cfg = PhyConfig::default();
    assert_eq!(sir_success(2.5, 0.0, &cfg).unwrap(), 1.0);
    assert_eq!(sir_success(2.5, 0.3, &cfg_with(2.75, 0.0)).unwrap(), 1.0);
    assert!(sir_success(2.5, 1.5, &cfg).is_err());
    assert!(sir_success(2.5, -0.1, &cfg).is_err());
}

#[test]
fn sir_inner_ring_matches_quadrature() {
    for eta in [2.0, 2.5, 3.0, 4.0] {
        let cfg = cfg_with(eta, 3.0);
        for d in [0.01, 0.3, 0.99] {
            let exact = sir_by_quadrature(d, 0.05, 3.0, eta, cfg.sir_threshold, 0.0, 1.0);
            assert_relative_eq!(
                sir_success(d, 0.05, &cfg).unwrap(),
                exact,
                max_relative = 1e-8
            );
        }
    }
}

#[test]
fn sir_monotone_in_activity_intensity_and_threshold() {
    let base = PhyConfig::default();
    for d in [0.5, 2.5, 4.2, 5.8] {
        let ps: Vec<f64> = (1..=20)
            .map(|i| sir_success(d, i as f64 * 0.05, &base).unwrap())
            .collect();
        assert!(ps.windows(2).all(|w| w[1] < w[0]));
        let ls: Vec<f64> = (1..=20)
            .map(|i| sir_success(d, 0.01, &cfg_with(2.75, i as f64 * 0.5)).unwrap())
            .collect();
        assert!(ls.windows(2).all(|w| w[1] < w[0]));
        let ts: Vec<f64> = (0..20)
            .map(|i| {
                let cfg = PhyConfig {
                    sir_threshold: 10f64.powf((-3.0 + i as f64 * 0.5) / 10.0),
                    ..base.clone()
                };
                sir_success(d, 0.01, &cfg).unwrap()
            })
            .collect();
        assert!(ts.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn sir_continuous_within_rings() {
    let cfg = cfg_with(3.0, 10.0);
    for n in 0..6 {
        let (lo, hi) = cfg.ring_edges(n);
        let h = (hi - lo) / 2000.0;
        let vals: Vec<f64> = (1..2000)
            .map(|i| sir_success(lo + i as f64 * h, 0.2, &cfg).unwrap())
            .collect();
        let jump = vals
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        assert!(jump < 5e-3, "ring {n}: {jump}");
    }
}

#[test]
fn connection_bounds_order() {
    let cfg = cfg_with(2.75, 20.0);
    let grid = distance_grid(&cfg, 50);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &d in &grid {
            let b = connection_prob(d, 0.05, &cfg, 2000, &mut rng).unwrap();
            assert!(b.upper >= b.lower, "d={d}: {b:?}");
            assert!(b.upper <= 1.0);
        }
    }
}

#[test]
fn connection_bounds_trivial_and_compositional() {
    let cfg = PhyConfig {
        noise_w: 0.0,
        ..PhyConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = connection_prob(2.5, 0.0, &cfg, 1000, &mut rng).unwrap();
    assert_eq!((b.lower, b.upper), (1.0, 1.0));
    let cfg = PhyConfig::default();
    let d = cfg.ring_midpoint(1);
    let b = connection_prob(d, 0.01, &cfg, 0, &mut rng).unwrap();
    let product = snr_success(d, &cfg).unwrap() * sir_success(d, 0.01, &cfg).unwrap();
    assert_eq!(b.lower, product);
}

#[test]
fn upper_bound_matches_brute_force() {
    // plain Monte Carlo of P[|h|² ≥ max(noise, interference) terms]
    let cfg = cfg_with(3.0, 30.0);
    let d = 4.5;
    let p = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = connection_prob(d, p, &cfg, 200_000, &mut rng).unwrap();

    let sf = lora_eh::phy::sf_for_distance(d, &cfg).unwrap();
    let (lo, hi) = cfg.ring_edges(sf.ring());
    let g = path_gain(d, &cfg).unwrap();
    let a = cfg.noise_w * sf.snr_threshold() / (cfg.p_t * g);
    let count = rand_distr::Poisson::new(
        p * cfg.lambda_per_km2 * std::f64::consts::PI * (hi * hi - lo * lo),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let n = 200_000;
    let mut hits = 0u64;
    for _ in 0..n {
        let k: f64 = count.sample(&mut rng);
        let mut i = 0.0;
        for _ in 0..k as usize {
            let r = (lo * lo + rand::Rng::random::<f64>(&mut rng) * (hi * hi - lo * lo)).sqrt();
            let f: f64 = Exp1.sample(&mut rng);
            i += path_gain(r, &cfg).unwrap() * f;
        }
        let h: f64 = Exp1.sample(&mut rng);
        if h >= a.max(cfg.sir_threshold * i / g) {
            hits += 1;
        }
    }
    let q = hits as f64 / n as f64;
    let se = (q * (1.0 - q) / n as f64).sqrt();
    assert!(
        (q - b.upper).abs() < 4.0 * (se + b.upper_std_err),
        "{q} vs {}",
        b.upper
    );
}

#[test]
fn dead_network_has_no_interference() {
    let cfg = cfg_with(2.75, 50.0);
    let grid = distance_grid(&cfg, 60);
    let prof =
        coverage_profile(&cfg, &ud(), &[1.0; 6], &grid, &CoverageOptions::default()).unwrap();
    for pt in &prof.points {
        assert_eq!(pt.overall_q, 0.0);
        assert_eq!(pt.conn_lower, pt.snr_success);
    }
}

#[test]
fn lone_device_is_snr_limited() {
    let cfg = cfg_with(2.75, 0.0);
    let grid = distance_grid(&cfg, 60);
    let prof =
        coverage_profile(&cfg, &ud(), &[0.0; 6], &grid, &CoverageOptions::default()).unwrap();
    for pt in &prof.points {
        assert_eq!(pt.overall_q, pt.snr_success);
    }
}

#[test]
fn profile_is_product_of_factors() {
    let cfg = PhyConfig::default();
    let outage = [0.0, 0.0, 0.001, 0.085, 0.80, 1.0];
    let grid = distance_grid(&cfg, 120);
    let opts = CoverageOptions {
        upper_bound_samples: 500,
        seed: 3,
        ..Default::default()
    };
    let prof = coverage_profile(&cfg, &ud(), &outage, &grid, &opts).unwrap();
    for pt in &prof.points {
        let n = usize::from(pt.sf - 7);
        assert_eq!(pt.energy_avail, 1.0 - outage[n]);
        assert_relative_eq!(
            pt.overall_q,
            pt.energy_avail * pt.conn_lower,
            max_relative = 1e-15
        );
        assert!(pt.conn_upper.unwrap() >= pt.conn_lower);
    }
    for n in 0..6 {
        let p = collision_fraction(1.0 - outage[n], &ud(), SF_TABLE[n].airtime_s).unwrap();
        assert_eq!(prof.collision_fraction[n], p);
    }
}

#[test]
fn energy_tradeoff_is_unimodal() {
    for lambda in [4.0, 400.0, 4000.0] {
        let cfg = cfg_with(2.75, lambda);
        let d = cfg.ring_midpoint(3);
        let tau = SF_TABLE[3].airtime_s;
        let a = sir_exponent(d, &cfg).unwrap() * duty_cycle(&ud(), tau).unwrap();
        let snr = snr_success(d, &cfg).unwrap();
        let q: Vec<f64> = (0..=1000)
            .map(|i| {
                let e = i as f64 / 1000.0;
                let p = collision_fraction(e, &ud(), tau).unwrap();
                e * snr * sir_success(d, p, &cfg).unwrap()
            })
            .collect();
        let k = q
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap()
            .0;
        assert!(q[..=k].windows(2).all(|w| w[1] >= w[0]));
        assert!(q[k..].windows(2).all(|w| w[1] <= w[0]));
        assert!(
            (k as f64 / 1000.0 - optimal_energy_avail(a)).abs() <= 1e-3,
            "λ={lambda} A={a}"
        );
    }
}

#[test]
fn poisson_mean_count() {
    let cfg = PhyConfig::default();
    let n = 10_000;
    let total: usize = (0..n).map(|s| sample_network(&cfg, s).unwrap().len()).sum();
    let mean = total as f64 / n as f64;
    let expected = cfg.lambda_per_km2 * std::f64::consts::PI * 36.0;
    assert!(
        (mean - expected).abs() / expected < 0.01,
        "{mean} vs {expected}"
    );
}

#[test]
fn ring_counts_follow_annulus_areas() {
    let cfg = PhyConfig::default();
    let mut counts = [0usize; 6];
    for seed in 0..200 {
        let net = sample_network(&cfg, seed).unwrap();
        for (c, k) in counts.iter_mut().zip(net.ring_counts()) {
            *c += k;
        }
    }
    let total: usize = counts.iter().sum();
    let r2 = cfg.ring_radii_km[6].powi(2);
    let stat: f64 = (0..6)
        .map(|n| {
            let (lo, hi) = cfg.ring_edges(n);
            let e = total as f64 * (hi * hi - lo * lo) / r2;
            (counts[n] as f64 - e).powi(2) / e
        })
        .sum();
    assert!(chi2_sf(stat, 5.0) > 0.01, "χ² = {stat}");
}

#[test]
fn empty_and_deterministic_networks() {
    let cfg = cfg_with(2.75, 0.0);
    assert!(sample_network(&cfg, 1).unwrap().is_empty());
    let cfg = PhyConfig::default();
    assert_eq!(
        sample_network(&cfg, 5).unwrap(),
        sample_network(&cfg, 5).unwrap()
    );
    let net = sample_network_fixed(&cfg, 300, 2).unwrap();
    assert_eq!(net.len(), 300);
    for d in &net.devices {
        assert!(d.distance_km <= 6.0);
        assert_eq!(
            lora_eh::phy::sf_for_distance(d.distance_km, &cfg)
                .unwrap()
                .sf,
            d.sf
        );
    }
}

#[test]
fn probes_do_not_count_as_devices() {
    let cfg = PhyConfig::default();
    let mut net = sample_network_fixed(&cfg, 30, 2).unwrap();
    let before = net.ring_counts();
    let idx = net.add_ring_probes(&cfg).unwrap();
    assert_eq!(net.ring_counts(), before);
    for (n, &i) in idx.iter().enumerate() {
        assert!(net.devices[i].probe);
        assert_eq!(net.devices[i].ring, n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sir_matches_quadrature(
        ring in 0usize..6,
        frac in 0.001..1.0f64,
        p in 0.0..0.2f64,
        lambda in 0.05..5.0f64,
        eta_idx in 0usize..4,
    ) {
        let eta = [2.5, 3.0, 3.5, 4.0][eta_idx];
        let cfg = cfg_with(eta, lambda);
        let (lo, hi) = cfg.ring_edges(ring);
        let d = (lo + frac * (hi - lo)).max(0.01);
        let exact = sir_by_quadrature(d, p, lambda, eta, cfg.sir_threshold, lo, hi);
        let got = sir_success(d, p, &cfg).unwrap();
        prop_assert!((got - exact).abs() <= 1e-8 * exact, "{got} vs {exact}");
    }
}
