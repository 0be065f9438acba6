use hmds::audio::FeatureCurve;
use hmds::diagnostics::{ess, ppc_hierarchical, ppc_pairwise};
use hmds::metrics::{build_tensor, hellinger, CurveSet};
use hmds::model::delta_prior;
use hmds::sampler::{empirical_bayes_lambda, run_chain, ChainConfig};
use hmds::summarize::posterior_mean_delta;
use hmds::synth::{generate_tensor, random_state};
use hmds::triangle::pairs;
use hmds::{AcceptanceRates, ChainOutput, DistanceTensor, Hyperparams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn short_chain(y: &DistanceTensor, seed: u64) -> ChainOutput {
    let h = Hyperparams::with_lambda(empirical_bayes_lambda(y));
    let cfg = ChainConfig { n_iter: 10_000, n_burnin: 5_000, thin: 5, rng_seed: seed, ..ChainConfig::default() };
    run_chain(y, &h, &cfg).unwrap()
}

#[test]
fn adapted_latent_acceptance_is_moderate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = random_state(5, 20, 4, 10.0, 5.0, &mut rng);
    let y = generate_tensor(&truth, &mut rng);
    let chain = short_chain(&y, 2);
    for a in chain.acceptance_rates.x.iter().chain([&chain.acceptance_rates.psi, &chain.acceptance_rates.gamma]) {
        assert!((0.1..=0.7).contains(a), "{:?}", chain.acceptance_rates);
    }
}

#[test]
fn isotropic_points_fill_the_leading_lambda_axes() {
    // a regular polygon has covariance proportional to the identity in its plane
    let (n, r) = (12, 1.5);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let y = DistanceTensor::from_fn(n, 3, |i, j, _| ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt());
    let lambda = empirical_bayes_lambda(&y);
    let expected = n as f64 * r * r / (2.0 * (n - 1) as f64);
    for &l in &lambda[..2] {
        assert!((l - expected).abs() < 1e-9, "{lambda:?}");
    }
    assert!(lambda[2..].iter().all(|&l| l <= 1e-8));
}

#[test]
fn thousand_iid_draws_give_ess_near_n() {
    let mut inside = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..1000).map(|_| normal(&mut rng)).collect();
        let e = ess(&x).unwrap().ess;
        assert!(e > 650.0 && e <= 1000.0, "{e}");
        inside += usize::from(e >= 800.0);
    }
    assert!(inside >= 40, "{inside}/50 within [800, 1000]");
}

#[test]
fn inflated_replicate_loses_pairwise_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = random_state(5, 12, 4, 10.0, 5.0, &mut rng);
    let y = generate_tensor(&truth, &mut rng);
    let chain = short_chain(&y, 5);
    let inflated = DistanceTensor::from_fn(5, 12, |i, j, p| if p == 3 { 10.0 * y.get(i, j, p) } else { y.get(i, j, p) });
    let clean = ppc_pairwise(&y, &chain, 0.95, &mut rng);
    let probed = ppc_pairwise(&inflated, &chain, 0.95, &mut rng);
    assert!(clean.coverage_for_replicate(3) >= 0.8);
    assert_eq!(probed.coverage_for_replicate(3), 0.0);
    for p in (0..12).filter(|&p| p != 3) {
        assert_eq!(probed.coverage_for_replicate(p), clean.coverage_for_replicate(p));
    }
}

#[test]
fn hierarchical_check_reduces_to_latent_distances_when_shrinkage_is_extreme() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut state = random_state(4, 3, 3, 8.0, 1e9, &mut rng);
    state.delta = hmds::UpperTriangle::from_fn(4, |i, j| state.latent_distance(i, j));
    let y = generate_tensor(&state, &mut rng);
    let spread = delta_prior(1.0, state.gamma).sample(&mut rng);
    assert!((spread - 1.0).abs() < 1e-3);

    let chain = ChainOutput {
        draws: vec![state.clone(); 20_000],
        n_burnin: 0,
        thin: 1,
        acceptance_rates: AcceptanceRates::default(),
        rng_seed: 0,
    };
    let report = ppc_hierarchical(&y, &chain, 0.95, &mut rng);
    // replicate-averaged pairwise ratios with delta fixed at the latent distance
    for (k, (i, j)) in pairs(4).enumerate() {
        let mut r: Vec<f64> = (0..20_000)
            .map(|_| {
                (0..3)
                    .map(|p| {
                        let mean = state.tau[p] * state.latent_distance(i, j);
                        (hmds::model::GammaSpec::with_mean(state.psi, mean).sample(&mut rng) / y.get(i, j, p)).ln()
                    })
                    .sum::<f64>()
                    / 3.0
            })
            .collect();
        r.sort_by(f64::total_cmp);
        let e = &report.entries[k];
        assert!((e.median - r[10_000]).abs() < 0.02, "{} vs {}", e.median, r[10_000]);
        let (lo, hi) = hmds::hpd(&r, 0.95);
        assert!((e.lower - lo).abs() < 0.03 && (e.upper - hi).abs() < 0.03);
    }
}

fn smooth_curve(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64)> = (0..4).map(|_| (rng.random::<f64>(), rng.random_range(0.05..0.2), rng.random_range(0.2..1.0))).collect();
    (0..len)
        .map(|k| {
            let t = k as f64 / (len - 1) as f64;
            0.05 + bumps.iter().map(|(c, w, a)| a * (-((t - c) / w).powi(2)).exp()).sum::<f64>()
        })
        .collect()
}

#[test]
fn posterior_mean_tracks_generating_curve_distances() {
    let (n, m, len) = (5, 15, 256);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bases: Vec<Vec<f64>> = (0..n).map(|_| smooth_curve(len, &mut rng)).collect();
    let curves: Vec<Vec<FeatureCurve>> = bases
        .iter()
        .map(|b| {
            (0..m)
                .map(|_| FeatureCurve::from_weights(b.iter().map(|v| v * (0.15 * normal(&mut rng)).exp()).collect()))
                .collect()
        })
        .collect();
    let y = build_tensor(&CurveSet::new(curves).unwrap(), 1e-6).unwrap();
    let chain = short_chain(&y, 8);
    let mean = posterior_mean_delta(&chain);

    let truth: Vec<f64> = pairs(n)
        .map(|(i, j)| {
            hellinger(&FeatureCurve::from_weights(bases[i].clone()), &FeatureCurve::from_weights(bases[j].clone())).unwrap()
        })
        .collect();
    let est: Vec<f64> = pairs(n).map(|(i, j)| mean.get(i, j)).collect();
    let r = pearson(&truth, &est);
    assert!(r > 0.9, "Pearson {r}");
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
