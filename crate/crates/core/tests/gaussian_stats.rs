use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use utdv_core::gaussian::{kl_gaussian, kl_penalty, mean_entropy, TriBlock, WeightDistribution};
use utdv_core::tdv::{init_params, TdvConfig, TdvParams};

fn small_params(rng: &mut ChaCha8Rng) -> TdvParams {
    let cfg = TdvConfig {
        coils: 1,
        feature_channels: 2,
        macroblocks: 1,
        residual_blocks_per_macro: 1,
        scales: 2,
        kernel_size: 3,
    };
    init_params(&cfg, rng).unwrap()
}

fn random_block(dim: usize, rng: &mut ChaCha8Rng) -> TriBlock {
    let mut b = TriBlock::zeros(dim);
    for a in 0..dim {
        for c in 0..a {
            b.set(a, c, rng.random_range(-0.3..0.3));
        }
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        b.set(a, a, sign * rng.random_range(0.2..1.2));
    }
    b
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

fn log_density(x: &DVector<f64>, mu: &DVector<f64>, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let d = x.len() as f64;
    let diff = x - mu;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (diff.dot(&chol.solve(&diff)) + logdet + d * (2.0 * std::f64::consts::PI).ln())
}

#[test]
fn closed_form_kl_matches_monte_carlo_in_nine_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let d = 9;
    for _ in 0..3 {
        let (s1, s2) = (random_spd(d, &mut rng), random_spd(d, &mut rng));
        let mu1 = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
        let mu2 = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
        let kl = kl_gaussian(&mu1, &s1, &mu2, &s2).unwrap();
        let (c1, c2) = (s1.clone().cholesky().unwrap(), s2.clone().cholesky().unwrap());
        let n = 1_000_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &mu1 + c1.l() * z;
            let r = log_density(&x, &mu1, &c1) - log_density(&x, &mu2, &c2);
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(se < 3e-3, "standard error {se} too large for the check");
        assert!((mean - kl).abs() < 1e-2, "MC {mean} vs closed form {kl}");
    }
}

#[test]
fn kl_of_identical_gaussians_is_zero_and_rejects_non_pd() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let s = random_spd(5, &mut rng);
    let mu = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
    assert!(kl_gaussian(&mu, &s, &mu, &s).unwrap().abs() < 1e-12);
    let mut bad = s.clone();
    bad[(0, 0)] = -1.0;
    assert!(kl_gaussian(&mu, &bad, &mu, &s).is_err());
}

#[test]
fn penalty_differs_from_scaled_kl_by_a_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    let mu = small_params(&mut rng);
    let (alpha, beta) = (10.0, 3e-4);
    let slices = mu.layout().stochastic_slices();
    let mut offsets = Vec::new();
    for _ in 0..20 {
        let blocks: Vec<TriBlock> = slices.iter().map(|r| random_block(r.len(), &mut rng)).collect();
        let dist = WeightDistribution::new(mu.clone(), blocks, alpha).unwrap();
        let mut kl = 0.0;
        for (b, r) in dist.blocks().iter().zip(&slices) {
            let m = DVector::from_column_slice(&mu.flat()[r.clone()]);
            let prior = DMatrix::identity(r.len(), r.len()) / alpha;
            kl += kl_gaussian(&m, &b.covariance(), &m, &prior).unwrap();
        }
        offsets.push(kl_penalty(&dist, beta).unwrap() - 2.0 * beta * kl);
    }
    let d: usize = slices.iter().map(|r| r.len()).sum();
    let expected = beta * d as f64 * (1.0 + alpha.ln());
    for o in &offsets {
        assert!((o - offsets[0]).abs() < 1e-8);
        assert!((o - expected).abs() < 1e-8, "{o} vs {expected}");
    }
}

#[test]
fn block_covariance_of_draws_matches_llt() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mu = small_params(&mut rng);
    let slices = mu.layout().stochastic_slices();
    let blocks: Vec<TriBlock> = slices.iter().map(|r| random_block(r.len(), &mut rng)).collect();
    let dist = WeightDistribution::new(mu.clone(), blocks, 10.0).unwrap();
    let checked = [0, slices.len() - 1];
    let n = 100_000;
    let mut sums: Vec<DMatrix<f64>> = checked.iter().map(|&u| DMatrix::zeros(slices[u].len(), slices[u].len())).collect();
    let mut means: Vec<DVector<f64>> = checked.iter().map(|&u| DVector::zeros(slices[u].len())).collect();
    for _ in 0..n {
        let (theta, _) = dist.sample_with_draws(&mut rng);
        for (k, &u) in checked.iter().enumerate() {
            let r = &slices[u];
            let dev = DVector::from_iterator(r.len(), theta.flat()[r.clone()].iter().zip(&mu.flat()[r.clone()]).map(|(t, m)| t - m));
            sums[k] += &dev * dev.transpose();
            means[k] += dev;
        }
    }
    for (k, &u) in checked.iter().enumerate() {
        let sigma = dist.blocks()[u].covariance();
        let emp = &sums[k] / n as f64;
        let mean = &means[k] / n as f64;
        for a in 0..sigma.nrows() {
            let se_mean = (sigma[(a, a)] / n as f64).sqrt();
            assert!(mean[a].abs() < 5.0 * se_mean);
            for b in 0..sigma.ncols() {
                let se = ((sigma[(a, a)] * sigma[(b, b)] + sigma[(a, b)].powi(2)) / n as f64).sqrt();
                assert!((emp[(a, b)] - sigma[(a, b)]).abs() < 5.0 * se, "block {u} ({a},{b})");
            }
        }
    }
    // Deterministic coordinates are never perturbed.
    let (theta, _) = dist.sample_with_draws(&mut rng);
    let stochastic: std::collections::HashSet<usize> = slices.iter().flat_map(|r| r.clone()).collect();
    for i in (0..mu.len()).filter(|i| !stochastic.contains(i)) {
        assert_eq!(theta.flat()[i], mu.flat()[i]);
    }
}

#[test]
fn entropy_grows_with_the_covariance_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let mu = small_params(&mut rng);
    let mut last = f64::NEG_INFINITY;
    for l0 in [1e-3, 1e-2, 1e-1, 1.0] {
        let h = mean_entropy(&WeightDistribution::from_mean(mu.clone(), l0, 10.0).unwrap());
        assert!(h > last);
        last = h;
    }
}
