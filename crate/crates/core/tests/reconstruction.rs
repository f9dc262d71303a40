use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use utdv_core::gaussian::WeightDistribution;
use utdv_core::kspace::{apply_forward, generate_phantom, unitary_dft, zero_fill_adjoint, Direction, SamplingMask};
use utdv_core::prox::prox_data_fidelity;
use utdv_core::recon::{posterior_sample, reconstruct, reconstruct_tdv, trajectory, ReconStats};
use utdv_core::regularizer::{HalfSquaredNorm, Zero};
use utdv_core::tdv::{init_params, TdvConfig, TdvParams};
use utdv_core::{ComplexField, Domain};

fn tiny_params(seed: u64) -> TdvParams {
    let config = TdvConfig {
        coils: 1,
        feature_channels: 4,
        macroblocks: 1,
        residual_blocks_per_macro: 2,
        scales: 2,
        kernel_size: 3,
    };
    init_params(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_field(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ComplexField {
    let data = (0..w * h)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ComplexField::from_vec(w, h, 1, Domain::Image, data).unwrap()
}

fn problem(size: usize, seed: u64) -> (ComplexField, ComplexField, SamplingMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = generate_phantom(size, size, 1, &mut rng).unwrap();
    let mask = SamplingMask::generate(size, 4, 0.08, &mut rng).unwrap();
    let z = apply_forward(&y, &mask, 0.0, &mut rng).unwrap();
    (y, z, mask)
}

fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    a.data().iter().zip(b.data()).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max)
}

#[test]
fn zero_regularizer_contracts_acquired_residual_geometrically() {
    let size = 16;
    let (_, z, mask) = problem(size, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x0 = random_field(size, size, &mut rng);
    for (t, steps) in [(1.0, 1), (2.0, 5), (0.5, 10)] {
        let h = t / steps as f64;
        let mut x = x0.clone();
        for _ in 0..steps {
            x = prox_data_fidelity(&x, &z, &mask, h).unwrap();
        }
        let k0 = unitary_dft(&x0, Direction::Forward).unwrap();
        let ks = unitary_dft(&x, Direction::Forward).unwrap();
        let factor = (1.0 + h).powi(steps as i32);
        for row in 0..size {
            for col in 0..size {
                let i = row * size + col;
                if mask.is_acquired(row) {
                    let expect = (k0.data()[i] - z.data()[i]).norm() / factor;
                    let got = (ks.data()[i] - z.data()[i]).norm();
                    assert!((got - expect).abs() < 1e-12, "row {row} col {col}: {got} vs {expect}");
                } else {
                    assert!((ks.data()[i] - k0.data()[i]).norm() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn zero_regularizer_keeps_zero_fill() {
    let (_, z, mask) = problem(16, 5);
    let x = reconstruct(&z, &mask, &Zero, 1.5, 7).unwrap();
    assert!(max_diff(&x, &zero_fill_adjoint(&z, &mask).unwrap()) < 1e-12);
}

#[test]
fn single_step_is_one_prox_gradient_step() {
    let (_, z, mask) = problem(16, 6);
    let params = tiny_params(1);
    let t = 0.7;
    let x1 = reconstruct(&z, &mask, &params, t, 1).unwrap();
    let x0 = zero_fill_adjoint(&z, &mask).unwrap();
    let mut xb = x0.clone();
    xb.axpy(-t, &params.grad_x(&x0).unwrap());
    let expect = prox_data_fidelity(&xb, &z, &mask, t).unwrap();
    assert!(max_diff(&x1, &expect) < 1e-14);
}

#[test]
fn zero_steps_rejected() {
    let (_, z, mask) = problem(16, 7);
    assert!(reconstruct(&z, &mask, &HalfSquaredNorm, 1.0, 0).is_err());
    assert!(trajectory(&z, &mask, &HalfSquaredNorm, 1.0, 0).is_err());
    assert!(reconstruct(&z, &mask, &HalfSquaredNorm, f64::NAN, 3).is_err());
}

#[test]
fn trajectory_ends_at_reconstruction() {
    let (_, z, mask) = problem(16, 8);
    let params = tiny_params(2);
    let xs = trajectory(&z, &mask, &params, params.scale(), 4).unwrap();
    assert_eq!(xs.len(), 5);
    assert_eq!(xs[4], reconstruct_tdv(&z, &mask, &params, 4).unwrap());
}

#[test]
fn reconstruction_is_deterministic() {
    let (_, z, mask) = problem(16, 9);
    let params = tiny_params(3);
    assert_eq!(
        reconstruct_tdv(&z, &mask, &params, 3).unwrap(),
        reconstruct_tdv(&z, &mask, &params, 3).unwrap()
    );
    let dist = WeightDistribution::from_mean(params, 0.05, 1.0).unwrap();
    let a = posterior_sample(&z, &mask, &dist, 3, 4, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let b = posterior_sample(&z, &mask, &dist, 3, 4, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert_eq!(a.mean_rss, b.mean_rss);
    assert_eq!(a.std_rss, b.std_rss);
    assert_eq!(a.kspace, b.kspace);
}

#[test]
fn single_sample_has_zero_spread() {
    let (_, z, mask) = problem(16, 10);
    let dist = WeightDistribution::from_mean(tiny_params(4), 0.05, 1.0).unwrap();
    let s = posterior_sample(&z, &mask, &dist, 2, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(s.len(), 1);
    assert!(s.std_rss.data().iter().all(|&v| v == 0.0));
    assert!(s.std_complex.data().iter().all(|&v| v == 0.0));
    assert!(s.kspace.std.data().iter().all(|&v| v == 0.0));
    assert!(posterior_sample(&z, &mask, &dist, 2, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
}

#[test]
fn degenerate_distribution_has_negligible_spread() {
    let (_, z, mask) = problem(16, 12);
    let dist = WeightDistribution::from_mean(tiny_params(5), 1e-14, 1.0).unwrap();
    let s = posterior_sample(&z, &mask, &dist, 3, 6, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let worst = s.std_rss.data().iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-8, "std {worst}");
}

#[test]
fn statistics_ignore_sample_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut fields: Vec<_> = (0..7).map(|_| random_field(8, 8, &mut rng)).collect();
    let a = ReconStats::from_fields(fields.clone()).unwrap();
    fields.shuffle(&mut rng);
    let b = ReconStats::from_fields(fields).unwrap();
    let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(u, v)| (u - v).abs() < 1e-12);
    assert!(close(a.mean_rss.data(), b.mean_rss.data()));
    assert!(close(a.std_rss.data(), b.std_rss.data()));
    assert!(close(a.std_complex.data(), b.std_complex.data()));
    assert!(close(a.kspace.std.data(), b.kspace.std.data()));
}

#[test]
fn std_bounded_by_pairwise_deviation() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let fields: Vec<_> = (0..5).map(|_| random_field(6, 6, &mut rng)).collect();
    let s = ReconStats::from_fields(fields).unwrap();
    for p in 0..36 {
        let vals: Vec<f64> = s.samples.iter().map(|im| im.data()[p]).collect();
        let spread = vals.iter().flat_map(|a| vals.iter().map(move |b| (a - b).abs())).fold(0.0, f64::max);
        assert!(s.std_rss.data()[p] <= spread + 1e-15);
    }
}

#[test]
fn one_pixel_sanity() {
    let f = |v: f64| ComplexField::from_vec(1, 1, 1, Domain::Image, vec![Complex64::new(v, 0.0)]).unwrap();
    let s = ReconStats::from_fields(vec![f(2.0), f(4.0)]).unwrap();
    assert!((s.mean_rss.data()[0] - 3.0).abs() < 1e-15);
    assert!((s.std_rss.data()[0] - 1.0).abs() < 1e-15);
    assert!((s.kspace.std.data()[0] - 1.0).abs() < 1e-15);
    let (lm, ls) = s.kspace.log_scale(1e-6);
    assert!((lm.data()[0] - (3.0f64 + 1e-6).ln()).abs() < 1e-12);
    assert!((ls.data()[0] - (1.0f64 + 1e-6).ln()).abs() < 1e-12);
}

#[test]
fn mismatched_fields_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    assert!(ReconStats::from_fields(vec![]).is_err());
    assert!(ReconStats::from_fields(vec![random_field(4, 4, &mut rng), random_field(4, 8, &mut rng)]).is_err());
}
