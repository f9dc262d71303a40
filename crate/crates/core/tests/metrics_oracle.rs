use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use utdv_core::metrics::{nmse, psnr, ssim, ssim_grad, ssim_with_range, MetricReport, Psnr};
use utdv_core::train::loss_j;
use utdv_core::Image;

fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_vec(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

/// Direct per-window evaluation with explicit loops.
fn brute_ssim(x: &Image, y: &Image, range: f64) -> f64 {
    let (h, w, n) = (x.height(), x.width(), 7);
    let np = 49.0;
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut total = 0.0;
    let mut count = 0.0;
    for r in 0..=h - n {
        for c in 0..=w - n {
            let px: Vec<f64> = (0..n * n).map(|k| x.get(r + k / n, c + k % n)).collect();
            let py: Vec<f64> = (0..n * n).map(|k| y.get(r + k / n, c + k % n)).collect();
            let mx = px.iter().sum::<f64>() / np;
            let my = py.iter().sum::<f64>() / np;
            let vx = px.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (np - 1.0);
            let vy = py.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (np - 1.0);
            let cxy = px.iter().zip(&py).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (np - 1.0);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    total / count
}

#[test]
fn ssim_matches_window_by_window_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for (w, h) in [(7, 7), (12, 9), (20, 16)] {
        let x = random_image(w, h, &mut rng);
        let y = random_image(w, h, &mut rng);
        assert!((ssim(&x, &y).unwrap() - brute_ssim(&x, &y, y.max())).abs() < 1e-10);
        assert!((ssim_with_range(&x, &y, 2.5).unwrap() - brute_ssim(&x, &y, 2.5)).abs() < 1e-10);
        assert!((ssim(&y, &y).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ssim_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let x = random_image(11, 10, &mut rng);
    let y = random_image(11, 10, &mut rng);
    let (v, g) = ssim_grad(&x, &y).unwrap();
    assert!((v - ssim(&x, &y).unwrap()).abs() < 1e-14);
    let eps = 1e-6;
    for i in 0..x.len() {
        let bump = |d: f64| {
            let mut data = x.data().to_vec();
            data[i] += d;
            ssim(&Image::from_vec(11, 10, data).unwrap(), &y).unwrap()
        };
        let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
        assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "pixel {i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn training_loss_is_l1_plus_weighted_ssim_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(402);
    for tau in [0.0, 0.5, 1.0, 7.0] {
        let x = random_image(16, 12, &mut rng);
        let y = random_image(16, 12, &mut rng);
        let l1: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).sum();
        let expected = l1 + tau * (1.0 - ssim(&x, &y).unwrap());
        assert!((loss_j(&y, &x, tau).unwrap() - expected).abs() < 1e-10);
    }
    let y = random_image(32, 32, &mut rng);
    assert_eq!(loss_j(&y, &y, 1.0).unwrap(), 0.0);
    let shifted = Image::from_vec(32, 32, y.data().iter().map(|v| v + 0.1).collect()).unwrap();
    assert!((loss_j(&y, &shifted, 0.0).unwrap() - 0.1 * 1024.0).abs() < 1e-9);
    assert!(loss_j(&y, &random_image(16, 32, &mut rng), 1.0).is_err());
}

#[test]
fn report_is_consistent_with_single_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(403);
    let x = random_image(16, 16, &mut rng);
    let y = random_image(16, 16, &mut rng);
    let r = MetricReport::compute(&x, &y).unwrap();
    assert_eq!(r.psnr, psnr(&x, &y).unwrap());
    assert_eq!(r.nmse, nmse(&x, &y).unwrap());
    assert_eq!(r.ssim, ssim(&x, &y).unwrap());
    let same = MetricReport::compute(&y, &y).unwrap();
    assert_eq!(same.psnr, Psnr::Exact);
    assert_eq!(same.nmse, 0.0);
}
