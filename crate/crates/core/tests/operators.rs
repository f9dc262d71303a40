use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use utdv_core::kspace::{apply_forward, unitary_dft, zero_fill_adjoint, Direction, SamplingMask};
use utdv_core::{ComplexField, Domain};

fn random_field(w: usize, h: usize, q: usize, domain: Domain, rng: &mut ChaCha8Rng) -> ComplexField {
    let data = (0..w * h * q)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ComplexField::from_vec(w, h, q, domain, data).unwrap()
}

/// Dense centered unitary DFT on one `h × w` plane, row-major.
fn dense_dft(h: usize, w: usize) -> DMatrix<Complex64> {
    let shift = |k: usize, n: usize| (k + n - n / 2) % n;
    let one = |n: usize| {
        DMatrix::from_fn(n, n, |k, j| {
            // Output row k holds frequency shift(k); the input is not shifted.
            let kk = shift(k, n) as f64;
            let jj = j as f64;
            Complex64::from_polar(1.0 / (n as f64).sqrt(), -std::f64::consts::TAU * kk * jj / n as f64)
        })
    };
    one(h).kronecker(&one(w))
}

fn plane_vec(f: &ComplexField, coil: usize) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_vec(f.coil_plane(coil))
}

#[test]
fn dft_matches_dense_matrix_and_is_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for (w, h) in [(1, 1), (2, 3), (4, 4), (5, 8), (8, 8), (7, 6)] {
        let a = dense_dft(h, w);
        let eye = DMatrix::<Complex64>::identity(h * w, h * w);
        let gram = a.adjoint() * &a;
        assert!((gram - eye).camax() < 1e-10, "{w}x{h}");
        let x = random_field(w, h, 2, Domain::Image, &mut rng);
        let k = unitary_dft(&x, Direction::Forward).unwrap();
        for q in 0..2 {
            let dense = &a * plane_vec(&x, q);
            let diff = (dense - plane_vec(&k, q)).camax();
            assert!(diff < 1e-10, "{w}x{h} coil {q}: {diff}");
        }
        let back = unitary_dft(&k, Direction::Inverse).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-10);
        assert!((k.norm() - x.norm()).abs() < 1e-10 * x.norm().max(1.0));
    }
}

#[test]
fn forward_operator_adjoint_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for _ in 0..20 {
        let (w, h, q) = (rng.random_range(1..=8), rng.random_range(2..=8), rng.random_range(1..=2));
        let mut acquired = vec![false; h];
        for i in rand::seq::index::sample(&mut rng, h, h / 2) {
            acquired[i] = true;
        }
        let mask = SamplingMask::from_parts(2, 0, acquired).unwrap();
        let x = random_field(w, h, q, Domain::Image, &mut rng);
        let y = random_field(w, h, q, Domain::Kspace, &mut rng);
        let ax = apply_forward(&x, &mask, 0.0, &mut rng).unwrap();
        let aty = zero_fill_adjoint(&y, &mask).unwrap();
        // Re⟨A x, y⟩ = Re⟨x, A* y⟩; Im parts follow from the complex-linear case.
        let lhs = ax.dot(&y);
        let rhs = x.dot(&aty);
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        let iy = y.map(|c| c * Complex64::i());
        assert!((ax.dot(&iy) - x.dot(&zero_fill_adjoint(&iy, &mask).unwrap())).abs() < 1e-8);
    }
}

#[test]
fn forward_operator_matches_dense_masked_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (w, h) = (4, 8);
    let acquired = vec![true, false, false, true, true, false, true, false];
    let mask = SamplingMask::from_parts(2, 0, acquired.clone()).unwrap();
    let a = dense_dft(h, w);
    let m = DMatrix::from_fn(h * w, h * w, |i, j| {
        if i == j && acquired[i / w] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let op = &m * &a;
    let x = random_field(w, h, 2, Domain::Image, &mut rng);
    let z = apply_forward(&x, &mask, 0.0, &mut rng).unwrap();
    for q in 0..2 {
        assert!((&op * plane_vec(&x, q) - plane_vec(&z, q)).camax() < 1e-10);
    }
    let x0 = zero_fill_adjoint(&z, &mask).unwrap();
    for q in 0..2 {
        assert!((op.adjoint() * plane_vec(&z, q) - plane_vec(&x0, q)).camax() < 1e-10);
    }
}
