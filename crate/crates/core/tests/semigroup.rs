use faer::Mat;
use modulon::bloch::{bloch_eigenvalues, scan_bloch, BlochOperator, ScanOptions};
use modulon::linalg::{self, CMat};
use modulon::semigroup::{
    dual_propagator_norm, growth_verdict, propagator_norm, riesz_projection, sobolev_weights, trichotomy_from,
    trichotomy_split, PropagatorProbe,
};
use modulon::wave::{solve_wave, SeedParams};
use modulon::{Error, ModelSpec, TravelingWave};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bbm_operator() -> (BlochOperator, f64, f64) {
    let model = ModelSpec::bbm(2.0).unwrap();
    let wave = solve_wave(&model, SeedParams { a: 0.05, b: 0.0 }, 32).unwrap();
    let spec = scan_bloch(&model, &wave, &ScanOptions { count: 32, ..ScanOptions::default() }).unwrap();
    (BlochOperator::new(&model, &wave, None).unwrap(), spec.k0, spec.lambda0)
}

#[test]
fn weights_follow_the_sobolev_scale() {
    let (op, _, _) = bbm_operator();
    let w = sobolev_weights(&op, 0.5, 2.0);
    for (i, wi) in w.iter().enumerate() {
        let xi = op.mode(i) as f64 + 0.5;
        assert!((wi - (1.0 + xi * xi)).abs() < 1e-12);
    }
    assert!(sobolev_weights(&op, 0.3, 0.0).iter().all(|&x| x == 1.0));
}

#[test]
fn propagator_starts_at_the_identity() {
    let (op, k0, _) = bbm_operator();
    for s in [-1.0, 0.0, 1.0] {
        assert!((propagator_norm(&op, k0, 0.0, s).unwrap() - 1.0).abs() < 1e-13);
    }
    assert!(propagator_norm(&op, k0, -1.0, 0.0).is_err());
}

#[test]
fn neutral_propagator_is_unitary_in_the_energy_norm() {
    // At u_c = 0 the generator is skew-adjoint and diagonal: every weighted
    // norm is 1.
    let model = ModelSpec::whitham(1.0).unwrap();
    let state = TravelingWave::constant_state(&model, 0.0, 0.8, 16).unwrap();
    let op = BlochOperator::new(&model, &state, None).unwrap();
    for t in [0.5, 3.0, 17.0] {
        assert!((propagator_norm(&op, 0.37, t, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn growth_rate_matches_the_spectral_bound() {
    let (op, k0, lambda0) = bbm_operator();
    let grid: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
    let probe = PropagatorProbe::measure(&op, k0, 0.0, &grid).unwrap();
    assert!(probe.is_continuous());
    let v = growth_verdict(&probe, lambda0, 0.05).unwrap();
    assert!(v.pass, "slope {} vs {}", v.slope, lambda0);
    assert!((probe.norms[4] - propagator_norm(&op, k0, 2.0, 0.0).unwrap()).abs() < 1e-10 * probe.norms[4]);
    assert!(probe.log_slope(100.0, 200.0).is_err());
    assert!(PropagatorProbe::measure(&op, k0, 0.0, &[1.0, 0.5]).is_err());

    let mut csv = Vec::new();
    probe.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), grid.len());
}

#[test]
fn dual_norm_matches_the_negative_index_norm() {
    let (op, k0, _) = bbm_operator();
    for t in [1.0, 5.0, 12.0] {
        let (dual, mismatch) = dual_propagator_norm(&op, k0, t).unwrap();
        assert!(mismatch < 1e-10);
        assert!(dual >= 1.0);
    }
}

#[test]
fn overflow_is_a_range_error() {
    let (op, k0, lambda0) = bbm_operator();
    let t = 800.0 / lambda0;
    assert!(matches!(propagator_norm(&op, k0, t, 0.0), Err(Error::Range { .. })));
}

#[test]
fn trichotomy_counts() {
    let (op, k0, _) = bbm_operator();
    let tri = trichotomy_split(&op, k0).unwrap();
    assert_eq!(tri.dim_eu, tri.dim_es);
    assert!(tri.dim_eu >= 1 && tri.dim_eu <= tri.n_minus_l);
    assert_eq!(tri.dim_eu + tri.dim_es + tri.dim_ec, op.dim());
    assert_eq!(bloch_eigenvalues(&op, k0).unwrap().len(), op.dim());

    let lop = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 2.0)];
    assert!(trichotomy_from(&lop, &[-1.0, 2.0, 3.0]).is_ok());
    assert!(matches!(trichotomy_from(&lop, &[1.0, 2.0, 3.0]), Err(Error::Structure(_))));
    assert!(trichotomy_from(&lop[..2], &[-1.0]).is_ok_and(|t| t.dim_ec == 0 && t.dim_eu == 1));
    assert!(trichotomy_from(&[Complex64::new(1.0, 0.0)], &[-1.0]).is_err());
}

#[test]
fn riesz_projection_of_a_diagonal_matrix() {
    let d = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 1.0), Complex64::new(3.0, 0.0)];
    let m: CMat = Mat::from_fn(3, 3, |i, j| if i == j { d[i] } else { Complex64::new(0.0, 0.0) });
    let p = riesz_projection(&m, Complex64::new(0.5, 0.5), 1.2, 16).unwrap();
    assert_eq!((p.enclosed, p.rank), (2, 2));
    for i in 0..3 {
        let want = if i < 2 { 1.0 } else { 0.0 };
        assert!((p.projector[(i, i)].re - want).abs() < 1e-8);
    }
    assert!(matches!(riesz_projection(&m, Complex64::new(0.0, 0.0), 3.0, 16), Err(Error::Contour(_))));
    assert!(riesz_projection(&m, Complex64::new(0.0, 0.0), 0.0, 16).is_err());
}

/// A random `J L` with `J = diag(-i xi)` and `L` Hermitian.
fn structured(seed: u64, dim: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: f64 = rng.random_range(0.0..1.0);
    let mut l = CMat::zeros(dim, dim);
    for i in 0..dim {
        l[(i, i)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        for j in 0..i {
            let z = Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            l[(i, j)] = z;
            l[(j, i)] = z.conj();
        }
    }
    Mat::from_fn(dim, dim, |i, j| Complex64::new(0.0, -(i as f64 - (dim / 2) as f64 + k)) * l[(i, j)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn riesz_rank_counts_enclosed_eigenvalues(seed in any::<u64>(), dim in 4usize..12, radius in 0.5f64..2.5) {
        let m = structured(seed, dim);
        let vals = linalg::eigenvalues(&m).unwrap();
        let center = vals[seed as usize % vals.len()];
        match riesz_projection(&m, center, radius, 64) {
            Ok(p) => {
                prop_assert!(p.idempotence_defect < 1e-8);
                prop_assert_eq!(p.rank, p.enclosed);
                // P commutes with M.
                let c = &(&p.projector * &m) - &(&m * &p.projector);
                prop_assert!(linalg::norm_fro(&c) < 1e-6 * linalg::norm_fro(&m));
            }
            Err(Error::Contour(_)) => {}
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn propagator_norm_is_submultiplicative(t1 in 0.0f64..4.0, t2 in 0.0f64..4.0) {
        let (op, k0, _) = bbm_operator();
        let a = propagator_norm(&op, k0, t1, 0.0).unwrap();
        let b = propagator_norm(&op, k0, t2, 0.0).unwrap();
        let ab = propagator_norm(&op, k0, t1 + t2, 0.0).unwrap();
        prop_assert!(ab <= a * b * (1.0 + 1e-10));
    }
}
