use nalgebra::{DMatrix, DVector, SymmetricEigen};
use pfsi_core::discretization::{build, to_dense};
use pfsi_core::plate_basis::{fractional_norm, project_plate, solve_plate_eigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nonzero eigenvalues of P B4 P with the constant mode dropped.
fn projected_oracle(nb: usize) -> Vec<f64> {
    let ops = build(nb, 4).unwrap();
    let b4 = to_dense(&ops.b4);
    let p = DMatrix::identity(nb, nb) - DMatrix::from_element(nb, nb, 1.0 / nb as f64);
    let pbp = &p * b4 * &p;
    let pbp = 0.5 * (&pbp + pbp.transpose());
    let mut vals: Vec<f64> = SymmetricEigen::new(pbp).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    assert!(vals[0].abs() < 1e-6 * vals[nb - 1]);
    vals.remove(0);
    vals
}

#[test]
fn six_modes_on_64_nodes_match_projected_oracle() {
    let ops = build(64, 4).unwrap();
    let basis = solve_plate_eigen(&ops, 6).unwrap();
    let oracle = projected_oracle(64);
    for (k, m) in basis.modes.iter().enumerate() {
        assert!((m.kappa - oracle[k]).abs() <= 1e-10 * oracle[k]);
    }
}

#[test]
fn twelve_node_spectrum_matches_oracle() {
    let ops = build(12, 12).unwrap();
    let basis = solve_plate_eigen(&ops, 11).unwrap();
    let oracle = projected_oracle(12);
    for (k, m) in basis.modes.iter().enumerate() {
        assert!((m.kappa - oracle[k]).abs() <= 1e-9 * oracle[k]);
    }
}

#[test]
fn modes_are_orthonormal_zero_mean_with_rayleigh_quotients() {
    let ops = build(24, 4).unwrap();
    let basis = solve_plate_eigen(&ops, 10).unwrap();
    let b4 = to_dense(&ops.b4);
    for (i, mi) in basis.modes.iter().enumerate() {
        assert!(ops.beam_mean(&mi.g).abs() <= 1e-12);
        let rayleigh = ops.beam_inner(&mi.g, &(&b4 * &mi.g));
        assert!((rayleigh - mi.kappa).abs() <= 1e-9 * mi.kappa);
        for (k, mk) in basis.modes.iter().enumerate() {
            let want = if i == k { 1.0 } else { 0.0 };
            assert!((ops.beam_inner(&mi.g, &mk.g) - want).abs() <= 1e-8);
        }
    }
    let kap = basis.kappas();
    assert!(kap[0] > 0.0);
    for k in 1..kap.len() {
        assert!(kap[k] >= kap[k - 1]);
    }
}

#[test]
fn projector_is_idempotent_and_mb_symmetric() {
    let ops = build(10, 4).unwrap();
    let basis = solve_plate_eigen(&ops, 3).unwrap();
    let p = &basis.projector;
    assert!((p * p - p).amax() < 1e-14);
    let mb = DMatrix::from_diagonal(&ops.mb);
    assert!((&mb * p - (&mb * p).transpose()).amax() < 1e-14);
    assert!((p * DVector::from_element(10, 1.0)).amax() < 1e-14);
}

#[test]
fn projection_basics() {
    let ops = build(16, 4).unwrap();
    let basis = solve_plate_eigen(&ops, 8).unwrap();
    let beta = project_plate(&ops, &basis, &basis.modes[2].g).unwrap();
    for k in 0..8 {
        assert!((beta[k] - if k == 2 { 1.0 } else { 0.0 }).abs() < 1e-12);
    }
    let beta = project_plate(&ops, &basis, &DVector::from_element(16, 4.2)).unwrap();
    assert!(beta.amax() < 1e-12);
}

#[test]
fn bessel_and_energy_monotone_in_mode_count() {
    let ops = build(20, 4).unwrap();
    let full = solve_plate_eigen(&ops, 19).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = ops.project_zero_mean(&DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0)));
    let beta = project_plate(&ops, &full, &u).unwrap();
    let mut prev_err = f64::INFINITY;
    let mut prev_energy = 0.0;
    for n in 1..=19 {
        let sub = pfsi_core::plate_basis::PlateBasis {
            modes: full.modes[..n].to_vec(),
            projector: full.projector.clone(),
        };
        let b = beta.rows(0, n).into_owned();
        let err = ops.beam_norm(&(&u - sub.reconstruct(&b)));
        assert!(err <= prev_err + 1e-14);
        prev_err = err;
        let energy = fractional_norm(&sub, &b, 2.0).unwrap();
        assert!(energy >= prev_energy);
        prev_energy = energy;
    }
    assert!(prev_err < 1e-12);
}

proptest! {
    #[test]
    fn fractional_norm_nondecreasing_in_order(coeffs in proptest::collection::vec(-5.0f64..5.0, 6)) {
        let ops = build(16, 4).unwrap();
        let basis = solve_plate_eigen(&ops, 6).unwrap();
        let beta = DVector::from_vec(coeffs);
        let mut prev = 0.0;
        for s in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let v = fractional_norm(&basis, &beta, s).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }
}
