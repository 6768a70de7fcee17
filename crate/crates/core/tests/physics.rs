use nalgebra::DVector;
use pfsi_core::discretization::{build, spmv, DiscreteOperators};
use pfsi_core::physics::{
    g2_window_integral, validate_assumptions, CheckStatus, CoefficientProfile, ForcingProfile,
    NonlinearForce, SampleSpec,
};
use pfsi_core::plate_basis::{solve_plate_eigen, PlateBasis};
use proptest::prelude::*;

fn setup() -> (DiscreteOperators, PlateBasis) {
    let ops = build(16, 4).unwrap();
    let plate = solve_plate_eigen(&ops, 15).unwrap();
    (ops, plate)
}

#[test]
fn constant_baseline_passes_with_declared_constants() {
    let (ops, plate) = setup();
    let report = validate_assumptions(
        &ops,
        &plate,
        &CoefficientProfile::constant(1.0, 1.0),
        &ForcingProfile::zero(),
        &NonlinearForce::zero(),
        &SampleSpec::default(),
    )
    .unwrap();
    assert!(report.all_passed(), "{report:?}");
    assert_eq!(report.constants.l_declared, 2.0);
    assert_eq!(report.constants.l_measured, 2.0);
    assert_eq!(report.constants.c_fg_measured, 0.0);
    assert!(matches!(
        report.check("A4").unwrap().status,
        CheckStatus::NotApplicable { .. }
    ));
}

#[test]
fn logistic_berger_periodic_pass() {
    let (ops, plate) = setup();
    let report = validate_assumptions(
        &ops,
        &plate,
        &CoefficientProfile::logistic(1.0, 1.0, 0.1, 0.0),
        &ForcingProfile::periodic(0.5, 0.5, 1.0),
        &NonlinearForce::berger(1.0, 2.0),
        &SampleSpec::default(),
    )
    .unwrap();
    for c in &report.checks {
        assert_eq!(c.status, CheckStatus::Pass, "{}: {:?}", c.name, c.status);
    }
    assert!(report.constants.lipschitz_c_r.is_finite());
}

#[test]
fn cubic_family_passes() {
    let (ops, plate) = setup();
    let report = validate_assumptions(
        &ops,
        &plate,
        &CoefficientProfile::logistic(2.0, 0.5, 0.3, 5.0),
        &ForcingProfile::new(pfsi_core::physics::ForcingFamily::Constant, 0.2, 0.1),
        &NonlinearForce::cubic(3.0),
        &SampleSpec {
            radius: 5.0,
            ..SampleSpec::default()
        },
    )
    .unwrap();
    assert!(report.all_passed(), "{report:?}");
}

#[test]
fn exponential_forcing_fails_g2() {
    let (ops, plate) = setup();
    let report = validate_assumptions(
        &ops,
        &plate,
        &CoefficientProfile::logistic(1.0, 1.0, 0.1, 0.0),
        &ForcingProfile::exponential(1.0, 1.0, 0.1),
        &NonlinearForce::zero(),
        &SampleSpec::default(),
    )
    .unwrap();
    let g2 = report.check("G2").unwrap();
    assert!(matches!(g2.status, CheckStatus::Fail { .. }));
    assert!(report.checks.iter().filter(|c| c.name != "G2").all(|c| c.status.passed()));
}

#[test]
fn logistic_monotone_on_fine_grid() {
    let p = CoefficientProfile::logistic(1.0, 1.0, 0.1, 0.0);
    let spec = SampleSpec::default();
    let grid = spec.t_grid();
    assert_eq!(grid.len(), 1000);
    for w in grid.windows(2) {
        let (a, b) = (p.eval(w[0]), p.eval(w[1]));
        assert!(b.mu <= a.mu && b.rho <= a.rho);
        assert!(a.dmu <= 0.0 && a.drho <= 0.0);
    }
}

#[test]
fn window_integral_of_exponential_grows_backwards() {
    let f = ForcingProfile::exponential(1.0, 0.0, 0.1);
    let early = g2_window_integral(&f, -100.0, 0.0);
    let late = g2_window_integral(&f, 0.0, 0.0);
    // ratio e^{2 kappa 100}
    assert!((early / late - (20.0f64).exp()).abs() < 1e-6 * (20.0f64).exp());
}

#[test]
fn cubic_potential_by_quadrature() {
    let (ops, plate) = setup();
    let g1 = &plate.modes[0].g;
    let a = 0.7;
    let (_, pi) = NonlinearForce::cubic(1.0).eval(&ops, &(a * g1));
    let quad: f64 = g1.iter().map(|x| ops.grid.hx * x.powi(4)).sum();
    assert!((pi - a.powi(4) / 4.0 * quad).abs() < 1e-13 * pi);
}

#[test]
fn berger_work_is_quartic_in_amplitude() {
    let (ops, plate) = setup();
    let g1 = &plate.modes[0].g;
    let gx2 = ops.beam_inner(g1, &spmv(&ops.b2, g1));
    // ‖g_x‖² by direct differences with zero ghosts at the clamped ends
    let h = ops.grid.hx;
    let n = g1.len();
    let mut direct = 0.0;
    for k in 0..n - 1 {
        direct += h * ((g1[k + 1] - g1[k]) / h).powi(2);
    }
    direct += 2.0 * h * ((g1[0] / (0.5 * h)).powi(2) + (g1[n - 1] / (0.5 * h)).powi(2)) / 4.0;
    assert!((gx2 - direct).abs() < 1e-10 * direct);
    let a = 1.3;
    let force = NonlinearForce::berger(1.0, 0.0);
    let (f, pi) = force.eval(&ops, &(a * g1));
    let work = ops.beam_inner(&f, &(a * g1));
    assert!((work - a.powi(4) * gx2 * gx2).abs() < 1e-10 * work);
    assert!(work >= pi);
    assert!((pi - 0.25 * a.powi(4) * gx2 * gx2).abs() < 1e-10 * pi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn force_is_gradient_of_potential(
        coeffs in proptest::collection::vec(-1.0f64..1.0, 15),
        dir in proptest::collection::vec(-1.0f64..1.0, 15),
        family in 0usize..3,
    ) {
        let (ops, plate) = setup();
        let u = plate.reconstruct(&DVector::from_vec(coeffs));
        let h = plate.reconstruct(&DVector::from_vec(dir));
        let force = match family {
            0 => NonlinearForce::cubic(2.0),
            1 => NonlinearForce::berger(1.0, 0.0),
            _ => NonlinearForce::berger(0.5, 3.0),
        };
        let eps = 1e-4;
        let fd = (force.eval(&ops, &(&u + eps * &h)).1 - force.eval(&ops, &(&u - eps * &h)).1) / (2.0 * eps);
        let (fu, _) = force.eval(&ops, &u);
        let exact = ops.beam_inner(&fu, &h);
        let scale = exact.abs().max(ops.beam_norm(&fu) * ops.beam_norm(&h)).max(1e-12);
        prop_assert!((fd - exact).abs() <= 1e-5 * scale);
    }

    #[test]
    fn berger_without_prestress_dominates_potential(coeffs in proptest::collection::vec(-3.0f64..3.0, 15)) {
        let (ops, plate) = setup();
        let u = plate.reconstruct(&DVector::from_vec(coeffs));
        let (f, pi) = NonlinearForce::berger(2.0, 0.0).eval(&ops, &u);
        prop_assert!(ops.beam_inner(&f, &u) >= pi - 1e-12 * pi.abs());
    }
}
