use nalgebra::DVector;
use pfsi_core::diagnostics::{
    continuous_dependence, difference_audit, difference_sweep, energy, energy_balance_residual,
    ht_norm, lyapunov, lyapunov_value, sandwich_constants,
};
use pfsi_core::galerkin::{GalerkinState, IntegratorSettings, Model, Physics, Trajectory};
use pfsi_core::physics::{CoefficientProfile, ForcingProfile, NonlinearForce};
use pfsi_core::FsiError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn model() -> &'static Model {
    static MODEL: OnceLock<Model> = OnceLock::new();
    MODEL.get_or_init(|| Model::build(10, 10, 4, 4).unwrap())
}

fn physics(coefficients: CoefficientProfile, nonlinearity: NonlinearForce) -> Physics {
    Physics {
        coefficients,
        forcing: ForcingProfile::zero(),
        nonlinearity,
    }
}

fn random_state(t: f64, scale: f64, rng: &mut ChaCha8Rng) -> GalerkinState {
    let mut r = |k| DVector::from_fn(k, |_, _| scale * rng.random_range(-1.0..1.0));
    GalerkinState {
        t,
        alpha: r(4),
        beta: r(4),
        gamma: r(4),
    }
}

#[test]
fn ht_norm_examples() {
    let model = model();
    let p = physics(CoefficientProfile::constant(2.0, 3.0), NonlinearForce::zero());
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    assert_eq!(ht_norm(&run, &GalerkinState::zeros(0.0, 4, 4)), 0.0);
    for j in 0..4 {
        let mut s = GalerkinState::zeros(0.0, 4, 4);
        s.beta[j] = 1.0;
        let expect = model.coup.kappa[j].sqrt();
        assert!((ht_norm(&run, &s) - expect).abs() <= 1e-12 * expect);
    }
}

#[test]
fn literal_ht_norm_uses_displayed_weights() {
    let model = model();
    let p = physics(CoefficientProfile::constant(2.0, 3.0), NonlinearForce::zero());
    let mut settings = IntegratorSettings::with_dt(1e-2);
    settings.paper_literal_ht_norm = true;
    let run = model.run(&p, &settings).unwrap();
    let mut s = GalerkinState::zeros(0.0, 4, 4);
    s.beta[1] = 1.0;
    assert!((ht_norm(&run, &s) - 3f64.sqrt()).abs() < 1e-14);
    let mut s = GalerkinState::zeros(0.0, 4, 4);
    s.alpha[0] = 1.0;
    assert!((ht_norm(&run, &s) - 2f64.sqrt()).abs() < 1e-14);
}

#[test]
fn energy_of_zero_state_and_without_force() {
    let model = model();
    let p = physics(CoefficientProfile::logistic(1.0, 2.0, 0.1, 0.0), NonlinearForce::zero());
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    assert_eq!(energy(&run, &GalerkinState::zeros(0.0, 4, 4)), (0.0, 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_state(0.5, 1.0, &mut rng);
    let (e, se) = energy(&run, &s);
    assert_eq!(e, se);
}

#[test]
fn berger_potential_by_quadrature() {
    let model = model();
    let (gamma, q) = (1.5, 2.0);
    let p = physics(CoefficientProfile::constant(1.0, 1.0), NonlinearForce::berger(gamma, q));
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    let a = 0.8;
    let mut s = GalerkinState::zeros(0.0, 4, 4);
    s.beta[0] = a;
    let (e, se) = energy(&run, &s);

    // ‖(g₁)_x‖² from one-sided differences, clamped ends as zero ghosts at half a cell
    let ops = &model.ops;
    let g = &model.plate.modes[0].g;
    let h = ops.grid.hx;
    let n = g.len();
    let mut gx2: f64 = (0..n - 1).map(|k| h * ((g[k + 1] - g[k]) / h).powi(2)).sum();
    gx2 += 0.5 * h * ((g[0] / (0.5 * h)).powi(2) + (g[n - 1] / (0.5 * h)).powi(2));
    let expect = gamma / 4.0 * a.powi(4) * gx2 * gx2 - q / 2.0 * a * a * gx2;
    assert!((se - e - expect).abs() <= 1e-10 * expect.abs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ht_norm_is_twice_energy(seed in 0u64..10_000, t in -5.0f64..5.0, logistic in any::<bool>()) {
        let model = model();
        let coefficients = if logistic {
            CoefficientProfile::logistic(1.3, 0.7, 0.2, 1.0)
        } else {
            CoefficientProfile::constant(1.3, 0.7)
        };
        let p = physics(coefficients, NonlinearForce::zero());
        let settings = IntegratorSettings::with_dt(1e-2);
        let run = model.run(&p, &settings).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(t, 2.0, &mut rng);
        let (e, _) = energy(&run, &s);
        let n = ht_norm(&run, &s);
        prop_assert!((n - (2.0 * e).sqrt()).abs() <= 1e-12 * n.max(1e-300));
    }

    #[test]
    fn delta_zero_gives_total_energy(seed in 0u64..10_000) {
        let model = model();
        let p = physics(CoefficientProfile::logistic(1.0, 1.0, 0.1, 0.0), NonlinearForce::berger(1.0, 2.0));
        let settings = IntegratorSettings::with_dt(1e-2);
        let run = model.run(&p, &settings).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(0.0, 1.0, &mut rng);
        prop_assert_eq!(lyapunov_value(&run, &s, 0.0), energy(&run, &s).1);
    }
}

fn decay_start() -> GalerkinState {
    let mut s = GalerkinState::zeros(0.0, 4, 4);
    s.alpha[0] = 1.0;
    s.beta[0] = 0.05;
    s.gamma[1] = 0.2;
    s
}

#[test]
fn zero_trajectory_has_zero_residual() {
    let model = model();
    let p = physics(CoefficientProfile::constant(1.0, 1.0), NonlinearForce::zero());
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    let traj = run.evolve(&GalerkinState::zeros(0.0, 4, 4), 0.5).unwrap();
    let report = energy_balance_residual(&run, &traj).unwrap();
    assert_eq!(report.residual, 0.0);

    let short = Trajectory {
        states: traj.states[..2].to_vec(),
        halvings: 0,
    };
    assert!(matches!(
        energy_balance_residual(&run, &short),
        Err(FsiError::InvalidParameter { .. })
    ));
}

#[test]
fn residual_contracts_under_halving() {
    let model = model();
    let p = physics(CoefficientProfile::logistic(1.0, 1.0, 0.5, 0.0), NonlinearForce::berger(1.0, 1.0));
    let mut residuals = Vec::new();
    for dt in [4e-3, 2e-3] {
        let settings = IntegratorSettings::with_dt(dt);
        let run = model.run(&p, &settings).unwrap();
        let traj = run.evolve(&decay_start(), 1.0).unwrap();
        residuals.push(energy_balance_residual(&run, &traj).unwrap().residual);
    }
    assert!(residuals[0] / residuals[1] >= 3.5, "{residuals:?}");
}

#[test]
fn free_decay_energy_never_increases() {
    let model = model();
    let p = physics(CoefficientProfile::constant(1.0, 1.0), NonlinearForce::zero());
    let settings = IntegratorSettings::with_dt(5e-3);
    let run = model.run(&p, &settings).unwrap();
    let traj = run.evolve(&decay_start(), 2.0).unwrap();
    let report = energy_balance_residual(&run, &traj).unwrap();
    let scale = report.steps[0].e;
    for w in report.steps.windows(2) {
        assert!(w[1].e <= w[0].e + 1e-13 * scale, "t = {}", w[1].t);
        assert!(w[0].dissipation >= 0.0);
    }
}

#[test]
fn logistic_corrections_are_nonpositive() {
    let model = model();
    let p = physics(CoefficientProfile::logistic(1.0, 1.0, 0.5, 0.0), NonlinearForce::zero());
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    let mut start = decay_start();
    start.t = -2.0;
    let traj = run.evolve(&start, 2.0).unwrap();
    let report = energy_balance_residual(&run, &traj).unwrap();
    assert!(report.mu_integral < 0.0);
    assert!(report.rho_integral < 0.0);
    assert!(report.steps.iter().all(|s| s.mu_term <= 0.0 && s.rho_term <= 0.0));
}

#[test]
fn free_decay_rate_is_positive() {
    let model = model();
    let p = physics(CoefficientProfile::constant(1.0, 1.0), NonlinearForce::zero());
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    let traj = run.evolve(&decay_start(), 10.0).unwrap();
    let report = lyapunov(&run, &traj, 0.01, 0.05).unwrap();
    assert!(report.omega_hat > 0.0, "{}", report.omega_hat);
    assert!(report.sandwich_holds);
    assert!(report.non_increasing);
    // ω̂ averages over all modes, so the samplewise bound without forcing is reported rather than asserted
    assert!(report.forcing_constant >= 0.0);
}

#[test]
fn delta_sweep_flags_first_inadmissible() {
    let model = model();
    let p = physics(CoefficientProfile::constant(1.0, 1.0), NonlinearForce::berger(1.0, 2.0));
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    let traj = run.evolve(&decay_start(), 2.0).unwrap();
    let holds: Vec<bool> = [0.01, 0.1, 1.0]
        .iter()
        .map(|&d| lyapunov(&run, &traj, d, 0.05).unwrap().sandwich_holds)
        .collect();
    assert!(holds[0]);
    let first_fail = holds.iter().position(|h| !h);
    assert_eq!(first_fail, Some(2));
    assert!(sandwich_constants(&run, 1.0).1.is_none());
    assert!(lyapunov(&run, &traj, -1.0, 0.05).is_err());
}

#[test]
fn dependence_envelope_dominates() {
    let model = model();
    let p = physics(CoefficientProfile::logistic(1.0, 1.0, 0.1, 0.0), NonlinearForce::berger(1.0, 2.0));
    let settings = IntegratorSettings::with_dt(1e-2);
    let run = model.run(&p, &settings).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_state(0.0, 0.5, &mut rng);
    let mut b = a.clone();
    b.beta[2] += 1e-3;
    let ta = run.evolve(&a, 2.0).unwrap();
    let tb = run.evolve(&b, 2.0).unwrap();
    let report = continuous_dependence(&run, &ta, &tb).unwrap();
    assert!(report.k_hat.is_finite());
    assert!(report.dominated);
    let same = continuous_dependence(&run, &ta, &ta).unwrap();
    assert_eq!(same.d0, 0.0);
    assert!(same.dominated);
}

fn pairs(run: &pfsi_core::galerkin::ProcessRun, count: usize, t_end: f64) -> Vec<(Trajectory, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..count)
        .map(|_| {
            let a = random_state(0.0, 0.5, &mut rng);
            let mut b = a.clone();
            for j in 0..4 {
                b.beta[j] += 1e-2 * rng.random_range(-1.0..1.0);
                b.gamma[j] += 1e-2 * rng.random_range(-1.0..1.0);
            }
            (run.evolve(&a, t_end).unwrap(), run.evolve(&b, t_end).unwrap())
        })
        .collect()
}

#[test]
fn identical_runs_audit_to_zero() {
    let model = model();
    let p = physics(CoefficientProfile::constant(1.0, 1.0), NonlinearForce::zero());
    let settings = IntegratorSettings::with_dt(5e-2);
    let run = model.run(&p, &settings).unwrap();
    let traj = run.evolve(&decay_start(), 6.0).unwrap();
    let r = difference_audit(&run, &model.plate, &[(traj.clone(), traj.clone())], 6.0, 5.0, 0.25).unwrap();
    assert_eq!(r.lhs, vec![0.0]);
    assert_eq!(r.rhs, vec![0.0]);
    assert!(matches!(
        difference_audit(&run, &model.plate, &[(traj.clone(), traj)], 6.0, 10.0, 0.25),
        Err(FsiError::WindowNotCovered { .. })
    ));
}

#[test]
fn difference_sweep_needs_less_slack_for_longer_windows() {
    let model = model();
    let p = physics(CoefficientProfile::logistic(1.0, 1.0, 0.1, 0.0), NonlinearForce::berger(1.0, 2.0));
    let settings = IntegratorSettings::with_dt(5e-2);
    let run = model.run(&p, &settings).unwrap();
    let pairs = pairs(&run, 10, 20.0);
    let reports = difference_sweep(&run, &model.plate, &pairs, 20.0, &[5.0, 10.0, 20.0], 0.25).unwrap();
    for r in &reports {
        assert!(r.c_min.is_finite() && r.c_min > 0.0);
        let c = r.c_ref.unwrap();
        let eps = r.eps_fit.unwrap();
        for (l, rr) in r.lhs.iter().zip(&r.rhs) {
            assert!(*l <= eps + c * rr + 1e-15);
        }
    }
    for w in reports.windows(2) {
        assert!(w[1].eps_fit.unwrap() < w[0].eps_fit.unwrap());
    }
}
