//! Phase-space norms, energies, the energy balance, the Lyapunov functional and
//! the difference estimate audit, all in modal coordinates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, FsiError, Result};
use crate::galerkin::{GalerkinState, ProcessRun, Trajectory};
use crate::plate_basis::{fractional_norm, PlateBasis};

/// `‖v‖²_Mv = |α|² + 2αᵀCγ + γᵀGγ`.
pub fn velocity_norm_sq(run: &ProcessRun, s: &GalerkinState) -> f64 {
    let c = run.coup;
    s.alpha.norm_squared() + 2.0 * s.alpha.dot(&(&c.c * &s.gamma)) + s.gamma.dot(&(&c.g * &s.gamma))
}

/// `‖Δu‖²` in modal form.
pub fn plate_energy_sq(run: &ProcessRun, beta: &nalgebra::DVector<f64>) -> f64 {
    run.coup.kappa.iter().zip(beta.iter()).map(|(k, b)| k * b * b).sum()
}

/// Phase-space norm at the state's own time.
///
/// Energy-consistent form `μ‖v‖² + ‖Δu‖² + ρ‖u_t‖²`; with `paper_literal_ht_norm`
/// the displayed form `μ‖v‖² + ρ‖u‖² + ‖u_t‖²` is used instead.
pub fn ht_norm(run: &ProcessRun, s: &GalerkinState) -> f64 {
    ht_norm_at(run, s, s.t)
}

pub fn ht_norm_at(run: &ProcessRun, s: &GalerkinState, t: f64) -> f64 {
    let co = run.physics.coefficients.eval(t);
    let v2 = velocity_norm_sq(run, s);
    let sq = if run.settings.paper_literal_ht_norm {
        co.mu * v2 + co.rho * s.beta.norm_squared() + s.gamma.norm_squared()
    } else {
        co.mu * v2 + plate_energy_sq(run, &s.beta) + co.rho * s.gamma.norm_squared()
    };
    sq.max(0.0).sqrt()
}

/// Gram matrix of the `H_t` norm in the stacked coordinates `(α, β, γ)`.
pub fn ht_weight_matrix(run: &ProcessRun, t: f64) -> DMatrix<f64> {
    let co = run.physics.coefficients.eval(t);
    let c = run.coup;
    let (m, n) = (c.m(), c.n());
    let mut w = DMatrix::zeros(m + 2 * n, m + 2 * n);
    let (b0, g0) = (m, m + n);
    for i in 0..m {
        w[(i, i)] = co.mu;
        for j in 0..n {
            w[(i, g0 + j)] = co.mu * c.c[(i, j)];
            w[(g0 + j, i)] = co.mu * c.c[(i, j)];
        }
    }
    for j in 0..n {
        for k in 0..n {
            w[(g0 + j, g0 + k)] = co.mu * c.g[(j, k)];
        }
    }
    if run.settings.paper_literal_ht_norm {
        for j in 0..n {
            w[(b0 + j, b0 + j)] = co.rho;
            w[(g0 + j, g0 + j)] += 1.0;
        }
    } else {
        for j in 0..n {
            w[(b0 + j, b0 + j)] = c.kappa[j];
            w[(g0 + j, g0 + j)] += co.rho;
        }
    }
    w
}

/// Componentwise difference of two states (time taken from `a`).
pub fn difference(a: &GalerkinState, b: &GalerkinState) -> GalerkinState {
    GalerkinState {
        t: a.t,
        alpha: &a.alpha - &b.alpha,
        beta: &a.beta - &b.beta,
        gamma: &a.gamma - &b.gamma,
    }
}

pub fn ht_distance(run: &ProcessRun, a: &GalerkinState, b: &GalerkinState, t: f64) -> f64 {
    ht_norm_at(run, &difference(a, b), t)
}

/// `(E, 𝓔)` with `E = ½[μ‖v‖² + ‖Δu‖² + ρ‖u_t‖²]` and `𝓔 = E + Π(u)`.
pub fn energy(run: &ProcessRun, s: &GalerkinState) -> (f64, f64) {
    let co = run.physics.coefficients.eval(s.t);
    let e = 0.5
        * (co.mu * velocity_norm_sq(run, s)
            + plate_energy_sq(run, &s.beta)
            + co.rho * s.gamma.norm_squared());
    (e, e + run.potential(&s.beta))
}

/// Per-step quantities entering the energy balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub e: f64,
    pub script_e: f64,
    /// `‖∇v‖²` (energy-consistent dissipation form).
    pub dissipation: f64,
    /// `μ'‖v‖²`.
    pub mu_term: f64,
    /// `ρ'‖u_t‖²`.
    pub rho_term: f64,
    /// `(f, v) + (g, u_t)`.
    pub work: f64,
    /// `‖f‖² + ‖g‖²`.
    pub forcing_sq: f64,
}

pub fn step_diagnostics(run: &ProcessRun, s: &GalerkinState) -> StepDiagnostics {
    let co = run.physics.coefficients.eval(s.t);
    let (e, script_e) = energy(run, s);
    let z = s.z();
    let a = run.coup.damping(false);
    StepDiagnostics {
        t: s.t,
        e,
        script_e,
        dissipation: z.dot(&(&a * &z)),
        mu_term: co.dmu * velocity_norm_sq(run, s),
        rho_term: co.drho * s.gamma.norm_squared(),
        work: run.forcing_vector(s.t).dot(&z),
        forcing_sq: run.physics.forcing.norm_sq(s.t),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub steps: Vec<StepDiagnostics>,
    /// Running residual of the balance from the first step to each step.
    pub residuals: Vec<f64>,
    /// `max_k |residual_k|`.
    pub residual: f64,
    pub dissipation_integral: f64,
    pub mu_integral: f64,
    pub rho_integral: f64,
    pub work_integral: f64,
    pub script_e_initial: f64,
}

/// Trapezoid residual of
/// `𝓔(t) − 𝓔(τ) + ∫‖∇v‖² − ½∫μ'‖v‖² − ½∫ρ'‖u_t‖² − ∫[(f,v) + (g,u_t)]`.
pub fn energy_balance_residual(run: &ProcessRun, traj: &Trajectory) -> Result<EnergyReport> {
    if traj.states.len() < 3 {
        return Err(invalid("trajectory", "need at least 3 recorded steps"));
    }
    let steps: Vec<StepDiagnostics> = traj.states.iter().map(|s| step_diagnostics(run, s)).collect();
    let mut residuals = Vec::with_capacity(steps.len());
    let (mut diss, mut mu, mut rho, mut work) = (0.0, 0.0, 0.0, 0.0);
    residuals.push(0.0);
    for w in steps.windows(2) {
        let h = 0.5 * (w[1].t - w[0].t);
        diss += h * (w[0].dissipation + w[1].dissipation);
        mu += h * (w[0].mu_term + w[1].mu_term);
        rho += h * (w[0].rho_term + w[1].rho_term);
        work += h * (w[0].work + w[1].work);
        residuals.push(w[1].script_e - steps[0].script_e + diss - 0.5 * mu - 0.5 * rho - work);
    }
    let residual = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    Ok(EnergyReport {
        script_e_initial: steps[0].script_e,
        steps,
        residuals,
        residual,
        dissipation_integral: diss,
        mu_integral: mu,
        rho_integral: rho,
        work_integral: work,
    })
}

/// Constants of `−c₁ + c₂E ≤ L ≤ c₃𝓔 + c₄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// Sandwich constants for a given `δ`, or `None` when `δ` is too large.
///
/// The cross term obeys `|μ(v, Nu) + ρ(u_t, u)| ≤ θ/δ · E` with
/// `θ = δ max(1, (sup μ λ_max(G) + sup ρ)/κ₁)`, and `Π ≥ −C`.
pub fn sandwich_constants(run: &ProcessRun, delta: f64) -> (f64, Option<SandwichConstants>) {
    let (mu_sup, rho_sup) = run.physics.coefficients.sup();
    let lam_g = if run.coup.n() == 0 {
        0.0
    } else {
        nalgebra::SymmetricEigen::new(run.coup.g.clone()).eigenvalues.max().max(0.0)
    };
    let kappa1 = run.coup.kappa.min();
    let theta = delta * f64::max(1.0, (mu_sup * lam_g + rho_sup) / kappa1);
    let pi_floor = run.physics.nonlinearity.declared_constants().c;
    let c = SandwichConstants {
        c1: pi_floor,
        c2: 1.0 - theta,
        c3: 1.0 + theta,
        c4: theta * pi_floor,
    };
    (theta, (c.c2 > 0.0).then_some(c))
}

/// `L = 𝓔 + δ(μ(v, Nu) + ρ(u_t, u))` with `(v, Nu) = αᵀCβ + γᵀGβ`.
pub fn lyapunov_value(run: &ProcessRun, s: &GalerkinState, delta: f64) -> f64 {
    let (_, script_e) = energy(run, s);
    if delta == 0.0 {
        return script_e;
    }
    let co = run.physics.coefficients.eval(s.t);
    let c = run.coup;
    let v_nu = s.alpha.dot(&(&c.c * &s.beta)) + s.gamma.dot(&(&c.g * &s.beta));
    script_e + delta * (co.mu * v_nu + co.rho * s.gamma.dot(&s.beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub delta: f64,
    pub theta: f64,
    pub values: Vec<f64>,
    /// `None` when `δ` is inadmissible.
    pub sandwich: Option<SandwichConstants>,
    /// Sandwich inequalities checked at every recorded step.
    pub sandwich_holds: bool,
    pub omega_hat: f64,
    /// First index of the decay-fit window.
    pub fit_start: usize,
    /// Smallest `C` with `dL/dt + ω̂L ≤ C(‖f‖² + ‖g‖²)` at every step (∞ if forcing vanishes
    /// where the left side is positive beyond rounding).
    pub forcing_constant: f64,
    /// `L` non-increasing at every step after the transient.
    pub non_increasing: bool,
    pub transient_steps: usize,
}

/// Evaluate `L` along a trajectory and fit its decay rate.
pub fn lyapunov(
    run: &ProcessRun,
    traj: &Trajectory,
    delta: f64,
    transient_fraction: f64,
) -> Result<LyapunovReport> {
    if !(delta >= 0.0) {
        return Err(invalid("delta", "must be nonnegative"));
    }
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(invalid("transient_fraction", "must lie in [0, 1)"));
    }
    if traj.states.len() < 2 {
        return Err(invalid("trajectory", "need at least 2 recorded steps"));
    }
    let diags: Vec<StepDiagnostics> = traj.states.iter().map(|s| step_diagnostics(run, s)).collect();
    let values: Vec<f64> = traj.states.iter().map(|s| lyapunov_value(run, s, delta)).collect();
    let (theta, sandwich) = sandwich_constants(run, delta);
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let slack = 1e-12 * scale.max(1e-300);
    let sandwich_holds = sandwich.is_some_and(|c| {
        diags.iter().zip(&values).all(|(d, &l)| {
            -c.c1 + c.c2 * d.e <= l + slack && l <= c.c3 * d.script_e + c.c4 + slack
        })
    });

    // decay window: forcing work below 1% of dissipation from here on
    let fit_start = diags
        .iter()
        .position(|d| d.work.abs() <= 0.01 * d.dissipation)
        .unwrap_or(0);
    let c1 = sandwich.map_or(0.0, |c| c.c1);
    let pts: Vec<(f64, f64)> = traj.states[fit_start..]
        .iter()
        .zip(&values[fit_start..])
        .filter(|(_, &l)| l + c1 > 1e-300)
        .map(|(s, &l)| (s.t, (l + c1).ln()))
        .collect();
    let omega_hat = -least_squares_slope(&pts).unwrap_or(0.0);

    let mut forcing_constant: f64 = 0.0;
    for k in 0..values.len() - 1 {
        let h = traj.states[k + 1].t - traj.states[k].t;
        let dl = (values[k + 1] - values[k]) / h;
        let lhs = dl + omega_hat * 0.5 * (values[k] + values[k + 1]);
        let fsq = 0.5 * (diags[k].forcing_sq + diags[k + 1].forcing_sq);
        if fsq > 0.0 {
            forcing_constant = forcing_constant.max(lhs / fsq);
        } else if lhs > 1e-9 * scale.max(1e-300) {
            forcing_constant = f64::INFINITY;
        }
    }

    let transient_steps = ((values.len() as f64) * transient_fraction).ceil() as usize;
    let non_increasing = values[transient_steps.min(values.len() - 1)..]
        .windows(2)
        .all(|w| w[1] <= w[0] + slack);

    Ok(LyapunovReport {
        delta,
        theta,
        values,
        sandwich,
        sandwich_holds,
        omega_hat,
        fit_start,
        forcing_constant,
        non_increasing,
        transient_steps,
    })
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Result of the continuous-dependence fit between two runs on the same time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub d0: f64,
    pub k_hat: f64,
    pub distances: Vec<f64>,
    /// `d_k ≤ d₀ e^{K̂(t_k − τ)}` at every step.
    pub dominated: bool,
}

pub fn continuous_dependence(
    run: &ProcessRun,
    a: &Trajectory,
    b: &Trajectory,
) -> Result<DependenceReport> {
    if a.states.len() != b.states.len() {
        return Err(FsiError::SizeMismatch {
            what: "trajectory length",
            expected: a.states.len(),
            got: b.states.len(),
        });
    }
    let tau = a.states[0].t;
    let distances: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| ht_distance(run, x, y, x.t))
        .collect();
    let d0 = distances[0];
    if d0 == 0.0 {
        let dominated = distances.iter().all(|&d| d == 0.0);
        return Ok(DependenceReport {
            d0,
            k_hat: 0.0,
            distances,
            dominated,
        });
    }
    let mut k_hat: f64 = 0.0;
    for (s, &d) in a.states.iter().zip(&distances).skip(1) {
        let dt = s.t - tau;
        if d > 0.0 && dt > 0.0 {
            k_hat = k_hat.max((d / d0).ln() / dt);
        }
    }
    let dominated = a
        .states
        .iter()
        .zip(&distances)
        .all(|(s, &d)| d <= d0 * (k_hat * (s.t - tau)).exp() * (1.0 + 1e-12));
    Ok(DependenceReport {
        d0,
        k_hat,
        distances,
        dominated,
    })
}

/// Both sides of the difference estimate for a batch of run pairs at one `T₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceReport {
    pub t: f64,
    pub t0: f64,
    pub eps_frac: f64,
    /// `‖W¹(t) − W²(t)‖_{H_t}` per pair.
    pub lhs: Vec<f64>,
    /// `max_{[t−T₀, t]} ‖u¹ − u²‖²_{2−ε}` per pair.
    pub rhs: Vec<f64>,
    /// Smallest `C` with `LHS ≤ C·RHS` across the batch.
    pub c_min: f64,
    /// Additive constant needed with the sweep's common `C`; set by [`difference_sweep`].
    pub eps_fit: Option<f64>,
    pub c_ref: Option<f64>,
}

fn state_at(traj: &Trajectory, t: f64) -> Option<&GalerkinState> {
    let tol = 1e-9 * t.abs().max(1.0);
    traj.states.iter().find(|s| (s.t - t).abs() <= tol)
}

pub fn difference_audit(
    run: &ProcessRun,
    plate: &PlateBasis,
    pairs: &[(Trajectory, Trajectory)],
    t: f64,
    t0: f64,
    eps_frac: f64,
) -> Result<DifferenceReport> {
    if !(eps_frac > 0.0 && eps_frac < 2.0) {
        return Err(invalid("eps_frac", "must lie in (0, 2)"));
    }
    if !(t0 > 0.0) {
        return Err(invalid("t0", "must be positive"));
    }
    if pairs.is_empty() {
        return Err(FsiError::EmptySet);
    }
    let start = t - t0;
    let tol = 1e-9 * t.abs().max(1.0);
    let mut lhs = Vec::with_capacity(pairs.len());
    let mut rhs = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        for r in [a, b] {
            let first = r.states[0].t;
            let last = r.last().t;
            if first > start + tol || last < t - tol {
                return Err(FsiError::WindowNotCovered { start, end: t });
            }
        }
        let (wa, wb) = match (state_at(a, t), state_at(b, t)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(FsiError::WindowNotCovered { start, end: t }),
        };
        lhs.push(ht_distance(run, wa, wb, t));
        let mut sup: f64 = 0.0;
        for (sa, sb) in a.states.iter().zip(&b.states) {
            if sa.t >= start - tol && sa.t <= t + tol {
                if (sa.t - sb.t).abs() > tol {
                    return Err(invalid("pairs", "runs must share the time grid"));
                }
                let d = fractional_norm(plate, &(&sa.beta - &sb.beta), 2.0 - eps_frac)?;
                sup = sup.max(d * d);
            }
        }
        rhs.push(sup);
    }
    let c_min = lhs
        .iter()
        .zip(&rhs)
        .map(|(&l, &r)| if l == 0.0 { 0.0 } else if r == 0.0 { f64::INFINITY } else { l / r })
        .fold(0.0, f64::max);
    Ok(DifferenceReport {
        t,
        t0,
        eps_frac,
        lhs,
        rhs,
        c_min,
        eps_fit: None,
        c_ref: None,
    })
}

/// Audit each `T₀` and fit the additive constant with one common `C = ½ min C_min`.
pub fn difference_sweep(
    run: &ProcessRun,
    plate: &PlateBasis,
    pairs: &[(Trajectory, Trajectory)],
    t: f64,
    t0s: &[f64],
    eps_frac: f64,
) -> Result<Vec<DifferenceReport>> {
    let mut reports: Vec<DifferenceReport> = t0s
        .iter()
        .map(|&t0| difference_audit(run, plate, pairs, t, t0, eps_frac))
        .collect::<Result<_>>()?;
    fit_common_constant(&mut reports);
    Ok(reports)
}

/// Set `c_ref = ½ min C_min` on every report and the additive slack each one then needs.
/// Reports may come from different batches, e.g. pairs started at `t − T₀` for each window.
pub fn fit_common_constant(reports: &mut [DifferenceReport]) {
    let c_ref = 0.5 * reports.iter().map(|r| r.c_min).fold(f64::INFINITY, f64::min);
    for r in reports.iter_mut() {
        let eps = r
            .lhs
            .iter()
            .zip(&r.rhs)
            .map(|(&l, &rr)| (l - c_ref * rr).max(0.0))
            .fold(0.0, f64::max);
        r.eps_fit = Some(eps);
        r.c_ref = Some(c_ref);
    }
}
