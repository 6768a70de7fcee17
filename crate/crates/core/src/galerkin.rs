//! Coupled modal system for the fluid-plate process and its implicit midpoint integrator.
//!
//! State `z = (α, γ)` together with `β`, `γ = β̇`. The system reads
//!
//! ```text
//! M(t) ż + A z + [0; Kβ + F̂(β)] = r(t),    β̇ = γ
//! ```
//!
//! with `M = [[μI, μC], [μCᵀ, μG + ρI]]`, `A = [[Λ, S_ef], [S_efᵀ, S_ff]]`.

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::discretization::DiscreteOperators;
use crate::error::{invalid, FsiError, Result};
use crate::linalg::csr_dense;
use crate::physics::{CoefficientProfile, ForcingProfile, ForcingShapes, NonlinearForce};
use crate::plate_basis::{project_plate, PlateBasis};
use crate::stokes_basis::{project_onto_basis, LiftingOperator, StokesBasis};

/// Inner products between Stokes modes `e_k` and lifted plate modes `φ_j = N g_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalCouplings {
    /// `C[k][j] = (φ_j, e_k)`, m × n.
    pub c: DMatrix<f64>,
    /// `G[j][k] = (φ_j, φ_k)`.
    pub g: DMatrix<f64>,
    /// `S_ef[k][j] = (∇φ_j, ∇e_k)`, m × n.
    pub sef: DMatrix<f64>,
    /// `S_ff[j][k] = (∇φ_j, ∇φ_k)`.
    pub sff: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub kappa: DVector<f64>,
    /// Stokes modes as columns.
    pub e: DMatrix<f64>,
    /// Lifted plate modes as columns.
    pub phi: DMatrix<f64>,
    /// Plate modes as columns (beam DOFs).
    pub gb: DMatrix<f64>,
    /// `(f̂, e_k)`, `(f̂, φ_j)` and `(ĝ, g_j)`.
    pub f_e: DVector<f64>,
    pub f_phi: DVector<f64>,
    pub g_g: DVector<f64>,
}

impl ModalCouplings {
    pub fn m(&self) -> usize {
        self.lambda.len()
    }

    pub fn n(&self) -> usize {
        self.kappa.len()
    }

    /// Block Gram matrix `[[I, C], [Cᵀ, G]]` of `{e_i} ∪ {φ_j}`.
    pub fn block_gram(&self) -> DMatrix<f64> {
        let (m, n) = (self.m(), self.n());
        let mut out = DMatrix::zeros(m + n, m + n);
        out.view_mut((0, 0), (m, m)).fill_with_identity();
        out.view_mut((0, m), (m, n)).copy_from(&self.c);
        out.view_mut((m, 0), (n, m)).copy_from(&self.c.transpose());
        out.view_mut((m, m), (n, n)).copy_from(&self.g);
        out
    }

    /// Dissipation matrix; the literal variant replaces `S_ff` under the `γ` sum by
    /// `(∇e_j, ∇φ_k)` (zero for `j ≥ m`).
    pub fn damping(&self, paper_literal: bool) -> DMatrix<f64> {
        let (m, n) = (self.m(), self.n());
        let mut a = DMatrix::zeros(m + n, m + n);
        a.view_mut((0, 0), (m, m))
            .copy_from(&DMatrix::from_diagonal(&self.lambda));
        a.view_mut((0, m), (m, n)).copy_from(&self.sef);
        a.view_mut((m, 0), (n, m)).copy_from(&self.sef.transpose());
        if paper_literal {
            let mut lit = DMatrix::zeros(n, n);
            for j in 0..n.min(m) {
                for k in 0..n {
                    lit[(j, k)] = self.sef[(j, k)];
                }
            }
            // row index k is the equation, column j the unknown
            a.view_mut((m, m), (n, n)).copy_from(&lit.transpose());
        } else {
            a.view_mut((m, m), (n, n)).copy_from(&self.sff);
        }
        a
    }
}

pub fn assemble_couplings(
    ops: &DiscreteOperators,
    stokes: &StokesBasis,
    plate: &PlateBasis,
    lift: &LiftingOperator,
    shapes: &ForcingShapes,
) -> Result<ModalCouplings> {
    let nv = ops.grid.n_velocity();
    let nb = ops.grid.n_beam();
    if lift.nmat.nrows() != nv || lift.nmat.ncols() != nb {
        return Err(FsiError::SizeMismatch {
            what: "lifting operator",
            expected: nv,
            got: lift.nmat.nrows(),
        });
    }
    if stokes.modes.first().is_some_and(|m| m.e.len() != nv) {
        return Err(FsiError::SizeMismatch {
            what: "stokes modes",
            expected: nv,
            got: stokes.modes[0].e.len(),
        });
    }
    if plate.projector.nrows() != nb {
        return Err(FsiError::SizeMismatch {
            what: "plate modes",
            expected: nb,
            got: plate.projector.nrows(),
        });
    }
    if shapes.f_hat.len() != nv || shapes.g_hat.len() != nb {
        return Err(FsiError::SizeMismatch {
            what: "forcing shapes",
            expected: nv,
            got: shapes.f_hat.len(),
        });
    }
    let e = stokes.matrix();
    let gb = plate.matrix();
    let phi = &lift.nmat * &gb;
    let mv_phi = DMatrix::from_fn(nv, phi.ncols(), |r, c| ops.mv[r] * phi[(r, c)]);
    let c = e.transpose() * &mv_phi;
    let g = phi.transpose() * &mv_phi;
    let g = 0.5 * (&g + g.transpose());
    let k_phi = csr_dense(&ops.stiffness, &phi);
    let sef = e.transpose() * &k_phi;
    let sff = phi.transpose() * &k_phi;
    let sff = 0.5 * (&sff + sff.transpose());
    let mv_f = shapes.f_hat.component_mul(&ops.mv);
    let f_e = e.transpose() * &mv_f;
    let f_phi = phi.transpose() * &mv_f;
    let g_g = DVector::from_iterator(
        plate.len(),
        plate.modes.iter().map(|m| ops.beam_inner(&shapes.g_hat, &m.g)),
    );
    Ok(ModalCouplings {
        c,
        g,
        sef,
        sff,
        lambda: stokes.lambdas(),
        kappa: plate.kappas(),
        e,
        phi,
        gb,
        f_e,
        f_phi,
        g_g,
    })
}

/// Operators, bases, lifting and couplings for one grid and mode count.
#[derive(Debug, Clone)]
pub struct Model {
    pub ops: DiscreteOperators,
    pub stokes: StokesBasis,
    pub plate: PlateBasis,
    pub lift: LiftingOperator,
    pub shapes: ForcingShapes,
    pub coup: ModalCouplings,
}

impl Model {
    pub fn build(nx: usize, nz: usize, m: usize, n: usize) -> Result<Self> {
        let ops = crate::discretization::build(nx, nz)?;
        let stokes = crate::stokes_basis::solve_stokes_eigen(&ops, m)?;
        let plate = crate::plate_basis::solve_plate_eigen(&ops, n)?;
        let lift = crate::stokes_basis::build_lifting(&ops)?;
        Self::from_parts(ops, stokes, plate, lift)
    }

    pub fn from_parts(
        ops: DiscreteOperators,
        stokes: StokesBasis,
        plate: PlateBasis,
        lift: LiftingOperator,
    ) -> Result<Self> {
        let shapes = crate::physics::forcing_shapes(&ops);
        let coup = assemble_couplings(&ops, &stokes, &plate, &lift, &shapes)?;
        Ok(Self {
            ops,
            stokes,
            plate,
            lift,
            shapes,
            coup,
        })
    }

    pub fn run<'a>(
        &'a self,
        physics: &'a Physics,
        settings: &'a IntegratorSettings,
    ) -> Result<ProcessRun<'a>> {
        ProcessRun::new(&self.ops, &self.coup, physics, settings)
    }
}

/// `M = [[μI, μC], [μCᵀ, μG + ρI]]`, checked for positive definiteness.
pub fn mass_matrix(coup: &ModalCouplings, mu: f64, rho: f64) -> Result<DMatrix<f64>> {
    if !(mu > 0.0 && rho > 0.0) {
        return Err(invalid("mu/rho", "coefficients must be positive"));
    }
    let (m, n) = (coup.m(), coup.n());
    let mut mass = mu * coup.block_gram();
    for j in 0..n {
        mass[(m + j, m + j)] += rho;
    }
    if Cholesky::new(mass.clone()).is_none() {
        let min_eigenvalue = SymmetricEigen::new(mass).eigenvalues.min();
        return Err(FsiError::MassNotSpd { min_eigenvalue });
    }
    Ok(mass)
}

/// Modal coordinates of an approximate solution at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl GalerkinState {
    pub fn zeros(t: f64, m: usize, n: usize) -> Self {
        Self {
            t,
            alpha: DVector::zeros(m),
            beta: DVector::zeros(n),
            gamma: DVector::zeros(n),
        }
    }

    /// Project discrete fields `(v, u⁰, u¹)` by `α = Π_m(v − N u¹)`, `β = P_n u⁰`, `γ = P_n u¹`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fields(
        ops: &DiscreteOperators,
        stokes: &StokesBasis,
        plate: &PlateBasis,
        lift: &LiftingOperator,
        t: f64,
        v: &DVector<f64>,
        u0: &DVector<f64>,
        u1: &DVector<f64>,
    ) -> Result<Self> {
        for (name, u) in [("u0", u0), ("u1", u1)] {
            if u.len() != ops.grid.n_beam() {
                return Err(FsiError::SizeMismatch {
                    what: "beam field",
                    expected: ops.grid.n_beam(),
                    got: u.len(),
                });
            }
            if ops.beam_mean(u).abs() > 1e-10 * u.amax().max(1.0) {
                return Err(invalid(name, "plate data must have zero mean"));
            }
        }
        let (nu1, _) = lift.apply(ops, u1)?;
        let alpha = project_onto_basis(ops, stokes, &(v - nu1))?;
        Ok(Self {
            t,
            alpha,
            beta: project_plate(ops, plate, u0)?,
            gamma: project_plate(ops, plate, u1)?,
        })
    }

    /// `z = (α, γ)`.
    pub fn z(&self) -> DVector<f64> {
        let (m, n) = (self.alpha.len(), self.gamma.len());
        DVector::from_fn(m + n, |i, _| if i < m { self.alpha[i] } else { self.gamma[i - m] })
    }

    fn from_z(t: f64, z: &DVector<f64>, beta: DVector<f64>) -> Self {
        let n = beta.len();
        let m = z.len() - n;
        Self {
            t,
            alpha: z.rows(0, m).into_owned(),
            gamma: z.rows(m, n).into_owned(),
            beta,
        }
    }

    /// Fluid velocity `Σ α_i e_i + N(Σ γ_j g_j)`.
    pub fn velocity(&self, coup: &ModalCouplings) -> DVector<f64> {
        &coup.e * &self.alpha + &coup.phi * &self.gamma
    }

    pub fn displacement(&self, coup: &ModalCouplings) -> DVector<f64> {
        &coup.gb * &self.beta
    }

    pub fn plate_velocity(&self, coup: &ModalCouplings) -> DVector<f64> {
        &coup.gb * &self.gamma
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(self.beta.iter()).chain(self.gamma.iter()).all(|x| x.is_finite())
    }
}

/// Coefficients, forcing and nonlinearity of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub coefficients: CoefficientProfile,
    pub forcing: ForcingProfile,
    pub nonlinearity: NonlinearForce,
}

impl Physics {
    pub fn validate(&self) -> Result<()> {
        self.coefficients.validate()?;
        self.forcing.validate()?;
        self.nonlinearity.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_fixed_point")]
    pub max_fixed_point: usize,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
    #[serde(default)]
    pub paper_literal_damping: bool,
    #[serde(default)]
    pub paper_literal_ht_norm: bool,
}

fn default_tol() -> f64 {
    1e-11
}
fn default_max_fixed_point() -> usize {
    50
}
fn default_max_halvings() -> u32 {
    10
}

impl IntegratorSettings {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            tol: default_tol(),
            max_fixed_point: default_max_fixed_point(),
            max_halvings: default_max_halvings(),
            paper_literal_damping: false,
            paper_literal_ht_norm: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Everything needed to advance the modal system; shareable across threads.
#[derive(Debug, Clone)]
pub struct ProcessRun<'a> {
    pub ops: &'a DiscreteOperators,
    pub coup: &'a ModalCouplings,
    pub physics: &'a Physics,
    pub settings: &'a IntegratorSettings,
}

/// Recorded states of one realization of `U(t, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<GalerkinState>,
    /// Deepest step-halving level used.
    pub halvings: u32,
}

impl Trajectory {
    pub fn last(&self) -> &GalerkinState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

impl<'a> ProcessRun<'a> {
    pub fn new(
        ops: &'a DiscreteOperators,
        coup: &'a ModalCouplings,
        physics: &'a Physics,
        settings: &'a IntegratorSettings,
    ) -> Result<Self> {
        physics.validate()?;
        settings.validate()?;
        Ok(Self {
            ops,
            coup,
            physics,
            settings,
        })
    }

    /// Right-hand side load `r(t) = [a_f (f̂, e); a_f (f̂, φ) + a_g (ĝ, g)]`.
    pub fn forcing_vector(&self, t: f64) -> DVector<f64> {
        let (af, ag) = self.physics.forcing.amplitudes(t);
        let c = self.coup;
        let (m, n) = (c.m(), c.n());
        DVector::from_fn(m + n, |i, _| {
            if i < m {
                af * c.f_e[i]
            } else {
                af * c.f_phi[i - m] + ag * c.g_g[i - m]
            }
        })
    }

    /// Modal nonlinear load `F̂(β) = Gbᵀ Mb F(Gb β)`.
    pub fn modal_force(&self, beta: &DVector<f64>) -> DVector<f64> {
        let force = &self.physics.nonlinearity;
        if force.is_zero() {
            return DVector::zeros(beta.len());
        }
        let u = &self.coup.gb * beta;
        let (f, _) = force.eval(self.ops, &u);
        self.coup.gb.transpose() * f.component_mul(&self.ops.mb)
    }

    pub fn modal_force_jacobian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let u = &self.coup.gb * beta;
        let jac = self.physics.nonlinearity.jacobian(self.ops, &u);
        let weighted = DMatrix::from_fn(jac.nrows(), jac.ncols(), |r, c| self.ops.mb[r] * jac[(r, c)]);
        self.coup.gb.transpose() * weighted * &self.coup.gb
    }

    /// Plate potential `Π(Gb β)`.
    pub fn potential(&self, beta: &DVector<f64>) -> f64 {
        let force = &self.physics.nonlinearity;
        if force.is_zero() {
            return 0.0;
        }
        force.eval(self.ops, &(&self.coup.gb * beta)).1
    }

    /// `b(t, state)` such that `M(t) ż = b`.
    pub fn rhs(&self, state: &GalerkinState) -> DVector<f64> {
        let m = self.coup.m();
        let a = self.coup.damping(self.settings.paper_literal_damping);
        let mut b = self.forcing_vector(state.t) - a * state.z();
        let elastic = self.coup.kappa.component_mul(&state.beta) + self.modal_force(&state.beta);
        for j in 0..elastic.len() {
            b[m + j] -= elastic[j];
        }
        b
    }

    /// One implicit midpoint step of size `dt`, halving on non-convergence.
    pub fn step(&self, state: &GalerkinState, dt: f64) -> Result<GalerkinState> {
        self.step_with_halving(state, dt, 0).map(|(s, _)| s)
    }

    fn step_with_halving(
        &self,
        state: &GalerkinState,
        dt: f64,
        level: u32,
    ) -> Result<(GalerkinState, u32)> {
        match self.midpoint(state, dt) {
            Ok(next) => Ok((next, level)),
            Err(residual) => {
                if level >= self.settings.max_halvings {
                    return Err(FsiError::StepNonConvergence {
                        t: state.t,
                        halvings: level,
                        residual,
                    });
                }
                debug!("halving dt = {dt:e} at t = {}", state.t);
                let half = 0.5 * dt;
                let (mid, l1) = self.step_with_halving(state, half, level + 1)?;
                let (mut end, l2) = self.step_with_halving(&mid, half, level + 1)?;
                end.t = state.t + dt;
                Ok((end, l1.max(l2)))
            }
        }
    }

    /// Solve the midpoint system; `Err` carries the final iteration residual.
    fn midpoint(&self, state: &GalerkinState, dt: f64) -> std::result::Result<GalerkinState, f64> {
        let (m, n) = (self.coup.m(), self.coup.n());
        let th = state.t + 0.5 * dt;
        let co = self.physics.coefficients.eval(th);
        let mass = mass_matrix(self.coup, co.mu, co.rho).map_err(|_| f64::NAN)?;
        let mut jac = 2.0 / dt * &mass + self.coup.damping(self.settings.paper_literal_damping);
        for j in 0..n {
            jac[(m + j, m + j)] += 0.5 * dt * self.coup.kappa[j];
        }
        let z0 = state.z();
        let mut base = 2.0 / dt * &mass * &z0 + self.forcing_vector(th);
        for j in 0..n {
            base[m + j] -= self.coup.kappa[j] * state.beta[j];
        }
        let lu = jac.clone().lu();
        let tol = self.settings.tol;
        let nonlinear = !self.physics.nonlinearity.is_zero();
        let beta_mid = |zh: &DVector<f64>| &state.beta + 0.5 * dt * zh.rows(m, n);
        let load = |zh: &DVector<f64>| {
            let mut b = base.clone();
            if nonlinear {
                let f = self.modal_force(&beta_mid(zh));
                for j in 0..n {
                    b[m + j] -= f[j];
                }
            }
            b
        };

        let mut zh = lu.solve(&load(&z0)).ok_or(f64::NAN)?;
        let mut converged = !nonlinear;
        let mut residual = 0.0;
        if nonlinear {
            for _ in 0..self.settings.max_fixed_point {
                let next = lu.solve(&load(&zh)).ok_or(f64::NAN)?;
                residual = (&next - &zh).amax();
                zh = next;
                if residual <= tol * zh.amax().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                // Newton on R(z) = J z − load(z)
                for _ in 0..20 {
                    let r = &jac * &zh - load(&zh);
                    let jf = self.modal_force_jacobian(&beta_mid(&zh));
                    let mut jn = jac.clone();
                    for a in 0..n {
                        for b in 0..n {
                            jn[(m + a, m + b)] += 0.5 * dt * jf[(a, b)];
                        }
                    }
                    let delta = jn.lu().solve(&r).ok_or(f64::NAN)?;
                    zh -= &delta;
                    residual = delta.amax();
                    if !residual.is_finite() {
                        break;
                    }
                    if residual <= tol * zh.amax().max(1.0) {
                        converged = true;
                        break;
                    }
                }
            }
        }
        if !converged || zh.iter().any(|x| !x.is_finite()) {
            return Err(residual);
        }
        let beta1 = &state.beta + dt * zh.rows(m, n);
        let z1 = 2.0 * &zh - &z0;
        Ok(GalerkinState::from_z(state.t + dt, &z1, beta1))
    }

    /// Integrate from `state.t` to `t_end`, recording every step.
    pub fn evolve(&self, state: &GalerkinState, t_end: f64) -> Result<Trajectory> {
        if !(t_end >= state.t) {
            return Err(invalid("t_end", "must not precede the initial time"));
        }
        let tau = state.t;
        let dt = self.settings.dt;
        let span = t_end - tau;
        let steps = ((span / dt) - 1e-9).ceil().max(0.0) as usize;
        let mut states = Vec::with_capacity(steps + 1);
        states.push(state.clone());
        let mut halvings = 0;
        let mut current = state.clone();
        for k in 1..=steps {
            let target = if k == steps { t_end } else { tau + k as f64 * dt };
            let (mut next, level) = self.step_with_halving(&current, target - current.t, 0)?;
            next.t = target;
            if level > halvings {
                warn!("step halving level {level} reached near t = {target}");
            }
            halvings = halvings.max(level);
            states.push(next.clone());
            current = next;
        }
        Ok(Trajectory { states, halvings })
    }

    /// Final state only, without storing the trajectory.
    pub fn advance(&self, state: &GalerkinState, t_end: f64) -> Result<GalerkinState> {
        if !(t_end >= state.t) {
            return Err(invalid("t_end", "must not precede the initial time"));
        }
        let tau = state.t;
        let dt = self.settings.dt;
        let steps = (((t_end - tau) / dt) - 1e-9).ceil().max(0.0) as usize;
        let mut current = state.clone();
        for k in 1..=steps {
            let target = if k == steps { t_end } else { tau + k as f64 * dt };
            let (mut next, _) = self.step_with_halving(&current, target - current.t, 0)?;
            next.t = target;
            current = next;
        }
        Ok(current)
    }
}
