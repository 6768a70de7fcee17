//! Time-dependent coefficients, forcing, plate nonlinearities and assumption samplers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{spmv, DiscreteOperators};
use crate::error::{invalid, Result};
use crate::plate_basis::{fractional_norm, project_plate, PlateBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientFamily {
    Constant,
    Logistic,
}

/// Density-like coefficients `mu(t)`, `rho(t)`.
///
/// The logistic family is `mu0 / (1 + exp(kappa_c (t - t_c)))`, same shape for `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientProfile {
    pub family: CoefficientFamily,
    pub mu0: f64,
    pub rho0: f64,
    #[serde(default = "default_kappa_c")]
    pub kappa_c: f64,
    #[serde(default)]
    pub t_c: f64,
}

fn default_kappa_c() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub mu: f64,
    pub dmu: f64,
    pub rho: f64,
    pub drho: f64,
}

impl CoefficientProfile {
    pub fn constant(mu0: f64, rho0: f64) -> Self {
        Self {
            family: CoefficientFamily::Constant,
            mu0,
            rho0,
            kappa_c: default_kappa_c(),
            t_c: 0.0,
        }
    }

    pub fn logistic(mu0: f64, rho0: f64, kappa_c: f64, t_c: f64) -> Self {
        Self {
            family: CoefficientFamily::Logistic,
            mu0,
            rho0,
            kappa_c,
            t_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(invalid("mu0", "must be positive and finite"));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(invalid("rho0", "must be positive and finite"));
        }
        if self.family == CoefficientFamily::Logistic && !(self.kappa_c > 0.0) {
            return Err(invalid("kappa_c", "must be positive"));
        }
        if !self.t_c.is_finite() {
            return Err(invalid("t_c", "must be finite"));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Coefficients {
        match self.family {
            CoefficientFamily::Constant => Coefficients {
                mu: self.mu0,
                dmu: 0.0,
                rho: self.rho0,
                drho: 0.0,
            },
            CoefficientFamily::Logistic => {
                let s = 1.0 / (1.0 + (self.kappa_c * (t - self.t_c)).exp());
                let ds = -self.kappa_c * s * (1.0 - s);
                Coefficients {
                    mu: self.mu0 * s,
                    dmu: self.mu0 * ds,
                    rho: self.rho0 * s,
                    drho: self.rho0 * ds,
                }
            }
        }
    }

    /// Declared bound on `|mu| + |mu'| + |rho| + |rho'|`.
    pub fn declared_l(&self) -> f64 {
        match self.family {
            CoefficientFamily::Constant => self.mu0 + self.rho0,
            CoefficientFamily::Logistic => (self.mu0 + self.rho0) * (1.0 + 0.25 * self.kappa_c),
        }
    }

    /// Suprema of `mu` and `rho` over the real line.
    pub fn sup(&self) -> (f64, f64) {
        (self.mu0, self.rho0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingFamily {
    Zero,
    Constant,
    Periodic,
    Exponential,
}

/// Separable forcing `f = a_f(t) f̂`, `g = a_g(t) ĝ` with unit-norm shapes.
///
/// `f̂` is the curl of `sin²(πx) sin²(πz)`, `ĝ` is `cos(2πx)` on the beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingProfile {
    pub family: ForcingFamily,
    #[serde(default)]
    pub amp_f: f64,
    #[serde(default)]
    pub amp_g: f64,
    /// Angular frequency of the periodic family.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Rate of the exponential family.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    /// Declared window-integral bound; derived from the amplitudes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_fg: Option<f64>,
}

fn default_omega() -> f64 {
    1.0
}
fn default_kappa() -> f64 {
    0.1
}
fn default_sigma0() -> f64 {
    0.5
}

impl ForcingProfile {
    pub fn zero() -> Self {
        Self::new(ForcingFamily::Zero, 0.0, 0.0)
    }

    pub fn new(family: ForcingFamily, amp_f: f64, amp_g: f64) -> Self {
        Self {
            family,
            amp_f,
            amp_g,
            omega: default_omega(),
            kappa: default_kappa(),
            sigma0: default_sigma0(),
            c_fg: None,
        }
    }

    pub fn periodic(amp_f: f64, amp_g: f64, omega: f64) -> Self {
        Self {
            omega,
            ..Self::new(ForcingFamily::Periodic, amp_f, amp_g)
        }
    }

    pub fn exponential(amp_f: f64, amp_g: f64, kappa: f64) -> Self {
        Self {
            kappa,
            ..Self::new(ForcingFamily::Exponential, amp_f, amp_g)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amp_f.is_finite() && self.amp_g.is_finite()) {
            return Err(invalid("amp_f/amp_g", "must be finite"));
        }
        if self.family == ForcingFamily::Periodic && !(self.omega > 0.0) {
            return Err(invalid("omega", "must be positive"));
        }
        if self.family == ForcingFamily::Exponential && !(self.kappa > 0.0) {
            return Err(invalid("kappa", "must be positive"));
        }
        if !(self.sigma0 > 0.0) {
            return Err(invalid("sigma0", "must be positive"));
        }
        if let Some(c) = self.c_fg {
            if !(c >= 0.0) {
                return Err(invalid("c_fg", "must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Time amplitudes `(a_f(t), a_g(t))`.
    pub fn amplitudes(&self, t: f64) -> (f64, f64) {
        match self.family {
            ForcingFamily::Zero => (0.0, 0.0),
            ForcingFamily::Constant => (self.amp_f, self.amp_g),
            ForcingFamily::Periodic => (
                self.amp_f * (self.omega * t).sin(),
                self.amp_g * (self.omega * t).cos(),
            ),
            ForcingFamily::Exponential => {
                let s = (-self.kappa * t).exp();
                (self.amp_f * s, self.amp_g * s)
            }
        }
    }

    /// `‖f(t)‖² + ‖g(t)‖²` (shapes have unit norm).
    pub fn norm_sq(&self, t: f64) -> f64 {
        let (a, b) = self.amplitudes(t);
        a * a + b * b
    }

    pub fn is_zero(&self) -> bool {
        self.family == ForcingFamily::Zero || (self.amp_f == 0.0 && self.amp_g == 0.0)
    }

    pub fn window(&self) -> f64 {
        50.0 / self.sigma0
    }

    /// Declared `C_fg`: the window length times the amplitude bound on `t >= 0`.
    pub fn declared_c_fg(&self) -> f64 {
        self.c_fg.unwrap_or_else(|| match self.family {
            ForcingFamily::Zero => 0.0,
            _ => self.window() * (self.amp_f * self.amp_f + self.amp_g * self.amp_g),
        })
    }
}

/// Unit-norm spatial shapes of the forcing.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingShapes {
    pub f_hat: DVector<f64>,
    pub g_hat: DVector<f64>,
}

pub fn forcing_shapes(ops: &DiscreteOperators) -> ForcingShapes {
    let g = &ops.grid;
    let pi = std::f64::consts::PI;
    let mut psi = DVector::zeros(g.n_nodes());
    for j in 0..=g.nz {
        for i in 0..=g.nx {
            let (x, z) = g.node_position(i, j);
            psi[g.node_index(i, j)] = (pi * x).sin().powi(2) * (pi * z).sin().powi(2);
        }
    }
    let mut f_hat = spmv(&ops.curl, &psi);
    f_hat /= ops.velocity_norm(&f_hat);
    let raw = DVector::from_iterator(g.n_beam(), g.beam_nodes().iter().map(|&x| (2.0 * pi * x).cos()));
    let mut g_hat = ops.project_zero_mean(&raw);
    g_hat /= ops.beam_norm(&g_hat);
    ForcingShapes { f_hat, g_hat }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearFamily {
    Zero,
    Cubic,
    Berger,
}

/// Plate feedback force `F = Π'`.
///
/// Cubic: `F = c u³`, `Π = (c/4)∫u⁴`. Berger: `F = (Γ‖u_x‖² − Q)(−u_xx)`,
/// `Π = (Γ/4)‖u_x‖⁴ − (Q/2)‖u_x‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearForce {
    pub family: NonlinearFamily,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub q: f64,
}

/// Declared constants of the lower bounds on `Π` and `(F(u), u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundConstants {
    pub nu: f64,
    pub c: f64,
    pub a1: f64,
    pub a2: f64,
}

impl NonlinearForce {
    pub fn zero() -> Self {
        Self {
            family: NonlinearFamily::Zero,
            c: 0.0,
            gamma: 0.0,
            q: 0.0,
        }
    }

    pub fn cubic(c: f64) -> Self {
        Self {
            family: NonlinearFamily::Cubic,
            c,
            ..Self::zero()
        }
    }

    pub fn berger(gamma: f64, q: f64) -> Self {
        Self {
            family: NonlinearFamily::Berger,
            gamma,
            q,
            ..Self::zero()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            NonlinearFamily::Zero => Ok(()),
            NonlinearFamily::Cubic if !(self.c >= 0.0) => Err(invalid("c", "must be nonnegative")),
            NonlinearFamily::Cubic => Ok(()),
            NonlinearFamily::Berger if !(self.gamma > 0.0) => {
                Err(invalid("gamma", "must be positive"))
            }
            NonlinearFamily::Berger if !(self.q >= 0.0) => Err(invalid("q", "must be nonnegative")),
            NonlinearFamily::Berger => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self.family {
            NonlinearFamily::Zero => true,
            NonlinearFamily::Cubic => self.c == 0.0,
            NonlinearFamily::Berger => false,
        }
    }

    /// `(F(u), Π(u))`.
    pub fn eval(&self, ops: &DiscreteOperators, u: &DVector<f64>) -> (DVector<f64>, f64) {
        match self.family {
            NonlinearFamily::Zero => (DVector::zeros(u.len()), 0.0),
            NonlinearFamily::Cubic => {
                let f = u.map(|x| self.c * x * x * x);
                let pi = 0.25 * self.c * u.iter().zip(ops.mb.iter()).map(|(x, w)| w * x.powi(4)).sum::<f64>();
                (f, pi)
            }
            NonlinearFamily::Berger => {
                let b2u = spmv(&ops.b2, u);
                let s = ops.beam_inner(u, &b2u);
                let f = (self.gamma * s - self.q) * b2u;
                let pi = 0.25 * self.gamma * s * s - 0.5 * self.q * s;
                (f, pi)
            }
        }
    }

    /// Jacobian `dF/du` as a dense beam matrix.
    pub fn jacobian(&self, ops: &DiscreteOperators, u: &DVector<f64>) -> DMatrix<f64> {
        let n = u.len();
        match self.family {
            NonlinearFamily::Zero => DMatrix::zeros(n, n),
            NonlinearFamily::Cubic => DMatrix::from_diagonal(&u.map(|x| 3.0 * self.c * x * x)),
            NonlinearFamily::Berger => {
                let b2 = crate::discretization::to_dense(&ops.b2);
                let b2u = &b2 * u;
                let s = ops.beam_inner(u, &b2u);
                let weighted = b2u.component_mul(&ops.mb);
                (self.gamma * s - self.q) * b2 + 2.0 * self.gamma * &b2u * weighted.transpose()
            }
        }
    }

    pub fn declared_constants(&self) -> LowerBoundConstants {
        match self.family {
            NonlinearFamily::Zero | NonlinearFamily::Cubic => LowerBoundConstants {
                nu: 0.5,
                c: 0.0,
                a1: 1.0,
                a2: 0.0,
            },
            NonlinearFamily::Berger => LowerBoundConstants {
                nu: 0.5,
                c: self.q * self.q / (4.0 * self.gamma),
                a1: 1.0,
                a2: self.q * self.q / (12.0 * self.gamma),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CheckStatus {
    Pass,
    Fail { witness: String },
    NotApplicable { reason: String },
}

impl CheckStatus {
    pub fn passed(&self) -> bool {
        !matches!(self, CheckStatus::Fail { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    #[serde(flatten)]
    pub status: CheckStatus,
    pub measured: Option<f64>,
}

/// Measured constants alongside the declared ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstants {
    pub l_measured: f64,
    pub l_declared: f64,
    pub lipschitz_c_r: f64,
    pub lower_bounds: LowerBoundConstants,
    pub c_fg_measured: f64,
    pub c_fg_declared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub constants: MeasuredConstants,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status.passed())
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Sampling plan for [`validate_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    #[serde(default = "default_u_samples")]
    pub u_samples: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_eps_frac")]
    pub eps_frac: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_t_min() -> f64 {
    -200.0
}
fn default_t_max() -> f64 {
    200.0
}
fn default_t_points() -> usize {
    1000
}
fn default_u_samples() -> usize {
    200
}
fn default_radius() -> f64 {
    1.0
}
fn default_eps_frac() -> f64 {
    0.25
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            t_min: default_t_min(),
            t_max: default_t_max(),
            t_points: default_t_points(),
            u_samples: default_u_samples(),
            radius: default_radius(),
            eps_frac: default_eps_frac(),
            seed: 0,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > self.t_min) || self.t_points < 2 {
            return Err(invalid("t grid", "need t_max > t_min and at least 2 points"));
        }
        if self.u_samples == 0 {
            return Err(invalid("u_samples", "must be at least 1"));
        }
        if !(self.radius > 0.0) {
            return Err(invalid("radius", "must be positive"));
        }
        if !(self.eps_frac > 0.0 && self.eps_frac < 2.0) {
            return Err(invalid("eps_frac", "must lie in (0, 2)"));
        }
        Ok(())
    }

    pub fn t_grid(&self) -> Vec<f64> {
        let h = (self.t_max - self.t_min) / (self.t_points - 1) as f64;
        (0..self.t_points).map(|k| self.t_min + k as f64 * h).collect()
    }
}

fn status(ok: bool, witness: impl FnOnce() -> String) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail { witness: witness() }
    }
}

/// Truncated-window quadrature of the forcing-energy integral.
pub fn g2_window_integral(forcing: &ForcingProfile, t: f64, sigma: f64) -> f64 {
    let tw = forcing.window();
    let n = 4000;
    let h = tw / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let s = t - tw + k as f64 * h;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * (-sigma * (t - s)).exp() * forcing.norm_sq(s);
    }
    acc * h
}

/// Random beam fields in the `H²` ball of radius `radius`, spanned by `plate`.
fn sample_beam_fields(
    plate: &PlateBasis,
    count: usize,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let n = plate.len();
    (0..count)
        .map(|_| {
            let beta = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let norm = fractional_norm(plate, &beta, 2.0).unwrap_or(1.0).max(1e-300);
            let r = radius * rng.random_range(0.0..=1.0);
            plate.reconstruct(&(beta * (r / norm)))
        })
        .collect()
}

/// Sample the coefficient, forcing and nonlinearity assumptions.
///
/// `plate` should span the full zero-mean beam space so that fractional norms of
/// arbitrary fields are exact.
pub fn validate_assumptions(
    ops: &DiscreteOperators,
    plate: &PlateBasis,
    profile: &CoefficientProfile,
    forcing: &ForcingProfile,
    force: &NonlinearForce,
    spec: &SampleSpec,
) -> Result<ValidationReport> {
    profile.validate()?;
    forcing.validate()?;
    force.validate()?;
    spec.validate()?;
    let mut checks = Vec::new();
    let grid = spec.t_grid();
    let coeffs: Vec<Coefficients> = grid.iter().map(|&t| profile.eval(t)).collect();

    let bad = grid.iter().zip(&coeffs).find(|(_, c)| !(c.mu > 0.0 && c.rho > 0.0));
    checks.push(AssumptionCheck {
        name: "A1".into(),
        status: status(bad.is_none(), || {
            let (t, c) = bad.unwrap();
            format!("t = {t}: mu = {:e}, rho = {:e}", c.mu, c.rho)
        }),
        measured: coeffs.iter().map(|c| c.mu.min(c.rho)).reduce(f64::min),
    });

    let bad = grid.iter().zip(&coeffs).enumerate().find(|(k, (_, c))| {
        c.dmu > 0.0
            || c.drho > 0.0
            || (*k > 0 && (c.mu > coeffs[k - 1].mu || c.rho > coeffs[k - 1].rho))
    });
    checks.push(AssumptionCheck {
        name: "A2".into(),
        status: status(bad.is_none(), || {
            let (_, (t, c)) = bad.unwrap();
            format!("t = {t}: mu' = {:e}, rho' = {:e}", c.dmu, c.drho)
        }),
        measured: coeffs.iter().map(|c| c.dmu.max(c.drho)).reduce(f64::max),
    });

    let l_declared = profile.declared_l();
    let sums: Vec<f64> = coeffs
        .iter()
        .map(|c| c.mu.abs() + c.dmu.abs() + c.rho.abs() + c.drho.abs())
        .collect();
    let l_measured = sums.iter().copied().fold(0.0, f64::max);
    let bad = grid.iter().zip(&sums).find(|(_, s)| **s > l_declared * (1.0 + 1e-12));
    checks.push(AssumptionCheck {
        name: "A3".into(),
        status: status(bad.is_none(), || {
            let (t, s) = bad.unwrap();
            format!("t = {t}: sum {s:e} exceeds L = {l_declared:e}")
        }),
        measured: Some(l_measured),
    });

    let a4 = match profile.family {
        CoefficientFamily::Constant => CheckStatus::NotApplicable {
            reason: "constant coefficients are an autonomous baseline".into(),
        },
        CoefficientFamily::Logistic => {
            let far = profile.t_c + 60.0 / profile.kappa_c;
            let c = profile.eval(far);
            let ok = c.mu <= 1e-20 * profile.mu0.max(1.0) && c.rho <= 1e-20 * profile.rho0.max(1.0);
            let c_end = profile.eval(spec.t_max);
            let ok = ok && c_end.mu <= profile.mu0 && c_end.rho <= profile.rho0;
            status(ok, || format!("t = {far}: mu = {:e}, rho = {:e}", c.mu, c.rho))
        }
    };
    let measured = Some(profile.eval(profile.t_c + 60.0 / profile.kappa_c).mu);
    checks.push(AssumptionCheck {
        name: "A4".into(),
        status: a4,
        measured,
    });

    // nonlinearity samplers
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fields = sample_beam_fields(plate, spec.u_samples, spec.radius, &mut rng);
    let dirs = sample_beam_fields(plate, spec.u_samples, 1.0, &mut rng);
    let h2_frac = 2.0 - spec.eps_frac;
    let frac_norm = |u: &DVector<f64>| -> f64 {
        let beta = project_plate(ops, plate, u).expect("beam sizes agree");
        fractional_norm(plate, &beta, h2_frac).expect("order in range")
    };

    let mut c_r: f64 = 0.0;
    let mut f1_witness = None;
    for k in 0..fields.len() {
        let u1 = &fields[k];
        // far pair and a close pair around each sample
        let far = &fields[(k + 1) % fields.len()];
        let near = u1 + 1e-4 * &dirs[k];
        for u2 in [far, &near] {
            let den = frac_norm(&(u1 - u2));
            if den <= 1e-14 {
                continue;
            }
            let num = ops.beam_norm(&(force.eval(ops, u1).0 - force.eval(ops, u2).0));
            let ratio = num / den;
            if !ratio.is_finite() {
                f1_witness = Some(format!("sample {k}: non-finite ratio"));
            }
            c_r = c_r.max(ratio);
        }
    }
    checks.push(AssumptionCheck {
        name: "F1".into(),
        status: match f1_witness {
            None => CheckStatus::Pass,
            Some(w) => CheckStatus::Fail { witness: w },
        },
        measured: Some(c_r),
    });

    let mut worst_rel: f64 = 0.0;
    let mut f2_witness = None;
    for (k, (u, h)) in fields.iter().zip(&dirs).enumerate() {
        let (fu, _) = force.eval(ops, u);
        let exact = ops.beam_inner(&fu, h);
        // Richardson-extrapolated central difference, exact for potentials quartic along the line
        let central = |eps: f64| {
            let plus = force.eval(ops, &(u + eps * h)).1;
            let minus = force.eval(ops, &(u - eps * h)).1;
            (plus - minus) / (2.0 * eps)
        };
        let eps = 1e-4;
        let fd = (4.0 * central(0.5 * eps) - central(eps)) / 3.0;
        let scale = exact.abs().max(ops.beam_norm(&fu) * ops.beam_norm(h)).max(1e-300);
        let rel = if fu.amax() == 0.0 && fd == 0.0 { 0.0 } else { (fd - exact).abs() / scale };
        if rel > 1e-5 && f2_witness.is_none() {
            f2_witness = Some(format!("sample {k}: relative mismatch {rel:e}"));
        }
        worst_rel = worst_rel.max(rel);
    }
    checks.push(AssumptionCheck {
        name: "F2".into(),
        status: match f2_witness {
            None => CheckStatus::Pass,
            Some(w) => CheckStatus::Fail { witness: w },
        },
        measured: Some(worst_rel),
    });

    let consts = force.declared_constants();
    let b4 = crate::discretization::to_dense(&ops.b4);
    let mut f3_min = f64::INFINITY;
    let mut f4_min = f64::INFINITY;
    let mut f3_witness = None;
    let mut f4_witness = None;
    let mut probe = fields.clone();
    // include fields near the Berger buckling shell ‖u_x‖² = Q/Γ
    if force.family == NonlinearFamily::Berger && force.q > 0.0 {
        for u in &fields {
            let s = ops.beam_inner(u, &spmv(&ops.b2, u));
            if s > 0.0 {
                probe.push(u * (force.q / force.gamma / s).sqrt());
                probe.push(u * (force.q / (1.5 * force.gamma) / s).sqrt());
            }
        }
    }
    for (k, u) in probe.iter().enumerate() {
        let (fu, pi) = force.eval(ops, u);
        let lap2 = ops.beam_inner(u, &(&b4 * u));
        let f3 = (1.0 - consts.nu) * lap2 + pi + consts.c;
        let f4 = ops.beam_inner(&fu, u) - consts.a1 * pi + consts.a2 + (1.0 - consts.nu) * lap2;
        let tol = 1e-12 * (1.0 + lap2 + pi.abs() + consts.c);
        if f3 < -tol && f3_witness.is_none() {
            f3_witness = Some(format!("sample {k}: value {f3:e}"));
        }
        if f4 < -tol && f4_witness.is_none() {
            f4_witness = Some(format!("sample {k}: value {f4:e}"));
        }
        f3_min = f3_min.min(f3);
        f4_min = f4_min.min(f4);
    }
    for (name, w, m) in [("F3", f3_witness, f3_min), ("F4", f4_witness, f4_min)] {
        checks.push(AssumptionCheck {
            name: name.into(),
            status: match w {
                None => CheckStatus::Pass,
                Some(w) => CheckStatus::Fail { witness: w },
            },
            measured: Some(m),
        });
    }

    // G2 on a coarser t grid; each point needs a window quadrature
    let c_fg_declared = forcing.declared_c_fg();
    let mut c_fg_measured: f64 = 0.0;
    let mut g2_witness = None;
    let stride = (grid.len() / 100).max(1);
    for &t in grid.iter().step_by(stride).chain(std::iter::once(&spec.t_max)) {
        for sigma in [0.0, 0.5 * forcing.sigma0, forcing.sigma0] {
            let val = g2_window_integral(forcing, t, sigma);
            c_fg_measured = c_fg_measured.max(val);
            if !(val <= c_fg_declared * (1.0 + 1e-9) + 1e-300) && g2_witness.is_none() {
                g2_witness = Some(format!(
                    "t = {t}, sigma = {sigma}: integral {val:e} exceeds C_fg = {c_fg_declared:e}"
                ));
            }
        }
    }
    checks.push(AssumptionCheck {
        name: "G2".into(),
        status: match g2_witness {
            None => CheckStatus::Pass,
            Some(w) => CheckStatus::Fail { witness: w },
        },
        measured: Some(c_fg_measured),
    });

    Ok(ValidationReport {
        checks,
        constants: MeasuredConstants {
            l_measured,
            l_declared,
            lipschitz_c_r: c_r,
            lower_bounds: consts,
            c_fg_measured,
            c_fg_declared,
        },
    })
}
