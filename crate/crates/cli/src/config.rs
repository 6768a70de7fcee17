//! Run configuration: one TOML file with nested sections, every default materialized on load.

use std::path::{Path, PathBuf};

use pfsi_core::cache::CacheKey;
use pfsi_core::galerkin::{GalerkinState, IntegratorSettings, Physics};
use pfsi_core::physics::{CoefficientProfile, ForcingProfile, NonlinearForce, SampleSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Basis cache file; `<out>/basis.pfsi` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    pub grid: GridConfig,
    pub basis: BasisConfig,
    pub coefficients: CoefficientProfile,
    #[serde(default = "ForcingProfile::zero")]
    pub forcing: ForcingProfile,
    #[serde(default = "NonlinearForce::zero")]
    pub nonlinearity: NonlinearForce,
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("pfsi-out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub nz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub energy_audit: EnergyAuditConfig,
    #[serde(default)]
    pub dissipativity: DissipativityConfig,
    #[serde(default)]
    pub pullback: PullbackConfig,
    #[serde(default)]
    pub validate: SampleSpec,
}

/// Initial modal data; missing trailing coefficients are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    #[default]
    Zero,
    Modal {
        #[serde(default)]
        alpha: Vec<f64>,
        #[serde(default)]
        beta: Vec<f64>,
        #[serde(default)]
        gamma: Vec<f64>,
    },
    /// One member drawn from the ball of this radius with the run seed.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "ten")]
    pub t_end: f64,
    /// `δ` of the Lyapunov column.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub initial: InitialData,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            t_end: 10.0,
            delta: default_delta(),
            initial: InitialData::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyAuditConfig {
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "ten")]
    pub t_end: f64,
    /// Repeat at `dt/2` and report the contraction factor.
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub initial: InitialData,
}

impl Default for EnergyAuditConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            t_end: 10.0,
            refine: true,
            initial: InitialData::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipativityConfig {
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "twenty")]
    pub t_end: f64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_transient")]
    pub transient_fraction: f64,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default = "default_absorb_radii")]
    pub absorb_radii: Vec<f64>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "one")]
    pub unit: f64,
}

impl Default for DissipativityConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            t_end: 20.0,
            deltas: default_deltas(),
            transient_fraction: default_transient(),
            initial: InitialData::Zero,
            absorb_radii: default_absorb_radii(),
            count: default_count(),
            margin: default_margin(),
            unit: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackConfig {
    #[serde(default)]
    pub t: f64,
    /// Origins, strictly decreasing.
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_cluster_tol")]
    pub cluster_tol: f64,
    #[serde(default = "default_covering_radii")]
    pub covering_radii: Vec<f64>,
    #[serde(default = "default_absorb_radii")]
    pub absorb_radii: Vec<f64>,
    #[serde(default = "twenty")]
    pub absorb_horizon: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "one")]
    pub unit: f64,
}

impl Default for PullbackConfig {
    fn default() -> Self {
        Self {
            t: 0.0,
            taus: default_taus(),
            radius: 1.0,
            count: default_count(),
            cluster_tol: default_cluster_tol(),
            covering_radii: default_covering_radii(),
            absorb_radii: default_absorb_radii(),
            absorb_horizon: 20.0,
            margin: default_margin(),
            unit: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn twenty() -> f64 {
    20.0
}
fn yes() -> bool {
    true
}
fn default_delta() -> f64 {
    0.01
}
fn default_deltas() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}
fn default_transient() -> f64 {
    0.05
}
fn default_absorb_radii() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_count() -> usize {
    64
}
fn default_margin() -> f64 {
    0.1
}
fn default_taus() -> Vec<f64> {
    vec![-1.0, -2.0, -3.0, -4.0, -5.0]
}
fn default_cluster_tol() -> f64 {
    1e-6
}
fn default_covering_radii() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}

fn bad(what: &str, why: &str) -> CliError {
    CliError::Config(format!("{what}: {why}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolved configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn physics(&self) -> Physics {
        Physics {
            coefficients: self.coefficients.clone(),
            forcing: self.forcing.clone(),
            nonlinearity: self.nonlinearity.clone(),
        }
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey {
            nx: self.grid.nx,
            nz: self.grid.nz,
            m: self.basis.m,
            n: self.basis.n,
        }
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out.join("basis.pfsi"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: pfsi_core::FsiError| CliError::Config(e.to_string());
        if self.grid.nx < 4 || self.grid.nz < 4 {
            return Err(bad("grid", "nx and nz must be at least 4"));
        }
        if self.basis.m == 0 || self.basis.n == 0 {
            return Err(bad("basis", "m and n must be at least 1"));
        }
        if self.basis.n >= self.grid.nx {
            return Err(bad("basis.n", "must be below grid.nx"));
        }
        self.physics().validate().map_err(cfg_err)?;
        self.integrator.validate().map_err(cfg_err)?;
        self.experiment.validate.validate().map_err(cfg_err)?;
        let e = &self.experiment;
        for (name, tau, t_end) in [
            ("simulate", e.simulate.tau, e.simulate.t_end),
            ("energy_audit", e.energy_audit.tau, e.energy_audit.t_end),
            ("dissipativity", e.dissipativity.tau, e.dissipativity.t_end),
        ] {
            if !(t_end > tau) {
                return Err(bad(name, "t_end must follow tau"));
            }
        }
        for init in [&e.simulate.initial, &e.energy_audit.initial, &e.dissipativity.initial] {
            match init {
                InitialData::Modal { alpha, beta, gamma } => {
                    if alpha.len() > self.basis.m || beta.len() > self.basis.n || gamma.len() > self.basis.n {
                        return Err(bad("initial", "more coefficients than modes"));
                    }
                    if alpha.iter().chain(beta).chain(gamma).any(|x| !x.is_finite()) {
                        return Err(bad("initial", "coefficients must be finite"));
                    }
                }
                InitialData::Ball { radius } if !(*radius >= 0.0) => {
                    return Err(bad("initial.radius", "must be nonnegative"));
                }
                _ => {}
            }
        }
        if !(e.simulate.delta >= 0.0) {
            return Err(bad("simulate.delta", "must be nonnegative"));
        }
        let d = &e.dissipativity;
        if d.deltas.is_empty() || d.deltas.iter().any(|x| !(*x >= 0.0)) {
            return Err(bad("dissipativity.deltas", "need nonnegative values"));
        }
        if !(0.0..1.0).contains(&d.transient_fraction) {
            return Err(bad("dissipativity.transient_fraction", "must lie in [0, 1)"));
        }
        if d.count == 0 || d.absorb_radii.is_empty() || d.absorb_radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(bad("dissipativity", "need count >= 1 and nonnegative radii"));
        }
        let p = &e.pullback;
        if p.taus.is_empty() {
            return Err(bad("pullback.taus", "need at least one origin"));
        }
        if p.taus.windows(2).any(|w| !(w[1] < w[0])) || p.taus[0] > p.t {
            return Err(bad("pullback.taus", "must be strictly decreasing and not after t"));
        }
        if p.count == 0 || !(p.radius >= 0.0) || !(p.cluster_tol > 0.0) {
            return Err(bad("pullback", "need count >= 1, radius >= 0, cluster_tol > 0"));
        }
        if p.covering_radii.iter().any(|r| !(*r >= 0.0)) || p.absorb_radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(bad("pullback", "radii must be nonnegative"));
        }
        if !(p.absorb_horizon > 0.0) {
            return Err(bad("pullback.absorb_horizon", "must be positive"));
        }
        Ok(())
    }
}

/// Modal state for `init` at time `tau`.
pub fn initial_state(
    init: &InitialData,
    run: &pfsi_core::galerkin::ProcessRun,
    tau: f64,
    seed: u64,
) -> Result<GalerkinState, CliError> {
    let (m, n) = (run.coup.m(), run.coup.n());
    match init {
        InitialData::Zero => Ok(GalerkinState::zeros(tau, m, n)),
        InitialData::Modal { alpha, beta, gamma } => {
            let mut s = GalerkinState::zeros(tau, m, n);
            for (i, &a) in alpha.iter().enumerate() {
                s.alpha[i] = a;
            }
            for (j, &b) in beta.iter().enumerate() {
                s.beta[j] = b;
            }
            for (j, &g) in gamma.iter().enumerate() {
                s.gamma[j] = g;
            }
            Ok(s)
        }
        InitialData::Ball { radius } => {
            let ens = pfsi_core::pullback_lab::sample_ball(run, tau, *radius, 1, seed)?;
            Ok(ens.members.into_iter().next().expect("one member"))
        }
    }
}
