//! Ensemble experiments on the process: balls in `H_τ`, Hausdorff semidistances,
//! absorbing times, sampled ω-limits and covering numbers.

use log::warn;
use nalgebra::{Cholesky, DVector};
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{ht_distance, ht_norm_at, ht_weight_matrix, least_squares_slope};
use crate::error::{invalid, FsiError, Result};
use crate::galerkin::{GalerkinState, ProcessRun};

/// Members sampled in the ball `B_τ(R)` and, once evolved, their states at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub tau: f64,
    pub radius: f64,
    pub members: Vec<GalerkinState>,
    pub evolved: Vec<GalerkinState>,
}

/// Draw `count` states in `B_τ(R)`: directions uniform on the `H_τ` unit sphere, radii `~ U[0, R]`.
pub fn sample_ball(run: &ProcessRun, tau: f64, radius: f64, count: usize, seed: u64) -> Result<Ensemble> {
    if count == 0 {
        return Err(invalid("count", "must be at least 1"));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(invalid("radius", "must be finite and nonnegative"));
    }
    let (m, n) = (run.coup.m(), run.coup.n());
    let dim = m + 2 * n;
    let w = ht_weight_matrix(run, tau);
    let chol = Cholesky::new(w).ok_or_else(|| {
        FsiError::SingularSaddlePoint("phase-space weight matrix is not positive definite".into())
    })?;
    let lt = chol.l().transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members = Vec::with_capacity(count);
    for _ in 0..count {
        let mut x = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = x.norm();
        if norm > 0.0 {
            x /= norm;
        }
        let r = radius * rng.random::<f64>();
        // yᵀWy = |x|² when y = L⁻ᵀx
        let y = lt
            .solve_upper_triangular(&x)
            .expect("Cholesky factor is nonsingular")
            * r;
        members.push(GalerkinState {
            t: tau,
            alpha: y.rows(0, m).into_owned(),
            beta: y.rows(m, n).into_owned(),
            gamma: y.rows(m + n, n).into_owned(),
        });
    }
    Ok(Ensemble {
        tau,
        radius,
        members,
        evolved: Vec::new(),
    })
}

/// Evolve every member to `t` in parallel; fills `evolved`.
pub fn evolve_ensemble(run: &ProcessRun, ensemble: &mut Ensemble, t: f64) -> Result<()> {
    ensemble.evolved = ensemble
        .members
        .par_iter()
        .map(|s| run.advance(s, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(())
}

/// `sup_{a∈A} inf_{b∈B} ‖a − b‖_{H_t}`.
pub fn hausdorff_semidistance(
    run: &ProcessRun,
    a: &[GalerkinState],
    b: &[GalerkinState],
    t: f64,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FsiError::EmptySet);
    }
    let dims = |s: &GalerkinState| (s.alpha.len(), s.beta.len(), s.gamma.len());
    let d0 = dims(&a[0]);
    if let Some(bad) = a.iter().chain(b).find(|s| dims(s) != d0) {
        return Err(FsiError::SizeMismatch {
            what: "modal dimension",
            expected: d0.0 + d0.1 + d0.2,
            got: bad.alpha.len() + bad.beta.len() + bad.gamma.len(),
        });
    }
    let mut sup: f64 = 0.0;
    for x in a {
        let inf = b
            .iter()
            .map(|y| ht_distance(run, x, y, t))
            .fold(f64::INFINITY, f64::min);
        sup = sup.max(inf);
    }
    Ok(sup)
}

/// Ensemble recipe shared by the origin sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub radius: f64,
    pub count: usize,
    pub seed: u64,
}

impl Default for BallSpec {
    fn default() -> Self {
        Self {
            radius: 1.0,
            count: 64,
            seed: 0,
        }
    }
}

fn evolved_from(run: &ProcessRun, tau: f64, t: f64, spec: &BallSpec) -> Result<Vec<GalerkinState>> {
    let mut ens = sample_ball(run, tau, spec.radius, spec.count, spec.seed)?;
    evolve_ensemble(run, &mut ens, t)?;
    Ok(ens.evolved)
}

fn check_origins(taus: &[f64], t: f64, min: usize) -> Result<()> {
    if taus.len() < min {
        return Err(invalid("taus", "too few origins"));
    }
    if taus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("taus", "origins must be strictly decreasing"));
    }
    if taus[0] > t {
        return Err(invalid("taus", "origins must not follow the target time"));
    }
    Ok(())
}

/// Greedy cluster representatives in member order.
fn cluster(run: &ProcessRun, set: &[GalerkinState], t: f64, tol: f64) -> Vec<GalerkinState> {
    let mut reps: Vec<GalerkinState> = Vec::new();
    for s in set {
        if !reps.iter().any(|r| ht_distance(run, s, r, t) <= tol) {
            reps.push(s.clone());
        }
    }
    reps
}

/// Sampled pullback ω-limit at `t`: clusters of the earliest origin that recur in the
/// second earliest.
pub fn omega_limit_sample(
    run: &ProcessRun,
    t: f64,
    taus: &[f64],
    spec: &BallSpec,
    cluster_tol: f64,
) -> Result<Vec<GalerkinState>> {
    check_origins(taus, t, 3)?;
    if !(cluster_tol > 0.0) {
        return Err(invalid("cluster_tol", "must be positive"));
    }
    let k = taus.len();
    let earliest = cluster(run, &evolved_from(run, taus[k - 1], t, spec)?, t, cluster_tol);
    let second = cluster(run, &evolved_from(run, taus[k - 2], t, spec)?, t, cluster_tol);
    let recurring: Vec<GalerkinState> = earliest
        .iter()
        .filter(|r| second.iter().any(|s| ht_distance(run, r, s, t) <= cluster_tol))
        .cloned()
        .collect();
    if recurring.is_empty() {
        warn!("no cluster recurs across the two earliest origins; returning the earliest clusters");
        return Ok(earliest);
    }
    Ok(recurring)
}

/// `δ_t(U(t, τ_k)B_{τ_k}, K_t)` against the origins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemidistanceSeries {
    pub t: f64,
    /// `(τ_k, δ_k)` with `τ_k` strictly decreasing.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log δ` against `t − τ`; `None` with fewer than two positive values.
    pub log_slope: Option<f64>,
    /// `δ` strictly decreasing along the origins.
    pub strictly_decreasing: bool,
}

pub fn attraction_curve(
    run: &ProcessRun,
    k_t: &[GalerkinState],
    t: f64,
    taus: &[f64],
    spec: &BallSpec,
) -> Result<SemidistanceSeries> {
    if k_t.is_empty() {
        return Err(FsiError::EmptySet);
    }
    check_origins(taus, t, 1)?;
    if taus.len() == 1 {
        warn!("single origin: the attraction curve has one point");
    }
    let mut points = Vec::with_capacity(taus.len());
    for &tau in taus {
        let evolved = evolved_from(run, tau, t, spec)?;
        points.push((tau, hausdorff_semidistance(run, &evolved, k_t, t)?));
    }
    Ok(series(t, points))
}

/// Build the series statistics from `(τ, δ)` pairs.
pub fn series(t: f64, points: Vec<(f64, f64)>) -> SemidistanceSeries {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(tau, d)| (t - tau, d.ln()))
        .collect();
    let strictly_decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    SemidistanceSeries {
        t,
        log_slope: least_squares_slope(&logs),
        strictly_decreasing,
        points,
    }
}

/// Greedy ball-cover counts of `set` in the `H_t` norm, one per radius.
///
/// Centers are taken in member order; a cover at a smaller radius also covers at a larger
/// one, so counts are reported as a running minimum over ascending radii.
pub fn covering_numbers(run: &ProcessRun, set: &[GalerkinState], t: f64, radii: &[f64]) -> Result<Vec<usize>> {
    if set.is_empty() {
        return Err(FsiError::EmptySet);
    }
    if radii.iter().any(|r| !(*r >= 0.0)) {
        return Err(invalid("radii", "must be nonnegative"));
    }
    let greedy = |r: f64| cluster(run, set, t, r).len();
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let mut counts = vec![0; radii.len()];
    let mut best = usize::MAX;
    for i in order {
        best = best.min(greedy(radii[i]));
        counts[i] = best;
    }
    Ok(counts)
}

/// Settings of the absorbing-time experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbConfig {
    pub count: usize,
    pub seed: u64,
    /// Relative slack on the fitted asymptote.
    pub margin: f64,
    /// Additive radius of the absorbing ball beyond the asymptote.
    pub unit: f64,
}

impl Default for AbsorbConfig {
    fn default() -> Self {
        Self {
            count: 64,
            seed: 0,
            margin: 0.1,
            unit: 1.0,
        }
    }
}

/// Envelope fit `Q e^{−ω s} + K` for one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbEntry {
    pub radius: f64,
    /// Entering time `Θ̂(R)`; `None` when censored.
    pub theta: Option<f64>,
    pub censored: bool,
    /// Smallest `Q` making the fitted curve dominate the envelope.
    pub q_hat: f64,
    pub omega_hat: f64,
    pub k_hat: f64,
    pub threshold: f64,
    /// Elapsed times `t_k − τ`.
    pub elapsed: Vec<f64>,
    /// Max over members of `‖U(t_k, τ)W‖_{H_{t_k}}`.
    pub envelope: Vec<f64>,
    /// Per-member norm series, member-major.
    pub norms: Vec<Vec<f64>>,
}

impl AbsorbEntry {
    pub fn bound(&self, s: f64) -> f64 {
        self.q_hat * (-self.omega_hat * s).exp() + self.k_hat
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbReport {
    pub tau: f64,
    pub t: f64,
    pub entries: Vec<AbsorbEntry>,
}

impl AbsorbReport {
    pub fn any_censored(&self) -> bool {
        self.entries.iter().any(|e| e.censored)
    }
}

/// Weighted least squares of `y ≈ Q x + K`, `x = e^{−ω s}`, relative weights, `Q, K ≥ 0`.
fn fit_linear(s: &[f64], y: &[f64], omega: f64) -> (f64, f64, f64) {
    let w: Vec<f64> = y.iter().map(|v| 1.0 / v.max(1e-300).powi(2)).collect();
    let x: Vec<f64> = s.iter().map(|t| (-omega * t).exp()).collect();
    let (mut sw, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..s.len() {
        sw += w[i];
        sx += w[i] * x[i];
        sxx += w[i] * x[i] * x[i];
        sy += w[i] * y[i];
        sxy += w[i] * x[i] * y[i];
    }
    let det = sw * sxx - sx * sx;
    let (mut q, mut k) = if det.abs() > 1e-14 * sw * sxx {
        ((sw * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    } else {
        (0.0, sy / sw)
    };
    if k < 0.0 {
        k = 0.0;
        q = sxy / sxx;
    }
    if q < 0.0 {
        q = 0.0;
        k = sy / sw;
    }
    let sse = (0..s.len()).map(|i| w[i] * (q * x[i] + k - y[i]).powi(2)).sum();
    (q, k, sse)
}

/// Variable-projection fit of `(ω, Q, K)`: log-spaced scan over `ω` then golden-section refinement.
fn fit_envelope(s: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let span = s.last().copied().unwrap_or(1.0).max(1e-12);
    let lo = (1e-3 / span).ln();
    let hi = (1e3 / span).ln();
    let sse = |lw: f64| fit_linear(s, y, lw.exp()).2;
    let grid = 200;
    let mut best = (lo, f64::INFINITY);
    for k in 0..=grid {
        let lw = lo + (hi - lo) * k as f64 / grid as f64;
        let e = sse(lw);
        if e < best.1 {
            best = (lw, e);
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let omega = (0.5 * (a + b)).exp();
    let (q, k, _) = fit_linear(s, y, omega);
    (omega, q, k)
}

/// Fitted `(ω̂, K̂)` raised so that `K̂` covers the envelope once the fitted transient
/// `Q e^{−ω s}` has fallen below 1% of the fitted asymptote.
fn dissipative_fit(s: &[f64], y: &[f64]) -> (f64, f64) {
    if y.iter().all(|&e| e == 0.0) {
        return (0.0, 0.0);
    }
    let (omega, q, k) = fit_envelope(s, y);
    if k <= 0.0 || q <= 0.0 {
        return (omega, k);
    }
    let s_tr = (q / (1e-2 * k)).ln() / omega;
    let tail = s
        .iter()
        .zip(y)
        .filter(|(&t, _)| t >= s_tr)
        .map(|(_, &e)| e)
        .fold(0.0, f64::max);
    (omega, k.max(tail))
}

/// For each radius, evolve a ball from `τ` to `t`, fit the dissipative envelope and find
/// the first elapsed time after which every member stays inside the absorbing ball
/// of radius `K̂(1 + margin) + unit`.
pub fn estimate_absorbing(
    run: &ProcessRun,
    radii: &[f64],
    tau: f64,
    t: f64,
    config: &AbsorbConfig,
) -> Result<AbsorbReport> {
    if radii.is_empty() {
        return Err(FsiError::EmptySet);
    }
    if !(t > tau) {
        return Err(invalid("t", "must follow the origin"));
    }
    if !(config.margin >= 0.0 && config.unit >= 0.0) {
        return Err(invalid("margin/unit", "must be nonnegative"));
    }
    let mut entries = Vec::with_capacity(radii.len());
    for &radius in radii {
        let ens = sample_ball(run, tau, radius, config.count, config.seed)?;
        let trajs = ens
            .members
            .par_iter()
            .map(|s| run.evolve(s, t))
            .collect::<Result<Vec<_>>>()?;
        let times = trajs[0].times();
        let norms: Vec<Vec<f64>> = trajs
            .iter()
            .map(|tr| tr.states.iter().map(|s| ht_norm_at(run, s, s.t)).collect())
            .collect();
        let elapsed: Vec<f64> = times.iter().map(|x| x - tau).collect();
        let envelope: Vec<f64> = (0..times.len())
            .map(|k| norms.iter().map(|n| n[k]).fold(0.0, f64::max))
            .collect();

        let (omega_hat, k_hat) = dissipative_fit(&elapsed, &envelope);
        let q_hat = elapsed
            .iter()
            .zip(&envelope)
            .map(|(&s, &e)| (e - k_hat).max(0.0) * (omega_hat * s).exp())
            .fold(0.0, f64::max);
        let threshold = k_hat * (1.0 + config.margin) + config.unit;
        // flattened: the horizon spans the fitted transient down to 1% of its amplitude
        let span = elapsed.last().copied().unwrap_or(0.0);
        let flattened = envelope.iter().all(|&e| e == 0.0) || omega_hat * span >= 100f64.ln();
        let last_above = envelope.iter().rposition(|&e| e > threshold);
        let (theta, censored) = match last_above {
            _ if !flattened => (None, true),
            None => (Some(0.0), false),
            Some(k) if k + 1 < elapsed.len() => (Some(elapsed[k + 1]), false),
            Some(_) => (None, true),
        };
        if censored {
            warn!("radius {radius}: envelope not flattened or ensemble not absorbed within the horizon");
        }
        entries.push(AbsorbEntry {
            radius,
            theta,
            censored,
            q_hat,
            omega_hat,
            k_hat,
            threshold,
            elapsed,
            envelope,
            norms,
        });
    }
    Ok(AbsorbReport { tau, t, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_fit_recovers_exponential_with_offset() {
        let s: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = s.iter().map(|t| 3.0 * (-0.7 * t).exp() + 0.2).collect();
        let (w, _, k) = fit_envelope(&s, &y);
        assert!((w - 0.7).abs() < 1e-6, "{w}");
        assert!((k - 0.2).abs() < 1e-6, "{k}");
    }

    #[test]
    fn envelope_fit_of_pure_decay_has_no_offset() {
        let s: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = s.iter().map(|t| 2.0 * (-0.4 * t).exp()).collect();
        let (w, q, k) = fit_envelope(&s, &y);
        assert!((q - 2.0).abs() < 1e-6);
        assert!((w - 0.4).abs() < 1e-6);
        assert!(k < 1e-9);
        assert_eq!(dissipative_fit(&s, &y).1, k);
    }

    #[test]
    fn oscillating_tail_is_covered() {
        let s: Vec<f64> = (0..2000).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = s.iter().map(|t| (-3.0 * t).exp() + 0.01 * (1.5 + (2.0 * t).sin())).collect();
        let (w, k) = dissipative_fit(&s, &y);
        assert!(w > 0.0);
        let late = y.iter().skip(1000).copied().fold(0.0, f64::max);
        assert!(k >= late);
    }
}
