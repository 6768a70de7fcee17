//! Subcommand bodies. Each writes its artifacts into `out` and reports whether a fit was censored.

use std::path::Path;

use log::{info, warn};
use pfsi_core::cache::{load_or_build, CacheStatus};
use pfsi_core::diagnostics::{energy_balance_residual, ht_norm_at, lyapunov, EnergyReport};
use pfsi_core::galerkin::{IntegratorSettings, Model, ProcessRun, Trajectory};
use pfsi_core::physics::validate_assumptions;
use pfsi_core::pullback_lab::{
    attraction_curve, covering_numbers, estimate_absorbing, evolve_ensemble, omega_limit_sample,
    sample_ball, AbsorbConfig, AbsorbReport, BallSpec,
};
use serde_json::json;

use crate::config::{initial_state, RunConfig};
use crate::output::{write_columns, write_json, write_trajectory};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Outcome {
    pub censored: bool,
    pub cache_sha256: Option<String>,
}

pub fn load_model(cfg: &RunConfig) -> Result<(Model, CacheStatus, String), CliError> {
    let path = cfg.cache_path();
    let (model, status, sum) = load_or_build(&path, cfg.cache_key())?;
    match status {
        CacheStatus::Hit => info!("cache hit: {} sha256 {sum}", path.display()),
        CacheStatus::Built => info!("cache built: {} sha256 {sum}", path.display()),
    }
    Ok((model, status, sum))
}

pub fn cmd_basis(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (model, status, sum) = load_model(cfg)?;
    let status = match status {
        CacheStatus::Hit => "hit",
        CacheStatus::Built => "built",
    };
    println!("cache {status}: {} (sha256 {sum})", cfg.cache_path().display());
    let modes = |v: Vec<(f64, f64)>| v.into_iter().map(|(e, r)| json!({"eigenvalue": e, "residual": r})).collect::<Vec<_>>();
    write_json(
        &out.join("basis.json"),
        &json!({
            "cache": cfg.cache_path(),
            "cache_sha256": sum,
            "stokes": modes(model.stokes.modes.iter().map(|m| (m.lambda, m.residual)).collect()),
            "plate": modes(model.plate.modes.iter().map(|m| (m.kappa, m.residual)).collect()),
        }),
    )?;
    Ok(Outcome {
        censored: false,
        cache_sha256: Some(sum),
    })
}

fn energy_summary(report: &EnergyReport) -> serde_json::Value {
    json!({
        "residual": report.residual,
        "relative_residual": if report.script_e_initial != 0.0 { report.residual / report.script_e_initial.abs() } else { 0.0 },
        "script_e_initial": report.script_e_initial,
        "dissipation_integral": report.dissipation_integral,
        "mu_correction_integral": report.mu_integral,
        "rho_correction_integral": report.rho_integral,
        "work_integral": report.work_integral,
    })
}

fn evolve(run: &ProcessRun, cfg: &RunConfig, init: &crate::config::InitialData, tau: f64, t_end: f64) -> Result<Trajectory, CliError> {
    let start = initial_state(init, run, tau, cfg.seed)?;
    Ok(run.evolve(&start, t_end)?)
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (model, _, sum) = load_model(cfg)?;
    let physics = cfg.physics();
    let run = model.run(&physics, &cfg.integrator)?;
    let sc = &cfg.experiment.simulate;
    let traj = evolve(&run, cfg, &sc.initial, sc.tau, sc.t_end)?;
    write_trajectory(&out.join("trajectory.csv"), &run, &traj, sc.delta)?;
    let energy = if traj.states.len() >= 3 {
        Some(energy_summary(&energy_balance_residual(&run, &traj)?))
    } else {
        None
    };
    write_json(
        &out.join("diagnostics.json"),
        &json!({
            "steps": traj.states.len(),
            "halvings": traj.halvings,
            "energy_balance": energy,
        }),
    )?;
    println!("simulate: {} steps to t = {}", traj.states.len() - 1, traj.last().t);
    Ok(Outcome {
        censored: false,
        cache_sha256: Some(sum),
    })
}

pub fn cmd_energy_audit(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (model, _, sum) = load_model(cfg)?;
    let physics = cfg.physics();
    let ec = &cfg.experiment.energy_audit;
    let run = model.run(&physics, &cfg.integrator)?;
    let traj = evolve(&run, cfg, &ec.initial, ec.tau, ec.t_end)?;
    let coarse = energy_balance_residual(&run, &traj)?;
    write_trajectory(&out.join("trajectory.csv"), &run, &traj, cfg.experiment.simulate.delta)?;
    let rows: Vec<Vec<f64>> = coarse.steps.iter().zip(&coarse.residuals).map(|(s, r)| vec![s.t, *r]).collect();
    write_columns(&out.join("residual.dat"), &["t", "balance_residual"], &rows)?;

    let refined = if ec.refine {
        let fine_settings = IntegratorSettings {
            dt: cfg.integrator.dt / 2.0,
            ..cfg.integrator.clone()
        };
        let fine_run = model.run(&physics, &fine_settings)?;
        let fine = evolve(&fine_run, cfg, &ec.initial, ec.tau, ec.t_end)?;
        Some(energy_balance_residual(&fine_run, &fine)?)
    } else {
        None
    };
    let ratio = refined.as_ref().map(|f| coarse.residual / f.residual);
    write_json(
        &out.join("energy.json"),
        &json!({
            "dt": cfg.integrator.dt,
            "coarse": energy_summary(&coarse),
            "refined": refined.as_ref().map(energy_summary),
            "contraction": ratio,
            "order": ratio.map(|r| r.log2()),
        }),
    )?;
    println!(
        "energy-audit: residual {:.3e} (relative {:.3e}){}",
        coarse.residual,
        coarse.residual / coarse.script_e_initial.abs().max(f64::MIN_POSITIVE),
        ratio.map(|r| format!(", contraction {r:.3}")).unwrap_or_default()
    );
    Ok(Outcome {
        censored: false,
        cache_sha256: Some(sum),
    })
}

fn absorb_outputs(out: &Path, report: &AbsorbReport) -> Result<(), CliError> {
    let entries: Vec<serde_json::Value> = report
        .entries
        .iter()
        .map(|e| {
            json!({
                "radius": e.radius,
                "theta": e.theta,
                "censored": e.censored,
                "q_hat": e.q_hat,
                "omega_hat": e.omega_hat,
                "k_hat": e.k_hat,
                "threshold": e.threshold,
            })
        })
        .collect();
    write_json(
        &out.join("absorbing.json"),
        &json!({"tau": report.tau, "t": report.t, "entries": entries, "censored": report.any_censored()}),
    )?;
    let rows: Vec<Vec<f64>> = report
        .entries
        .iter()
        .flat_map(|e| {
            e.elapsed
                .iter()
                .zip(&e.envelope)
                .map(move |(&s, &v)| vec![e.radius, s, v, e.bound(s)])
        })
        .collect();
    write_columns(&out.join("envelope.dat"), &["radius", "elapsed", "envelope", "fitted_bound"], &rows)?;
    if let Some(first) = report.entries.first() {
        let dir = out.join("members");
        std::fs::create_dir_all(&dir)?;
        for (k, norms) in first.norms.iter().enumerate() {
            let rows: Vec<Vec<f64>> = first.elapsed.iter().zip(norms).map(|(&s, &v)| vec![report.tau + s, v]).collect();
            let mut w = csv::Writer::from_path(dir.join(format!("member_{k:03}.csv")))?;
            w.write_record(["t", "ht_norm"])?;
            for r in rows {
                w.write_record([r[0].to_string(), r[1].to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn cmd_dissipativity(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (model, _, sum) = load_model(cfg)?;
    let physics = cfg.physics();
    let dc = &cfg.experiment.dissipativity;
    let run = model.run(&physics, &cfg.integrator)?;
    let traj = evolve(&run, cfg, &dc.initial, dc.tau, dc.t_end)?;
    let mut sweep = Vec::new();
    let mut first_failing = None;
    for &delta in &dc.deltas {
        let r = lyapunov(&run, &traj, delta, dc.transient_fraction)?;
        if !r.sandwich_holds && first_failing.is_none() {
            first_failing = Some(delta);
        }
        sweep.push(json!({
            "delta": r.delta,
            "theta": r.theta,
            "admissible": r.sandwich.is_some(),
            "sandwich": r.sandwich,
            "sandwich_holds": r.sandwich_holds,
            "omega_hat": r.omega_hat,
            "forcing_constant": r.forcing_constant,
            "non_increasing_after_transient": r.non_increasing,
            "transient_steps": r.transient_steps,
        }));
    }
    if let Some(d) = first_failing {
        warn!("sandwich bound fails first at delta = {d}");
    }
    let absorb = estimate_absorbing(
        &run,
        &dc.absorb_radii,
        dc.tau,
        dc.t_end,
        &AbsorbConfig {
            count: dc.count,
            seed: cfg.seed,
            margin: dc.margin,
            unit: dc.unit,
        },
    )?;
    absorb_outputs(out, &absorb)?;
    write_json(
        &out.join("lyapunov.json"),
        &json!({"sweep": sweep, "first_failing_delta": first_failing}),
    )?;
    let censored = absorb.any_censored();
    println!(
        "dissipativity: {} deltas, first failing {:?}, absorbing {}",
        dc.deltas.len(),
        first_failing,
        if censored { "censored" } else { "complete" }
    );
    Ok(Outcome {
        censored,
        cache_sha256: Some(sum),
    })
}

pub fn cmd_pullback(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (model, _, sum) = load_model(cfg)?;
    let physics = cfg.physics();
    let pc = &cfg.experiment.pullback;
    let run = model.run(&physics, &cfg.integrator)?;
    let spec = BallSpec {
        radius: pc.radius,
        count: pc.count,
        seed: cfg.seed,
    };

    let k_t = if pc.taus.len() >= 3 {
        omega_limit_sample(&run, pc.t, &pc.taus, &spec, pc.cluster_tol)?
    } else {
        warn!("fewer than 3 origins: the reference set is the evolved ensemble of the earliest origin");
        let mut e = sample_ball(&run, *pc.taus.last().unwrap(), pc.radius, pc.count, cfg.seed)?;
        evolve_ensemble(&run, &mut e, pc.t)?;
        e.evolved
    };
    let curve = attraction_curve(&run, &k_t, pc.t, &pc.taus, &spec)?;
    let rows: Vec<Vec<f64>> = curve.points.iter().map(|&(tau, d)| vec![tau, d]).collect();
    write_columns(&out.join("attraction.dat"), &["tau", "delta"], &rows)?;

    let mut covering_rows = Vec::new();
    let mut covering = Vec::new();
    for &tau in &pc.taus {
        let mut e = sample_ball(&run, tau, pc.radius, pc.count, cfg.seed)?;
        evolve_ensemble(&run, &mut e, pc.t)?;
        let counts = covering_numbers(&run, &e.evolved, pc.t, &pc.covering_radii)?;
        for (&r, &c) in pc.covering_radii.iter().zip(&counts) {
            covering_rows.push(vec![tau, r, c as f64]);
        }
        covering.push(json!({"tau": tau, "counts": counts}));
    }
    write_columns(&out.join("covering.dat"), &["tau", "radius", "count"], &covering_rows)?;

    let tau0 = pc.t - pc.absorb_horizon;
    let absorb = estimate_absorbing(
        &run,
        &pc.absorb_radii,
        tau0,
        pc.t,
        &AbsorbConfig {
            count: pc.count,
            seed: cfg.seed,
            margin: pc.margin,
            unit: pc.unit,
        },
    )?;
    absorb_outputs(out, &absorb)?;
    let censored = absorb.any_censored();
    write_json(
        &out.join("results.json"),
        &json!({
            "t": pc.t,
            "reference_set": {
                "size": k_t.len(),
                "ht_norms": k_t.iter().map(|s| ht_norm_at(&run, s, pc.t)).collect::<Vec<_>>(),
            },
            "series": curve,
            "covering_surrogate": {
                "note": "greedy covering numbers; a finite surrogate for the Kuratowski measure, not an estimate of it",
                "radii": pc.covering_radii,
                "per_origin": covering,
            },
            "fits": absorb.entries.iter().map(|e| json!({
                "radius": e.radius, "omega_hat": e.omega_hat, "k_hat": e.k_hat, "q_hat": e.q_hat, "theta": e.theta,
            })).collect::<Vec<_>>(),
            "censored": censored,
        }),
    )?;
    println!(
        "pullback: {} origins, reference set of {}, strictly decreasing {}{}",
        curve.points.len(),
        k_t.len(),
        curve.strictly_decreasing,
        if censored { ", absorbing fit censored" } else { "" }
    );
    Ok(Outcome {
        censored,
        cache_sha256: Some(sum),
    })
}

pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (model, _, sum) = load_model(cfg)?;
    let report = validate_assumptions(
        &model.ops,
        &model.plate,
        &cfg.coefficients,
        &cfg.forcing,
        &cfg.nonlinearity,
        &cfg.experiment.validate,
    )?;
    for c in &report.checks {
        let status = match &c.status {
            pfsi_core::physics::CheckStatus::Pass => "pass".to_string(),
            pfsi_core::physics::CheckStatus::Fail { witness } => format!("FAIL ({witness})"),
            pfsi_core::physics::CheckStatus::NotApplicable { reason } => format!("n/a ({reason})"),
        };
        println!("{:>3}: {status}", c.name);
    }
    if !report.all_passed() {
        warn!("some assumptions failed; see assumptions.json");
    }
    write_json(&out.join("assumptions.json"), &report)?;
    Ok(Outcome {
        censored: false,
        cache_sha256: Some(sum),
    })
}
