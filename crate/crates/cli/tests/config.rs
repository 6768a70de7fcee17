use std::path::Path;

use pfsi_cli::config::{InitialData, RunConfig};
use pfsi_cli::CliError;

const MINIMAL: &str = r#"
[grid]
nx = 8
nz = 8

[basis]
m = 3
n = 3

[coefficients]
family = "constant"
mu0 = 1.0
rho0 = 1.0

[integrator]
dt = 0.01
"#;

#[test]
fn defaults_are_materialized_and_round_trip() {
    let cfg = RunConfig::parse(MINIMAL).unwrap();
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.experiment.pullback.count, 64);
    assert_eq!(cfg.experiment.dissipativity.deltas, vec![0.01, 0.1, 1.0]);
    assert_eq!(cfg.experiment.validate.radius, 1.0);
    assert_eq!(cfg.integrator.tol, 1e-11);
    let text = cfg.to_toml();
    for key in ["kappa_c", "sigma0", "max_halvings", "cluster_tol", "t_points", "paper_literal_damping"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
    let back = RunConfig::parse(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml(), text);
}

#[test]
fn shipped_configs_round_trip() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["free_decay.toml", "forced_berger.toml"] {
        let cfg = RunConfig::load(&root.join(name)).unwrap();
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
}

#[test]
fn tagged_initial_data() {
    let text = format!(
        "{MINIMAL}\n[experiment.simulate]\ninitial = {{ kind = \"modal\", alpha = [1.0], gamma = [0.0, 2.0] }}\n"
    );
    let cfg = RunConfig::parse(&text).unwrap();
    assert_eq!(
        cfg.experiment.simulate.initial,
        InitialData::Modal {
            alpha: vec![1.0],
            beta: vec![],
            gamma: vec![0.0, 2.0]
        }
    );
    assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
}

fn rejects(text: &str) {
    assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
}

#[test]
fn invalid_configs_are_config_errors() {
    rejects("[grid]\nnx = 8\n");
    rejects(&MINIMAL.replace("family = \"constant\"", "family = \"quadratic\""));
    rejects(&MINIMAL.replace("mu0 = 1.0", "mu0 = -1.0"));
    rejects(&MINIMAL.replace("dt = 0.01", "dt = 0.0"));
    rejects(&MINIMAL.replace("m = 3", "m = 0"));
    rejects(&format!("{MINIMAL}\nunknown_key = 1\n"));
    rejects(&format!("{MINIMAL}\n[experiment.pullback]\ntaus = [-2.0, -1.0]\n"));
    rejects(&format!("{MINIMAL}\n[experiment.simulate]\ninitial = {{ kind = \"modal\", alpha = [1, 2, 3, 4] }}\n"));
    rejects(&format!("{MINIMAL}\n[nonlinearity]\nfamily = \"berger\"\ngamma = 0.0\n"));
}
