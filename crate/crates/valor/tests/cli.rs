//! End-to-end checks of the command-line interface.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_valor"))
}

#[test]
fn sat_decide_reports_and_exits_cleanly() {
    let dir = std::env::temp_dir().join("valor-cli-sat");
    std::fs::create_dir_all(&dir).unwrap();
    let sat = dir.join("sat.cnf");
    std::fs::write(&sat, "p cnf 3 1\n1 2 3 0\n").unwrap();
    let out = bin().args(["sat-decide", "--input"]).arg(&sat).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "SAT");

    let unsat = dir.join("unsat.cnf");
    std::fs::write(&unsat, "p cnf 1 2\n1 0\n-1 0\n").unwrap();
    let out = bin().args(["sat-decide", "--input"]).arg(&unsat).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "UNSAT");
}

#[test]
fn missing_config_is_a_schema_error_with_exit_two() {
    let out = bin()
        .args(["run", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn build_env_emits_a_loadable_spec() {
    let out = bin()
        .args(["build-env", "--name", "rare-reward", "--params", r#"{"eps":0.04}"#])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let spec = valor::cdp::CdpSpec::from_json(&text).unwrap();
    assert!((spec.exact_values().v_star - 0.04).abs() < 1e-12);
}

#[test]
fn barrier_rare_prints_the_loss_table() {
    let out = bin()
        .args(["barrier", "rare", "--eps", "0.04"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("sqloss_zero=0"));
    assert!(text.contains("sqloss_optimal=0.04"));
    assert!(text.contains("sqloss_flat=0.04"));
}

#[test]
fn run_executes_a_small_experiment_and_writes_outputs() {
    let dir = std::env::temp_dir().join("valor-cli-run");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "env": {"kind": "named", "name": "random", "params": {
                "horizon": 2, "num_actions": 2, "states_per_level": 2,
                "obs_per_level": 6, "reward_scale": 0.7
            }},
            "classes": {"kind": "synthesize", "distractors": 15},
            "algorithm": "valor-unconstrained",
            "params": {"eps": 0.1, "n_test": 1000, "n_train": 1000,
                        "n_exp": 10, "n_eval": 1000, "eps_stat": 0.01},
            "trials": 2,
            "seed": 7
        })
        .to_string(),
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert!(report.contains("success_rate"));
    let csv = std::fs::read_to_string(out_dir.join("iterations.csv")).unwrap();
    assert!(csv.starts_with("trial,iteration,v_hat,v_hat_policy,store_sizes"));
    // byte-identical on a rerun
    let out2_dir = dir.join("out2");
    let out2 = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&out2_dir)
        .output()
        .unwrap();
    assert!(out2.status.success());
    assert_eq!(
        report,
        std::fs::read_to_string(out2_dir.join("report.json")).unwrap()
    );
}
