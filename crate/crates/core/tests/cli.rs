use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_qvuln");

fn qvuln(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run qvuln")
}

fn header(args: &[&str]) -> String {
    let out = qvuln(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_headers_are_fixed() {
    let cases: [(&[&str], &str); 8] = [
        (
            &["risk", "--d", "2", "--tc", "0.5", "--th", "0.4", "--trials", "100", "--seed", "1"],
            "d,t_c,t_h,mu_analytic,mu_hat,std_err,trials,seed",
        ),
        (
            &["attack-sweep", "--dims", "2", "--mu", "0.1", "--risk", "0.5", "--trials", "100", "--seed", "1"],
            "d,t_c,t_h,budget_chi,budget_hs,adv_risk_hat,std_err,median_min_chi,trials,seed,variant",
        ),
        (
            &["concentration", "--d", "2", "--samples", "1000", "--eps", "0.5:1.0:0.5", "--metric", "norm", "--seed", "1"],
            "d,eps,tail_hat,std_err,levy_bound,metric,samples,seed",
        ),
        (
            &["certify", "dfe", "--qubits", "1", "--eta", "0.3", "--delta", "0.3", "--runs", "2", "--seed", "1"],
            "n_qubits,eta,delta,run,estimate,true_fid,settings_used,shots_used,seed",
        ),
        (
            &["certify", "channel", "--qubits", "1", "--theta", "0.2", "--delta-prec", "0.3", "--fail-prob", "0.3", "--runs", "2", "--seed", "1"],
            "n_qubits,theta,delta_prec,fail_prob,run,estimate,true_avg_fid,calls,seed",
        ),
        (
            &["probe", "hs-fidelity", "--d", "4", "--samples", "2", "--seed", "1"],
            "d,sample,h_sq,two_one_minus_f,two_d_one_minus_f,paper_ineq_holds",
        ),
        (
            &["uhlmann-check", "--d", "2", "--chi", "0.1", "--trials", "2", "--seed", "1"],
            "d,chi,trial,lhs,bound,holds",
        ),
        (
            &["certify", "dfe", "--qubits", "2", "--eta", "0.3", "--delta", "0.3", "--runs", "2", "--seed", "1", "--target", "ghz", "--schedule", "single"],
            "n_qubits,eta,delta,run,estimate,true_fid,settings_used,shots_used,seed",
        ),
    ];
    for (args, want) in cases {
        assert_eq!(header(args), want, "{args:?}");
    }
}

#[test]
fn bounds_json_summary() {
    let out = qvuln(&["bounds", "--d", "16", "--mu", "0.1", "--risk", "0.5", "--delta", "0.05"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["config", "results", "errors", "version", "wallclock_s"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!((v["results"]["epsilon_sq_max"].as_f64().unwrap() - 0.9222197).abs() < 1e-6);
    assert!((v["results"]["fidelity_floor_raw"].as_f64().unwrap() - 0.9711806).abs() < 1e-6);
    assert_eq!(v["results"]["variant"], "paper");
}

#[test]
fn exit_codes() {
    let out = qvuln(&["bounds", "--d", "16", "--mu", "0", "--risk", "0.5", "--delta", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu(M) > 0"));

    assert_eq!(qvuln(&["bounds", "--d", "16"]).status.code(), Some(2));
    assert_eq!(qvuln(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(qvuln(&["risk", "--d", "2", "--tc", "1.5", "--th", "0.4", "--trials", "100", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(qvuln(&["concentration", "--d", "2", "--samples", "10", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(qvuln(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("risk.csv");
    let summary = dir.path().join("risk.json");
    std::fs::write(&cfg, "seed = 11\n[risk]\nd = 4\ntc = 0.3\nth = 0.2\ntrials = 300\n").unwrap();
    let args = [
        "--config",
        cfg.to_str().unwrap(),
        "risk",
        "--trials",
        "500",
        "--out",
        out.to_str().unwrap(),
        "--json",
        summary.to_str().unwrap(),
    ];
    assert!(qvuln(&args).status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "4");
    assert_eq!(row[6], "500");
    assert_eq!(row[7], "11");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(v["config"]["trials"], 500);

    std::fs::write(&cfg, "[risk]\nunknown_key = 1\n").unwrap();
    let bad = qvuln(&["--config", cfg.to_str().unwrap(), "risk"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn same_seed_same_bytes() {
    let args = ["uhlmann-check", "--d", "2,4", "--chi", "0.01", "--trials", "50", "--seed", "3"];
    let a = qvuln(&args).stdout;
    let b = qvuln(&args).stdout;
    assert_eq!(a, b);
    let c = qvuln(&["uhlmann-check", "--d", "2,4", "--chi", "0.01", "--trials", "50", "--seed", "4"]).stdout;
    assert_ne!(a, c);
}
