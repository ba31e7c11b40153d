use std::fs;
use std::path::Path;
use std::process::Command;

fn lab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_invariant-gan-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn verify_selected_suites_pass_and_fault_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "verify.suites = group, lemma1\n");
    let out = dir.path().join("ok");
    let o = lab(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "summary.json", "plot.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("suite,check,passed,detail\n"));
    assert!(!csv.contains("idempotence"));

    let cfg = write_config(dir.path(), "verify.suites = group, lemma1\nverify.fault = cayley\n");
    let out = dir.path().join("bad");
    let o = lab(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let suites = summary["suites"].as_array().unwrap();
    assert_eq!(suites[0]["suite"], "group");
    assert_eq!(suites[0]["passed"], false);
    assert_eq!(suites[1]["passed"], true);
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "no.such.key = 1\n");
    let o = lab(&["covering", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `no.such.key`"));
    let cfg = write_config(dir.path(), "sweep.reference_size = 4001\n");
    let o = lab(&["delta3-sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
}

#[test]
fn delta3_sweep_is_reproducible_and_seed_flag_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "# tiny sweep\nsweep.n_grid = 20, 40, 80\nsweep.trials = 2\nsweep.reference_size = 300\ndelta3.groups = C1, C2, C4\n",
    );
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = lab(&[
            "delta3-sweep",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--workers",
            "2",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("results.csv")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 5);
    assert_eq!(summary["fits"].as_array().unwrap().len(), 3);
    assert!(summary["collapse"]["median"].is_number());
}

#[test]
fn help_lists_config_keys() {
    let o = lab(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("delta3-sweep") && text.contains("group.kind") && text.contains("--workers"));
}
