use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pulsebench(args: &[&str], data_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulsebench"))
        .args(args)
        .env("PULSEBENCH_DATA", data_root)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn header_cells(table: &str) -> Vec<String> {
    table
        .lines()
        .next()
        .unwrap()
        .split("  ")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

#[test]
fn synth_writes_store_and_manifest() {
    let data = tempfile::tempdir().unwrap();
    let root = data.path();
    ok(&pulsebench(&["synth", "--task", "bp", "--n", "60", "--seed", "3"], root));
    let store = fs::metadata(root.join("synth_bp.f32")).unwrap();
    assert_eq!(store.len(), 60 * 1250 * 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("synth_bp.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 60);
    assert_eq!(manifest["fs"], 125.0);
}

#[test]
fn baseline_run_is_deterministic_with_fixed_columns() {
    let data = tempfile::tempdir().unwrap();
    let root = data.path();
    ok(&pulsebench(&["synth", "--task", "bp", "--n", "300", "--seed", "1"], root));
    let cfg = write_config(
        root,
        "baseline.json",
        r#"{"task":"bp_calibfree","representation":"cif","model":"baseline","seed":4,"data":{"dataset":"synth_bp"}}"#,
    );
    let out = tempfile::tempdir().unwrap();
    let (a, b) = (out.path().join("a"), out.path().join("b"));
    let printed = ok(&pulsebench(&["run", "--config", &cfg, "--out", a.to_str().unwrap()], root));
    ok(&pulsebench(&["run", "--config", &cfg, "--out", b.to_str().unwrap()], root));
    for f in ["report.json", "table.txt", "predictions.csv", "repro.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let table = fs::read_to_string(a.join("table.txt")).unwrap();
    assert_eq!(printed, table);
    assert_eq!(
        header_cells(&table),
        ["Model", "SBP MAE (MASE)", "A", "B", "C", "D", "DBP MAE (MASE)", "A", "B", "C", "D"]
    );
    let row = table.lines().nth(2).unwrap();
    assert!(row.starts_with("baseline"), "{row}");
    assert_eq!(row.matches("(1.00)").count(), 2, "{row}");

    // a different seed gives a different split and different predictions
    let c = out.path().join("c");
    ok(&pulsebench(&["run", "--config", &cfg, "--seed", "5", "--out", c.to_str().unwrap()], root));
    assert_ne!(fs::read(a.join("predictions.csv")).unwrap(), fs::read(c.join("predictions.csv")).unwrap());
}

#[test]
fn classification_table_has_fixed_columns() {
    let data = tempfile::tempdir().unwrap();
    let root = data.path();
    ok(&pulsebench(&["synth", "--task", "af", "--n", "600", "--seed", "2"], root));
    let cfg = write_config(
        root,
        "af.json",
        r#"{"task":"af","representation":"irregularity","model":"mlp","seed":1,
            "data":{"dataset":"synth_af"},"hyper":{"mlp":{"epochs":20}}}"#,
    );
    let out = tempfile::tempdir().unwrap();
    let table = ok(&pulsebench(&["run", "--config", &cfg, "--out", out.path().to_str().unwrap()], root));
    assert_eq!(
        header_cells(&table),
        ["Model", "AUC", "F1 (0.5)", "Sp (Se > 0.8)", "Se (Sp > 0.8)", "MCC (Se > 0.8)", "MCC (Sp > 0.8)"]
    );
    assert!(table.lines().nth(2).unwrap().starts_with("irregularity+mlp"));
}

#[test]
fn incompatible_pair_fails_at_config_stage() {
    let data = tempfile::tempdir().unwrap();
    let root = data.path();
    // no dataset exists, so reaching the load stage would name a missing file
    let cfg = write_config(
        root,
        "bad.json",
        r#"{"task":"bp_calib","representation":"raw","model":"gpr","data":{"dataset":"missing"}}"#,
    );
    let out = pulsebench(&["run", "--config", &cfg, "--out", root.join("o").to_str().unwrap()], root);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config stage"), "{err}");
    assert!(!root.join("o").exists());

    let unknown = write_config(
        root,
        "unknown.json",
        r#"{"task":"af","representation":"raw","model":"mlp","data":{"dataset":"x"},"lr":1}"#,
    );
    let out = pulsebench(&["run", "--config", &unknown], root);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config stage"));
}

#[test]
fn compare_ranks_reports_and_needs_two() {
    let data = tempfile::tempdir().unwrap();
    let root = data.path();
    ok(&pulsebench(&["synth", "--task", "bp", "--n", "300", "--seed", "1"], root));
    let base = write_config(
        root,
        "baseline.json",
        r#"{"task":"bp_calib","representation":"cif","model":"baseline","data":{"dataset":"synth_bp"}}"#,
    );
    let mlp = write_config(
        root,
        "mlp.json",
        r#"{"task":"bp_calib","representation":"cif","model":"mlp","data":{"dataset":"synth_bp"},
            "hyper":{"mlp":{"epochs":30}}}"#,
    );
    let out = tempfile::tempdir().unwrap();
    let (a, b) = (out.path().join("base"), out.path().join("mlp"));
    ok(&pulsebench(&["run", "--config", &base, "--out", a.to_str().unwrap()], root));
    ok(&pulsebench(&["run", "--config", &mlp, "--out", b.to_str().unwrap()], root));
    let ra = a.join("report.json");
    let rb = b.join("report.json");

    let single = pulsebench(&["compare", ra.to_str().unwrap()], root);
    assert!(!single.status.success());
    assert!(String::from_utf8_lossy(&single.stderr).contains("compare stage"));

    let cmp_dir = out.path().join("cmp");
    let table = ok(&pulsebench(
        &["compare", ra.to_str().unwrap(), rb.to_str().unwrap(), "--out", cmp_dir.to_str().unwrap()],
        root,
    ));
    assert_eq!(fs::read_to_string(cmp_dir.join("comparison.txt")).unwrap(), table);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp_dir.join("comparison.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows.iter().filter(|r| r["best"] == true).count(), 1);
    assert_eq!(rows[0]["best"], true);
    // rows are sorted by SBP MASE, the baseline sitting at exactly 1
    let mase = |r: &serde_json::Value| r["sbp"]["mase"].as_f64().unwrap();
    assert!(mase(&rows[0]) <= mase(&rows[1]));
    let body: Vec<&str> = table.lines().skip(2).collect();
    assert!(body[0].starts_with("* "), "{table}");
    assert!(!body[1].starts_with("* "), "{table}");
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = pulsebench::bench::RunConfig::from_file(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
