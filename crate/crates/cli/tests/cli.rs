use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> String {
    format!("tests/fixtures/{name}")
}

fn vgpp(args: &[&str]) -> Output {
    vgpp_env(args, None)
}

fn vgpp_env(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vgpp"));
    cmd.current_dir(dir()).args(args).env_remove("VGPP_THREADS");
    if let Some(n) = threads {
        cmd.env("VGPP_THREADS", n);
    }
    cmd.output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = vgpp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn golden_outputs_are_reproduced() {
    let table4 = fixture("table4.json");
    let series = fixture("series.csv");
    let american = fixture("american.json");
    let multi = fixture("multi.json");
    let cases: [(&str, Vec<&str>); 6] = [
        ("simulate.json", vec!["simulate", "--config", &table4]),
        ("price.json", vec!["price", "--config", &table4]),
        ("calibrate.json", vec!["calibrate", "--config", &table4, "--method", "mle", "--data", &series]),
        ("exotic.json", vec!["exotic", "--config", &american]),
        ("multisim.csv", vec!["multisim", "--config", &multi]),
        ("triangle.json", vec!["triangle", "--config", &table4]),
    ];
    for (golden, args) in cases {
        let out = vgpp(&args);
        assert!(out.status.success(), "{golden}: {}", stderr(&out));
        let expected = fs::read(dir().join("tests/golden").join(golden)).unwrap();
        assert!(out.stdout == expected, "{golden} differs:\n{}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn json_reports_carry_their_schema() {
    let required: [(&str, &[&str]); 5] = [
        ("simulate.json", &["process", "direction", "params", "seed", "n_paths", "terminal", "stderr", "exact"]),
        ("price.json", &["method", "params", "K", "T", "price", "terms_used"]),
        ("calibrate.json", &["method", "params", "p_zero", "objective", "flags", "starts"]),
        ("exotic.json", &["contract", "params", "config", "price", "stderr"]),
        ("triangle.json", &["params", "market", "config", "rows", "max_abs_closed_minus_fft"]),
    ];
    for (golden, keys) in required {
        let text = fs::read_to_string(dir().join("tests/golden").join(golden)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], 1, "{golden}");
        for k in keys {
            assert!(v.get(k).is_some(), "{golden} lacks {k}");
        }
        let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(again, v, "{golden} does not round-trip");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let csv = tmp.path().join(format!("{name}.csv"));
        let out = vgpp(&[
            "simulate",
            "--config",
            &fixture("table4.json"),
            "--paths",
            "50",
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        (out.stdout, fs::read(csv).unwrap())
    };
    let (a_json, a_csv) = run("a");
    let (b_json, b_csv) = run("b");
    assert_eq!(a_json, b_json);
    assert_eq!(a_csv, b_csv);
    assert!(String::from_utf8(a_csv).unwrap().starts_with("path,t,z,x\n"));
    let other = vgpp(&["simulate", "--config", &fixture("table4.json"), "--paths", "50", "--seed", "43"]);
    assert_ne!(other.stdout, a_json);
}

#[test]
fn worker_count_does_not_change_results() {
    let table4 = fixture("table4.json");
    let american = fixture("american.json");
    let runs: [Vec<&str>; 3] = [
        vec!["simulate", "--config", &table4, "--paths", "30000", "--steps", "2"],
        vec!["exotic", "--config", &american],
        vec!["triangle", "--config", &table4],
    ];
    for args in runs {
        let one = vgpp_env(&args, Some("1"));
        let three = vgpp_env(&args, Some("3"));
        assert!(one.status.success() && three.status.success(), "{args:?}");
        assert_eq!(one.stdout, three.stdout, "{args:?}");
    }
    let bad = vgpp_env(&["price", "--config", &table4], Some("zero"));
    assert_eq!(code(&bad), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let table4 = fixture("table4.json");
    let out = vgpp(&["simulate", "--config", &table4, "--paths", "0"]);
    assert_eq!(code(&out), 2);

    let out = vgpp(&["calibrate", "--config", &table4, "--data", &fixture("series.csv")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--method"));

    let out = vgpp(&["exotic", "--config", &fixture("american.json"), "--contract", "barrier"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("american_put") && stderr(&out).contains("lookback_call_max"));

    let out = vgpp(&["simulate", "--params", "tests/fixtures/missing.json", "--seed", "1"]);
    assert_eq!(code(&out), 2);

    // stochastic commands refuse to run without a seed
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("noseed.json");
    let text = fs::read_to_string(dir().join("tests/fixtures/table4.json")).unwrap();
    fs::write(&cfg, text.replace("\"seed\": 42,", "")).unwrap();
    let out = vgpp(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--seed"));
    assert!(vgpp(&["price", "--config", cfg.to_str().unwrap()]).status.success());

    let cfg = tmp.path().join("typo.json");
    fs::write(&cfg, text.replace("\"seed\"", "\"sede\"")).unwrap();
    assert_eq!(code(&vgpp(&["price", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn bad_csv_is_reported_with_its_row() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    fs::write(&csv, "date,price\n2020-01-01,100\n2020-01-02,abc\n").unwrap();
    let out = vgpp(&["calibrate", "--method", "mle", "--data", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line: 3"), "{}", stderr(&out));

    fs::write(&csv, "date,price\n2020-01-01,100\n2020-01-02,-5\n").unwrap();
    let out = vgpp(&["calibrate", "--method", "gmm", "--data", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
}

#[test]
fn numerical_failure_exits_with_one() {
    let out = vgpp(&["price", "--config", &fixture("table4.json"), "--f0", "1.7e308", "--maturity", "5"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn forward_and_backward_summaries_agree() {
    let table4 = fixture("table4.json");
    let summary = |direction: &str| {
        ok_json(&["simulate", "--config", &table4, "--paths", "40000", "--steps", "3", "--direction", direction])
    };
    let (f, b) = (summary("forward"), summary("backward"));
    assert_eq!(b["direction"], "backward");
    for m in ["mean", "variance", "skewness", "kurtosis"] {
        let gap = (f["terminal"][m].as_f64().unwrap() - b["terminal"][m].as_f64().unwrap()).abs();
        let se = f["stderr"][m].as_f64().unwrap().hypot(b["stderr"][m].as_f64().unwrap());
        assert!(gap < 3.0 * se, "{m}: gap {gap}, se {se}");
    }
    let gpp = ok_json(&["simulate", "--config", &table4, "--process", "gpp", "--paths", "20000", "--steps", "2"]);
    let (mean, se) = (gpp["terminal"]["mean"].as_f64().unwrap(), gpp["stderr"]["mean"].as_f64().unwrap());
    assert!((mean - 1.0).abs() < 3.0 * se, "clock mean {mean}");
}

#[test]
fn shipped_fixtures_are_recovered() {
    let table4 = fixture("table4.json");
    let mle = ok_json(&["calibrate", "--config", &table4, "--method", "mle", "--data", &fixture("series.csv")]);
    let truth = 0.5f64.powf(10.0 / 252.0);
    let p_zero = mle["p_zero"].as_f64().unwrap();
    assert!((p_zero - truth).abs() < 0.2 * truth, "{p_zero} vs {truth}");

    let out = vgpp(&["calibrate", "--config", &table4, "--method", "nlls", "--data", &fixture("quotes.csv")]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("p_zero = "));
    let nlls: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(nlls["rmse"].as_f64().unwrap() < 1e-6, "{}", nlls["rmse"]);
    assert_eq!(nlls["residuals"].as_array().unwrap().len(), 15);
}

#[test]
fn price_methods_agree() {
    let table4 = fixture("table4.json");
    let closed = ok_json(&["price", "--config", &table4]);
    let fft = ok_json(&["price", "--config", &table4, "--method", "fft"]);
    let mc = ok_json(&["price", "--config", &table4, "--method", "mc"]);
    let c = closed["price"].as_f64().unwrap();
    assert!((c - fft["price"].as_f64().unwrap()).abs() < 5e-3);
    assert!((c - mc["price"].as_f64().unwrap()).abs() < 3.0 * mc["stderr"].as_f64().unwrap());
    assert!(fft.get("stderr").is_none() && closed.get("stderr").is_none());
}

#[test]
fn triangle_report_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("grid.csv");
    let r = ok_json(&["triangle", "--config", &fixture("table4.json"), "--csv", csv.to_str().unwrap()]);
    assert!(r["max_abs_closed_minus_fft"].as_f64().unwrap() < 5e-3);
    assert_eq!(r["closed_decreasing_in_strike"], true);
    assert_eq!(r["rows"].as_array().unwrap().len(), 15);
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("K,T,closed,fft,mc,mc_stderr,"));
    assert_eq!(text.lines().count(), 16);
}

#[test]
fn american_put_sweep() {
    let american = fixture("american.json");
    let sweep = |direction: &str| -> Vec<Vec<f64>> {
        let out = vgpp(&["exotic", "--config", &american, "--sweep", "--paths", "20000", "--direction", direction]);
        assert!(out.status.success(), "{}", stderr(&out));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("F0,price,stderr,european,european_stderr,intrinsic\n"));
        text.lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (fwd, bwd) = (sweep("forward"), sweep("backward"));
    assert_eq!(fwd.len(), 3);
    for (f, b) in fwd.iter().zip(&bwd) {
        assert!(b[1] >= b[5] && f[1] >= f[5], "below intrinsic at F0 = {}", b[0]);
        assert!((f[1] - b[1]).abs() <= 2.0 * f[2].hypot(b[2]) + 1e-12, "F0 = {}: {} vs {}", b[0], f[1], b[1]);
    }
    let lookback = ok_json(&["exotic", "--config", &american, "--contract", "lookback_call_max", "--steps", "12"]);
    assert_eq!(lookback["contract"], "lookback_call_max");
    assert!(lookback.get("european").is_none());
}

#[test]
fn multisim_csv_layout() {
    let out = vgpp(&["multisim", "--config", &fixture("multi.json"), "--steps", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,h_1,h_2,x_1,x_2\n"));
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn help_documents_every_flag() {
    let flags: [(&str, &[&str]); 6] = [
        ("simulate", &["--config", "--params", "--seed", "--out", "--process", "--direction", "--paths", "--steps", "--horizon", "--csv"]),
        ("price", &["--f0", "--rate", "--method", "--strike", "--maturity", "--paths"]),
        ("calibrate", &["--method", "--data", "--f0", "--rate"]),
        ("exotic", &["--contract", "--strike", "--maturity", "--paths", "--steps", "--direction", "--degree", "--sweep"]),
        ("multisim", &["--steps", "--horizon"]),
        ("triangle", &["--paths", "--csv"]),
    ];
    for (cmd, names) in flags {
        let out = vgpp(&[cmd, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        for f in names {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    let top = String::from_utf8(vgpp(&["--help"]).stdout).unwrap();
    assert!(top.contains("VGPP_THREADS"));
    assert!(Path::new(env!("CARGO_BIN_EXE_vgpp")).exists());
}
