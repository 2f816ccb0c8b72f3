use std::ffi::OsString;
use std::path::PathBuf;

use chad::cli::main_with;

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name).display().to_string()
}

/// Runs chadc in-process; returns (exit code, stdout, stderr).
fn chadc(args: &[&str]) -> (i32, String, String) {
    let argv: Vec<OsString> = std::iter::once("chadc").chain(args.iter().copied()).map(Into::into).collect();
    chad::with_big_stack(move || {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    })
}

const POINT: &str = r#"{"x":2.0,"y":3.0}"#;

#[test]
fn check_prints_the_type() {
    let (code, out, _) = chadc(&["check", &corpus("poly.chad")]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), r#"{"type":"Real"}"#);
}

#[test]
fn run_prints_value_and_cost() {
    let (code, out, _) = chadc(&["run", &corpus("poly.chad"), "--point", POINT]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), r#"{"value":18.0,"cost":17}"#);
}

#[test]
fn grad_is_keyed_by_input() {
    for mode in ["monadic", "naive-dense", "naive-treemap"] {
        let (code, out, _) = chadc(&["grad", &corpus("poly.chad"), "--mode", mode, "--point", POINT]);
        assert_eq!(code, 0, "{mode}");
        assert_eq!(out.trim(), r#"{"x":15.0,"y":4.0}"#, "{mode}");
    }
}

#[test]
fn higher_order_grad_in_every_mode() {
    for mode in ["naive-ho", "defunctionalise", "closure-chad"] {
        let (code, out, err) = chadc(&["grad", &corpus("ho_capture.chad"), "--mode", mode, "--point", POINT]);
        assert_eq!(code, 0, "{mode}: {err}");
        assert_eq!(out.trim(), r#"{"x":3.0,"y":8.0}"#, "{mode}");
    }
}

#[test]
fn first_order_mode_rejects_lambdas() {
    let (code, _, err) = chadc(&["grad", &corpus("ho_capture.chad"), "--mode", "monadic", "--point", POINT]);
    assert_ne!(code, 0);
    assert!(!err.is_empty());
}

#[test]
fn compare_oracle_reports_pass() {
    let (code, out, _) = chadc(&["compare-oracle", &corpus("poly.chad"), "--point", POINT]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["gradient"], serde_json::json!([15.0, 4.0]));
    assert_eq!(v["err_forward"], 0.0);
}

#[test]
fn transform_summary_and_print() {
    let (code, out, _) = chadc(&["transform", &corpus("poly.chad")]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["source_type"], "Real");
    assert_eq!(v["source_nodes"], 9);
    let (code, printed, _) = chadc(&["transform", &corpus("poly.chad"), "--print"]);
    assert_eq!(code, 0);
    assert!(printed.contains("lam"), "{printed}");
}

#[test]
fn bench_writes_a_report() {
    let dir = std::env::temp_dir().join(format!("chadc-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let (code, out, _) =
        chadc(&["bench", "--family", "deep-let", "--sizes", "64..512", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["family"], "deep-let");
    assert_eq!(v["rule"], "flat-ratio");
    assert_eq!(v["pass"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn failed_rule_exits_3() {
    let (code, out, _) = chadc(&["bench", "--family", "t_magic", "--mode", "naive-treemap", "--sizes", "64..1024"]);
    assert_eq!(code, 3);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn user_errors_exit_1() {
    let dir = std::env::temp_dir().join(format!("chadc-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.chad");
    std::fs::write(&bad, "(program (args (x Real)) (op add x))").unwrap();
    assert_eq!(chadc(&["check", bad.to_str().unwrap()]).0, 1);
    assert_eq!(chadc(&["run", &corpus("poly.chad"), "--point", r#"{"x":1.0}"#]).0, 1);
    assert_eq!(chadc(&["run", &corpus("poly.chad"), "--point", r#"{"x":1.0,"y":2.0,"z":3.0}"#]).0, 1);
    assert_eq!(chadc(&["check", "/nonexistent.chad"]).0, 1);
    assert_eq!(chadc(&["grad", &corpus("poly.chad"), "--mode", "reverse"]).0, 1);
    assert_eq!(chadc(&["bench", "--family", "t_magic", "--sizes", "3..9"]).0, 1);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn help_exits_0() {
    let (code, out, _) = chadc(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["check", "run", "grad", "transform", "compare-oracle", "bench"] {
        assert!(out.contains(sub), "{sub}");
    }
}
