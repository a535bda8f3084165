use serde_json::Value;
use std::io::Write;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_khinchin-lab"));
    c.env_remove("KHINCHIN_LAB_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn without_meta(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("meta");
    v
}

#[test]
fn eval_psi0_at_two() {
    let out = run(&["eval-psi0", "--s", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema"], "khinchin-lab/1");
    let value = v["results"][0]["value"].as_f64().unwrap();
    assert!((value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert!(v["meta"]["wall_clock_seconds"].is_number());
    assert_eq!(v["inputs"]["seed"], 0);
    assert_eq!(v["inputs"]["tol"], 1e-8);
}

#[test]
fn verify_ball_equal_vector_passes() {
    let out = run(&["verify-ball", "--dist", "sphere", "--vector", "1/√3,1/√3,1/√3", "--mc-samples", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["reports"][0];
    assert_eq!(r["verdict"], "pass");
    assert!(r["margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_ball_large_coefficient_is_rejected() {
    let out = run(&["verify-ball", "--dist", "sphere", "--vector", "0.9,0.436"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["status"], "rejected");
    let notes = v["reports"][0]["notes"].to_string();
    assert!(notes.contains("small-coefficient"), "{notes}");
}

#[test]
fn verify_szarek_rademacher() {
    let out = run(&["verify-szarek", "--vector", "random(8, 5, small)", "--mc-samples", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["reports"][0]["lemma_id"], "Thm1");
}

#[test]
fn invalid_config_names_field() {
    for (args, field) in [
        (vec!["eval-psi0"], "s"),
        (vec!["eval-psi", "--s", "2"], "dist"),
        (vec!["eval-psi", "--s", "2", "--dist", "four-point:7"], "dist"),
        (vec!["eval-phi0", "--s", "2", "--tol", "-1"], "tol"),
        (vec!["verify-ball", "--dist", "two-point:0.1", "--vector", "1,1"], "dist"),
        (vec!["sweep", "--s", "2:10:5"], "functional"),
        (vec!["np-analysis", "--a", "3"], "a"),
        (vec!["eval-psi0", "--s", "2", "--seed", "x"], "seed"),
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("{field}:")), "{args:?}: {err}");
    }
}

#[test]
fn numerical_domain_error_exits_3() {
    let out = run(&["eval-psi0", "--s", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_with_flag_override() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "# perturbed law\nkind = two-point\nparam = 1e-4\ns = 2\nseed = 9").unwrap();
    let path = f.path().to_str().unwrap();
    let out = run(&["eval-psi", "--config", path, "--s", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["inputs"]["s"], 3.0);
    assert_eq!(v["inputs"]["seed"], 9);
    assert_eq!(v["inputs"]["dist"]["name"], "two-point(c=0.0001)");

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "colour = red").unwrap();
    let out = run(&["eval-psi0", "--config", bad.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn reports_are_reproducible() {
    let args = [
        "verify-ball",
        "--dist",
        "radius-two-point:1e-3",
        "--vector",
        "random(5, 2)",
        "--mc-samples",
        "20000",
        "--seed",
        "4",
    ];
    let a = run(&args);
    let b = bin().args(args).env("KHINCHIN_LAB_THREADS", "1").output().unwrap();
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(without_meta(json(&a)), without_meta(json(&b)));
    let text_a = String::from_utf8(a.stdout).unwrap();
    let text_b = String::from_utf8(b.stdout).unwrap();
    let strip = |t: &str| {
        t.lines()
            .filter(|l| {
                !l.contains("wall_clock_seconds")
                    && !l.contains("timestamp_unix")
                    && !l.contains("\"threads\"")
                    && !l.contains("\"parallel\"")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&text_a), strip(&text_b));
}

#[test]
fn bad_thread_count() {
    let out = bin().args(["eval-psi0", "--s", "2"]).env("KHINCHIN_LAB_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("KHINCHIN_LAB_THREADS"));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let out = run(&[
        "sweep",
        "--functional",
        "phi0",
        "--s",
        "grid(2, 100, 12, log)",
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,value,uncertainty,bound,margin"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert!((r[3] - std::f64::consts::SQRT_2).abs() < 1e-9);
        assert!(r[4] >= -r[2]);
    }
}

#[test]
fn sweep_psi_json() {
    let out = run(&["sweep", "--functional", "psi", "--dist", "four-point:1e-4", "--s", "2:50:8:log"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["table"].as_array().unwrap().len(), 8);
    assert_eq!(v["reports"][0]["lemma_id"], "Psi2");
}

#[test]
fn np_analysis_single_crossing() {
    let out = run(&["np-analysis", "--a", "1.01"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["analysis"]["crossings"], 1);
    assert_eq!(v["analysis"]["lobe_maxima"].as_array().unwrap().len(), 20);
}

#[test]
fn certify_lemmas_without_laws() {
    let out = run(&["certify-lemmas", "--dist", "none"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["reports"].as_array().unwrap().len(), 17);
    assert_eq!(v["all_pass"], true);
}
