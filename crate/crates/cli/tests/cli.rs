use std::process::{Command, Output};

fn folia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_folia")).args(args).env_remove("FOLIA_WORKERS").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn sigma_of_single_matrix() {
    let o = folia(&["invariants", "--matrix", "[[1,0],[0,2]]", "--lambda", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "3");
    let o = folia(&["invariants", "--matrix", "[[1,0],[0,2]]", "--lambda", "2"]);
    assert_eq!(stdout(&o).trim(), "2");
}

#[test]
fn mixed_sigma_and_table() {
    let o = folia(&["invariants", "--matrix", "[[1,0],[0,2]]", "--matrix", "[[0,1],[1,0]]", "--lambda", "0,2"]);
    assert_eq!(stdout(&o).trim(), "-1");
    let o = folia(&["invariants", "--matrix", "[[1,0],[0,2]]", "--matrix", "[[0,1],[1,0]]"]);
    let table = stdout(&o);
    assert!(table.contains("sigma[(1,0)] = 3"), "{table}");
    assert!(table.contains("sigma[(2,0)] = 2"), "{table}");
}

#[test]
fn newton_transform_is_exact() {
    let o = folia(&["invariants", "--matrix", "[[1,2],[3,4]]", "--newton", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), r#"[["4","-2"],["-3","1"]]"#);
    let o = folia(&["invariants", "--matrix", r#"[["1/2",0],[0,"1/3"]]"#, "--lambda", "2"]);
    assert_eq!(stdout(&o).trim(), "1/6");
}

#[test]
fn jacobi_expansion_of_constant_curvature() {
    // A = 0, R = -I on a 2-dimensional leaf: det Y = cosh² t = 1 + t² + t⁴/3 + …
    let o = folia(&["invariants", "--matrix", "[[0,0],[0,0]]", "--matrix", "[[-1,0],[0,-1]]", "--jacobi", "4"]);
    assert_eq!(stdout(&o).trim(), r#"["1","0","1","0","1/3"]"#);
}

#[test]
fn matrices_file_and_float_mode() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    std::fs::write(&p, "[[[1,0],[0,2]], [[1,1],[0,1]]]").unwrap();
    let o = folia(&["invariants", "--matrices", p.to_str().unwrap(), "--det-series", "2", "--mode", "float"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), r#"["1.0","3.0","4.0"]"#);
}

#[test]
fn invariants_usage_errors_exit_2() {
    for args in [
        vec!["invariants", "--matrix", "[[1,0],[0,2]]", "--matrix", "[[1]]"],
        vec!["invariants", "--matrix", "[[1,0],[0"],
        vec!["invariants", "--matrix", "[[1,0],[0,2]]", "--mode", "fast"],
        vec!["invariants"],
        vec!["invariants", "--matrix", "[[1,0],[0,2]]", "--jacobi", "2"],
    ] {
        let o = folia(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn fields_csv_layout() {
    let o = folia(&["fields", "--chart", "flat-sin", "--grid", "4", "--field", "c,barA,densities"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 64);
    assert_eq!(lines[0], "x1,x2,x3,c,barA_11,barA_12,barA_21,barA_22,densities_1,densities_2,densities_3");
    for l in &lines[1..] {
        let vals: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 11);
        assert!(vals[3] > 0.0 && vals[3] <= 1.0);
    }
}

#[test]
fn fields_json_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.json");
    let o = folia(&["fields", "--chart", "warped-torus", "--grid", "4", "--field", "nu,A,trQR", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["dim"], 3);
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 64);
    assert_eq!(pts[0]["A"].as_array().unwrap().len(), 2);
    assert!(pts[0]["trQR"].is_f64());
}

#[test]
fn fields_surface_chart_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    // β has a component along the leaf normal ∂₁.
    std::fs::write(&p, "name = \"normal-beta\"\ndim = 2\nmetric_diag = [\"1\", \"1\"]\nbeta = [\"0.3\", \"0\"]\nlevel = \"x1\"\n").unwrap();
    let o = folia(&["fields", "--chart", p.to_str().unwrap(), "--grid", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta(N) = 0"), "{}", stderr(&o));
    let o = folia(&["fields", "--chart", "no-such-chart"]);
    assert_eq!(o.status.code(), Some(2));
    let o = folia(&["fields", "--chart", "flat-sin", "--field", "curvature"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_exit_codes() {
    let o = folia(&["verify", "--chart", "flat-sin", "--formula", "eq61", "--grid", "16"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["reports"][0]["verdict"], "pass");
    assert!(doc["reports"][0]["seconds"].is_null());
    assert_eq!(doc["summary"]["failed"], 0);

    // tr Q_R matches the Ricci difference only on Berwald charts; the tilted chart is not.
    let o = folia(&["verify", "--chart", "tilted", "--formula", "E-Q62", "--grid", "8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FAIL E-Q62 tilted"));

    // second-order formula needs a Berwald chart
    let o = folia(&["verify", "--chart", "tilted", "--formula", "eq62"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hypothesis `berwald` does not hold"), "{}", stderr(&o));

    for args in [
        vec!["verify"],
        vec!["verify", "--chart", "flat-sin", "--formula", "eq99"],
        vec!["verify", "--chart", "flat-sin", "--formula", "eq61", "--k", "3"],
        vec!["verify", "--chart", "flat-sin", "--formula", "eq61", "--grid", "7"],
        vec!["verify", "--suite", "nightly"],
        vec!["verify", "--chart", "flat-sin", "--formula", "eq61", "--workers", "0"],
    ] {
        let o = folia(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn verify_config_out_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "[verify]\ncharts = [\"warped-torus\"]\nformulas = [\"eq61\", \"E-IF1-Randers0\"]\ngrids = [16, 32]\n\n[execution]\nworkers = 1\noutput = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = folia(&["verify", "--config", cfg.to_str().unwrap(), "--timings"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json = std::fs::read_to_string(out.join("report.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(doc["reports"].as_array().unwrap().len(), 4);
    assert!(doc["reports"][0]["seconds"].is_f64());
    assert!(doc["config"].get("workers").is_none());
    assert_eq!(doc["charts"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    // identical rerun against its own baseline: no regressions
    let o = folia(&["verify", "--config", cfg.to_str().unwrap(), "--baseline", out.join("report.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // a failure that passed in the baseline is a regression
    let tilted = dir.path().join("tilted");
    let args = ["verify", "--chart", "tilted", "--formula", "E-Q62", "--grid", "8", "--out", tilted.to_str().unwrap()];
    assert_eq!(folia(&args).status.code(), Some(1));
    let mut base: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tilted.join("report.json")).unwrap()).unwrap();
    base["reports"][0]["verdict"] = serde_json::json!("pass");
    let bpath = dir.path().join("base.json");
    std::fs::write(&bpath, serde_json::to_string(&base).unwrap()).unwrap();
    let o = folia(&[&args[..], &["--baseline", bpath.to_str().unwrap()]].concat());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("REGRESSION E-Q62 tilted k=2 grid=8: pass -> fail"), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tilted.join("report.json")).unwrap()).unwrap();
    assert_eq!(doc["summary"]["regressions"].as_array().unwrap().len(), 1);

    std::fs::write(&cfg, "[verify]\ncharts = [\"flat-sin\"]\nformula = [\"eq61\"]\n").unwrap();
    let o = folia(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn worker_env_is_read_and_flag_wins() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_folia"));
        c.args(["verify", "--chart", "warped-torus", "--formula", "eq61", "--grid", "16"]);
        if let Some(f) = flag {
            c.args(["--workers", f]);
        }
        match env {
            Some(e) => c.env("FOLIA_WORKERS", e),
            None => c.env_remove("FOLIA_WORKERS"),
        };
        c.output().unwrap()
    };
    assert_eq!(run(Some("bogus"), None).status.code(), Some(2));
    assert_eq!(run(Some("bogus"), Some("2")).status.code(), Some(0));
    assert_eq!(run(Some("3"), None).status.code(), Some(0));
}

/// The default suite gives byte-identical JSON whatever the worker count.
#[test]
fn default_suite_is_deterministic_across_workers() {
    let one = folia(&["verify", "--suite", "default", "--workers", "1"]);
    let four = folia(&["verify", "--suite", "default", "--workers", "4"]);
    assert_eq!(one.status.code(), four.status.code());
    assert!(matches!(one.status.code(), Some(0) | Some(1)), "{}", stderr(&one));
    assert!(!one.stdout.is_empty());
    assert!(one.stdout == four.stdout, "JSON differs between 1 and 4 workers");
}
