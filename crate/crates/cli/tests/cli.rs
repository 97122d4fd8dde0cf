use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mbadmm::linalg::Matrix;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mbadmm"))
}

fn problem(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Value after `key: ` in `solve` output.
fn field<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no {} in {}", key, out))
}

#[test]
fn symmetric_instance_converges_to_ones() {
    let o = run(&["solve", path(&problem("symmetric-m3.json")), "--beta", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(field(&out, "status"), "converged");
    for key in ["x1", "x2", "x3"] {
        let v: f64 = field(&out, key).parse().unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{} = {}", key, v);
    }
}

#[test]
fn null_objective_example_diverges() {
    let o = run(&["solve", path(&problem("eq-four.json")), "--beta", "1", "--init", "random", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(field(&stdout(&o), "status"), "diverged");
}

#[test]
fn quadratic_example_converges_at_small_beta() {
    let o = run(&["solve", path(&problem("three-strong.json")), "--beta", "0.0066", "--init", "random"]);
    assert_eq!(o.status.code(), Some(0));
    // 0.0066 sits outside the computed guaranteed range, which is reported
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside the guaranteed convergence range"));
}

#[test]
fn exhausted_budget_exits_two() {
    let o = run(&["solve", path(&problem("eq-four.json")), "--beta", "1", "--init", "random", "--max-iters", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&stdout(&o), "iterations"), "10");
}

#[test]
fn bad_input_exits_one_and_bad_flags_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"m": 2, "b": [1], "blocks": []}"#).unwrap();
    let o = run(&["solve", path(&bad), "--beta", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let missing = run(&["solve", path(&dir.path().join("absent.json")), "--beta", "1"]);
    assert_eq!(missing.status.code(), Some(1));

    let sym = problem("symmetric-m3.json");
    for args in [
        vec!["solve", path(&sym), "--beta", "-1"],
        vec!["solve", path(&sym), "--beta", "0"],
        vec!["solve", path(&sym), "--beta", "1", "--tol", "0"],
        vec!["solve", path(&sym), "--beta", "1", "--init", "ones"],
        vec!["solve", path(&sym)],
        vec!["reproduce", "no-such-case"],
    ] {
        assert_eq!(run(&args).status.code(), Some(64), "{:?}", args);
    }
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (t1, t2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let args = |t: &Path| {
        vec![
            "solve".to_string(),
            problem("three-strong.json").to_string_lossy().into_owned(),
            "--beta".into(),
            "0.0066".into(),
            "--init".into(),
            "random".into(),
            "--seed".into(),
            "11".into(),
            "--trace-out".into(),
            t.to_string_lossy().into_owned(),
        ]
    };
    let a = bin().args(args(&t1)).output().unwrap();
    let b = bin().args(args(&t2)).output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    let (ta, tb) = (std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn trace_has_documented_header_and_roundtrip_floats() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    let o = run(&["solve", path(&problem("symmetric-m3.json")), "--beta", "0.1", "--trace-out", path(&t)]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&t).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,primal_res,dual_res_max,objective,phi,theta_potential,dist_to_ref"));
    let iters: usize = field(&stdout(&o), "iterations").parse().unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), iters);
    for (k, row) in rows.iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 7);
        assert_eq!(cells[0].parse::<usize>().unwrap(), k + 1);
        for c in &cells[1..] {
            let v: f64 = c.parse().unwrap();
            // 17 significant digits survive a print/parse cycle
            assert_eq!(format!("{:.16e}", v), *c);
        }
    }
}

#[test]
fn reference_none_leaves_potentials_empty() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    let o = run(&[
        "solve",
        path(&problem("symmetric-m3.json")),
        "--beta",
        "0.1",
        "--reference",
        "none",
        "--trace-out",
        path(&t),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&t).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.ends_with(",,,"), "{}", row);
}

#[test]
fn beta_range_reports_closed_form_values() {
    let o = run(&["beta-range", path(&problem("symmetric-m3.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut rows = out.lines();
    assert_eq!(rows.next(), Some("source,upper,applicable"));
    let table: Vec<Vec<&str>> = rows.map(|r| r.split(',').collect()).collect();
    let upper = |src: &str| -> f64 { table.iter().find(|r| r[0] == src).unwrap()[1].parse().unwrap() };
    assert_eq!(upper("convergence"), 0.4);
    let ergodic = (33f64.sqrt() - 5.0) / 2.0;
    assert!((upper("ergodic") - ergodic).abs() <= 1e-11 * ergodic);
    assert!(table.iter().all(|r| r[2] == "true"));
}

#[test]
fn beta_range_flags_values_near_a_bound() {
    let o = run(&["beta-range", path(&problem("symmetric-m3.json")), "--beta", "0.399"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("within 1% of the convergence bound"), "{}", err);
}

#[test]
fn beta_range_without_strong_blocks_is_not_applicable() {
    let o = run(&["beta-range", path(&problem("eq-four.json"))]);
    assert_eq!(o.status.code(), Some(0));
    for row in stdout(&o).lines().skip(1) {
        assert!(row.ends_with(",,false"), "{}", row);
    }
}

#[test]
fn beta_range_rejects_two_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("two.json");
    std::fs::write(
        &f,
        r#"{"m": 2, "b": [1], "blocks": [
            {"A": [[1]], "objective": {"type": "zero"}, "set": {"type": "free"}},
            {"A": [[1]], "objective": {"type": "quadratic", "P": [[1]], "q": [0]}, "set": {"type": "free"}}
        ]}"#,
    )
    .unwrap();
    assert_eq!(run(&["beta-range", path(&f)]).status.code(), Some(1));
}

fn parse_matrix(v: &serde_json::Value) -> Matrix {
    let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone()).unwrap();
    Matrix::from_rows(&rows).unwrap()
}

#[test]
fn spectral_dump_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("dump.json");
    let o = run(&["spectral", path(&problem("three-strong.json")), "--beta", "1", "--beta", "0.0066", "--dump", path(&d)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "source,beta,rho,prediction");
    assert!(rows[1].starts_with("quadratic,1,") && rows[1].ends_with(",divergent"));
    assert!(rows[2].starts_with("quadratic,0.0066,") && rows[2].ends_with(",convergent"));

    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&d).unwrap()).unwrap();
    for entry in doc.as_array().unwrap() {
        let (l, r, s) = (parse_matrix(&entry["L"]), parse_matrix(&entry["R"]), parse_matrix(&entry["S"]));
        let gap = l.matmul(&s).unwrap().sub(&r).unwrap().frobenius_norm();
        assert!(gap <= 1e-10 * r.frobenius_norm().max(1.0), "{}", gap);
    }
}

#[test]
fn spectral_case_and_file_agree() {
    let by_case = stdout(&run(&["spectral", "--case", "eq-four"]));
    let by_file = stdout(&run(&["spectral", path(&problem("eq-four.json"))]));
    let rho = |s: &str| s.lines().nth(1).unwrap().split(',').nth(2).unwrap().to_string();
    assert_eq!(rho(&by_case), rho(&by_file));
    assert!(by_case.contains(",,"), "homogeneous rows leave beta empty");
}

#[test]
fn spectral_needs_beta_for_quadratic_files() {
    assert_eq!(run(&["spectral", path(&problem("three-strong.json"))]).status.code(), Some(64));
    assert_eq!(run(&["spectral"]).status.code(), Some(64));
    assert_eq!(
        run(&["spectral", path(&problem("eq-four.json")), "--case", "eq-four"]).status.code(),
        Some(64)
    );
}

fn sweep(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.arg("sweep").args(args);
    match threads {
        Some(t) => cmd.env("MBADMM_THREADS", t),
        None => cmd.env_remove("MBADMM_THREADS"),
    };
    cmd.output().unwrap()
}

#[test]
fn sweep_rows_follow_grid_order() {
    let sym = problem("symmetric-m3.json");
    let grid = "0.3,0.01,0.2,0.05,0.1";
    let o = sweep(&[path(&sym), "--beta-grid", grid], Some("2"));
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|r| r.split(',').collect()).collect();
    assert_eq!(out.lines().next(), Some("beta,status,iters,final_primal,fit_exponent"));
    assert_eq!(rows.len(), 5);
    for (row, beta) in rows.iter().zip(grid.split(',')) {
        assert_eq!(row[0], beta);
        assert_eq!(row[1], "converged");
    }
    // thread count does not change the output
    let serial = sweep(&[path(&sym), "--beta-grid", grid], Some("1"));
    assert_eq!(serial.stdout, o.stdout);
}

#[test]
fn sweep_writes_to_file_and_records_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = sweep(
        &[
            path(&problem("eq-four.json")),
            "--beta-grid",
            "log:0.1:10:3",
            "--init",
            "random",
            "--out",
            path(&out),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let statuses: Vec<&str> = text.lines().skip(1).map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(statuses, vec!["diverged"; 3]);
}

#[test]
fn sweep_usage_errors() {
    let sym = problem("symmetric-m3.json");
    assert_eq!(sweep(&[path(&sym), "--beta-grid", ""], None).status.code(), Some(64));
    assert_eq!(sweep(&[path(&sym), "--beta-grid", "lin:1:0:3"], None).status.code(), Some(64));
    assert_eq!(sweep(&[path(&sym), "--beta-grid", "-1"], None).status.code(), Some(64));
    assert_eq!(sweep(&[path(&sym), "--beta-grid", "1"], Some("zero")).status.code(), Some(64));
}

#[test]
fn reproduce_cases_pass() {
    for case in ["eq-four", "four-one-strong", "three-strong-beta"] {
        let o = run(&["reproduce", case]);
        let out = stdout(&o);
        assert_eq!(o.status.code(), Some(0), "{}", out);
        assert!(out.contains("PASS") && !out.contains("FAIL"), "{}", out);
    }
    let three = stdout(&run(&["reproduce", "three-strong-beta"]));
    assert!(three.contains("rho = 1.0258689 at beta = 1"));
    assert!(three.contains("rho = 0.9585944 at beta = 0.0066"));
    assert!(three.contains("computed 2.22222222222e-3, stated 6.66666666667e-3"));
}

#[test]
fn validate_prints_structure() {
    let o = run(&["validate", path(&problem("four-one-strong.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("strongly_convex_blocks: 1"));
    assert!(out.contains("structural_conditions: false"));
    let o = run(&["validate", path(&problem("symmetric-m3.json"))]);
    assert!(stdout(&o).contains("structural_conditions: true"));
}
