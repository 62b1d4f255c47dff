mod common;

use common::{assert_schema_valid, out_dir, report, run};

const SINGLE: [&str; 4] = ["--set", "poles=[[0,0,0]]", "--set", "default_r0=1"];

#[test]
fn constants_reports_baras_goldstein_value() {
    let out = out_dir("constants");
    let o = run("constants", &out, &SINGLE);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["sections"]["constants"]["c_o"], 0.25);
    assert_eq!(r["exit_code"], 0);
    assert_eq!(r["provenance"]["seed"], 7);
    assert_schema_valid(&r);
}

#[test]
fn supercritical_ims_is_a_precondition_error() {
    let out = out_dir("super");
    let o = run("verify-hardy", &out, &["--set", "c=0.3", "--set", "method=ims_thm31"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("constant out of range"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn malformed_config_names_line() {
    let out = out_dir("malformed");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("bad.json");
    std::fs::write(&cfg, "{\n  \"dimension\": 3,\n  \"poles\": [[1,0,0]\n}\n").unwrap();
    let o = run("constants", &out, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn bad_field_names_path() {
    let out = out_dir("badfield");
    let o = run("constants", &out, &["--set", "weight.gama=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("weight"));
    let o = run("constants", &out, &["--set", "mesh.ratio=1.5"]);
    assert_eq!(o.status.code(), Some(0), "ratio is only read by mesh stages");
    let o = run("lambda1", &out, &["--set", "mesh.ratio=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh.ratio"));
}

#[test]
fn inadmissible_weight_is_rejected() {
    let out = out_dir("inadmissible");
    let o = run("weight-check", &out, &["--set", "weight.k2=-1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_echo_round_trips_to_identical_results() {
    let a = out_dir("echo-a");
    let o = run("partition-check", &a, &["--seed", "11", "--set", "partition.k0_c=[0.25]"]);
    assert_eq!(o.status.code(), Some(0));
    let first = report(&a);
    assert_schema_valid(&first);
    let cfg = a.join("echo.json");
    std::fs::write(&cfg, serde_json::to_string(&first["config_echo"]).unwrap()).unwrap();
    let b = out_dir("echo-b");
    let o = run("partition-check", &b, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let second = report(&b);
    assert_eq!(first["sections"], second["sections"]);
    assert_eq!(first["verdicts"], second["verdicts"]);
    assert_eq!(second["provenance"]["seed"], 11);
}

#[test]
fn weight_and_hardy_reports_validate() {
    let out = out_dir("weight");
    let o = run("weight-check", &out, &["--set", "weight.gamma=0.5", "--set", "weight.delta=1", "--set", "weight.k2=-0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["sections"]["weight_check"]["k1_source"], "audited");
    assert_schema_valid(&r);

    let out = out_dir("thm22");
    let o = run("verify-hardy", &out, &["--set", "method=vector_field_thm22"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["sections"]["verify_hardy"]["runs"].as_array().unwrap().len(), 2);
    assert_schema_valid(&r);
}

const SMALL_MESH: [&str; 8] = ["--set", "mesh.layers=2", "--set", "spectral.layer_step=2", "--set", "evolution.layer_step=2", "--set", "evolution.t_final=0.02"];

#[test]
fn lambda1_writes_level_csv() {
    let out = out_dir("lambda1");
    let mut args = SINGLE.to_vec();
    args.extend(SMALL_MESH);
    args.extend(["--set", "c=0"]);
    let o = run("lambda1", &out, &args);
    let r = report(&out);
    assert_schema_valid(&r);
    assert_ne!(o.status.code(), Some(2));
    let csv = std::fs::read_to_string(out.join("lambda1_c0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("level,dofs,lambda1,residual,lower_bound,converged"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn sweep_and_evolve_write_csvs() {
    let out = out_dir("sweep");
    let mut args = SINGLE.to_vec();
    args.extend(SMALL_MESH);
    args.extend(["--set", "spectral.levels=2"]);
    let o = run("optimality-sweep", &out, &args);
    assert!(matches!(o.status.code(), Some(1 | 3)), "{:?}", o.status);
    let r = report(&out);
    assert_schema_valid(&r);
    let w = std::fs::read_to_string(out.join("witness_c0.csv")).unwrap();
    assert!(w.starts_with("epsilon,quotient\n"));
    assert_eq!(w.lines().count(), 5);

    let out = out_dir("evolve");
    args.extend(["--set", "evolution.levels=2", "--set", "c=[0,0.5]"]);
    let o = run("evolve", &out, &args);
    assert_ne!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_schema_valid(&r);
    let t = std::fs::read_to_string(out.join("trace_c1_level1.csv")).unwrap();
    assert!(t.starts_with("t,norm,min_on_K\n"));
    // dt defaults to 10⁻³·T: 1000 steps plus the initial state.
    assert_eq!(t.lines().count(), 1002);
}

#[test]
fn runs_are_deterministic() {
    let a = out_dir("det-a");
    let b = out_dir("det-b");
    let args = ["--set", "method=vector_field_thm21", "--seed", "3"];
    assert_eq!(run("verify-hardy", &a, &args).status.code(), Some(0));
    assert_eq!(run("verify-hardy", &b, &args).status.code(), Some(0));
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(ra["sections"], rb["sections"]);
}
