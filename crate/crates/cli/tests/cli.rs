//! End-to-end runs of the binary: outputs, library equivalence, exit codes, artifacts.

use std::path::Path;
use std::process::{Command, Output};

use mswig_core::EstimandKind;
use mswig_stats::dataset::{Dataset, Roles};
use mswig_stats::moments::EstimatorOptions;
use mswig_stats::pipeline::{estimate, EstimateRequest, Model};
use mswig_stats::sim::{simulate, ScmSpec, Template};

const ROLES: &str = r#"{"treatment":"D","selection":"S","outcomeProxy":"Y","covariates":["X"]}"#;

fn mswig(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mswig")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_sim(dir: &Path, spec: &ScmSpec) -> Dataset {
    let sim = simulate(spec).unwrap();
    std::fs::write(dir.join("data.csv"), sim.observed.to_csv_string()).unwrap();
    sim.observed
}

#[test]
fn derive_lists_the_mcar_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&mswig(&["derive", "--graph", "builtin:M1"], dir.path()));
    let lines: Vec<&str> = out.lines().collect();
    // Canonical orientation puts the lexicographically smaller singleton first.
    assert!(lines.contains(&"S _||_ Y"), "{out}");
    assert!(lines.contains(&"D _||_ S"), "{out}");
}

#[test]
fn derive_reads_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m1.g"), mswig_core::models::M1).unwrap();
    let file = stdout(&mswig(&["derive", "--graph", "m1.g", "--scope", "observed"], dir.path()));
    assert_eq!(file, "D _||_ S\n");
}

#[test]
fn estimate_matches_the_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sim(dir.path(), &ScmSpec::new(Template::M2, 600, 4));
    // The CSV round trip is exact, so the CLI sees the same numbers.
    let reread = Dataset::read_csv(&dir.path().join("data.csv")).unwrap();
    assert_eq!(reread.to_csv_string(), data.to_csv_string());
    let args = ["estimate", "--data", "data.csv", "--roles", ROLES, "--model", "M2", "--estimand", "att", "--folds", "4", "--seed", "9"];
    let cli = stdout(&mswig(&args, dir.path()));
    let req = EstimateRequest {
        model: Model::M2,
        estimand: EstimandKind::Att,
        roles: Roles::new("D", "S", "Y", &["X"]),
        options: EstimatorOptions { folds: 4, seed: 9, ..Default::default() },
        randomized: false,
    };
    let lib = serde_json::to_string_pretty(&estimate(&reread, &req).unwrap()).unwrap() + "\n";
    assert_eq!(cli, lib);
}

#[test]
fn bounds_collapse_without_attrition() {
    let dir = tempfile::tempdir().unwrap();
    write_sim(dir.path(), &ScmSpec::new(Template::M2, 400, 5).with("s.0", 60.0));
    let out = stdout(&mswig(&["estimate", "--data", "data.csv", "--roles", ROLES, "--model", "ZRLee"], dir.path()));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let r = &v["unconditional"];
    assert_eq!(r["collapsed"], true);
    assert_eq!(r["interval"][0], r["interval"][1]);
}

#[test]
fn csv_output_has_the_unconditional_block() {
    let dir = tempfile::tempdir().unwrap();
    write_sim(dir.path(), &ScmSpec::new(Template::M2, 400, 6));
    let out = stdout(&mswig(&["estimate", "--data", "data.csv", "--roles", ROLES, "--model", "M3", "--format", "csv"], dir.path()));
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("block,group,estimand"));
    assert!(lines.next().unwrap().starts_with("unconditional,all,always-observed,"));
}

#[test]
fn exit_codes_separate_validation_from_estimation() {
    let dir = tempfile::tempdir().unwrap();
    write_sim(dir.path(), &ScmSpec::new(Template::M2, 200, 7));
    let bad_roles = r#"{"treatment":"D","selection":"Q","outcomeProxy":"Y"}"#;
    let o = mswig(&["estimate", "--data", "data.csv", "--roles", bad_roles, "--model", "M2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown column `Q`"));

    // An outcome present where selection is 0 violates the proxy rule.
    std::fs::write(dir.path().join("leak.csv"), "D,S,Y,X\n1,0,2.5,0.1\n0,1,1.0,0.2\n1,1,0.5,0.3\n0,0,,0.4\n").unwrap();
    let o = mswig(&["estimate", "--data", "leak.csv", "--roles", ROLES, "--model", "M2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("present although `S` = 0"));

    assert_eq!(mswig(&["estimate", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(mswig(&["derive", "--graph", "missing.g"], dir.path()).status.code(), Some(1));

    // One selected treated row: some fold has no training rows for that cell.
    let mut csv = String::from("D,S,Y,X\n1,1,2.0,0.0\n");
    for i in 1..20 {
        csv.push_str(&if i % 2 == 0 { format!("0,1,1.{i},{i}\n") } else { format!("1,0,,{i}\n") });
    }
    std::fs::write(dir.path().join("thin.csv"), csv).unwrap();
    let o = mswig(&["estimate", "--data", "thin.csv", "--roles", ROLES, "--model", "M2"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn runs_are_logged_with_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = mswig(&["derive", "--graph", "builtin:M2", "--seed", "17"], dir.path());
    let log = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(log.contains("command=derive spec_hash=") && log.contains("seed=17"), "{log}");
}

#[test]
fn simulate_writes_three_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |prefix: &str| {
        let out = stdout(&mswig(&["simulate", "--template", "M3", "--n", "300", "--seed", "8", "--set", "s.U=2", "--out", prefix], dir.path()));
        assert_eq!(out.lines().count(), 3);
        ["observed.csv", "hidden.csv", "spec.json"].map(|s| std::fs::read(dir.path().join(format!("{prefix}.{s}"))).unwrap())
    };
    let a = run("a/sim");
    let b = run("b/sim");
    assert_eq!(a, b);
    let spec: ScmSpec = serde_json::from_slice(&a[2]).unwrap();
    assert_eq!(spec.coefficients["s.U"], 2.0);
    let lib = simulate(&spec).unwrap();
    assert_eq!(a[0], lib.observed.to_csv_string().into_bytes());
    // Only the final files remain: temporaries were renamed into place.
    let names: Vec<String> = std::fs::read_dir(dir.path().join("a")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names.len(), 3, "{names:?}");
}

#[test]
fn test_verb_reports_catalog_decisions() {
    let dir = tempfile::tempdir().unwrap();
    write_sim(dir.path(), &ScmSpec::new(Template::M2, 800, 9));
    let out = stdout(&mswig(&["test", "--data", "data.csv", "--graph", "builtin:M2", "--out", "report.json"], dir.path()));
    assert!(out.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["tests"].as_array().unwrap().len(), 6);
    assert_eq!(v["reject"], true);
    let one = stdout(&mswig(&["test", "--data", "data.csv", "--statement", "D _||_ S | X", "--format", "csv"], dir.path()));
    assert_eq!(one.lines().count(), 2);
}

#[test]
fn graph_verbs_emit_their_documents() {
    let dir = tempfile::tempdir().unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&mswig(&["classify-missingness", "--graph", "builtin:M2"], dir.path()))).unwrap();
    assert_eq!(v["category"], "MAR");
    let v: serde_json::Value = serde_json::from_str(&stdout(&mswig(&["swig", "--graph", "builtin:M2"], dir.path()))).unwrap();
    assert!(v["nodes"].as_array().unwrap().iter().any(|n| n["term"] == "Y(d)"));
    let v: serde_json::Value =
        serde_json::from_str(&stdout(&mswig(&["check-identification", "--graph", "builtin:M2", "--adjust", "X"], dir.path()))).unwrap();
    assert_eq!(v["status"], "PointIdentified");
    let text = stdout(&mswig(&["implications", "--catalog", "panel-exclusion-ii"], dir.path()));
    assert!(text.contains("implied: D _||_ S\nimplied: D _||_ Y_0\n"), "{text}");
    let o = mswig(&["implications", "--catalog", "attrition"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn overlap_emits_plot_ready_histogram() {
    let dir = tempfile::tempdir().unwrap();
    write_sim(dir.path(), &ScmSpec::new(Template::M2, 500, 10));
    let out = stdout(&mswig(&["overlap", "--data", "data.csv", "--roles", ROLES, "--format", "csv"], dir.path()));
    assert_eq!(out.lines().next(), Some("bin_lower,bin_upper,arm0,arm1"));
    assert_eq!(out.lines().count(), 51);
}
