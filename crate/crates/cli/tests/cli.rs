use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adaptrial"));
    c.env_remove("ADAPTRIAL_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn config() -> String {
    data("worked_example.json").display().to_string()
}

fn small_sim<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "simulate", "--disease", "mansonellosis", "--sim", "S1", "--runs", "60", "--seed", "11", "--out", out,
        "--oracle-scale", "2",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn off_grid_alpha1_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let o = run(&small_sim(out.to_str().unwrap(), &["--alpha1", "0.9"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--alpha1"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_flag_and_subcommand_exit_one() {
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_threads_is_rejected() {
    let o = run(&["--threads", "0", "example", "--scenario", "trend"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_cohort_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["analyze", "--stage", "final", "--data", empty.to_str().unwrap(), "--config", &config()]);
    assert_eq!(o.status.code(), Some(1));

    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "id,arm,value\n1,placebo,3\n").unwrap();
    let o = run(&["analyze", "--stage", "final", "--data", wrong.to_str().unwrap(), "--config", &config()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for col in ["subject_id", "responder", "arm"] {
        assert!(err.contains(col), "{err}");
    }

    let missing = dir.path().join("nope.csv");
    let o = run(&["analyze", "--stage", "interim", "--data", missing.to_str().unwrap(), "--config", &config()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn same_seed_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let extra = ["--method", "wilcox_c", "--alpha1", "0.1,0.3", "--plotdata"];
    assert!(run(&small_sim(a.to_str().unwrap(), &extra)).status.success());
    assert!(run(&small_sim(b.to_str().unwrap(), &extra)).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let pa = dir.path().join("a_plotdata.csv");
    let pb = dir.path().join("b_plotdata.csv");
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let extra = ["--method", "lm,wilcox_c", "--alpha1", "0.2"];
    let mut one = small_sim(a.to_str().unwrap(), &extra);
    one.splice(0..0, ["--threads", "1"]);
    assert!(run(&one).status.success());
    let o = bin().env("ADAPTRIAL_THREADS", "3").args(small_sim(b.to_str().unwrap(), &extra)).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn full_s1_grid_has_75_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s1.csv");
    let o = run(&small_sim(out.to_str().unwrap(), &["--no-comparators"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("75 cells"), "{}", stdout(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "disease,sim_id,scenario,method,alpha1,n1,rho,dose,metric,value,mc_se");
    let cells: std::collections::BTreeSet<String> = lines
        .map(|l| l.split(',').skip(2).take(5).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(cells.len(), 75);
}

#[test]
fn comparator_rows_carry_prefixes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = run(&small_sim(out.to_str().unwrap(), &["--method", "wilcox_c", "--alpha1", "0.3", "--scenario", "trend_b"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let fixed: Vec<&str> = text.lines().filter(|l| l.contains(",ma1_") || l.contains(",ma2_")).collect();
    assert!(!fixed.is_empty());
    for l in fixed {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!((f[4], f[5]), ("NA", "NA"), "{l}");
    }
}

#[test]
fn json_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("j.csv");
    let mut args = vec!["--format", "json"];
    args.extend(small_sim(out.to_str().unwrap(), &["--method", "wilcox_c", "--alpha1", "0.3", "--no-comparators"]));
    let o = run(&args);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 5);

    let o = run(&["--format", "json", "example", "--scenario", "trend"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rejected"], serde_json::json!([2, 3]));
}

#[test]
fn all_effective_example_lists_every_hypothesis() {
    let o = run(&["example", "--scenario", "all-effective"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for h in ["H123 ", "H12 ", "H13 ", "H23 ", "H1 ", "H2 "] {
        assert!(text.contains(h), "missing {h}:\n{text}");
    }
    assert!(text.contains("H3    accepted at interim"));
    assert!(text.contains("rejected: H1, H2"));
}

#[test]
fn trend_example_explains_the_high_dose() {
    let o = run(&["example", "--scenario", "trend"]);
    let text = stdout(&o);
    assert!(text.contains("p3=0.000 <= 0.025"), "{text}");
    assert!(text.contains("case iii"));
    assert!(text.contains("rejected: H2, H3"));
}

#[test]
fn pooled_mode_sums_the_conditional_errors() {
    let thresholds = |mode: &str| -> serde_json::Value {
        let o = run(&["--format", "json", "example", "--scenario", "all-effective", "--realloc", mode]);
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["report"]["closed_test"]["intersections"]
            .as_array()
            .unwrap()
            .iter()
            .find(|x| x["j"] == serde_json::json!([1, 3]))
            .unwrap()["thresholds"]
            .clone()
    };
    let strict = thresholds("strict")[1].as_f64().unwrap();
    let pooled = thresholds("pooled")[1].as_f64().unwrap();
    // J = {1,3}, K = {1,2}: pooled adds A3 at alpha/2 to A1 at alpha/2
    approx::assert_abs_diff_eq!(pooled, strict + 0.025 / 2.0, epsilon = 1e-12);
}

#[test]
fn example_dump_round_trips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("trend.csv");
    let o = run(&["example", "--scenario", "trend", "--dump", dump.to_str().unwrap()]);
    assert!(o.status.success());
    let a = run(&["analyze", "--stage", "final", "--data", dump.to_str().unwrap(), "--config", &config()]);
    let b = run(&["analyze", "--stage", "final", "--data", data("trend.csv").to_str().unwrap(), "--config", &config()]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn analyze_interim_on_trend() {
    let o = run(&["analyze", "--stage", "interim", "--data", data("trend.csv").to_str().unwrap(), "--config", &config()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("p low = 0.391   p medium = 0.047"), "{text}");
    assert!(text.contains("case iii: stage-2 doses K = {2,3}"));
    assert!(text.contains("placebo 27, low 0, medium 27, high 26"));
}

#[test]
fn analyze_final_on_all_effective() {
    let path = data("all_effective.csv");
    let o = run(&["analyze", "--stage", "final", "--data", path.to_str().unwrap(), "--config", &config()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let row = |dose: &str| text.lines().find(|l| l.trim_start().starts_with(dose) && l.contains('(')).unwrap().to_string();
    assert!(row("low").ends_with("0.65 (0.55)"), "{text}");
    assert!(row("medium").ends_with("0.70 (0.60)"), "{text}");
}

#[test]
fn scenarios_lists_five_rows() {
    let o = run(&["--format", "json", "scenarios", "--disease", "onchocerciasis", "--sim", "S3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let n = v.as_array().or_else(|| v["scenarios"].as_array()).unwrap().len();
    assert_eq!(n, 5);
}
