use std::process::Command;

use lclab_cli::emit::{to_csv, CSV_COLUMNS};
use lclab_cli::{run_suite, CliError, RunOptions, SuiteConfig};

fn lclab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lclab"))
}

const SMALL: &str = r#"
seed = 7

[[measure]]
kind = "gaussian"
name = "g"
covariance = [[1.0, 0.3], [0.3, 1.0]]
radius = 6.0
shape = [49, 49]

[[measure]]
kind = "tilt"
name = "t"
base = "g"
theta = [0.2, 0.1]

[[pair]]
name = "p"
mu = "g"
nu = "t"

[[check]]
kind = "transport_entropy"
pairs = ["p"]

[[check]]
kind = "variance_identity"
measures = ["g", "t"]

[[check]]
kind = "variance_bounds"
measures = ["g"]
samples = 4000
"#;

fn invalid(text: &str) -> String {
    match SuiteConfig::parse(text) {
        Err(CliError::ConfigInvalid(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn undefined_measure_is_named() {
    let m = invalid("[[check]]\nkind = \"borell\"\nmeasures = [\"nowhere\"]\n");
    assert!(m.contains("`nowhere`"), "{m}");
}

#[test]
fn unknown_key_reports_position() {
    let m = invalid("seed = 1\n\n[[measure]]\nkind = \"laplace\"\nname = \"l\"\nscales = [1.0]\nradius = 5.0\nshape = [65]\nshapes = [3]\n");
    assert!(m.contains("line") && m.contains("shapes"), "{m}");
}

#[test]
fn sampling_needs_a_seed() {
    let text = SMALL.replacen("seed = 7", "", 1);
    assert!(invalid(&text).contains("seed"));
}

#[test]
fn cycles_are_rejected() {
    let text = "[[measure]]\nkind = \"tilt\"\nname = \"a\"\nbase = \"b\"\ntheta = [0.0]\n\n[[measure]]\nkind = \"tilt\"\nname = \"b\"\nbase = \"a\"\ntheta = [0.0]\n";
    assert!(invalid(text).contains("depends on itself"));
}

#[test]
fn empty_suite_passes_with_empty_report() {
    let cfg = SuiteConfig::parse("").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_suite(&cfg, &RunOptions { out: Some(dir.path().into()), ..Default::default() }).unwrap();
    assert_eq!(out.exit_code, 0);
    assert!(out.reports.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    assert_eq!(csv.trim_end(), CSV_COLUMNS.join(","));
}

#[test]
fn reports_are_deterministic_and_ordered_by_config() {
    let cfg = SuiteConfig::parse(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_suite(&cfg, &RunOptions { out: Some(a.path().into()), jobs: Some(1), ..Default::default() }).unwrap();
    run_suite(&cfg, &RunOptions { out: Some(b.path().into()), jobs: Some(4), ..Default::default() }).unwrap();
    for f in ["reports.csv", "reports.json", "summary.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let ids: Vec<&str> = ra.reports.iter().map(|r| r.inequality_id.as_str()).collect();
    assert!(ids[0].starts_with("transport_entropy/p/"));
    assert!(ids.iter().position(|i| i.starts_with("variance_identity/g/")).unwrap()
        < ids.iter().position(|i| i.starts_with("variance_identity/t/")).unwrap());
    assert!(ids.last().unwrap().starts_with("variance_bounds/g/"));
    assert_eq!(ra.exit_code, 0);
}

#[test]
fn csv_rows_use_seventeen_digits() {
    let r = lclab::VerificationReport::inequality("one", 0.1, 1.0 / 3.0, 1.0, 0.0);
    let csv = to_csv(&[r]);
    let row = csv.lines().nth(1).unwrap();
    assert_eq!(row, "one,1.0000000000000001e-1,3.3333333333333331e-1,1.0000000000000000e0,2.3333333333333331e-1,nan,0.0000000000000000e0,PASS,");
}

#[test]
fn failing_check_sets_exit_status() {
    // a negative Poincare constant cannot hold for a nonconstant function
    let text = "[[measure]]\nkind = \"gaussian\"\nname = \"g\"\ncovariance = [[1.0]]\nradius = 6.0\nshape = [201]\n\n[[check]]\nkind = \"weighted_poincare\"\nmeasures = [\"g\"]\nconstant = -1.0\n";
    let cfg = SuiteConfig::parse(text).unwrap();
    assert_eq!(run_suite(&cfg, &RunOptions::default()).unwrap().exit_code, 1);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[[pair]]\nname = \"p\"\nmu = \"x\"\nnu = \"y\"\n").unwrap();
    let st = lclab().args(["verify", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, SMALL).unwrap();
    let out = dir.path().join("out");
    let st = lclab().args(["verify", "--config"]).arg(&good).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.join("reports.json").exists());
}

#[test]
fn dump_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let run = |args: &[&str]| {
        let o = lclab().args(args).arg("--config").arg(&cfg).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let map = run(&["map", "--kind", "knothe", "--mu", "g", "--nu", "t"]);
    assert!(map.starts_with("# knothe dim 2"));
    assert_eq!(map.lines().count(), 1 + 49 * 49);
    let rec = run(&["map", "--kind", "recentering", "--mu", "g"]);
    assert!(rec.lines().nth(1).unwrap().contains(" | "));
    let ex = run(&["example", "--measure", "t"]);
    let g: lclab::GridDensity<f64> = lclab::density::format::read_text(ex.as_bytes()).unwrap();
    assert_eq!(g.shape(), &[49, 49]);
    assert!(run(&["moments", "--measure", "g"]).lines().count() > 49);
}
