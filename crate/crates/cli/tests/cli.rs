use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clonesim(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clonesim"))
        .args(args)
        .env("CLONESIM_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn parse_xy(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y"), "{}", path.display());
    lines
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn lists_all_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let o = clonesim(&["presets"], tmp.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 7);
    let o = clonesim(&["presets", "sim_gg1_3dist"], tmp.path());
    assert!(stdout(&o).contains("type = \"equivalent\""));
}

#[test]
fn run_then_analyze_gg1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = clonesim(&["run", "sim_gg1_3dist", "--requests", "3000", "--reps", "2", "--jobs", "2"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run_dir = tmp.path().join("sim_gg1_3dist");
    assert!(run_dir.join("manifest.json").exists());
    assert!(run_dir.join("timing.json").exists());

    let o = clonesim(&["analyze", run_dir.to_str().unwrap(), "--figure", "gg1"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["3dist-ps.csv", "equivalent-ps.csv"] {
        let pts = parse_xy(&run_dir.join("data/gg1-example").join(file));
        assert!(!pts.is_empty() && pts.len() <= 2000);
        assert!(pts.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(pts.last().unwrap().1, 1.0);
    }

    let o = clonesim(&["analyze", run_dir.to_str().unwrap(), "--figure", "delays"], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn explicit_out_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("here");
    let o = clonesim(
        &["run", "sim_randomized_arrival_delays", "--requests", "1000", "--reps", "2", "--seed", "5", "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["scenario"]["requests"], 1000);
    let o = clonesim(&["analyze", out.join("manifest.json").to_str().unwrap(), "--figure", "delays"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bound = fs::read_to_string(out.join("data/randomized-delays/randomized_arrival_delays_confint_bound.txt")).unwrap();
    assert_eq!(bound.lines().count(), 5);
    assert!(bound.lines().all(|l| l.split_whitespace().count() == 4));
}

#[test]
fn unstable_scenario_is_refused_unless_allowed() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("hot.toml");
    fs::write(
        &file,
        "name = \"hot\"\narrival_rate = 1.2\nrequests = 500\nreplications = 2\n\n[[servers]]\nservice = { type = \"exponential\", rate = 1.0 }\n\n[strategy]\ntype = \"clone-to-all-groups\"\nclone_factor = 1\n",
    )
    .unwrap();
    let o = clonesim(&["run", file.to_str().unwrap()], tmp.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--allow-unstable"));
    let o = clonesim(&["run", file.to_str().unwrap(), "--allow-unstable"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn theory_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("exp.toml");
    fs::write(
        &file,
        "name = \"exp\"\narrival_rate = 0.9\n\n[[servers]]\ncount = 6\nservice = { type = \"exponential\", rate = 1.0 }\n\n[strategy]\ntype = \"clone-to-all-groups\"\nclone_factor = 1\n",
    )
    .unwrap();
    let o = clonesim(&["theory", file.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cf = parse_xy(&tmp.path().join("exp/theory/optclones-theory.csv"));
    assert_eq!(cf.len(), 90);
    assert!(cf.iter().all(|(_, c)| *c == 6.0));

    let o = clonesim(&["theory", "sim_optimal_clone-ps"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cf = parse_xy(&tmp.path().join("sim_optimal_clone-ps/theory/optclones-theory.csv"));
    assert!(cf.windows(2).all(|w| w[1].1 <= w[0].1));

    let o = clonesim(&["theory", file.to_str().unwrap(), "--from", "2", "--to", "3"], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn verify_subset_and_mutation() {
    let tmp = tempfile::tempdir().unwrap();
    let o = clonesim(&["verify", "--only", "1,10"], tmp.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("[PASS]")).count(), 2);

    let o = clonesim(&["verify", "--only", "1", "--json", "--fault-drain-scale", "2"], tmp.path());
    assert!(!o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["criteria"][0]["passed"], false);
}

#[test]
fn missing_manifest_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = clonesim(&["analyze", tmp.path().to_str().unwrap(), "--figure", "ecdf"], tmp.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("manifest.json"));
}
