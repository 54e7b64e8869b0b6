mod common;

use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajrecon::bench::{generate_ground_truth, ScenarioSpec};
use trajrecon::eval::EvalReport;
use trajrecon::io::{read_fragments, read_trajectories, write_fragments, write_trajectories};

fn trajrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajrecon")).args(args).env_remove("TRAJRECON_THREADS").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn two_vehicles(dir: &Path) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let frags = vec![
        common::line("f1", 0.0, 2.0, 0.0, 60.0, 6.0, 0.0, &mut rng),
        common::line("f2", 0.4, 2.4, 20.0, 50.0, 18.0, 0.0, &mut rng),
        common::line("f3", 3.0, 5.0, 180.0, 60.0, 6.0, 0.0, &mut rng),
        common::line("f4", 3.4, 5.4, 170.0, 50.0, 18.0, 0.0, &mut rng),
    ];
    let p = dir.join("raw.jsonl");
    write_fragments(&p, &common::sort_by_end(frags)).unwrap();
    p
}

#[test]
fn evaluate_identical_sets_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec { duration: 30.0, ..ScenarioSpec::scaled(0.3) };
    let gt = generate_ground_truth(&spec, 2).unwrap();
    assert!(!gt.is_empty());
    let g = dir.path().join("gt.jsonl");
    write_trajectories(&g, &gt).unwrap();
    let json = dir.path().join("report.json");
    let out = trajrecon(&["evaluate", "--gt", s(&g), "--pred", s(&g), "--json", s(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: EvalReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!((r.precision, r.recall, r.mota, r.motp), (1.0, 1.0, 1.0, 1.0));
    assert_eq!((r.fgmt_per_gt, r.sw_per_gt), (0.0, 0.0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Precision"));
}

#[test]
fn missing_input_names_the_path() {
    let out = trajrecon(&["associate", "-i", "/nonexistent/frags.jsonl", "-o", "/tmp/never.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/frags.jsonl"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(trajrecon(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(trajrecon(&["evaluate", "--bogus"]).status.code(), Some(2));
    assert_eq!(trajrecon(&[]).status.code(), Some(2));
    assert_eq!(trajrecon(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_equals_chained_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let raw = two_vehicles(dir.path());
    let cfg = dir.path().join("pipeline.cfg");
    std::fs::write(&cfg, "input = raw.jsonl\noutput = run.jsonl\nchains = run_chains.jsonl\nsummary = summary.json\np_enter = 0.2\np_exit = 0.2\nbeta = 2\n").unwrap();

    let out = trajrecon(&["--config", s(&cfg), "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"trajectories\": 2"));

    let chains = dir.path().join("chains.jsonl");
    let traj = dir.path().join("chained.jsonl");
    assert!(trajrecon(&["--config", s(&cfg), "associate", "-i", s(&raw), "-o", s(&chains)]).status.success());
    let out = trajrecon(&["--config", s(&cfg), "rectify", "-i", s(&raw), "--chains", s(&chains), "-o", s(&traj)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let a = std::fs::read(dir.path().join("run.jsonl")).unwrap();
    let b = std::fs::read(&traj).unwrap();
    assert_eq!(a, b);
    assert_eq!(std::fs::read(dir.path().join("run_chains.jsonl")).unwrap(), std::fs::read(&chains).unwrap());
    let t = read_trajectories(&traj).unwrap();
    assert_eq!(t.iter().map(|t| t.fragment_ids.clone()).collect::<Vec<_>>(), [["f1", "f3"], ["f2", "f4"]]);
}

#[test]
fn generate_then_perturb() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scenario.cfg");
    std::fs::write(&scen, "preset = replica\nduration = 40\n").unwrap();
    let gt = dir.path().join("gt.jsonl");
    let raw = dir.path().join("raw.jsonl");
    let out = trajrecon(&["--config", s(&scen), "--seed", "3", "generate", "-o", s(&gt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = trajrecon(&["--seed", "3", "perturb", "--gt", s(&gt), "-o", s(&raw)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g = read_trajectories(&gt).unwrap();
    let r = read_fragments(&raw).unwrap();
    assert!(r.len() > g.len());
    assert!(r.iter().all(|f| f.gt_id.is_some()));

    let again = dir.path().join("gt2.jsonl");
    assert!(trajrecon(&["--config", s(&scen), "--seed", "3", "generate", "-o", s(&again)]).status.success());
    assert_eq!(std::fs::read(&gt).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn threads_env_must_be_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let raw = two_vehicles(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_trajrecon"))
        .args(["run", "-i", s(&raw), "-o", s(&dir.path().join("o.jsonl"))])
        .env("TRAJRECON_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TRAJRECON_THREADS"));
}

#[test]
fn plot_writes_png() {
    let dir = tempfile::tempdir().unwrap();
    let raw = two_vehicles(dir.path());
    let png = dir.path().join("ts.png");
    let out = trajrecon(&["plot", "-i", s(&raw), "-o", s(&png)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(&std::fs::read(&png).unwrap()[1..4], b"PNG");
}
