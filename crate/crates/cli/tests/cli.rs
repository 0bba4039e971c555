use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carbon-mec")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("learner.toml");
    std::fs::write(&p, "episodes = 2\nhidden = [8]\nbatch_size = 8\nbuffer_capacity = 256\nupdate_mode = \"per_slot\"\n").unwrap();
    p.display().to_string()
}

fn tiny_scenario(dir: &Path) -> String {
    let p = dir.join("scenario.txt");
    std::fs::write(&p, carbon_mec_scenario_text()).unwrap();
    p.display().to_string()
}

fn carbon_mec_scenario_text() -> String {
    carbon_mec::scenario::default_scenario().with_dims(2, 3, 6).to_text()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&bin(&["train", "--bogus"])), 1);
    assert_eq!(code(&bin(&[])), 1);
    assert_eq!(code(&bin(&["--help"])), 0);
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = bin(&["train", "--algorithms", "PPO", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("PPO"));
}

#[test]
fn bad_learner_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "gamma = 3.0\n").unwrap();
    let o = bin(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let o = bin(&["eval", "--checkpoint", dir.path().join("missing.ckpt").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = tiny_config(dir.path());
    let o = bin(&["train", "--config", &cfg, "--algorithms", "Random", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_eval_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, scen) = (tiny_config(dir.path()), tiny_scenario(dir.path()));
    let out = dir.path().join("run");
    let o = bin(&["--sequential", "train", "--scenario", &scen, "--config", &cfg, "--seeds", "3", "--algorithms", "R2DSAC,Random", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("manifest hash"));
    let metrics = std::fs::read_to_string(out.join("metrics/R2DSAC_seed3.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 3);
    assert!(out.join("train_energy.json").exists());

    let ck = out.join("checkpoints/R2DSAC_seed3.ckpt");
    let o = bin(&["eval", "--checkpoint", ck.to_str().unwrap(), "--scenario", &scen, "--seeds", "1,2", "--episodes", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 5);

    let traj = dir.path().join("traj");
    let export = || bin(&["export-traj", "--checkpoint", ck.to_str().unwrap(), "--scenario", &scen, "--seeds", "4", "--episodes", "2", "--out", traj.to_str().unwrap()]);
    assert_eq!(code(&export()), 0);
    let first = std::fs::read(traj.join("trajectories_seed4.csv")).unwrap();
    assert_eq!(code(&export()), 0);
    assert_eq!(first, std::fs::read(traj.join("trajectories_seed4.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    // 2 episodes × 6 slots × 2 UAVs.
    assert_eq!(text.lines().count(), 1 + 24);
}

#[test]
fn ablate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, scen) = (tiny_config(dir.path()), tiny_scenario(dir.path()));
    let out = dir.path().join("abl");
    let o = bin(&["ablate", "--scenario", &scen, "--config", &cfg, "--episodes", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let labels: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, vec!["R2DSAC", "BCDSAC", "TDSAC", "DSAC"]);
}

#[test]
fn manifest_file_drives_training() {
    let dir = tempfile::tempdir().unwrap();
    tiny_scenario(dir.path());
    let manifest = dir.path().join("run.toml");
    let out = dir.path().join("m");
    std::fs::write(
        &manifest,
        format!(
            "scenario = \"scenario.txt\"\nseeds = [1]\nalgorithms = [\"SAC\"]\nout_dir = {:?}\n[learner]\nepisodes = 1\nhidden = [4]\nbatch_size = 4\n",
            out.display().to_string()
        ),
    )
    .unwrap();
    let o = bin(&["train", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("metrics/SAC_seed1.csv").exists());
    assert!(std::fs::read_to_string(out.join("manifest.toml")).unwrap().starts_with("# content hash "));
}

#[test]
fn retrieval_ingest_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs");
    std::fs::create_dir(&docs).unwrap();
    std::fs::write(docs.join("energy.md"), "# Hover Power\nhovering draws rotor power\n# Uplink\nshannon rate\n").unwrap();
    std::fs::write(docs.join("carbon.md"), "# Grid Carbon\nintensity factor\n").unwrap();
    let trip = dir.path().join("t.tsv");
    std::fs::write(&trip, "UAV\tconsumes\tpropulsion energy\nuav\tconsumes\tpropulsion energy\n").unwrap();
    let idx = dir.path().join("index.json");
    let o = bin(&["retrieval", "ingest", "--docs", docs.to_str().unwrap(), "--triplets", trip.to_str().unwrap(), "--out", idx.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "blocks 3 keywords 6 nodes 2 edges 1 duplicate triplets 1");

    let o = bin(&["retrieval", "query", "--index", idx.to_str().unwrap(), "--mode", "hybrid", "--query", "uav hover power"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.lines().next().unwrap().starts_with("[keyword"), "{s}");
    assert!(s.contains("[graph] uav consumes propulsion energy"));

    let o = bin(&["retrieval", "query", "--index", idx.to_str().unwrap(), "--mode", "vector", "--query", "zebra"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no document"));

    std::fs::write(&trip, "a\tb\tc\nbroken line\n").unwrap();
    let o = bin(&["retrieval", "ingest", "--docs", docs.to_str().unwrap(), "--triplets", trip.to_str().unwrap(), "--out", idx.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}
