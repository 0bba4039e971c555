use carbon_mec::experiment::{
    checkpoint_path, evaluate_checkpoint, export_trajectories, read_summary_csv, recompute_summary, run_experiment, RunManifest,
};
use carbon_mec::learner::{Algorithm, LearnerConfig, UpdateMode, Variant};
use carbon_mec::nn::Checkpoint;
use carbon_mec::scenario::default_scenario;
use carbon_mec::Exec;

fn manifest(dir: &std::path::Path) -> RunManifest {
    let cfg = LearnerConfig { episodes: 3, hidden: vec![8], batch_size: 8, buffer_capacity: 256, update_mode: UpdateMode::PerSlot, ..LearnerConfig::default() };
    let scen = dir.join("scenario.txt");
    std::fs::write(&scen, default_scenario().with_dims(2, 3, 6).to_text()).unwrap();
    let mut m = RunManifest::new(cfg, vec![1, 2], vec![Algorithm::Diffusion(Variant::R2dsac), Algorithm::Sac, Algorithm::Random], dir.join("out"));
    m.scenario = Some(scen);
    m
}

#[test]
fn summary_is_recomputable_from_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path());
    let report = run_experiment(&m, Exec::Parallel).unwrap();
    let again = recompute_summary(&m).unwrap();
    let on_disk = read_summary_csv(&m.out_dir.join("summary.csv")).unwrap();
    for rows in [&again, &on_disk] {
        assert_eq!(rows.len(), report.summary.len());
        for (a, b) in rows.iter().zip(&report.summary) {
            assert_eq!(a.algorithm, b.algorithm);
            for (x, y) in [(a.reward_mean, b.reward_mean), (a.reward_std, b.reward_std), (a.carbon_mean, b.carbon_mean), (a.penalty_mean, b.penalty_mean)] {
                assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }
    let manifest_text = std::fs::read_to_string(m.out_dir.join("manifest.toml")).unwrap();
    assert!(manifest_text.starts_with(&format!("# content hash {}", report.hash)));
    assert!(m.out_dir.join("train_energy.json").exists());
}

#[test]
fn trajectories_and_evaluation_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path());
    run_experiment(&m, Exec::Sequential).unwrap();
    let scenario = m.resolve_scenario().unwrap();
    let ck = Checkpoint::load(&checkpoint_path(&m.out_dir, Algorithm::Diffusion(Variant::R2dsac), 1)).unwrap();

    let a = export_trajectories(&ck, &scenario, &[5], 2, &dir.path().join("a")).unwrap();
    let b = export_trajectories(&ck, &scenario, &[5], 2, &dir.path().join("b")).unwrap();
    let text = std::fs::read_to_string(&a[0]).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b[0]).unwrap());
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let c = &scenario.config;
    assert_eq!(rows.len(), 2 * c.num_slots * c.num_uavs);
    for r in rows {
        let f: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((0.0..=c.area_x).contains(&f[3]) && (0.0..=c.area_y).contains(&f[4]), "{r}");
    }

    let seq = evaluate_checkpoint(&ck, &scenario, &[5, 6], 2, Exec::Sequential).unwrap();
    let par = evaluate_checkpoint(&ck, &scenario, &[5, 6], 2, Exec::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.len(), 4);
}
