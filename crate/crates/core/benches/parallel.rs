//! Sequential vs rayon-parallel execution of the data-parallel kernels.

use std::collections::BTreeSet;
use std::hint::black_box;

use carbon_mec::energy::{assigned_links, slot_energy};
use carbon_mec::kinematics::UavControl;
use carbon_mec::learner::{build_agent, evaluate_episode, Algorithm, LearnerConfig, Variant};
use carbon_mec::mdp::{reset_world, PenaltyWeights};
use carbon_mec::retrieval::{score_documents, vector_retrieve, Corpus, Embedder, TfIdfEmbedder};
use carbon_mec::scenario::default_scenario;
use carbon_mec::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn policy_rollouts(c: &mut Criterion) {
    let scenario = default_scenario();
    let cfg = LearnerConfig { hidden: vec![64, 64], ..LearnerConfig::default() };
    let agent = build_agent(Algorithm::Diffusion(Variant::R2dsac), &scenario, &cfg, 0).expect("valid config");
    let weights = PenaltyWeights::default();
    let mut g = c.benchmark_group("policy_rollouts");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, 16), |b| {
            b.iter(|| exec.map_range(16, |e| evaluate_episode(agent.as_ref(), &scenario, &weights, e as u64, e as u64 + 1000, e).expect("episode runs").reward))
        });
    }
    g.finish();
}

fn slot_energy_sweep(c: &mut Criterion) {
    let scenario = default_scenario().with_dims(4, 20, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<_> = (0..2000u64)
        .map(|s| {
            let world = reset_world(&scenario, s);
            let assignment: Vec<usize> = (0..20).map(|_| rng.random_range(0..4)).collect();
            let f: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..scenario.compute.f_max)).collect();
            let controls: Vec<UavControl> = (0..4).map(|_| UavControl { heading: rng.random_range(0.0..std::f64::consts::TAU), speed: rng.random_range(0.0..60.0) }).collect();
            (world, assignment, f, controls)
        })
        .collect();
    let mut g = c.benchmark_group("slot_energy");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, cases.len()), |b| {
            b.iter(|| {
                exec.map(&cases, |(w, a, f, ctrl)| {
                    let links = assigned_links(w, a, &scenario).expect("valid assignment");
                    slot_energy(w, a, f, ctrl, &links, &scenario).expect("finite energy").total
                })
            })
        });
    }
    g.finish();
}

fn retrieval_scoring(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let files: Vec<(String, String)> = (0..200)
        .map(|f| {
            let body: String = (0..20)
                .map(|s| {
                    let words: Vec<String> = (0..40).map(|_| format!("w{}", rng.random_range(0..500))).collect();
                    format!("# h{} w{}\n{}\n", s, rng.random_range(0..500), words.join(" "))
                })
                .collect();
            (format!("doc{f}"), body)
        })
        .collect();
    let corpus = Corpus::from_texts(files.iter().map(|(n, t)| (n.as_str(), t.as_str())));
    let texts = corpus.texts();
    let embedder = TfIdfEmbedder::fit(&texts);
    let vectors: Vec<Vec<f64>> = texts.iter().map(|t| embedder.embed(t)).collect();
    let keywords: BTreeSet<String> = (0..30).map(|i| format!("w{}", i * 7)).collect();
    let query = "w1 w22 w333 w44 h3";

    let mut g = c.benchmark_group("retrieval");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(format!("keyword_{name}"), corpus.len()), |b| {
            b.iter(|| score_documents(black_box(&keywords), &corpus.documents, exec))
        });
        g.bench_function(BenchmarkId::new(format!("vector_{name}"), corpus.len()), |b| {
            b.iter(|| vector_retrieve(black_box(query), &vectors, &embedder, 5, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, policy_rollouts, slot_energy_sweep, retrieval_scoring);
criterion_main!(benches);
