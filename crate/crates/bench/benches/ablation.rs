use std::path::Path;

use criterion::{criterion_group, criterion_main, Criterion};

use tasim_core::{load_scenario, run_ablation, BackendConfig, ExperimentConfig, Gateway};

fn ablation(c: &mut Criterion) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/monday_meeting/scenario.toml");
    let scenario = load_scenario(&path).unwrap();
    let gateway = Gateway::new(BackendConfig::scripted_seeded(0)).unwrap();

    let mut group = c.benchmark_group("ablation");
    group.sample_size(10);
    group.bench_function("default_scripted", |b| {
        b.iter(|| run_ablation(&ExperimentConfig::new(scenario.clone()), &gateway).unwrap())
    });
    group.bench_function("single_thread_4x2", |b| {
        let mut config = ExperimentConfig::new(scenario.clone());
        config.dialogues_per_condition = 4;
        config.turns_per_agent = 2;
        config.parallelism = 1;
        b.iter(|| run_ablation(&config, &gateway).unwrap())
    });
    group.finish();
}

criterion_group!(benches, ablation);
criterion_main!(benches);
