use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedpairing::channel::CostModel;
use fedpairing::data::{generate_synthetic, SyntheticParams};
use fedpairing::harness::{
    build_deployment, pairing_round_times, Deployment, ExperimentConfig, ScenarioParams,
};
use fedpairing::model::ModelParams;
use fedpairing::pairing::{build_graph, greedy_pairing, WeightParams};
use fedpairing::protocol::{paired_local_training, LocalSgd, PairPlan, PairTask};

fn deployment(n: usize) -> Deployment {
    let params = ScenarioParams {
        num_clients: n,
        ..ScenarioParams::default()
    };
    build_deployment(&params, 2500, 1).unwrap()
}

fn bench_greedy(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_pairing");
    let cfg = ExperimentConfig::default();
    for n in [20, 100, 400] {
        let dep = deployment(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &dep, |b, dep| {
            b.iter(|| greedy_pairing(&build_graph(black_box(&dep.clients), &cfg.channel, &WeightParams::default()).unwrap()))
        });
    }
    group.finish();
}

fn bench_paired_epoch(c: &mut Criterion) {
    let data = generate_synthetic(&SyntheticParams::default(), 2).unwrap().train;
    let dims = [16, 64, 64, 32, 10];
    let cost = CostModel::new(dims.to_vec(), 1e8, 8).unwrap();
    let plan = PairPlan::from_lengths((0, 1), (3, 1), 4).unwrap();
    let shard_i: Vec<usize> = (0..250).collect();
    let shard_j: Vec<usize> = (250..500).collect();
    let task = PairTask {
        plan: &plan,
        data: &data,
        shard_i: &shard_i,
        shard_j: &shard_j,
        a_i: 0.5,
        a_j: 0.5,
        cost: &cost,
    };
    let sgd = LocalSgd {
        epochs: 1,
        batch_size: 32,
        lr: 0.05,
        seed: 3,
        round: 1,
    };
    let model = ModelParams::init_mlp(&dims, 4).unwrap();
    c.bench_function("paired_epoch_250x2", |b| {
        b.iter(|| paired_local_training(black_box(&task), model.clone(), model.clone(), &sgd).unwrap())
    });
}

fn bench_round_latency(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let dep = deployment(20);
    c.bench_function("pairing_round_times_20", |b| {
        b.iter(|| pairing_round_times(black_box(&cfg), &dep).unwrap())
    });
}

criterion_group!(benches, bench_greedy, bench_paired_epoch, bench_round_latency);
criterion_main!(benches);
