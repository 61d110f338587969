//! Scenario construction and the experiments driven by the CLI.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use log::info;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{ClientProfile, CostModel, Position};
use crate::data::{generate_synthetic, partition_iid, partition_noniid, PartitionMode};
use crate::error::{Error, Result};
use crate::pairing::{pair_clients, Matching, PairingStrategy};
use crate::protocol::{
    fedavg_round_latency, fedpairing_round_latency, run_algorithm, splitfed_round_latency, vanilla_sl_round_latency,
    Algorithm, LatencySetup, RoundLatency, Scenario, ServerProfile, TrainingConfig, TrainingRun,
};
use crate::rng;

mod config;
mod output;

pub use config::{DataParams, ExperimentConfig, LatencyParams, LatencyProfile, ScenarioParams};
pub use output::{write_metrics_csv, MetricsRow, SUMMARY_SCHEMA};

/// Client placement and hardware for one scenario seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deployment {
    pub clients: Vec<ClientProfile>,
    pub server: ServerProfile,
    pub radius_m: f64,
    pub seed: u64,
}

/// Clients uniform in a disc around the server at the origin, with CPU
/// frequencies uniform in `[f_min_hz, f_max_hz]`.
pub fn build_deployment(params: &ScenarioParams, samples_per_client: usize, seed: u64) -> Result<Deployment> {
    params.validate()?;
    let mut rng = rng::stream(seed, &[rng::TAG_SCENARIO]);
    let mut clients: Vec<ClientProfile> = Vec::with_capacity(params.num_clients);
    while clients.len() < params.num_clients {
        let r = params.radius_m * rng.random::<f64>().sqrt();
        let theta = TAU * rng.random::<f64>();
        let position = Position::new(r * theta.cos(), r * theta.sin());
        let cpu_freq_hz = if params.f_max_hz > params.f_min_hz {
            rng.random_range(params.f_min_hz..=params.f_max_hz)
        } else {
            params.f_min_hz
        };
        // Co-located nodes have no defined channel gain; redraw.
        if position.norm() == 0.0 || clients.iter().any(|c| c.position == position) {
            continue;
        }
        clients.push(ClientProfile {
            id: clients.len(),
            cpu_freq_hz,
            dataset_size: samples_per_client,
            position,
        });
    }
    let fastest = clients.iter().map(|c| c.cpu_freq_hz).fold(0.0, f64::max);
    Ok(Deployment {
        clients,
        server: ServerProfile {
            cpu_freq_hz: params.server_speedup * fastest,
            position: Position::ORIGIN,
        },
        radius_m: params.radius_m,
        seed,
    })
}

/// Deployment, data, shards and matching for a training run.
pub fn build_training_scenario(cfg: &ExperimentConfig, mode: PartitionMode, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut deployment = build_deployment(&cfg.scenario, 1, seed)?;
    let data = generate_synthetic(&cfg.data.synthetic, seed)?;
    let n = cfg.scenario.num_clients;
    let shards = match mode {
        PartitionMode::Iid => partition_iid(&data.train, n, seed)?,
        PartitionMode::Noniid => partition_noniid(&data.train, n, cfg.data.classes_per_client, seed)?,
    };
    for (c, shard) in deployment.clients.iter_mut().zip(&shards.shards) {
        c.dataset_size = shard.len();
    }
    let matching = pair_clients(
        cfg.pairing_strategy,
        &deployment.clients,
        &cfg.channel,
        &cfg.pairing,
        seed,
    )?;
    let scenario = Scenario {
        clients: deployment.clients,
        server: deployment.server,
        channel: cfg.channel,
        weights: cfg.objective,
        cost: cfg.model_cost()?,
        matching,
        model_dims: cfg.model_dims(),
        train: data.train,
        test: data.test,
        shards,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn training_config(cfg: &ExperimentConfig, seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed,
        ..cfg.training.clone()
    }
}

/// Trains `algorithms` on one shared scenario; results follow the input order.
pub fn train_algorithms(
    cfg: &ExperimentConfig,
    mode: PartitionMode,
    seed: u64,
    algorithms: &[Algorithm],
) -> Result<Vec<(Algorithm, TrainingRun)>> {
    let scenario = build_training_scenario(cfg, mode, seed)?;
    let tcfg = training_config(cfg, seed);
    algorithms
        .par_iter()
        .map(|&alg| run_algorithm(alg, &scenario, &tcfg).map(|run| (alg, run)))
        .collect()
}

fn analytic_setup<'a>(cfg: &'a ExperimentConfig, cost: &'a CostModel, deployment: &'a Deployment) -> LatencySetup<'a> {
    LatencySetup {
        channel: &cfg.channel,
        cost,
        server: &deployment.server,
        weights: &cfg.objective,
        epochs: cfg.training.local_epochs,
        batch_size: cfg.training.batch_size,
        client_layers: cfg.training.client_layers,
    }
}

/// Seeds used by the comparisons: `seed, seed + 1, ...`.
pub fn comparison_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.comparison_seeds as u64).map(|k| cfg.seed.wrapping_add(k)).collect()
}

/// FedPairing round latency under every pairing strategy for one set of clients.
pub fn pairing_round_times(
    cfg: &ExperimentConfig,
    deployment: &Deployment,
) -> Result<Vec<(PairingStrategy, RoundLatency, Matching)>> {
    let cost = cfg.profile_cost()?;
    let setup = analytic_setup(cfg, &cost, deployment);
    PairingStrategy::ALL
        .iter()
        .map(|&strategy| {
            let matching = pair_clients(strategy, &deployment.clients, &cfg.channel, &cfg.pairing, deployment.seed)?;
            let latency = fedpairing_round_latency(&setup, &deployment.clients, &matching)?;
            Ok((strategy, latency, matching))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedTime {
    pub seed: u64,
    pub name: String,
    pub wall_clock_s: f64,
    pub sum_objective_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanTime {
    pub name: String,
    pub mean_wall_clock_s: f64,
    pub mean_sum_objective_s: f64,
    pub seeds: usize,
}

/// Per-name means over seeds, in first-appearance order.
fn mean_times(per_seed: &[SeedTime]) -> Vec<MeanTime> {
    let mut out: Vec<MeanTime> = Vec::new();
    for row in per_seed {
        match out.iter_mut().find(|m| m.name == row.name) {
            Some(m) => {
                m.mean_wall_clock_s += row.wall_clock_s;
                m.mean_sum_objective_s += row.sum_objective_s;
                m.seeds += 1;
            }
            None => out.push(MeanTime {
                name: row.name.clone(),
                mean_wall_clock_s: row.wall_clock_s,
                mean_sum_objective_s: row.sum_objective_s,
                seeds: 1,
            }),
        }
    }
    for m in &mut out {
        m.mean_wall_clock_s /= m.seeds as f64;
        m.mean_sum_objective_s /= m.seeds as f64;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeTable {
    pub means: Vec<MeanTime>,
    pub per_seed: Vec<SeedTime>,
}

impl TimeTable {
    fn from_per_seed(per_seed: Vec<SeedTime>) -> Self {
        Self {
            means: mean_times(&per_seed),
            per_seed,
        }
    }

    pub fn mean_wall_clock(&self, name: &str) -> Option<f64> {
        self.means.iter().find(|m| m.name == name).map(|m| m.mean_wall_clock_s)
    }
}

/// Mean analytic round time of FedPairing under each pairing strategy.
pub fn compare_pairing_mechanisms(cfg: &ExperimentConfig) -> Result<TimeTable> {
    cfg.validate()?;
    let per_seed: Vec<Vec<SeedTime>> = comparison_seeds(cfg)
        .into_par_iter()
        .map(|seed| {
            let dep = build_deployment(&cfg.scenario, cfg.latency.samples_per_client, seed)?;
            Ok(pairing_round_times(cfg, &dep)?
                .into_iter()
                .map(|(strategy, lat, _)| SeedTime {
                    seed,
                    name: strategy.name().to_string(),
                    wall_clock_s: lat.wall_clock_s,
                    sum_objective_s: lat.sum_objective_s,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(TimeTable::from_per_seed(per_seed.into_iter().flatten().collect()))
}

/// Analytic round time of each algorithm on one deployment. Vanilla SL
/// serves one client per round, so its time is the mean over clients.
pub fn algorithm_round_times(cfg: &ExperimentConfig, deployment: &Deployment) -> Result<Vec<(Algorithm, RoundLatency)>> {
    let cost = cfg.profile_cost()?;
    let setup = analytic_setup(cfg, &cost, deployment);
    let clients = &deployment.clients;
    let matching = pair_clients(cfg.pairing_strategy, clients, &cfg.channel, &cfg.pairing, deployment.seed)?;
    let sl_rounds = clients
        .iter()
        .map(|c| vanilla_sl_round_latency(&setup, c))
        .collect::<Result<Vec<_>>>()?;
    let n = sl_rounds.len() as f64;
    let sl = RoundLatency {
        units: Vec::new(),
        wall_clock_s: sl_rounds.iter().map(|r| r.wall_clock_s).sum::<f64>() / n,
        sum_objective_s: sl_rounds.iter().map(|r| r.sum_objective_s).sum::<f64>() / n,
        compute_s: sl_rounds.iter().map(|r| r.compute_s).sum::<f64>() / n,
        comm_s: sl_rounds.iter().map(|r| r.comm_s).sum::<f64>() / n,
    };
    Ok(vec![
        (Algorithm::Fedpairing, fedpairing_round_latency(&setup, clients, &matching)?),
        (Algorithm::Fedavg, fedavg_round_latency(&setup, clients)),
        (Algorithm::VanillaSl, sl),
        (Algorithm::Splitfed, splitfed_round_latency(&setup, clients)?),
    ])
}

pub fn compare_algorithm_times(cfg: &ExperimentConfig) -> Result<TimeTable> {
    cfg.validate()?;
    let per_seed: Vec<Vec<SeedTime>> = comparison_seeds(cfg)
        .into_par_iter()
        .map(|seed| {
            let dep = build_deployment(&cfg.scenario, cfg.latency.samples_per_client, seed)?;
            Ok(algorithm_round_times(cfg, &dep)?
                .into_iter()
                .map(|(alg, lat)| SeedTime {
                    seed,
                    name: alg.name().to_string(),
                    wall_clock_s: lat.wall_clock_s,
                    sum_objective_s: lat.sum_objective_s,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(TimeTable::from_per_seed(per_seed.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema: u32,
    pub algorithm: Algorithm,
    pub partition: PartitionMode,
    pub seed: u64,
    pub rounds: usize,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub mean_round_wall_clock_s: f64,
    pub mean_round_sum_objective_s: f64,
    pub config: ExperimentConfig,
}

impl RunSummary {
    fn new(cfg: &ExperimentConfig, algorithm: Algorithm, partition: PartitionMode, run: &TrainingRun) -> Self {
        let t = run.rounds.len().max(1) as f64;
        Self {
            schema: SUMMARY_SCHEMA,
            algorithm,
            partition,
            seed: cfg.seed,
            rounds: run.rounds.len(),
            initial_accuracy: run.initial_accuracy,
            final_accuracy: run.final_accuracy(),
            mean_round_wall_clock_s: run.rounds.iter().map(|r| r.latency.wall_clock_s).sum::<f64>() / t,
            mean_round_sum_objective_s: run.rounds.iter().map(|r| r.latency.sum_objective_s).sum::<f64>() / t,
            config: cfg.clone(),
        }
    }
}

/// Paths written by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Trains `cfg.algorithm` and writes its per-round CSV and JSON summary.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunSummary, Outputs)> {
    let mode = cfg.data.partition;
    let mut runs = train_algorithms(cfg, mode, cfg.seed, &[cfg.algorithm])?;
    let (alg, run) = runs.pop().expect("one algorithm requested");
    ensure_dir(out_dir)?;
    let stem = format!("run_{alg}_{mode}_seed{}", cfg.seed);
    let csv_path = out_dir.join(format!("{stem}.csv"));
    write_metrics_csv(&csv_path, &[(alg, &run)])?;
    let summary = RunSummary::new(cfg, alg, mode, &run);
    let json_path = out_dir.join(format!("{stem}.json"));
    output::write_json(&json_path, &summary)?;
    info!("{alg}: final accuracy {:.4}", summary.final_accuracy);
    Ok((
        summary,
        Outputs {
            files: vec![csv_path, json_path],
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonSummary<'a> {
    schema: u32,
    kind: &'static str,
    seed: u64,
    seeds: Vec<u64>,
    means: &'a [MeanTime],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    final_accuracy: Vec<FinalAccuracy>,
    config: &'a ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalAccuracy {
    pub partition: PartitionMode,
    pub algorithm: Algorithm,
    pub final_accuracy: f64,
    pub mean_round_wall_clock_s: f64,
}

pub fn write_pairing_comparison(cfg: &ExperimentConfig, table: &TimeTable, out_dir: &Path) -> Result<Outputs> {
    ensure_dir(out_dir)?;
    let stem = format!("pairing_comparison_seed{}", cfg.seed);
    let files = vec![
        out_dir.join(format!("{stem}.csv")),
        out_dir.join(format!("{stem}_per_seed.csv")),
        out_dir.join(format!("{stem}.json")),
    ];
    output::write_rows(&files[0], &table.means)?;
    output::write_rows(&files[1], &table.per_seed)?;
    output::write_json(
        &files[2],
        &ComparisonSummary {
            schema: SUMMARY_SCHEMA,
            kind: "pairing_comparison",
            seed: cfg.seed,
            seeds: comparison_seeds(cfg),
            means: &table.means,
            final_accuracy: Vec::new(),
            config: cfg,
        },
    )?;
    Ok(Outputs { files })
}

/// Round-time table plus IID and non-IID accuracy curves of all algorithms.
pub fn compare_algorithms(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(TimeTable, Vec<FinalAccuracy>, Outputs)> {
    let table = compare_algorithm_times(cfg)?;
    ensure_dir(out_dir)?;
    let stem = format!("algorithm_comparison_seed{}", cfg.seed);
    let mut files = vec![
        out_dir.join(format!("{stem}.csv")),
        out_dir.join(format!("{stem}_per_seed.csv")),
    ];
    output::write_rows(&files[0], &table.means)?;
    output::write_rows(&files[1], &table.per_seed)?;

    let mut finals = Vec::new();
    for mode in [PartitionMode::Iid, PartitionMode::Noniid] {
        let runs = train_algorithms(cfg, mode, cfg.seed, &Algorithm::ALL)?;
        let path = out_dir.join(format!("curves_{mode}_seed{}.csv", cfg.seed));
        let refs: Vec<(Algorithm, &TrainingRun)> = runs.iter().map(|(a, r)| (*a, r)).collect();
        write_metrics_csv(&path, &refs)?;
        files.push(path);
        for (alg, run) in &runs {
            let s = RunSummary::new(cfg, *alg, mode, run);
            finals.push(FinalAccuracy {
                partition: mode,
                algorithm: *alg,
                final_accuracy: s.final_accuracy,
                mean_round_wall_clock_s: s.mean_round_wall_clock_s,
            });
        }
    }
    let json = out_dir.join(format!("{stem}.json"));
    output::write_json(
        &json,
        &ComparisonSummary {
            schema: SUMMARY_SCHEMA,
            kind: "algorithm_comparison",
            seed: cfg.seed,
            seeds: comparison_seeds(cfg),
            means: &table.means,
            final_accuracy: finals.clone(),
            config: cfg,
        },
    )?;
    files.push(json);
    Ok((table, finals, Outputs { files }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.num_clients = 5;
        cfg.data.synthetic.per_class = 40;
        cfg.data.synthetic.num_classes = 4;
        cfg.data.synthetic.dim = 6;
        cfg.hidden = vec![8, 8];
        cfg.training.rounds = 3;
        cfg.comparison_seeds = 3;
        cfg
    }

    #[test]
    fn deployment_geometry() {
        let p = ScenarioParams::default();
        let d = build_deployment(&p, 2500, 4).unwrap();
        assert_eq!(d.clients.len(), 20);
        for c in &d.clients {
            assert!(c.position.norm() <= 50.0);
            assert!((0.1e9..=2e9).contains(&c.cpu_freq_hz));
        }
        let fastest = d.clients.iter().map(|c| c.cpu_freq_hz).fold(0.0, f64::max);
        assert_eq!(d.server.cpu_freq_hz, 10.0 * fastest);
        assert_eq!(d.server.position, Position::ORIGIN);
        assert_eq!(build_deployment(&p, 2500, 4).unwrap(), d);
        assert_ne!(build_deployment(&p, 2500, 5).unwrap(), d);
    }

    #[test]
    fn training_scenario_is_consistent() {
        let cfg = tiny();
        for mode in [PartitionMode::Iid, PartitionMode::Noniid] {
            let s = build_training_scenario(&cfg, mode, 1).unwrap();
            s.validate().unwrap();
            assert_eq!(s.matching.pairs().len(), 2);
        }
    }

    #[test]
    fn run_writes_matching_csv_and_summary() {
        let cfg = tiny();
        let dir = tempfile::tempdir().unwrap();
        let (summary, out) = run_experiment(&cfg, dir.path()).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "round,algorithm,accuracy,loss,wall_clock_s,sum_objective_s,comm_s,compute_s"
        );
        assert_eq!(lines.len(), 1 + cfg.training.rounds);
        let last_acc: f64 = lines.last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(last_acc, summary.final_accuracy);
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.files[1]).unwrap()).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["final_accuracy"].as_f64().unwrap(), summary.final_accuracy);

        let again = tempfile::tempdir().unwrap();
        let (_, out2) = run_experiment(&cfg, again.path()).unwrap();
        for (a, b) in out.files.iter().zip(&out2.files) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn pairing_table_has_four_rows() {
        let cfg = tiny();
        let t = compare_pairing_mechanisms(&cfg).unwrap();
        assert_eq!(t.means.len(), 4);
        assert_eq!(t.per_seed.len(), 4 * cfg.comparison_seeds);
        let names: Vec<&str> = t.means.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["greedy", "random", "location", "compute"]);
    }

    #[test]
    fn symmetric_scenario_ties() {
        let cfg = tiny();
        let r = 20.0;
        let clients: Vec<ClientProfile> = (0..3)
            .map(|k| {
                let t = TAU * k as f64 / 3.0;
                ClientProfile {
                    id: k,
                    cpu_freq_hz: 1e9,
                    dataset_size: 500,
                    position: Position::new(r * t.cos(), r * t.sin()),
                }
            })
            .collect();
        let dep = Deployment {
            clients,
            server: ServerProfile {
                cpu_freq_hz: 1e10,
                position: Position::ORIGIN,
            },
            radius_m: 50.0,
            seed: 0,
        };
        let times = pairing_round_times(&cfg, &dep).unwrap();
        let base = times[0].1.wall_clock_s;
        for (_, lat, _) in &times {
            assert!((lat.wall_clock_s - base).abs() <= 1e-9 * base);
        }
    }

    #[test]
    fn all_algorithms_share_initial_model() {
        let cfg = tiny();
        let runs = train_algorithms(&cfg, PartitionMode::Iid, 2, &Algorithm::ALL).unwrap();
        let first = runs[0].1.initial_accuracy;
        assert!(runs.iter().all(|(_, r)| r.initial_accuracy == first));
    }
}
