use std::collections::BTreeSet;

use log::debug;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{apply_cached_update, evaluate, softmax_cross_entropy, LayerRange, ModelParams};
use crate::rng;

use super::latency::{fedavg_round_latency, splitfed_round_latency, vanilla_sl_round_latency};
use super::pair::{batch, local_sgd, LocalSgd};
use super::{aggregation_weights, weighted_average, RoundMetrics, Scenario, TrainingConfig, TrainingRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Full local training, size-weighted averaging.
    Fedavg,
    /// One client per round trains against the server; the client part is
    /// relayed to the next client.
    VanillaSl,
    /// All clients train in parallel, each against its own copy of the
    /// server-side layers; client and server parts are averaged per round.
    Splitfed,
}

pub fn run_baseline(kind: Baseline, scenario: &Scenario, cfg: &TrainingConfig) -> Result<TrainingRun> {
    scenario.validate()?;
    cfg.validate()?;
    let n = scenario.num_clients();
    let a = aggregation_weights(&scenario.shard_sizes())?;
    let setup = scenario.latency_setup(cfg);
    let mut sl_order: Vec<usize> = (0..n).collect();
    sl_order.shuffle(&mut rng::stream(cfg.seed, &[rng::TAG_SL_ORDER]));

    let mut global = ModelParams::init_mlp(&scenario.model_dims, rng::derive_seed(cfg.seed, &[rng::TAG_INIT]))?;
    let initial = evaluate(&global, scenario.test.features(), scenario.test.labels())?;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let sgd = LocalSgd {
            epochs: cfg.local_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            seed: cfg.seed,
            round,
        };
        let latency = match kind {
            Baseline::Fedavg => {
                let models = (0..n)
                    .into_par_iter()
                    .map(|k| {
                        local_sgd(global.clone(), &scenario.train, &scenario.shards.shards[k], k, 1.0, &sgd)
                            .map(|(m, _)| m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                global = weighted_average(&models, &a)?;
                fedavg_round_latency(&setup, &scenario.clients)
            }
            Baseline::VanillaSl => {
                let k = sl_order[(round - 1) % n];
                global = local_sgd(global, &scenario.train, &scenario.shards.shards[k], k, 1.0, &sgd)?.0;
                vanilla_sl_round_latency(&setup, &scenario.clients[k])?
            }
            Baseline::Splitfed => {
                global = splitfed_round(&global, scenario, &a, cfg.client_layers, &sgd)?;
                splitfed_round_latency(&setup, &scenario.clients)?
            }
        };
        let eval = evaluate(&global, scenario.test.features(), scenario.test.labels())?;
        debug!("{kind:?} round {round}: accuracy {:.4}", eval.accuracy);
        rounds.push(RoundMetrics {
            round,
            accuracy: eval.accuracy,
            loss: eval.loss,
            latency,
        });
    }
    Ok(TrainingRun {
        initial_accuracy: initial.accuracy,
        initial_loss: initial.loss,
        rounds,
        model: global,
    })
}

/// Each client trains layers `1..=client_layers` against its own copy of
/// the server-side layers; both halves are averaged with weights `a`.
fn splitfed_round(
    global: &ModelParams,
    scenario: &Scenario,
    a: &[f64],
    client_layers: usize,
    sgd: &LocalSgd,
) -> Result<ModelParams> {
    let w = global.num_layers();
    let lower = LayerRange::new(1, client_layers)?;
    let upper = (client_layers < w)
        .then(|| LayerRange::new(client_layers + 1, w))
        .transpose()?;
    let none = BTreeSet::new();
    let models = (0..scenario.num_clients())
        .into_par_iter()
        .map(|k| {
            let (mut client, mut server) = (global.clone(), global.clone());
            let mut step = 0;
            for epoch in 0..sgd.epochs {
                for idx in sgd.batches(&scenario.shards.shards[k], k, epoch) {
                    let (x, y) = batch(&scenario.train, &idx);
                    let (act, lower_cache) = client.forward_range(lower, &x)?;
                    let (loss, dact) = match upper {
                        Some(up) => {
                            let (logits, up_cache) = server.forward_range(up, &act)?;
                            let (loss, dlogits) = softmax_cross_entropy(&logits, &y)?;
                            let (grad, dact) = server.backward_range(&up_cache, &dlogits)?;
                            apply_cached_update(&mut server, &grad, None, sgd.lr, &none)?;
                            (loss, dact)
                        }
                        None => softmax_cross_entropy(&act, &y)?,
                    };
                    if !loss.is_finite() {
                        return Err(sgd.diverged(step, format!("non-finite loss on client {k}")));
                    }
                    let (grad, _) = client.backward_range(&lower_cache, &dact)?;
                    apply_cached_update(&mut client, &grad, None, sgd.lr, &none)?;
                    step += 1;
                }
            }
            for j in client_layers + 1..=w {
                *client.layer_mut(j) = server.layer(j).clone();
            }
            Ok(client)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = weighted_average(&models, a)?;
    if !out.is_finite() {
        return Err(sgd.diverged(0, "non-finite parameters after splitfed round"));
    }
    Ok(out)
}
