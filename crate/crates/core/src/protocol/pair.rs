use log::debug;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::channel::{pair_round_latency, solo_round_latency, CostModel, LatencyBreakdown, PairTraffic};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{apply_cached_update, evaluate, softmax_cross_entropy, LayerRange, ModelParams};
use crate::rng;

use super::{aggregate, aggregation_weights, PairPlan, RoundLatency, RoundMetrics, Scenario, TrainingConfig, TrainingRun};

/// Local optimisation settings shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSgd {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Round number, used for batch shuffling and error context.
    pub round: usize,
}

impl LocalSgd {
    /// Shuffled mini-batches of `shard` for one epoch. The order depends
    /// only on `(seed, round, client, epoch)`.
    pub(crate) fn batches(&self, shard: &[usize], client: usize, epoch: usize) -> Vec<Vec<usize>> {
        let mut order = shard.to_vec();
        let mut rng = rng::stream(
            self.seed,
            &[rng::TAG_BATCHES, self.round as u64, client as u64, epoch as u64],
        );
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub(crate) fn diverged(&self, step: usize, reason: impl Into<String>) -> Error {
        Error::Training {
            round: self.round,
            batch: step,
            reason: reason.into(),
        }
    }
}

pub(crate) fn batch(data: &Dataset, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
    (
        data.features().select(Axis(0), idx),
        idx.iter().map(|&i| data.labels()[i]).collect(),
    )
}

/// One pair's inputs for a round.
#[derive(Debug, Clone, Copy)]
pub struct PairTask<'a> {
    pub plan: &'a PairPlan,
    pub data: &'a Dataset,
    pub shard_i: &'a [usize],
    pub shard_j: &'a [usize],
    pub a_i: f64,
    pub a_j: f64,
    /// Byte accounting for the traffic log; widths must match the model.
    pub cost: &'a CostModel,
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub model_i: ModelParams,
    pub model_j: ModelParams,
    pub traffic: PairTraffic,
    pub steps: usize,
    pub mean_loss: f64,
}

/// Trains a pair for `sgd.epochs` epochs.
///
/// Each lockstep step runs both flows on the pre-step parameters. Flow `i`
/// uses `model_i` for layers `1..=L_i` and `model_j` for the rest; flow `j`
/// mirrors it. Gradient slices are scaled by the data owner's weight, then
/// each model applies its lower slice from its own flow and its upper slice
/// from the partner's flow, with a doubled step on the overlap it hosts.
pub fn paired_local_training(
    task: &PairTask<'_>,
    mut model_i: ModelParams,
    mut model_j: ModelParams,
    sgd: &LocalSgd,
) -> Result<PairOutcome> {
    let plan = task.plan;
    let (id_i, id_j) = plan.pair;
    let (li, lj) = plan.lengths;
    if !model_i.same_shape(&model_j) {
        return Err(Error::Contract("paired models differ in shape".into()));
    }
    let w = model_i.num_layers();
    if li + lj != w {
        return Err(Error::Contract(format!(
            "plan lengths ({li}, {lj}) do not split a {w}-layer model"
        )));
    }
    if task.shard_i.is_empty() || task.shard_j.is_empty() {
        return Err(Error::Contract("paired client has no data".into()));
    }
    let (lower_i, upper_i) = (LayerRange::new(1, li)?, LayerRange::new(li + 1, w)?);
    let (lower_j, upper_j) = (LayerRange::new(1, lj)?, LayerRange::new(lj + 1, w)?);
    let (overlap_i, overlap_j) = (plan.overlap_of(id_i), plan.overlap_of(id_j));
    if task.cost.layer_widths != model_i.dims() {
        return Err(Error::Contract("cost model widths differ from the model dims".into()));
    }
    let cost = task.cost;

    let mut traffic = PairTraffic::default();
    let mut step = 0;
    let mut loss_sum = 0.0;
    for epoch in 0..sgd.epochs {
        let batches_i = sgd.batches(task.shard_i, id_i, epoch);
        let batches_j = sgd.batches(task.shard_j, id_j, epoch);
        for s in 0..batches_i.len().max(batches_j.len()) {
            let (x_i, y_i) = batch(task.data, &batches_i[s % batches_i.len()]);
            let (x_j, y_j) = batch(task.data, &batches_j[s % batches_j.len()]);

            let (act_i, lo_cache_i) = model_i.forward_range(lower_i, &x_i)?;
            let (logits_i, up_cache_i) = model_j.forward_range(upper_i, &act_i)?;
            let (loss_i, dlogits_i) = softmax_cross_entropy(&logits_i, &y_i)?;

            let (act_j, lo_cache_j) = model_j.forward_range(lower_j, &x_j)?;
            let (logits_j, up_cache_j) = model_i.forward_range(upper_j, &act_j)?;
            let (loss_j, dlogits_j) = softmax_cross_entropy(&logits_j, &y_j)?;

            if !(loss_i.is_finite() && loss_j.is_finite()) {
                return Err(sgd.diverged(step, format!("non-finite loss in pair ({id_i}, {id_j})")));
            }

            let (up_grad_i, dact_i) = model_j.backward_range(&up_cache_i, &dlogits_i)?;
            let (lo_grad_i, _) = model_i.backward_range(&lo_cache_i, &dact_i)?;
            let (up_grad_j, dact_j) = model_i.backward_range(&up_cache_j, &dlogits_j)?;
            let (lo_grad_j, _) = model_j.backward_range(&lo_cache_j, &dact_j)?;

            let (lo_grad_i, up_grad_i) = (lo_grad_i.weighted(task.a_i)?, up_grad_i.weighted(task.a_i)?);
            let (lo_grad_j, up_grad_j) = (lo_grad_j.weighted(task.a_j)?, up_grad_j.weighted(task.a_j)?);
            apply_cached_update(&mut model_i, &lo_grad_i, Some(&up_grad_j), sgd.lr, &overlap_i)?;
            apply_cached_update(&mut model_j, &lo_grad_j, Some(&up_grad_i), sgd.lr, &overlap_j)?;

            traffic.record_flow_step(true, li, y_i.len(), cost);
            traffic.record_flow_step(false, lj, y_j.len(), cost);
            loss_sum += loss_i + loss_j;
            step += 1;
        }
    }
    if !(model_i.is_finite() && model_j.is_finite()) {
        return Err(sgd.diverged(step, format!("non-finite parameters in pair ({id_i}, {id_j})")));
    }
    Ok(PairOutcome {
        model_i,
        model_j,
        traffic,
        steps: step,
        mean_loss: loss_sum / (2 * step.max(1)) as f64,
    })
}

/// Plain mini-batch SGD on one client's shard with gradients scaled by
/// `weight`. Returns the model and the number of steps taken.
pub fn local_sgd(
    mut model: ModelParams,
    data: &Dataset,
    shard: &[usize],
    client: usize,
    weight: f64,
    sgd: &LocalSgd,
) -> Result<(ModelParams, usize)> {
    let full = model.full_range();
    let none = Default::default();
    let mut step = 0;
    for epoch in 0..sgd.epochs {
        for idx in sgd.batches(shard, client, epoch) {
            let (x, y) = batch(data, &idx);
            let (logits, cache) = model.forward_range(full, &x)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(sgd.diverged(step, format!("non-finite loss on client {client}")));
            }
            let (grad, _) = model.backward_range(&cache, &dlogits)?;
            apply_cached_update(&mut model, &grad.weighted(weight)?, None, sgd.lr, &none)?;
            step += 1;
        }
    }
    if !model.is_finite() {
        return Err(sgd.diverged(step, format!("non-finite parameters on client {client}")));
    }
    Ok((model, step))
}

enum Unit {
    Pair(PairPlan),
    Solo(usize),
}

/// Runs FedPairing for `cfg.rounds` rounds. Pairs train in parallel; the
/// global model is the mean of all client models in ascending id order.
pub fn run_fedpairing(scenario: &Scenario, cfg: &TrainingConfig) -> Result<TrainingRun> {
    scenario.validate()?;
    cfg.validate()?;
    let n = scenario.num_clients();
    let w = scenario.num_layers();
    let a = aggregation_weights(&scenario.shard_sizes())?;
    let lr = cfg.fedpairing_lr(n);
    let mut units = Vec::new();
    for &(i, j) in scenario.matching.pairs() {
        units.push(Unit::Pair(PairPlan::for_clients(
            &scenario.clients[i],
            &scenario.clients[j],
            w,
        )?));
    }
    units.extend(scenario.matching.unpaired().iter().map(|&k| Unit::Solo(k)));

    let mut global = ModelParams::init_mlp(&scenario.model_dims, rng::derive_seed(cfg.seed, &[rng::TAG_INIT]))?;
    let initial = evaluate(&global, scenario.test.features(), scenario.test.labels())?;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let sgd = LocalSgd {
            epochs: cfg.local_epochs,
            batch_size: cfg.batch_size,
            lr,
            seed: cfg.seed,
            round,
        };
        let results: Vec<(Vec<(usize, ModelParams)>, LatencyBreakdown)> = units
            .par_iter()
            .map(|unit| match unit {
                Unit::Pair(plan) => {
                    let (i, j) = plan.pair;
                    let task = PairTask {
                        plan,
                        data: &scenario.train,
                        shard_i: &scenario.shards.shards[i],
                        shard_j: &scenario.shards.shards[j],
                        a_i: a[i],
                        a_j: a[j],
                        cost: &scenario.cost,
                    };
                    let out = paired_local_training(&task, global.clone(), global.clone(), &sgd)?;
                    let latency = pair_round_latency(
                        &scenario.clients[i],
                        &scenario.clients[j],
                        plan.lengths,
                        &out.traffic,
                        out.steps,
                        &scenario.channel,
                        &scenario.cost,
                    )?;
                    Ok((vec![(i, out.model_i), (j, out.model_j)], latency))
                }
                Unit::Solo(k) => {
                    let (model, steps) =
                        local_sgd(global.clone(), &scenario.train, &scenario.shards.shards[*k], *k, a[*k], &sgd)?;
                    let latency = solo_round_latency(&scenario.clients[*k], steps, &scenario.cost);
                    Ok((vec![(*k, model)], latency))
                }
            })
            .collect::<Result<_>>()?;

        let mut models: Vec<Option<ModelParams>> = vec![None; n];
        let mut breakdowns = Vec::with_capacity(results.len());
        for (trained, latency) in results {
            for (id, model) in trained {
                models[id] = Some(model);
            }
            breakdowns.push(latency);
        }
        let models: Vec<ModelParams> = models
            .into_iter()
            .map(|m| m.ok_or_else(|| Error::Contract("a client was not trained this round".into())))
            .collect::<Result<_>>()?;
        global = aggregate(&models)?;
        let eval = evaluate(&global, scenario.test.features(), scenario.test.labels())?;
        debug!("fedpairing round {round}: accuracy {:.4}, loss {:.4}", eval.accuracy, eval.loss);
        rounds.push(RoundMetrics {
            round,
            accuracy: eval.accuracy,
            loss: eval.loss,
            latency: RoundLatency::from_units(breakdowns, &scenario.weights),
        });
    }
    Ok(TrainingRun {
        initial_accuracy: initial.accuracy,
        initial_loss: initial.loss,
        rounds,
        model: global,
    })
}
