//! Independent reference code for protocol tests.

// Index loops mirror the textbook formulas.
#![allow(clippy::needless_range_loop)]

use ndarray::Array2;

use crate::channel::{ChannelParams, ClientProfile, CostModel, ObjectiveWeights, Position};
use crate::data::{generate_synthetic, partition_iid, Dataset, SyntheticParams};
use crate::model::ModelParams;
use crate::pairing::{build_graph, greedy_pairing, Matching, WeightParams};

use super::{Scenario, ServerProfile};

/// Per-layer `(dW, db)` of the mean cross-entropy, by nested loops.
pub fn naive_gradients(model: &ModelParams, x: &Array2<f64>, y: &[usize]) -> Vec<(Array2<f64>, Vec<f64>)> {
    let w = model.num_layers();
    let dims = model.dims();
    let mut grads: Vec<(Array2<f64>, Vec<f64>)> = (1..=w)
        .map(|k| (Array2::zeros((dims[k], dims[k - 1])), vec![0.0; dims[k]]))
        .collect();
    let batch = y.len() as f64;
    for (r, &label) in y.iter().enumerate() {
        let mut acts = vec![x.row(r).to_vec()];
        let mut pres = Vec::new();
        for k in 1..=w {
            let layer = model.layer(k);
            let prev = &acts[k - 1];
            let z: Vec<f64> = (0..dims[k])
                .map(|o| layer.bias[o] + (0..dims[k - 1]).map(|i| layer.weight[[o, i]] * prev[i]).sum::<f64>())
                .collect();
            let a = if k < w { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            pres.push(z);
            acts.push(a);
        }
        let logits = &acts[w];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logits.iter().map(|v| (v - m).exp()).sum();
        let mut delta: Vec<f64> = logits.iter().map(|v| (v - m).exp() / s / batch).collect();
        delta[label] -= 1.0 / batch;
        for k in (1..=w).rev() {
            let layer = model.layer(k);
            let prev = &acts[k - 1];
            for o in 0..dims[k] {
                grads[k - 1].1[o] += delta[o];
                for i in 0..dims[k - 1] {
                    grads[k - 1].0[[o, i]] += delta[o] * prev[i];
                }
            }
            if k > 1 {
                delta = (0..dims[k - 1])
                    .map(|i| {
                        let back: f64 = (0..dims[k]).map(|o| layer.weight[[o, i]] * delta[o]).sum();
                        if pres[k - 2][i] > 0.0 { back } else { 0.0 }
                    })
                    .collect();
            }
        }
    }
    grads
}

pub fn max_abs_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    let mut m: f64 = 0.0;
    for k in 1..=a.num_layers() {
        let (la, lb) = (a.layer(k), b.layer(k));
        for (x, y) in la.weight.iter().zip(lb.weight.iter()) {
            m = m.max((x - y).abs());
        }
        for (x, y) in la.bias.iter().zip(lb.bias.iter()) {
            m = m.max((x - y).abs());
        }
    }
    m
}

pub fn small_data(seed: u64) -> (Dataset, Dataset) {
    let d = generate_synthetic(
        &SyntheticParams {
            num_classes: 4,
            dim: 6,
            per_class: 40,
            class_sep: 3.0,
        },
        seed,
    )
    .unwrap();
    (d.train, d.test)
}

/// IID scenario with `n` clients on a small MLP, greedily paired.
pub fn small_scenario(n: usize, dims: &[usize], seed: u64) -> Scenario {
    let (train, test) = small_data(seed);
    let shards = partition_iid(&train, n, seed).unwrap();
    let clients: Vec<ClientProfile> = (0..n)
        .map(|k| ClientProfile {
            id: k,
            cpu_freq_hz: 0.2e9 + 0.37e9 * ((k * 7) % 5) as f64,
            dataset_size: shards.shards[k].len(),
            position: Position::new(5.0 + 3.0 * k as f64, 2.0 + (k % 3) as f64),
        })
        .collect();
    let channel = ChannelParams::default();
    let matching = if n < 2 {
        Matching::from_pairs(&[0], vec![]).unwrap()
    } else {
        greedy_pairing(&build_graph(&clients, &channel, &WeightParams::default()).unwrap())
    };
    Scenario {
        server: ServerProfile {
            cpu_freq_hz: 20e9,
            position: Position::ORIGIN,
        },
        weights: ObjectiveWeights::default(),
        cost: CostModel::new(dims.to_vec(), 1e8, 8).unwrap(),
        matching,
        model_dims: dims.to_vec(),
        clients,
        channel,
        train,
        test,
        shards,
    }
}
