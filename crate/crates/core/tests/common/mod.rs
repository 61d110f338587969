//! Reference code shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use fedpairing::model::ModelParams;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LayerGrads = Vec<(Array2<f64>, Vec<f64>)>;

/// Per-layer `(dW, db)` of the mean cross-entropy, computed row by row with
/// nested loops.
pub fn naive_gradients(model: &ModelParams, x: &Array2<f64>, y: &[usize]) -> LayerGrads {
    let w = model.num_layers();
    let dims = model.dims();
    let mut grads: LayerGrads = (1..=w)
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

/// Mean cross-entropy by direct evaluation.
pub fn naive_loss(model: &ModelParams, x: &Array2<f64>, y: &[usize]) -> f64 {
    let w = model.num_layers();
    let mut total = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let mut a = x.row(r).to_vec();
        for k in 1..=w {
            let layer = model.layer(k);
            let z: Vec<f64> = (0..layer.weight.nrows())
                .map(|o| layer.bias[o] + a.iter().enumerate().map(|(i, v)| layer.weight[[o, i]] * v).sum::<f64>())
                .collect();
            a = if k < w { z.iter().map(|v| v.max(0.0)).collect() } else { z };
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - a[label];
    }
    total / y.len() as f64
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

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dims `[d0, ..., dW]` with each width in `1..=max_width`.
pub fn random_dims(rng: &mut impl Rng, layers: usize, max_width: usize) -> Vec<usize> {
    (0..=layers).map(|_| rng.random_range(1..=max_width)).collect()
}

pub fn random_batch(rng: &mut impl Rng, rows: usize, dim: usize, classes: usize) -> (Array2<f64>, Vec<usize>) {
    let x = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-2.0..2.0));
    let y = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    (x, y)
}
