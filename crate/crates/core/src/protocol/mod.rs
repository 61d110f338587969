//! Paired split training and the baseline algorithms it is compared with.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::{
    system_round_latency, ChannelParams, ClientProfile, CostModel, LatencyBreakdown, ObjectiveWeights, Position,
};
use crate::data::{Dataset, ShardSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::pairing::Matching;

mod baselines;
mod latency;
mod pair;
#[cfg(test)]
mod testkit;

pub use baselines::{run_baseline, Baseline};
pub use latency::{
    fedavg_round_latency, fedpairing_round_latency, splitfed_round_latency, vanilla_sl_round_latency, LatencySetup,
};
pub use pair::{local_sgd, paired_local_training, run_fedpairing, LocalSgd, PairOutcome, PairTask};

/// Split of one pair: client `pair.0` runs its own data through layers
/// `1..=lengths.0`, client `pair.1` through `1..=lengths.1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPlan {
    pub pair: (usize, usize),
    pub lengths: (usize, usize),
    /// Client whose model receives both flows' gradients on the overlap.
    pub overlap_on: Option<usize>,
    pub overlap_layers: BTreeSet<usize>,
}

impl PairPlan {
    pub fn from_lengths(pair: (usize, usize), lengths: (usize, usize), num_layers: usize) -> Result<Self> {
        let (li, lj) = lengths;
        if pair.0 == pair.1 {
            return Err(Error::Contract(format!("client {} paired with itself", pair.0)));
        }
        if li == 0 || lj == 0 || li + lj != num_layers {
            return Err(Error::Contract(format!(
                "propagation lengths ({li}, {lj}) must be >= 1 and sum to {num_layers}"
            )));
        }
        let overlap_layers: BTreeSet<usize> = (li.min(lj) + 1..=li.max(lj)).collect();
        let overlap_on = match li.cmp(&lj) {
            std::cmp::Ordering::Greater => Some(pair.0),
            std::cmp::Ordering::Less => Some(pair.1),
            std::cmp::Ordering::Equal => None,
        };
        Ok(Self {
            pair,
            lengths,
            overlap_on,
            overlap_layers,
        })
    }

    /// Plan for two clients, with lengths split by CPU frequency.
    pub fn for_clients(ci: &ClientProfile, cj: &ClientProfile, num_layers: usize) -> Result<Self> {
        let lengths = compute_propagation_lengths(ci.cpu_freq_hz, cj.cpu_freq_hz, num_layers)?;
        Self::from_lengths((ci.id, cj.id), lengths, num_layers)
    }

    /// Overlap layers hosted by `client` (empty for the other member).
    pub fn overlap_of(&self, client: usize) -> BTreeSet<usize> {
        if self.overlap_on == Some(client) {
            self.overlap_layers.clone()
        } else {
            BTreeSet::new()
        }
    }
}

/// `L_i = floor(f_i / (f_i + f_j) * W)` clamped to `[1, W - 1]`, `L_j = W - L_i`.
pub fn compute_propagation_lengths(f_i: f64, f_j: f64, num_layers: usize) -> Result<(usize, usize)> {
    if !(f_i > 0.0 && f_j > 0.0 && f_i.is_finite() && f_j.is_finite()) {
        return Err(Error::InvalidInput(format!("frequencies must be positive, got ({f_i}, {f_j})")));
    }
    if num_layers < 2 {
        return Err(Error::InvalidInput(format!("a split needs W >= 2, got {num_layers}")));
    }
    let raw = (f_i / (f_i + f_j) * num_layers as f64).floor() as usize;
    let li = raw.clamp(1, num_layers - 1);
    Ok((li, num_layers - li))
}

/// `a_i = |D_i| / sum |D_j|`.
pub fn aggregation_weights(dataset_sizes: &[usize]) -> Result<Vec<f64>> {
    if dataset_sizes.is_empty() || dataset_sizes.contains(&0) {
        return Err(Error::InvalidInput("every client needs at least one sample".into()));
    }
    let total: usize = dataset_sizes.iter().sum();
    Ok(dataset_sizes.iter().map(|&s| s as f64 / total as f64).collect())
}

/// Elementwise mean, accumulated in slice order.
pub fn aggregate(models: &[ModelParams]) -> Result<ModelParams> {
    let n = models.len();
    weighted_average(models, &vec![1.0 / n as f64; n])
}

/// `sum_k w_k * model_k`, accumulated in slice order.
pub fn weighted_average(models: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to aggregate".into()))?;
    if weights.len() != models.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} models",
            weights.len(),
            models.len()
        )));
    }
    if let Some(m) = models.iter().find(|m| !m.same_shape(first)) {
        return Err(Error::Shape(format!(
            "cannot aggregate models with dims {:?} and {:?}",
            first.dims(),
            m.dims()
        )));
    }
    let mut out = ModelParams::zeros(first.dims())?;
    for (m, &w) in models.iter().zip(weights) {
        for k in 1..=out.num_layers() {
            let src = m.layer(k);
            let dst = out.layer_mut(k);
            dst.weight.scaled_add(w, &src.weight);
            dst.bias.scaled_add(w, &src.bias);
        }
    }
    Ok(out)
}

/// How FedPairing's learning rate relates to the configured one.
///
/// Paired updates use gradients pre-scaled by `a_i` and the global model is
/// the plain mean over `N` clients, so with equal shards a round moves the
/// model `N` times less than FedAvg at the same rate. `NumClients`
/// multiplies the rate by `N` to undo that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScale {
    None,
    #[default]
    NumClients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Set by the caller; experiment configs carry a single top-level seed.
    #[serde(skip)]
    pub seed: u64,
    pub fedpairing_lr_scale: LrScale,
    /// Layers kept on the client by vanilla SL and SplitFed.
    pub client_layers: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            local_epochs: 2,
            batch_size: 32,
            lr: 0.1,
            seed: 0,
            fedpairing_lr_scale: LrScale::NumClients,
            client_layers: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("rounds, local_epochs and batch_size must be positive".into()));
        }
        // lr = 0 is accepted as a frozen-model run.
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.client_layers == 0 {
            return Err(Error::Config("client_layers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fedpairing_lr(&self, num_clients: usize) -> f64 {
        match self.fedpairing_lr_scale {
            LrScale::None => self.lr,
            LrScale::NumClients => self.lr * num_clients as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerProfile {
    pub cpu_freq_hz: f64,
    pub position: Position,
}

/// Everything a training run needs. Client ids are `0..N` in order.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub clients: Vec<ClientProfile>,
    pub server: ServerProfile,
    pub channel: ChannelParams,
    pub weights: ObjectiveWeights,
    /// Latency accounting for the trained model; widths equal `model_dims`.
    pub cost: CostModel,
    pub matching: Matching,
    pub model_dims: Vec<usize>,
    pub train: Dataset,
    pub test: Dataset,
    pub shards: ShardSpec,
}

impl Scenario {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_layers(&self) -> usize {
        self.model_dims.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.clients.len();
        if n == 0 {
            return Err(Error::Scenario("no clients".into()));
        }
        for (k, c) in self.clients.iter().enumerate() {
            if c.id != k {
                return Err(Error::Scenario(format!("client at index {k} has id {}", c.id)));
            }
            c.validate()?;
        }
        self.channel.validate()?;
        if !(self.server.cpu_freq_hz > 0.0 && self.server.cpu_freq_hz.is_finite()) {
            return Err(Error::Scenario("server frequency must be positive".into()));
        }
        if self.shards.num_clients() != n {
            return Err(Error::Scenario(format!("{} shards for {n} clients", self.shards.num_clients())));
        }
        self.shards.validate(self.train.len())?;
        for (c, shard) in self.clients.iter().zip(&self.shards.shards) {
            if c.dataset_size != shard.len() {
                return Err(Error::Scenario(format!(
                    "client {} reports {} samples but its shard has {}",
                    c.id,
                    c.dataset_size,
                    shard.len()
                )));
            }
        }
        let ids: Vec<usize> = (0..n).collect();
        self.matching.validate(&ids)?;
        if self.model_dims.len() < 3 {
            return Err(Error::Scenario("model needs at least 2 layers".into()));
        }
        if self.model_dims[0] != self.train.dim() || self.model_dims[0] != self.test.dim() {
            return Err(Error::Scenario(format!(
                "model input width {} does not match data dimension {}",
                self.model_dims[0],
                self.train.dim()
            )));
        }
        if *self.model_dims.last().expect("checked length") != self.train.num_classes() {
            return Err(Error::Scenario("model output width must equal the class count".into()));
        }
        if self.cost.layer_widths != self.model_dims {
            return Err(Error::Scenario("cost model widths must equal the model dims".into()));
        }
        Ok(())
    }

    pub(crate) fn shard_sizes(&self) -> Vec<usize> {
        self.shards.shards.iter().map(Vec::len).collect()
    }

    pub(crate) fn latency_setup(&self, cfg: &TrainingConfig) -> LatencySetup<'_> {
        LatencySetup {
            channel: &self.channel,
            cost: &self.cost,
            server: &self.server,
            weights: &self.weights,
            epochs: cfg.local_epochs,
            batch_size: cfg.batch_size,
            client_layers: cfg.client_layers,
        }
    }
}

/// Round latency summary. `compute_s + comm_s` is the critical path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundLatency {
    /// Pairs in matching order, then solo clients (FedPairing); clients by
    /// id (FedAvg, SplitFed); the active client (vanilla SL).
    pub units: Vec<LatencyBreakdown>,
    pub wall_clock_s: f64,
    pub sum_objective_s: f64,
    pub compute_s: f64,
    pub comm_s: f64,
}

impl RoundLatency {
    pub fn from_units(units: Vec<LatencyBreakdown>, weights: &ObjectiveWeights) -> Self {
        let sys = system_round_latency(&units, weights);
        let critical = sys.critical.map(|k| units[k]).unwrap_or_default();
        Self {
            wall_clock_s: sys.wall_clock_s,
            sum_objective_s: sys.sum_objective_s,
            compute_s: critical.compute_s,
            comm_s: critical.comm_s,
            units,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based.
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub latency: RoundLatency,
}

/// Metrics of a training run plus the final global model.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub initial_accuracy: f64,
    pub initial_loss: f64,
    pub rounds: Vec<RoundMetrics>,
    pub model: ModelParams,
}

impl TrainingRun {
    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map_or(self.initial_accuracy, |r| r.accuracy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fedpairing,
    Fedavg,
    VanillaSl,
    Splitfed,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Fedpairing,
        Algorithm::Fedavg,
        Algorithm::VanillaSl,
        Algorithm::Splitfed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Fedpairing => "fedpairing",
            Algorithm::Fedavg => "fedavg",
            Algorithm::VanillaSl => "vanilla_sl",
            Algorithm::Splitfed => "splitfed",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn run_algorithm(algorithm: Algorithm, scenario: &Scenario, cfg: &TrainingConfig) -> Result<TrainingRun> {
    match algorithm {
        Algorithm::Fedpairing => run_fedpairing(scenario, cfg),
        Algorithm::Fedavg => run_baseline(Baseline::Fedavg, scenario, cfg),
        Algorithm::VanillaSl => run_baseline(Baseline::VanillaSl, scenario, cfg),
        Algorithm::Splitfed => run_baseline(Baseline::Splitfed, scenario, cfg),
    }
}
