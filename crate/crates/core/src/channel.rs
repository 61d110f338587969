//! Wireless link and latency model.
//!
//! Links between two parties use a distance path-loss gain and the Shannon
//! rate `r = B log2(1 + P h / sigma^2)` with `h = h0 (zeta0 / d)^theta`.
//! Interference is not modelled: every link gets its own orthogonal band.
//!
//! Computation is counted in layer updates: one forward + backward + update
//! of one layer on one mini-batch costs `cycles_per_layer` CPU cycles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::LockstepSchedule;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.distance(&Position::ORIGIN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    /// Channel gain at the reference distance.
    pub ref_gain: f64,
    pub ref_distance_m: f64,
    pub pathloss_exponent: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 64e6,
            tx_power_w: 1.0,
            noise_power_w: 1e-9,
            ref_gain: 1e-3,
            ref_distance_m: 1.0,
            pathloss_exponent: 3.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("noise_power_w", self.noise_power_w),
            ("ref_gain", self.ref_gain),
            ("ref_distance_m", self.ref_distance_m),
            ("pathloss_exponent", self.pathloss_exponent),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("channel.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: usize,
    pub cpu_freq_hz: f64,
    /// Local sample count.
    pub dataset_size: usize,
    pub position: Position,
}

impl ClientProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.cpu_freq_hz.is_finite() && self.cpu_freq_hz > 0.0) {
            return Err(Error::Scenario(format!(
                "client {} has non-positive cpu frequency {}",
                self.id, self.cpu_freq_hz
            )));
        }
        if self.dataset_size == 0 {
            return Err(Error::Scenario(format!("client {} has an empty dataset", self.id)));
        }
        Ok(())
    }
}

pub fn channel_gain(a: &Position, b: &Position, params: &ChannelParams) -> Result<f64> {
    let d = a.distance(b);
    if d <= 0.0 || !d.is_finite() {
        return Err(Error::Domain(format!(
            "channel gain undefined for distance {d} between {a:?} and {b:?}"
        )));
    }
    Ok(params.ref_gain * (params.ref_distance_m / d).powf(params.pathloss_exponent))
}

/// Achievable rate in bits/s.
pub fn comm_rate(a: &Position, b: &Position, params: &ChannelParams) -> Result<f64> {
    let h = channel_gain(a, b, params)?;
    Ok(params.bandwidth_hz * (1.0 + params.tx_power_w * h / params.noise_power_w).log2())
}

/// Seconds to run `layers` layer updates at `cpu_freq_hz`.
pub fn compute_delay(layers: usize, cycles_per_layer: f64, cpu_freq_hz: f64) -> f64 {
    layers as f64 * cycles_per_layer / cpu_freq_hz
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub compute_s: f64,
    pub comm_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    pub fn new(compute_s: f64, comm_s: f64) -> Self {
        Self {
            compute_s,
            comm_s,
            total_s: compute_s + comm_s,
        }
    }
}

/// Workload description used for latency accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Activation width after each layer, `W + 1` entries starting with the
    /// input width.
    pub layer_widths: Vec<usize>,
    pub cycles_per_layer: f64,
    pub bytes_per_scalar: usize,
}

impl CostModel {
    pub fn new(layer_widths: Vec<usize>, cycles_per_layer: f64, bytes_per_scalar: usize) -> Result<Self> {
        if layer_widths.len() < 3 || layer_widths.contains(&0) {
            return Err(Error::Config(
                "cost model needs at least 2 layers with positive widths".into(),
            ));
        }
        if !(cycles_per_layer.is_finite() && cycles_per_layer > 0.0) || bytes_per_scalar == 0 {
            return Err(Error::Config("cost model constants must be positive".into()));
        }
        Ok(Self {
            layer_widths,
            cycles_per_layer,
            bytes_per_scalar,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_widths.last().expect("validated non-empty")
    }

    /// Bytes of a `rows x width` tensor.
    pub fn tensor_bytes(&self, rows: usize, width: usize) -> u64 {
        (rows * width * self.bytes_per_scalar) as u64
    }
}

/// Bytes sent in one direction of a split-training link, by tensor kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionTraffic {
    /// Feature maps at the sender's cut.
    pub activations: u64,
    /// Gradients w.r.t. the receiver's cut activations.
    pub boundary_grads: u64,
    /// Logits returned to the data owner.
    pub logits: u64,
    /// Loss gradient w.r.t. the logits, from the data owner.
    pub logit_grads: u64,
    /// Loss value and aggregation weight hand-off.
    pub scalars: u64,
}

impl DirectionTraffic {
    pub fn total(&self) -> u64 {
        self.activations + self.boundary_grads + self.logits + self.logit_grads + self.scalars
    }

    pub fn add(&mut self, other: &DirectionTraffic) {
        self.activations += other.activations;
        self.boundary_grads += other.boundary_grads;
        self.logits += other.logits;
        self.logit_grads += other.logit_grads;
        self.scalars += other.scalars;
    }
}

/// Traffic between two parties over a round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTraffic {
    pub i_to_j: DirectionTraffic,
    pub j_to_i: DirectionTraffic,
}

impl PairTraffic {
    pub fn max_direction_bytes(&self) -> u64 {
        self.i_to_j.total().max(self.j_to_i.total())
    }

    /// Records one split step of the flow owned by the `owner_is_i` side:
    /// the owner computes `lower` layers on `batch` samples, the helper runs
    /// the rest and returns logits.
    pub fn record_flow_step(&mut self, owner_is_i: bool, lower: usize, batch: usize, cost: &CostModel) {
        let cut = cost.tensor_bytes(batch, cost.layer_widths[lower]);
        let logits = cost.tensor_bytes(batch, cost.num_classes());
        let (up, down) = if owner_is_i {
            (&mut self.i_to_j, &mut self.j_to_i)
        } else {
            (&mut self.j_to_i, &mut self.i_to_j)
        };
        up.activations += cut;
        up.logit_grads += logits;
        up.scalars += 2 * cost.bytes_per_scalar as u64;
        down.logits += logits;
        down.boundary_grads += cut;
    }
}

fn check_split(lengths: (usize, usize), num_layers: usize) -> Result<()> {
    let (li, lj) = lengths;
    if li == 0 || lj == 0 || li + lj != num_layers {
        return Err(Error::Contract(format!(
            "propagation lengths ({li}, {lj}) must be >= 1 and sum to {num_layers}"
        )));
    }
    Ok(())
}

/// Per-round traffic of a pair whose flows follow `schedule` for `epochs`
/// epochs with propagation lengths `lengths = (L_i, L_j)`.
pub fn pair_comm_volume(
    lengths: (usize, usize),
    schedule: &LockstepSchedule,
    epochs: usize,
    cost: &CostModel,
) -> Result<PairTraffic> {
    check_split(lengths, cost.num_layers())?;
    let mut epoch = PairTraffic::default();
    for &(bi, bj) in schedule.steps() {
        epoch.record_flow_step(true, lengths.0, bi, cost);
        epoch.record_flow_step(false, lengths.1, bj, cost);
    }
    let mut total = PairTraffic::default();
    for _ in 0..epochs {
        total.i_to_j.add(&epoch.i_to_j);
        total.j_to_i.add(&epoch.j_to_i);
    }
    Ok(total)
}

/// Latency of one pair for one round.
///
/// Each client serially hosts its own lower part and the partner's upper
/// part every step, so client `i` runs `L_i + (W - L_j)` layer updates per
/// step. The link carries the larger of the two directions.
pub fn pair_round_latency(
    ci: &ClientProfile,
    cj: &ClientProfile,
    lengths: (usize, usize),
    traffic: &PairTraffic,
    steps: usize,
    channel: &ChannelParams,
    cost: &CostModel,
) -> Result<LatencyBreakdown> {
    let w = cost.num_layers();
    check_split(lengths, w)?;
    let (li, lj) = lengths;
    let hosted_i = li + (w - lj);
    let hosted_j = lj + (w - li);
    let compute_i = compute_delay(steps * hosted_i, cost.cycles_per_layer, ci.cpu_freq_hz);
    let compute_j = compute_delay(steps * hosted_j, cost.cycles_per_layer, cj.cpu_freq_hz);
    let bytes = traffic.max_direction_bytes();
    let comm = if bytes == 0 {
        0.0
    } else {
        (bytes * 8) as f64 / comm_rate(&ci.position, &cj.position, channel)?
    };
    Ok(LatencyBreakdown::new(compute_i.max(compute_j), comm))
}

/// A client training the whole model alone.
pub fn solo_round_latency(client: &ClientProfile, steps: usize, cost: &CostModel) -> LatencyBreakdown {
    LatencyBreakdown::new(
        compute_delay(steps * cost.num_layers(), cost.cycles_per_layer, client.cpu_freq_hz),
        0.0,
    )
}

/// Blend weights of the compute and communication terms of the pairing
/// latency objective. Dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemLatency {
    /// `sum(alpha * compute + beta * comm)` over all units (pairs and solo clients).
    pub sum_objective_s: f64,
    /// Slowest unit's total.
    pub wall_clock_s: f64,
    /// Index of the slowest unit.
    pub critical: Option<usize>,
}

pub fn system_round_latency(units: &[LatencyBreakdown], weights: &ObjectiveWeights) -> SystemLatency {
    let mut out = SystemLatency::default();
    for (idx, b) in units.iter().enumerate() {
        out.sum_objective_s += weights.alpha * b.compute_s + weights.beta * b.comm_s;
        if out.critical.is_none() || b.total_s > out.wall_clock_s {
            out.wall_clock_s = b.total_s;
            out.critical = Some(idx);
        }
    }
    out
}
