//! Per-round latency of each algorithm under the channel model.

use crate::channel::{
    comm_rate, compute_delay, pair_comm_volume, pair_round_latency, solo_round_latency, ChannelParams, ClientProfile,
    CostModel, LatencyBreakdown, ObjectiveWeights, PairTraffic,
};
use crate::error::{Error, Result};
use crate::pairing::Matching;
use crate::schedule::{epoch_batch_sizes, LockstepSchedule};

use super::{PairPlan, RoundLatency, ServerProfile};

#[derive(Debug, Clone, Copy)]
pub struct LatencySetup<'a> {
    pub channel: &'a ChannelParams,
    pub cost: &'a CostModel,
    pub server: &'a ServerProfile,
    pub weights: &'a ObjectiveWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub client_layers: usize,
}

impl LatencySetup<'_> {
    fn check_client_layers(&self) -> Result<()> {
        let w = self.cost.num_layers();
        if self.client_layers == 0 || self.client_layers > w {
            return Err(Error::Config(format!(
                "client_layers must be in [1, {w}], got {}",
                self.client_layers
            )));
        }
        Ok(())
    }

    fn server_layers(&self) -> usize {
        self.cost.num_layers() - self.client_layers
    }

    /// Client-side compute, server compute and link time for `steps`
    /// flow steps of `client` against the server.
    fn server_session(&self, client: &ClientProfile, batches: &[usize], steps: usize) -> Result<(f64, f64, f64)> {
        let f = self.cost.cycles_per_layer;
        let client_s = compute_delay(steps * self.client_layers, f, client.cpu_freq_hz);
        if self.server_layers() == 0 || steps == 0 {
            return Ok((client_s, 0.0, 0.0));
        }
        let server_s = compute_delay(steps * self.server_layers(), f, self.server.cpu_freq_hz);
        let mut traffic = PairTraffic::default();
        for s in 0..steps {
            traffic.record_flow_step(true, self.client_layers, batches[s % batches.len()], self.cost);
        }
        let rate = comm_rate(&client.position, &self.server.position, self.channel)?;
        let comm_s = (traffic.max_direction_bytes() * 8) as f64 / rate;
        Ok((client_s, server_s, comm_s))
    }
}

fn find(clients: &[ClientProfile], id: usize) -> Result<&ClientProfile> {
    clients
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::Contract(format!("matching names unknown client {id}")))
}

fn local_steps(client: &ClientProfile, setup: &LatencySetup<'_>) -> usize {
    setup.epochs * epoch_batch_sizes(client.dataset_size, setup.batch_size).len()
}

/// Pairs in matching order, then unpaired clients training solo.
pub fn fedpairing_round_latency(
    setup: &LatencySetup<'_>,
    clients: &[ClientProfile],
    matching: &Matching,
) -> Result<RoundLatency> {
    let w = setup.cost.num_layers();
    let mut units = Vec::with_capacity(matching.pairs().len() + matching.unpaired().len());
    for &(i, j) in matching.pairs() {
        let (ci, cj) = (find(clients, i)?, find(clients, j)?);
        let plan = PairPlan::for_clients(ci, cj, w)?;
        let schedule = LockstepSchedule::new(ci.dataset_size, cj.dataset_size, setup.batch_size);
        let traffic = pair_comm_volume(plan.lengths, &schedule, setup.epochs, setup.cost)?;
        let steps = setup.epochs * schedule.len();
        units.push(pair_round_latency(
            ci,
            cj,
            plan.lengths,
            &traffic,
            steps,
            setup.channel,
            setup.cost,
        )?);
    }
    for &k in matching.unpaired() {
        let c = find(clients, k)?;
        units.push(solo_round_latency(c, local_steps(c, setup), setup.cost));
    }
    Ok(RoundLatency::from_units(units, setup.weights))
}

/// Every client trains the full model locally; model upload is not charged.
pub fn fedavg_round_latency(setup: &LatencySetup<'_>, clients: &[ClientProfile]) -> RoundLatency {
    let units = clients
        .iter()
        .map(|c| solo_round_latency(c, local_steps(c, setup), setup.cost))
        .collect();
    RoundLatency::from_units(units, setup.weights)
}

/// One client's relay session against the server.
pub fn vanilla_sl_round_latency(setup: &LatencySetup<'_>, client: &ClientProfile) -> Result<RoundLatency> {
    setup.check_client_layers()?;
    let batches = epoch_batch_sizes(client.dataset_size, setup.batch_size);
    let steps = setup.epochs * batches.len();
    let (client_s, server_s, comm_s) = setup.server_session(client, &batches, steps)?;
    Ok(RoundLatency::from_units(
        vec![LatencyBreakdown::new(client_s + server_s, comm_s)],
        setup.weights,
    ))
}

/// All clients in parallel against one server that processes their upper
/// parts one after another.
pub fn splitfed_round_latency(setup: &LatencySetup<'_>, clients: &[ClientProfile]) -> Result<RoundLatency> {
    setup.check_client_layers()?;
    let mut units = Vec::with_capacity(clients.len() + 1);
    let mut server_total = 0.0;
    for c in clients {
        let batches = epoch_batch_sizes(c.dataset_size, setup.batch_size);
        let (client_s, server_s, comm_s) = setup.server_session(c, &batches, setup.epochs * batches.len())?;
        units.push(LatencyBreakdown::new(client_s, comm_s));
        server_total += server_s;
    }
    let critical = units
        .iter()
        .copied()
        .max_by(|a, b| a.total_s.total_cmp(&b.total_s))
        .unwrap_or_default();
    let sum_objective_s = units
        .iter()
        .map(|u| setup.weights.alpha * u.compute_s + setup.weights.beta * u.comm_s)
        .sum::<f64>()
        + setup.weights.alpha * server_total;
    units.push(LatencyBreakdown::new(server_total, 0.0));
    Ok(RoundLatency {
        units,
        wall_clock_s: critical.total_s + server_total,
        sum_objective_s,
        compute_s: critical.compute_s + server_total,
        comm_s: critical.comm_s,
    })
}
