//! Client pairing as maximum-weight edge selection on a complete client graph.
//!
//! Edge weight between clients `i` and `j` blends compute heterogeneity and
//! link quality: `alpha * (f_i - f_j)^2 + beta * r_ij`. The two terms have
//! incommensurate units, so by default each is min-max scaled over the graph
//! before blending.

use std::collections::BTreeSet;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::{comm_rate, ChannelParams, ClientProfile};
use crate::error::{Error, Result};
use crate::rng;

/// Largest graph the exhaustive solver accepts.
pub const BRUTEFORCE_MAX_VERTICES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientGraph {
    vertices: Vec<usize>,
    edges: Vec<Edge>,
}

impl ClientGraph {
    /// Edges are normalized to `i < j`. Rejects self-loops, duplicate edges,
    /// unknown endpoints and non-finite weights.
    pub fn new(vertices: Vec<usize>, edges: Vec<Edge>) -> Result<Self> {
        let vset: BTreeSet<usize> = vertices.iter().copied().collect();
        if vset.len() != vertices.len() {
            return Err(Error::InvalidInput("duplicate vertex id".into()));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for e in edges {
            let (i, j) = (e.i.min(e.j), e.i.max(e.j));
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop on vertex {i}")));
            }
            if !vset.contains(&i) || !vset.contains(&j) {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) has an unknown endpoint")));
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) has weight {}", e.weight)));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidInput(format!("duplicate edge ({i}, {j})")));
            }
            normalized.push(Edge { i, j, weight: e.weight });
        }
        let mut vertices = vertices;
        vertices.sort_unstable();
        Ok(Self {
            vertices,
            edges: normalized,
        })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let (i, j) = (a.min(b), a.max(b));
        self.edges.iter().find(|e| e.i == i && e.j == j).map(|e| e.weight)
    }
}

/// Vertex-disjoint client pairs plus the clients left without a partner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
    unpaired: Vec<usize>,
}

impl Matching {
    /// Builds a matching over `vertices`; everything not in a pair is unpaired.
    pub fn from_pairs(vertices: &[usize], pairs: Vec<(usize, usize)>) -> Result<Self> {
        let vset: BTreeSet<usize> = vertices.iter().copied().collect();
        let mut covered = BTreeSet::new();
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let (i, j) = (a.min(b), a.max(b));
            if i == j || !vset.contains(&i) || !vset.contains(&j) {
                return Err(Error::Contract(format!("invalid pair ({a}, {b})")));
            }
            if !covered.insert(i) || !covered.insert(j) {
                return Err(Error::Contract(format!("pair ({a}, {b}) reuses a client")));
            }
            normalized.push((i, j));
        }
        normalized.sort_unstable();
        let unpaired = vset.difference(&covered).copied().collect();
        Ok(Self {
            pairs: normalized,
            unpaired,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn unpaired(&self) -> &[usize] {
        &self.unpaired
    }

    /// Sum of selected edge weights.
    pub fn objective(&self, graph: &ClientGraph) -> f64 {
        self.pairs
            .iter()
            .map(|&(i, j)| graph.weight(i, j).unwrap_or(0.0))
            .sum()
    }

    /// Checks disjointness and exact coverage of `vertices`.
    pub fn validate(&self, vertices: &[usize]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &v in self.pairs.iter().flat_map(|(i, j)| [i, j]).chain(&self.unpaired) {
            if !seen.insert(v) {
                return Err(Error::Contract(format!("client {v} appears twice in the matching")));
            }
        }
        let expected: BTreeSet<usize> = vertices.iter().copied().collect();
        if seen != expected {
            return Err(Error::Contract("matching does not cover the client set exactly".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightParams {
    pub alpha: f64,
    pub beta: f64,
    /// Min-max scale both terms over the graph before blending.
    pub normalize: bool,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            normalize: true,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::Config(format!(
                "weights need alpha, beta >= 0 and alpha + beta > 0, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Graph-wide ranges of the two weight terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub freq_gap_min: f64,
    pub freq_gap_max: f64,
    pub rate_min: f64,
    pub rate_max: f64,
}

impl NormStats {
    pub fn from_terms(terms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut s = NormStats {
            freq_gap_min: f64::INFINITY,
            freq_gap_max: f64::NEG_INFINITY,
            rate_min: f64::INFINITY,
            rate_max: f64::NEG_INFINITY,
        };
        for (gap, rate) in terms {
            s.freq_gap_min = s.freq_gap_min.min(gap);
            s.freq_gap_max = s.freq_gap_max.max(gap);
            s.rate_min = s.rate_min.min(rate);
            s.rate_max = s.rate_max.max(rate);
        }
        s
    }
}

/// Constant terms scale to 0.
fn min_max(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

pub fn edge_weight(ci: &ClientProfile, cj: &ClientProfile, rate: f64, wp: &WeightParams, stats: &NormStats) -> Result<f64> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidInput(format!("rate must be positive, got {rate}")));
    }
    let gap = (ci.cpu_freq_hz - cj.cpu_freq_hz).powi(2);
    let (gap, rate) = if wp.normalize {
        (
            min_max(gap, stats.freq_gap_min, stats.freq_gap_max),
            min_max(rate, stats.rate_min, stats.rate_max),
        )
    } else {
        (gap, rate)
    };
    Ok(wp.alpha * gap + wp.beta * rate)
}

/// Complete weighted graph over `clients`.
pub fn build_graph(clients: &[ClientProfile], channel: &ChannelParams, wp: &WeightParams) -> Result<ClientGraph> {
    if clients.len() < 2 {
        return Err(Error::Scenario("pairing needs at least 2 clients".into()));
    }
    wp.validate()?;
    let mut raw = Vec::with_capacity(clients.len() * (clients.len() - 1) / 2);
    for (a, ci) in clients.iter().enumerate() {
        for cj in &clients[a + 1..] {
            if ci.position.distance(&cj.position) == 0.0 {
                return Err(Error::Scenario(format!(
                    "clients {} and {} share a position",
                    ci.id, cj.id
                )));
            }
            let rate = comm_rate(&ci.position, &cj.position, channel)?;
            raw.push((ci, cj, rate));
        }
    }
    let stats = NormStats::from_terms(
        raw.iter()
            .map(|(ci, cj, rate)| ((ci.cpu_freq_hz - cj.cpu_freq_hz).powi(2), *rate)),
    );
    if wp.normalize {
        if wp.alpha > 0.0 && stats.freq_gap_max <= stats.freq_gap_min {
            warn!("frequency term is constant over the graph; it contributes 0 to edge weights");
        }
        if wp.beta > 0.0 && stats.rate_max <= stats.rate_min {
            warn!("rate term is constant over the graph; it contributes 0 to edge weights");
        }
    }
    let mut edges = Vec::with_capacity(raw.len());
    for (ci, cj, rate) in raw {
        edges.push(Edge {
            i: ci.id,
            j: cj.id,
            weight: edge_weight(ci, cj, rate, wp, &stats)?,
        });
    }
    ClientGraph::new(clients.iter().map(|c| c.id).collect(), edges)
}

/// Greedy maximal matching: scan edges by descending weight (ties by
/// ascending `(i, j)`) and keep an edge when both endpoints are free.
pub fn greedy_pairing(graph: &ClientGraph) -> Matching {
    let mut order: Vec<&Edge> = graph.edges().iter().collect();
    order.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
    let mut covered = BTreeSet::new();
    let mut pairs = Vec::new();
    for e in order {
        if !covered.contains(&e.i) && !covered.contains(&e.j) {
            covered.insert(e.i);
            covered.insert(e.j);
            pairs.push((e.i, e.j));
        }
    }
    Matching::from_pairs(graph.vertices(), pairs).expect("greedy selection is vertex-disjoint")
}

/// Exact maximum-weight matching by exhaustive search. Refuses graphs with
/// more than [`BRUTEFORCE_MAX_VERTICES`] vertices.
///
/// Among equal-objective matchings the first one in enumeration order wins:
/// the lowest free vertex is either left unmatched or matched with each
/// higher neighbour in ascending order.
pub fn optimal_pairing_bruteforce(graph: &ClientGraph) -> Result<Matching> {
    let n = graph.vertices().len();
    if n > BRUTEFORCE_MAX_VERTICES {
        return Err(Error::SizeLimit(format!(
            "exhaustive matching supports at most {BRUTEFORCE_MAX_VERTICES} vertices, got {n}"
        )));
    }
    let index = |v: usize| graph.vertices().binary_search(&v).expect("edge endpoints are vertices");
    let mut adj = vec![vec![None; n]; n];
    for e in graph.edges() {
        let (a, b) = (index(e.i), index(e.j));
        adj[a][b] = Some(e.weight);
        adj[b][a] = Some(e.weight);
    }

    struct Search<'a> {
        adj: &'a [Vec<Option<f64>>],
        best: f64,
        best_pairs: Vec<(usize, usize)>,
        current: Vec<(usize, usize)>,
    }

    impl Search<'_> {
        fn visit(&mut self, free: u32, value: f64) {
            if free == 0 {
                if value > self.best {
                    self.best = value;
                    self.best_pairs = self.current.clone();
                }
                return;
            }
            let v = free.trailing_zeros() as usize;
            let rest = free & !(1 << v);
            // v stays unmatched
            self.visit(rest, value);
            let mut candidates = rest;
            while candidates != 0 {
                let u = candidates.trailing_zeros() as usize;
                candidates &= !(1 << u);
                if let Some(w) = self.adj[v][u] {
                    self.current.push((v, u));
                    self.visit(rest & !(1 << u), value + w);
                    self.current.pop();
                }
            }
        }
    }

    let mut search = Search {
        adj: &adj,
        best: f64::NEG_INFINITY,
        best_pairs: Vec::new(),
        current: Vec::new(),
    };
    let all = if n == 0 { 0 } else { (1u32 << n) - 1 };
    search.visit(all, 0.0);
    let vs = graph.vertices();
    let pairs = search
        .best_pairs
        .into_iter()
        .map(|(a, b)| (vs[a], vs[b]))
        .collect();
    Matching::from_pairs(vs, pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingStrategy {
    /// Greedy on the blended weight.
    Greedy,
    /// Seeded shuffle, then adjacent clients pair up.
    Random,
    /// Greedy on link rate only.
    Location,
    /// Greedy on squared frequency gap only.
    Compute,
}

impl PairingStrategy {
    pub const ALL: [PairingStrategy; 4] = [
        PairingStrategy::Greedy,
        PairingStrategy::Random,
        PairingStrategy::Location,
        PairingStrategy::Compute,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PairingStrategy::Greedy => "greedy",
            PairingStrategy::Random => "random",
            PairingStrategy::Location => "location",
            PairingStrategy::Compute => "compute",
        }
    }
}

impl std::fmt::Display for PairingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Pairs `clients` with `strategy`. `wp` only affects [`PairingStrategy::Greedy`].
pub fn pair_clients(
    strategy: PairingStrategy,
    clients: &[ClientProfile],
    channel: &ChannelParams,
    wp: &WeightParams,
    seed: u64,
) -> Result<Matching> {
    match strategy {
        PairingStrategy::Greedy => Ok(greedy_pairing(&build_graph(clients, channel, wp)?)),
        other => baseline_pairing(other, clients, channel, seed),
    }
}

/// Baseline pairings: random, location-only and compute-only.
pub fn baseline_pairing(
    strategy: PairingStrategy,
    clients: &[ClientProfile],
    channel: &ChannelParams,
    seed: u64,
) -> Result<Matching> {
    let ids: Vec<usize> = clients.iter().map(|c| c.id).collect();
    let single_term = |alpha: f64, beta: f64| WeightParams {
        alpha,
        beta,
        normalize: false,
    };
    match strategy {
        PairingStrategy::Random => {
            let mut order = ids.clone();
            order.sort_unstable();
            order.shuffle(&mut rng::stream(seed, &[rng::TAG_PAIRING]));
            let pairs = order.chunks_exact(2).map(|c| (c[0], c[1])).collect();
            Matching::from_pairs(&ids, pairs)
        }
        PairingStrategy::Location => Ok(greedy_pairing(&build_graph(clients, channel, &single_term(0.0, 1.0))?)),
        PairingStrategy::Compute => Ok(greedy_pairing(&build_graph(clients, channel, &single_term(1.0, 0.0))?)),
        PairingStrategy::Greedy => Err(Error::InvalidInput(
            "greedy is not a baseline; use pair_clients".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Position;
    use rand::Rng;

    fn graph(n: usize, weights: &[((usize, usize), f64)], default: f64) -> ClientGraph {
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                let w = weights
                    .iter()
                    .find(|((a, b), _)| (*a, *b) == (i, j))
                    .map(|(_, w)| *w)
                    .unwrap_or(default);
                edges.push(Edge { i, j, weight: w });
            }
        }
        ClientGraph::new((1..=n).collect(), edges).unwrap()
    }

    fn client(id: usize, f: f64, x: f64, y: f64) -> ClientProfile {
        ClientProfile {
            id,
            cpu_freq_hz: f,
            dataset_size: 10,
            position: Position::new(x, y),
        }
    }

    #[test]
    fn greedy_matches_optimum_on_easy_instance() {
        let g = graph(4, &[((1, 2), 10.0), ((3, 4), 9.0), ((1, 3), 8.0)], 1.0);
        let m = greedy_pairing(&g);
        assert_eq!(m.pairs(), &[(1, 2), (3, 4)]);
        assert_eq!(m.objective(&g), 19.0);
        let opt = optimal_pairing_bruteforce(&g).unwrap();
        assert_eq!(opt.objective(&g), 19.0);
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        let g = graph(
            4,
            &[((1, 2), 10.0), ((1, 3), 9.0), ((2, 4), 9.0), ((3, 4), 0.1)],
            0.0,
        );
        let m = greedy_pairing(&g);
        assert_eq!(m.pairs(), &[(1, 2), (3, 4)]);
        assert!((m.objective(&g) - 10.1).abs() < 1e-12);
        let opt = optimal_pairing_bruteforce(&g).unwrap();
        assert_eq!(opt.pairs(), &[(1, 3), (2, 4)]);
        assert_eq!(opt.objective(&g), 18.0);
        assert!(m.objective(&g) >= 0.5 * opt.objective(&g));
    }

    #[test]
    fn odd_vertex_left_over() {
        let g = graph(3, &[((1, 2), 5.0), ((1, 3), 4.0), ((2, 3), 3.0)], 0.0);
        let m = greedy_pairing(&g);
        assert_eq!(m.pairs(), &[(1, 2)]);
        assert_eq!(m.unpaired(), &[3]);
    }

    #[test]
    fn ties_break_on_ids() {
        let g = graph(4, &[], 1.0);
        assert_eq!(greedy_pairing(&g).pairs(), &[(1, 2), (3, 4)]);
    }

    #[test]
    fn bruteforce_single_edge_and_limit() {
        let g = graph(2, &[], 3.0);
        assert_eq!(optimal_pairing_bruteforce(&g).unwrap().pairs(), &[(1, 2)]);
        let big = graph(13, &[], 1.0);
        assert!(matches!(optimal_pairing_bruteforce(&big), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn greedy_is_maximal_and_half_optimal() {
        let mut rng = rng::stream(5, &[]);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    edges.push(Edge { i, j, weight: rng.random_range(0.0..10.0) });
                }
            }
            let g = ClientGraph::new((0..n).collect(), edges).unwrap();
            let m = greedy_pairing(&g);
            m.validate(g.vertices()).unwrap();
            let free: Vec<_> = m.unpaired().to_vec();
            assert!(free.len() <= 1, "complete graph leaves at most one vertex");
            let opt = optimal_pairing_bruteforce(&g).unwrap();
            opt.validate(g.vertices()).unwrap();
            assert!(opt.objective(&g) >= m.objective(&g) - 1e-12);
            assert!(m.objective(&g) >= 0.5 * opt.objective(&g));
        }
    }

    #[test]
    fn graph_rejects_bad_edges() {
        let e = |i, j, w| Edge { i, j, weight: w };
        assert!(ClientGraph::new(vec![0, 1], vec![e(0, 0, 1.0)]).is_err());
        assert!(ClientGraph::new(vec![0, 1], vec![e(0, 1, 1.0), e(1, 0, 2.0)]).is_err());
        assert!(ClientGraph::new(vec![0, 1], vec![e(0, 1, f64::NAN)]).is_err());
        assert!(ClientGraph::new(vec![0, 1], vec![e(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn matching_rejects_reuse() {
        assert!(Matching::from_pairs(&[0, 1, 2], vec![(0, 1), (1, 2)]).is_err());
        let m = Matching::from_pairs(&[0, 1, 2], vec![(1, 0)]).unwrap();
        assert_eq!(m.pairs(), &[(0, 1)]);
        assert_eq!(m.unpaired(), &[2]);
    }

    #[test]
    fn equal_frequencies_and_no_rate_weight_zero() {
        let a = client(0, 1e9, 0.0, 0.0);
        let b = client(1, 1e9, 3.0, 0.0);
        let wp = WeightParams {
            alpha: 1.0,
            beta: 0.0,
            normalize: false,
        };
        let stats = NormStats::from_terms([(0.0, 1.0)]);
        assert_eq!(edge_weight(&a, &b, 5e8, &wp, &stats).unwrap(), 0.0);
        assert!(edge_weight(&a, &b, 0.0, &wp, &stats).is_err());
    }

    #[test]
    fn raw_weight_is_literal_formula() {
        let a = client(0, 2e9, 0.0, 0.0);
        let b = client(1, 0.5e9, 3.0, 0.0);
        let wp = WeightParams {
            alpha: 2.0,
            beta: 3.0,
            normalize: false,
        };
        let stats = NormStats::from_terms([(0.0, 1.0)]);
        let w = edge_weight(&a, &b, 7.0, &wp, &stats).unwrap();
        assert_eq!(w, 2.0 * (1.5e9f64).powi(2) + 3.0 * 7.0);
    }

    #[test]
    fn rate_only_weights_follow_rates() {
        let clients = [
            client(0, 1e9, 0.0, 0.0),
            client(1, 2e9, 5.0, 0.0),
            client(2, 0.3e9, 20.0, 0.0),
            client(3, 0.9e9, 0.0, 40.0),
        ];
        let ch = ChannelParams::default();
        let wp = WeightParams {
            alpha: 0.0,
            beta: 1.0,
            normalize: true,
        };
        let g = build_graph(&clients, &ch, &wp).unwrap();
        let mut by_weight: Vec<_> = g.edges().to_vec();
        by_weight.sort_by(|a, b| a.weight.total_cmp(&b.weight));
        let rates: Vec<f64> = by_weight
            .iter()
            .map(|e| comm_rate(&clients[e.i].position, &clients[e.j].position, &ch).unwrap())
            .collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dominating_partner_weighs_more() {
        // Client 1 is both farther in frequency from client 0 and closer to
        // it than client 2.
        let clients = [
            client(0, 0.2e9, 0.0, 0.0),
            client(1, 2.0e9, 2.0, 0.0),
            client(2, 1.0e9, 30.0, 0.0),
        ];
        let g = build_graph(&clients, &ChannelParams::default(), &WeightParams::default()).unwrap();
        assert!(g.weight(0, 1).unwrap() > g.weight(0, 2).unwrap());
    }

    #[test]
    fn complete_graph_sizes() {
        let ch = ChannelParams::default();
        let wp = WeightParams::default();
        for n in [2usize, 5, 9] {
            let clients: Vec<_> = (0..n).map(|i| client(i, 1e8 * (i + 1) as f64, i as f64, 1.0)).collect();
            let g = build_graph(&clients, &ch, &wp).unwrap();
            assert_eq!(g.edges().len(), n * (n - 1) / 2);
        }
        assert!(build_graph(&[client(0, 1e9, 0.0, 0.0)], &ch, &wp).is_err());
        let dup = [client(0, 1e9, 1.0, 1.0), client(1, 2e9, 1.0, 1.0)];
        assert!(matches!(build_graph(&dup, &ch, &wp), Err(Error::Scenario(_))));
    }

    #[test]
    fn weights_invariant_under_relabeling() {
        let ch = ChannelParams::default();
        let wp = WeightParams::default();
        let clients: Vec<_> = (0..5)
            .map(|i| client(i, 0.3e9 * (i + 1) as f64, (i * i) as f64, i as f64))
            .collect();
        let perm = [3usize, 0, 4, 1, 2];
        let relabeled: Vec<_> = clients
            .iter()
            .map(|c| ClientProfile { id: perm[c.id], ..*c })
            .collect();
        let g = build_graph(&clients, &ch, &wp).unwrap();
        let h = build_graph(&relabeled, &ch, &wp).unwrap();
        for e in g.edges() {
            assert_eq!(h.weight(perm[e.i], perm[e.j]), Some(e.weight));
        }
    }

    #[test]
    fn baselines_ignore_the_other_term() {
        let ch = ChannelParams::default();
        let clients: Vec<_> = (0..8)
            .map(|i| client(i, 0.1e9 + 0.25e9 * i as f64, (i * 7 % 5) as f64 * 9.0, (i * 3 % 8) as f64 * 4.0))
            .collect();
        let loc = baseline_pairing(PairingStrategy::Location, &clients, &ch, 0).unwrap();
        let mut shuffled_f = clients.clone();
        let freqs: Vec<f64> = clients.iter().rev().map(|c| c.cpu_freq_hz).collect();
        for (c, f) in shuffled_f.iter_mut().zip(freqs) {
            c.cpu_freq_hz = f;
        }
        assert_eq!(baseline_pairing(PairingStrategy::Location, &shuffled_f, &ch, 0).unwrap(), loc);

        let comp = baseline_pairing(PairingStrategy::Compute, &clients, &ch, 0).unwrap();
        let mut moved = clients.clone();
        for (k, c) in moved.iter_mut().enumerate() {
            c.position = Position::new(-(k as f64) * 3.0 - 1.0, 2.0 * k as f64);
        }
        assert_eq!(baseline_pairing(PairingStrategy::Compute, &moved, &ch, 0).unwrap(), comp);
    }

    #[test]
    fn random_pairing_is_seeded() {
        let ch = ChannelParams::default();
        let clients: Vec<_> = (0..9).map(|i| client(i, 1e9, i as f64, 0.5)).collect();
        let a = baseline_pairing(PairingStrategy::Random, &clients, &ch, 42).unwrap();
        let b = baseline_pairing(PairingStrategy::Random, &clients, &ch, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pairs().len(), 4);
        assert_eq!(a.unpaired().len(), 1);
        a.validate(&(0..9).collect::<Vec<_>>()).unwrap();
    }
}
