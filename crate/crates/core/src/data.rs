//! Synthetic classification data and client sharding.

use std::collections::{BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::{debug, info};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const DUMP_SCHEMA: u32 = 1;
const NONIID_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidInput("need at least 2 classes".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        histogram(self.labels.iter().copied(), self.num_classes)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidInput(format!("index {bad} out of range for {} rows", self.len())));
        }
        Ok(Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        })
    }

    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// Writes the flat binary format: `u64` header length, JSON header,
    /// little-endian `f64` features (row-major), little-endian `u32` labels.
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let header = DumpHeader {
            schema: DUMP_SCHEMA,
            n: self.len(),
            d: self.dim(),
            k: self.num_classes,
            seed,
        };
        let header = serde_json::to_vec(&header)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(&(header.len() as u64).to_le_bytes())?;
        write(&header)?;
        for x in self.features.iter() {
            write(&x.to_le_bytes())?;
        }
        for &y in &self.labels {
            write(&(y as u32).to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`Dataset::save`]; returns the stored seed too.
    pub fn load(path: &Path) -> Result<(Dataset, u64)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut read = |buf: &mut [u8]| r.read_exact(buf).map_err(|e| Error::io(path, e));
        let mut len = [0u8; 8];
        read(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 20 {
            return Err(Error::InvalidInput(format!("implausible header length {len}")));
        }
        let mut header = vec![0u8; len as usize];
        read(&mut header)?;
        let header: DumpHeader = serde_json::from_slice(&header)?;
        if header.schema != DUMP_SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported dump schema {}", header.schema)));
        }
        let mut features = Vec::with_capacity(header.n * header.d);
        let mut buf = [0u8; 8];
        for _ in 0..header.n * header.d {
            read(&mut buf)?;
            features.push(f64::from_le_bytes(buf));
        }
        let mut labels = Vec::with_capacity(header.n);
        let mut buf = [0u8; 4];
        for _ in 0..header.n {
            read(&mut buf)?;
            labels.push(u32::from_le_bytes(buf) as usize);
        }
        let features = Array2::from_shape_vec((header.n, header.d), features)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok((Dataset::new(features, labels, header.k)?, header.seed))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpHeader {
    schema: u32,
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
}

fn histogram(labels: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut h = vec![0; k];
    for y in labels {
        h[y] += 1;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticParams {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Smallest distance between two class means, in noise standard deviations.
    pub class_sep: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 16,
            per_class: 625,
            class_sep: 4.0,
        }
    }
}

/// Standardized train and test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Gaussian blobs with unit noise, split 80/20 per class, then standardized
/// with train statistics.
pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<SyntheticData> {
    let SyntheticParams {
        num_classes: k,
        dim: d,
        per_class: n,
        class_sep,
    } = *params;
    if k < 2 || d < 2 || n < 10 {
        return Err(Error::InvalidInput(format!(
            "synthetic data needs K >= 2, d >= 2, n >= 10; got K={k}, d={d}, n={n}"
        )));
    }
    if !(class_sep.is_finite() && class_sep > 0.0) {
        return Err(Error::InvalidInput(format!("class_sep must be positive, got {class_sep}")));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_DATA]);

    let mut means = Array2::<f64>::zeros((k, d));
    means.mapv_inplace(|_| rng.sample(StandardNormal));
    let mut min_dist = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            let diff = &means.row(a) - &means.row(b);
            min_dist = min_dist.min(diff.dot(&diff).sqrt());
        }
    }
    if min_dist == 0.0 {
        return Err(Error::InvalidInput("degenerate class means".into()));
    }
    means *= class_sep / min_dist;

    let n_test = n / 5;
    let n_train = n - n_test;
    let mut train_x = Array2::<f64>::zeros((k * n_train, d));
    let mut test_x = Array2::<f64>::zeros((k * n_test, d));
    let mut train_y = Vec::with_capacity(k * n_train);
    let mut test_y = Vec::with_capacity(k * n_test);
    for c in 0..k {
        for s in 0..n {
            let mut row = if s < n_train {
                train_y.push(c);
                train_x.row_mut(c * n_train + s)
            } else {
                test_y.push(c);
                test_x.row_mut(c * n_test + s - n_train)
            };
            for (x, m) in row.iter_mut().zip(means.row(c)) {
                let noise: f64 = rng.sample(StandardNormal);
                *x = m + noise;
            }
        }
    }

    let mean = train_x.mean_axis(Axis(0)).expect("non-empty train split");
    let std: Array1<f64> = train_x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    for x in [&mut train_x, &mut test_x] {
        *x -= &mean;
        *x /= &std;
    }
    debug!("generated {} train / {} test samples", train_y.len(), test_y.len());
    Ok(SyntheticData {
        train: Dataset::new(train_x, train_y, k)?,
        test: Dataset::new(test_x, test_y, k)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    Noniid,
}

impl std::fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PartitionMode::Iid => "iid",
            PartitionMode::Noniid => "noniid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardSpec {
    pub shards: Vec<Vec<usize>>,
    pub mode: PartitionMode,
    pub classes_per_client: Option<usize>,
}

impl ShardSpec {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    /// Shards are non-empty, disjoint and index into `dataset_len` rows.
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (c, shard) in self.shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::Contract(format!("shard {c} is empty")));
            }
            for &i in shard {
                if i >= dataset_len {
                    return Err(Error::Contract(format!("shard {c} indexes row {i} of {dataset_len}")));
                }
                if !seen.insert(i) {
                    return Err(Error::Contract(format!("row {i} appears in more than one shard")));
                }
            }
        }
        Ok(())
    }

    pub fn histograms(&self, dataset: &Dataset) -> Vec<Vec<usize>> {
        self.shards
            .iter()
            .map(|s| histogram(s.iter().map(|&i| dataset.labels()[i]), dataset.num_classes()))
            .collect()
    }
}

/// Equal-size shards with identical class histograms. Per-class remainders
/// are dropped.
pub fn partition_iid(dataset: &Dataset, num_clients: usize, seed: u64) -> Result<ShardSpec> {
    if num_clients == 0 {
        return Err(Error::InvalidInput("need at least one client".into()));
    }
    let mut by_class = dataset.indices_by_class();
    let smallest = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if num_clients > smallest {
        return Err(Error::InvalidInput(format!(
            "{num_clients} clients but the smallest class has {smallest} samples"
        )));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_PARTITION]);
    let mut shards = vec![Vec::new(); num_clients];
    let mut dropped = 0;
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
        let per = smallest / num_clients;
        for (c, shard) in shards.iter_mut().enumerate() {
            shard.extend_from_slice(&idx[c * per..(c + 1) * per]);
        }
        dropped += idx.len() - per * num_clients;
    }
    if dropped > 0 {
        info!("iid partition dropped {dropped} samples to equalize shards");
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(ShardSpec {
        shards,
        mode: PartitionMode::Iid,
        classes_per_client: None,
    })
}

/// Each client draws `classes_per_client` distinct classes. Classes are dealt
/// from concatenated shuffles of all classes, so every class is held by some
/// client whenever `N * classes_per_client >= K`. A class's samples are split
/// as evenly as possible among its holders.
pub fn partition_noniid(
    dataset: &Dataset,
    num_clients: usize,
    classes_per_client: usize,
    seed: u64,
) -> Result<ShardSpec> {
    let k = dataset.num_classes();
    if num_clients == 0 {
        return Err(Error::InvalidInput("need at least one client".into()));
    }
    if classes_per_client == 0 || classes_per_client > k {
        return Err(Error::InvalidInput(format!(
            "classes_per_client must be in [1, {k}], got {classes_per_client}"
        )));
    }
    let by_class = dataset.indices_by_class();
    for attempt in 0..NONIID_ATTEMPTS {
        let mut rng = rng::stream(seed, &[rng::TAG_PARTITION, attempt]);
        let Some(assignment) = deal_classes(num_clients, classes_per_client, k, &mut rng) else {
            continue;
        };
        let mut holders = vec![Vec::new(); k];
        for (c, classes) in assignment.iter().enumerate() {
            for &class in classes {
                holders[class].push(c);
            }
        }
        if holders
            .iter()
            .zip(&by_class)
            .any(|(h, idx)| !h.is_empty() && idx.len() < h.len())
        {
            continue;
        }
        let mut shards = vec![Vec::new(); num_clients];
        for (class, h) in holders.iter().enumerate() {
            let mut idx = by_class[class].clone();
            idx.shuffle(&mut rng);
            let (base, extra) = (idx.len() / h.len().max(1), idx.len() % h.len().max(1));
            let mut start = 0;
            for (pos, &c) in h.iter().enumerate() {
                let take = base + usize::from(pos < extra);
                shards[c].extend_from_slice(&idx[start..start + take]);
                start += take;
            }
        }
        for s in &mut shards {
            s.sort_unstable();
        }
        if attempt > 0 {
            debug!("non-iid assignment succeeded after {attempt} retries");
        }
        return Ok(ShardSpec {
            shards,
            mode: PartitionMode::Noniid,
            classes_per_client: Some(classes_per_client),
        });
    }
    Err(Error::InvalidInput(format!(
        "no feasible non-iid assignment of {classes_per_client} classes to {num_clients} clients after {NONIID_ATTEMPTS} attempts"
    )))
}

/// Deals `per` distinct classes to each of `n` clients from concatenated
/// shuffles of `0..k`. A card already in the hand is skipped and stays on the
/// deck for the next client.
fn deal_classes(n: usize, per: usize, k: usize, rng: &mut impl Rng) -> Option<Vec<Vec<usize>>> {
    if per > k {
        return None;
    }
    let mut deck: VecDeque<usize> = VecDeque::with_capacity(n * per + k);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut hand: Vec<usize> = Vec::with_capacity(per);
        let mut pos = 0;
        while hand.len() < per {
            if pos == deck.len() {
                let mut round: Vec<usize> = (0..k).collect();
                round.shuffle(rng);
                deck.extend(round);
            }
            if hand.contains(&deck[pos]) {
                pos += 1;
            } else {
                hand.push(deck.remove(pos).expect("pos is in bounds"));
            }
        }
        out.push(hand);
    }
    Some(out)
}
