use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, CostModel, ObjectiveWeights};
use crate::data::{PartitionMode, SyntheticParams};
use crate::error::{Error, Result};
use crate::pairing::{PairingStrategy, WeightParams};
use crate::protocol::{Algorithm, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub num_clients: usize,
    pub radius_m: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    /// Server frequency as a multiple of the fastest client's.
    pub server_speedup: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            num_clients: 20,
            radius_m: 50.0,
            f_min_hz: 0.1e9,
            f_max_hz: 2.0e9,
            server_speedup: 10.0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients < 2 {
            return Err(Error::Config("num_clients must be >= 2".into()));
        }
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(Error::Config(format!("radius_m must be positive, got {}", self.radius_m)));
        }
        if !(self.f_min_hz > 0.0 && self.f_max_hz >= self.f_min_hz && self.f_max_hz.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < f_min_hz <= f_max_hz, got [{}, {}]",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if !(self.server_speedup > 0.0 && self.server_speedup.is_finite()) {
            return Err(Error::Config("server_speedup must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataParams {
    pub synthetic: SyntheticParams,
    pub partition: PartitionMode,
    pub classes_per_client: usize,
}

impl Default for DataParams {
    fn default() -> Self {
        Self {
            synthetic: SyntheticParams::default(),
            partition: PartitionMode::Iid,
            classes_per_client: 2,
        }
    }
}

/// Layer widths used for latency accounting in the analytic comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyProfile {
    /// Widths of the trained MLP.
    Model,
    /// Flattened feature-map sizes of an 18-layer residual network on
    /// 3x32x32 inputs.
    Resnet18Cifar,
    Custom(Vec<usize>),
}

impl LatencyProfile {
    pub fn widths(&self, model_dims: &[usize]) -> Vec<usize> {
        match self {
            LatencyProfile::Model => model_dims.to_vec(),
            LatencyProfile::Resnet18Cifar => {
                let mut w = vec![3 * 32 * 32];
                w.extend([64 * 32 * 32; 5]);
                w.extend([128 * 16 * 16; 4]);
                w.extend([256 * 8 * 8; 4]);
                w.extend([512 * 4 * 4; 4]);
                w.push(10);
                w
            }
            LatencyProfile::Custom(w) => w.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyParams {
    pub profile: LatencyProfile,
    /// CPU cycles to process one layer for one mini-batch step.
    pub cycles_per_layer: f64,
    pub bytes_per_scalar: usize,
    /// Client dataset size assumed by the analytic comparisons.
    pub samples_per_client: usize,
}

impl Default for LatencyParams {
    fn default() -> Self {
        Self {
            profile: LatencyProfile::Resnet18Cifar,
            cycles_per_layer: 1e8,
            bytes_per_scalar: 8,
            samples_per_client: 2500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: ScenarioParams,
    pub channel: ChannelParams,
    pub pairing: WeightParams,
    pub objective: ObjectiveWeights,
    pub training: TrainingConfig,
    pub data: DataParams,
    /// Hidden layer widths of the MLP.
    pub hidden: Vec<usize>,
    /// Algorithm for `run`.
    pub algorithm: Algorithm,
    /// Pairing used by FedPairing in `run` and `compare-algorithms`.
    pub pairing_strategy: PairingStrategy,
    pub latency: LatencyParams,
    /// Scenario seeds averaged by the comparisons.
    pub comparison_seeds: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenario: ScenarioParams::default(),
            channel: ChannelParams::default(),
            pairing: WeightParams::default(),
            objective: ObjectiveWeights::default(),
            training: TrainingConfig::default(),
            data: DataParams::default(),
            hidden: vec![64, 64, 32],
            algorithm: Algorithm::Fedpairing,
            pairing_strategy: PairingStrategy::Greedy,
            latency: LatencyParams::default(),
            comparison_seeds: 20,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn model_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.data.synthetic.dim];
        dims.extend(&self.hidden);
        dims.push(self.data.synthetic.num_classes);
        dims
    }

    /// Cost model of the trained MLP.
    pub fn model_cost(&self) -> Result<CostModel> {
        CostModel::new(self.model_dims(), self.latency.cycles_per_layer, self.latency.bytes_per_scalar)
    }

    /// Cost model for the analytic comparisons.
    pub fn profile_cost(&self) -> Result<CostModel> {
        CostModel::new(
            self.latency.profile.widths(&self.model_dims()),
            self.latency.cycles_per_layer,
            self.latency.bytes_per_scalar,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.channel.validate()?;
        self.pairing.validate()?;
        self.training.validate()?;
        if self.objective.alpha < 0.0 || self.objective.beta < 0.0 {
            return Err(Error::Config("objective weights must be >= 0".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden must list at least one positive width".into()));
        }
        let s = &self.data.synthetic;
        if s.num_classes < 2 || s.dim < 2 || s.per_class < 10 {
            return Err(Error::Config("synthetic data needs num_classes >= 2, dim >= 2, per_class >= 10".into()));
        }
        let c = self.data.classes_per_client;
        if c == 0 || c > s.num_classes {
            return Err(Error::Config(format!("classes_per_client must be in [1, {}]", s.num_classes)));
        }
        let w = self.hidden.len() + 1;
        if self.training.client_layers > w {
            return Err(Error::Config(format!("client_layers must be <= {w} for this model")));
        }
        let profile = self.profile_cost()?;
        if self.training.client_layers > profile.num_layers() {
            return Err(Error::Config("client_layers exceeds the latency profile depth".into()));
        }
        if self.latency.samples_per_client == 0 {
            return Err(Error::Config("samples_per_client must be positive".into()));
        }
        if self.comparison_seeds == 0 {
            return Err(Error::Config("comparison_seeds must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(cfg.model_dims(), vec![16, 64, 64, 32, 10]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"sede": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"training": {"epochs": 3}}"#).is_err());
        let partial = ExperimentConfig::from_json(r#"{"seed": 3, "training": {"rounds": 4}}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.training.rounds, 4);
        assert_eq!(partial.training.batch_size, 32);
    }

    #[test]
    fn resnet_profile_shape() {
        let w = LatencyProfile::Resnet18Cifar.widths(&[]);
        assert_eq!(w.len(), 19);
        assert_eq!(w[0], 3072);
        assert_eq!(*w.last().unwrap(), 10);
    }

    #[test]
    fn rejects_inconsistent_settings() {
        let mut cfg = ExperimentConfig::default();
        cfg.training.client_layers = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.data.classes_per_client = 11;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.f_min_hz = 3e9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn custom_profile_parses() {
        let cfg = ExperimentConfig::from_json(r#"{"latency": {"profile": {"custom": [4, 8, 2]}}}"#).unwrap();
        assert_eq!(cfg.profile_cost().unwrap().num_layers(), 2);
    }
}
