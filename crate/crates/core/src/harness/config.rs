use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grl::{AdaptConfig, MixingPolicy};
use crate::optim::{AdamConfig, NewBobConfig};
use crate::synth::{ChannelProfile, FeatureConfig, Variation};

/// Synthetic corpora: one generator family, a source and a cross-language
/// inventory drawn from it, and the recording channels of each domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_classes: usize,
    pub family_seed: u64,
    /// Probability that a class keeps its family template in a language.
    pub template_overlap: f64,
    pub source_language: String,
    pub cross_language: String,
    pub utterance_length_s: f64,
    pub variation: Variation,
    pub source_channel: ChannelProfile,
    pub target_channel: ChannelProfile,
    /// Extra far-field channels mixed into the target training data.
    #[serde(default)]
    pub extra_target_channels: Vec<ChannelProfile>,
    pub train_utterances: usize,
    pub valid_utterances: usize,
    pub test_utterances: usize,
    /// Base of the per-split generator seeds.
    pub seed: u64,
    /// Multiplier applied after per-dimension standardization.
    pub input_scale: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            family_seed: 17,
            template_overlap: 0.5,
            source_language: "it".into(),
            cross_language: "fr".into(),
            utterance_length_s: 2.0,
            variation: Variation::default(),
            source_channel: ChannelProfile::channel1(),
            target_channel: ChannelProfile {
                noise_pole: 0.6,
                ..ChannelProfile::channel4()
            },
            extra_target_channels: Vec::new(),
            train_utterances: 200,
            valid_utterances: 20,
            test_utterances: 40,
            seed: 1,
            input_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub domain_head: Vec<usize>,
    pub leaky_slope: f64,
    pub init_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            domain_head: vec![32],
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub halving_factor: f64,
    pub improvement_threshold: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        let nb = NewBobConfig::default();
        Self {
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            halving_factor: nb.halving_factor,
            improvement_threshold: nb.improvement_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageOneConfig {
    pub learning_rate: f64,
    /// Upper bound on epochs; new-bob may stop earlier.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub newbob: bool,
}

impl Default for StageOneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 15,
            batch_size: 256,
            seed: 0,
            newbob: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    pub lambda: f64,
    pub feature_layer: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub newbob: bool,
}

impl Default for AdaptSection {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            feature_layer: 2,
            epochs: 13,
            learning_rate: 1e-4,
            batch_size: 256,
            newbob: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lambdas: Vec<f64>,
    pub feature_layers: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![1.0, 2.0, 4.0],
            feature_layers: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Fractions of the target training data, smallest first.
    pub fractions: Vec<f64>,
    /// Seed of the nested subset draw.
    pub subset_seed: u64,
    pub cross_language: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.125, 0.25, 0.5, 1.0],
            subset_seed: 7,
            cross_language: true,
        }
    }
}

/// Everything a run needs. Serialized as TOML; every field has a default so a
/// config file only lists what it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub features: FeatureConfig,
    pub network: NetworkConfig,
    pub optim: OptimConfig,
    pub stage1: StageOneConfig,
    pub adapt: AdaptSection,
    pub grid: GridConfig,
    pub sweep: SweepConfig,
    /// Adaptation seeds; each drives domain-head init and batch order.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            features: FeatureConfig::default(),
            network: NetworkConfig::default(),
            optim: OptimConfig::default(),
            stage1: StageOneConfig::default(),
            adapt: AdaptSection::default(),
            grid: GridConfig::default(),
            sweep: SweepConfig::default(),
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("runs/desk"),
        }
    }
}

fn bad(field: &str, why: &str) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        detail: why.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(s).map_err(|e| bad("<file>", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `dotted.key=value` override. The value is parsed as a TOML
    /// literal and falls back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<(), HarnessError> {
        self.apply(&[assignment])
    }

    /// Applies several overrides in order and validates only the result, so
    /// changes that depend on each other (say, depth and feature layers) can
    /// be given in any order. On error `self` is left unchanged.
    pub fn apply<S: AsRef<str>>(&mut self, assignments: &[S]) -> Result<(), HarnessError> {
        let mut next = self.clone();
        for a in assignments {
            next.assign(a.as_ref())?;
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    fn assign(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| bad(assignment, "expected key=value"))?;
        let key = key.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut root = toml::Value::try_from(&*self).expect("config serializes");
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| bad(key, "is not a table"))?;
            if !table.contains_key(*part) {
                let known: Vec<&str> = table.keys().map(String::as_str).collect();
                return Err(bad(key, &format!("unknown field; expected one of {}", known.join(", "))));
            }
            if i + 1 == parts.len() {
                let value = match (&table[*part], value.clone()) {
                    (toml::Value::Float(_), toml::Value::Integer(v)) => toml::Value::Float(v as f64),
                    (_, v) => v,
                };
                table.insert(part.to_string(), value);
                break;
            }
            node = table.get_mut(*part).expect("checked");
        }
        *self = root.try_into().map_err(|e: toml::de::Error| bad(key, e.message()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let c = &self.corpus;
        if c.n_classes < 2 {
            return Err(bad("corpus.n_classes", "need at least 2 classes"));
        }
        if c.source_language == c.cross_language {
            return Err(bad("corpus.cross_language", "must differ from the source language"));
        }
        if c.train_utterances == 0 || c.valid_utterances == 0 || c.test_utterances == 0 {
            return Err(bad("corpus", "every split needs at least one utterance"));
        }
        if !(c.input_scale > 0.0 && c.input_scale.is_finite()) {
            return Err(bad("corpus.input_scale", "must be positive"));
        }
        for (f, ch) in [("corpus.source_channel", &c.source_channel), ("corpus.target_channel", &c.target_channel)] {
            ch.validate().map_err(|e| bad(f, &e.to_string()))?;
        }
        for ch in &c.extra_target_channels {
            ch.validate()
                .map_err(|e| bad("corpus.extra_target_channels", &e.to_string()))?;
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(bad("network.hidden", "need non-empty positive widths"));
        }
        if self.network.domain_head.contains(&0) {
            return Err(bad("network.domain_head", "widths must be positive"));
        }
        let depth = self.network.hidden.len();
        if !(1..=depth).contains(&self.adapt.feature_layer) {
            return Err(bad("adapt.feature_layer", &format!("must lie in 1..={depth}")));
        }
        if self.grid.lambdas.is_empty() || self.grid.feature_layers.is_empty() {
            return Err(bad("grid", "lambda and feature-layer lists must be non-empty"));
        }
        if self.grid.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(bad("grid.lambdas", "must be finite and non-negative"));
        }
        if let Some(f) = self.grid.feature_layers.iter().find(|f| !(1..=depth).contains(*f)) {
            return Err(bad("grid.feature_layers", &format!("{f} outside 1..={depth}")));
        }
        let fr = &self.sweep.fractions;
        if fr.is_empty() || fr.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(bad("sweep.fractions", "must lie in (0, 1]"));
        }
        if fr.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("sweep.fractions", "must be strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "need at least one seed"));
        }
        if self.stage1.batch_size == 0 || self.stage1.learning_rate <= 0.0 {
            return Err(bad("stage1", "batch size and learning rate must be positive"));
        }
        self.adapt_config(self.adapt.lambda, self.adapt.feature_layer, 0)
            .validate()
            .map_err(|e| bad("adapt", &e.to_string()))?;
        Ok(())
    }

    pub fn adam(&self, learning_rate: f64) -> AdamConfig {
        AdamConfig {
            learning_rate,
            beta1: self.optim.beta1,
            beta2: self.optim.beta2,
            epsilon: self.optim.epsilon,
        }
    }

    pub fn newbob(&self, initial_lr: f64) -> NewBobConfig {
        NewBobConfig {
            initial_lr,
            halving_factor: self.optim.halving_factor,
            improvement_threshold: self.optim.improvement_threshold,
        }
    }

    pub fn adapt_config(&self, lambda: f64, feature_layer: usize, seed: u64) -> AdaptConfig {
        let a = &self.adapt;
        AdaptConfig {
            lambda_base: lambda,
            feature_layer_index: feature_layer,
            epochs: a.epochs,
            learning_rate: a.learning_rate,
            batch_size: a.batch_size,
            mixing: MixingPolicy::GlobalShuffle,
            seed,
            newbob: a.newbob.then(|| self.newbob(a.learning_rate)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.corpus.source_channel.snr_db, f64::INFINITY);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("seeds = [4]\n[adapt]\nlambda = 1.0\nfeature_layer = 1\nepochs = 3\nlearning_rate = 1e-4\nbatch_size = 64\nnewbob = false\n").unwrap();
        assert_eq!(cfg.seeds, vec![4]);
        assert_eq!(cfg.adapt.epochs, 3);
        assert_eq!(cfg.network, NetworkConfig::default());
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("adapt.lambda=4").unwrap();
        assert_eq!(cfg.adapt.lambda, 4.0);
        cfg.set("seeds=[1, 2]").unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        cfg.set("corpus.target_channel.name=far").unwrap();
        assert_eq!(cfg.corpus.target_channel.name, "far");
        let err = cfg.set("adapt.lamda=1").unwrap_err().to_string();
        assert!(err.contains("adapt.lamda") && err.contains("lambda"), "{err}");
        assert!(cfg.set("adapt.feature_layer=9").is_err());
        assert_eq!(cfg.adapt.feature_layer, 2);
        assert!(cfg.set("noequals").is_err());
    }

    #[test]
    fn batch_overrides_validate_once() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("network.hidden=[8, 8]").is_err());
        cfg.apply(&["network.hidden=[8, 8]", "grid.feature_layers=[1, 2]"]).unwrap();
        assert_eq!(cfg.network.hidden, vec![8, 8]);
        let before = cfg.clone();
        assert!(cfg.apply(&["seeds=[5]", "adapt.feature_layer=3"]).is_err());
        assert_eq!(cfg, before);
    }

    #[test]
    fn unknown_field_in_file() {
        let err = ExperimentConfig::from_toml("[adapt]\nlamda = 1.0\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { .. }));
    }
}
