use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdaptError, NetworkParams};
use crate::corpus::Normalizer;

pub const CHECKPOINT_FORMAT: &str = "grl-asr-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: layer specs and parameters (shared, senone and optional
/// domain head), feature-layer index, input normalizer, RNG state and epoch
/// counter. Floats are written with round-trip precision, so a reload is
/// bitwise identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epoch: usize,
    pub network: NetworkParams,
    pub normalizer: Option<Normalizer>,
    pub rng: Option<ChaCha8Rng>,
}

impl Checkpoint {
    pub fn new(network: NetworkParams, epoch: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            epoch,
            network,
            normalizer: None,
            rng: None,
        }
    }

    pub fn with_normalizer(mut self, n: Normalizer) -> Self {
        self.normalizer = Some(n);
        self
    }

    pub fn with_rng(mut self, rng: ChaCha8Rng) -> Self {
        self.rng = Some(rng);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AdaptError> {
        let ck: Checkpoint = serde_json::from_str(s)
            .map_err(|e| AdaptError::State(format!("unreadable checkpoint: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(AdaptError::State(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck)
    }

    /// Writes the JSON form, creating missing parent directories.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, AdaptError> {
        let s = fs::read_to_string(path)
            .map_err(|e| AdaptError::State(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grl::{attach_domain_head, build_main_network};
    use rand::{Rng, SeedableRng};

    #[test]
    fn json_round_trip_is_bitwise() {
        let net = build_main_network(9, 4, &[7, 5], 11).unwrap();
        let net = attach_domain_head(net, 1, &[3], 0.01, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _: f64 = rng.random();
        let ck = Checkpoint::new(net, 3).with_rng(rng.clone());
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let a = ck.network.main_flat_params();
        let b = back.network.main_flat_params();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let mut r2 = back.rng.unwrap();
        assert_eq!(rng.random::<u64>(), r2.random::<u64>());
    }

    #[test]
    fn rejects_foreign_json() {
        assert!(Checkpoint::from_json("{}").is_err());
        let mut ck = Checkpoint::new(build_main_network(2, 2, &[2], 0).unwrap(), 0);
        ck.version = 99;
        assert!(Checkpoint::from_json(&ck.to_json()).is_err());
    }
}
