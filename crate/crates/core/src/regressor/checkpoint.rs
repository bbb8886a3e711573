use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::featurize::{Featurizer, FeaturizerConfig};

const MAGIC: &[u8; 8] = b"EQNCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model bundled with the fitted featurizer it expects.
///
/// On disk: the 8-byte magic `EQNCKPT\0`, then a bincode body (little-endian,
/// fixed field order) starting with the format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub labels: Vec<String>,
    pub featurizer_fingerprint: String,
    pub featurizer: Featurizer,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(labels: Vec<String>, featurizer: Featurizer, model: Model) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            labels,
            featurizer_fingerprint: featurizer.fingerprint(),
            featurizer,
            model,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        bincode::serialize_into(&mut out, self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| Error::Checkpoint("not a checkpoint file (bad magic)".into()))?;
        let ckpt: Checkpoint = bincode::deserialize(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        if ckpt.featurizer.fingerprint() != ckpt.featurizer_fingerprint {
            return Err(Error::Checkpoint(
                "stored featurizer fingerprint is inconsistent".into(),
            ));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Errors unless `cfg` produces the same features this checkpoint was trained on.
    pub fn check_featurizer(&self, cfg: &FeaturizerConfig) -> Result<()> {
        let got = cfg.fingerprint();
        if got != self.featurizer_fingerprint {
            return Err(Error::FingerprintMismatch {
                checkpoint: self.featurizer_fingerprint.clone(),
                config: got,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::Weighting;
    use crate::regressor::LinearModel;

    fn sample() -> Checkpoint {
        let cfg = FeaturizerConfig {
            dim: 8,
            weighting: Weighting::RawCount,
            ..Default::default()
        };
        let featurizer = Featurizer { config: cfg, idf: None };
        let model = Model::Linear(LinearModel::from_parts(
            8,
            (0..16).map(f64::from).collect(),
            vec![1.0, 2.0],
            0.0,
        ));
        Checkpoint::new(vec!["a".into(), "b".into()], featurizer, model)
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert_eq!(bytes, ck.clone().to_bytes().unwrap());
    }

    #[test]
    fn rejects_garbage_and_mismatch() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let ck = sample();
        assert!(ck.check_featurizer(&ck.featurizer.config).is_ok());
        let other = FeaturizerConfig {
            seed: 99,
            ..ck.featurizer.config.clone()
        };
        assert!(matches!(
            ck.check_featurizer(&other),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
