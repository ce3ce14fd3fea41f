// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reward net checkpoints.
//!
//! ```text
//! header_len u64 LE | JSON header (header_len bytes) | f32 LE blob W1|b1|W2|b2
//! ```
//!
//! The header carries the shapes, the activation tag, and, once training
//! has finished, the non-toxic direction and `r⁺` statistics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewardnet::{Activation, RewardNet, RewardStats, TrainConfig};
use crate::transition::NonToxicDirection;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dim: usize,
    pub hidden: usize,
    pub activation: Activation,
    #[serde(default)]
    pub stats: Option<RewardStats>,
    #[serde(default)]
    pub d_plus: Option<NonToxicDirection>,
    #[serde(default)]
    pub model_tag: String,
    #[serde(default)]
    pub n_in: Option<usize>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub epoch_losses: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub net: RewardNet,
}

impl Checkpoint {
    /// Bare checkpoint for `net` with no training metadata.
    pub fn new(net: RewardNet) -> Self {
        Self {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                dim: net.dim(),
                hidden: net.hidden(),
                activation: net.activation(),
                stats: None,
                d_plus: None,
                model_tag: String::new(),
                n_in: None,
                train: None,
                epoch_losses: Vec::new(),
            },
            net,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(8 + json.len() + 4 * self.net.params().len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| Error::CorruptRecord(format!("checkpoint: {m}"));
        if bytes.len() < 8 {
            return Err(corrupt("shorter than its length prefix".into()));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|n| n.checked_add(8))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt(format!("header length {header_len} exceeds file")))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..header_end])?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(header.format_version));
        }
        let blob = &bytes[header_end..];
        let expected = (header.hidden * header.dim + 2 * header.hidden + 1) * 4;
        if blob.len() != expected {
            return Err(corrupt(format!(
                "parameter blob has {} bytes, expected {expected}",
                blob.len()
            )));
        }
        let params = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let net = RewardNet::from_flat(header.dim, header.hidden, params)?;
        if let Some(d) = &header.d_plus {
            crate::linalg::check_len(header.dim, d.dim())?;
        }
        Ok(Self { header, net })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    #[test]
    fn round_trip_bitwise() {
        let mut rng = Rng::new(8);
        let net = RewardNet::glorot(5, 7, &mut rng).unwrap();
        let mut ck = Checkpoint::new(net);
        ck.header.stats = Some(RewardStats {
            r_mean_plus: 0.1234567,
            token_count: 40,
        });
        let d: Vec<f32> = (0..5).map(|_| rng.normal() as f32).collect();
        ck.header.d_plus = Some(NonToxicDirection::new(d, 9).unwrap());
        ck.header.model_tag = "planted:{}".into();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let json: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len]).unwrap();
        assert_eq!(json["activation"], "tanh");
        assert_eq!(json["hidden"], 7);
    }

    #[test]
    fn corrupt_blob_rejected() {
        let net = RewardNet::glorot(2, 3, &mut Rng::new(0)).unwrap();
        let bytes = Checkpoint::new(net).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..5]).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&nan),
            Err(Error::NonFinite(_))
        ));
    }
}
