//! Pipeline configuration shared by tokenization, enhancement and training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Slice,
    Volume,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Slice => "slice",
            Modality::Volume => "volume",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slice" => Ok(Modality::Slice),
            "volume" => Ok(Modality::Volume),
            other => Err(Error::Config(format!("unknown modality {other:?}"))),
        }
    }
}

/// The config file: `{K, d_v, d_z, d_y, d_x, d_f, m_volume, seed}` plus the
/// organ aggregation lengths and the decoder's sequence limit. Missing keys take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(rename = "K")]
    pub patch: usize,
    pub d_v: usize,
    pub d_z: usize,
    pub d_y: usize,
    pub d_x: usize,
    pub d_f: usize,
    pub m_volume: usize,
    pub seed: u64,
    #[serde(rename = "L_c_slice")]
    pub l_c_slice: usize,
    #[serde(rename = "L_c_volume")]
    pub l_c_volume: usize,
    pub max_seq_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch: 16,
            d_v: 64,
            d_z: 16,
            d_y: 16,
            d_x: 16,
            d_f: 128,
            m_volume: 2,
            seed: 0,
            l_c_slice: 81,
            l_c_volume: 90,
            max_seq_len: 2048,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("K", self.patch),
            ("d_v", self.d_v),
            ("d_f", self.d_f),
            ("m_volume", self.m_volume),
            ("L_c_slice", self.l_c_slice),
            ("L_c_volume", self.l_c_volume),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [("d_z", self.d_z), ("d_y", self.d_y), ("d_x", self.d_x)] {
            if v == 0 || v % 2 != 0 {
                return Err(Error::Config(format!(
                    "{name} must be a positive even number, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Unshuffle window: always 1 for slices.
    pub fn unshuffle_factor(&self, modality: Modality) -> usize {
        match modality {
            Modality::Slice => 1,
            Modality::Volume => self.m_volume,
        }
    }

    pub fn agg_len(&self, modality: Modality) -> usize {
        match modality {
            Modality::Slice => self.l_c_slice,
            Modality::Volume => self.l_c_volume,
        }
    }

    /// Feature width after positional concat.
    pub fn positioned_dim(&self) -> usize {
        self.d_v + self.d_z + self.d_y + self.d_x
    }

    /// Projection input width for a given modality.
    pub fn projection_in_dim(&self, modality: Modality) -> usize {
        let m = self.unshuffle_factor(modality);
        self.positioned_dim() * m * m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_and_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"K": 4, "d_f": 32}"#).unwrap();
        assert_eq!(cfg.patch, 4);
        assert_eq!(cfg.d_f, 32);
        assert_eq!(cfg.d_v, 64);
        assert_eq!((cfg.l_c_slice, cfg.l_c_volume), (81, 90));
        let v = serde_json::to_value(&cfg).unwrap();
        for key in ["K", "d_v", "d_z", "d_y", "d_x", "d_f", "m_volume", "seed", "L_c_slice", "L_c_volume"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn odd_positional_dim_rejected() {
        let cfg = PipelineConfig {
            d_y: 7,
            ..PipelineConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(PipelineConfig::default().validate().is_ok());
    }
}
