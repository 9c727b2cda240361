//! Pipeline configuration shared by the CLI, the service and config files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{make_patch_grid, FilterBank, PatchGridSpec, DEFAULT_PATCH_SIZE, DEFAULT_STRIDE};
use crate::matcher::{FusionWeights, MatchConfig, ScoringMode};
use crate::normalize::CANONICAL_SIZE;

/// Every descriptor and matcher default in one place. Config files (TOML or
/// JSON) may set any subset of these keys.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub mode: ScoringMode,
    pub weights: FusionWeights,
    /// Candidate list length.
    pub k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            patch_size: DEFAULT_PATCH_SIZE,
            stride: DEFAULT_STRIDE,
            mode: ScoringMode::PatchMean,
            weights: FusionWeights::default(),
            k: 5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        make_patch_grid(CANONICAL_SIZE, self.patch_size, self.stride)?;
        self.weights.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PatchGridSpec> {
        make_patch_grid(CANONICAL_SIZE, self.patch_size, self.stride)
    }

    pub fn filter_bank(&self) -> FilterBank {
        FilterBank::new(self.patch_size)
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            weights: self.weights,
            mode: self.mode,
        }
    }

    /// Short label used as a table column header.
    pub fn label(&self) -> String {
        format!(
            "{} w={}/{} stride={}",
            self.mode, self.weights.appearance, self.weights.structure, self.stride
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid().unwrap().len(), 49);
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"mode": "concat", "k": 3}"#).unwrap();
        assert_eq!(cfg.mode, ScoringMode::Concat);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.stride, DEFAULT_STRIDE);
        assert!(PipelineConfig::from_json(r#"{"stride": 20}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
