//! Image-to-template glue used by evaluation, the CLI and the service.

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::features::{extract_template, FaceTemplate, FilterBank, PatchGridSpec};
use crate::imaging::RawImage;
use crate::matcher::MatchConfig;
use crate::normalize::{normalize_face, EyeLandmarks, NormalizedFace};

/// Immutable, shareable extraction state: patch grid, filter bank and match settings.
#[derive(Clone, Debug)]
pub struct Engine {
    config: PipelineConfig,
    grid: PatchGridSpec,
    bank: FilterBank,
}

impl Engine {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Engine {
            grid: config.grid()?,
            bank: config.filter_bank(),
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn grid(&self) -> &PatchGridSpec {
        &self.grid
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn match_config(&self) -> MatchConfig {
        self.config.match_config()
    }

    pub fn normalize(&self, img: &RawImage, eyes: Option<EyeLandmarks>) -> Result<NormalizedFace> {
        normalize_face(img, eyes)
    }

    pub fn template(&self, face: &NormalizedFace) -> Result<FaceTemplate> {
        extract_template(face, &self.grid, &self.bank)
    }

    /// Normalizes and templates one image.
    pub fn process(&self, img: &RawImage, eyes: Option<EyeLandmarks>) -> Result<(NormalizedFace, FaceTemplate)> {
        let face = self.normalize(img, eyes)?;
        let template = self.template(&face)?;
        Ok((face, template))
    }
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(PipelineConfig::default()).expect("default config is valid")
    }
}
