//! End-to-end detection: component tree, MSERs, isolated regions, candidate
//! filtering and merging, scoring, and line formation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{filter_candidates, merge_fragments, CandidateRegion, MergeParams, Polarity};
use crate::comptree::{build_component_tree, detect_msers, MserParams, ParamError};
use crate::imgio::{GrayImage, PatchError};
use crate::imser::{extract_imsers, group_msers, ImserError, ImserParams};
use crate::scorer::{score_with, CnnScorer, HeuristicScorer, ScoredRegion, Scorer, WeightError, WeightSet};
use crate::textline::{form_lines, LineParams, TextLine};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityMode {
    #[default]
    Both,
    Dark,
    Light,
}

impl PolarityMode {
    pub fn polarities(self) -> &'static [Polarity] {
        match self {
            PolarityMode::Both => &[Polarity::Dark, Polarity::Light],
            PolarityMode::Dark => &[Polarity::Dark],
            PolarityMode::Light => &[Polarity::Light],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScorerChoice {
    #[default]
    Heuristic,
    Cnn { weights: PathBuf },
}

/// Every tunable of the detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mser: MserParams,
    pub imser: ImserParams,
    pub max_holes: usize,
    pub merge: MergeParams,
    pub scorer: ScorerChoice,
    pub lines: LineParams,
    pub polarity: PolarityMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mser: MserParams::default(),
            imser: ImserParams::default(),
            max_holes: 3,
            merge: MergeParams::default(),
            scorer: ScorerChoice::default(),
            lines: LineParams::default(),
            polarity: PolarityMode::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid parameter {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Grouping(#[from] ImserError),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.mser.validate()?;
        if self.imser.gamma.is_nan() || self.imser.gamma < 0.0 {
            return Err(PipelineError::Invalid("gamma"));
        }
        if self.imser.min_emit_area < 1 {
            return Err(PipelineError::Invalid("min_emit_area"));
        }
        if !(0.0..=1.0).contains(&self.lines.conf_threshold) {
            return Err(PipelineError::Invalid("conf_threshold"));
        }
        Ok(())
    }
}

/// A configured detector. Holds the scorer, so weights are loaded once.
pub struct Detector {
    config: PipelineConfig,
    scorer: Box<dyn Scorer>,
}

impl std::fmt::Debug for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Detector").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Detector {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let scorer: Box<dyn Scorer> = match &config.scorer {
            ScorerChoice::Heuristic => Box::new(HeuristicScorer),
            ScorerChoice::Cnn { weights } => Box::new(CnnScorer::new(WeightSet::load(weights)?)),
        };
        Detector::with_scorer(config, scorer)
    }

    pub fn with_scorer(config: PipelineConfig, scorer: Box<dyn Scorer>) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Detector { config, scorer })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn polarity_image(img: &GrayImage, polarity: Polarity) -> GrayImage {
        match polarity {
            Polarity::Dark => img.clone(),
            Polarity::Light => img.invert(),
        }
    }

    fn isolated_for(&self, img: &GrayImage, polarity: Polarity) -> Result<Vec<CandidateRegion>, PipelineError> {
        let tree = build_component_tree(img);
        let msers = detect_msers(&tree, &self.config.mser);
        let trees = group_msers(msers)?;
        Ok(trees
            .iter()
            .flat_map(|t| extract_imsers(t, &self.config.imser))
            .map(|r| CandidateRegion::new(r, polarity))
            .collect())
    }

    /// Isolated regions of every enabled polarity, before filtering.
    pub fn isolated_regions(&self, img: &GrayImage) -> Result<Vec<CandidateRegion>, PipelineError> {
        let mut out = Vec::new();
        for &p in self.config.polarity.polarities() {
            out.extend(self.isolated_for(&Self::polarity_image(img, p), p)?);
        }
        Ok(out)
    }

    /// Filtered, merged and scored candidates of every enabled polarity.
    /// Each polarity is scored on its own (possibly inverted) image.
    pub fn scored_candidates(&self, img: &GrayImage) -> Result<Vec<ScoredRegion>, PipelineError> {
        let mut out = Vec::new();
        for &p in self.config.polarity.polarities() {
            let pimg = Self::polarity_image(img, p);
            let isolated = self.isolated_for(&pimg, p)?;
            let kept = filter_candidates(isolated, self.config.max_holes);
            let merged = merge_fragments(kept, &self.config.merge);
            out.extend(score_with(self.scorer.as_ref(), &pimg, merged)?);
        }
        Ok(out)
    }

    pub fn detect(&self, img: &GrayImage) -> Result<Vec<TextLine>, PipelineError> {
        Ok(form_lines(self.scored_candidates(img)?, &self.config.lines))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_has_no_lines() {
        let d = Detector::new(PipelineConfig::default()).unwrap();
        let img = GrayImage::filled(64, 48, 230).unwrap();
        assert!(d.detect(&img).unwrap().is_empty());
        assert!(d.isolated_regions(&img).unwrap().is_empty());
    }

    #[test]
    fn config_round_trips_through_serde_defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.imser.gamma, 0.15);
        assert_eq!(c.mser.delta, 2);
        assert!(c.validate().is_ok());
        let bad = PipelineConfig {
            imser: ImserParams { gamma: -1.0, min_emit_area: 10 },
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn missing_weights_file_fails() {
        let c = PipelineConfig {
            scorer: ScorerChoice::Cnn { weights: "/nonexistent/w.imsr".into() },
            ..PipelineConfig::default()
        };
        assert!(matches!(Detector::new(c), Err(PipelineError::Weights(_))));
    }

    #[test]
    fn black_square_is_one_isolated_region() {
        let img = GrayImage::from_fn(40, 40, |x, y| {
            if (12..22).contains(&x) && (12..22).contains(&y) {
                0
            } else {
                255
            }
        })
        .unwrap();
        let d = Detector::new(PipelineConfig {
            polarity: PolarityMode::Dark,
            ..PipelineConfig::default()
        })
        .unwrap();
        let regs = d.isolated_regions(&img).unwrap();
        assert_eq!(regs.len(), 1);
        assert_eq!(regs[0].region().area(), 100);
    }
}
