//! Scene text detection built around isolated maximally stable extremal
//! regions (I-MSERs).
//!
//! The stages are exposed individually so each can be used or tested on its
//! own:
//!
//! 1. [`comptree`] builds the component tree of a grayscale image and picks
//!    classic MSERs from it.
//! 2. [`imser`] groups nested MSERs into trees and reduces every tree to
//!    pairwise-disjoint regions; it also fits the merge threshold `gamma`.
//! 3. [`candidates`] drops regions with many holes and merges vertically
//!    split glyph fragments.
//! 4. [`scorer`] assigns a text confidence with a small CNN (or a geometric
//!    fallback).
//! 5. [`textline`] chains confident regions into lines.
//!
//! [`pipeline::Detector`] strings them together and [`eval`] scores
//! detections against ground truth.

pub mod candidates;
pub mod comptree;
pub mod eval;
pub mod geom;
pub mod imgio;
pub mod imser;
pub mod pipeline;
pub mod scorer;
pub mod synth;
pub mod textline;

pub use candidates::{CandidateRegion, MergeParams, Polarity};
pub use comptree::{build_component_tree, detect_msers, ComponentTree, ErNode, MserParams, NodeId, Region};
pub use eval::{match_and_score, BoxesByImage, Metrics};
pub use geom::{Point, Rect};
pub use imgio::{extract_patch, load_gray, GrayImage, Patch};
pub use imser::{extract_imsers, group_msers, optimize_gamma, ImserParams, LabeledSample, MserTree, SampleLabel};
pub use pipeline::{Detector, PipelineConfig, PipelineError, PolarityMode, ScorerChoice};
pub use scorer::{forward, Confidence, ScoredRegion, Scorer, WeightSet};
pub use textline::{form_lines, LineParams, TextLine};
