//! Command-line arguments and their mapping onto [`PipelineConfig`].

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use imser_core::{PipelineConfig, PolarityMode, ScorerChoice};

#[derive(Debug, Parser)]
#[command(name = "imser", version, about = "Scene text detection with isolated MSERs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect text lines in images.
    Detect(DetectArgs),
    /// Dump the isolated regions of one image.
    ExtractRegions(ExtractArgs),
    /// Fit the merge threshold gamma on labelled images or samples.
    OptimizeGamma(GammaArgs),
    /// Score detections against ground truth.
    Evaluate(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Cnn,
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolarityArg {
    Both,
    Dark,
    Light,
}

/// Detector settings. Values from `--config` are overridden by flags.
#[derive(Clone, Debug, Default, Args)]
pub struct PipelineArgs {
    /// JSON file with a full or partial pipeline configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<u8>,
    #[arg(long)]
    pub min_area: Option<usize>,
    #[arg(long)]
    pub max_area_fraction: Option<f64>,
    #[arg(long)]
    pub max_variation: Option<f64>,
    #[arg(long)]
    pub min_diversity: Option<f64>,
    #[arg(long)]
    pub max_holes: Option<usize>,
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    /// IMSR weight file; implies `--scorer cnn` unless a scorer is given.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerKind>,
    #[arg(long, value_enum)]
    pub polarity: Option<PolarityArg>,
}

impl PipelineArgs {
    /// Builds the effective configuration. Errors are usage errors.
    pub fn resolve(&self) -> Result<PipelineConfig, String> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag {
                    c.$($field)+ = v;
                }
            };
        }
        set!(gamma => imser.gamma);
        set!(delta => mser.delta);
        set!(min_area => mser.min_area);
        set!(max_area_fraction => mser.max_area_fraction);
        set!(max_variation => mser.max_variation);
        set!(min_diversity => mser.min_diversity);
        set!(max_holes => max_holes);
        set!(conf_threshold => lines.conf_threshold);
        if let Some(p) = self.polarity {
            c.polarity = match p {
                PolarityArg::Both => PolarityMode::Both,
                PolarityArg::Dark => PolarityMode::Dark,
                PolarityArg::Light => PolarityMode::Light,
            };
        }
        match (self.scorer, &self.weights) {
            (Some(ScorerKind::Heuristic), _) => c.scorer = ScorerChoice::Heuristic,
            (_, Some(w)) => c.scorer = ScorerChoice::Cnn { weights: w.clone() },
            (Some(ScorerKind::Cnn), None) => {
                if !matches!(c.scorer, ScorerChoice::Cnn { .. }) {
                    return Err("--scorer cnn needs --weights".into());
                }
            }
            (None, None) => {}
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a PNG overlay with the line boxes per image.
    #[arg(long)]
    pub render: bool,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub image: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct GammaArgs {
    /// Directory of PNG/PGM images.
    #[arg(required_unless_present = "samples", conflicts_with = "samples")]
    pub dir: Option<PathBuf>,
    /// Ground truth for the images; defaults to `gt.txt` inside the directory.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Read `ratio,label` samples instead of images.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Write the collected samples in `ratio,label` form.
    #[arg(long)]
    pub dump_samples: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detections: JSON lines with `image` and `bbox`, or ground-truth CSV.
    pub detections: PathBuf,
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("imser").chain(args.iter().copied()))
    }

    fn pipeline_of(cli: Cli) -> PipelineArgs {
        match cli.command {
            Command::Detect(d) => d.pipeline,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&["detect", "a.png", "--out", "o", "--gamma", "0.3", "--delta", "4", "--polarity", "dark"]).unwrap();
        let c = pipeline_of(cli).resolve().unwrap();
        assert_eq!(c.imser.gamma, 0.3);
        assert_eq!(c.mser.delta, 4);
        assert_eq!(c.polarity, PolarityMode::Dark);
        assert_eq!(c.scorer, ScorerChoice::Heuristic);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"imser": {"gamma": 0.4}, "max_holes": 1}"#).unwrap();
        let cli = parse(&["detect", "a.png", "--out", "o", "--config", path.to_str().unwrap(), "--max-holes", "2"]).unwrap();
        let c = pipeline_of(cli).resolve().unwrap();
        assert_eq!(c.imser.gamma, 0.4);
        assert_eq!(c.imser.min_emit_area, 10);
        assert_eq!(c.max_holes, 2);
    }

    #[test]
    fn weights_select_the_cnn() {
        let cli = parse(&["detect", "a.png", "--out", "o", "--weights", "w.imsr"]).unwrap();
        let c = pipeline_of(cli).resolve().unwrap();
        assert_eq!(c.scorer, ScorerChoice::Cnn { weights: "w.imsr".into() });
        let cli = parse(&["detect", "a.png", "--out", "o", "--scorer", "cnn"]).unwrap();
        assert!(pipeline_of(cli).resolve().is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let cli = parse(&["detect", "a.png", "--out", "o", "--delta", "0"]).unwrap();
        assert!(pipeline_of(cli).resolve().is_err());
        assert!(parse(&["detect", "a.png", "--out", "o", "--polarity", "sideways"]).is_err());
        assert!(parse(&["detect", "--out", "o"]).is_err());
        assert!(parse(&["optimize-gamma"]).is_err());
    }
}
