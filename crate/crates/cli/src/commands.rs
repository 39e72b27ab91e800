//! The four subcommands as library functions.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use imser_core::eval::{load_ground_truth, parse_ground_truth};
use imser_core::imser::collect_ratio_samples;
use imser_core::{load_gray, match_and_score, optimize_gamma, BoxesByImage, Detector, GrayImage, LabeledSample, Metrics, PipelineConfig, Rect, TextLine};
use rayon::prelude::*;

use crate::records::{BoxRecord, LineRecord, RegionRecord};

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const CONFIG_FILE: &str = "config.json";

/// Image identifier used in line records and ground truth: the file name.
pub fn image_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

#[derive(Clone, Debug)]
pub struct DetectOptions {
    pub out_dir: PathBuf,
    pub render: bool,
    /// 0 lets the pool pick one thread per core.
    pub jobs: usize,
}

#[derive(Debug, Default)]
pub struct DetectReport {
    pub lines: usize,
    pub failures: Vec<(PathBuf, String)>,
}

fn write_jsonl<T: serde::Serialize>(w: &mut impl Write, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Runs the detector over `images` and writes into `opts.out_dir`:
/// `<stem>.lines.jsonl` per image, `detections.jsonl` with every line,
/// `config.json` with the effective configuration and, with `render`,
/// `<stem>.overlay.png`.
///
/// Images are processed in parallel; files are written afterwards in input
/// order. A failing image is reported and skipped.
pub fn cmd_detect(images: &[PathBuf], config: &PipelineConfig, opts: &DetectOptions) -> Result<DetectReport> {
    let detector = Detector::new(config.clone())?;
    fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    let mut sidecar = serde_json::to_string_pretty(config)?;
    sidecar.push('\n');
    fs::write(opts.out_dir.join(CONFIG_FILE), sidecar)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build()?;
    let results: Vec<Result<(GrayImage, Vec<TextLine>)>> = pool.install(|| {
        images
            .par_iter()
            .map(|path| {
                let img = load_gray(path)?;
                let lines = detector.detect(&img)?;
                Ok((img, lines))
            })
            .collect()
    });

    let mut report = DetectReport::default();
    let mut all = BufWriter::new(File::create(opts.out_dir.join(DETECTIONS_FILE))?);
    for (path, result) in images.iter().zip(results) {
        let (img, lines) = match result {
            Ok(v) => v,
            Err(e) => {
                report.failures.push((path.clone(), format!("{e:#}")));
                continue;
            }
        };
        let id = image_id(path);
        let records: Vec<LineRecord> = lines.iter().enumerate().map(|(i, l)| LineRecord::new(&id, i, l)).collect();
        let mut per_image = BufWriter::new(File::create(opts.out_dir.join(format!("{}.lines.jsonl", stem(path))))?);
        write_jsonl(&mut per_image, &records)?;
        per_image.flush()?;
        write_jsonl(&mut all, &records)?;
        if opts.render {
            render_overlay(&img, &lines)
                .save(opts.out_dir.join(format!("{}.overlay.png", stem(path))))
                .with_context(|| format!("rendering {}", path.display()))?;
        }
        report.lines += records.len();
    }
    all.flush()?;
    Ok(report)
}

/// The image in gray with each line box outlined in red.
pub fn render_overlay(img: &GrayImage, lines: &[TextLine]) -> RgbImage {
    let mut out = RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let g = img.get(x as usize, y as usize);
        Rgb([g, g, g])
    });
    let red = Rgb([255, 0, 0]);
    for l in lines {
        let Rect { left, top, right, bottom } = l.bbox();
        for x in left..=right {
            out.put_pixel(x, top, red);
            out.put_pixel(x, bottom, red);
        }
        for y in top..=bottom {
            out.put_pixel(left, y, red);
            out.put_pixel(right, y, red);
        }
    }
    out
}

/// Writes one [`RegionRecord`] per isolated region, before hole filtering.
pub fn cmd_extract_regions(image: &Path, config: &PipelineConfig, out: &mut impl Write) -> Result<usize> {
    let img = load_gray(image).with_context(|| format!("loading {}", image.display()))?;
    let regions = Detector::new(config.clone())?.isolated_regions(&img)?;
    let records: Vec<RegionRecord> = regions.iter().enumerate().map(|(i, c)| RegionRecord::new(i, c)).collect();
    write_jsonl(out, &records)?;
    Ok(records.len())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
}

/// Father/child ratio samples of every PNG/PGM image in `dir`, labelled with
/// the boxes of `gt` keyed by file name. Images are taken in name order.
pub fn collect_corpus_samples(dir: &Path, gt: &Path, config: &PipelineConfig) -> Result<Vec<LabeledSample>> {
    let truth = load_ground_truth(gt).with_context(|| format!("reading {}", gt.display()))?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()?;
    paths.retain(|p| is_image(p));
    paths.sort();
    let per_image: Vec<Result<Vec<LabeledSample>>> = paths
        .par_iter()
        .map(|p| {
            let img = load_gray(p).with_context(|| format!("loading {}", p.display()))?;
            let boxes = truth.get(&image_id(p)).map(Vec::as_slice).unwrap_or(&[]);
            Ok(collect_ratio_samples(&img, boxes, &config.mser))
        })
        .collect();
    let mut out = Vec::new();
    for s in per_image {
        out.extend(s?);
    }
    Ok(out)
}

/// Parses `ratio,label` lines; `#` starts a comment line.
pub fn parse_samples(text: &str) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let Some((ratio, label)) = s.split_once(',') else {
            bail!("line {}: expected ratio,label", i + 1);
        };
        out.push(LabeledSample {
            ratio: ratio.trim().parse().with_context(|| format!("line {}: bad ratio", i + 1))?,
            label: label.trim().parse().map_err(|e: String| anyhow::anyhow!("line {}: {e}", i + 1))?,
        });
    }
    Ok(out)
}

pub fn format_samples(samples: &[LabeledSample]) -> String {
    samples.iter().map(|s| format!("{},{}\n", s.ratio, s.label)).collect()
}

pub fn cmd_optimize_gamma(samples: &[LabeledSample], grid_step: f64) -> Result<f64> {
    Ok(optimize_gamma(samples, grid_step)?)
}

/// Reads detections as JSON lines (any record with `image` and `bbox`) or,
/// when the first entry is not an object, as ground-truth CSV.
pub fn load_detections(path: &Path) -> Result<BoxesByImage> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
    if !first.is_some_and(|l| l.starts_with('{')) {
        return Ok(parse_ground_truth(&text)?);
    }
    let mut out = BoxesByImage::new();
    for (i, raw) in text.lines().enumerate() {
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        let r: BoxRecord = serde_json::from_str(s).with_context(|| format!("line {}", i + 1))?;
        let b = r.bbox;
        let rect = Rect::new(b.left, b.top, b.right, b.bottom).with_context(|| format!("line {}: inverted rectangle", i + 1))?;
        out.entry(r.image).or_default().push(rect);
    }
    Ok(out)
}

pub fn cmd_evaluate(detections: &Path, gt: &Path, iou: f64) -> Result<Metrics> {
    if !(0.0..=1.0).contains(&iou) {
        bail!("--iou must lie in [0, 1]");
    }
    let det = load_detections(detections)?;
    let truth = load_ground_truth(gt).with_context(|| format!("reading {}", gt.display()))?;
    Ok(match_and_score(&det, &truth, iou))
}
