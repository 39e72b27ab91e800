//! Ground truth loading and precision / recall / F scoring.
//!
//! Matching is one-to-one and greedy on IoU. This is a self-contained
//! substitute for the competition evaluators, so absolute numbers are not
//! comparable with published tables.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::geom::Rect;

/// Boxes keyed by image identifier.
pub type BoxesByImage = BTreeMap<String, Vec<Rect>>;

#[derive(Debug, Error)]
pub enum GtError {
    #[error("cannot read ground truth: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: inverted rectangle")]
    Inverted { line: usize },
}

/// Loads a ground-truth file. See [`parse_ground_truth`].
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<BoxesByImage, GtError> {
    parse_ground_truth(&fs::read_to_string(path)?)
}

/// Parses `image-id,left,top,right,bottom` lines with inclusive pixel
/// coordinates. Blank lines and lines starting with `#` are skipped.
pub fn parse_ground_truth(text: &str) -> Result<BoxesByImage, GtError> {
    let mut out = BoxesByImage::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (id, rect) = parse_box_line(s, line)?;
        out.entry(id).or_default().push(rect);
    }
    Ok(out)
}

pub(crate) fn parse_box_line(s: &str, line: usize) -> Result<(String, Rect), GtError> {
    let fields: Vec<&str> = s.split(',').map(str::trim).collect();
    let [id, coords @ ..] = &fields[..] else {
        unreachable!("split yields at least one field")
    };
    if coords.len() != 4 || id.is_empty() {
        return Err(GtError::Malformed {
            line,
            reason: format!("expected 5 comma-separated fields, got {}", fields.len()),
        });
    }
    let mut v = [0u32; 4];
    for (slot, f) in v.iter_mut().zip(coords) {
        *slot = f.parse().map_err(|_| GtError::Malformed {
            line,
            reason: format!("bad coordinate {f:?}"),
        })?;
    }
    let rect = Rect::new(v[0], v[1], v[2], v[3]).ok_or(GtError::Inverted { line })?;
    Ok((id.to_string(), rect))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Metrics {
    /// Harmonic mean of precision and recall, 0 when both are 0.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            f,
        }
    }

    /// `0/0` counts as 1 for both precision and recall.
    pub fn from_counts(matches: usize, detections: usize, truths: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
        Metrics::from_pr(ratio(matches, detections), ratio(matches, truths))
    }
}

impl std::fmt::Display for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p={:.2} r={:.2} f={:.2}", self.precision, self.recall, self.f)
    }
}

/// Greedy one-to-one matching of one image; returns matched
/// `(detection, truth)` index pairs.
///
/// Candidate pairs are taken by descending IoU. Ties are broken by the
/// rectangles themselves, so the number of matches does not depend on input
/// order.
pub fn match_boxes(detections: &[Rect], truth: &[Rect], iou_threshold: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (d, dr) in detections.iter().enumerate() {
        for (t, tr) in truth.iter().enumerate() {
            let iou = dr.iou(tr);
            if iou > 0.0 && iou >= iou_threshold {
                pairs.push((iou, d, t));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| detections[a.1].cmp(&detections[b.1]))
            .then_with(|| truth[a.2].cmp(&truth[b.2]))
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });
    let mut det_used = vec![false; detections.len()];
    let mut gt_used = vec![false; truth.len()];
    let mut out = Vec::new();
    for (_, d, t) in pairs {
        if !det_used[d] && !gt_used[t] {
            det_used[d] = true;
            gt_used[t] = true;
            out.push((d, t));
        }
    }
    out
}

/// Matches every image and pools the counts.
pub fn match_and_score(detections: &BoxesByImage, truth: &BoxesByImage, iou_threshold: f64) -> Metrics {
    let empty = Vec::new();
    let mut matches = 0;
    let mut n_det = 0;
    let mut n_gt = 0;
    let ids: std::collections::BTreeSet<&String> = detections.keys().chain(truth.keys()).collect();
    for id in ids {
        let d = detections.get(id).unwrap_or(&empty);
        let t = truth.get(id).unwrap_or(&empty);
        n_det += d.len();
        n_gt += t.len();
        matches += match_boxes(d, t, iou_threshold).len();
    }
    Metrics::from_counts(matches, n_det, n_gt)
}
