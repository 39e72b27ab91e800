//! Line-delimited JSON records written and read by the commands.

use imser_core::{CandidateRegion, Point, Polarity, Rect, TextLine};
use serde::{Deserialize, Serialize};

/// A horizontal run of pixels: `[y, x, len]`.
pub type Run = [u32; 3];

/// Run-length encodes pixels sorted row-major.
pub fn encode_rows(pixels: &[Point]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for p in pixels {
        match runs.last_mut() {
            Some([y, x, len]) if *y == p.y && *x + *len == p.x => *len += 1,
            _ => runs.push([p.y, p.x, 1]),
        }
    }
    runs
}

pub fn decode_rows(runs: &[Run]) -> Vec<Point> {
    runs.iter()
        .flat_map(|&[y, x, len]| (x..x + len).map(move |x| Point::new(x, y)))
        .collect()
}

/// One isolated region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub id: usize,
    pub polarity: Polarity,
    pub bbox: Rect,
    pub area: usize,
    /// Mean intensity in the input image.
    pub mean_gray: f64,
    pub holes: usize,
    pub rows: Vec<Run>,
}

impl RegionRecord {
    pub fn new(id: usize, c: &CandidateRegion) -> Self {
        let r = c.region();
        RegionRecord {
            id,
            polarity: c.polarity(),
            bbox: r.bbox(),
            area: r.area(),
            mean_gray: c.mean_gray(),
            holes: c.holes(),
            rows: encode_rows(r.pixels()),
        }
    }
}

/// One detected text line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub image: String,
    pub line: usize,
    pub bbox: Rect,
    pub polarity: Polarity,
    pub confidence: f64,
    /// Member bounding boxes, left to right.
    pub members: Vec<Rect>,
}

impl LineRecord {
    pub fn new(image: &str, line: usize, l: &TextLine) -> Self {
        LineRecord {
            image: image.to_string(),
            line,
            bbox: l.bbox(),
            polarity: l.members()[0].candidate.polarity(),
            confidence: l.mean_confidence(),
            members: l.members().iter().map(|m| m.candidate.region().bbox()).collect(),
        }
    }
}

/// The part of a detection record that evaluation needs.
#[derive(Debug, Deserialize)]
pub struct BoxRecord {
    pub image: String,
    pub bbox: Rect,
}
