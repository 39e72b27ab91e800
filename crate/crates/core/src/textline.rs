//! Grouping of confident regions into horizontal text lines.

use serde::{Deserialize, Serialize};

use crate::geom::Rect;
use crate::scorer::ScoredRegion;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineParams {
    pub conf_threshold: f64,
    /// Heights may differ by at most this factor.
    pub max_height_ratio: f64,
    /// Vertical center offset relative to the taller region.
    pub max_center_offset: f64,
    /// Horizontal gap relative to the wider region.
    pub max_gap: f64,
    pub max_gray_diff: f64,
}

impl Default for LineParams {
    fn default() -> Self {
        LineParams {
            conf_threshold: 0.5,
            max_height_ratio: 2.0,
            max_center_offset: 0.5,
            max_gap: 2.0,
            max_gray_diff: 30.0,
        }
    }
}

/// At least two linked regions, ordered left to right.
#[derive(Clone, Debug, PartialEq)]
pub struct TextLine {
    members: Vec<ScoredRegion>,
    bbox: Rect,
}

impl TextLine {
    pub fn members(&self) -> &[ScoredRegion] {
        &self.members
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn mean_confidence(&self) -> f64 {
        self.members.iter().map(|m| m.confidence.value()).sum::<f64>() / self.members.len() as f64
    }
}

/// Tight bound of the member pixels; `None` for an empty slice.
pub fn line_bbox(members: &[ScoredRegion]) -> Option<Rect> {
    Rect::bounding(members.iter().flat_map(|m| m.candidate.region().pixels()))
}

/// Whether two regions could be neighbours on one line.
pub fn linked(a: &ScoredRegion, b: &ScoredRegion, params: &LineParams) -> bool {
    let (ca, cb) = (&a.candidate, &b.candidate);
    if ca.polarity() != cb.polarity() {
        return false;
    }
    let (ba, bb) = (ca.region().bbox(), cb.region().bbox());
    let (ha, hb) = (ba.height() as f64, bb.height() as f64);
    let ratio = ha / hb;
    let max_h = ha.max(hb);
    let max_w = (ba.width() as f64).max(bb.width() as f64);
    ratio <= params.max_height_ratio
        && ratio >= 1.0 / params.max_height_ratio
        && (ba.center_y() - bb.center_y()).abs() <= params.max_center_offset * max_h
        && ba.horizontal_gap(&bb) as f64 <= params.max_gap * max_w
        && (ca.mean_gray() - cb.mean_gray()).abs() <= params.max_gray_diff
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Forms text lines from regions whose confidence reaches the threshold.
///
/// Lines are connected components of the [`linked`] relation with at least
/// two members. Lines are returned in order of their first member's input
/// position.
pub fn form_lines(scored: Vec<ScoredRegion>, params: &LineParams) -> Vec<TextLine> {
    let confident: Vec<ScoredRegion> = scored
        .into_iter()
        .filter(|s| s.confidence.value() >= params.conf_threshold)
        .collect();
    let n = confident.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if linked(&confident[i], &confident[j], params) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<ScoredRegion>> = vec![Vec::new(); n];
    for (i, s) in confident.into_iter().enumerate() {
        let root = find(&mut parent, i);
        groups[root].push(s);
    }
    groups
        .into_iter()
        .filter(|g| g.len() >= 2)
        .map(|mut members| {
            members.sort_by_key(|m| {
                let b = m.candidate.region().bbox();
                (b.left, b.top)
            });
            let bbox = line_bbox(&members).expect("lines have members");
            TextLine { members, bbox }
        })
        .collect()
}
