//! Hole-count filtering and vertical fragment merging of isolated regions.

use serde::{Deserialize, Serialize};

use crate::comptree::Region;

/// Which side of the intensity scale a region was extracted from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Dark text on a light background: regions of the original image.
    Dark,
    /// Light text on a dark background: regions of the inverted image.
    Light,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Dark => "dark",
            Polarity::Light => "light",
        }
    }
}

/// A region plus the features the filters look at.
///
/// The region's pixel statistics refer to the image it was extracted from
/// (inverted for [`Polarity::Light`]); [`mean_gray`](Self::mean_gray) maps
/// back to source intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRegion {
    region: Region,
    holes: usize,
    polarity: Polarity,
}

impl CandidateRegion {
    pub fn new(region: Region, polarity: Polarity) -> Self {
        let holes = count_holes(&region);
        CandidateRegion {
            region,
            holes,
            polarity,
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn holes(&self) -> usize {
        self.holes
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// Mean intensity in the source (non-inverted) image.
    pub fn mean_gray(&self) -> f64 {
        match self.polarity {
            Polarity::Dark => self.region.mean_gray(),
            Polarity::Light => 255.0 - self.region.mean_gray(),
        }
    }
}

/// Counts enclosed cavities: 8-connected components of the complement inside
/// the bounding box padded by one pixel, excluding the one touching the pad.
pub fn count_holes(region: &Region) -> usize {
    let bbox = region.bbox();
    let (w, h) = (bbox.width() as usize + 2, bbox.height() as usize + 2);
    // 0 = background, 1 = region, 2 = visited background
    let mut grid = vec![0u8; w * h];
    for p in region.pixels() {
        let x = (p.x - bbox.left) as usize + 1;
        let y = (p.y - bbox.top) as usize + 1;
        grid[y * w + x] = 1;
    }
    let mut stack = Vec::new();
    let mut fill = |grid: &mut [u8], start: usize| {
        grid[start] = 2;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if grid[j] == 0 {
                        grid[j] = 2;
                        stack.push(j);
                    }
                }
            }
        }
    };
    // The padding ring is one component; flood it first.
    fill(&mut grid, 0);
    let mut holes = 0;
    for i in 0..grid.len() {
        if grid[i] == 0 {
            holes += 1;
            fill(&mut grid, i);
        }
    }
    holes
}

/// Keeps regions with at most `max_holes` holes, in order.
pub fn filter_candidates(regions: Vec<CandidateRegion>, max_holes: usize) -> Vec<CandidateRegion> {
    regions.into_iter().filter(|c| c.holes <= max_holes).collect()
}

/// Thresholds of the fragment-merging relation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeParams {
    /// Shared columns relative to the narrower box.
    pub min_horizontal_overlap: f64,
    /// Empty rows between the boxes relative to the taller box.
    pub max_vertical_gap: f64,
    /// Widths may differ by at most this factor.
    pub max_width_ratio: f64,
    /// Areas may differ by at most this factor.
    pub max_area_ratio: f64,
    pub max_gray_diff: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            min_horizontal_overlap: 0.5,
            max_vertical_gap: 0.2,
            max_width_ratio: 2.0,
            max_area_ratio: 4.0,
            max_gray_diff: 25.0,
        }
    }
}

fn within_ratio(a: f64, b: f64, max: f64) -> bool {
    let r = a / b;
    r <= max && r >= 1.0 / max
}

/// Whether two fragments look like vertically stacked parts of one glyph.
pub fn mergeable(a: &CandidateRegion, b: &CandidateRegion, params: &MergeParams) -> bool {
    if a.polarity != b.polarity {
        return false;
    }
    let (ba, bb) = (a.region.bbox(), b.region.bbox());
    let (wa, wb) = (ba.width() as f64, bb.width() as f64);
    let (ha, hb) = (ba.height() as f64, bb.height() as f64);
    ba.horizontal_overlap(&bb) as f64 >= params.min_horizontal_overlap * wa.min(wb)
        && ba.vertical_gap(&bb) as f64 <= params.max_vertical_gap * ha.max(hb)
        && within_ratio(wa, wb, params.max_width_ratio)
        && within_ratio(a.region.area() as f64, b.region.area() as f64, params.max_area_ratio)
        && (a.mean_gray() - b.mean_gray()).abs() <= params.max_gray_diff
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn merge_pass(regions: Vec<CandidateRegion>, params: &MergeParams) -> (Vec<CandidateRegion>, bool) {
    let n = regions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut merged_any = false;
    for i in 0..n {
        for j in i + 1..n {
            if mergeable(&regions[i], &regions[j], params) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                    merged_any = true;
                }
            }
        }
    }
    if !merged_any {
        return (regions, false);
    }
    // Each group is emitted at the position of its first member.
    let mut groups: Vec<Option<Region>> = vec![None; n];
    let mut polarity = vec![Polarity::Dark; n];
    for (i, c) in regions.into_iter().enumerate() {
        let root = find(&mut parent, i);
        polarity[root] = c.polarity;
        groups[root] = Some(match groups[root].take() {
            None => c.region,
            Some(acc) => acc.union(&c.region),
        });
    }
    let out = groups
        .into_iter()
        .enumerate()
        .filter_map(|(i, g)| g.map(|r| CandidateRegion::new(r, polarity[i])))
        .collect();
    (out, true)
}

/// Merges vertically split fragments.
///
/// Each pass unions the transitive closure of [`mergeable`]; passes repeat
/// until nothing changes, so the result is a fixpoint.
pub fn merge_fragments(regions: Vec<CandidateRegion>, params: &MergeParams) -> Vec<CandidateRegion> {
    let mut cur = regions;
    loop {
        let (next, changed) = merge_pass(cur, params);
        if !changed {
            return next;
        }
        cur = next;
    }
}
