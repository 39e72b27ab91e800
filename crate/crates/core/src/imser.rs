//! Isolated MSERs.
//!
//! MSERs from one polarity are grouped into containment trees. Each tree is
//! then reduced to pairwise-disjoint regions: a node is folded into its
//! father when their relative size difference is at least `gamma`, otherwise
//! it is kept and its pixels are cut out of every enclosing region.
//! [`optimize_gamma`] picks `gamma` from labelled father/child samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comptree::{build_component_tree, detect_msers, MserParams, Region};
use crate::geom::{Point, Rect};
use crate::imgio::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImserParams {
    /// Merge threshold on `(|father| - |node|) / |node|`.
    pub gamma: f64,
    /// Smallest region that is returned.
    pub min_emit_area: usize,
}

pub const DEFAULT_GAMMA: f64 = 0.15;

impl Default for ImserParams {
    fn default() -> Self {
        ImserParams {
            gamma: DEFAULT_GAMMA,
            min_emit_area: 10,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ImserError {
    #[error("regions {0} and {1} overlap without one containing the other")]
    PartialOverlap(usize, usize),
    #[error("no {0} samples")]
    EmptyClass(SampleLabel),
    #[error("grid step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("sample ratio must be finite and non-negative, got {0}")]
    InvalidRatio(f64),
}

/// A group of nested MSERs. Index 0..len into `nodes`; `father[i]` is the
/// smallest strict superset of node `i` inside the group.
#[derive(Clone, Debug, PartialEq)]
pub struct MserTree {
    nodes: Vec<Region>,
    father: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    top: usize,
}

impl MserTree {
    pub fn nodes(&self) -> &[Region] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn father(&self, i: usize) -> Option<usize> {
        self.father[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// The unique maximal region.
    pub fn top(&self) -> usize {
        self.top
    }

    /// Minimal regions (nodes without children).
    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.children[i].is_empty())
            .collect()
    }

    /// Every strict superset of node `i`, nearest first.
    pub fn up_regions(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.father[i];
        while let Some(f) = cur {
            out.push(f);
            cur = self.father[f];
        }
        out
    }

    /// Builds a tree from regions and explicit father links. Intended for
    /// callers that already know the containment structure.
    pub fn from_links(nodes: Vec<Region>, father: Vec<Option<usize>>) -> Option<MserTree> {
        if nodes.len() != father.len() || nodes.is_empty() {
            return None;
        }
        let tops: Vec<usize> = (0..nodes.len()).filter(|&i| father[i].is_none()).collect();
        let [top] = tops[..] else { return None };
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, f) in father.iter().enumerate() {
            if let Some(f) = *f {
                if f >= nodes.len() || f == i {
                    return None;
                }
                children[f].push(i);
            }
        }
        let tree = MserTree {
            nodes,
            father,
            children,
            top,
        };
        // every node must reach the top without cycles
        for i in 0..tree.len() {
            tree.up_regions_bounded(i)?;
        }
        Some(tree)
    }

    fn up_regions_bounded(&self, i: usize) -> Option<()> {
        let mut cur = self.father[i];
        let mut steps = 0;
        while let Some(f) = cur {
            steps += 1;
            if steps > self.nodes.len() {
                return None;
            }
            cur = self.father[f];
        }
        Some(())
    }
}

/// Groups regions into containment trees.
///
/// Regions must be pairwise nested or disjoint, which holds for the MSERs of
/// a single component tree. Identical duplicates are collapsed. Trees are
/// ordered by the input position of their top region; nodes inside a tree
/// keep input order.
pub fn group_msers(regions: Vec<Region>) -> Result<Vec<MserTree>, ImserError> {
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let width = regions.iter().map(|r| r.bbox().right).max().unwrap() as usize + 1;
    let height = regions.iter().map(|r| r.bbox().bottom).max().unwrap() as usize + 1;

    // Paint from the largest region to the smallest; when a region is painted,
    // its pixels must all carry the same previous owner, which is then its
    // smallest strict superset.
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(regions[i].area()), i));
    let mut owner = vec![usize::MAX; width * height];
    let mut father: Vec<Option<usize>> = vec![None; regions.len()];
    let mut duplicate = vec![false; regions.len()];
    for &i in &order {
        let px = regions[i].pixels();
        let idx = |p: &Point| p.y as usize * width + p.x as usize;
        let first = owner[idx(&px[0])];
        if let Some(other) = px.iter().map(|p| owner[idx(p)]).find(|&o| o != first) {
            let culprit = if first == usize::MAX { other } else { first };
            return Err(ImserError::PartialOverlap(culprit.min(i), culprit.max(i)));
        }
        if first != usize::MAX && regions[first].area() == regions[i].area() {
            duplicate[i] = true;
            continue;
        }
        father[i] = (first != usize::MAX).then_some(first);
        for p in px {
            owner[idx(p)] = i;
        }
    }

    // Attach every region to its top.
    let mut top_of = vec![usize::MAX; regions.len()];
    for &i in order.iter() {
        if duplicate[i] {
            continue;
        }
        top_of[i] = match father[i] {
            Some(f) => top_of[f],
            None => i,
        };
    }
    let mut trees: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut tree_of_top = vec![usize::MAX; regions.len()];
    for i in 0..regions.len() {
        if duplicate[i] || father[i].is_some() {
            continue;
        }
        tree_of_top[i] = trees.len();
        trees.push((i, Vec::new()));
    }
    for i in 0..regions.len() {
        if !duplicate[i] {
            trees[tree_of_top[top_of[i]]].1.push(i);
        }
    }

    let mut slots: Vec<Option<Region>> = regions.into_iter().map(Some).collect();
    let mut local = vec![usize::MAX; slots.len()];
    Ok(trees
        .into_iter()
        .map(|(top, members)| {
            for (k, &g) in members.iter().enumerate() {
                local[g] = k;
            }
            let nodes: Vec<Region> = members.iter().map(|&g| slots[g].take().unwrap()).collect();
            let fathers: Vec<Option<usize>> = members.iter().map(|&g| father[g].map(|f| local[f])).collect();
            let mut children = vec![Vec::new(); members.len()];
            for (k, f) in fathers.iter().enumerate() {
                if let Some(f) = *f {
                    children[f].push(k);
                }
            }
            MserTree {
                nodes,
                father: fathers,
                children,
                top: local[top],
            }
        })
        .collect())
}

/// Working pixel set of one tree node during extraction.
struct Remnant {
    pixels: Vec<Point>,
    gray_sum: u64,
}

/// Removes every element of sorted `cut` from sorted `from`.
fn subtract_sorted(from: &mut Vec<Point>, cut: &[Point]) {
    let mut j = 0;
    from.retain(|p| {
        while j < cut.len() && cut[j] < *p {
            j += 1;
        }
        !(j < cut.len() && cut[j] == *p)
    });
}

/// Reduces one MSER tree to pairwise-disjoint regions.
///
/// Nodes are visited in post-order; siblings go smallest current area first,
/// ties broken by the top-left corner of their bounding box. For node `R`
/// with father `F`, the ratio `(|F| - |R|) / |R|` uses current areas. At or
/// above `gamma`, `R` is folded into `F`. Below, `R` becomes an isolated
/// region and its pixels are removed from all its up regions; it is returned
/// if it still has `min_emit_area` pixels. The top's remnant is returned last
/// under the same area rule.
pub fn extract_imsers(tree: &MserTree, params: &ImserParams) -> Vec<Region> {
    let mut work: Vec<Remnant> = tree
        .nodes
        .iter()
        .map(|r| Remnant {
            pixels: r.pixels().to_vec(),
            gray_sum: r.gray_sum(),
        })
        .collect();
    let mut out = Vec::new();
    let mut stack: Vec<(usize, bool)> = vec![(tree.top, false)];
    while let Some((node, expanded)) = stack.pop() {
        if !expanded {
            stack.push((node, true));
            let mut kids = tree.children[node].clone();
            kids.sort_by_key(|&k| {
                let b = tree.nodes[k].bbox();
                (work[k].pixels.len(), b.top, b.left, k)
            });
            // reversed so the first kid is processed first
            stack.extend(kids.into_iter().rev().map(|k| (k, false)));
            continue;
        }
        let Some(father) = tree.father[node] else {
            continue;
        };
        let area = work[node].pixels.len();
        if area == 0 {
            continue;
        }
        let ratio = (work[father].pixels.len() - area) as f64 / area as f64;
        if ratio >= params.gamma {
            continue;
        }
        let cut = std::mem::take(&mut work[node].pixels);
        let cut_sum = work[node].gray_sum;
        for up in tree.up_regions(node) {
            subtract_sorted(&mut work[up].pixels, &cut);
            work[up].gray_sum -= cut_sum;
        }
        if area >= params.min_emit_area {
            out.push(emit(tree, node, cut, cut_sum));
        }
    }
    let top = tree.top;
    if work[top].pixels.len() >= params.min_emit_area.max(1) {
        let pixels = std::mem::take(&mut work[top].pixels);
        out.push(emit(tree, top, pixels, work[top].gray_sum));
    }
    out
}

fn emit(tree: &MserTree, node: usize, pixels: Vec<Point>, gray_sum: u64) -> Region {
    Region::from_parts(pixels, gray_sum, tree.nodes[node].level()).expect("emitted regions are non-empty")
}

/// Runs [`extract_imsers`] over every tree and concatenates the results.
pub fn isolate_regions(trees: &[MserTree], params: &ImserParams) -> Vec<Region> {
    trees.iter().flat_map(|t| extract_imsers(t, params)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleLabel {
    Text,
    Background,
}

impl std::fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SampleLabel::Text => "text",
            SampleLabel::Background => "background",
        })
    }
}

impl std::str::FromStr for SampleLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(SampleLabel::Text),
            "background" => Ok(SampleLabel::Background),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// One father/child difference ratio with its class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub ratio: f64,
    pub label: SampleLabel,
}

// Slack when comparing rational ratios with decimal grid points.
const GRID_EPS: f64 = 1e-9;

/// Grid points `0, step, 2 step, ...` up to the first one covering the largest
/// ratio.
pub fn gamma_grid(max_ratio: f64, step: f64) -> impl Iterator<Item = f64> {
    let last = ((max_ratio / step) - GRID_EPS).ceil().max(0.0) as u64;
    (0..=last).map(move |k| k as f64 * step)
}

/// Picks the grid value of `gamma` maximizing `P_text(gamma) -
/// P_background(gamma)`, where `P_c(gamma)` is the fraction of class-`c`
/// samples with ratio at most `gamma`. Ties go to the smallest `gamma`.
pub fn optimize_gamma(samples: &[LabeledSample], grid_step: f64) -> Result<f64, ImserError> {
    if !grid_step.is_finite() || grid_step <= 0.0 {
        return Err(ImserError::NonPositiveStep(grid_step));
    }
    let mut text = Vec::new();
    let mut background = Vec::new();
    for s in samples {
        if !s.ratio.is_finite() || s.ratio < 0.0 {
            return Err(ImserError::InvalidRatio(s.ratio));
        }
        match s.label {
            SampleLabel::Text => text.push(s.ratio),
            SampleLabel::Background => background.push(s.ratio),
        }
    }
    if text.is_empty() {
        return Err(ImserError::EmptyClass(SampleLabel::Text));
    }
    if background.is_empty() {
        return Err(ImserError::EmptyClass(SampleLabel::Background));
    }
    text.sort_by(f64::total_cmp);
    background.sort_by(f64::total_cmp);
    let max_ratio = text.last().unwrap().max(*background.last().unwrap());

    // P_t - P_b compared exactly as counts scaled by the other class size.
    let (nt, nb) = (text.len() as i128, background.len() as i128);
    let below = |sorted: &[f64], g: f64| sorted.partition_point(|&r| r <= g + GRID_EPS) as i128;
    let mut best = (i128::MIN, 0.0);
    for g in gamma_grid(max_ratio, grid_step) {
        let score = below(&text, g) * nb - below(&background, g) * nt;
        if score > best.0 {
            best = (score, g);
        }
    }
    Ok(best.1)
}

/// Labels every father/child MSER pair of `img`.
///
/// A pair counts as text when the child's bounding box has IoU at least 0.5
/// with a ground-truth box, or at least 80% of the child's pixels fall inside
/// one.
pub fn collect_ratio_samples(img: &GrayImage, gt_boxes: &[Rect], mser_params: &MserParams) -> Vec<LabeledSample> {
    let tree = build_component_tree(img);
    let msers = detect_msers(&tree, mser_params);
    let trees = group_msers(msers).expect("MSERs of one tree are nested or disjoint");
    let mut out = Vec::new();
    for t in &trees {
        for (i, child) in t.nodes().iter().enumerate() {
            let Some(f) = t.father(i) else { continue };
            let father_area = t.nodes()[f].area();
            let ratio = (father_area - child.area()) as f64 / child.area() as f64;
            let is_text = gt_boxes.iter().any(|gt| {
                child.bbox().iou(gt) >= 0.5
                    || child.pixels().iter().filter(|p| gt.contains(**p)).count() as f64
                        >= 0.8 * child.area() as f64
            });
            out.push(LabeledSample {
                ratio,
                label: if is_text {
                    SampleLabel::Text
                } else {
                    SampleLabel::Background
                },
            });
        }
    }
    out
}
