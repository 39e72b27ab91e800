//! Component tree of extremal regions and classic MSER selection.
//!
//! The tree is built by visiting pixels in ascending gray level and joining
//! each one to its already-visited 4-neighbours with a union-find. Every
//! (component, level) pair where a component grows becomes one [`ErNode`],
//! so dark regions end up at the leaves and the whole image at the root.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, Rect};
use crate::imgio::GrayImage;

/// Index of a node inside its [`ComponentTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("node {0} does not belong to this tree ({1} nodes)")]
    StaleNode(usize, usize),
}

/// One extremal region: the component at `level` that first appeared (or
/// last grew) when `seed` was added.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErNode {
    pub level: u8,
    pub area: u32,
    pub parent: Option<NodeId>,
    pub seed: Point,
    pub children: Vec<NodeId>,
}

/// Nested extremal regions of one image.
///
/// Nodes are stored in creation order, which is ascending gray level, so every
/// child precedes its parent and the root is the last node.
#[derive(Clone, Debug)]
pub struct ComponentTree {
    image: GrayImage,
    nodes: Vec<ErNode>,
    pixel_node: Vec<NodeId>,
    // Pixels owned directly by each node, CSR layout indexed by node.
    own_offsets: Vec<u32>,
    own_pixels: Vec<u32>,
}

const INACTIVE: u32 = u32::MAX;

struct DisjointSets {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: vec![INACTIVE; n],
            rank: vec![0; n],
        }
    }

    fn activate(&mut self, i: u32) {
        self.parent[i as usize] = i;
    }

    fn is_active(&self, i: u32) -> bool {
        self.parent[i as usize] != INACTIVE
    }

    fn find(&mut self, mut i: u32) -> u32 {
        let mut root = i;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[i as usize] != root {
            let next = self.parent[i as usize];
            self.parent[i as usize] = root;
            i = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (a as usize, b as usize);
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => {
                self.parent[ra] = b;
                b
            }
            std::cmp::Ordering::Greater => {
                self.parent[rb] = a;
                a
            }
            std::cmp::Ordering::Equal => {
                self.parent[rb] = a;
                self.rank[ra] += 1;
                a
            }
        }
    }
}

struct Building {
    level: u8,
    area: u32,
    parent: Option<u32>,
    seed: u32,
    children: Vec<u32>,
    alias: Option<u32>,
}

fn resolve(nodes: &mut [Building], mut n: u32) -> u32 {
    let start = n;
    while let Some(a) = nodes[n as usize].alias {
        n = a;
    }
    let mut cur = start;
    while let Some(a) = nodes[cur as usize].alias {
        nodes[cur as usize].alias = Some(n);
        cur = a;
    }
    n
}

/// Builds the component tree of `img` under 4-connectivity.
pub fn build_component_tree(img: &GrayImage) -> ComponentTree {
    let (w, h) = (img.width(), img.height());
    let n = img.len();
    let levels = img.data();

    // Counting sort by level; ties stay in raster order.
    let mut starts = [0usize; 257];
    for &l in levels {
        starts[l as usize + 1] += 1;
    }
    for i in 1..257 {
        starts[i] += starts[i - 1];
    }
    let mut order = vec![0u32; n];
    let mut fill = starts;
    for (i, &l) in levels.iter().enumerate() {
        order[fill[l as usize]] = i as u32;
        fill[l as usize] += 1;
    }

    let mut sets = DisjointSets::new(n);
    let mut comp_node = vec![0u32; n];
    let mut pixel_node = vec![0u32; n];
    let mut nodes: Vec<Building> = Vec::new();

    for &p in &order {
        let level = levels[p as usize];
        sets.activate(p);
        let created = nodes.len() as u32;
        nodes.push(Building {
            level,
            area: 1,
            parent: None,
            seed: p,
            children: Vec::new(),
            alias: None,
        });
        comp_node[p as usize] = created;
        pixel_node[p as usize] = created;

        let (x, y) = (p as usize % w, p as usize / w);
        let neighbours = [
            (y > 0).then(|| p - w as u32),
            (x > 0).then(|| p - 1),
            (x + 1 < w).then(|| p + 1),
            (y + 1 < h).then(|| p + w as u32),
        ];
        for q in neighbours.into_iter().flatten() {
            if !sets.is_active(q) {
                continue;
            }
            let rp = sets.find(p);
            let rq = sets.find(q);
            if rp == rq {
                continue;
            }
            let np = comp_node[rp as usize];
            let nq = comp_node[rq as usize];
            let keep = if nodes[nq as usize].level == level {
                // Two components at the current level become one node; the
                // older node survives so its seed stays the first pixel.
                let (keep, drop) = (np.min(nq), np.max(nq));
                let mut moved = std::mem::take(&mut nodes[drop as usize].children);
                let area = nodes[drop as usize].area;
                nodes[drop as usize].alias = Some(keep);
                let kept = &mut nodes[keep as usize];
                kept.area += area;
                if moved.len() > kept.children.len() {
                    std::mem::swap(&mut moved, &mut kept.children);
                }
                kept.children.extend(moved);
                keep
            } else {
                nodes[nq as usize].parent = Some(np);
                let area = nodes[nq as usize].area;
                let kept = &mut nodes[np as usize];
                kept.area += area;
                kept.children.push(nq);
                np
            };
            let root = sets.union(rp, rq);
            comp_node[root as usize] = keep;
        }
    }

    // Compact away aliased nodes, preserving creation order.
    let mut new_id = vec![u32::MAX; nodes.len()];
    let mut live = 0u32;
    for (i, b) in nodes.iter().enumerate() {
        if b.alias.is_none() {
            new_id[i] = live;
            live += 1;
        }
    }
    let mut out = Vec::with_capacity(live as usize);
    for i in 0..nodes.len() {
        if nodes[i].alias.is_some() {
            continue;
        }
        let parent = nodes[i].parent.map(|p| {
            let p = resolve(&mut nodes, p);
            NodeId(new_id[p as usize])
        });
        let b = &nodes[i];
        let mut children: Vec<NodeId> = b.children.iter().map(|&c| NodeId(new_id[c as usize])).collect();
        children.sort_unstable();
        out.push(ErNode {
            level: b.level,
            area: b.area,
            parent,
            seed: Point::new(b.seed % w as u32, b.seed / w as u32),
            children,
        });
    }
    let pixel_node: Vec<NodeId> = pixel_node
        .into_iter()
        .map(|pn| NodeId(new_id[resolve(&mut nodes, pn) as usize]))
        .collect();

    let mut own_offsets = vec![0u32; out.len() + 1];
    for id in &pixel_node {
        own_offsets[id.index() + 1] += 1;
    }
    for i in 1..own_offsets.len() {
        own_offsets[i] += own_offsets[i - 1];
    }
    let mut cursor = own_offsets.clone();
    let mut own_pixels = vec![0u32; n];
    for (p, id) in pixel_node.iter().enumerate() {
        own_pixels[cursor[id.index()] as usize] = p as u32;
        cursor[id.index()] += 1;
    }

    ComponentTree {
        image: img.clone(),
        nodes: out,
        pixel_node,
        own_offsets,
        own_pixels,
    }
}

impl ComponentTree {
    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn nodes(&self) -> &[ErNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&ErNode, TreeError> {
        self.nodes
            .get(id.index())
            .ok_or(TreeError::StaleNode(id.index(), self.nodes.len()))
    }

    pub fn root(&self) -> NodeId {
        NodeId(self.nodes.len() as u32 - 1)
    }

    /// Looks up a node id by raw index.
    pub fn node_id(&self, index: usize) -> Result<NodeId, TreeError> {
        if index < self.nodes.len() {
            Ok(NodeId(index as u32))
        } else {
            Err(TreeError::StaleNode(index, self.nodes.len()))
        }
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// The lowest node containing pixel `(x, y)`.
    pub fn node_of_pixel(&self, x: usize, y: usize) -> NodeId {
        self.pixel_node[y * self.image.width() + x]
    }

    fn own_pixels(&self, id: NodeId) -> &[u32] {
        let i = id.index();
        &self.own_pixels[self.own_offsets[i] as usize..self.own_offsets[i + 1] as usize]
    }

    /// Raster indices of every pixel in the subtree of `id`, sorted.
    pub fn pixel_indices(&self, id: NodeId) -> Result<Vec<u32>, TreeError> {
        let node = self.node(id)?;
        let mut out = Vec::with_capacity(node.area as usize);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.extend_from_slice(self.own_pixels(n));
            stack.extend_from_slice(&self.nodes[n.index()].children);
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Materializes the pixel set of a node.
    pub fn region_of(&self, id: NodeId) -> Result<Region, TreeError> {
        let level = self.node(id)?.level;
        let w = self.image.width() as u32;
        let idx = self.pixel_indices(id)?;
        let gray_sum = idx.iter().map(|&p| self.image.data()[p as usize] as u64).sum();
        let pixels = idx.into_iter().map(|p| Point::new(p % w, p / w)).collect();
        Ok(Region::from_sorted(pixels, gray_sum, level).expect("tree nodes are never empty"))
    }
}

/// An explicit pixel set with cached bounds and intensity statistics.
///
/// Pixels are kept sorted row-major and unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pixels: Vec<Point>,
    bbox: Rect,
    gray_sum: u64,
    level: u8,
}

impl Region {
    /// Builds a region from pixels of `img`. Returns `None` if `pixels` is empty.
    pub fn from_image(mut pixels: Vec<Point>, img: &GrayImage, level: u8) -> Option<Region> {
        pixels.sort_unstable();
        pixels.dedup();
        let gray_sum = pixels
            .iter()
            .map(|p| img.get(p.x as usize, p.y as usize) as u64)
            .sum();
        Region::from_sorted(pixels, gray_sum, level)
    }

    /// Builds a region from arbitrary pixels and a precomputed intensity sum.
    pub fn from_parts(mut pixels: Vec<Point>, gray_sum: u64, level: u8) -> Option<Region> {
        pixels.sort_unstable();
        pixels.dedup();
        Region::from_sorted(pixels, gray_sum, level)
    }

    pub(crate) fn from_sorted(pixels: Vec<Point>, gray_sum: u64, level: u8) -> Option<Region> {
        debug_assert!(pixels.windows(2).all(|w| w[0] < w[1]));
        let bbox = Rect::bounding(&pixels)?;
        Some(Region {
            pixels,
            bbox,
            gray_sum,
            level,
        })
    }

    pub fn pixels(&self) -> &[Point] {
        &self.pixels
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn gray_sum(&self) -> u64 {
        self.gray_sum
    }

    pub fn mean_gray(&self) -> f64 {
        self.gray_sum as f64 / self.pixels.len() as f64
    }

    /// Gray level of the extremal region this came from.
    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bbox.contains(p) && self.pixels.binary_search(&p).is_ok()
    }

    /// Pixel-set union; level is taken from `self`.
    pub fn union(&self, other: &Region) -> Region {
        let pixels = merge_sorted(&self.pixels, &other.pixels);
        Region {
            pixels,
            bbox: self.bbox.union(&other.bbox),
            gray_sum: self.gray_sum + other.gray_sum,
            level: self.level,
        }
    }

    /// Number of shared pixels.
    pub fn intersection_len(&self, other: &Region) -> usize {
        if self.bbox.intersection(&other.bbox).is_none() {
            return 0;
        }
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.pixels.len() && j < other.pixels.len() {
            match self.pixels[i].cmp(&other.pixels[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        other.bbox.contains_rect(&self.bbox) && self.intersection_len(other) == self.area()
    }
}

pub(crate) fn merge_sorted(a: &[Point], b: &[Point]) -> Vec<Point> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Classic MSER selection parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MserParams {
    /// Gray-level window of the stability measure.
    pub delta: u8,
    pub min_area: usize,
    /// Largest region as a fraction of the image area.
    pub max_area_fraction: f64,
    pub max_variation: f64,
    /// Nested MSERs whose relative size difference to the nearest kept
    /// ancestor is below this are dropped. Zero keeps everything.
    pub min_diversity: f64,
}

impl Default for MserParams {
    fn default() -> Self {
        MserParams {
            delta: 2,
            min_area: 10,
            max_area_fraction: 0.25,
            max_variation: 0.5,
            min_diversity: 0.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("invalid parameter {name}: {value}")]
    Invalid { name: &'static str, value: f64 },
}

impl MserParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |name, value| Err(ParamError::Invalid { name, value });
        if self.delta < 1 {
            return bad("delta", self.delta as f64);
        }
        if self.min_area == 0 {
            return bad("min_area", 0.0);
        }
        if !(self.max_area_fraction > 0.0 && self.max_area_fraction <= 1.0) {
            return bad("max_area_fraction", self.max_area_fraction);
        }
        if self.max_variation.is_nan() || self.max_variation <= 0.0 {
            return bad("max_variation", self.max_variation);
        }
        if !(0.0..=1.0).contains(&self.min_diversity) {
            return bad("min_diversity", self.min_diversity);
        }
        Ok(())
    }
}

/// Stability of every node: `(|R+| - |R|) / |R|` where `R+` is the largest
/// ancestor-or-self whose level is at most `level + delta`.
pub fn variations(tree: &ComponentTree, delta: u8) -> Vec<f64> {
    let nodes = tree.nodes();
    nodes
        .iter()
        .map(|node| {
            let limit = node.level as u16 + delta as u16;
            let mut top = node;
            while let Some(p) = top.parent {
                let parent = &nodes[p.index()];
                if parent.level as u16 > limit {
                    break;
                }
                top = parent;
            }
            (top.area - node.area) as f64 / node.area as f64
        })
        .collect()
}

/// Selects the maximally stable nodes of `tree`, in ascending node order.
pub fn detect_mser_nodes(tree: &ComponentTree, params: &MserParams) -> Vec<NodeId> {
    let nodes = tree.nodes();
    let q = variations(tree, params.delta);
    let max_area = params.max_area_fraction * tree.image().len() as f64;

    let passes: Vec<bool> = nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let stable = node.parent.is_none_or(|p| q[i] <= q[p.index()])
                && node.children.iter().all(|c| q[i] <= q[c.index()]);
            let area = node.area as usize;
            stable
                && q[i] <= params.max_variation
                && area >= params.min_area
                && area as f64 <= max_area
        })
        .collect();

    // Parents come after children, so walk downwards from the root and
    // carry the nearest kept ancestor along.
    let mut kept = vec![false; nodes.len()];
    let mut nearest_kept: Vec<Option<usize>> = vec![None; nodes.len()];
    for i in (0..nodes.len()).rev() {
        let inherited = nodes[i].parent.and_then(|p| {
            let p = p.index();
            if kept[p] {
                Some(p)
            } else {
                nearest_kept[p]
            }
        });
        nearest_kept[i] = inherited;
        if !passes[i] {
            continue;
        }
        kept[i] = match inherited {
            Some(a) if params.min_diversity > 0.0 => {
                let outer = nodes[a].area as f64;
                (outer - nodes[i].area as f64) / outer >= params.min_diversity
            }
            _ => true,
        };
    }
    (0..nodes.len())
        .filter(|&i| kept[i])
        .map(|i| NodeId(i as u32))
        .collect()
}

/// Maximally stable extremal regions of `tree`.
pub fn detect_msers(tree: &ComponentTree, params: &MserParams) -> Vec<Region> {
    detect_mser_nodes(tree, params)
        .into_iter()
        .map(|id| tree.region_of(id).expect("ids come from this tree"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, data: &[u8]) -> GrayImage {
        GrayImage::new(w, h, data.to_vec()).unwrap()
    }

    fn square_on_white(size: usize, side: usize, at: usize) -> GrayImage {
        GrayImage::from_fn(size, size, |x, y| {
            if (at..at + side).contains(&x) && (at..at + side).contains(&y) {
                0
            } else {
                255
            }
        })
        .unwrap()
    }

    #[test]
    fn constant_image_is_a_single_root() {
        let t = build_component_tree(&GrayImage::filled(7, 5, 42).unwrap());
        assert_eq!(t.len(), 1);
        let root = t.node(t.root()).unwrap();
        assert_eq!((root.level, root.area, root.parent), (42, 35, None));
        assert_eq!(root.seed, Point::new(0, 0));
    }

    #[test]
    fn two_level_image() {
        let t = build_component_tree(&img(2, 2, &[0, 255, 255, 255]));
        assert_eq!(t.len(), 2);
        let leaf = &t.nodes()[0];
        assert_eq!((leaf.level, leaf.area, leaf.parent), (0, 1, Some(t.root())));
        let root = t.node(t.root()).unwrap();
        assert_eq!((root.level, root.area), (255, 4));
        assert_eq!(root.children, vec![NodeId(0)]);

        let r = t.region_of(NodeId(0)).unwrap();
        assert_eq!(r.pixels(), &[Point::new(0, 0)]);
        assert_eq!(r.area(), 1);
        assert_eq!(t.region_of(t.root()).unwrap().area(), 4);
    }

    #[test]
    fn same_level_components_merge_into_one_node() {
        // Two 0-pixels joined through a 5-pixel, and a separate level-5 pixel
        // that connects them at level 5.
        let t = build_component_tree(&img(3, 1, &[0, 5, 0]));
        assert_eq!(t.len(), 3);
        let root = t.node(t.root()).unwrap();
        assert_eq!((root.level, root.area, root.children.len()), (5, 3, 2));
    }

    #[test]
    fn stale_node_is_reported() {
        let t = build_component_tree(&GrayImage::filled(2, 2, 1).unwrap());
        assert_eq!(t.node_id(5), Err(TreeError::StaleNode(5, 1)));
        assert!(t.node_id(0).is_ok());
    }

    #[test]
    fn nested_square_regions_are_strict_subsets() {
        let im = GrayImage::from_fn(20, 20, |x, y| {
            let d = (x as i32 - 10).abs().max((y as i32 - 10).abs());
            match d {
                0..=2 => 10,
                3..=5 => 100,
                _ => 200,
            }
        })
        .unwrap();
        let t = build_component_tree(&im);
        assert_eq!(t.len(), 3);
        let inner = t.region_of(NodeId(0)).unwrap();
        let middle = t.region_of(NodeId(1)).unwrap();
        assert_eq!((inner.area(), middle.area()), (25, 121));
        assert!(inner.is_subset_of(&middle));
        assert!(!middle.is_subset_of(&inner));
        // oracle: every inner pixel is at level 10 and lies in middle
        for p in inner.pixels() {
            assert_eq!(im.get(p.x as usize, p.y as usize), 10);
            assert!(middle.contains(*p));
        }
    }

    #[test]
    fn black_square_gives_one_mser() {
        let im = square_on_white(40, 10, 12);
        let t = build_component_tree(&im);
        let params = MserParams {
            delta: 2,
            min_area: 5,
            min_diversity: 0.0,
            ..MserParams::default()
        };
        let msers = detect_msers(&t, &params);
        assert_eq!(msers.len(), 1);
        assert_eq!(msers[0].area(), 100);
        assert_eq!(msers[0].bbox(), Rect::new(12, 12, 21, 21).unwrap());
        assert_eq!(msers[0].mean_gray(), 0.0);

        let gated = MserParams { min_area: 200, ..params };
        assert!(detect_msers(&t, &gated).is_empty());
    }

    #[test]
    fn constant_image_has_no_msers() {
        let t = build_component_tree(&GrayImage::filled(30, 30, 77).unwrap());
        assert!(detect_msers(&t, &MserParams::default()).is_empty());
    }

    #[test]
    fn min_diversity_prunes_near_duplicates() {
        // 10x10 core at 0 inside an 11x10 body at 50 on white: nested MSERs
        // differing by 10 pixels.
        let im = GrayImage::from_fn(40, 40, |x, y| {
            if (10..20).contains(&x) && (10..20).contains(&y) {
                0
            } else if x == 20 && (10..20).contains(&y) {
                50
            } else {
                255
            }
        })
        .unwrap();
        let t = build_component_tree(&im);
        let keep_all = detect_msers(&t, &MserParams::default());
        assert_eq!(keep_all.iter().map(Region::area).collect::<Vec<_>>(), vec![100, 110]);
        let pruned = detect_msers(
            &t,
            &MserParams {
                min_diversity: 0.2,
                ..MserParams::default()
            },
        );
        assert_eq!(pruned.iter().map(Region::area).collect::<Vec<_>>(), vec![110]);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(MserParams::default().validate().is_ok());
        let bad = MserParams {
            max_area_fraction: 0.0,
            ..MserParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = MserParams {
            min_diversity: 1.5,
            ..MserParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
