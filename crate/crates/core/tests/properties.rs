use std::collections::HashSet;

use imser_core::candidates::{merge_fragments, CandidateRegion, MergeParams, Polarity};
use imser_core::comptree::detect_mser_nodes;
use imser_core::scorer::{heuristic_score, ScoredRegion};
use imser_core::textline::form_lines;
use imser_core::{
    build_component_tree, detect_msers, extract_imsers, group_msers, optimize_gamma, Confidence, GrayImage, ImserParams,
    LabeledSample, LineParams, MserParams, Point, Region, SampleLabel,
};
use proptest::prelude::*;

fn small_image() -> impl Strategy<Value = GrayImage> {
    (1usize..14, 1usize..14).prop_flat_map(|(w, h)| {
        proptest::collection::vec(prop_oneof![any::<u8>(), (0u8..4).prop_map(|v| v * 60)], w * h)
            .prop_map(move |data| GrayImage::new(w, h, data).unwrap())
    })
}

/// Overlapping flat rectangles on a flat background, so MSERs nest.
fn blob_image() -> impl Strategy<Value = GrayImage> {
    let rect = (0usize..28, 0usize..28, 3usize..14, 3usize..14, any::<u8>());
    (100u8..220, proptest::collection::vec(rect, 1..10)).prop_map(|(bg, rects)| {
        let mut img = GrayImage::filled(32, 32, bg).unwrap();
        for (x0, y0, w, h, g) in rects {
            for y in y0..(y0 + h).min(32) {
                for x in x0..(x0 + w).min(32) {
                    img.set(x, y, g);
                }
            }
        }
        img
    })
}

fn region_set(r: &Region) -> HashSet<Point> {
    r.pixels().iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_nodes_are_consistent(img in small_image()) {
        let tree = build_component_tree(&img);
        let nodes = tree.nodes();
        prop_assert_eq!(nodes[tree.root().index()].area as usize, img.len());
        for id in tree.node_ids() {
            let node = &nodes[id.index()];
            let px = tree.pixel_indices(id).unwrap();
            prop_assert_eq!(px.len(), node.area as usize);
            // the level is the brightest pixel of the component
            prop_assert_eq!(px.iter().map(|&p| img.data()[p as usize]).max(), Some(node.level));
            if let Some(p) = node.parent {
                prop_assert!(nodes[p.index()].level > node.level);
                prop_assert!(nodes[p.index()].area > node.area);
            }
        }
        for y in 0..img.height() {
            for x in 0..img.width() {
                prop_assert_eq!(nodes[tree.node_of_pixel(x, y).index()].level, img.get(x, y));
            }
        }
    }

    #[test]
    fn raising_min_area_never_adds_msers(img in blob_image(), a in 1usize..60, b in 1usize..60) {
        let tree = build_component_tree(&img);
        let lo = MserParams { min_area: a.min(b), ..MserParams::default() };
        let hi = MserParams { min_area: a.max(b), ..MserParams::default() };
        let lo_set: HashSet<_> = detect_mser_nodes(&tree, &lo).into_iter().collect();
        prop_assert!(detect_mser_nodes(&tree, &hi).iter().all(|n| lo_set.contains(n)));
    }

    #[test]
    fn isolated_regions_partition_part_of_the_top(img in blob_image(), gamma in 0.0f64..3.0, min_emit in 1usize..20) {
        let trees = group_msers(detect_msers(&build_component_tree(&img), &MserParams::default())).unwrap();
        let params = ImserParams { gamma, min_emit_area: min_emit };
        for t in &trees {
            let top = region_set(&t.nodes()[t.top()]);
            let mut seen = HashSet::new();
            for r in extract_imsers(t, &params) {
                prop_assert!(r.area() >= min_emit);
                prop_assert_eq!(r.gray_sum(), r.pixels().iter().map(|p| img.get(p.x as usize, p.y as usize) as u64).sum::<u64>());
                for p in r.pixels() {
                    prop_assert!(top.contains(p));
                    prop_assert!(seen.insert(*p));
                }
            }
            prop_assert_eq!(extract_imsers(t, &params), extract_imsers(t, &params));
        }
    }

    #[test]
    fn fathers_are_smallest_supersets(img in blob_image()) {
        let trees = group_msers(detect_msers(&build_component_tree(&img), &MserParams::default())).unwrap();
        for t in &trees {
            let sets: Vec<HashSet<Point>> = t.nodes().iter().map(region_set).collect();
            for i in 0..t.len() {
                let expected = (0..t.len())
                    .filter(|&j| sets[j].len() > sets[i].len() && sets[i].is_subset(&sets[j]))
                    .min_by_key(|&j| sets[j].len());
                prop_assert_eq!(t.father(i), expected);
            }
        }
    }

    #[test]
    fn duplicating_samples_keeps_gamma(
        text in proptest::collection::vec(0.0f64..2.0, 1..20),
        bg in proptest::collection::vec(0.0f64..2.0, 1..20),
        copies in 2usize..4,
    ) {
        let mut samples: Vec<LabeledSample> = text.iter().map(|&ratio| LabeledSample { ratio, label: SampleLabel::Text }).collect();
        samples.extend(bg.iter().map(|&ratio| LabeledSample { ratio, label: SampleLabel::Background }));
        let once = optimize_gamma(&samples, 0.05).unwrap();
        let many: Vec<_> = samples.iter().cycle().take(samples.len() * copies).copied().collect();
        prop_assert_eq!(optimize_gamma(&many, 0.05).unwrap(), once);
    }

    #[test]
    fn merging_keeps_pixels_and_disjointness(img in blob_image()) {
        let trees = group_msers(detect_msers(&build_component_tree(&img), &MserParams::default())).unwrap();
        let cands: Vec<CandidateRegion> = trees
            .iter()
            .flat_map(|t| extract_imsers(t, &ImserParams::default()))
            .map(|r| CandidateRegion::new(r, Polarity::Dark))
            .collect();
        let before: usize = cands.iter().map(|c| c.region().area()).sum();
        let merged = merge_fragments(cands, &MergeParams::default());
        let mut seen = HashSet::new();
        for c in &merged {
            for p in c.region().pixels() {
                prop_assert!(seen.insert(*p));
            }
        }
        prop_assert_eq!(seen.len(), before);
        prop_assert_eq!(merge_fragments(merged.clone(), &MergeParams::default()), merged);
    }

    #[test]
    fn lines_respect_threshold_and_do_not_share_members(
        boxes in proptest::collection::vec((0u32..120, 0u32..40, 3u32..12, 6u32..16, 0.0f64..1.0), 0..14),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let scored: Vec<ScoredRegion> = boxes
            .iter()
            .map(|&(x0, y0, w, h, conf)| {
                let px: Vec<Point> = (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Point::new(x, y))).collect();
                let n = px.len() as u64;
                ScoredRegion {
                    candidate: CandidateRegion::new(Region::from_parts(px, n * 40, 0).unwrap(), Polarity::Dark),
                    confidence: Confidence::new(conf),
                }
            })
            .collect();
        let linked_count = |t: f64| {
            let p = LineParams { conf_threshold: t, ..LineParams::default() };
            let lines = form_lines(scored.clone(), &p);
            let mut members = Vec::new();
            for l in &lines {
                assert!(l.members().len() >= 2);
                for m in l.members() {
                    assert!(m.confidence.value() >= t);
                    assert!(m.candidate.region().pixels().iter().all(|px| l.bbox().contains(*px)));
                    members.push(m.candidate.region().bbox());
                }
            }
            members.len()
        };
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let n_lo = linked_count(lo);
        prop_assert!(linked_count(hi) <= n_lo);
        // lines partition a subset of the confident regions
        prop_assert!(n_lo <= boxes.iter().filter(|b| b.4 >= lo).count());
    }

    #[test]
    fn heuristic_score_is_bounded(rows in proptest::collection::btree_set((0u32..12, 0u32..12), 1..80)) {
        let px: Vec<Point> = rows.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        let c = CandidateRegion::new(Region::from_parts(px, 0, 0).unwrap(), Polarity::Light);
        let s = heuristic_score(&c).value();
        prop_assert!((0.0..=1.0).contains(&s));
    }
}
