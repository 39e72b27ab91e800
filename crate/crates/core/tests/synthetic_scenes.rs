use imser_core::eval::match_and_score;
use imser_core::synth::{draw_text, word_scene, SceneParams};
use imser_core::{BoxesByImage, Detector, GrayImage, PipelineConfig, Point};

#[test]
fn heuristic_pipeline_finds_rendered_words() {
    let det = Detector::new(PipelineConfig::default()).unwrap();
    let mut found = BoxesByImage::new();
    let mut truth = BoxesByImage::new();
    for seed in 0..20u64 {
        let scene = word_scene(seed, &SceneParams::default());
        let lines = det.detect(&scene.image).unwrap();
        let id = format!("scene{seed}");
        found.insert(id.clone(), lines.iter().map(|l| l.bbox()).collect());
        truth.insert(id, scene.words);
    }
    let m = match_and_score(&found, &truth, 0.5);
    assert!(m.recall >= 0.8 && m.precision >= 0.6, "{m}");
}

#[test]
fn one_word_on_white_is_covered_by_a_line() {
    let mut img = GrayImage::filled(160, 60, 235).unwrap();
    let word = draw_text(&mut img, 12, 18, "HELLO", 3, 6, 25).unwrap();
    let ink: Vec<Point> = (0..img.height())
        .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| img.get(x, y) == 25)
        .map(|(x, y)| Point::new(x as u32, y as u32))
        .collect();
    let lines = Detector::new(PipelineConfig::default()).unwrap().detect(&img).unwrap();
    assert!(!lines.is_empty());
    let best = lines
        .iter()
        .map(|l| ink.iter().filter(|p| l.bbox().contains(**p)).count())
        .max()
        .unwrap();
    assert!(best * 5 >= ink.len() * 4, "covered {best} of {} in {word:?}", ink.len());
}

#[test]
fn blank_image_yields_nothing() {
    let img = GrayImage::filled(50, 30, 128).unwrap();
    assert!(Detector::new(PipelineConfig::default()).unwrap().detect(&img).unwrap().is_empty());
}
