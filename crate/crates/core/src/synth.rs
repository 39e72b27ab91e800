//! Deterministic synthetic scenes: blocky words rendered over a textured
//! background, with their ground-truth boxes. Used by tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Rect;
use crate::imgio::GrayImage;

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

/// 5x7 glyphs whose strokes are 4-connected.
const FONT: &[(char, [&str; GLYPH_H])] = &[
    ('A', ["#####", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('C', ["#####", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('I', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"]),
    ('J', ["#####", "...#.", "...#.", "...#.", "...#.", "#..#.", "####."]),
    ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('O', ["#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"]),
    ('P', ["#####", "#...#", "#...#", "#####", "#....", "#....", "#...."]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('U', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"]),
];

pub fn glyph_chars() -> impl Iterator<Item = char> {
    FONT.iter().map(|(c, _)| *c)
}

fn glyph(c: char) -> Option<&'static [&'static str; GLYPH_H]> {
    FONT.iter().find(|(g, _)| *g == c).map(|(_, rows)| rows)
}

/// Draws `text` with its top-left corner at `(x, y)`, each font cell scaled to
/// `scale` pixels and glyphs separated by `spacing` pixels. Unknown characters
/// advance without drawing. Returns the tight box of the drawn pixels.
pub fn draw_text(img: &mut GrayImage, x: usize, y: usize, text: &str, scale: usize, spacing: usize, gray: u8) -> Option<Rect> {
    let mut bbox: Option<Rect> = None;
    let mut pen = x;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (gy, row) in rows.iter().enumerate() {
                for (gx, cell) in row.bytes().enumerate() {
                    if cell != b'#' {
                        continue;
                    }
                    for dy in 0..scale {
                        for dx in 0..scale {
                            let (px, py) = (pen + gx * scale + dx, y + gy * scale + dy);
                            if px < img.width() && py < img.height() {
                                img.set(px, py, gray);
                                let p = crate::geom::Point::new(px as u32, py as u32);
                                bbox = Some(bbox.map_or(Rect::from_point(p), |b| b.expand_to(p)));
                            }
                        }
                    }
                }
            }
        }
        pen += GLYPH_W * scale + spacing;
    }
    bbox
}

/// Smooth value noise: random lattice values every `cell` pixels, bilinearly
/// interpolated, scaled to `[-amplitude, amplitude]`.
fn value_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, cell: usize, amplitude: f64) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / cell as f64, y as f64 / cell as f64);
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            out.push(amplitude * (top * (1.0 - ty) + bottom * ty));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub image: GrayImage,
    /// Ground-truth box of every rendered word.
    pub words: Vec<Rect>,
    pub text: String,
}

/// Knobs of [`word_scene`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub letters: usize,
    pub background: f64,
    pub texture_amplitude: f64,
    pub grain: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 200,
            height: 80,
            letters: 5,
            background: 185.0,
            texture_amplitude: 10.0,
            grain: 3.0,
        }
    }
}

/// One dark, high-contrast word on a light textured background.
pub fn word_scene(seed: u64, params: &SceneParams) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width, params.height);
    let coarse = value_noise(&mut rng, w, h, 16, params.texture_amplitude);
    let fine = value_noise(&mut rng, w, h, 4, params.texture_amplitude * 0.3);
    let data: Vec<u8> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| {
            let g = rng.gen_range(-params.grain..=params.grain);
            (params.background + c + f + g).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let mut image = GrayImage::new(w, h, data).expect("scene dimensions are positive");

    let chars: Vec<char> = glyph_chars().collect();
    let text: String = (0..params.letters)
        .map(|_| chars[rng.gen_range(0..chars.len())])
        .collect();
    let scale = rng.gen_range(2..=3usize);
    let spacing = rng.gen_range(scale + 2..=scale * 3);
    let word_w = params.letters * GLYPH_W * scale + (params.letters - 1) * spacing;
    let word_h = GLYPH_H * scale;
    let x = rng.gen_range(4..=w.saturating_sub(word_w + 4).max(4));
    let y = rng.gen_range(4..=h.saturating_sub(word_h + 4).max(4));
    let gray = rng.gen_range(20..=60u8);
    let words = draw_text(&mut image, x, y, &text, scale, spacing, gray)
        .into_iter()
        .collect();
    SyntheticScene { image, words, text }
}
