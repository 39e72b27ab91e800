//! Grayscale rasters: loading, saving, polarity inversion and CNN patch
//! extraction.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::geom::Rect;

/// Side length of the square CNN input patch.
pub const PATCH_SIZE: usize = 32;
/// Number of values in a [`Patch`].
pub const PATCH_LEN: usize = PATCH_SIZE * PATCH_SIZE;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read image: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error("image has zero width or height")]
    ZeroDimension,
    #[error("pixel buffer holds {len} values, expected {width}x{height}")]
    BufferSize { width: usize, height: usize, len: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("box {0:?} lies outside the {1}x{2} image")]
    OutOfBounds(Rect, usize, usize),
}

/// 8-bit single-channel raster stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn bounds(&self) -> Rect {
        Rect {
            left: 0,
            top: 0,
            right: self.width as u32 - 1,
            bottom: self.height as u32 - 1,
        }
    }

    /// Pixel-wise `255 - p`.
    pub fn invert(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| 255 - p).collect(),
        }
    }

    /// Encodes as binary PGM (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut buf = Vec::with_capacity(self.data.len() + 32);
        self.write_pgm(&mut buf)?;
        fs::write(path, buf)
    }
}

/// Loads a binary PGM (P5, maxval 255) or an 8-bit PNG as grayscale.
///
/// Color PNGs are converted with the Rec.601 luma weights,
/// `round(0.299 R + 0.587 G + 0.114 B)`; alpha is ignored.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let bytes = fs::read(path)?;
    decode_gray(&bytes)
}

/// Decodes an in-memory PGM or PNG. See [`load_gray`].
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(ImageError::Unsupported(
            "expected binary PGM (P5) or PNG".into(),
        ))
    }
}

/// Integer Rec.601 luma with round-half-up.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    // Header: magic, width, height, maxval separated by whitespace, comments
    // introduced by '#', then exactly one whitespace byte before the raster.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Malformed("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Malformed("PGM header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(ImageError::Malformed("missing whitespace after PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::Unsupported(format!("PGM maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension);
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::Malformed("PGM dimensions overflow".into()))?;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| ImageError::Malformed("PGM raster shorter than header claims".into()))?;
    GrayImage::new(width, height, raster.to_vec())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    use image::DynamicImage;

    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::Malformed(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(ImageError::ZeroDimension);
    }
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => {
            buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect()
        }
        other => {
            return Err(ImageError::Unsupported(format!(
                "PNG color type {:?}",
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

/// A normalized 32x32 CNN input.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    values: Vec<f32>,
}

impl Patch {
    /// Wraps raw values; `None` unless exactly [`PATCH_LEN`] are given.
    pub fn from_values(values: Vec<f32>) -> Option<Self> {
        (values.len() == PATCH_LEN).then_some(Patch { values })
    }

    pub fn zeros() -> Self {
        Patch {
            values: vec![0.0; PATCH_LEN],
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * PATCH_SIZE + x]
    }
}

/// Resamples the `bbox` window to 32x32 with bilinear interpolation and
/// normalizes it to zero mean and unit population variance.
///
/// Sample centers are aligned (`src = (dst + 0.5) * scale - 0.5`) and clamped
/// to the window, so an exact 2x upscale round-trips. Constant windows give
/// the all-zero patch.
pub fn extract_patch(img: &GrayImage, bbox: Rect) -> Result<Patch, PatchError> {
    if !img.bounds().contains_rect(&bbox) {
        return Err(PatchError::OutOfBounds(bbox, img.width, img.height));
    }
    let (bw, bh) = (bbox.width() as usize, bbox.height() as usize);
    let xs = sample_axis(bw);
    let ys = sample_axis(bh);
    let at = |x: usize, y: usize| img.get(bbox.left as usize + x, bbox.top as usize + y) as f64;

    let mut resized = [0f64; PATCH_LEN];
    for (dy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (dx, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
            let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
            resized[dy * PATCH_SIZE + dx] = top * (1.0 - fy) + bottom * fy;
        }
    }

    let n = PATCH_LEN as f64;
    let mean = resized.iter().sum::<f64>() / n;
    let var = resized.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-9 {
        return Ok(Patch::zeros());
    }
    Ok(Patch {
        values: resized.iter().map(|v| ((v - mean) / std) as f32).collect(),
    })
}

/// For each of the 32 output samples: left index, right index, right weight.
fn sample_axis(len: usize) -> [(usize, usize, f64); PATCH_SIZE] {
    let scale = len as f64 / PATCH_SIZE as f64;
    let last = (len - 1) as f64;
    std::array::from_fn(|d| {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_pixel_pgm_passes_byte_through() {
        let img = decode_gray(b"P5\n1 1\n255\n\x7f").unwrap();
        assert_eq!((img.width(), img.height(), img.data()), (1, 1, &[127u8][..]));
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let img = decode_gray(b"P5 # made by hand\n2 1 255\n\x01\x02").unwrap();
        assert_eq!(img.data(), &[1, 2]);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(decode_gray(b"P5\n0 3\n255\n"), Err(ImageError::ZeroDimension)));
        assert!(matches!(
            decode_gray(b"P5\n2 2\n255\n\x00"),
            Err(ImageError::Malformed(_))
        ));
        assert!(matches!(
            decode_gray(b"P5\n1 1\n65535\n\x00\x00"),
            Err(ImageError::Unsupported(_))
        ));
        assert!(matches!(decode_gray(b"P2\n1 1\n255\n0"), Err(ImageError::Unsupported(_))));
        assert!(matches!(decode_gray(b"GIF89a"), Err(ImageError::Unsupported(_))));
    }

    #[test]
    fn luma_of_primaries() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(255, 0, 0), 76);
        assert_eq!(luma(0, 0, 0), 0);
    }

    fn encode_png(color: image::ExtendedColorType, w: u32, h: u32, raw: &[u8]) -> Vec<u8> {
        use image::ImageEncoder;
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(raw, w, h, color)
            .unwrap();
        out
    }

    #[test]
    fn png_rgb_converts_with_luma() {
        let png = encode_png(image::ExtendedColorType::Rgb8, 2, 1, &[255, 255, 255, 255, 0, 0]);
        assert_eq!(decode_gray(&png).unwrap().data(), &[255, 76]);
    }

    #[test]
    fn png_gray_passes_through() {
        let png = encode_png(image::ExtendedColorType::L8, 3, 1, &[0, 128, 255]);
        assert_eq!(decode_gray(&png).unwrap().data(), &[0, 128, 255]);
    }

    #[test]
    fn png_16_bit_is_unsupported() {
        let png = encode_png(image::ExtendedColorType::L16, 1, 1, &[0, 1]);
        assert!(matches!(decode_gray(&png), Err(ImageError::Unsupported(_))));
    }

    #[test]
    fn invert_examples() {
        let img = GrayImage::new(3, 1, vec![0, 255, 128]).unwrap();
        assert_eq!(img.invert().data(), &[255, 0, 127]);
        let c = GrayImage::filled(4, 4, 100).unwrap();
        assert!(c.invert().data().iter().all(|&p| p == 155));
    }

    #[test]
    fn constant_window_gives_zero_patch() {
        let img = GrayImage::filled(40, 40, 200).unwrap();
        let p = extract_patch(&img, Rect::new(3, 3, 34, 34).unwrap()).unwrap();
        assert_eq!(p, Patch::zeros());
    }

    #[test]
    fn half_black_half_white_normalizes_to_unit() {
        let img = GrayImage::from_fn(32, 32, |x, _| if x < 16 { 0 } else { 255 }).unwrap();
        let p = extract_patch(&img, img.bounds()).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let expect = if x < 16 { -1.0 } else { 1.0 };
                assert!((p.get(x, y) - expect).abs() < 1e-6);
            }
        }
    }

    /// Bilinear sampling written as a sum of tent weights over every source
    /// pixel, independent of the two-neighbour lookup in `extract_patch`.
    fn tent_resample(src: &GrayImage, bbox: Rect) -> Vec<f64> {
        let (bw, bh) = (bbox.width() as f64, bbox.height() as f64);
        let mut out = Vec::with_capacity(PATCH_LEN);
        for dy in 0..PATCH_SIZE {
            for dx in 0..PATCH_SIZE {
                let sx = ((dx as f64 + 0.5) * bw / 32.0 - 0.5).clamp(0.0, bw - 1.0);
                let sy = ((dy as f64 + 0.5) * bh / 32.0 - 0.5).clamp(0.0, bh - 1.0);
                let mut acc = 0.0;
                for y in 0..bbox.height() {
                    for x in 0..bbox.width() {
                        let w = (1.0 - (sx - x as f64).abs()).max(0.0)
                            * (1.0 - (sy - y as f64).abs()).max(0.0);
                        acc += w * src.get((bbox.left + x) as usize, (bbox.top + y) as usize) as f64;
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    fn normalize(v: &[f64]) -> Vec<f64> {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        v.iter().map(|x| (x - mean) / std).collect()
    }

    #[test]
    fn downsizing_a_2x_nearest_upscale_recovers_the_source() {
        let src = GrayImage::from_fn(32, 32, |x, y| ((x * 7 + y * 13) % 251) as u8).unwrap();
        let big = GrayImage::from_fn(70, 66, |x, y| {
            if (3..67).contains(&x) && (1..65).contains(&y) {
                src.get((x - 3) / 2, (y - 1) / 2)
            } else {
                0
            }
        })
        .unwrap();
        let bbox = Rect::new(3, 1, 66, 64).unwrap();
        let p = extract_patch(&big, bbox).unwrap();

        let oracle = normalize(&tent_resample(&big, bbox));
        let direct: Vec<f64> = src.data().iter().map(|&v| v as f64).collect();
        let direct = normalize(&direct);
        for i in 0..PATCH_LEN {
            assert!((p.values()[i] as f64 - oracle[i]).abs() < 1e-5);
            assert!((oracle[i] - direct[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn upscaling_small_window_matches_tent_oracle() {
        let img = GrayImage::from_fn(9, 7, |x, y| (x * 20 + y * 9) as u8).unwrap();
        let bbox = Rect::new(1, 2, 7, 5).unwrap();
        let p = extract_patch(&img, bbox).unwrap();
        let oracle = normalize(&tent_resample(&img, bbox));
        for (v, o) in p.values().iter().zip(&oracle) {
            assert!((*v as f64 - o).abs() < 1e-5);
        }
    }

    #[test]
    fn out_of_bounds_box_is_rejected() {
        let img = GrayImage::filled(10, 10, 0).unwrap();
        let bad = Rect::new(5, 5, 10, 9).unwrap();
        assert!(matches!(extract_patch(&img, bad), Err(PatchError::OutOfBounds(..))));
    }

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h)
                .prop_map(move |data| GrayImage::new(w, h, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn invert_is_an_involution(img in arb_image()) {
            prop_assert_eq!(img.invert().invert(), img);
        }

        #[test]
        fn pgm_round_trip_is_bit_exact(img in arb_image()) {
            let mut buf = Vec::new();
            img.write_pgm(&mut buf).unwrap();
            prop_assert_eq!(decode_gray(&buf).unwrap(), img);
        }

        #[test]
        fn patches_are_normalized(img in arb_image()) {
            let p = extract_patch(&img, img.bounds()).unwrap();
            let v: Vec<f64> = p.values().iter().map(|&x| x as f64).collect();
            prop_assert_eq!(v.len(), PATCH_LEN);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
            if v.iter().all(|&x| x == 0.0) {
                prop_assert!(img.data().iter().all(|&x| x == img.data()[0]));
            } else {
                prop_assert!(mean.abs() < 1e-6);
                prop_assert!((std - 1.0).abs() < 1e-6);
            }
        }
    }
}
