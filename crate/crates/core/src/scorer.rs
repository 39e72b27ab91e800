//! Text confidence scoring: a from-scratch forward pass of the six-layer CNN
//! plus a geometric fallback.
//!
//! Network, for a 1x32x32 input:
//!
//! | layer  | op                         | output    |
//! |--------|----------------------------|-----------|
//! | conv1  | 64 filters 6x6, valid, ReLU | 64x27x27 |
//! | pool1  | average 3x3, stride 3      | 64x9x9    |
//! | conv2  | 96 filters 4x4, valid, ReLU | 96x6x6   |
//! | pool2  | average 2x2, stride 2      | 96x3x3    |
//! | fc1    | 864 -> 200, ReLU           | 200       |
//! | fc2    | 200 -> 200, ReLU           | 200       |
//! | out    | 200 -> 2, softmax          | 2         |
//!
//! Class index 1 is text.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::candidates::CandidateRegion;
use crate::imgio::{extract_patch, GrayImage, Patch, PatchError, PATCH_LEN, PATCH_SIZE};

pub const MAGIC: &[u8; 4] = b"IMSR";
pub const FORMAT_VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_DENSE: u8 = 2;

const CONV1_SHAPE: [usize; 4] = [64, 1, 6, 6];
const CONV2_SHAPE: [usize; 4] = [96, 64, 4, 4];
const FC1_SHAPE: [usize; 2] = [200, 864];
const FC2_SHAPE: [usize; 2] = [200, 200];
const OUT_SHAPE: [usize; 2] = [2, 200];

const CONV1_SIDE: usize = PATCH_SIZE - 6 + 1; // 27
const POOL1_SIDE: usize = CONV1_SIDE / 3; // 9
const CONV2_SIDE: usize = POOL1_SIDE - 4 + 1; // 6
const POOL2_SIDE: usize = CONV2_SIDE / 2; // 3

pub const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "fc1", "fc2", "out"];

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("cannot read weights: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("layer {layer}: dimension mismatch: {detail}")]
    DimensionMismatch { layer: &'static str, detail: String },
    #[error("layer {layer}: non-finite value at index {index}")]
    NonFinite { layer: &'static str, index: usize },
    #[error("{0} unexpected bytes after the last layer")]
    TrailingBytes(usize),
}

/// Convolution weights, `[out][in][kh][kw]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub shape: [usize; 4],
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Fully connected weights, `[out][in]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub shape: [usize; 2],
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    fn zeros(shape: [usize; 4]) -> Self {
        ConvLayer {
            shape,
            weights: vec![0.0; shape.iter().product()],
            bias: vec![0.0; shape[0]],
        }
    }
}

impl DenseLayer {
    fn zeros(shape: [usize; 2]) -> Self {
        DenseLayer {
            shape,
            weights: vec![0.0; shape[0] * shape[1]],
            bias: vec![0.0; shape[0]],
        }
    }
}

/// All parameters of the network. Immutable once loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub fc1: DenseLayer,
    pub fc2: DenseLayer,
    pub out: DenseLayer,
}

impl WeightSet {
    pub fn zeros() -> Self {
        WeightSet {
            conv1: ConvLayer::zeros(CONV1_SHAPE),
            conv2: ConvLayer::zeros(CONV2_SHAPE),
            fc1: DenseLayer::zeros(FC1_SHAPE),
            fc2: DenseLayer::zeros(FC2_SHAPE),
            out: DenseLayer::zeros(OUT_SHAPE),
        }
    }

    /// Fills every weight and bias from `f`, visiting layers in pipeline
    /// order, weights before biases.
    pub fn from_fn(mut f: impl FnMut() -> f32) -> Self {
        let mut w = WeightSet::zeros();
        for values in w.buffers_mut() {
            values.iter_mut().for_each(|v| *v = f());
        }
        w
    }

    fn buffers_mut(&mut self) -> [&mut Vec<f32>; 10] {
        [
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.fc1.weights,
            &mut self.fc1.bias,
            &mut self.fc2.weights,
            &mut self.fc2.bias,
            &mut self.out.weights,
            &mut self.out.bias,
        ]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightError> {
        let bytes = fs::read(path)?;
        WeightSet::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)
    }

    /// Serializes in the IMSR layout.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let convs = [&self.conv1, &self.conv2];
        for c in convs {
            w.write_all(&[TAG_CONV, 4])?;
            for d in c.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            write_f32s(&mut w, &c.weights)?;
            write_f32s(&mut w, &c.bias)?;
        }
        for d in [&self.fc1, &self.fc2, &self.out] {
            w.write_all(&[TAG_DENSE, 2])?;
            for s in d.shape {
                w.write_all(&(s as u32).to_le_bytes())?;
            }
            write_f32s(&mut w, &d.weights)?;
            write_f32s(&mut w, &d.bias)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| WeightError::BadMagic(magic))?;
        if &magic != MAGIC {
            return Err(WeightError::BadMagic(magic));
        }
        let version = read_u32(&mut r).map_err(|_| truncated("header"))?;
        if version != FORMAT_VERSION {
            return Err(WeightError::Version(version));
        }
        let conv1 = read_conv(&mut r, "conv1", CONV1_SHAPE)?;
        let conv2 = read_conv(&mut r, "conv2", CONV2_SHAPE)?;
        let fc1 = read_dense(&mut r, "fc1", FC1_SHAPE)?;
        let fc2 = read_dense(&mut r, "fc2", FC2_SHAPE)?;
        let out = read_dense(&mut r, "out", OUT_SHAPE)?;
        if !r.is_empty() {
            return Err(WeightError::TrailingBytes(r.len()));
        }
        Ok(WeightSet {
            conv1,
            conv2,
            fc1,
            fc2,
            out,
        })
    }
}

fn truncated(layer: &'static str) -> WeightError {
    WeightError::DimensionMismatch {
        layer,
        detail: "file ends before the layer is complete".into(),
    }
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_block(
    r: &mut &[u8],
    layer: &'static str,
    tag: u8,
    expected: &[usize],
) -> Result<(Vec<f32>, Vec<f32>), WeightError> {
    let mut head = [0u8; 2];
    r.read_exact(&mut head).map_err(|_| truncated(layer))?;
    if head[0] != tag {
        return Err(WeightError::DimensionMismatch {
            layer,
            detail: format!("layer tag {} where {} was expected", head[0], tag),
        });
    }
    let rank = head[1] as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(read_u32(r).map_err(|_| truncated(layer))? as usize);
    }
    if dims != expected {
        return Err(WeightError::DimensionMismatch {
            layer,
            detail: format!("dims {dims:?}, expected {expected:?}"),
        });
    }
    let n: usize = dims.iter().product();
    let weights = read_f32s(r, n, layer)?;
    let bias = read_f32s(r, dims[0], layer)?;
    if let Some(index) = weights.iter().chain(&bias).position(|v| !v.is_finite()) {
        return Err(WeightError::NonFinite { layer, index });
    }
    Ok((weights, bias))
}

fn read_f32s(r: &mut &[u8], n: usize, layer: &'static str) -> Result<Vec<f32>, WeightError> {
    let bytes = n * 4;
    if r.len() < bytes {
        return Err(truncated(layer));
    }
    let (head, rest) = r.split_at(bytes);
    *r = rest;
    Ok(head
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_conv(r: &mut &[u8], layer: &'static str, shape: [usize; 4]) -> Result<ConvLayer, WeightError> {
    let (weights, bias) = read_block(r, layer, TAG_CONV, &shape)?;
    Ok(ConvLayer {
        shape,
        weights,
        bias,
    })
}

fn read_dense(r: &mut &[u8], layer: &'static str, shape: [usize; 2]) -> Result<DenseLayer, WeightError> {
    let (weights, bias) = read_block(r, layer, TAG_DENSE, &shape)?;
    Ok(DenseLayer {
        shape,
        weights,
        bias,
    })
}

/// Probability of the text class, in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Confidence(f64);

impl Confidence {
    /// Clamps into `[0, 1]`; NaN becomes 0.
    pub fn new(value: f64) -> Self {
        Confidence(if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Every intermediate output of one forward pass, flattened channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    pub conv1: Vec<f32>,
    pub pool1: Vec<f32>,
    pub conv2: Vec<f32>,
    pub pool2: Vec<f32>,
    pub fc1: Vec<f32>,
    pub fc2: Vec<f32>,
    pub logits: [f32; 2],
    pub confidence: f64,
}

impl Activations {
    /// Layer outputs in pipeline order, confidence last.
    pub fn layers(&self) -> Vec<Vec<f32>> {
        vec![
            self.conv1.clone(),
            self.pool1.clone(),
            self.conv2.clone(),
            self.pool2.clone(),
            self.fc1.clone(),
            self.fc2.clone(),
            self.logits.to_vec(),
            vec![self.confidence as f32],
        ]
    }
}

/// Valid convolution + bias + ReLU over a `[in][side][side]` input.
fn conv_relu(input: &[f32], side: usize, layer: &ConvLayer) -> Vec<f32> {
    let [out_ch, in_ch, kh, kw] = layer.shape;
    let out_side = side - kh + 1;
    let mut out = vec![0f32; out_ch * out_side * out_side];
    for o in 0..out_ch {
        let filter = &layer.weights[o * in_ch * kh * kw..(o + 1) * in_ch * kh * kw];
        for y in 0..out_side {
            for x in 0..out_side {
                let mut acc = layer.bias[o];
                for c in 0..in_ch {
                    let plane = &input[c * side * side..(c + 1) * side * side];
                    let k = &filter[c * kh * kw..(c + 1) * kh * kw];
                    for ky in 0..kh {
                        let row = &plane[(y + ky) * side + x..(y + ky) * side + x + kw];
                        let krow = &k[ky * kw..(ky + 1) * kw];
                        for kx in 0..kw {
                            acc += row[kx] * krow[kx];
                        }
                    }
                }
                out[(o * out_side + y) * out_side + x] = acc.max(0.0);
            }
        }
    }
    out
}

/// Non-overlapping average pooling with window and stride `size`.
fn avg_pool(input: &[f32], channels: usize, side: usize, size: usize) -> Vec<f32> {
    let out_side = side / size;
    let norm = 1.0 / (size * size) as f32;
    let mut out = vec![0f32; channels * out_side * out_side];
    for c in 0..channels {
        for y in 0..out_side {
            for x in 0..out_side {
                let mut acc = 0f32;
                for dy in 0..size {
                    for dx in 0..size {
                        acc += input[(c * side + y * size + dy) * side + x * size + dx];
                    }
                }
                out[(c * out_side + y) * out_side + x] = acc * norm;
            }
        }
    }
    out
}

fn dense(input: &[f32], layer: &DenseLayer, relu: bool) -> Vec<f32> {
    let [out_n, in_n] = layer.shape;
    (0..out_n)
        .map(|o| {
            let row = &layer.weights[o * in_n..(o + 1) * in_n];
            let acc = row
                .iter()
                .zip(input)
                .fold(layer.bias[o], |acc, (w, x)| acc + w * x);
            if relu {
                acc.max(0.0)
            } else {
                acc
            }
        })
        .collect()
}

/// Full forward pass keeping every intermediate output.
pub fn forward_trace(patch: &Patch, w: &WeightSet) -> Activations {
    let conv1 = conv_relu(patch.values(), PATCH_SIZE, &w.conv1);
    let pool1 = avg_pool(&conv1, CONV1_SHAPE[0], CONV1_SIDE, 3);
    let conv2 = conv_relu(&pool1, POOL1_SIDE, &w.conv2);
    let pool2 = avg_pool(&conv2, CONV2_SHAPE[0], CONV2_SIDE, 2);
    debug_assert_eq!(pool2.len(), CONV2_SHAPE[0] * POOL2_SIDE * POOL2_SIDE);
    let fc1 = dense(&pool2, &w.fc1, true);
    let fc2 = dense(&fc1, &w.fc2, true);
    let logits = dense(&fc2, &w.out, false);
    let logits = [logits[0], logits[1]];
    // two-class softmax, written to stay finite for large logits
    let confidence = 1.0 / (1.0 + (logits[0] as f64 - logits[1] as f64).exp());
    Activations {
        conv1,
        pool1,
        conv2,
        pool2,
        fc1,
        fc2,
        logits,
        confidence,
    }
}

pub fn forward(patch: &Patch, w: &WeightSet) -> Confidence {
    Confidence::new(forward_trace(patch, w).confidence)
}

/// Geometric fallback used when no trained network is available:
/// `0.5 + 0.3 [aspect in 0.1..=1.2] + 0.2 [fill in 0.2..=0.9] - 0.05 holes`,
/// clamped to `[0, 1]`. Aspect is bbox width over height, fill is area over
/// bbox area.
pub fn heuristic_score(candidate: &CandidateRegion) -> Confidence {
    let bbox = candidate.region().bbox();
    let aspect = bbox.width() as f64 / bbox.height() as f64;
    let fill = candidate.region().area() as f64 / bbox.area() as f64;
    heuristic_formula(aspect, fill, candidate.holes())
}

pub(crate) fn heuristic_formula(aspect: f64, fill: f64, holes: usize) -> Confidence {
    let mut s = 0.5;
    if (0.1..=1.2).contains(&aspect) {
        s += 0.3;
    }
    if (0.2..=0.9).contains(&fill) {
        s += 0.2;
    }
    s -= 0.2 * holes as f64 / 4.0;
    Confidence::new(s)
}

/// Anything that can assign a text confidence to a candidate.
pub trait Scorer: Send + Sync {
    /// `img` is the image the candidate was extracted from.
    fn score(&self, img: &GrayImage, candidate: &CandidateRegion) -> Result<Confidence, PatchError>;
}

/// Scores with the CNN on the candidate's bounding-box patch.
#[derive(Clone, Debug)]
pub struct CnnScorer {
    weights: WeightSet,
}

impl CnnScorer {
    pub fn new(weights: WeightSet) -> Self {
        CnnScorer { weights }
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }
}

impl Scorer for CnnScorer {
    fn score(&self, img: &GrayImage, candidate: &CandidateRegion) -> Result<Confidence, PatchError> {
        let patch = extract_patch(img, candidate.region().bbox())?;
        Ok(forward(&patch, &self.weights))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HeuristicScorer;

impl Scorer for HeuristicScorer {
    fn score(&self, _img: &GrayImage, candidate: &CandidateRegion) -> Result<Confidence, PatchError> {
        Ok(heuristic_score(candidate))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredRegion {
    pub candidate: CandidateRegion,
    pub confidence: Confidence,
}

/// Scores candidates in order.
pub fn score_with(
    scorer: &dyn Scorer,
    img: &GrayImage,
    candidates: Vec<CandidateRegion>,
) -> Result<Vec<ScoredRegion>, PatchError> {
    candidates
        .into_iter()
        .map(|candidate| {
            let confidence = scorer.score(img, &candidate)?;
            Ok(ScoredRegion {
                candidate,
                confidence,
            })
        })
        .collect()
}

/// Scores each candidate with the CNN on `extract_patch(img, bbox)`.
pub fn score_regions(
    img: &GrayImage,
    candidates: Vec<CandidateRegion>,
    w: &WeightSet,
) -> Result<Vec<ScoredRegion>, PatchError> {
    candidates
        .into_iter()
        .map(|candidate| {
            let patch = extract_patch(img, candidate.region().bbox())?;
            Ok(ScoredRegion {
                confidence: forward(&patch, w),
                candidate,
            })
        })
        .collect()
}

/// One record of an activation fixture file: the input patch followed by
/// every layer output in pipeline order, the final array holding the
/// confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureRecord {
    pub arrays: Vec<Vec<f32>>,
}

impl FixtureRecord {
    pub fn patch(&self) -> Option<Patch> {
        Patch::from_values(self.arrays.first()?.clone())
    }

    pub fn confidence(&self) -> Option<f32> {
        self.arrays.last()?.first().copied()
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixtures: {0}")]
    Io(#[from] io::Error),
    #[error("malformed fixture file: {0}")]
    Malformed(String),
}

/// Parses an activation fixture file.
///
/// Layout: an ASCII decimal record count terminated by `\n`; then per record a
/// `u32` LE array count followed by that many arrays, each a `u32` LE length
/// and that many `f32` LE values.
pub fn read_fixtures(bytes: &[u8]) -> Result<Vec<FixtureRecord>, FixtureError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FixtureError::Malformed("missing manifest line".into()))?;
    let count: usize = std::str::from_utf8(&bytes[..nl])
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| FixtureError::Malformed("manifest is not a record count".into()))?;
    let mut r = &bytes[nl + 1..];
    let short = |_| FixtureError::Malformed("unexpected end of file".into());
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let n_arrays = read_u32(&mut r).map_err(short)? as usize;
        let mut arrays = Vec::with_capacity(n_arrays);
        for _ in 0..n_arrays {
            let len = read_u32(&mut r).map_err(short)? as usize;
            let values = read_f32s(&mut r, len, "fixture")
                .map_err(|_| FixtureError::Malformed("unexpected end of file".into()))?;
            arrays.push(values);
        }
        records.push(FixtureRecord { arrays });
    }
    if !r.is_empty() {
        return Err(FixtureError::Malformed(format!("{} trailing bytes", r.len())));
    }
    Ok(records)
}

/// Writes records in the layout read by [`read_fixtures`].
pub fn write_fixtures<W: Write>(records: &[FixtureRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", records.len())?;
    for rec in records {
        w.write_all(&(rec.arrays.len() as u32).to_le_bytes())?;
        for a in &rec.arrays {
            w.write_all(&(a.len() as u32).to_le_bytes())?;
            write_f32s(&mut w, a)?;
        }
    }
    Ok(())
}

impl FixtureRecord {
    /// Record produced by this engine for `patch`.
    pub fn from_forward(patch: &Patch, w: &WeightSet) -> Self {
        let mut arrays = vec![patch.values().to_vec()];
        arrays.extend(forward_trace(patch, w).layers());
        debug_assert_eq!(arrays[0].len(), PATCH_LEN);
        FixtureRecord { arrays }
    }
}
