//! Mock residual vector quantizer.
//!
//! Depth 0 is the semantic codebook, deeper depths quantize the residual
//! left by all shallower ones. Encoding is greedy per depth with Euclidean
//! distance and lowest-index tie-breaking; decoding sums the dequantized
//! codewords of the first `depth` depths.

use crate::clock::FrameClock;
use crate::exec::Execution;
use crate::seed;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DEPTHS: usize = 16;
pub const DEFAULT_CODEBOOK_SIZE: usize = 2048;
pub const DEFAULT_DIM: usize = 512;
pub const CODEC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("code {code} out of range at depth {depth} (codebook size {size})")]
    CodeOutOfRange { depth: usize, code: u32, size: usize },
    #[error("frame has {got} codes, codec has {expected} depths")]
    FrameLength { expected: usize, got: usize },
    #[error("decode depth {depth} outside 1..={max}")]
    DecodeDepth { depth: usize, max: usize },
    #[error("need at least {k} training frames, got {got}")]
    TooFewFrames { k: usize, got: usize },
    #[error("invalid codec configuration: {0}")]
    Config(String),
    #[error("unsupported codec format version {0}")]
    Version(u32),
    #[error("codec json: {0}")]
    Json(String),
}

/// `K` codewords of dimension `D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    entries: Vec<f64>,
}

impl Codebook {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self, CodecError> {
        if dim == 0 {
            return Err(CodecError::Config("dimension must be positive".into()));
        }
        if entries.is_empty() || !entries.len().is_multiple_of(dim) {
            return Err(CodecError::Config(format!("{} values do not form whole {dim}-d codewords", entries.len())));
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CodecError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(CodecError::Dimension { expected: dim, got: bad.len() });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, code: usize) -> &[f64] {
        &self.entries[code * self.dim..(code + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.dim)
    }

    /// Nearest codeword to `x`; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, row) in self.rows().enumerate() {
            let d = squared_distance(x, row);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Code indices for one frame, one per depth.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodecFrame {
    pub codes: Vec<u32>,
}

impl CodecFrame {
    pub fn new(codes: Vec<u32>) -> Self {
        Self { codes }
    }

    pub fn depth(&self) -> usize {
        self.codes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvqCodec {
    clock: FrameClock,
    codebooks: Vec<Codebook>,
}

impl RvqCodec {
    pub fn new(clock: FrameClock, codebooks: Vec<Codebook>) -> Result<Self, CodecError> {
        let Some(first) = codebooks.first() else {
            return Err(CodecError::Config("at least one depth required".into()));
        };
        let dim = first.dim();
        if let Some(cb) = codebooks.iter().find(|c| c.dim() != dim) {
            return Err(CodecError::Dimension { expected: dim, got: cb.dim() });
        }
        Ok(Self { clock, codebooks })
    }

    /// Random Gaussian codebooks with geometrically shrinking scale per
    /// depth. Handy as a stand-in when no fitted codec is supplied.
    ///
    /// Below depth 0, entry 0 is the zero vector, so a deeper depth can
    /// always leave the residual unchanged and reconstruction error never
    /// grows with depth.
    pub fn seeded_random(depths: usize, k: usize, dim: usize, seed: u64) -> Result<Self, CodecError> {
        if depths == 0 || k == 0 || dim == 0 {
            return Err(CodecError::Config("depths, K and D must be positive".into()));
        }
        let books = (0..depths)
            .map(|d| {
                let mut rng = seed::rng(seed::derive(seed, "codebook", d as u64));
                let scale = 0.6f64.powi(d as i32);
                let entries = (0..k * dim)
                    .map(|i| if d > 0 && i < dim { 0.0 } else { scale * rng.sample::<f64, _>(StandardNormal) })
                    .collect();
                Codebook::new(dim, entries)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(FrameClock::default(), books)
    }

    pub fn clock(&self) -> FrameClock {
        self.clock
    }

    pub fn dim(&self) -> usize {
        self.codebooks[0].dim()
    }

    pub fn depths(&self) -> usize {
        self.codebooks.len()
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn encode_frame(&self, embedding: &[f64]) -> Result<CodecFrame, CodecError> {
        if embedding.len() != self.dim() {
            return Err(CodecError::Dimension { expected: self.dim(), got: embedding.len() });
        }
        let mut residual = embedding.to_vec();
        let mut codes = Vec::with_capacity(self.depths());
        for cb in &self.codebooks {
            let (code, _) = cb.nearest(&residual);
            for (r, c) in residual.iter_mut().zip(cb.entry(code)) {
                *r -= c;
            }
            codes.push(code as u32);
        }
        Ok(CodecFrame { codes })
    }

    pub fn check_frame(&self, frame: &CodecFrame) -> Result<(), CodecError> {
        if frame.codes.len() != self.depths() {
            return Err(CodecError::FrameLength { expected: self.depths(), got: frame.codes.len() });
        }
        for (depth, (&code, cb)) in frame.codes.iter().zip(&self.codebooks).enumerate() {
            if code as usize >= cb.len() {
                return Err(CodecError::CodeOutOfRange { depth, code, size: cb.len() });
            }
        }
        Ok(())
    }

    /// Sum of the dequantized codewords of the first `depth` depths.
    pub fn decode_frame(&self, frame: &CodecFrame, depth: usize) -> Result<Vec<f64>, CodecError> {
        self.check_frame(frame)?;
        if depth == 0 || depth > self.depths() {
            return Err(CodecError::DecodeDepth { depth, max: self.depths() });
        }
        let mut out = vec![0.0; self.dim()];
        for (cb, &code) in self.codebooks.iter().zip(&frame.codes).take(depth) {
            for (o, c) in out.iter_mut().zip(cb.entry(code as usize)) {
                *o += c;
            }
        }
        Ok(out)
    }

    /// Canonical payload for frames with no speech: the encoding of the
    /// zero embedding.
    pub fn silence_frame(&self) -> CodecFrame {
        self.encode_frame(&vec![0.0; self.dim()]).expect("zero vector has codec dimension")
    }

    pub fn encode_batch(&self, embeddings: &[Vec<f64>], exec: Execution) -> Result<Vec<CodecFrame>, CodecError> {
        exec.map(embeddings, |e| self.encode_frame(e)).into_iter().collect()
    }
}

// ---- fitting ----

/// Per-depth quantization MSE after each Lloyd assignment step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub mse_per_depth: Vec<Vec<f64>>,
}

/// Residual k-means: Lloyd's algorithm per depth on the residuals left by
/// all shallower depths. Deterministic given `seed`.
pub fn fit_codebooks(
    training_frames: &[Vec<f64>],
    depths: usize,
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<RvqCodec, CodecError> {
    fit_codebooks_with(training_frames, depths, k, iterations, seed, Execution::default()).map(|(c, _)| c)
}

pub fn fit_codebooks_with(
    training_frames: &[Vec<f64>],
    depths: usize,
    k: usize,
    iterations: usize,
    seed: u64,
    exec: Execution,
) -> Result<(RvqCodec, FitReport), CodecError> {
    if k == 0 || depths == 0 || iterations == 0 {
        return Err(CodecError::Config("depths, K and iterations must be positive".into()));
    }
    if training_frames.len() < k {
        return Err(CodecError::TooFewFrames { k, got: training_frames.len() });
    }
    let dim = training_frames[0].len();
    if dim == 0 {
        return Err(CodecError::Config("dimension must be positive".into()));
    }
    if let Some(bad) = training_frames.iter().find(|f| f.len() != dim) {
        return Err(CodecError::Dimension { expected: dim, got: bad.len() });
    }

    let mut residuals: Vec<Vec<f64>> = training_frames.to_vec();
    let mut books = Vec::with_capacity(depths);
    let mut report = FitReport::default();
    for depth in 0..depths {
        let (book, history) = lloyd(&residuals, k, iterations, seed::derive(seed, "kmeans", depth as u64), exec);
        let assign = assign_all(&residuals, &book, exec);
        for (r, (code, _)) in residuals.iter_mut().zip(&assign) {
            for (x, c) in r.iter_mut().zip(book.entry(*code)) {
                *x -= c;
            }
        }
        books.push(book);
        report.mse_per_depth.push(history);
    }
    Ok((RvqCodec::new(FrameClock::default(), books)?, report))
}

fn assign_all(points: &[Vec<f64>], book: &Codebook, exec: Execution) -> Vec<(usize, f64)> {
    exec.map(points, |p| book.nearest(p))
}

/// k-means++ seeding followed by Lloyd iterations. Returns the codebook and
/// the MSE measured at each assignment step.
fn lloyd(points: &[Vec<f64>], k: usize, iterations: usize, seed: u64, exec: Execution) -> (Codebook, Vec<f64>) {
    let dim = points[0].len();
    let n = points.len();
    let mut rng = seed::rng(seed);

    // k-means++ initialization
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }

    let mut history = Vec::with_capacity(iterations);
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..iterations {
        let book = Codebook::from_rows(&centroids).expect("centroids share dimension");
        let assign = assign_all(points, &book, exec);
        let mse = assign.iter().map(|(_, d)| d).sum::<f64>() / n as f64;
        history.push(mse);
        let labels: Vec<usize> = assign.iter().map(|(c, _)| *c).collect();
        if prev.as_ref() == Some(&labels) {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        // Empty clusters are reseeded from the point farthest from its
        // centroid (lowest index on ties); each point is used at most once.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| assign[b].1.total_cmp(&assign[a].1).then(a.cmp(&b)));
        let mut donors = order.into_iter();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s * inv).collect();
            } else if let Some(p) = donors.next() {
                centroids[c] = points[p].clone();
            }
        }
        prev = Some(labels);
    }
    (Codebook::from_rows(&centroids).expect("centroids share dimension"), history)
}

// ---- serialization ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodecDocument {
    version: u32,
    dim: usize,
    depths: usize,
    frame_rate: f64,
    sample_rate: u32,
    /// One row-major array per depth.
    codebooks: Vec<Vec<f64>>,
}

impl RvqCodec {
    pub fn to_json(&self) -> String {
        let doc = CodecDocument {
            version: CODEC_FORMAT_VERSION,
            dim: self.dim(),
            depths: self.depths(),
            frame_rate: self.clock.frame_rate(),
            sample_rate: self.clock.sample_rate(),
            codebooks: self.codebooks.iter().map(|c| c.entries.clone()).collect(),
        };
        serde_json::to_string(&doc).expect("codec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CodecError> {
        let doc: CodecDocument = serde_json::from_str(text).map_err(|e| CodecError::Json(e.to_string()))?;
        if doc.version != CODEC_FORMAT_VERSION {
            return Err(CodecError::Version(doc.version));
        }
        if doc.codebooks.len() != doc.depths {
            return Err(CodecError::Config(format!(
                "depth count {} but {} codebooks",
                doc.depths,
                doc.codebooks.len()
            )));
        }
        let clock = FrameClock::new(doc.frame_rate, doc.sample_rate).map_err(|e| CodecError::Config(e.to_string()))?;
        let books = doc.codebooks.into_iter().map(|e| Codebook::new(doc.dim, e)).collect::<Result<Vec<_>, _>>()?;
        Self::new(clock, books)
    }
}

/// Deterministic mock speech embedding for frame `offset` of the content
/// identified by `key`.
pub fn mock_embedding(key: &str, offset: u64, dim: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(seed::seed_from_key(key), "frame", offset));
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codec(books: Vec<Vec<Vec<f64>>>) -> RvqCodec {
        let books = books.iter().map(|rows| Codebook::from_rows(rows).unwrap()).collect();
        RvqCodec::new(FrameClock::default(), books).unwrap()
    }

    #[test]
    fn single_depth_nearest() {
        let c = codec(vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]]]);
        assert_eq!(c.encode_frame(&[0.9, 0.9]).unwrap().codes, vec![1]);
        assert_eq!(c.decode_frame(&CodecFrame::new(vec![1]), 1).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn two_depth_greedy_trace() {
        let c = codec(vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![vec![0.0, 0.0], vec![0.0, 0.5]]]);
        let f = c.encode_frame(&[1.0, 0.4]).unwrap();
        assert_eq!(f.codes, vec![1, 1]);
        assert_eq!(c.decode_frame(&f, 2).unwrap(), vec![1.0, 0.5]);
        assert_eq!(c.decode_frame(&f, 1).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn exact_codeword_then_zero_residual() {
        let c = codec(vec![
            vec![vec![3.0, 1.0], vec![-2.0, 5.0], vec![0.5, 0.5]],
            vec![vec![0.0, 0.0], vec![0.3, 0.1]],
            vec![vec![0.0, 0.0], vec![0.01, 0.02]],
        ]);
        assert_eq!(c.encode_frame(&[-2.0, 5.0]).unwrap().codes, vec![1, 0, 0]);
        assert_eq!(c.decode_frame(&CodecFrame::new(vec![0, 0, 0]), 3).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let c = codec(vec![vec![vec![-1.0], vec![1.0]]]);
        assert_eq!(c.encode_frame(&[0.0]).unwrap().codes, vec![0]);
    }

    #[test]
    fn errors() {
        let c = codec(vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]]]);
        assert!(matches!(c.encode_frame(&[1.0]), Err(CodecError::Dimension { expected: 2, got: 1 })));
        assert!(matches!(c.decode_frame(&CodecFrame::new(vec![2]), 1), Err(CodecError::CodeOutOfRange { .. })));
        assert!(matches!(c.decode_frame(&CodecFrame::new(vec![0]), 2), Err(CodecError::DecodeDepth { .. })));
        assert!(matches!(fit_codebooks(&[vec![1.0]], 1, 2, 5, 0), Err(CodecError::TooFewFrames { k: 2, got: 1 })));
    }

    #[test]
    fn fit_two_clusters_1d() {
        let pts = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        for seed in 0..20 {
            let c = fit_codebooks(&pts, 1, 2, 20, seed).unwrap();
            let mut cs: Vec<f64> = c.codebooks()[0].rows().map(|r| r[0]).collect();
            cs.sort_by(f64::total_cmp);
            assert!((cs[0] - 0.5).abs() < 1e-9, "seed {seed}: {cs:?}");
            assert!((cs[1] - 10.5).abs() < 1e-9, "seed {seed}: {cs:?}");
        }
    }

    #[test]
    fn fit_identical_frames_single_centroid() {
        let pts = vec![vec![2.0, -1.0]; 6];
        let (c, rep) = fit_codebooks_with(&pts, 1, 1, 3, 9, Execution::Sequential).unwrap();
        assert_eq!(c.codebooks()[0].entry(0), &[2.0, -1.0]);
        assert_eq!(*rep.mse_per_depth[0].last().unwrap(), 0.0);
    }

    #[test]
    fn empty_clusters_are_reseeded() {
        // three identical points, K = 3: k-means++ duplicates the centroid,
        // two clusters go empty and get reseeded from data points
        let pts = vec![vec![1.0], vec![1.0], vec![1.0], vec![4.0]];
        let c = fit_codebooks(&pts, 1, 3, 10, 1).unwrap();
        let rows: Vec<f64> = c.codebooks()[0].rows().map(|r| r[0]).collect();
        assert!(rows.iter().all(|x| *x == 1.0 || *x == 4.0), "{rows:?}");
        assert!(rows.contains(&4.0));
    }

    #[test]
    fn json_round_trip_and_version_required() {
        let c = RvqCodec::seeded_random(3, 4, 2, 5).unwrap();
        let back = RvqCodec::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let no_version = c.to_json().replace("\"version\":1,", "");
        assert!(RvqCodec::from_json(&no_version).is_err());
        let bad_version = c.to_json().replace("\"version\":1", "\"version\":9");
        assert_eq!(RvqCodec::from_json(&bad_version), Err(CodecError::Version(9)));
    }

    #[test]
    fn mock_embedding_deterministic() {
        assert_eq!(mock_embedding("a", 3, 4), mock_embedding("a", 3, 4));
        assert_ne!(mock_embedding("a", 3, 4), mock_embedding("a", 4, 4));
    }
}
