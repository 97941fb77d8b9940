//! Image and label ingestion, consensus, resizing, augmentation and
//! iteration order.
//!
//! The pipeline order is fixed: consensus over the original annotations
//! first, then resize, then augment.

pub mod pnm;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::tensor::{Float, Shape, Tensor};

pub use pnm::{encode_pnm, parse_pnm, read_pnm, write_pnm, Pnm};
pub use synthetic::{disk_outline_sample, generate_synthetic, shape_sample, Shape2d};

/// Image `(1, 3, H, W)` in [0, 1], scaled by the file's maxval. Gray files
/// are replicated to three channels.
pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    let img = read_pnm(path)?;
    let (h, w) = (img.height, img.width);
    let scale = 1.0 / img.maxval as f32;
    let mut out = vec![0.0f32; 3 * h * w];
    for c in 0..3 {
        let src = if img.channels == 3 { c } else { 0 };
        for i in 0..h * w {
            out[c * h * w + i] = img.data[i * img.channels + src] as f32 * scale;
        }
    }
    Tensor::from_values((1, 3, h, w), out)
}

/// Binary map `(1, 1, H, W)`: a pixel is positive when its value is at least
/// half the file's maxval. Color files use their first channel.
pub fn load_gt(path: &Path) -> Result<Tensor<f32>> {
    let img = read_pnm(path)?;
    let half = img.maxval as f64 / 2.0;
    let vals = img
        .data
        .iter()
        .step_by(img.channels)
        .map(|&v| if v as f64 >= half { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_values((1, 1, img.height, img.width), vals)
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Tensor<f32>,
    pub annotations: Vec<Tensor<f32>>,
}

/// A sample reduced to one label map.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub id: String,
    pub image: Tensor<f32>,
    pub gt: Tensor<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusMode {
    /// Positive iff at least `threshold` annotators mark the pixel.
    Over3,
    /// Union of all annotations.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsensusPolicy {
    pub mode: ConsensusMode,
    pub threshold: usize,
}

impl ConsensusPolicy {
    pub const fn over3() -> Self {
        ConsensusPolicy {
            mode: ConsensusMode::Over3,
            threshold: 3,
        }
    }

    pub const fn all() -> Self {
        ConsensusPolicy {
            mode: ConsensusMode::All,
            threshold: 1,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "over3" => Ok(Self::over3()),
            "all" => Ok(Self::all()),
            other => Err(Error::Config(format!("unknown consensus policy `{other}` (over3 | all)"))),
        }
    }

    fn votes_needed(&self) -> usize {
        match self.mode {
            ConsensusMode::Over3 => self.threshold.max(1),
            ConsensusMode::All => 1,
        }
    }
}

pub fn consensus<T: Float>(annotations: &[Tensor<T>], policy: ConsensusPolicy) -> Result<Tensor<T>> {
    let first = annotations
        .first()
        .ok_or_else(|| Error::invalid("consensus", "no annotations"))?;
    let mut votes = vec![0usize; first.len()];
    for a in annotations {
        if a.shape() != first.shape() {
            return Err(Error::ShapeMismatch {
                op: "consensus",
                left: first.shape(),
                right: a.shape(),
            });
        }
        for (v, x) in votes.iter_mut().zip(a.data()) {
            if *x > T::zero() {
                *v += 1;
            }
        }
    }
    let need = policy.votes_needed();
    Ok(Tensor::from_values(
        first.shape(),
        votes.iter().map(|&v| if v >= need { T::one() } else { T::zero() }).collect(),
    )?)
}

/// Align-corners source coordinate of output index `i`.
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 || n_in == 1 {
        0.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Bilinear resize (align-corners) to any size, growing or shrinking.
pub fn resize_bilinear<T: Float>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if (s.h, s.w) == (h, w) {
        return Ok(x.clone());
    }
    let out_shape = Shape::new(s.n, s.c, h, w);
    let mut out = Tensor::zeros(out_shape)?;
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|i| {
                let c = source_coord(i, n_in, n_out);
                let lo = (c.floor() as usize).min(n_in - 1);
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, c - lo as f64)
            })
            .collect()
    };
    let (rows, cols) = (axis(s.h, h), axis(s.w, w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
                    let at = |y: usize, xx: usize| src[y * s.w + xx].as_f64();
                    let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
                    let bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
                    dst[oy * w + ox] = T::from_f64(top + (bot - top) * fy);
                }
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbor resize using pixel-center sampling.
pub fn resize_nearest<T: Float>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if (s.h, s.w) == (h, w) {
        return Ok(x.clone());
    }
    let pick = |i: usize, n_in: usize, n_out: usize| ((2 * i + 1) * n_in / (2 * n_out)).min(n_in - 1);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, h, w))?;
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..h {
                let y = pick(oy, s.h, h);
                for ox in 0..w {
                    dst[oy * w + ox] = src[y * s.w + pick(ox, s.w, w)];
                }
            }
        }
    }
    Ok(out)
}

fn binarize<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let half = T::from_f64(0.5);
    x.map(|v| if v >= half { T::one() } else { T::zero() })
}

/// Image bilinearly, labels by nearest neighbor and re-binarized.
pub fn resize_sample(s: &LabeledSample, h: usize, w: usize) -> Result<LabeledSample> {
    Ok(LabeledSample {
        id: s.id.clone(),
        image: resize_bilinear(&s.image, h, w)?,
        gt: binarize(&resize_nearest(&s.gt, h, w)?),
    })
}

/// Consensus, then resize (when `size` is given).
pub fn prepare(s: &Sample, policy: ConsensusPolicy, size: Option<(usize, usize)>) -> Result<LabeledSample> {
    let labeled = LabeledSample {
        id: s.id.clone(),
        image: s.image.clone(),
        gt: consensus(&s.annotations, policy)?,
    };
    match size {
        Some((h, w)) => resize_sample(&labeled, h, w),
        None => Ok(labeled),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentSpec {
    /// Allowed rotations in quarter turns (0..4); 0 is always allowed.
    pub rotations: Vec<u8>,
    pub horizontal_flip: bool,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn none(seed: u64) -> Self {
        AugmentSpec {
            rotations: vec![0],
            horizontal_flip: false,
            seed,
        }
    }

    pub fn full(seed: u64) -> Self {
        AugmentSpec {
            rotations: vec![0, 1, 2, 3],
            horizontal_flip: true,
            seed,
        }
    }

    fn turns(&self) -> Vec<u8> {
        let mut t: Vec<u8> = self.rotations.iter().map(|r| r % 4).collect();
        t.push(0);
        t.sort_unstable();
        t.dedup();
        t
    }
}

/// Counter-clockwise quarter turns, then an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Transform {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl AugmentSpec {
    /// The transform used at `iteration`, uniform over the product set.
    pub fn choose(&self, iteration: u64) -> Transform {
        let turns = self.turns();
        let flips: &[bool] = if self.horizontal_flip { &[false, true] } else { &[false] };
        let mut rng = stream(self.seed, Purpose::Augment, iteration, 0);
        let k = rng.random_range(0..turns.len() * flips.len());
        Transform {
            quarter_turns: turns[k / flips.len()],
            flip: flips[k % flips.len()],
        }
    }
}

fn rotate90<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c, s.w, s.h);
    let mut out = Tensor::zeros(out_shape).expect("valid shape");
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            // counter-clockwise: out[y][x] = in[x][w-1-y]
            for y in 0..s.w {
                for xx in 0..s.h {
                    dst[y * s.h + xx] = src[xx * s.w + (s.w - 1 - y)];
                }
            }
        }
    }
    out
}

fn flip_h<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let mut out = x.clone();
    for n in 0..s.n {
        for c in 0..s.c {
            for row in out.plane_mut(n, c).chunks_mut(s.w) {
                row.reverse();
            }
        }
    }
    out
}

pub fn apply_transform<T: Float>(x: &Tensor<T>, t: Transform) -> Tensor<T> {
    let mut y = x.clone();
    for _ in 0..t.quarter_turns % 4 {
        y = rotate90(&y);
    }
    if t.flip {
        y = flip_h(&y);
    }
    y
}

/// Same transform on the image and its labels.
pub fn augment(s: &LabeledSample, spec: &AugmentSpec, iteration: u64) -> LabeledSample {
    let t = spec.choose(iteration);
    LabeledSample {
        id: s.id.clone(),
        image: apply_transform(&s.image, t),
        gt: apply_transform(&s.gt, t),
    }
}

/// Seeded permutation of `0..n` for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Purpose::Shuffle, epoch, 0));
    Ok(order)
}

/// Dataset index visited at a global iteration (batch size 1).
pub fn sample_index(n: usize, seed: u64, iteration: u64) -> Result<usize> {
    let len = n as u64;
    Ok(epoch_order(n, seed, iteration / len.max(1))?[(iteration % len.max(1)) as usize])
}

/// Endless stream of dataset indices, one seeded permutation per epoch.
#[derive(Debug, Clone)]
pub struct EpochIterator {
    n: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

pub fn epoch_iterator(n: usize, seed: u64) -> Result<EpochIterator> {
    Ok(EpochIterator {
        n,
        seed,
        epoch: 0,
        order: epoch_order(n, seed, 0)?,
        pos: 0,
    })
}

impl Iterator for EpochIterator {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.pos == self.n {
            self.epoch += 1;
            self.order = epoch_order(self.n, self.seed, self.epoch).ok()?;
            self.pos = 0;
        }
        self.pos += 1;
        Some(self.order[self.pos - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub gts: Vec<PathBuf>,
}

/// Parses `<id> <image> <gt1>[,<gt2>...]` lines. `#` starts a comment;
/// relative paths resolve against the manifest's directory.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!("line {}: expected `<id> <image> <gt,...>`, got {} fields", lineno + 1, fields.len()),
            });
        }
        let gts: Vec<PathBuf> = fields[2]
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|g| base.join(g))
            .collect();
        if gts.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!("line {}: no ground-truth paths", lineno + 1),
            });
        }
        out.push(ManifestEntry {
            id: fields[0].to_string(),
            image: base.join(fields[1]),
            gts,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn load_sample(entry: &ManifestEntry) -> Result<Sample> {
    let image = load_image(&entry.image)?;
    let annotations = entry.gts.iter().map(|p| load_gt(p)).collect::<Result<Vec<_>>>()?;
    let (h, w) = (image.shape().h, image.shape().w);
    for (a, p) in annotations.iter().zip(&entry.gts) {
        if (a.shape().h, a.shape().w) != (h, w) {
            return Err(Error::Parse {
                path: p.clone(),
                msg: format!("annotation is {}x{}, image is {h}x{w}", a.shape().h, a.shape().w),
            });
        }
    }
    Ok(Sample {
        id: entry.id.clone(),
        image,
        annotations,
    })
}

pub fn load_dataset(manifest: &Path) -> Result<Vec<Sample>> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries.iter().map(load_sample).collect()
}
