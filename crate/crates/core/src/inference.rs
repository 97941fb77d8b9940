//! Test-time prediction with border extension, two-model fusion and
//! probability-map export.

use std::path::Path;

use crate::data::{read_pnm, write_pnm, Pnm};
use crate::error::{Error, Result};
use crate::network::NetworkGraph;
use crate::tensor::{Float, Shape, Tensor};

pub const DEFAULT_BORDER: usize = 10;
pub const DEFAULT_GAMMA: f64 = 0.5;

/// A single-channel probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// Free-form origin note (model, border extension, fusion).
    pub tag: String,
}

impl ProbMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width || height == 0 || width == 0 {
            return Err(Error::invalid(
                "probmap",
                format!("{} values for a {height}x{width} map", data.len()),
            ));
        }
        Ok(ProbMap {
            height,
            width,
            data,
            tag: String::new(),
        })
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// First plane of a `(1, 1, H, W)` tensor.
    pub fn from_tensor<T: Float>(t: &Tensor<T>) -> Result<Self> {
        let s = t.shape();
        ProbMap::new(s.h, s.w, t.plane(0, 0).iter().map(|v| v.as_f64()).collect())
    }
}

/// Pads every side by `border` pixels, replicating the nearest edge pixel.
pub fn pad_replicate<T: Float>(x: &Tensor<T>, border: usize) -> Tensor<T> {
    if border == 0 {
        return x.clone();
    }
    let s = x.shape();
    let (h, w) = (s.h + 2 * border, s.w + 2 * border);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, h, w)).expect("valid shape");
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                let sy = y.saturating_sub(border).min(s.h - 1);
                for xx in 0..w {
                    let sx = xx.saturating_sub(border).min(s.w - 1);
                    dst[y * w + xx] = src[sy * s.w + sx];
                }
            }
        }
    }
    out
}

/// Central `(h, w)` crop offset by `border` on each side.
pub fn crop<T: Float>(x: &Tensor<T>, border: usize, h: usize, w: usize) -> Tensor<T> {
    if border == 0 && (x.shape().h, x.shape().w) == (h, w) {
        return x.clone();
    }
    let s = x.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, h, w)).expect("valid shape");
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                let row = (y + border) * s.w + border;
                dst[y * w..(y + 1) * w].copy_from_slice(&src[row..row + w]);
            }
        }
    }
    out
}

/// Border-extended inference pass on a `(1, C, H, W)` image.
pub fn predict<T: Float>(graph: &NetworkGraph<T>, image: &Tensor<T>, border: usize) -> Result<ProbMap> {
    let s = image.shape();
    if s.n != 1 {
        return Err(Error::invalid("predict", format!("expected one image, got batch {}", s.n)));
    }
    let padded = pad_replicate(image, border);
    let out = graph.infer(&padded)?;
    let map = ProbMap::from_tensor(&crop(&out, border, s.h, s.w))?;
    Ok(map.with_tag(format!("border={border}")))
}

/// `gamma · a + (1 − gamma) · b` per pixel.
pub fn fuse(a: &ProbMap, b: &ProbMap, gamma: f64) -> Result<ProbMap> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("fuse", format!("gamma {gamma} outside [0, 1]")));
    }
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::invalid(
            "fuse",
            format!("{}x{} vs {}x{}", a.height, a.width, b.height, b.width),
        ));
    }
    let data = if gamma == 1.0 {
        a.data.clone()
    } else if gamma == 0.0 {
        b.data.clone()
    } else {
        a.data.iter().zip(&b.data).map(|(&p, &q)| gamma * p + (1.0 - gamma) * q).collect()
    };
    Ok(ProbMap::new(a.height, a.width, data)?.with_tag(format!("fuse(gamma={gamma})")))
}

/// 16-bit samples `round(p · 65535)`.
pub fn quantize(map: &ProbMap) -> Pnm {
    Pnm::gray(
        map.width,
        map.height,
        65535,
        map.data.iter().map(|&p| (p.clamp(0.0, 1.0) * 65535.0).round() as u16).collect(),
    )
}

pub fn export_probmap(map: &ProbMap, path: &Path) -> Result<()> {
    write_pnm(&quantize(map), path)
}

/// Reads any gray PNM as probabilities `value / maxval`.
pub fn import_probmap(path: &Path) -> Result<ProbMap> {
    let img = read_pnm(path)?;
    if img.channels != 1 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "probability maps must be gray".into(),
        });
    }
    let scale = img.maxval as f64;
    let tag = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(ProbMap::new(img.height, img.width, img.data.iter().map(|&v| v as f64 / scale).collect())?.with_tag(tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use crate::network::NetworkConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(h: usize, w: usize, seed: u64) -> ProbMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ProbMap::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn fuse_arithmetic_and_endpoints() {
        let a = ProbMap::new(1, 1, vec![0.4]).unwrap();
        let b = ProbMap::new(1, 1, vec![0.8]).unwrap();
        assert!((fuse(&a, &b, 0.5).unwrap().data[0] - 0.6).abs() < 1e-12);
        let (a, b) = (random_map(9, 7, 1), random_map(9, 7, 2));
        assert_eq!(fuse(&a, &b, 1.0).unwrap().data, a.data);
        assert_eq!(fuse(&a, &b, 0.0).unwrap().data, b.data);
        let mid = fuse(&a, &b, 0.3).unwrap();
        for ((&m, &p), &q) in mid.data.iter().zip(&a.data).zip(&b.data) {
            assert!(m >= p.min(q) && m <= p.max(q));
        }
        for (m, p) in fuse(&a, &a, 0.37).unwrap().data.iter().zip(&a.data) {
            assert!((m - p).abs() <= 1e-15);
        }
        assert!(fuse(&a, &random_map(3, 3, 0), 0.5).is_err());
        assert!(fuse(&a, &b, 1.5).is_err());
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let mut m = random_map(13, 11, 4);
        m.data[0] = 0.0;
        m.data[1] = 1.0;
        export_probmap(&m, &p).unwrap();
        let q = quantize(&m);
        assert_eq!((q.data[0], q.data[1]), (0, 65535));
        let back = import_probmap(&p).unwrap();
        for (a, b) in m.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 1.0 / 131070.0 + 1e-15);
        }
        let p2 = dir.path().join("m2.pgm");
        export_probmap(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn pad_then_crop_is_identity() {
        let x = Tensor::<f32>::from_values((1, 2, 3, 4), (0..24).map(|v| v as f32).collect()).unwrap();
        let p = pad_replicate(&x, 2);
        assert_eq!(p.shape().dims(), [1, 2, 7, 8]);
        assert_eq!(p.at(0, 0, 0, 0), 0.0);
        assert_eq!(p.at(0, 1, 6, 7), 23.0);
        assert_eq!(crop(&p, 2, 3, 4), x);
    }

    #[test]
    fn predict_keeps_dims_and_is_deterministic() {
        let cfg = NetworkConfig::narrow(64);
        let mut g = NetworkGraph::<f32>::new(cfg, 3).unwrap();
        g.set_mode(Mode::Infer);
        let x = Tensor::<f32>::full((1, 3, 40, 33), 0.5).unwrap();
        for border in [0, 10] {
            let m = predict(&g, &x, border).unwrap();
            assert_eq!((m.height, m.width), (40, 33));
            assert_eq!(m, predict(&g, &x, border).unwrap());
            assert!(m.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
