//! Hermetic synthetic datasets with exact analytic contours.
//!
//! Each image has four annotators. All four mark the object outline; a faint
//! secondary edge is marked by only two of them, so the two consensus
//! policies disagree on it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::pnm::{write_pnm, Pnm};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ANNOTATORS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape2d {
    Disk,
    Square,
    Ridge,
}

impl Shape2d {
    pub const ALL: [Shape2d; 3] = [Shape2d::Disk, Shape2d::Square, Shape2d::Ridge];

    pub fn name(self) -> &'static str {
        match self {
            Shape2d::Disk => "disk",
            Shape2d::Square => "square",
            Shape2d::Ridge => "ridge",
        }
    }

    /// Whether pixel `(y, x)` of a `size`×`size` grid lies inside the object.
    pub fn inside(self, size: usize, y: usize, x: usize) -> bool {
        let s = size as f64;
        let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
        match self {
            Shape2d::Disk => {
                let r = 0.3 * s;
                let (dy, dx) = (fy - s / 2.0, fx - s / 2.0);
                dy * dy + dx * dx <= r * r
            }
            Shape2d::Square => {
                let (lo, hi) = (0.25 * s, 0.75 * s);
                (lo..hi).contains(&fy) && (lo..hi).contains(&fx)
            }
            Shape2d::Ridge => {
                let c = 0.45 * s;
                (fx - c).abs() <= 0.08 * s
            }
        }
    }
}

/// Inside pixels with at least one in-grid 4-neighbor outside.
pub fn outline(size: usize, inside: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut out = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            if !inside(y, x) {
                continue;
            }
            let nb = [
                (y > 0).then(|| (y - 1, x)),
                (y + 1 < size).then(|| (y + 1, x)),
                (x > 0).then(|| (y, x - 1)),
                (x + 1 < size).then(|| (y, x + 1)),
            ];
            out[y * size + x] = nb.iter().flatten().any(|&(ny, nx)| !inside(ny, nx));
        }
    }
    out
}

/// Dark object on a light ground: `(1, 3, size, size)` image and the
/// `(1, 1, size, size)` outline map.
pub fn shape_sample(shape: Shape2d, size: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let plane = size * size;
    let mut img = Vec::with_capacity(3 * plane);
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size {
                let v = if shape.inside(size, y, x) { 0.2 } else { 0.8 };
                img.push(v + 0.02 * c as f32);
            }
        }
    }
    let gt = outline(size, |y, x| shape.inside(size, y, x));
    Ok((
        Tensor::from_values((1, 3, size, size), img)?,
        Tensor::from_values((1, 1, size, size), gt.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?,
    ))
}

/// The single-image overfit target: a dark disk and its circle outline.
pub fn disk_outline_sample(size: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    shape_sample(Shape2d::Disk, size)
}

fn faint_edge(shape: Shape2d, size: usize) -> usize {
    // a horizontal line well away from the object outline
    match shape {
        Shape2d::Ridge => size / 5,
        _ => size / 10,
    }
}

/// Annotator maps for one image as 8-bit samples in {0, 255}.
fn annotations(shape: Shape2d, size: usize) -> Vec<Vec<u16>> {
    let main = outline(size, |y, x| shape.inside(size, y, x));
    let row = faint_edge(shape, size);
    (0..ANNOTATORS)
        .map(|a| {
            let mut m: Vec<u16> = main.iter().map(|&b| if b { 255 } else { 0 }).collect();
            if a < 2 {
                for x in size / 4..3 * size / 4 {
                    m[row * size + x] = 255;
                }
            }
            m
        })
        .collect()
}

fn image_pixels(shape: Shape2d, size: usize) -> Vec<u16> {
    let row = faint_edge(shape, size);
    let mut data = Vec::with_capacity(3 * size * size);
    for y in 0..size {
        for x in 0..size {
            let base: u16 = if shape.inside(size, y, x) { 50 } else { 205 };
            let faint = if y >= row && (size / 4..3 * size / 4).contains(&x) && !shape.inside(size, y, x) {
                12
            } else {
                0
            };
            for c in 0..3u16 {
                data.push(base - faint + 5 * c);
            }
        }
    }
    data
}

/// Writes `disk`, `square` and `ridge` images plus four annotator maps each,
/// and a `manifest.txt` listing them. Returns the manifest path.
pub fn generate_synthetic(dir: &Path, size: usize) -> Result<PathBuf> {
    if size < 8 {
        return Err(Error::invalid("generate_synthetic", format!("size {size} below 8")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# id image annotations\n");
    for shape in Shape2d::ALL {
        let id = shape.name();
        let img = Pnm {
            width: size,
            height: size,
            channels: 3,
            maxval: 255,
            data: image_pixels(shape, size),
        };
        write_pnm(&img, &dir.join(format!("{id}.ppm")))?;
        let mut gts = Vec::new();
        for (a, m) in annotations(shape, size).into_iter().enumerate() {
            let name = format!("{id}_gt{}.pgm", a + 1);
            write_pnm(&Pnm::gray(size, size, 255, m), &dir.join(&name))?;
            gts.push(name);
        }
        manifest.push_str(&format!("{id} {id}.ppm {}\n", gts.join(",")));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_outline_is_a_closed_thin_ring() {
        let (img, gt) = disk_outline_sample(64).unwrap();
        assert_eq!(img.shape().dims(), [1, 3, 64, 64]);
        let pos = gt.data().iter().filter(|&&v| v == 1.0).count();
        // circumference 2π·19.2 ≈ 121; a 4-connected outline is a bit longer
        assert!((100..200).contains(&pos), "{pos}");
        assert_eq!(gt.at(0, 0, 32, 32), 0.0);
        assert_eq!(gt.at(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn faint_edge_marked_by_two_annotators() {
        let a = annotations(Shape2d::Square, 32);
        let row = faint_edge(Shape2d::Square, 32);
        let idx = row * 32 + 16;
        let votes = a.iter().filter(|m| m[idx] > 0).count();
        assert_eq!(votes, 2);
        let main = outline(32, |y, x| Shape2d::Square.inside(32, y, x));
        let k = main.iter().position(|&b| b).unwrap();
        assert!(a.iter().all(|m| m[k] == 255));
    }
}
