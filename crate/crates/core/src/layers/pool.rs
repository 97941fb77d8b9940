//! Non-overlapping 2×2 max pooling with floor semantics.

use crate::error::{Error, Result};
use crate::tensor::{Float, Shape, Tensor};

/// Flat input index of the winning element for each output element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Shape,
    pub argmax: Vec<usize>,
}

/// Odd trailing rows/columns are dropped. Ties go to the first element in
/// row-major order within the window.
pub fn maxpool2x2<T: Float>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let s = x.shape();
    if s.h < 2 || s.w < 2 {
        return Err(Error::invalid(
            "maxpool2x2",
            format!("input {s} is smaller than the 2x2 window"),
        ));
    }
    let (ho, wo) = (s.h / 2, s.w / 2);
    let os = s.with_spatial(ho, wo);
    let mut out = Vec::with_capacity(os.len());
    let mut argmax = Vec::with_capacity(os.len());
    let data = x.data();
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * s.plane();
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * s.w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * s.w + 2 * ox + dx;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(os, out),
        PoolIndices {
            input_shape: s,
            argmax,
        },
    ))
}

/// Routes each upstream gradient entry to its stored argmax position.
pub fn maxpool_backward<T: Float>(grad_out: &Tensor<T>, idx: &PoolIndices) -> Result<Tensor<T>> {
    if grad_out.len() != idx.argmax.len() {
        return Err(Error::invalid(
            "maxpool_backward",
            format!("{} gradients for {} pooled outputs", grad_out.len(), idx.argmax.len()),
        ));
    }
    let mut gx = vec![T::zero(); idx.input_shape.len()];
    for (&g, &i) in grad_out.data().iter().zip(&idx.argmax) {
        gx[i] += g;
    }
    Ok(Tensor::from_parts(idx.input_shape, gx))
}

#[derive(Debug, Clone, Default)]
pub struct MaxPool2x2 {
    indices: Option<PoolIndices>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        MaxPool2x2 { indices: None }
    }

    pub fn forward<T: Float>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, idx) = maxpool2x2(x)?;
        self.indices = Some(idx);
        Ok(y)
    }

    pub fn backward<T: Float>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let idx = self
            .indices
            .take()
            .ok_or_else(|| Error::invalid("maxpool_backward", "no cached argmax"))?;
        maxpool_backward(grad_out, &idx)
    }

    /// Winning input indices of the cached forward pass.
    pub fn argmax(&self) -> Option<&[usize]> {
        self.indices.as_ref().map(|i| i.argmax.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_max() {
        let x = Tensor::<f32>::from_values((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2x2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let g = Tensor::from_values((1, 1, 1, 1), vec![10.0]).unwrap();
        let gx = maxpool_backward(&g, &idx).unwrap();
        assert_eq!(gx.data(), &[0.0, 0.0, 0.0, 10.0]);
    }

    #[test]
    fn floor_semantics_and_errors() {
        let x = Tensor::<f32>::ones((1, 2, 5, 5)).unwrap();
        let (y, _) = maxpool2x2(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 2, 2));
        assert!(maxpool2x2(&Tensor::<f32>::ones((1, 1, 1, 4)).unwrap()).is_err());
    }

    #[test]
    fn ties_pick_first_in_row_major_order() {
        let x = Tensor::<f32>::ones((1, 1, 2, 2)).unwrap();
        let (_, idx) = maxpool2x2(&x).unwrap();
        assert_eq!(idx.argmax, vec![0]);
    }

    proptest! {
        #[test]
        fn backward_conserves_gradient_mass(
            h in 2usize..9, w in 2usize..9,
            vals in prop::collection::vec(-4i32..4, 64), gs in prop::collection::vec(-8i32..8, 16),
        ) {
            let x = Tensor::<f64>::from_values(
                (1, 1, h, w),
                (0..h * w).map(|i| vals[i % vals.len()] as f64).collect(),
            ).unwrap();
            let (y, idx) = maxpool2x2(&x).unwrap();
            let g = Tensor::from_values(y.shape(), (0..y.len()).map(|i| gs[i % gs.len()] as f64).collect()).unwrap();
            let gx = maxpool_backward(&g, &idx).unwrap();
            prop_assert_eq!(gx.sum(), g.sum());
        }
    }
}
