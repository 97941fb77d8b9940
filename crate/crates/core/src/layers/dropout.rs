//! Inverted dropout with masks keyed by (seed, layer, iteration).

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::rng::{stream, Purpose};
use crate::tensor::{Float, Tensor};

pub const DEFAULT_RATE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Dropout<T: Float> {
    pub rate: f64,
    pub seed: u64,
    pub layer_id: u64,
    mask: Option<Vec<T>>,
}

/// Per-entry multipliers: `0` for dropped entries, `1 / (1 − rate)` for survivors.
pub fn dropout_mask<T: Float>(len: usize, rate: f64, seed: u64, layer_id: u64, iteration: u64) -> Vec<T> {
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mut rng = stream(seed, Purpose::Dropout, layer_id, iteration);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid("dropout", format!("rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Pure dropout; returns the output and the mask that produced it (`None` when
/// the layer is an identity).
pub fn dropout<T: Float>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    seed: u64,
    layer_id: u64,
    iteration: u64,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    check_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mask = dropout_mask::<T>(x.len(), rate, seed, layer_id, iteration);
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= *m;
    }
    Ok((y, Some(mask)))
}

impl<T: Float> Dropout<T> {
    pub fn new(rate: f64, seed: u64, layer_id: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Dropout {
            rate,
            seed,
            layer_id,
            mask: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, iteration: u64) -> Result<Tensor<T>> {
        let (y, mask) = dropout(x, self.rate, mode, self.seed, self.layer_id, iteration)?;
        self.mask = mask;
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        match self.mask.take() {
            None => Ok(grad_out.clone()),
            Some(mask) => {
                if mask.len() != grad_out.len() {
                    return Err(Error::invalid("dropout_backward", "mask/gradient length mismatch"));
                }
                let mut g = grad_out.clone();
                for (v, m) in g.data_mut().iter_mut().zip(&mask) {
                    *v *= *m;
                }
                Ok(g)
            }
        }
    }
}
