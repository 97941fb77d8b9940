use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

pub fn relu<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient where the forward input was positive.
pub fn relu_backward<T: Float>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.zip_map(x, "relu_backward", |g, v| if v > T::zero() { g } else { T::zero() })
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

/// Backward given the forward *output* `s`: `grad · s(1 − s)`.
pub fn sigmoid_backward<T: Float>(s: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.zip_map(s, "sigmoid_backward", |g, s| g * s * (T::one() - s))
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T: Float> {
    input: Option<Tensor<T>>,
}

impl<T: Float> Relu<T> {
    pub fn new() -> Self {
        Relu { input: None }
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = relu(&x);
        self.input = Some(x);
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::invalid("relu_backward", "no cached forward input"))?;
        relu_backward(&x, grad_out)
    }

    /// Which entries of the cached input were positive.
    pub fn pattern(&self) -> Option<Vec<bool>> {
        self.input.as_ref().map(|x| x.data().iter().map(|v| *v > T::zero()).collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<T: Float> {
    output: Option<Tensor<T>>,
}

impl<T: Float> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { output: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = sigmoid(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self
            .output
            .take()
            .ok_or_else(|| Error::invalid("sigmoid_backward", "no cached forward output"))?;
        sigmoid_backward(&s, grad_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_values((1, 1, 1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn relu_values_and_mask() {
        assert_eq!(relu(&t(&[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&t(&[-1.0, 2.0]), &t(&[5.0, 7.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 7.0]);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(&t(&[0.0])).data(), &[0.5]);
        let big = sigmoid(&Tensor::<f32>::from_values((1, 1, 1, 2), vec![100.0, -100.0]).unwrap());
        assert!(big.data().iter().all(|v| v.is_finite()));
        assert!((big.data()[0] - 1.0).abs() < 1e-6);
        assert!(big.data()[1] >= 0.0 && big.data()[1] < 1e-6);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Keep ReLU inputs away from the kink.
        let x: Vec<f64> = (0..32)
            .map(|_| {
                let v: f64 = rng.random_range(0.05..2.0);
                if rng.random_bool(0.5) { v } else { -v }
            })
            .collect();
        let probe: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::from_values((1, 2, 4, 4), x).unwrap();
        let p = Tensor::from_values((1, 2, 4, 4), probe).unwrap();
        let h = 1e-5;
        let dot = |y: Tensor<f64>| -> f64 { y.data().iter().zip(p.data()).map(|(a, b)| a * b).sum() };

        let g_relu = relu_backward(&x, &p).unwrap();
        let g_sig = sigmoid_backward(&sigmoid(&x), &p).unwrap();
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (dot(relu(&xp)) - dot(relu(&xm))) / (2.0 * h);
            assert!((fd - g_relu.data()[i]).abs() <= 1e-4 * fd.abs().max(1e-6));
            let fd = (dot(sigmoid(&xp)) - dot(sigmoid(&xm))) / (2.0 * h);
            let a = g_sig.data()[i];
            assert!((fd - a).abs() / fd.abs().max(a.abs()).max(1e-6) < 1e-4);
        }
    }
}
