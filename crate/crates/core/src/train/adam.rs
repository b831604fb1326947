use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LR: f64 = 0.001;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam over a fixed list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the `grad` attached to each tensor.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| p.grad.is_none()) {
            return Err(Error::Contract(format!("parameter {i} has no gradient")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad.take().expect("checked above");
            if grad.len() != p.len() {
                return Err(Error::shape(format!("gradient of length {} for {:?}", grad.len(), p.shape())));
            }
            for (((x, g), m), v) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad = Some(grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_grad(value: f64, grad: f64) -> Tensor {
        let mut t = Tensor::scalar(value);
        t.grad = Some(vec![grad]);
        t
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![with_grad(1.5, 0.0)];
        let mut adam = AdamState::new(&params, DEFAULT_LR);
        for _ in 0..5 {
            adam.step(&mut params).unwrap();
        }
        assert_eq!(params[0].data(), &[1.5]);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε).
        let g = 0.37;
        let mut params = vec![with_grad(0.0, g)];
        let mut adam = AdamState::new(&params, DEFAULT_LR);
        adam.step(&mut params).unwrap();
        let expected = -DEFAULT_LR * g / (g + EPSILON);
        assert!((params[0].data()[0] - expected).abs() < 1e-15);
        assert!((params[0].data()[0] + DEFAULT_LR).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut adam = AdamState::new(&params, 0.01);
        for _ in 0..2000 {
            let x = params[0].data()[0];
            params[0].grad = Some(vec![2.0 * (x - 2.0)]);
            adam.step(&mut params).unwrap();
        }
        assert!((params[0].data()[0] - 2.0).abs() < 0.01, "{:?}", params[0].data());
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut adam = AdamState::new(&params, DEFAULT_LR);
        assert!(matches!(adam.step(&mut params), Err(Error::Contract(_))));
    }
}
