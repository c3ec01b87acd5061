//! ADAM parameter updates with bias-corrected moment estimates.

use super::scalar::Scalar;
use super::NumericsError;

/// Optimizer hyperparameters. The learning rate is passed per step so a
/// schedule can change it without touching optimizer state.
#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment buffers and step counter for one parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![T::ZERO; len], v: vec![T::ZERO; len], t: 0 }
    }

    /// In-place update of `param` from `grad`. `name` identifies the
    /// parameter in diagnostics when a non-finite gradient shows up.
    pub fn step(
        &mut self,
        hp: &AdamParams,
        name: &str,
        param: &mut [T],
        grad: &[T],
    ) -> Result<(), NumericsError> {
        debug_assert_eq!(param.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NumericsError::NonFiniteGradient { name: name.to_string() });
        }
        self.t += 1;
        let b1 = T::from_f64(hp.beta1);
        let b2 = T::from_f64(hp.beta2);
        let one_m_b1 = T::from_f64(1.0 - hp.beta1);
        let one_m_b2 = T::from_f64(1.0 - hp.beta2);
        // Fold the bias corrections into a single scaled step size.
        let corr1 = 1.0 - hp.beta1.powi(self.t as i32);
        let corr2 = 1.0 - hp.beta2.powi(self.t as i32);
        let step = T::from_f64(hp.lr / corr1);
        let vscale = T::from_f64(1.0 / corr2.sqrt());
        let eps = T::from_f64(hp.eps);
        for i in 0..param.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + one_m_b1 * g;
            self.v[i] = b2 * self.v[i] + one_m_b2 * g * g;
            param[i] -= step * self.m[i] / (self.v[i].sqrt() * vscale + eps);
        }
        Ok(())
    }
}
