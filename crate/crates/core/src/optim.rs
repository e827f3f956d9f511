//! Gradient-descent updates and global-norm clipping.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adaptive moment estimation.
    #[default]
    Adam,
    /// Plain stochastic gradient descent.
    Sgd,
}

/// Update rule with its per-parameter state.
#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Adam(Adam<T>),
    Sgd { learning_rate: T },
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: T, len: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(learning_rate, len)),
            OptimizerKind::Sgd => Optimizer::Sgd { learning_rate },
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        match self {
            Optimizer::Adam(adam) => adam.step(params, grads),
            Optimizer::Sgd { learning_rate } => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p = *p - *learning_rate * g;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    first: Vec<T>,
    second: Vec<T>,
    steps: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(learning_rate: T, len: usize) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            first: vec![T::zero(); len],
            second: vec![T::zero(); len],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), self.first.len());
        debug_assert_eq!(grads.len(), self.first.len());
        self.steps += 1;
        let one = T::one();
        let correction1 = one - self.beta1.powi(self.steps);
        let correction2 = one - self.beta2.powi(self.steps);
        for i in 0..params.len() {
            let g = grads[i];
            self.first[i] = self.beta1 * self.first[i] + (one - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (one - self.beta2) * g * g;
            let m_hat = self.first[i] / correction1;
            let v_hat = self.second[i] / correction2;
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Rescales every gradient so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(groups: &mut [&mut [T]], max_norm: T) -> T {
    let norm = groups
        .iter()
        .flat_map(|g| g.iter())
        .map(|&g| g * g)
        .sum::<T>()
        .sqrt();
    if norm > max_norm && norm > T::zero() {
        let scale = max_norm / norm;
        for g in groups.iter_mut().flat_map(|g| g.iter_mut()) {
            *g = *g * scale;
        }
    }
    norm
}
