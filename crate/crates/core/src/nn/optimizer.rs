//! Stochastic gradient descent with classical momentum.

use alloc::vec;
use alloc::vec::Vec;

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use super::{ConvGrad, Layer, NetGrads, Network};
use crate::real::Real;

/// Optimizer hyperparameters. The learning rate for epoch `e` (0-based) is
/// `lr0 * decay^e`, computed with an exact integer power so a resumed run
/// sees bit-identical rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr0: 0.1,
            momentum: 0.9,
            decay: 0.96,
        }
    }
}

/// One momentum update over a parameter slice:
///
/// ```text
/// v <- momentum * v - lr * g
/// p <- p + v
/// ```
pub fn sgd_update<T: Real>(params: &mut [T], grads: &[T], velocity: &mut [T], lr: T, momentum: T) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), velocity.len());
    for ((p, &g), v) in params.iter_mut().zip(grads.iter()).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p = *p + *v;
    }
}

/// Momentum state mirroring a network's parameters, plus the epoch counter
/// that drives the learning-rate schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdMomentum<T> {
    config: OptimizerConfig,
    epoch: usize,
    /// Velocity buffers; `Some` at conv-layer indices, like [`NetGrads`].
    velocity: Vec<Option<ConvGrad<T>>>,
}

impl<T: Real> SgdMomentum<T> {
    pub fn new(config: OptimizerConfig, net: &Network<T>) -> Self {
        let velocity = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Some(ConvGrad {
                    dw: vec![T::zero(); c.weights.len()],
                    db: vec![T::zero(); c.bias.len()],
                }),
                Layer::MaxPool2 => None,
            })
            .collect();
        SgdMomentum {
            config,
            epoch: 0,
            velocity,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Learning rate for the current epoch: `lr0 * decay^epoch`.
    pub fn learning_rate(&self) -> f64 {
        self.config.lr0 * self.config.decay.powi(self.epoch as i32)
    }

    /// Applies one update step with the current epoch's learning rate.
    pub fn step(&mut self, net: &mut Network<T>, grads: &NetGrads<T>) {
        let lr = T::from_f64(self.learning_rate());
        let momentum = T::from_f64(self.config.momentum);
        for (layer, (vel, grad)) in net
            .layers_mut()
            .iter_mut()
            .zip(self.velocity.iter_mut().zip(grads.per_layer.iter()))
        {
            if let (Layer::Conv(c), Some(v), Some(g)) = (layer, vel.as_mut(), grad.as_ref()) {
                sgd_update(c.weights.data_mut(), &g.dw, &mut v.dw, lr, momentum);
                sgd_update(c.bias.data_mut(), &g.db, &mut v.db, lr, momentum);
            }
        }
    }

    /// Advances the learning-rate schedule by one epoch.
    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Restores the epoch counter (used when resuming from a checkpoint).
    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn velocity(&self) -> &[Option<ConvGrad<T>>] {
        &self.velocity
    }

    pub fn velocity_mut(&mut self) -> &mut [Option<ConvGrad<T>>] {
        &mut self.velocity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_parameter_update() {
        let mut p = [1.0f64];
        let g = [1.0f64];
        let mut v = [0.0f64];
        sgd_update(&mut p, &g, &mut v, 0.1, 0.9);
        assert_eq!(v[0], -0.1);
        assert_eq!(p[0], 0.9);
        // Second step with the same gradient: v = 0.9*(-0.1) - 0.1 = -0.19.
        sgd_update(&mut p, &g, &mut v, 0.1, 0.9);
        assert!((v[0] + 0.19).abs() < 1e-15);
        assert!((p[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn learning_rate_schedule_is_exact_power() {
        let net: Network<f32> = Network::detector(1);
        let mut opt = SgdMomentum::new(OptimizerConfig::default(), &net);
        assert_eq!(opt.learning_rate(), 0.1);
        for _ in 0..7 {
            opt.end_epoch();
        }
        assert_eq!(opt.learning_rate(), 0.1 * 0.96f64.powi(7));
    }
}
