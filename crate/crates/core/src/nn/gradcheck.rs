//! Finite-difference verification of analytic gradients.
//!
//! The checker perturbs sampled parameter coordinates of an f64 network and
//! compares central differences of a caller-supplied scalar objective against
//! the caller's analytic gradients. It is product code (exposed through the
//! CLI) so a trained setup can always be audited in place.

use alloc::vec::Vec;

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::{Layer, NetGrads, Network};
use crate::rng::{stream_rng, STREAM_GRADCHECK};

/// Which parameter bank a checked coordinate lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

impl core::fmt::Display for ParamKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParamKind::Weight => write!(f, "weight"),
            ParamKind::Bias => write!(f, "bias"),
        }
    }
}

/// One audited coordinate.
#[derive(Clone, Copy, Debug)]
pub struct CoordCheck {
    pub layer: usize,
    pub param: ParamKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of a gradient audit.
#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    pub max_rel_err: f64,
    /// Index into `checks` of the worst coordinate, if any were checked.
    pub worst: Option<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        !self.checks.is_empty() && self.max_rel_err < tolerance
    }
}

/// Sampling and stepping knobs for a gradient audit.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub seed: u64,
    /// Weight coordinates sampled per conv layer.
    pub weights_per_layer: usize,
    /// Bias coordinates sampled per conv layer.
    pub biases_per_layer: usize,
    /// Central-difference step.
    pub step: f64,
    /// Restrict the audit to one layer index (as reported by
    /// [`Network::layers`]); `None` audits every conv layer.
    pub layer: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seed: 0,
            weights_per_layer: 8,
            biases_per_layer: 2,
            step: 1e-5,
            layer: None,
        }
    }
}

/// Relative error with a small absolute floor so exact zeros compare clean.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Audits `analytic` against central differences of `objective`.
///
/// `objective` must be a pure function of the network's parameters (same
/// inputs, same reductions on every call); `analytic` must hold the gradient
/// of that objective at the unperturbed parameters.
pub fn check_gradients<F>(
    net: &Network<f64>,
    analytic: &NetGrads<f64>,
    objective: F,
    config: &GradCheckConfig,
) -> GradCheckReport
where
    F: Fn(&Network<f64>) -> f64,
{
    let mut work = net.clone();
    let mut report = GradCheckReport::default();
    let layer_count = net.layers().len();
    for layer_idx in 0..layer_count {
        if config.layer.is_some() && config.layer != Some(layer_idx) {
            continue;
        }
        let (w_len, b_len) = match &net.layers()[layer_idx] {
            Layer::Conv(c) => (c.weights.len(), c.bias.len()),
            Layer::MaxPool2 => continue,
        };
        let grad = analytic.per_layer[layer_idx]
            .as_ref()
            .expect("conv layer must have analytic gradients");
        let mut rng = stream_rng(config.seed, STREAM_GRADCHECK, layer_idx as u64);
        let mut jobs: Vec<(ParamKind, usize)> = Vec::new();
        for _ in 0..config.weights_per_layer.min(w_len) {
            jobs.push((ParamKind::Weight, rng.gen_range(0..w_len)));
        }
        for _ in 0..config.biases_per_layer.min(b_len) {
            jobs.push((ParamKind::Bias, rng.gen_range(0..b_len)));
        }
        for (param, index) in jobs {
            let numeric = central_difference(&mut work, layer_idx, param, index, config.step, &objective);
            let analytic_value = match param {
                ParamKind::Weight => grad.dw[index],
                ParamKind::Bias => grad.db[index],
            };
            let err = rel_err(analytic_value, numeric);
            report.checks.push(CoordCheck {
                layer: layer_idx,
                param,
                index,
                analytic: analytic_value,
                numeric,
                rel_err: err,
            });
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some(report.checks.len() - 1);
            }
        }
    }
    report
}

fn central_difference<F>(
    work: &mut Network<f64>,
    layer: usize,
    param: ParamKind,
    index: usize,
    step: f64,
    objective: &F,
) -> f64
where
    F: Fn(&Network<f64>) -> f64,
{
    let read = |net: &Network<f64>| -> f64 {
        match &net.layers()[layer] {
            Layer::Conv(c) => match param {
                ParamKind::Weight => c.weights.data()[index],
                ParamKind::Bias => c.bias.data()[index],
            },
            Layer::MaxPool2 => unreachable!("pool layers hold no parameters"),
        }
    };
    let write = |net: &mut Network<f64>, v: f64| {
        if let Layer::Conv(c) = &mut net.layers_mut()[layer] {
            match param {
                ParamKind::Weight => c.weights.data_mut()[index] = v,
                ParamKind::Bias => c.bias.data_mut()[index] = v,
            }
        }
    };
    let original = read(work);
    write(work, original + step);
    let plus = objective(work);
    write(work, original - step);
    let minus = objective(work);
    write(work, original);
    (plus - minus) / (2.0 * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::FeatureMaps;

    /// Quadratic objective sum(y^2)/2 over a tiny network; its analytic
    /// gradient comes from the engine's own backward pass.
    #[test]
    fn audit_passes_on_tiny_network() {
        let net: Network<f64> = {
            use crate::nn::{ConvLayer, Layer};
            let mut l1 = ConvLayer::new(1, 3, 3, true);
            let mut l2 = ConvLayer::new(3, 2, 1, false);
            crate::nn::init::fill_he_uniform(l1.weights.data_mut(), 9, 42, 0);
            crate::nn::init::fill_he_uniform(l2.weights.data_mut(), 3, 42, 1);
            Network::new(alloc::vec![
                Layer::Conv(l1),
                Layer::MaxPool2,
                Layer::Conv(l2)
            ])
        };
        let input = {
            let mut rng = stream_rng(7, STREAM_GRADCHECK, 99);
            let data: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            FeatureMaps::from_data(1, 1, 8, 8, data)
        };
        let objective = |n: &Network<f64>| -> f64 {
            let y = n.forward(&input).unwrap();
            y.data.iter().map(|v| v * v).sum::<f64>() / 2.0
        };
        let trace = net.forward_trace(input.clone()).unwrap();
        let dout = FeatureMaps::from_data(
            trace.output().channels,
            trace.output().batch,
            trace.output().height,
            trace.output().width,
            trace.output().data.clone(),
        );
        let mut grads = NetGrads::zeros_for(&net);
        net.backward(&trace, dout, &mut grads, false);
        let report = check_gradients(&net, &grads, objective, &GradCheckConfig::default());
        assert!(
            report.passes(1e-6),
            "max rel err {} on tiny network",
            report.max_rel_err
        );
    }
}
