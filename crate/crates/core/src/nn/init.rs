//! Weight initialization.

use rand::Rng;

use crate::real::Real;
use crate::rng::{stream_rng, STREAM_INIT};

/// He-uniform bound for a layer with `fan_in` inputs per output unit:
/// `sqrt(6 / fan_in)`. Suits ReLU stacks; keeps activation variance roughly
/// constant through depth.
pub fn he_uniform(fan_in: usize) -> f64 {
    num_traits::Float::sqrt(6.0 / fan_in as f64)
}

/// Fills `weights` with He-uniform samples drawn in f64 on the init stream
/// `(seed, layer_index)`, then cast to `T`. Drawing in f64 keeps f32 and f64
/// networks initialized from the same underlying sequence.
pub(crate) fn fill_he_uniform<T: Real>(
    weights: &mut [T],
    fan_in: usize,
    seed: u64,
    layer_index: u64,
) {
    let limit = he_uniform(fan_in);
    let mut rng = stream_rng(seed, STREAM_INIT, layer_index);
    for w in weights.iter_mut() {
        *w = T::from_f64(rng.gen_range(-limit..limit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn bound_matches_fan_in() {
        assert!((he_uniform(6) - 1.0).abs() < 1e-12);
        assert!((he_uniform(24) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn samples_respect_bound_and_vary() {
        let mut w = vec![0.0f32; 4096];
        fill_he_uniform(&mut w, 25, 5, 0);
        let limit = he_uniform(25) as f32;
        assert!(w.iter().all(|v| v.abs() < limit));
        let mean: f32 = w.iter().sum::<f32>() / w.len() as f32;
        assert!(mean.abs() < 0.02, "mean {mean} should be near zero");
    }
}
