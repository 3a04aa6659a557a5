//! Throughput probe for the conv engine.
//!
//! Ignored by default because it is a measurement, not a correctness check.
//! Run with:
//!
//! ```text
//! cargo test -p keydet-core --test perf -- --ignored --nocapture
//! ```
//!
//! The number to watch is f32 forward+backward GFLOP/s on a full training
//! batch; the training loop's wall-clock estimates assume this stays in the
//! tens of GFLOP/s on one core.

use std::time::Instant;

use keydet_core::nn::{FeatureMaps, Layer, NetGrads, Network, PATCH_SIZE};

/// Multiply-accumulate count for one forward pass of `net` on one sample.
fn forward_macs(net: &Network<f32>) -> u64 {
    let mut h = PATCH_SIZE;
    let mut w = PATCH_SIZE;
    let mut macs = 0u64;
    for layer in net.layers() {
        match layer {
            Layer::Conv(conv) => {
                let oh = h - conv.kernel + 1;
                let ow = w - conv.kernel + 1;
                macs += (oh * ow * conv.out_ch * conv.in_ch * conv.kernel * conv.kernel) as u64;
                h = oh;
                w = ow;
            }
            Layer::MaxPool2 => {
                h /= 2;
                w /= 2;
            }
        }
    }
    macs
}

#[test]
#[ignore = "throughput measurement, run manually with --nocapture"]
fn detector_training_step_throughput() {
    let batch = 128usize;
    let net = Network::<f32>::detector(7);
    let fwd = forward_macs(&net) * batch as u64;
    // Backward runs the dW GEMM everywhere and the dInput GEMM everywhere
    // except the first layer (the input needs no gradient).
    let first_conv_macs = {
        let mut tmp = 0u64;
        if let Some(Layer::Conv(conv)) = net.layers().first() {
            let o = PATCH_SIZE - conv.kernel + 1;
            tmp = (o * o * conv.out_ch * conv.in_ch * conv.kernel * conv.kernel) as u64;
        }
        tmp * batch as u64
    };
    let bwd = 2 * fwd - first_conv_macs;
    let flops_per_step = 2 * (fwd + bwd);

    let mut input = FeatureMaps::zeros(1, batch, PATCH_SIZE, PATCH_SIZE);
    for (i, v) in input.data.iter_mut().enumerate() {
        *v = ((i * 2654435761) % 1024) as f32 / 512.0 - 1.0;
    }

    let mut grads = NetGrads::zeros_for(&net);
    // Warm up once so page faults and lazy allocations stay out of the timing.
    let trace = net.forward_trace(input.clone()).unwrap();
    let dout = trace.output().clone();
    net.backward(&trace, dout, &mut grads, false);

    let reps = 10;
    let start = Instant::now();
    for _ in 0..reps {
        let trace = net.forward_trace(input.clone()).unwrap();
        let dout = trace.output().clone();
        net.backward(&trace, dout, &mut grads, false);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let gflops = (flops_per_step * reps) as f64 / elapsed / 1e9;
    let per_step_ms = elapsed / reps as f64 * 1e3;
    println!(
        "fwd+bwd batch={batch}: {per_step_ms:.1} ms/step, {gflops:.1} GFLOP/s \
         ({:.1} MFLOP per step)",
        flops_per_step as f64 / 1e6
    );

    // Forward alone, which is what extraction pays.
    let start = Instant::now();
    for _ in 0..reps {
        let _ = net.forward(&input).unwrap();
    }
    let elapsed = start.elapsed().as_secs_f64();
    let fwd_gflops = (2 * fwd * reps) as f64 / elapsed / 1e9;
    println!(
        "fwd only  batch={batch}: {:.1} ms/step, {fwd_gflops:.1} GFLOP/s",
        elapsed / reps as f64 * 1e3
    );

    assert!(
        gflops > 1.0,
        "conv engine is pathologically slow: {gflops} GFLOP/s"
    );
}
