//! Brute-force reference implementations ("oracles") and shared fixtures for
//! the keydet test suites.
//!
//! Everything here favors obviousness over speed: direct loops, no tiling,
//! no reuse, so the production kernels can be checked against independently
//! written math. This crate is test-only and never ships in the product
//! path.

use keydet_core::geometry::{EllipticalRegion, Vec2};
use keydet_core::nn::{ConvLayer, FeatureMaps, Layer, Network};
use keydet_core::real::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Plain seeded RNG for fixture construction.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Feature maps filled with uniform values in `[-1, 1]`.
pub fn random_maps<T: Real>(
    seed: u64,
    channels: usize,
    batch: usize,
    height: usize,
    width: usize,
) -> FeatureMaps<T> {
    let mut r = rng(seed);
    let data = (0..channels * batch * height * width)
        .map(|_| T::from_f64(r.gen_range(-1.0..1.0)))
        .collect();
    FeatureMaps::from_data(channels, batch, height, width, data)
}

/// A conv layer with uniform random weights and biases in `[-limit, limit]`.
pub fn random_conv<T: Real>(
    seed: u64,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    relu: bool,
    limit: f64,
) -> ConvLayer<T> {
    let mut r = rng(seed);
    let mut layer = ConvLayer::new(in_ch, out_ch, kernel, relu);
    for w in layer.weights.data_mut() {
        *w = T::from_f64(r.gen_range(-limit..limit));
    }
    for b in layer.bias.data_mut() {
        *b = T::from_f64(r.gen_range(-limit..limit));
    }
    layer
}

/// A small two-conv network (conv3 + pool + conv1) useful for fast
/// whole-engine tests. Input: 1 channel; output: 2 channels.
pub fn tiny_network<T: Real>(seed: u64) -> Network<T> {
    let l1 = random_conv(seed.wrapping_mul(3).wrapping_add(1), 1, 3, 3, true, 0.5);
    let l2 = random_conv(seed.wrapping_mul(3).wrapping_add(2), 3, 2, 1, false, 0.5);
    Network::new(vec![Layer::Conv(l1), Layer::MaxPool2, Layer::Conv(l2)])
}

/// Brute-force valid cross-correlation: quadruple loop, accumulation in f64.
///
/// Input layout `(in_ch, batch, h, w)`, weights `(out_ch, in_ch, k, k)`,
/// output `(out_ch, batch, oh, ow)` — the layouts the engine uses.
pub fn conv_forward_oracle<T: Real>(
    input: &FeatureMaps<T>,
    weights: &[T],
    bias: &[T],
    out_ch: usize,
    kernel: usize,
    relu: bool,
) -> FeatureMaps<T> {
    let (i_ch, n, ih, iw) = (input.channels, input.batch, input.height, input.width);
    let oh = ih - kernel + 1;
    let ow = iw - kernel + 1;
    let mut out = FeatureMaps::zeros(out_ch, n, oh, ow);
    for o in 0..out_ch {
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for i in 0..i_ch {
                        let plane = input.plane(i, b);
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let w = weights[((o * i_ch + i) * kernel + ky) * kernel + kx];
                                let v = plane[(oy + ky) * iw + (ox + kx)];
                                acc += w.into_f64() * v.into_f64();
                            }
                        }
                    }
                    acc += bias[o].into_f64();
                    if relu && acc < 0.0 {
                        acc = 0.0;
                    }
                    out.plane_mut(o, b)[oy * ow + ox] = T::from_f64(acc);
                }
            }
        }
    }
    out
}

/// Brute-force 2x2/stride-2 max pool with first-in-reading-order tie-break.
pub fn maxpool_forward_oracle<T: Real>(input: &FeatureMaps<T>) -> FeatureMaps<T> {
    let oh = input.height / 2;
    let ow = input.width / 2;
    let mut out = FeatureMaps::zeros(input.channels, input.batch, oh, ow);
    for c in 0..input.channels {
        for b in 0..input.batch {
            let src = input.plane(c, b);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = src[(2 * oy) * input.width + 2 * ox];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let v = src[(2 * oy + dy) * input.width + (2 * ox + dx)];
                        if v > best {
                            best = v;
                        }
                    }
                    out.plane_mut(c, b)[oy * ow + ox] = best;
                }
            }
        }
    }
    out
}

/// Exhaustive non-maximum suppression over a dense score grid.
///
/// A cell survives when its value is positive and every other cell in the
/// Chebyshev window either scores strictly less, or scores equally but comes
/// later in scan order (row-major (y, x)). Survivors are returned sorted by
/// (score descending, y, x).
pub fn nms_oracle(values: &[f64], height: usize, width: usize, radius: usize) -> Vec<(usize, usize, f64)> {
    assert_eq!(values.len(), height * width);
    let r = radius as i64;
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let v = values[y * width + x];
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'win: for dy in -r..=r {
                for dx in -r..=r {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let ny = y as i64 + dy;
                    let nx = x as i64 + dx;
                    if ny < 0 || nx < 0 || ny >= height as i64 || nx >= width as i64 {
                        continue;
                    }
                    let nv = values[ny as usize * width + nx as usize];
                    let earlier = (ny, nx) < (y as i64, x as i64);
                    if nv > v || (nv == v && earlier) {
                        is_max = false;
                        break 'win;
                    }
                }
            }
            if is_max {
                out.push((y, x, v));
            }
        }
    }
    out.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    out
}

/// Point-membership test for an elliptical region (its own little solver, so
/// the production region code is not trusted here).
pub fn region_contains(region: &EllipticalRegion, p: Vec2) -> bool {
    let d = p.sub(region.center);
    let m = &region.shape;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-15 {
        return false;
    }
    // u = shape^{-1} d must satisfy |u| <= radius.
    let ux = (m[1][1] * d.x - m[0][1] * d.y) / det;
    let uy = (-m[1][0] * d.x + m[0][0] * d.y) / det;
    ux * ux + uy * uy <= region.radius * region.radius
}

/// Monte-Carlo-free rasterization IoU: samples a regular `n x n` grid of cell
/// centers over the union bounding box and counts membership.
pub fn raster_iou(a: &EllipticalRegion, b: &EllipticalRegion, n: usize) -> f64 {
    // Conservative bounding box: center +- radius * max singular value.
    let bound = |r: &EllipticalRegion| -> (Vec2, Vec2) {
        let (s1, _) = r.shape_singular_values();
        let e = r.radius * s1;
        (
            Vec2::new(r.center.x - e, r.center.y - e),
            Vec2::new(r.center.x + e, r.center.y + e),
        )
    };
    let (amin, amax) = bound(a);
    let (bmin, bmax) = bound(b);
    let min = Vec2::new(amin.x.min(bmin.x), amin.y.min(bmin.y));
    let max = Vec2::new(amax.x.max(bmax.x), amax.y.max(bmax.y));
    let step_x = (max.x - min.x) / n as f64;
    let step_y = (max.y - min.y) / n as f64;
    let mut inter = 0u64;
    let mut union = 0u64;
    for iy in 0..n {
        let y = min.y + (iy as f64 + 0.5) * step_y;
        for ix in 0..n {
            let x = min.x + (ix as f64 + 0.5) * step_x;
            let p = Vec2::new(x, y);
            let in_a = region_contains(a, p);
            let in_b = region_contains(b, p);
            if in_a && in_b {
                inter += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Homogeneous 3x3 matrix product, the long way.
pub fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            for k in 0..3 {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

/// Applies a homogeneous 3x3 matrix to a point, the long way.
pub fn mat3_apply(m: &[[f64; 3]; 3], p: Vec2) -> Vec2 {
    let u = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
    let v = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    Vec2::new(u / w, v / w)
}

/// Central finite difference of a scalar function at `x`.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Independent per-pixel bilinear sampler (clamp-to-edge), for checking the
/// production sampler and warps.
pub fn bilinear_oracle(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let cx = x.clamp(0.0, (width - 1) as f64);
    let cy = y.clamp(0.0, (height - 1) as f64);
    let x0 = (cx.floor() as usize).min(width.saturating_sub(2));
    let y0 = (cy.floor() as usize).min(height.saturating_sub(2));
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;
    let at = |xx: usize, yy: usize| data[yy.min(height - 1) * width + xx.min(width - 1)];
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bot = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bot * fy
}
