//! Inner loops of the convolution engine.
//!
//! Convolutions are lowered to small matrix products over im2col tiles. All
//! reductions run in a fixed order (lane partial sums, then a fixed pairwise
//! tree), so results are bit-identical no matter how callers split work
//! across tiles or threads.

use alloc::vec::Vec;

use crate::real::Real;

/// Independent accumulator lanes per dot product. Wide enough to keep one
/// 512-bit FMA pipe busy after the compiler vectorizes the lane loop.
const LANES: usize = 16;

/// Output positions per im2col tile. Sized so the tile buffer and the widest
/// weight panel fit in a 2 MB L2 together; the GEMM then streams weights from
/// L2 while the active column quad stays in L1.
pub(crate) const TILE_POSITIONS: usize = 256;

/// Valid-convolution geometry for one layer applied to one batch.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub batch: usize,
    pub ih: usize,
    pub iw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    /// im2col row width: one row holds the receptive field of one output cell.
    pub fn row(&self) -> usize {
        self.in_ch * self.k * self.k
    }

    /// Total output positions across the batch.
    pub fn positions(&self) -> usize {
        self.batch * self.oh * self.ow
    }
}

/// Gathers im2col rows for output positions `np_start .. np_start + np_len`.
///
/// Input layout is channel-major `(c, n, h, w)`; each row is the receptive
/// field `(i, ky, kx)` of one output cell, so the innermost `kx` run is a
/// contiguous copy from the input.
pub(crate) fn im2col_tile<T: Real>(
    input: &[T],
    d: &ConvDims,
    np_start: usize,
    np_len: usize,
    col: &mut Vec<T>,
) {
    let row = d.row();
    col.clear();
    col.resize(np_len * row, T::zero());
    let plane = d.oh * d.ow;
    for r in 0..np_len {
        let np = np_start + r;
        let n = np / plane;
        let p = np % plane;
        let oy = p / d.ow;
        let ox = p % d.ow;
        let dst_row = &mut col[r * row..(r + 1) * row];
        for i in 0..d.in_ch {
            let src_plane = ((i * d.batch + n) * d.ih + oy) * d.iw + ox;
            for ky in 0..d.k {
                let src = src_plane + ky * d.iw;
                let dst = (i * d.k + ky) * d.k;
                dst_row[dst..dst + d.k].copy_from_slice(&input[src..src + d.k]);
            }
        }
    }
}

/// Scatter-adds an im2col-shaped gradient tile back onto the input gradient.
/// Exact reverse of [`im2col_tile`]; iteration order is row-major ascending,
/// which fixes the accumulation order on overlapping cells.
pub(crate) fn col2im_tile<T: Real>(
    dcol: &[T],
    d: &ConvDims,
    np_start: usize,
    np_len: usize,
    dinput: &mut [T],
) {
    let row = d.row();
    let plane = d.oh * d.ow;
    for r in 0..np_len {
        let np = np_start + r;
        let n = np / plane;
        let p = np % plane;
        let oy = p / d.ow;
        let ox = p % d.ow;
        let src_row = &dcol[r * row..(r + 1) * row];
        for i in 0..d.in_ch {
            let dst_plane = ((i * d.batch + n) * d.ih + oy) * d.iw + ox;
            for ky in 0..d.k {
                let dst = dst_plane + ky * d.iw;
                let src = (i * d.k + ky) * d.k;
                let out = &mut dinput[dst..dst + d.k];
                let inp = &src_row[src..src + d.k];
                for x in 0..d.k {
                    out[x] = out[x] + inp[x];
                }
            }
        }
    }
}

/// Four simultaneous dot products sharing one pass over `w`.
///
/// Each product accumulates into `LANES` independent partial sums; the final
/// value is the ascending left-fold of the lanes plus a scalar tail. The
/// order never depends on slice length beyond the block/tail split.
/// LANES-blocks folded per iterator step. Amortizes the chunk iterators'
/// per-step checks without adding accumulators (the register budget stays
/// at four LANES-wide sets), and without changing which lane each element
/// folds into or in what order.
const UNROLL: usize = 4;

/// Collapses lane partial sums with a fixed pairwise tree: lane `i` absorbs
/// lane `i + width` while `width` halves. One deterministic order, but only
/// `log2(LANES)` dependent levels instead of a serial chain.
#[inline]
fn fold_lanes<T: Real>(a: &[T; LANES]) -> T {
    let mut buf = *a;
    let mut width = LANES / 2;
    while width > 0 {
        for i in 0..width {
            buf[i] = buf[i] + buf[i + width];
        }
        width /= 2;
    }
    buf[0]
}

#[inline]
fn dot4<T: Real>(w: &[T], c0: &[T], c1: &[T], c2: &[T], c3: &[T]) -> [T; 4] {
    let len = w.len();
    debug_assert!(c0.len() == len && c1.len() == len && c2.len() == len && c3.len() == len);
    let mut a0 = [T::zero(); LANES];
    let mut a1 = [T::zero(); LANES];
    let mut a2 = [T::zero(); LANES];
    let mut a3 = [T::zero(); LANES];
    // chunks_exact gives the optimizer fixed-length blocks with no bounds
    // checks left in the lane loops, which is what lets them vectorize.
    let step = LANES * UNROLL;
    let mut wi = w.chunks_exact(step);
    let mut i0 = c0.chunks_exact(step);
    let mut i1 = c1.chunks_exact(step);
    let mut i2 = c2.chunks_exact(step);
    let mut i3 = c3.chunks_exact(step);
    while let (Some(wc), Some(x0), Some(x1), Some(x2), Some(x3)) =
        (wi.next(), i0.next(), i1.next(), i2.next(), i3.next())
    {
        for u in 0..UNROLL {
            let b = u * LANES;
            for l in 0..LANES {
                let wv = wc[b + l];
                a0[l] = wv.mul_add(x0[b + l], a0[l]);
                a1[l] = wv.mul_add(x1[b + l], a1[l]);
                a2[l] = wv.mul_add(x2[b + l], a2[l]);
                a3[l] = wv.mul_add(x3[b + l], a3[l]);
            }
        }
    }
    // Whole LANES blocks left in the remainder keep the same lane mapping,
    // so each lane folds exactly the elements it would without the unroll.
    let mut off = len - wi.remainder().len();
    while off + LANES <= len {
        for l in 0..LANES {
            let wv = w[off + l];
            a0[l] = wv.mul_add(c0[off + l], a0[l]);
            a1[l] = wv.mul_add(c1[off + l], a1[l]);
            a2[l] = wv.mul_add(c2[off + l], a2[l]);
            a3[l] = wv.mul_add(c3[off + l], a3[l]);
        }
        off += LANES;
    }
    let mut t = [T::zero(); 4];
    for i in off..len {
        let wv = w[i];
        t[0] = wv.mul_add(c0[i], t[0]);
        t[1] = wv.mul_add(c1[i], t[1]);
        t[2] = wv.mul_add(c2[i], t[2]);
        t[3] = wv.mul_add(c3[i], t[3]);
    }
    [
        fold_lanes(&a0) + t[0],
        fold_lanes(&a1) + t[1],
        fold_lanes(&a2) + t[2],
        fold_lanes(&a3) + t[3],
    ]
}

#[inline]
fn dot1<T: Real>(w: &[T], c: &[T]) -> T {
    let len = w.len();
    debug_assert_eq!(c.len(), len);
    let mut a = [T::zero(); LANES];
    let step = LANES * UNROLL;
    let mut wi = w.chunks_exact(step);
    let mut ci = c.chunks_exact(step);
    while let (Some(wc), Some(cc)) = (wi.next(), ci.next()) {
        for u in 0..UNROLL {
            let b = u * LANES;
            for l in 0..LANES {
                a[l] = wc[b + l].mul_add(cc[b + l], a[l]);
            }
        }
    }
    let mut off = len - wi.remainder().len();
    while off + LANES <= len {
        for l in 0..LANES {
            a[l] = w[off + l].mul_add(c[off + l], a[l]);
        }
        off += LANES;
    }
    let mut tail = T::zero();
    for i in off..len {
        tail = w[i].mul_add(c[i], tail);
    }
    fold_lanes(&a) + tail
}

/// One forward GEMM tile: `out[o][np] = dot(w[o], col[np]) + bias[o]`,
/// optionally clamped by ReLU. `out` rows span the full `np_total` extent;
/// this call fills columns `np_start .. np_start + np_len`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_gemm_tile<T: Real>(
    w: &[T],
    bias: &[T],
    relu: bool,
    col: &[T],
    row: usize,
    out: &mut [T],
    np_total: usize,
    np_start: usize,
    np_len: usize,
    out_ch: usize,
) {
    let zero = T::zero();
    // Column quads on the outside: the four active columns stay in L1 while
    // the whole weight panel streams past from L2 once per quad.
    let mut j = 0;
    while j + 4 <= np_len {
        let base = j * row;
        let c0 = &col[base..base + row];
        let c1 = &col[base + row..base + 2 * row];
        let c2 = &col[base + 2 * row..base + 3 * row];
        let c3 = &col[base + 3 * row..base + 4 * row];
        for o in 0..out_ch {
            let v = dot4(&w[o * row..(o + 1) * row], c0, c1, c2, c3);
            let b = bias[o];
            let dst = o * np_total + np_start + j;
            for (q, val) in v.iter().enumerate() {
                let y = *val + b;
                out[dst + q] = if relu && y < zero { zero } else { y };
            }
        }
        j += 4;
    }
    while j < np_len {
        let cj = &col[j * row..(j + 1) * row];
        for o in 0..out_ch {
            let y = dot1(&w[o * row..(o + 1) * row], cj) + bias[o];
            let dst = o * np_total + np_start + j;
            out[dst] = if relu && y < zero { zero } else { y };
        }
        j += 1;
    }
}

/// `acc += scale * v` over equal-length slices.
#[inline]
pub(crate) fn axpy<T: Real>(acc: &mut [T], scale: T, v: &[T]) {
    debug_assert_eq!(acc.len(), v.len());
    let step = LANES * UNROLL;
    let mut ai = acc.chunks_exact_mut(step);
    let mut vi = v.chunks_exact(step);
    while let (Some(ac), Some(vc)) = (ai.next(), vi.next()) {
        for u in 0..UNROLL {
            let b = u * LANES;
            for l in 0..LANES {
                ac[b + l] = scale.mul_add(vc[b + l], ac[b + l]);
            }
        }
    }
    let at = ai.into_remainder();
    let vt = vi.remainder();
    for (a, &x) in at.iter_mut().zip(vt.iter()) {
        *a = scale.mul_add(x, *a);
    }
}

/// Weight-gradient tile: `dw[o] += sum_np dout[o][np] * col[np]`.
/// np ascends within the tile, and tiles ascend in the caller, so the
/// per-coefficient accumulation order is independent of the tile size.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_dw_tile<T: Real>(
    dout: &[T],
    col: &[T],
    row: usize,
    dw: &mut [T],
    np_total: usize,
    np_start: usize,
    np_len: usize,
    out_ch: usize,
) {
    for o in 0..out_ch {
        let drow = &dout[o * np_total + np_start..o * np_total + np_start + np_len];
        let acc = &mut dw[o * row..(o + 1) * row];
        for (j, &g) in drow.iter().enumerate() {
            if g != T::zero() {
                axpy(acc, g, &col[j * row..(j + 1) * row]);
            }
        }
    }
}

/// Input-gradient tile in im2col space: `dcol[np] = sum_o dout[o][np] * w[o]`.
///
/// Columns on the outside so the active `dcol` row stays in L1 while the
/// weight panel streams from L2. Each element still accumulates in ascending
/// `o` order, so the sums are bit-identical to the channel-major nesting.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_dcol_tile<T: Real>(
    dout: &[T],
    w: &[T],
    row: usize,
    dcol: &mut Vec<T>,
    np_total: usize,
    np_start: usize,
    np_len: usize,
    out_ch: usize,
) {
    dcol.clear();
    dcol.resize(np_len * row, T::zero());
    for j in 0..np_len {
        let dst = &mut dcol[j * row..(j + 1) * row];
        for o in 0..out_ch {
            let g = dout[o * np_total + np_start + j];
            if g != T::zero() {
                axpy(dst, g, &w[o * row..(o + 1) * row]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dot4_matches_dot1() {
        let n = 53; // exercises the tail path
        let w: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|c| (0..n).map(|i| ((i + c) as f64 * 0.71).cos()).collect())
            .collect();
        let got = dot4(&w, &cols[0], &cols[1], &cols[2], &cols[3]);
        for (c, g) in cols.iter().zip(got.iter()) {
            assert_eq!(*g, dot1(&w, c));
        }
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let d = ConvDims {
            in_ch: 2,
            out_ch: 1,
            k: 3,
            batch: 2,
            ih: 6,
            iw: 5,
            oh: 4,
            ow: 3,
        };
        let in_len = d.in_ch * d.batch * d.ih * d.iw;
        let x: Vec<f64> = (0..in_len).map(|i| (i as f64 * 0.13).sin()).collect();
        let np = d.positions();
        let mut col = Vec::new();
        im2col_tile(&x, &d, 0, np, &mut col);
        let y: Vec<f64> = (0..col.len()).map(|i| (i as f64 * 0.29).cos()).collect();
        let mut back = vec![0.0; in_len];
        col2im_tile(&y, &d, 0, np, &mut back);
        let lhs: f64 = col.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(back.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
