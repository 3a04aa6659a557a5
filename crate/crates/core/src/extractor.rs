//! Full-image feature extraction: dense fully-convolutional regression on a
//! stride-4 grid, vote accumulation by bilinear splatting, non-maximum
//! suppression, and top-k selection.
//!
//! The regressor was trained on 32x32 patches, so the dense pass slides its
//! receptive field over the image with stride 4 (the product of the two
//! pooling stages). Every fully-contained grid cell predicts where the
//! nearest good feature lies; each prediction splats one unit of vote mass
//! onto its four neighboring pixels, and accumulation points — where many
//! cells agree — become keypoints.
//!
//! All vote arithmetic is `f64` regardless of the network precision, so
//! mass bookkeeping stays exact to ~1e-12 even for very large grids, and
//! the suppression/refinement stages are precision-independent.

use alloc::vec;
use alloc::vec::Vec;

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{Vec2, PATCH_CENTER, PATCH_SIZE};
use crate::image::Image;
use crate::nn::{box_blur3, FeatureMaps, Network, NnError};
use crate::parallel::{ChunkMapper, SequentialMapper};
use crate::real::Real;

/// Spacing of the dense prediction grid in image pixels: two 2x2 pooling
/// stages make the network's natural output stride 4.
pub const GRID_STRIDE: usize = 4;

/// Default suppression radius (Chebyshev, pixels) — comparable to the grid
/// spacing, so competing votes for the same feature collapse to one point.
pub const DEFAULT_NMS_RADIUS: usize = 5;

/// Fixed support radius attached to every keypoint: half the training patch.
/// The regressor localizes but does not estimate scale, so downstream
/// overlap metrics need a defined region size.
pub const SUPPORT_RADIUS: f64 = 16.0;

/// Extraction failures.
#[derive(Clone, Debug, PartialEq)]
pub enum ExtractError {
    /// Image smaller than one receptive field.
    TooSmall {
        width: usize,
        height: usize,
        required: usize,
    },
    Net(NnError),
}

impl core::fmt::Display for ExtractError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ExtractError::TooSmall {
                width,
                height,
                required,
            } => write!(
                f,
                "image {width}x{height} is smaller than the {required}x{required} receptive field"
            ),
            ExtractError::Net(e) => write!(f, "network error: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ExtractError {}

impl From<NnError> for ExtractError {
    fn from(e: NnError) -> Self {
        ExtractError::Net(e)
    }
}

/// Dense per-cell predictions over the stride-4 grid. Cell `(iy, ix)` sees
/// the 32x32 window with top-left pixel `(4*ix, 4*iy)`; its center — and
/// the origin of its predicted translation — is at
/// `(4*ix + 15.5, 4*iy + 15.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseRegression<T> {
    pub cells_y: usize,
    pub cells_x: usize,
    /// Row-major `[dx, dy]` per cell, in pixels relative to the cell center.
    pub offsets: Vec<[T; 2]>,
}

impl<T: Real> DenseRegression<T> {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Center of cell `(iy, ix)` in image coordinates.
    pub fn cell_center(iy: usize, ix: usize) -> Vec2 {
        Vec2::new(
            PATCH_CENTER + (GRID_STRIDE * ix) as f64,
            PATCH_CENTER + (GRID_STRIDE * iy) as f64,
        )
    }

    /// Predicted absolute position for cell `(iy, ix)`: center + offset.
    pub fn position(&self, iy: usize, ix: usize) -> Vec2 {
        let [dx, dy] = self.offsets[iy * self.cells_x + ix];
        Self::cell_center(iy, ix).add(Vec2::new(dx.into_f64(), dy.into_f64()))
    }

    /// All predicted absolute positions, row-major.
    pub fn positions(&self) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(self.offsets.len());
        for iy in 0..self.cells_y {
            for ix in 0..self.cells_x {
                out.push(self.position(iy, ix));
            }
        }
        out
    }
}

/// Expected dense grid extent for an image: one cell per stride-4 step of a
/// fully-contained receptive field.
pub fn grid_extent(height: usize, width: usize) -> Option<(usize, usize)> {
    if height < PATCH_SIZE || width < PATCH_SIZE {
        return None;
    }
    Some((
        (height - PATCH_SIZE) / GRID_STRIDE + 1,
        (width - PATCH_SIZE) / GRID_STRIDE + 1,
    ))
}

/// Runs the network densely over the whole image (single pass).
///
/// The image is used as given — no normalization happens here; see
/// [`extract`] for the standardization policy.
pub fn dense_regress<T: Real>(
    image: &Image<T>,
    net: &Network<T>,
) -> Result<DenseRegression<T>, ExtractError> {
    dense_regress_bands(image, net, &SequentialMapper, usize::MAX)
}

/// Banded dense regression: output rows are split into horizontal bands of
/// at most `band_rows` cells, evaluated independently (possibly in
/// parallel), and concatenated. Valid convolution makes every output cell a
/// pure function of its own receptive field, so the result is bit-identical
/// to the single-pass [`dense_regress`] for any banding.
pub fn dense_regress_bands<T: Real, M: ChunkMapper>(
    image: &Image<T>,
    net: &Network<T>,
    mapper: &M,
    band_rows: usize,
) -> Result<DenseRegression<T>, ExtractError> {
    let (h, w) = (image.height(), image.width());
    let (cells_y, cells_x) = grid_extent(h, w).ok_or(ExtractError::TooSmall {
        width: w,
        height: h,
        required: PATCH_SIZE,
    })?;
    debug_assert_eq!(net.output_grid(h, w), Some((cells_y, cells_x)));

    let band_rows = band_rows.clamp(1, cells_y);
    let bands = cells_y.div_ceil(band_rows);
    let job = |b: usize| -> Result<Vec<[T; 2]>, ExtractError> {
        let row0 = b * band_rows;
        let rows = band_rows.min(cells_y - row0);
        // Input rows feeding output rows [row0, row0 + rows).
        let y0 = row0 * GRID_STRIDE;
        let y1 = (row0 + rows - 1) * GRID_STRIDE + PATCH_SIZE;
        let mut data = Vec::with_capacity((y1 - y0) * w);
        data.extend_from_slice(&image.data()[y0 * w..y1 * w]);
        let maps = FeatureMaps::from_data(1, 1, y1 - y0, w, data);
        let out = net.forward(&maps)?;
        debug_assert_eq!(
            (out.channels, out.height, out.width),
            (2, rows, cells_x),
            "band output shape mismatch"
        );
        let mut offsets = vec![[T::zero(); 2]; rows * cells_x];
        let (dx, dy) = (out.plane(0, 0), out.plane(1, 0));
        for (o, (&x, &y)) in offsets.iter_mut().zip(dx.iter().zip(dy.iter())) {
            *o = [x, y];
        }
        Ok(offsets)
    };

    let results = mapper.map_chunks(bands, &job);
    let mut offsets = Vec::with_capacity(cells_y * cells_x);
    for band in results {
        offsets.extend_from_slice(&band?);
    }
    Ok(DenseRegression {
        cells_y,
        cells_x,
        offsets,
    })
}

/// Accumulated votes over the image's pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteMap {
    pub height: usize,
    pub width: usize,
    /// Row-major vote mass per pixel.
    pub values: Vec<f64>,
    /// Positions that landed inside the image and contributed mass.
    pub in_bounds: usize,
    /// Positions outside the image, dropped without contribution.
    pub dropped: usize,
}

impl VoteMap {
    pub fn new(height: usize, width: usize) -> Self {
        VoteMap {
            height,
            width,
            values: vec![0.0; height * width],
            in_bounds: 0,
            dropped: 0,
        }
    }

    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Splats one unit of mass at `p` onto its four neighbor pixels by
    /// bilinear weights. Positions outside `[0, W-1] x [0, H-1]` are
    /// dropped and counted.
    pub fn splat(&mut self, p: Vec2) {
        let (w, h) = (self.width, self.height);
        let in_x = p.x >= 0.0 && p.x <= (w - 1) as f64;
        let in_y = p.y >= 0.0 && p.y <= (h - 1) as f64;
        if !(in_x && in_y) {
            self.dropped += 1;
            return;
        }
        self.in_bounds += 1;
        let x0 = p.x.floor() as usize;
        let y0 = p.y.floor() as usize;
        let fx = p.x - x0 as f64;
        let fy = p.y - y0 as f64;
        let mut add = |x: usize, y: usize, weight: f64| {
            if weight != 0.0 && x < w && y < h {
                self.values[y * w + x] += weight;
            }
        };
        add(x0, y0, (1.0 - fx) * (1.0 - fy));
        add(x0 + 1, y0, fx * (1.0 - fy));
        add(x0, y0 + 1, (1.0 - fx) * fy);
        add(x0 + 1, y0 + 1, fx * fy);
    }

    /// Builds a map from an iterator of positions.
    pub fn from_positions<I: IntoIterator<Item = Vec2>>(
        height: usize,
        width: usize,
        positions: I,
    ) -> Self {
        let mut map = VoteMap::new(height, width);
        for p in positions {
            map.splat(p);
        }
        map
    }

    /// Total accumulated mass (fixed-order sum). Equals `in_bounds` up to
    /// float rounding: every splat deposits weights summing to 1.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// 3x3 box blur, for noisy maps (off by default in [`extract`]).
    pub fn blur(&mut self) {
        box_blur3(&mut self.values, self.height, self.width);
    }
}

/// A selected feature point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    /// Sub-pixel image position (x, y).
    pub pos: Vec2,
    /// Vote mass at the selected maximum (pre-refinement value).
    pub score: f64,
    /// Support radius in pixels, fixed at [`SUPPORT_RADIUS`].
    pub radius: f64,
}

/// Integer local maxima of the vote map: pixels with positive value that no
/// neighbor within the Chebyshev `radius` beats, where an equal-valued
/// neighbor beats a later pixel in row-major scan order (first wins).
/// Returned in scan order as `(y, x)`.
pub fn nms_local_maxima(map: &VoteMap, radius: usize) -> Vec<(usize, usize)> {
    let (h, w) = (map.height, map.width);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.values[y * w + x];
            if v <= 0.0 {
                continue;
            }
            let y_lo = y.saturating_sub(radius);
            let y_hi = (y + radius).min(h - 1);
            let x_lo = x.saturating_sub(radius);
            let x_hi = (x + radius).min(w - 1);
            let mut survives = true;
            'window: for ny in y_lo..=y_hi {
                for nx in x_lo..=x_hi {
                    if (ny, nx) == (y, x) {
                        continue;
                    }
                    let nv = map.values[ny * w + nx];
                    if nv > v || (nv == v && (ny, nx) < (y, x)) {
                        survives = false;
                        break 'window;
                    }
                }
            }
            if survives {
                out.push((y, x));
            }
        }
    }
    out
}

/// Sub-pixel offset from a 3x3 quadratic fit around `(y, x)`, each
/// component clamped to `[-0.5, 0.5]`. Returns zero at image borders and
/// wherever the fitted Hessian is unusable (non-negative-definite,
/// singular, or non-finite) — the integer maximum stands in those cases.
fn quadratic_offset(map: &VoteMap, y: usize, x: usize) -> Vec2 {
    let (h, w) = (map.height, map.width);
    if y == 0 || x == 0 || y + 1 >= h || x + 1 >= w {
        return Vec2::new(0.0, 0.0);
    }
    let v = |dy: isize, dx: isize| {
        map.values[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
    };
    let gx = (v(0, 1) - v(0, -1)) * 0.5;
    let gy = (v(1, 0) - v(-1, 0)) * 0.5;
    let hxx = v(0, 1) - 2.0 * v(0, 0) + v(0, -1);
    let hyy = v(1, 0) - 2.0 * v(0, 0) + v(-1, 0);
    let hxy = (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) * 0.25;
    let det = hxx * hyy - hxy * hxy;
    // A usable peak has a negative-definite Hessian.
    if !(det > 0.0 && hxx < 0.0) {
        return Vec2::new(0.0, 0.0);
    }
    let dx = -(hyy * gx - hxy * gy) / det;
    let dy = -(hxx * gy - hxy * gx) / det;
    if !(dx.is_finite() && dy.is_finite()) {
        return Vec2::new(0.0, 0.0);
    }
    Vec2::new(dx.clamp(-0.5, 0.5), dy.clamp(-0.5, 0.5))
}

/// Selects up to `k` keypoints: local maxima sorted by score descending
/// (ties broken by `(y, x)`), truncated, then sub-pixel refined. Returns
/// fewer than `k` when the map has fewer maxima.
pub fn nms_select(map: &VoteMap, k: usize, radius: usize) -> Vec<Keypoint> {
    let mut maxima = nms_local_maxima(map, radius);
    maxima.sort_by(|&(ay, ax), &(by, bx)| {
        let (va, vb) = (map.value(ax, ay), map.value(bx, by));
        vb.partial_cmp(&va)
            .expect("vote values are finite")
            .then_with(|| (ay, ax).cmp(&(by, bx)))
    });
    maxima.truncate(k);
    maxima
        .into_iter()
        .map(|(y, x)| {
            let offset = quadratic_offset(map, y, x);
            Keypoint {
                pos: Vec2::new(x as f64 + offset.x, y as f64 + offset.y),
                score: map.value(x, y),
                radius: SUPPORT_RADIUS,
            }
        })
        .collect()
}

/// Extraction parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractConfig {
    /// Number of keypoints to keep (evaluation protocols use 200 or 1000).
    pub k: usize,
    /// Chebyshev suppression radius in pixels.
    pub nms_radius: usize,
    /// Smooth the vote map with a 3x3 box blur before suppression.
    pub blur: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            k: 200,
            nms_radius: DEFAULT_NMS_RADIUS,
            blur: false,
        }
    }
}

/// Everything the extraction pipeline produced, for inspection and dumps.
#[derive(Clone, Debug)]
pub struct Extraction<T> {
    pub keypoints: Vec<Keypoint>,
    pub votes: VoteMap,
    pub regression: DenseRegression<T>,
}

/// The full pipeline: standardize the image globally (zero mean, unit
/// variance — one FCN pass instead of per-window statistics; the train/test
/// normalization mismatch is a deliberate trade-off), regress densely,
/// splat votes, optionally blur, then select keypoints.
pub fn extract<T: Real>(
    image: &Image<T>,
    net: &Network<T>,
    config: &ExtractConfig,
) -> Result<Extraction<T>, ExtractError> {
    extract_with(image, net, config, &SequentialMapper, usize::MAX)
}

/// [`extract`] with explicit parallelism controls for the dense pass.
pub fn extract_with<T: Real, M: ChunkMapper>(
    image: &Image<T>,
    net: &Network<T>,
    config: &ExtractConfig,
    mapper: &M,
    band_rows: usize,
) -> Result<Extraction<T>, ExtractError> {
    let standardized = image.standardized();
    let regression = dense_regress_bands(&standardized, net, mapper, band_rows)?;
    let mut votes = VoteMap::from_positions(
        image.height(),
        image.width(),
        regression.positions(),
    );
    if config.blur {
        votes.blur();
    }
    let keypoints = nms_select(&votes, config.k, config.nms_radius);
    Ok(Extraction {
        keypoints,
        votes,
        regression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use crate::rng::{stream_rng, STREAM_GRADCHECK};
    use crate::synth::synthetic_training_images;
    use rand::Rng;

    fn zeroed_detector() -> Network<f32> {
        let mut net = Network::detector(1);
        for layer in net.layers_mut() {
            if let Layer::Conv(c) = layer {
                c.weights.data_mut().fill(0.0);
                c.bias.data_mut().fill(0.0);
            }
        }
        net
    }

    fn random_image(seed: u64, h: usize, w: usize) -> Image<f32> {
        let mut rng = stream_rng(seed, STREAM_GRADCHECK, 77);
        let data: Vec<f32> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        Image::from_vec(w, h, data)
    }

    #[test]
    fn zero_weight_network_predicts_grid_centers() {
        let net = zeroed_detector();
        let img = random_image(1, 64, 64);
        let reg = dense_regress(&img, &net).unwrap();
        assert_eq!((reg.cells_y, reg.cells_x), (9, 9));
        assert!(reg.offsets.iter().all(|&[dx, dy]| dx == 0.0 && dy == 0.0));
        assert_eq!(reg.position(0, 0), Vec2::new(15.5, 15.5));
        assert_eq!(reg.position(2, 1), Vec2::new(19.5, 23.5));

        // Votes pile symmetrically around the centers; every selected
        // keypoint sits on the 4-pixel support of some grid center.
        let ex = extract(&img, &net, &ExtractConfig::default()).unwrap();
        assert!(!ex.keypoints.is_empty());
        for kp in &ex.keypoints {
            let near_x = (kp.pos.x - 15.5).rem_euclid(4.0);
            let near_y = (kp.pos.y - 15.5).rem_euclid(4.0);
            let off = |f: f64| f.min(4.0 - f);
            assert!(
                off(near_x) <= 0.5 + 1e-12 && off(near_y) <= 0.5 + 1e-12,
                "keypoint {:?} is not on a grid-center support",
                kp.pos
            );
            assert!(kp.score > 0.0);
            assert_eq!(kp.radius, SUPPORT_RADIUS);
        }
    }

    #[test]
    fn single_cell_matches_patchwise_forward() {
        let net = Network::<f32>::detector(3);
        let img = random_image(2, 32, 32);
        let reg = dense_regress(&img, &net).unwrap();
        assert_eq!((reg.cells_y, reg.cells_x), (1, 1));
        let direct = net.forward_patch(img.data()).unwrap();
        assert_eq!(reg.offsets[0], direct, "dense and patch paths must agree bit-for-bit");
    }

    #[test]
    fn grid_extent_matches_shape_arithmetic_oracle() {
        // Independent oracle: walk Table 1 layer by layer.
        let oracle = |mut s: usize| -> usize {
            for (kernel, pool) in [(5, true), (5, true), (3, false), (3, false), (1, false)] {
                s = s - kernel + 1;
                if pool {
                    s /= 2;
                }
            }
            s
        };
        let net = Network::<f32>::detector(1);
        for (h, w) in [(32, 32), (64, 64), (65, 70), (32, 47), (100, 33)] {
            let expect = (oracle(h), oracle(w));
            assert_eq!(grid_extent(h, w).unwrap(), expect, "extent for {h}x{w}");
            assert_eq!(net.output_grid(h, w).unwrap(), expect);
            let img = random_image(3, h, w);
            let reg = dense_regress(&img, &net).unwrap();
            assert_eq!((reg.cells_y, reg.cells_x), expect);
        }
        assert_eq!(grid_extent(31, 64), None);
    }

    #[test]
    fn banded_regression_is_bit_identical_to_single_pass() {
        let net = Network::<f32>::detector(5);
        let img = random_image(4, 97, 61);
        let whole = dense_regress(&img, &net).unwrap();
        for band_rows in [1, 3, 7, 100] {
            let banded =
                dense_regress_bands(&img, &net, &SequentialMapper, band_rows).unwrap();
            assert_eq!(whole, banded, "band_rows = {band_rows}");
        }
    }

    #[test]
    fn splat_places_bilinear_weights() {
        let mut map = VoteMap::new(8, 8);
        map.splat(Vec2::new(2.0, 3.0));
        assert_eq!(map.value(2, 3), 1.0);
        assert_eq!(map.total_mass(), 1.0);
        assert_eq!((map.in_bounds, map.dropped), (1, 0));

        let mut map = VoteMap::new(8, 8);
        map.splat(Vec2::new(2.5, 3.5));
        for (x, y) in [(2, 3), (3, 3), (2, 4), (3, 4)] {
            assert_eq!(map.value(x, y), 0.25);
        }

        let mut map = VoteMap::new(8, 8);
        map.splat(Vec2::new(-0.1, 4.0));
        map.splat(Vec2::new(3.0, 7.2));
        assert_eq!((map.in_bounds, map.dropped), (0, 2));
        assert_eq!(map.total_mass(), 0.0);
    }

    #[test]
    fn splat_conserves_mass_for_random_positions() {
        let mut rng = stream_rng(9, STREAM_GRADCHECK, 78);
        let mut map = VoteMap::new(40, 30);
        let n = 1000;
        for _ in 0..n {
            map.splat(Vec2::new(rng.gen_range(-5.0..35.0), rng.gen_range(-5.0..45.0)));
        }
        assert_eq!(map.in_bounds + map.dropped, n);
        assert!(map.in_bounds > 0 && map.dropped > 0, "both cases exercised");
        assert!(
            (map.total_mass() - map.in_bounds as f64).abs() < 1e-9,
            "mass {} vs in-bounds {}",
            map.total_mass(),
            map.in_bounds
        );
    }

    #[test]
    fn nms_matches_first_maximum_oracle() {
        // Oracle formulation: a pixel survives iff it is the scan-earliest
        // maximum of its own window. Small integer values force many ties.
        let oracle = |map: &VoteMap, radius: usize| -> Vec<(usize, usize)> {
            let (h, w) = (map.height, map.width);
            let mut out = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    let v = map.value(x, y);
                    if v <= 0.0 {
                        continue;
                    }
                    let mut best = f64::NEG_INFINITY;
                    let mut first = (usize::MAX, usize::MAX);
                    for ny in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
                        for nx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                            let nv = map.value(nx, ny);
                            if nv > best {
                                best = nv;
                                first = (ny, nx);
                            }
                        }
                    }
                    if best == v && first == (y, x) {
                        out.push((y, x));
                    }
                }
            }
            out
        };

        let mut rng = stream_rng(10, STREAM_GRADCHECK, 79);
        for case in 0..60 {
            let h = rng.gen_range(4..28);
            let w = rng.gen_range(4..28);
            let radius = [1, 2, 5][case % 3];
            let mut map = VoteMap::new(h, w);
            for v in map.values.iter_mut() {
                *v = rng.gen_range(0..4) as f64;
            }
            assert_eq!(
                nms_local_maxima(&map, radius),
                oracle(&map, radius),
                "case {case}: {h}x{w} radius {radius}"
            );
        }
    }

    #[test]
    fn equal_maxima_tie_break_by_scan_order() {
        let mut map = VoteMap::new(10, 10);
        // Two equal peaks within one radius: the scan-earlier one wins.
        map.values[2 * 10 + 2] = 5.0;
        map.values[4 * 10 + 5] = 5.0;
        let selected = nms_local_maxima(&map, 5);
        assert_eq!(selected, vec![(2, 2)]);
        // Far apart: both survive, selection order (y, x).
        let mut map = VoteMap::new(20, 20);
        map.values[2 * 20 + 2] = 5.0;
        map.values[15 * 20 + 15] = 5.0;
        assert_eq!(nms_local_maxima(&map, 5), vec![(2, 2), (15, 15)]);
        let kps = nms_select(&map, 10, 5);
        assert_eq!(kps.len(), 2);
        assert_eq!(kps[0].pos, Vec2::new(2.0, 2.0));
        assert_eq!(kps[1].pos, Vec2::new(15.0, 15.0));
    }

    #[test]
    fn single_impulse_yields_one_keypoint() {
        let mut map = VoteMap::new(12, 9);
        map.values[6 * 9 + 4] = 3.0;
        let kps = nms_select(&map, 5, 5);
        assert_eq!(kps.len(), 1, "fewer maxima than k: caller sees the count");
        assert_eq!(kps[0].pos, Vec2::new(4.0, 6.0));
        assert_eq!(kps[0].score, 3.0);
    }

    #[test]
    fn selection_sorts_by_score_then_scan_order() {
        let mut map = VoteMap::new(30, 30);
        map.values[3 * 30 + 3] = 1.0;
        map.values[15 * 30 + 20] = 3.0;
        map.values[25 * 30 + 5] = 2.0;
        let kps = nms_select(&map, 2, 5);
        assert_eq!(kps.len(), 2);
        assert_eq!(kps[0].score, 3.0);
        assert_eq!(kps[1].score, 2.0);
    }

    #[test]
    fn quadratic_refinement_recovers_subpixel_peak() {
        // Exact paraboloid: central differences reproduce it exactly, so
        // refinement must land on the analytic peak.
        let (cx, cy) = (7.3, 5.8);
        let mut map = VoteMap::new(12, 14);
        for y in 0..12 {
            for x in 0..14 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                map.values[y * 14 + x] = (100.0 - dx * dx - 2.0 * dy * dy).max(0.0);
            }
        }
        let kps = nms_select(&map, 1, 5);
        assert_eq!(kps.len(), 1);
        assert!((kps[0].pos.x - cx).abs() < 1e-9, "x: {}", kps[0].pos.x);
        assert!((kps[0].pos.y - cy).abs() < 1e-9, "y: {}", kps[0].pos.y);
    }

    #[test]
    fn refinement_stays_put_on_plateaus_and_borders() {
        // Flat plateau: singular Hessian, offset must fall back to zero.
        let mut map = VoteMap::new(9, 9);
        for y in 3..6 {
            for x in 3..6 {
                map.values[y * 9 + x] = 2.0;
            }
        }
        assert_eq!(quadratic_offset(&map, 4, 4), Vec2::new(0.0, 0.0));
        // Border maximum: no 3x3 neighborhood, offset zero.
        let mut map = VoteMap::new(9, 9);
        map.values[0] = 1.0;
        assert_eq!(quadratic_offset(&map, 0, 0), Vec2::new(0.0, 0.0));
    }

    #[test]
    fn shifting_the_image_reindexes_predictions_exactly() {
        // Valid convolution makes every cell a pure function of its own
        // receptive field, so translating the crop by one grid stride must
        // re-index the prediction grid bit-for-bit: cell (iy, ix) of the
        // shifted crop sees exactly the pixels cell (iy+1, ix+1) of the
        // original saw. (The crops share a source standardized once, since
        // per-crop statistics would perturb every pixel.)
        let net = Network::<f32>::detector(8);
        let source = synthetic_training_images::<f32>(21, 1, 104)[0].standardized();
        let crop = |ox: usize, oy: usize| -> Image<f32> {
            let mut img = Image::zeros(96, 96);
            for y in 0..96 {
                for x in 0..96 {
                    img.set(x, y, source.get(x + ox, y + oy));
                }
            }
            img
        };
        let a = crop(0, 0);
        let b = crop(4, 4); // b(x, y) = a(x + 4, y + 4)
        let ra = dense_regress(&a, &net).unwrap();
        let rb = dense_regress(&b, &net).unwrap();
        assert_eq!((ra.cells_y, ra.cells_x), (17, 17));
        for iy in 0..rb.cells_y - 1 {
            for ix in 0..rb.cells_x - 1 {
                assert_eq!(
                    rb.offsets[iy * rb.cells_x + ix],
                    ra.offsets[(iy + 1) * ra.cells_x + (ix + 1)],
                    "cell ({iy}, {ix})"
                );
                // Same offset from a center 4 px earlier: the predicted
                // absolute position shifts by exactly the translation.
                let pa = ra.position(iy + 1, ix + 1);
                let pb = rb.position(iy, ix);
                assert_eq!(pb.x, pa.x - 4.0);
                assert_eq!(pb.y, pa.y - 4.0);
            }
        }
    }

    #[test]
    fn undersized_image_is_rejected() {
        let net = Network::<f32>::detector(1);
        let img = random_image(6, 31, 40);
        match dense_regress(&img, &net) {
            Err(ExtractError::TooSmall { required, .. }) => assert_eq!(required, 32),
            other => panic!("expected TooSmall, got {other:?}"),
        }
        assert!(extract(&img, &net, &ExtractConfig::default()).is_err());
    }

    #[test]
    fn extraction_accounts_for_every_grid_cell() {
        let net = Network::<f32>::detector(9);
        let img = random_image(7, 72, 80);
        let ex = extract(&img, &net, &ExtractConfig::default()).unwrap();
        assert_eq!(
            ex.votes.in_bounds + ex.votes.dropped,
            ex.regression.len(),
            "every prediction is either splatted or counted as dropped"
        );
        assert!(
            (ex.votes.total_mass() - ex.votes.in_bounds as f64).abs() < 1e-9,
            "vote mass is conserved"
        );
    }
}
