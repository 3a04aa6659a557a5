//! Detector evaluation: repeatability under a ground-truth homography and
//! descriptor matching score.
//!
//! Both metrics follow the standard region-overlap protocol: a keypoint's
//! support circle in one image corresponds to a keypoint in the other image
//! when the intersection-over-union of one region with the projection of
//! the other exceeds a threshold (0.4 by default). Projection uses the
//! local affine approximation of the homography at the keypoint, so a
//! circle maps to an ellipse.
//!
//! Overlap is computed in both frames and averaged, which makes
//! [`region_overlap`] symmetric under swapping the images (for affine
//! ground truth the two directions agree exactly; for perspective maps the
//! local approximations differ slightly and the average resolves the
//! asymmetry). Circle–circle cases use the closed-form lens area; anything
//! anisotropic is clipped as a 128-gon, so identical regions score exactly
//! 1 and disjoint regions exactly 0.
//!
//! The matching score uses a deliberately simple gradient-histogram
//! descriptor (see [`simple_descriptor`]): scores are comparable between
//! detectors evaluated by this crate, not against published numbers
//! produced with other descriptors.

use alloc::vec;
use alloc::vec::Vec;

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::extractor::Keypoint;
use crate::geometry::{project_region, EllipticalRegion, Homography, Vec2};
use crate::image::Image;
use crate::real::Real;

/// Default correspondence threshold: regions correspond when their overlap
/// exceeds 40%.
pub const OVERLAP_THRESHOLD: f64 = 0.4;

/// Vertices used to approximate an ellipse when no closed form applies.
const POLYGON_VERTICES: usize = 128;

/// Result of [`region_overlap`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Overlap {
    /// Intersection over union in `[0, 1]`.
    pub ratio: f64,
    /// The projection was unusable (center at infinity or singular local
    /// Jacobian); `ratio` is 0 by definition in that case.
    pub degenerate: bool,
}

/// An above-threshold correspondence between keypoint `a` of the first
/// image and keypoint `b` of the second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapPair {
    pub a: usize,
    pub b: usize,
    pub ratio: f64,
}

/// Image extent used for shared-view filtering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Frame { width, height }
    }

    pub fn of<T: Real>(image: &Image<T>) -> Self {
        Frame {
            width: image.width(),
            height: image.height(),
        }
    }

    /// Same convention as vote splatting: a continuous position is inside
    /// when it lies within `[0, W-1] x [0, H-1]`.
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y >= 0.0
            && p.y <= (self.height - 1) as f64
    }
}

/// Repeatability of one image pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepeatabilityResult {
    /// First-image keypoints whose projected center lands in the second image.
    pub shared_a: usize,
    /// Second-image keypoints whose projected center lands in the first image.
    pub shared_b: usize,
    /// One-to-one correspondences with overlap above threshold.
    pub correspondences: usize,
    /// `correspondences / min(shared_a, shared_b)`, or `None` when no
    /// keypoints survive shared-view filtering (undefined, not zero).
    pub repeatability: Option<f64>,
}

/// Matching score of one image pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchingResult {
    /// Mutual nearest-neighbor descriptor matches that are also geometric
    /// correspondences (overlap above threshold).
    pub correct: usize,
    /// Points extracted per image (the larger of the two lists).
    pub extracted: usize,
    /// `correct / extracted`, or `None` when either shared view is empty.
    pub score: Option<f64>,
}

// --- region overlap -------------------------------------------------------

/// Column Gram entries of a shape matrix: (|col0|^2, |col1|^2, col0.col1).
fn gram(shape: &[[f64; 2]; 2]) -> (f64, f64, f64) {
    let c0 = Vec2::new(shape[0][0], shape[1][0]);
    let c1 = Vec2::new(shape[0][1], shape[1][1]);
    (c0.dot(c0), c1.dot(c1), c0.dot(c1))
}

/// If the shape is a scaled rotation (maps circles to circles), returns the
/// scale factor.
fn isotropic_scale(shape: &[[f64; 2]; 2]) -> Option<f64> {
    let (a, b, c) = gram(shape);
    let m = a.max(b);
    if m <= 0.0 || !m.is_finite() {
        return None;
    }
    let tol = 1e-9 * m;
    if (a - b).abs() <= tol && c.abs() <= tol {
        Some(((a + b) * 0.5).sqrt())
    } else {
        None
    }
}

/// Area of the intersection of two discs with radii `r1`, `r2` and center
/// distance `d` (the classical lens formula).
fn circle_lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    let r_min = r1.min(r2);
    if d <= (r1 - r2).abs() {
        return core::f64::consts::PI * r_min * r_min;
    }
    let clamp = |v: f64| v.clamp(-1.0, 1.0);
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
    let a2 = clamp((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2));
    let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    r1 * r1 * a1.acos() + r2 * r2 * a2.acos() - 0.5 * k.max(0.0).sqrt()
}

/// Boundary polygon of a region, counter-clockwise (positive signed area).
fn region_polygon(region: &EllipticalRegion) -> Vec<Vec2> {
    let step = core::f64::consts::TAU / POLYGON_VERTICES as f64;
    let mut pts: Vec<Vec2> = (0..POLYGON_VERTICES)
        .map(|i| region.boundary_point(i as f64 * step))
        .collect();
    if signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    pts
}

/// Shoelace signed area.
fn signed_area(pts: &[Vec2]) -> f64 {
    let mut acc = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let q = pts[(i + 1) % pts.len()];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}

/// Clips a convex subject polygon against a convex counter-clockwise
/// clipper (Sutherland–Hodgman). Returns the intersection polygon.
fn clip_convex(mut subject: Vec<Vec2>, clipper: &[Vec2]) -> Vec<Vec2> {
    // Signed side of `p` relative to the directed edge a->b: positive on
    // the interior (left) side for a counter-clockwise clipper.
    let side = |a: Vec2, b: Vec2, p: Vec2| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    for i in 0..clipper.len() {
        if subject.len() < 3 {
            return Vec::new();
        }
        let a = clipper[i];
        let b = clipper[(i + 1) % clipper.len()];
        // Tolerance keeps shared boundaries (e.g. a polygon clipped by
        // itself) classified as inside despite rounding.
        let eps = -1e-9 * (1.0 + a.dist(b));
        let mut out = Vec::with_capacity(subject.len() + 4);
        for (i, &p) in subject.iter().enumerate() {
            let q = subject[(i + 1) % subject.len()];
            let (sp, sq) = (side(a, b, p), side(a, b, q));
            let (in_p, in_q) = (sp >= eps, sq >= eps);
            let crossing = |sp: f64, sq: f64| {
                let denom = sp - sq;
                if denom.abs() < f64::MIN_POSITIVE {
                    return p;
                }
                let t = sp / denom;
                Vec2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
            };
            match (in_p, in_q) {
                (true, true) => out.push(q),
                (true, false) => out.push(crossing(sp, sq)),
                (false, true) => {
                    out.push(crossing(sp, sq));
                    out.push(q);
                }
                (false, false) => {}
            }
        }
        subject = out;
    }
    if subject.len() < 3 {
        Vec::new()
    } else {
        subject
    }
}

/// Intersection-over-union of two regions expressed in the same frame.
fn region_iou(p: &EllipticalRegion, q: &EllipticalRegion) -> f64 {
    // Cheap reject: centers further apart than the summed max extents.
    let reach = p.radius * p.shape_singular_values().0 + q.radius * q.shape_singular_values().0;
    let d = p.center.dist(q.center);
    if d >= reach {
        return 0.0;
    }
    if let (Some(sp), Some(sq)) = (isotropic_scale(&p.shape), isotropic_scale(&q.shape)) {
        let (r1, r2) = (p.radius * sp, q.radius * sq);
        let inter = circle_lens_area(r1, r2, d);
        let union = core::f64::consts::PI * (r1 * r1 + r2 * r2) - inter;
        if union <= 0.0 {
            return 0.0;
        }
        return (inter / union).clamp(0.0, 1.0);
    }
    // Both regions are discretized the same way, so identical regions clip
    // to themselves and score exactly 1.
    let pp = region_polygon(p);
    let qp = region_polygon(q);
    let (ap, aq) = (signed_area(&pp), signed_area(&qp));
    let inter = signed_area(&clip_convex(pp, &qp)).max(0.0).min(ap.min(aq));
    let union = ap + aq - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Overlap between the support region of `a` (first image) and the support
/// region of `b` (second image) under the ground-truth homography `h_ab`
/// mapping first-image coordinates to second-image coordinates.
///
/// The ratio is the average of the IoU evaluated in each frame, making the
/// result symmetric: swapping `(a, b)` and passing the inverse homography
/// changes the ratio by at most rounding error.
pub fn region_overlap(a: &Keypoint, b: &Keypoint, h_ab: &Homography) -> Overlap {
    const DEGENERATE: Overlap = Overlap {
        ratio: 0.0,
        degenerate: true,
    };
    let Some(h_ba) = h_ab.inverse() else {
        return DEGENERATE;
    };
    let circle_a = EllipticalRegion::circle(a.pos, a.radius);
    let circle_b = EllipticalRegion::circle(b.pos, b.radius);
    let Some(b_in_a) = project_region(&h_ba, b.pos, b.radius) else {
        return DEGENERATE;
    };
    let Some(a_in_b) = project_region(h_ab, a.pos, a.radius) else {
        return DEGENERATE;
    };
    let ratio = 0.5 * (region_iou(&circle_a, &b_in_a) + region_iou(&circle_b, &a_in_b));
    Overlap {
        ratio,
        degenerate: false,
    }
}

// --- repeatability --------------------------------------------------------

/// Indices of keypoints whose center, projected by `h`, lands inside the
/// other image's frame. Keypoints whose centers project to infinity are
/// excluded.
pub fn shared_view_indices(kps: &[Keypoint], h: &Homography, other: Frame) -> Vec<usize> {
    kps.iter()
        .enumerate()
        .filter(|(_, kp)| h.apply(kp.pos).is_some_and(|p| other.contains(p)))
        .map(|(i, _)| i)
        .collect()
}

/// Greedy one-to-one matching by descending overlap over the shared-view
/// keypoints; returns the selected pairs (each strictly above `threshold`)
/// in selection order. Ties are broken by index pair, so the result is
/// deterministic.
pub fn greedy_correspondences(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_ab: &Homography,
    frame_a: Frame,
    frame_b: Frame,
    threshold: f64,
) -> Vec<OverlapPair> {
    let shared_a = shared_view_indices(kps_a, h_ab, frame_b);
    let shared_b = match h_ab.inverse() {
        Some(h_ba) => shared_view_indices(kps_b, &h_ba, frame_a),
        None => return Vec::new(),
    };
    let mut candidates = Vec::new();
    for &ia in &shared_a {
        for &ib in &shared_b {
            let overlap = region_overlap(&kps_a[ia], &kps_b[ib], h_ab);
            if overlap.ratio > threshold {
                candidates.push(OverlapPair {
                    a: ia,
                    b: ib,
                    ratio: overlap.ratio,
                });
            }
        }
    }
    candidates.sort_by(|p, q| {
        q.ratio
            .partial_cmp(&p.ratio)
            .expect("overlap ratios are finite")
            .then_with(|| (p.a, p.b).cmp(&(q.a, q.b)))
    });
    let mut used_a = vec![false; kps_a.len()];
    let mut used_b = vec![false; kps_b.len()];
    let mut selected = Vec::new();
    for pair in candidates {
        if !used_a[pair.a] && !used_b[pair.b] {
            used_a[pair.a] = true;
            used_b[pair.b] = true;
            selected.push(pair);
        }
    }
    selected
}

/// Repeatability of the pair: the fraction of shared-view keypoints (the
/// smaller side) that found an above-threshold one-to-one correspondence.
pub fn repeatability(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_ab: &Homography,
    frame_a: Frame,
    frame_b: Frame,
    threshold: f64,
) -> RepeatabilityResult {
    let shared_a = shared_view_indices(kps_a, h_ab, frame_b).len();
    let shared_b = match h_ab.inverse() {
        Some(h_ba) => shared_view_indices(kps_b, &h_ba, frame_a).len(),
        None => 0,
    };
    let denom = shared_a.min(shared_b);
    if denom == 0 {
        return RepeatabilityResult {
            shared_a,
            shared_b,
            correspondences: 0,
            repeatability: None,
        };
    }
    let correspondences =
        greedy_correspondences(kps_a, kps_b, h_ab, frame_a, frame_b, threshold).len();
    RepeatabilityResult {
        shared_a,
        shared_b,
        correspondences,
        repeatability: Some(correspondences as f64 / denom as f64),
    }
}

// --- descriptor and matching ---------------------------------------------

/// Length of [`simple_descriptor`]'s output: 4x4 spatial cells times 8
/// orientation bins.
pub const DESCRIPTOR_LEN: usize = 128;

/// A local descriptor with a degeneracy flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: [f64; DESCRIPTOR_LEN],
    /// The support window had (numerically) no gradient energy; `values`
    /// is all zeros rather than an arbitrary normalized direction.
    pub low_texture: bool,
}

/// Gradient-histogram descriptor over the keypoint's 32x32 support window:
/// 4x4 spatial cells, 8 orientation bins weighted by gradient magnitude,
/// L2-normalized, clipped at 0.2, renormalized.
///
/// This is a fixed-orientation stand-in for a full-featured descriptor —
/// deliberately not rotation- or scale-invariant. Matching scores computed
/// with it compare detectors evaluated by this crate against each other,
/// not against results produced with other descriptors.
pub fn simple_descriptor<T: Real>(image: &Image<T>, kp: &Keypoint) -> Descriptor {
    const WINDOW: usize = 32;
    // Sample a one-pixel apron so central differences cover the window.
    const PAD: usize = WINDOW + 2;
    let half = (WINDOW as f64 - 1.0) / 2.0;
    let mut grid = [[0.0f64; PAD]; PAD];
    for (v, row) in grid.iter_mut().enumerate() {
        for (u, cell) in row.iter_mut().enumerate() {
            let x = kp.pos.x + (u as f64 - 1.0 - half);
            let y = kp.pos.y + (v as f64 - 1.0 - half);
            *cell = image.sample_clamped(x, y).into_f64();
        }
    }
    let mut values = [0.0f64; DESCRIPTOR_LEN];
    for i in 0..WINDOW {
        for j in 0..WINDOW {
            let (v, u) = (i + 1, j + 1);
            let gx = (grid[v][u + 1] - grid[v][u - 1]) * 0.5;
            let gy = (grid[v + 1][u] - grid[v - 1][u]) * 0.5;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx); // (-pi, pi]
            let mut bin = ((theta + core::f64::consts::PI) / core::f64::consts::TAU * 8.0) as usize;
            if bin >= 8 {
                bin = 0; // theta == pi wraps around
            }
            let cell = (i / 8) * 4 + j / 8;
            values[cell * 8 + bin] += mag;
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Descriptor {
            values: [0.0; DESCRIPTOR_LEN],
            low_texture: true,
        };
    }
    for v in values.iter_mut() {
        *v = (*v / norm).min(0.2);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in values.iter_mut() {
        *v /= norm;
    }
    Descriptor {
        values,
        low_texture: false,
    }
}

fn descriptor_distance_sq(a: &Descriptor, b: &Descriptor) -> f64 {
    a.values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Mutual nearest-neighbor pairs by squared descriptor distance. Ties
/// resolve to the lowest index, so the result is deterministic.
pub fn mutual_nearest_neighbors(da: &[Descriptor], db: &[Descriptor]) -> Vec<(usize, usize)> {
    if da.is_empty() || db.is_empty() {
        return Vec::new();
    }
    let nearest = |from: &[Descriptor], to: &[Descriptor]| -> Vec<usize> {
        from.iter()
            .map(|d| {
                let mut best = (f64::INFINITY, 0);
                for (j, e) in to.iter().enumerate() {
                    let dist = descriptor_distance_sq(d, e);
                    if dist < best.0 {
                        best = (dist, j);
                    }
                }
                best.1
            })
            .collect()
    };
    let nn_ab = nearest(da, db);
    let nn_ba = nearest(db, da);
    nn_ab
        .iter()
        .enumerate()
        .filter(|&(i, &j)| nn_ba[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}

/// Matching score: mutual nearest-neighbor descriptor matches between the
/// shared-view keypoints, counted as correct when the matched pair is also
/// a geometric correspondence (overlap above `threshold`), divided by the
/// number of points extracted per image.
pub fn matching_score<T: Real>(
    image_a: &Image<T>,
    image_b: &Image<T>,
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h_ab: &Homography,
    threshold: f64,
) -> MatchingResult {
    let (frame_a, frame_b) = (Frame::of(image_a), Frame::of(image_b));
    let extracted = kps_a.len().max(kps_b.len());
    let shared_a = shared_view_indices(kps_a, h_ab, frame_b);
    let shared_b = match h_ab.inverse() {
        Some(h_ba) => shared_view_indices(kps_b, &h_ba, frame_a),
        None => Vec::new(),
    };
    if shared_a.is_empty() || shared_b.is_empty() || extracted == 0 {
        return MatchingResult {
            correct: 0,
            extracted,
            score: None,
        };
    }
    let desc = |image: &Image<T>, kps: &[Keypoint], idx: &[usize]| -> Vec<Descriptor> {
        idx.iter()
            .map(|&i| simple_descriptor(image, &kps[i]))
            .collect()
    };
    let da = desc(image_a, kps_a, &shared_a);
    let db = desc(image_b, kps_b, &shared_b);
    let correct = mutual_nearest_neighbors(&da, &db)
        .into_iter()
        .filter(|&(i, j)| {
            region_overlap(&kps_a[shared_a[i]], &kps_b[shared_b[j]], h_ab).ratio > threshold
        })
        .count();
    MatchingResult {
        correct,
        extracted,
        score: Some(correct as f64 / extracted as f64),
    }
}

// --- aggregation -----------------------------------------------------------

/// Mean and population standard deviation over per-run metric values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std_dev: f64,
    pub runs: usize,
}

/// Aggregates one metric across training runs. Returns `None` for an empty
/// slice. The standard deviation is the population form (divide by n), so
/// a single run reports exactly 0.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Aggregate {
        mean,
        std_dev: var.sqrt(),
        runs: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::SUPPORT_RADIUS;
    use crate::geometry::AffineTransform;
    use crate::rng::{stream_rng, STREAM_GRADCHECK};
    use rand::Rng;

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint {
            pos: Vec2::new(x, y),
            score: 1.0,
            radius: SUPPORT_RADIUS,
        }
    }

    /// Scanline-integration IoU oracle for two regions in one frame: for a
    /// dense set of horizontal lines, each convex region cuts an interval;
    /// intersection and union lengths integrate to areas.
    fn iou_oracle(p: &EllipticalRegion, q: &EllipticalRegion) -> f64 {
        let interval = |r: &EllipticalRegion, y: f64| -> Option<(f64, f64)> {
            // Points satisfy (d_x, d_y)^T M (d_x, d_y) <= radius^2 with
            // M = (S S^T)^{-1}; fixing y gives a quadratic in x.
            let s = &r.shape;
            let g = [
                [
                    s[0][0] * s[0][0] + s[0][1] * s[0][1],
                    s[0][0] * s[1][0] + s[0][1] * s[1][1],
                ],
                [
                    s[0][0] * s[1][0] + s[0][1] * s[1][1],
                    s[1][0] * s[1][0] + s[1][1] * s[1][1],
                ],
            ];
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let m = [
                [g[1][1] / det, -g[0][1] / det],
                [-g[1][0] / det, g[0][0] / det],
            ];
            let dy = y - r.center.y;
            // m00 dx^2 + 2 m01 dx dy + m11 dy^2 = radius^2
            let a = m[0][0];
            let b = 2.0 * m[0][1] * dy;
            let c = m[1][1] * dy * dy - r.radius * r.radius;
            let disc = b * b - 4.0 * a * c;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            Some((
                r.center.x + (-b - sq) / (2.0 * a),
                r.center.x + (-b + sq) / (2.0 * a),
            ))
        };
        let extent = |r: &EllipticalRegion| r.radius * r.shape_singular_values().0;
        let y_lo = (p.center.y - extent(p)).min(q.center.y - extent(q));
        let y_hi = (p.center.y + extent(p)).max(q.center.y + extent(q));
        let steps = 200_000;
        let dy = (y_hi - y_lo) / steps as f64;
        let (mut inter, mut union) = (0.0, 0.0);
        for i in 0..steps {
            let y = y_lo + (i as f64 + 0.5) * dy;
            match (interval(p, y), interval(q, y)) {
                (Some((a0, a1)), Some((b0, b1))) => {
                    inter += (a1.min(b1) - a0.max(b0)).max(0.0);
                    union += (a1.max(b1) - a0.min(b0)).min(a1 - a0 + b1 - b0);
                }
                (Some((a0, a1)), None) | (None, Some((a0, a1))) => union += a1 - a0,
                (None, None) => {}
            }
        }
        inter / union
    }

    #[test]
    fn identical_regions_overlap_exactly_one() {
        let h = Homography::identity();
        let o = region_overlap(&kp(40.0, 40.0), &kp(40.0, 40.0), &h);
        assert_eq!(o.ratio, 1.0);
        assert!(!o.degenerate);
    }

    #[test]
    fn disjoint_regions_overlap_exactly_zero() {
        let h = Homography::identity();
        let o = region_overlap(&kp(10.0, 10.0), &kp(10.0 + 2.0 * SUPPORT_RADIUS + 1.0, 10.0), &h);
        assert_eq!(o.ratio, 0.0);
        assert!(!o.degenerate);
    }

    #[test]
    fn offset_circles_match_scanline_oracle() {
        // Radius-16 circles offset by 16 px under identity: the analytic
        // lens path must agree with the scanline integration oracle.
        let h = Homography::identity();
        let ours = region_overlap(&kp(30.0, 30.0), &kp(46.0, 30.0), &h).ratio;
        let a = EllipticalRegion::circle(Vec2::new(30.0, 30.0), 16.0);
        let b = EllipticalRegion::circle(Vec2::new(46.0, 30.0), 16.0);
        let oracle = iou_oracle(&a, &b);
        assert!(
            (ours - oracle).abs() < 1e-3,
            "ours {ours} vs oracle {oracle}"
        );
    }

    #[test]
    fn anisotropic_overlap_matches_scanline_oracle() {
        // A genuinely anisotropic affinity forces the polygon path.
        let warp = AffineTransform::rotation(0.4)
            .compose(&AffineTransform::scale(1.15, 0.85))
            .compose(&AffineTransform::shear(0.15, -0.1));
        let h = Homography::from_affine(&warp);
        let a = kp(50.0, 42.0);
        let pb = warp.apply(Vec2::new(44.0, 40.0));
        let b = kp(pb.x, pb.y);
        let ours = region_overlap(&a, &b, &h).ratio;

        // Oracle in the first frame: circle A against B pulled back.
        let h_ba = h.inverse().unwrap();
        let circle_a = EllipticalRegion::circle(a.pos, a.radius);
        let b_in_a = project_region(&h_ba, b.pos, b.radius).unwrap();
        let oracle = iou_oracle(&circle_a, &b_in_a);
        assert!(
            (ours - oracle).abs() < 1e-3,
            "ours {ours} vs oracle {oracle}"
        );
        assert!(ours > 0.3, "fixture should overlap substantially");
    }

    #[test]
    fn overlap_is_symmetric_under_swap() {
        let mut rng = stream_rng(31, STREAM_GRADCHECK, 90);
        for case in 0..20 {
            let warp = AffineTransform::rotation(rng.gen_range(0.0..core::f64::consts::TAU))
                .compose(&AffineTransform::scale(
                    rng.gen_range(0.85..1.15),
                    rng.gen_range(0.85..1.15),
                ))
                .compose(&AffineTransform::shear(
                    rng.gen_range(-0.15..0.15),
                    rng.gen_range(-0.15..0.15),
                ))
                .compose(&AffineTransform::translation(Vec2::new(
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                )));
            let h = Homography::from_affine(&warp);
            let a = kp(rng.gen_range(30.0..90.0), rng.gen_range(30.0..90.0));
            let near = warp.apply(a.pos);
            let b = kp(
                near.x + rng.gen_range(-10.0..10.0),
                near.y + rng.gen_range(-10.0..10.0),
            );
            let forward = region_overlap(&a, &b, &h).ratio;
            let backward = region_overlap(&b, &a, &h.inverse().unwrap()).ratio;
            assert!(
                (forward - backward).abs() < 1e-6,
                "case {case}: {forward} vs {backward}"
            );
        }
    }

    #[test]
    fn identical_sets_have_repeatability_exactly_one() {
        let kps: Vec<Keypoint> = (0..12)
            .map(|i| kp(20.0 + 7.0 * i as f64, 30.0 + 5.0 * (i % 4) as f64))
            .collect();
        let frame = Frame::new(128, 128);
        let r = repeatability(
            &kps,
            &kps,
            &Homography::identity(),
            frame,
            frame,
            OVERLAP_THRESHOLD,
        );
        assert_eq!(r.shared_a, 12);
        assert_eq!(r.shared_b, 12);
        assert_eq!(r.correspondences, 12);
        assert_eq!(r.repeatability, Some(1.0));
    }

    #[test]
    fn non_overlapping_sets_have_repeatability_zero() {
        let a: Vec<Keypoint> = (0..4).map(|i| kp(40.0, 40.0 + 100.0 * i as f64)).collect();
        let b: Vec<Keypoint> = (0..4).map(|i| kp(400.0, 40.0 + 100.0 * i as f64)).collect();
        let frame = Frame::new(512, 512);
        let r = repeatability(
            &a,
            &b,
            &Homography::identity(),
            frame,
            frame,
            OVERLAP_THRESHOLD,
        );
        assert_eq!(r.correspondences, 0);
        assert_eq!(r.repeatability, Some(0.0));
    }

    #[test]
    fn empty_shared_view_is_reported_absent() {
        // Everything projects far outside the other frame.
        let shift = Homography::from_affine(&AffineTransform::translation(Vec2::new(
            10_000.0, 0.0,
        )));
        let a = vec![kp(10.0, 10.0)];
        let b = vec![kp(20.0, 10.0)];
        let frame = Frame::new(64, 64);
        let r = repeatability(&a, &b, &shift, frame, frame, OVERLAP_THRESHOLD);
        assert_eq!(r.repeatability, None);
        assert_eq!((r.shared_a, r.shared_b), (0, 0));
    }

    /// Maximum-cardinality matching on the thresholded overlap graph by
    /// bitmask dynamic programming — exhaustive ground truth for small sets.
    fn optimal_correspondences(
        kps_a: &[Keypoint],
        kps_b: &[Keypoint],
        h: &Homography,
        threshold: f64,
    ) -> usize {
        let edges: Vec<Vec<usize>> = kps_a
            .iter()
            .map(|a| {
                kps_b
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| region_overlap(a, b, h).ratio > threshold)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        let mut best = 0;
        let mut stack = vec![(0usize, 0u32, 0usize)]; // (row, used mask, count)
        while let Some((row, mask, count)) = stack.pop() {
            if row == edges.len() {
                best = best.max(count);
                continue;
            }
            stack.push((row + 1, mask, count)); // leave row unmatched
            for &j in &edges[row] {
                if mask & (1 << j) == 0 {
                    stack.push((row + 1, mask | (1 << j), count + 1));
                }
            }
        }
        best
    }

    #[test]
    fn greedy_matching_equals_optimal_on_collision_free_sets() {
        // Well-separated clusters: each keypoint overlaps at most one
        // candidate, where greedy is provably optimal.
        let mut rng = stream_rng(32, STREAM_GRADCHECK, 91);
        let frame = Frame::new(400, 400);
        for case in 0..10 {
            let h = Homography::identity();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for i in 0..8 {
                let base = Vec2::new(
                    50.0 + 100.0 * (i % 4) as f64,
                    80.0 + 200.0 * (i / 4) as f64,
                );
                a.push(kp(base.x, base.y));
                // Partner within correspondence range for half the points.
                if i % 2 == 0 {
                    b.push(kp(
                        base.x + rng.gen_range(-4.0..4.0),
                        base.y + rng.gen_range(-4.0..4.0),
                    ));
                } else {
                    b.push(kp(base.x + 45.0, base.y)); // too far to overlap 40%
                }
            }
            let greedy =
                greedy_correspondences(&a, &b, &h, frame, frame, OVERLAP_THRESHOLD).len();
            let optimal = optimal_correspondences(&a, &b, &h, OVERLAP_THRESHOLD);
            assert_eq!(greedy, optimal, "case {case}");
            assert_eq!(greedy, 4);
        }
    }

    #[test]
    fn greedy_matching_is_within_one_of_optimal_on_crowded_sets() {
        let mut rng = stream_rng(33, STREAM_GRADCHECK, 92);
        let frame = Frame::new(200, 200);
        let h = Homography::identity();
        for case in 0..15 {
            // Crowded: keypoints pack into a small area so overlap chains form.
            let a: Vec<Keypoint> = (0..7)
                .map(|_| kp(rng.gen_range(40.0..90.0), rng.gen_range(40.0..90.0)))
                .collect();
            let b: Vec<Keypoint> = (0..7)
                .map(|_| kp(rng.gen_range(40.0..90.0), rng.gen_range(40.0..90.0)))
                .collect();
            let greedy =
                greedy_correspondences(&a, &b, &h, frame, frame, OVERLAP_THRESHOLD).len();
            let optimal = optimal_correspondences(&a, &b, &h, OVERLAP_THRESHOLD);
            assert!(
                greedy <= optimal && optimal <= greedy + 1,
                "case {case}: greedy {greedy} vs optimal {optimal}"
            );
        }
    }

    #[test]
    fn repeatability_is_monotone_in_threshold() {
        let mut rng = stream_rng(34, STREAM_GRADCHECK, 93);
        let frame = Frame::new(300, 300);
        let h = Homography::identity();
        let a: Vec<Keypoint> = (0..15)
            .map(|_| kp(rng.gen_range(20.0..280.0), rng.gen_range(20.0..280.0)))
            .collect();
        let b: Vec<Keypoint> = a
            .iter()
            .map(|p| {
                kp(
                    p.pos.x + rng.gen_range(-12.0..12.0),
                    p.pos.y + rng.gen_range(-12.0..12.0),
                )
            })
            .collect();
        let mut last = f64::INFINITY;
        for t in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
            let r = repeatability(&a, &b, &h, frame, frame, t)
                .repeatability
                .unwrap();
            assert!(
                r <= last + 1e-12,
                "repeatability rose from {last} to {r} at threshold {t}"
            );
            last = r;
        }
    }

    #[test]
    fn constant_window_descriptor_is_flagged_low_texture() {
        let image = Image::<f64>::from_vec(64, 64, vec![0.5; 64 * 64]);
        let d = simple_descriptor(&image, &kp(32.0, 32.0));
        assert!(d.low_texture);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    fn textured_image(seed: u64) -> Image<f64> {
        let mut rng = stream_rng(seed, STREAM_GRADCHECK, 94);
        let data: Vec<f64> = (0..96 * 96).map(|_| rng.gen_range(0.0..1.0)).collect();
        Image::from_vec(96, 96, data)
    }

    #[test]
    fn descriptor_is_deterministic_and_normalized() {
        let image = textured_image(5);
        let d1 = simple_descriptor(&image, &kp(40.3, 51.7));
        let d2 = simple_descriptor(&image, &kp(40.3, 51.7));
        assert_eq!(d1, d2);
        assert!(!d1.low_texture);
        let norm = d1.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");
    }

    #[test]
    fn identical_pair_has_matching_score_one() {
        let image = textured_image(6);
        let kps: Vec<Keypoint> = (0..10)
            .map(|i| kp(24.0 + 5.0 * i as f64, 30.0 + 3.0 * (i % 3) as f64))
            .collect();
        let m = matching_score(
            &image,
            &image,
            &kps,
            &kps,
            &Homography::identity(),
            OVERLAP_THRESHOLD,
        );
        assert_eq!(m.correct, 10);
        assert_eq!(m.extracted, 10);
        assert_eq!(m.score, Some(1.0));
    }

    #[test]
    fn matching_score_never_exceeds_repeatability() {
        // Same fixture family as the evaluation protocol: keypoints with
        // genuine correspondences plus clutter, scored both ways.
        let mut rng = stream_rng(35, STREAM_GRADCHECK, 95);
        let image_a = textured_image(7);
        let image_b = textured_image(8);
        let frame = Frame::new(96, 96);
        for case in 0..5 {
            let h = Homography::identity();
            let mut a: Vec<Keypoint> = (0..12)
                .map(|_| kp(rng.gen_range(18.0..78.0), rng.gen_range(18.0..78.0)))
                .collect();
            let mut b: Vec<Keypoint> = a
                .iter()
                .map(|p| {
                    kp(
                        (p.pos.x + rng.gen_range(-6.0..6.0)).clamp(0.0, 95.0),
                        (p.pos.y + rng.gen_range(-6.0..6.0)).clamp(0.0, 95.0),
                    )
                })
                .collect();
            a.push(kp(10.0, 88.0));
            b.push(kp(88.0, 10.0));
            let r = repeatability(&a, &b, &h, frame, frame, OVERLAP_THRESHOLD)
                .repeatability
                .unwrap();
            let m = matching_score(&image_a, &image_b, &a, &b, &h, OVERLAP_THRESHOLD)
                .score
                .unwrap();
            assert!(m <= r + 1e-12, "case {case}: matching {m} > repeatability {r}");
        }
    }

    #[test]
    fn random_descriptors_match_near_chance() {
        // With keypoints scattered over a large frame, mutual
        // nearest-neighbor matches on noise descriptors are rarely also
        // geometric correspondences.
        let mut rng = stream_rng(36, STREAM_GRADCHECK, 96);
        let n = 128;
        let random_desc = |rng: &mut _| -> Vec<Descriptor> {
            (0..n)
                .map(|_| {
                    let mut values = [0.0; DESCRIPTOR_LEN];
                    for v in values.iter_mut() {
                        *v = rand::Rng::gen_range(rng, 0.0..1.0);
                    }
                    Descriptor {
                        values,
                        low_texture: false,
                    }
                })
                .collect()
        };
        let da = random_desc(&mut rng);
        let db = random_desc(&mut rng);
        let a: Vec<Keypoint> = (0..n)
            .map(|_| kp(rng.gen_range(0.0..511.0), rng.gen_range(0.0..511.0)))
            .collect();
        let b: Vec<Keypoint> = (0..n)
            .map(|_| kp(rng.gen_range(0.0..511.0), rng.gen_range(0.0..511.0)))
            .collect();
        let h = Homography::identity();
        let correct = mutual_nearest_neighbors(&da, &db)
            .into_iter()
            .filter(|&(i, j)| region_overlap(&a[i], &b[j], &h).ratio > OVERLAP_THRESHOLD)
            .count();
        let score = correct as f64 / n as f64;
        assert!(score < 0.05, "chance-level matching scored {score}");
    }

    #[test]
    fn aggregate_reports_population_statistics() {
        let agg = aggregate(&[60.0, 62.0, 64.0]).unwrap();
        assert_eq!(agg.mean, 62.0);
        assert!((agg.std_dev - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(agg.runs, 3);

        let single = aggregate(&[0.75]).unwrap();
        assert_eq!(single.mean, 0.75);
        assert_eq!(single.std_dev, 0.0);
        assert!(aggregate(&[]).is_none());
    }
}
