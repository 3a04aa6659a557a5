//! Planar geometry: affine transforms, homographies, and patch warping.
//!
//! Conventions, used everywhere in this crate:
//!
//! * points are `(x, y)` with x rightward (columns) and y downward (rows);
//! * a transform acts on points, `p' = L p + t`;
//! * warping an image by `g` means the warped image at offset `o` shows the
//!   source at `g^{-1}(o)`, so the content moves *with* `g`;
//! * rotation angles are counter-clockwise in the usual mathematical sense,
//!   which under the y-down convention sends `(1, 0)` toward `(0, 1)`.

use alloc::vec::Vec;

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::image::Image;
use crate::real::Real;

/// Side length of a warped patch.
pub const PATCH_SIZE: usize = 32;
/// Offset from a patch's top-left pixel to its center: `(PATCH_SIZE - 1) / 2`.
pub const PATCH_CENTER: f64 = (PATCH_SIZE as f64 - 1.0) / 2.0;

/// A 2-vector of f64 coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

// Named methods rather than operator impls: geometry code chains them with
// the other combinators (`a.sub(c).scale(s).add(t)`), and a uniform style
// reads better than mixing operators with method calls.
#[allow(clippy::should_implement_trait)]
impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }
}

/// A 2D affine transform `p -> linear * p + translation`.
///
/// `linear` is row-major: `linear[r][c]` multiplies coordinate `c` into output
/// row `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    pub linear: [[f64; 2]; 2],
    pub translation: Vec2,
}

impl Default for AffineTransform {
    fn default() -> Self {
        AffineTransform::identity()
    }
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            translation: Vec2::default(),
        }
    }

    pub fn translation(t: Vec2) -> Self {
        AffineTransform {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            translation: t,
        }
    }

    /// Counter-clockwise rotation by `radians` (y-down: `(1,0) -> (0,1)` at
    /// a quarter turn).
    pub fn rotation(radians: f64) -> Self {
        let (s, c) = radians.sin_cos();
        AffineTransform {
            linear: [[c, -s], [s, c]],
            translation: Vec2::default(),
        }
    }

    /// Per-axis scaling.
    pub fn scale(kx: f64, ky: f64) -> Self {
        AffineTransform {
            linear: [[kx, 0.0], [0.0, ky]],
            translation: Vec2::default(),
        }
    }

    /// Shear: `x' = x + sx * y`, `y' = sy * x + y`.
    pub fn shear(sx: f64, sy: f64) -> Self {
        AffineTransform {
            linear: [[1.0, sx], [sy, 1.0]],
            translation: Vec2::default(),
        }
    }

    pub fn from_parts(linear: [[f64; 2]; 2], translation: Vec2) -> Self {
        AffineTransform {
            linear,
            translation,
        }
    }

    /// Composition `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        let a = &self.linear;
        let b = &other.linear;
        let linear = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        let translation = self.apply(other.translation);
        AffineTransform {
            linear,
            translation,
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.linear[0][0] * p.x + self.linear[0][1] * p.y + self.translation.x,
            self.linear[1][0] * p.x + self.linear[1][1] * p.y + self.translation.y,
        )
    }

    /// Applies only the linear part (for direction vectors / offsets).
    pub fn apply_linear(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.linear[0][0] * p.x + self.linear[0][1] * p.y,
            self.linear[1][0] * p.x + self.linear[1][1] * p.y,
        )
    }

    pub fn det(&self) -> f64 {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    /// Inverse transform, or `None` when the linear part is singular.
    pub fn inverse(&self) -> Option<AffineTransform> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let inv = [
            [self.linear[1][1] / d, -self.linear[0][1] / d],
            [-self.linear[1][0] / d, self.linear[0][0] / d],
        ];
        let t = Vec2::new(
            -(inv[0][0] * self.translation.x + inv[0][1] * self.translation.y),
            -(inv[1][0] * self.translation.x + inv[1][1] * self.translation.y),
        );
        Some(AffineTransform {
            linear: inv,
            translation: t,
        })
    }

    /// Largest singular value of the linear part (operator norm).
    pub fn operator_norm(&self) -> f64 {
        let (_, s1, _) = singular_values(&self.linear);
        s1
    }
}

/// Singular values of a 2x2 matrix `(s_max, s_max, s_min)` helper; returns
/// `(det, s_max, s_min)`.
fn singular_values(m: &[[f64; 2]; 2]) -> (f64, f64, f64) {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    // Frobenius norm^2 and determinant give the singular values of a 2x2.
    let f2 = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
    let tmp = (f2 * f2 / 4.0 - det * det).max(0.0).sqrt();
    let s1 = (f2 / 2.0 + tmp).max(0.0).sqrt();
    let s2 = (f2 / 2.0 - tmp).max(0.0).sqrt();
    (det, s1, s2)
}

/// A plane projective transform, row-major 3x3, stored normalized so that
/// `m[2][2] == 1` whenever it is nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Builds from a row-major matrix, normalizing the scale.
    pub fn from_matrix(mut m: [[f64; 3]; 3]) -> Self {
        let w = m[2][2];
        if w != 0.0 && w.is_finite() {
            for r in &mut m {
                for v in r.iter_mut() {
                    *v /= w;
                }
            }
        }
        Homography { m }
    }

    /// Embeds an affine transform (exact, no normalization loss).
    pub fn from_affine(a: &AffineTransform) -> Self {
        Homography {
            m: [
                [a.linear[0][0], a.linear[0][1], a.translation.x],
                [a.linear[1][0], a.linear[1][1], a.translation.y],
                [0.0, 0.0, 1.0],
            ],
        }
    }

    /// Projects a point; returns `None` when it maps to the line at infinity.
    pub fn apply(&self, p: Vec2) -> Option<Vec2> {
        let u = self.m[0][0] * p.x + self.m[0][1] * p.y + self.m[0][2];
        let v = self.m[1][0] * p.x + self.m[1][1] * p.y + self.m[1][2];
        let w = self.m[2][0] * p.x + self.m[2][1] * p.y + self.m[2][2];
        if w.abs() < 1e-12 || !w.is_finite() {
            return None;
        }
        Some(Vec2::new(u / w, v / w))
    }

    /// Matrix product `self * other` (apply `other` first), renormalized.
    pub fn compose(&self, other: &Homography) -> Homography {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
            }
        }
        Homography::from_matrix(m)
    }

    /// Inverse via the adjugate, or `None` for singular matrices.
    pub fn inverse(&self) -> Option<Homography> {
        let m = &self.m;
        let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
        let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
        let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
        let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
        if det.abs() < 1e-15 || !det.is_finite() {
            return None;
        }
        let adj = [
            [
                c00,
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                c01,
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                c02,
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = adj[r][c] / det;
            }
        }
        Some(Homography::from_matrix(out))
    }

    /// Jacobian of the projection at `p` (the local affine approximation),
    /// or `None` at the line at infinity.
    pub fn jacobian_at(&self, p: Vec2) -> Option<[[f64; 2]; 2]> {
        let m = &self.m;
        let u = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
        let v = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() < 1e-12 || !w.is_finite() {
            return None;
        }
        let iw = 1.0 / w;
        let iw2 = iw * iw;
        Some([
            [
                m[0][0] * iw - u * m[2][0] * iw2,
                m[0][1] * iw - u * m[2][1] * iw2,
            ],
            [
                m[1][0] * iw - v * m[2][0] * iw2,
                m[1][1] * iw - v * m[2][1] * iw2,
            ],
        ])
    }
}

/// Provenance of a warped patch: which image it came from and the exact
/// transform used, sufficient to re-derive the pixels from the source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub image_index: usize,
    pub center: Vec2,
    pub transform: AffineTransform,
}

/// A PATCH_SIZE x PATCH_SIZE crop warped out of a source image.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T> {
    /// Row-major pixels, length `PATCH_SIZE * PATCH_SIZE`.
    pub pixels: Vec<T>,
    /// How the pixels were produced, when generated from a source image.
    pub provenance: Option<Provenance>,
}

impl<T: Real> Patch<T> {
    pub fn new(pixels: Vec<T>) -> Self {
        assert_eq!(pixels.len(), PATCH_SIZE * PATCH_SIZE);
        Patch {
            pixels,
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }
}

/// Warps a patch out of `source` around `center`, transformed by `t`.
///
/// The output pixel at grid position `(i, j)` (row, column) corresponds to
/// the patch-local offset `o = (j - PATCH_CENTER, i - PATCH_CENTER)` and
/// samples the source bilinearly at `center + t^{-1}(o)`, so the patch
/// content moves with `t`: translating by `d` shifts content by `d`, and an
/// affine `A` shows the neighborhood of `center` transformed by `A`.
///
/// Returns `None` when `t` is singular. Samples outside the image clamp to
/// the border; callers that need exact pixels keep the footprint interior
/// (see [`warp_footprint`]).
pub fn warp_patch<T: Real>(
    source: &Image<T>,
    center: Vec2,
    t: &AffineTransform,
) -> Option<Patch<T>> {
    let inv = t.inverse()?;
    let mut pixels = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
    for i in 0..PATCH_SIZE {
        for j in 0..PATCH_SIZE {
            let o = Vec2::new(j as f64 - PATCH_CENTER, i as f64 - PATCH_CENTER);
            let s = center.add(inv.apply(o));
            pixels.push(source.sample_clamped(s.x, s.y));
        }
    }
    Some(Patch::new(pixels))
}

/// Axis-aligned bounding box, `(min, max)` corners inclusive.
pub type Bounds = (Vec2, Vec2);

/// Bounding box of the source-image footprint of [`warp_patch`] for `t`
/// around `center`: the image of the patch square under `t^{-1}`, which for
/// an affine map is the hull of the four warped corners.
pub fn warp_footprint(center: Vec2, t: &AffineTransform) -> Option<Bounds> {
    let inv = t.inverse()?;
    let c = PATCH_CENTER;
    let corners = [
        Vec2::new(-c, -c),
        Vec2::new(c, -c),
        Vec2::new(-c, c),
        Vec2::new(c, c),
    ];
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for corner in corners {
        let p = center.add(inv.apply(corner));
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    Some((min, max))
}

/// An elliptical measurement region: the image of a disc of radius `radius`
/// around `center` under the local affine map `shape`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipticalRegion {
    pub center: Vec2,
    /// Maps the unit disc scaled by `radius` onto the region.
    pub shape: [[f64; 2]; 2],
    pub radius: f64,
}

impl EllipticalRegion {
    /// A circle (identity shape).
    pub fn circle(center: Vec2, radius: f64) -> Self {
        EllipticalRegion {
            center,
            shape: [[1.0, 0.0], [0.0, 1.0]],
            radius,
        }
    }

    pub fn area(&self) -> f64 {
        let det = self.shape[0][0] * self.shape[1][1] - self.shape[0][1] * self.shape[1][0];
        core::f64::consts::PI * self.radius * self.radius * det.abs()
    }

    /// Singular values of the shape matrix `(s_max, s_min)`.
    pub fn shape_singular_values(&self) -> (f64, f64) {
        let (_, s1, s2) = singular_values(&self.shape);
        (s1, s2)
    }

    /// Point on the region boundary at parameter angle `theta`.
    pub fn boundary_point(&self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        let u = Vec2::new(self.radius * c, self.radius * s);
        Vec2::new(
            self.center.x + self.shape[0][0] * u.x + self.shape[0][1] * u.y,
            self.center.y + self.shape[1][0] * u.x + self.shape[1][1] * u.y,
        )
    }
}

/// Projects the circular support region of a keypoint into the other view
/// using the local affine approximation (Jacobian) of `h` at the center.
///
/// Returns `None` when the center projects to infinity or the local Jacobian
/// is singular / non-finite — such regions are not comparable.
pub fn project_region(h: &Homography, center: Vec2, radius: f64) -> Option<EllipticalRegion> {
    let projected = h.apply(center)?;
    let j = h.jacobian_at(center)?;
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !det.is_finite() || det.abs() < 1e-12 {
        return None;
    }
    if !projected.x.is_finite() || !projected.y.is_finite() {
        return None;
    }
    Some(EllipticalRegion {
        center: projected,
        shape: j,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_is_y_down_counter_clockwise() {
        let r = AffineTransform::rotation(core::f64::consts::FRAC_PI_2);
        let p = r.apply(Vec2::new(1.0, 0.0));
        assert!(p.dist(Vec2::new(0.0, 1.0)) < 1e-12);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let t = AffineTransform::translation(Vec2::new(1.0, 0.0));
        let r = AffineTransform::rotation(core::f64::consts::FRAC_PI_2);
        // Rotate then translate: (1,0) -> (0,1) -> (1,1).
        let p = t.compose(&r).apply(Vec2::new(1.0, 0.0));
        assert!(p.dist(Vec2::new(1.0, 1.0)) < 1e-12);
        // Translate then rotate: (1,0) -> (2,0) -> (0,2).
        let q = r.compose(&t).apply(Vec2::new(1.0, 0.0));
        assert!(q.dist(Vec2::new(0.0, 2.0)) < 1e-12);
    }

    #[test]
    fn inverse_round_trips() {
        let a = AffineTransform::rotation(0.3)
            .compose(&AffineTransform::shear(0.1, -0.05))
            .compose(&AffineTransform::scale(1.1, 0.9))
            .compose(&AffineTransform::translation(Vec2::new(3.0, -2.0)));
        let inv = a.inverse().unwrap();
        let p = Vec2::new(5.0, 7.0);
        assert!(inv.apply(a.apply(p)).dist(p) < 1e-10);
        let id = a.compose(&inv);
        assert!((id.linear[0][0] - 1.0).abs() < 1e-12);
        assert!(id.translation.norm() < 1e-10);
    }

    #[test]
    fn singular_affine_has_no_inverse() {
        let a = AffineTransform::scale(1.0, 0.0);
        assert!(a.inverse().is_none());
    }

    #[test]
    fn homography_matches_affine_embedding() {
        let a = AffineTransform::rotation(0.4)
            .compose(&AffineTransform::translation(Vec2::new(2.0, 5.0)));
        let h = Homography::from_affine(&a);
        let p = Vec2::new(-3.0, 4.0);
        assert!(h.apply(p).unwrap().dist(a.apply(p)) < 1e-12);
        let j = h.jacobian_at(p).unwrap();
        for (jr, ar) in j.iter().zip(a.linear.iter()) {
            for (jv, av) in jr.iter().zip(ar.iter()) {
                assert!((jv - av).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projective_jacobian_matches_finite_differences() {
        let h = Homography::from_matrix([
            [0.9, 0.1, 4.0],
            [-0.2, 1.1, -3.0],
            [1e-4, -2e-4, 1.0],
        ]);
        let p = Vec2::new(120.0, 80.0);
        let j = h.jacobian_at(p).unwrap();
        let eps = 1e-4;
        let fx = h
            .apply(Vec2::new(p.x + eps, p.y))
            .unwrap()
            .sub(h.apply(Vec2::new(p.x - eps, p.y)).unwrap())
            .scale(0.5 / eps);
        let fy = h
            .apply(Vec2::new(p.x, p.y + eps))
            .unwrap()
            .sub(h.apply(Vec2::new(p.x, p.y - eps)).unwrap())
            .scale(0.5 / eps);
        assert!((j[0][0] - fx.x).abs() < 1e-6);
        assert!((j[1][0] - fx.y).abs() < 1e-6);
        assert!((j[0][1] - fy.x).abs() < 1e-6);
        assert!((j[1][1] - fy.y).abs() < 1e-6);
    }

    #[test]
    fn warp_by_translation_moves_content_with_the_transform() {
        // A bright pixel at (20, 16), patch centered at (20.5, 16.5) so every
        // sample lands on the integer grid. Translating by (+2, 0) must show
        // the pixel two columns to the right of where the identity shows it.
        let mut img: Image<f64> = Image::zeros(64, 64);
        img.set(20, 16, 1.0);
        let center = Vec2::new(20.5, 16.5);
        let id = warp_patch(&img, center, &AffineTransform::identity()).unwrap();
        let t = AffineTransform::translation(Vec2::new(2.0, 0.0));
        let shifted = warp_patch(&img, center, &t).unwrap();
        let find = |p: &Patch<f64>| -> (usize, usize) {
            let mut best = (0, 0);
            let mut val = -1.0;
            for i in 0..PATCH_SIZE {
                for j in 0..PATCH_SIZE {
                    if p.pixels[i * PATCH_SIZE + j] > val {
                        val = p.pixels[i * PATCH_SIZE + j];
                        best = (i, j);
                    }
                }
            }
            best
        };
        let (i0, j0) = find(&id);
        let (i1, j1) = find(&shifted);
        assert_eq!((i0, j0), (15, 15));
        assert_eq!(i1, i0);
        assert_eq!(j1 as i64 - j0 as i64, 2);
    }

    #[test]
    fn footprint_bounds_every_sampled_point() {
        let t = AffineTransform::rotation(0.7)
            .compose(&AffineTransform::scale(0.9, 1.1));
        let center = Vec2::new(100.0, 90.0);
        let (min, max) = warp_footprint(center, &t).unwrap();
        let inv = t.inverse().unwrap();
        for i in 0..PATCH_SIZE {
            for j in 0..PATCH_SIZE {
                let o = Vec2::new(j as f64 - PATCH_CENTER, i as f64 - PATCH_CENTER);
                let s = center.add(inv.apply(o));
                assert!(s.x >= min.x - 1e-9 && s.x <= max.x + 1e-9);
                assert!(s.y >= min.y - 1e-9 && s.y <= max.y + 1e-9);
            }
        }
    }

    #[test]
    fn project_region_identity_and_scale() {
        let c = Vec2::new(50.0, 60.0);
        let r = project_region(&Homography::identity(), c, 16.0).unwrap();
        assert!(r.center.dist(c) < 1e-12);
        assert!((r.area() - core::f64::consts::PI * 256.0).abs() < 1e-9);
        let two = Homography::from_affine(&AffineTransform::scale(2.0, 2.0));
        let r2 = project_region(&two, c, 16.0).unwrap();
        assert!((r2.area() - 4.0 * core::f64::consts::PI * 256.0).abs() < 1e-9);
    }
}
