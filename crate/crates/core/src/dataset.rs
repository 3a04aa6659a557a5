//! Training-tuple generation and evaluation-sequence bookkeeping.
//!
//! A training sample is a tuple of five patches warped out of one source
//! image: a reference patch `x` (affine-warped and jittered so no feature is
//! forced at its center), three translated copies `x1, x2, x3`, and an
//! affine-warped copy `xA`. All five are warped directly from the source
//! with composed transforms — never by resampling `x` — so the relations
//! `xi = ti * x` and `xA = A * x` hold exactly in the continuous model and
//! up to one bilinear interpolation in the discrete one.

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::geometry::{
    warp_patch, AffineTransform, Homography, Patch, Provenance, Vec2, PATCH_CENTER,
};
use crate::image::{standardize, Image};
use crate::real::Real;
use crate::rng::{stream_rng, STREAM_TUPLE};

/// Ranges that drive tuple augmentation. All ranges are inclusive `[lo, hi]`
/// pairs; degenerate ranges (`lo == hi`) are valid and make that draw
/// deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationConfig {
    /// Per-axis scale factors for the affine warps.
    pub scale: [f64; 2],
    /// Per-axis shear coefficients for the affine warps.
    pub shear: [f64; 2],
    /// Rotation for the affine warps, in degrees.
    pub rotation_degrees: [f64; 2],
    /// Reference-patch translation jitter, pixels per axis.
    pub jitter: [f64; 2],
    /// Triplet translations `t1..t3`, pixels per axis.
    pub translation: [f64; 2],
    /// Number of tuples one generation pass produces.
    pub tuple_count: u64,
    /// Root seed; per-tuple RNG streams derive from `(seed, tuple index)`.
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            scale: [0.85, 1.15],
            shear: [-0.15, 0.15],
            rotation_degrees: [0.0, 360.0],
            jitter: [-5.0, 5.0],
            translation: [-6.0, 6.0],
            tuple_count: 256_000,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// A config whose every draw is the identity: unit scale, no shear, no
    /// rotation, no jitter, no translation. Useful as a fixture; the tuple
    /// degenerates to five copies of the same patch.
    pub fn neutral() -> Self {
        AugmentationConfig {
            scale: [1.0, 1.0],
            shear: [0.0, 0.0],
            rotation_degrees: [0.0, 0.0],
            jitter: [0.0, 0.0],
            translation: [0.0, 0.0],
            ..AugmentationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !(ordered(self.scale)
            && ordered(self.shear)
            && ordered(self.rotation_degrees)
            && ordered(self.jitter)
            && ordered(self.translation))
        {
            return Err(GenError::BadConfig {
                what: "every range must be a finite [lo, hi] pair with lo <= hi",
            });
        }
        if self.scale[0] <= 0.0 {
            return Err(GenError::BadConfig {
                what: "scale range must be strictly positive",
            });
        }
        if self.shear[0].abs().max(self.shear[1].abs()) >= 1.0 {
            return Err(GenError::BadConfig {
                what: "shear magnitudes must stay below 1 so warps stay invertible",
            });
        }
        Ok(())
    }
}

/// Errors from tuple generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenError {
    /// The source image cannot host a full worst-case footprint.
    ImageTooSmall {
        width: usize,
        height: usize,
        /// Minimum dimension (both axes) the config's margin requires.
        required: usize,
    },
    /// The augmentation ranges are malformed.
    BadConfig { what: &'static str },
}

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenError::ImageTooSmall {
                width,
                height,
                required,
            } => write!(
                f,
                "source image is {width}x{height} but the augmentation ranges \
                 need at least {required}x{required} pixels"
            ),
            GenError::BadConfig { what } => write!(f, "bad augmentation config: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GenError {}

/// One training sample: the reference patch, its three translated copies,
/// the affine-warped copy, and the generating parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTuple<T> {
    pub x: Patch<T>,
    pub x1: Patch<T>,
    pub x2: Patch<T>,
    pub x3: Patch<T>,
    pub xa: Patch<T>,
    /// Translations relating `x` to `x1..x3`, in patch pixels.
    pub t1: Vec2,
    pub t2: Vec2,
    pub t3: Vec2,
    /// The extra affine warp relating `x` to `xa` (pure linear part).
    pub a: AffineTransform,
}

/// Worst-case distance (in source pixels) from a sampled center to any pixel
/// a tuple's five warps may read, plus one pixel of bilinear support.
///
/// The patch half-diagonal, jitter, and translations are all mapped through
/// the inverse reference warp, whose operator norm is at most
/// `1 / (scale_min * (1 - shear_max))`: the rotation is orthogonal, the
/// per-axis scale contracts by at worst `scale_min`, and a unit shear's
/// smallest singular value is at least `1 - shear_max`. The `xA` patch adds
/// a second inverse warp of the patch half-diagonal before the same bound
/// applies, which dominates for strong warps.
pub fn required_margin(config: &AugmentationConfig) -> f64 {
    let scale_min = config.scale[0].min(config.scale[1]);
    let shear_max = config.shear[0].abs().max(config.shear[1].abs());
    let sigma = scale_min * (1.0 - shear_max);
    let r_patch = PATCH_CENTER * core::f64::consts::SQRT_2;
    let j_max = config.jitter[0].abs().max(config.jitter[1].abs());
    let t_max = config.translation[0].abs().max(config.translation[1].abs());
    let diag = core::f64::consts::SQRT_2;
    // x / xi: offsets up to the half-diagonal plus jitter plus translation,
    // all through one inverse reference warp.
    let triplet_reach = (r_patch + (j_max + t_max) * diag) / sigma;
    // xA: the offset first passes through the inverse extra warp, then picks
    // up jitter, then passes through the inverse reference warp.
    let affine_reach = (r_patch / sigma + j_max * diag) / sigma;
    triplet_reach.max(affine_reach) + 1.0
}

/// Smallest square source image `sample_tuple` accepts under `config`.
pub fn minimum_image_size(config: &AugmentationConfig) -> usize {
    // Centers need a non-empty interval [margin, dim-1-margin].
    (2.0 * required_margin(config)).floor() as usize + 2
}

fn draw(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    rng.gen_range(range[0]..=range[1])
}

/// One affine warp with the config's scale, shear, and rotation ranges:
/// `R(theta) * Shear * Scale`, scale applied first.
fn draw_affine(rng: &mut impl Rng, config: &AugmentationConfig) -> AffineTransform {
    let theta = draw(rng, config.rotation_degrees).to_radians();
    let shear_x = draw(rng, config.shear);
    let shear_y = draw(rng, config.shear);
    let scale_x = draw(rng, config.scale);
    let scale_y = draw(rng, config.scale);
    AffineTransform::rotation(theta).compose(
        &AffineTransform::shear(shear_x, shear_y)
            .compose(&AffineTransform::scale(scale_x, scale_y)),
    )
}

/// Samples one training tuple from `source` using the caller's RNG.
///
/// Draw order is part of the format: center (x, y), reference affine
/// (rotation, shear x/y, scale x/y), jitter (x, y), translations t1..t3
/// (x, y each), extra affine for `xA` (same parameter order). Changing the
/// order changes every seeded dataset.
pub fn sample_tuple<T: Real>(
    source: &Image<T>,
    config: &AugmentationConfig,
    rng: &mut impl Rng,
) -> Result<PatchTuple<T>, GenError> {
    sample_tuple_from(source, 0, config, rng)
}

fn sample_tuple_from<T: Real>(
    source: &Image<T>,
    image_index: usize,
    config: &AugmentationConfig,
    rng: &mut impl Rng,
) -> Result<PatchTuple<T>, GenError> {
    config.validate()?;
    let margin = required_margin(config);
    let (w, h) = (source.width(), source.height());
    if (w as f64 - 1.0) - margin < margin || (h as f64 - 1.0) - margin < margin {
        return Err(GenError::ImageTooSmall {
            width: w,
            height: h,
            required: minimum_image_size(config),
        });
    }
    let cx = rng.gen_range(margin..=(w as f64 - 1.0 - margin));
    let cy = rng.gen_range(margin..=(h as f64 - 1.0 - margin));
    let center = Vec2::new(cx, cy);

    let a_ref = draw_affine(rng, config);
    let jitter = Vec2::new(draw(rng, config.jitter), draw(rng, config.jitter));
    let t1 = Vec2::new(draw(rng, config.translation), draw(rng, config.translation));
    let t2 = Vec2::new(draw(rng, config.translation), draw(rng, config.translation));
    let t3 = Vec2::new(draw(rng, config.translation), draw(rng, config.translation));
    let a2 = draw_affine(rng, config);

    // The reference warp, then each variant composed on top of it from the
    // source, so every patch is resampled exactly once.
    let base = AffineTransform::translation(jitter).compose(&a_ref);
    let cut = |t: &AffineTransform| -> Patch<T> {
        // Invertibility is guaranteed by the validated ranges.
        let mut patch = warp_patch(source, center, t).expect("validated warp is invertible");
        normalize_patch(&mut patch);
        patch.with_provenance(Provenance {
            image_index,
            center,
            transform: *t,
        })
    };
    Ok(PatchTuple {
        x: cut(&base),
        x1: cut(&AffineTransform::translation(t1).compose(&base)),
        x2: cut(&AffineTransform::translation(t2).compose(&base)),
        x3: cut(&AffineTransform::translation(t3).compose(&base)),
        xa: cut(&a2.compose(&base)),
        t1,
        t2,
        t3,
        a: a2,
    })
}

/// Standardizes a patch in place: zero mean, unit variance (with the global
/// variance floor, so constant patches become all zeros).
pub fn normalize_patch<T: Real>(patch: &mut Patch<T>) {
    standardize(&mut patch.pixels);
}

/// Deterministic, randomly-accessible tuple source over a set of images.
///
/// Tuple `i` is produced from its own RNG stream derived from
/// `(config.seed, i)`, so generation can be chunked, parallelized, or
/// resumed at any index without changing a single pixel.
pub struct TupleGenerator<'a, T> {
    sources: &'a [Image<T>],
    config: AugmentationConfig,
}

impl<'a, T: Real> TupleGenerator<'a, T> {
    /// Validates the config and that every source image can host the
    /// worst-case footprint.
    pub fn new(
        sources: &'a [Image<T>],
        config: AugmentationConfig,
    ) -> Result<Self, GenError> {
        config.validate()?;
        if sources.is_empty() {
            return Err(GenError::BadConfig {
                what: "at least one source image is required",
            });
        }
        let required = minimum_image_size(&config);
        for img in sources {
            if img.width() < required || img.height() < required {
                return Err(GenError::ImageTooSmall {
                    width: img.width(),
                    height: img.height(),
                    required,
                });
            }
        }
        Ok(TupleGenerator { sources, config })
    }

    pub fn config(&self) -> &AugmentationConfig {
        &self.config
    }

    /// Number of tuples this generator is configured to produce.
    pub fn len(&self) -> u64 {
        self.config.tuple_count
    }

    pub fn is_empty(&self) -> bool {
        self.config.tuple_count == 0
    }

    /// Generates tuple `index`. Infallible after construction: sizes and
    /// ranges were validated, and every warp drawn from them is invertible.
    pub fn tuple_at(&self, index: u64) -> PatchTuple<T> {
        let mut rng = stream_rng(self.config.seed, STREAM_TUPLE, index);
        let image_index = if self.sources.len() > 1 {
            rng.gen_range(0..self.sources.len())
        } else {
            0
        };
        sample_tuple_from(&self.sources[image_index], image_index, &self.config, &mut rng)
            .expect("generator inputs were validated at construction")
    }

    /// Iterates tuples `0 .. len()` in order.
    pub fn iter(&self) -> impl Iterator<Item = PatchTuple<T>> + '_ {
        (0..self.len()).map(move |i| self.tuple_at(i))
    }
}

/// Errors validating an evaluation sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceError {
    /// Need one homography per non-reference image.
    CountMismatch { images: usize, homographies: usize },
    /// A ground-truth homography is not invertible.
    Singular { image_index: usize },
    /// A sequence needs the reference plus at least one other image.
    TooFewImages { images: usize },
}

impl fmt::Display for SequenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceError::CountMismatch {
                images,
                homographies,
            } => write!(
                f,
                "sequence has {images} images but {homographies} homographies \
                 (need one per non-reference image)"
            ),
            SequenceError::Singular { image_index } => {
                write!(f, "homography to image {image_index} is singular")
            }
            SequenceError::TooFewImages { images } => {
                write!(f, "sequence has {images} image(s); need at least 2")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SequenceError {}

/// An evaluation sequence: image 0 is the reference; `homographies[i]` maps
/// reference coordinates into image `i + 1`.
#[derive(Clone, Debug)]
pub struct SequenceDataset<T> {
    images: Vec<Image<T>>,
    homographies: Vec<Homography>,
    illumination_only: bool,
}

impl<T: Real> SequenceDataset<T> {
    /// Builds a sequence with explicit ground-truth homographies.
    pub fn new(
        images: Vec<Image<T>>,
        homographies: Vec<Homography>,
    ) -> Result<Self, SequenceError> {
        Self::build(images, homographies, false)
    }

    /// Builds an illumination-only sequence (same viewpoint): the
    /// homographies are all identity.
    pub fn illumination_only(images: Vec<Image<T>>) -> Result<Self, SequenceError> {
        let n = images.len().saturating_sub(1);
        Self::build(images, vec![Homography::identity(); n], true)
    }

    fn build(
        images: Vec<Image<T>>,
        homographies: Vec<Homography>,
        illumination_only: bool,
    ) -> Result<Self, SequenceError> {
        if images.len() < 2 {
            return Err(SequenceError::TooFewImages {
                images: images.len(),
            });
        }
        if homographies.len() != images.len() - 1 {
            return Err(SequenceError::CountMismatch {
                images: images.len(),
                homographies: homographies.len(),
            });
        }
        for (i, h) in homographies.iter().enumerate() {
            if h.inverse().is_none() {
                return Err(SequenceError::Singular { image_index: i + 1 });
            }
        }
        Ok(SequenceDataset {
            images,
            homographies,
            illumination_only,
        })
    }

    pub fn images(&self) -> &[Image<T>] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least two images
    }

    pub fn is_illumination_only(&self) -> bool {
        self.illumination_only
    }

    /// Homography mapping reference coordinates into image `index`
    /// (identity for the reference itself).
    pub fn homography_to(&self, index: usize) -> Homography {
        if index == 0 {
            Homography::identity()
        } else {
            self.homographies[index - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::geometry::warp_footprint;

    fn test_image(w: usize, h: usize, seed: u64) -> Image<f64> {
        let mut rng = stream_rng(seed, STREAM_TUPLE, 1_000_000);
        let data = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
        Image::from_vec(w, h, data)
    }

    #[test]
    fn neutral_config_degenerates_to_copies() {
        let img = test_image(96, 96, 3);
        let mut cfg = AugmentationConfig::neutral();
        cfg.seed = 11;
        let mut rng = stream_rng(cfg.seed, STREAM_TUPLE, 0);
        let tuple = sample_tuple(&img, &cfg, &mut rng).unwrap();
        assert_eq!(tuple.t1, Vec2::new(0.0, 0.0));
        assert_eq!(tuple.a, AffineTransform::identity());
        assert_eq!(tuple.x.pixels, tuple.x1.pixels);
        assert_eq!(tuple.x.pixels, tuple.x2.pixels);
        assert_eq!(tuple.x.pixels, tuple.x3.pixels);
        assert_eq!(tuple.x.pixels, tuple.xa.pixels);
    }

    #[test]
    fn fixed_seed_reproduces_tuples() {
        let img = vec![test_image(160, 140, 5)];
        let cfg = AugmentationConfig {
            tuple_count: 4,
            seed: 99,
            ..AugmentationConfig::default()
        };
        let gen1 = TupleGenerator::new(&img, cfg).unwrap();
        let gen2 = TupleGenerator::new(&img, cfg).unwrap();
        for i in 0..cfg.tuple_count {
            assert_eq!(gen1.tuple_at(i), gen2.tuple_at(i));
        }
    }

    #[test]
    fn too_small_image_reports_required_size() {
        let img = test_image(64, 64, 1);
        let cfg = AugmentationConfig::default();
        let mut rng = stream_rng(0, STREAM_TUPLE, 0);
        let err = sample_tuple(&img, &cfg, &mut rng).unwrap_err();
        match err {
            GenError::ImageTooSmall { required, .. } => {
                assert!(required > 64, "required={required}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn patches_are_standardized() {
        let img = test_image(160, 160, 8);
        let cfg = AugmentationConfig::default();
        let mut rng = stream_rng(7, STREAM_TUPLE, 3);
        let tuple = sample_tuple(&img, &cfg, &mut rng).unwrap();
        for patch in [&tuple.x, &tuple.x1, &tuple.x2, &tuple.x3, &tuple.xa] {
            let (mean, var) = crate::image::mean_variance(&patch.pixels);
            assert!(mean.abs() < 1e-9, "mean={mean}");
            assert!((var - 1.0).abs() < 1e-9, "var={var}");
        }
    }

    #[test]
    fn provenance_reproduces_pixels() {
        let imgs = vec![test_image(170, 150, 21)];
        let cfg = AugmentationConfig {
            tuple_count: 6,
            seed: 4,
            ..AugmentationConfig::default()
        };
        let generator = TupleGenerator::new(&imgs, cfg).unwrap();
        for i in 0..cfg.tuple_count {
            let tuple = generator.tuple_at(i);
            for patch in [&tuple.x, &tuple.x1, &tuple.x2, &tuple.x3, &tuple.xa] {
                let p = patch.provenance.expect("generated patches carry provenance");
                let mut again = warp_patch(&imgs[p.image_index], p.center, &p.transform).unwrap();
                normalize_patch(&mut again);
                let max_diff = patch
                    .pixels
                    .iter()
                    .zip(again.pixels.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(max_diff < 1e-6, "tuple {i}: max diff {max_diff}");
            }
        }
    }

    #[test]
    fn footprints_respect_margin() {
        // Fuzz: no warp in a generated tuple may read outside the source.
        let imgs = vec![test_image(128, 132, 13)];
        let cfg = AugmentationConfig {
            tuple_count: 10_000,
            seed: 17,
            ..AugmentationConfig::default()
        };
        let generator = TupleGenerator::new(&imgs, cfg).unwrap();
        let (w, h) = (imgs[0].width() as f64, imgs[0].height() as f64);
        for i in 0..cfg.tuple_count {
            let tuple = generator.tuple_at(i);
            for patch in [&tuple.x, &tuple.x1, &tuple.x2, &tuple.x3, &tuple.xa] {
                let p = patch.provenance.unwrap();
                let (min, max) = warp_footprint(p.center, &p.transform).unwrap();
                assert!(
                    min.x >= 0.0 && min.y >= 0.0 && max.x <= w - 1.0 && max.y <= h - 1.0,
                    "tuple {i} footprint [{min:?}, {max:?}] leaves the {w}x{h} image"
                );
            }
        }
    }

    #[test]
    fn translations_cover_their_range_uniformly() {
        let imgs = vec![test_image(150, 150, 2)];
        let cfg = AugmentationConfig {
            tuple_count: 10_000,
            seed: 23,
            ..AugmentationConfig::default()
        };
        let generator = TupleGenerator::new(&imgs, cfg).unwrap();
        let mut values = Vec::new();
        for i in 0..cfg.tuple_count {
            let t = generator.tuple_at(i);
            for v in [t.t1, t.t2, t.t3] {
                values.push(v.x);
                values.push(v.y);
            }
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((-6.0..-5.8).contains(&min), "min={min}");
        assert!((5.8..=6.0).contains(&max), "max={max}");
        // Chi-square over 12 unit-wide bins; 60,000 draws, ~5,000 per bin.
        // 99.9th percentile of chi2(11) is ~31.3; use a loose 40.
        let mut bins = [0usize; 12];
        for &v in &values {
            let b = (((v + 6.0) / 1.0) as usize).min(11);
            bins[b] += 1;
        }
        let expected = values.len() as f64 / 12.0;
        let chi2: f64 = bins
            .iter()
            .map(|&n| {
                let d = n as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 40.0, "chi2={chi2}, bins={bins:?}");
    }

    #[test]
    fn sequence_validation() {
        let imgs = vec![test_image(40, 40, 1), test_image(40, 40, 2)];
        let seq =
            SequenceDataset::new(imgs.clone(), vec![Homography::identity()]).unwrap();
        assert!(!seq.is_illumination_only());
        assert_eq!(seq.len(), 2);

        let lit = SequenceDataset::illumination_only(imgs.clone()).unwrap();
        assert!(lit.is_illumination_only());
        assert_eq!(lit.homography_to(1), Homography::identity());

        let err = SequenceDataset::new(imgs.clone(), vec![]).unwrap_err();
        assert_eq!(
            err,
            SequenceError::CountMismatch {
                images: 2,
                homographies: 0
            }
        );

        let singular = Homography::from_matrix([
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ]);
        let err = SequenceDataset::new(imgs, vec![singular]).unwrap_err();
        assert_eq!(err, SequenceError::Singular { image_index: 1 });
    }
}
