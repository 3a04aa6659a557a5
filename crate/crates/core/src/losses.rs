//! Covariance training objectives and their analytic gradients.
//!
//! The main objective couples a triplet of translated patches through cyclic
//! translation-covariance residuals and adds an affine-covariance penalty on
//! a fifth, affinely warped patch. Two classical single-pair baselines are
//! included for ablations. All functions are pure and return both the loss
//! value and the gradient with respect to every network output involved.

use alloc::string::String;

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{AffineTransform, Vec2};
use crate::real::Real;

/// Which objective a training run optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossVariant {
    /// Triplet translation covariance + affine covariance (the full objective).
    TripAff,
    /// Triplet translation covariance only.
    Trip,
    /// Single-pair covariance + identity anchor + affine covariance.
    CovAff,
    /// Single-pair covariance + identity anchor.
    Covdet,
    /// Single-pair covariance only.
    Ddet,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::TripAff,
        LossVariant::Trip,
        LossVariant::CovAff,
        LossVariant::Covdet,
        LossVariant::Ddet,
    ];

    /// Stable lowercase name used in CLI flags, checkpoints, and logs.
    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::TripAff => "trip-aff",
            LossVariant::Trip => "trip",
            LossVariant::CovAff => "cov-aff",
            LossVariant::Covdet => "covdet",
            LossVariant::Ddet => "ddet",
        }
    }

    pub fn from_name(name: &str) -> Option<LossVariant> {
        LossVariant::ALL.iter().copied().find(|v| v.name() == name)
    }

    /// Whether the variant has an affine-covariance component at all.
    pub fn has_affine_term(&self) -> bool {
        matches!(self, LossVariant::TripAff | LossVariant::CovAff)
    }

    /// Whether the variant uses the triplet translation-covariance term
    /// (otherwise it uses the single-pair baseline term).
    pub fn is_triplet(&self) -> bool {
        matches!(self, LossVariant::TripAff | LossVariant::Trip)
    }

    /// Whether the variant anchors the reference prediction to the center.
    pub fn has_identity_term(&self) -> bool {
        matches!(self, LossVariant::CovAff | LossVariant::Covdet)
    }
}

/// Objective configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Triplet coefficient on the first patch of each pair.
    pub alpha: f64,
    /// Triplet coefficient on the second patch of each pair.
    pub beta: f64,
    /// Weight of the identity anchor in the Covdet-style objectives.
    pub identity_weight: f64,
    /// First epoch (0-based) at which the affine term becomes active.
    pub affine_enabled_epoch: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            variant: LossVariant::TripAff,
            alpha: 2.0,
            beta: 1.0,
            identity_weight: 1.0,
            affine_enabled_epoch: 5,
        }
    }
}

impl LossConfig {
    /// Validates coefficient choices for the selected variant.
    ///
    /// The triplet objectives require `alpha != beta`: their residuals carry
    /// the reference prediction with weight `alpha - beta`, so equality would
    /// decouple the reference patch entirely.
    pub fn validate(&self) -> Result<(), String> {
        use alloc::format;
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(format!(
                "alpha/beta must be finite, got {} / {}",
                self.alpha, self.beta
            ));
        }
        if self.variant.is_triplet() && self.alpha == self.beta {
            return Err(format!(
                "variant {} requires alpha != beta (got alpha = beta = {})",
                self.variant.name(),
                self.alpha
            ));
        }
        if !(self.identity_weight.is_finite() && self.identity_weight >= 0.0) {
            return Err(format!(
                "identity_weight must be finite and non-negative, got {}",
                self.identity_weight
            ));
        }
        Ok(())
    }

    /// Whether the affine component contributes at this 0-based epoch.
    pub fn affine_active(&self, epoch: usize) -> bool {
        self.variant.has_affine_term() && epoch >= self.affine_enabled_epoch
    }
}

/// Network outputs for the five patches of one tuple, `[dx, dy]` each.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TupleOutputs<T> {
    pub x: [T; 2],
    pub x1: [T; 2],
    pub x2: [T; 2],
    pub x3: [T; 2],
    pub xa: [T; 2],
}

/// Gradients of a loss with respect to each tuple output.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TupleGrads<T> {
    pub x: [T; 2],
    pub x1: [T; 2],
    pub x2: [T; 2],
    pub x3: [T; 2],
    pub xa: [T; 2],
}

/// Geometric targets of one tuple: the three triplet translations and the
/// linear part of the extra affine warp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TupleTargets {
    pub t1: Vec2,
    pub t2: Vec2,
    pub t3: Vec2,
    /// Linear 2x2 part of the warp generating `xa` from `x`.
    pub a: [[f64; 2]; 2],
}

impl TupleTargets {
    pub fn new(t1: Vec2, t2: Vec2, t3: Vec2, a: [[f64; 2]; 2]) -> Self {
        TupleTargets { t1, t2, t3, a }
    }

    pub fn from_affine(t1: Vec2, t2: Vec2, t3: Vec2, a: &AffineTransform) -> Self {
        TupleTargets {
            t1,
            t2,
            t3,
            a: a.linear,
        }
    }
}

/// Per-component breakdown of a loss evaluation. Inactive components are
/// exactly zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    /// Triplet translation-covariance term.
    pub cov_tran: f64,
    /// Affine-covariance term (after epoch gating).
    pub cov_aff: f64,
    /// Single-pair covariance term of the baselines.
    pub pairwise_cov: f64,
    /// Identity anchor term of the Covdet-style objectives.
    pub identity: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.cov_tran + self.cov_aff + self.pairwise_cov + self.identity
    }

    /// Element-wise accumulation, for batch averaging.
    pub fn add(&mut self, o: &LossComponents) {
        self.cov_tran += o.cov_tran;
        self.cov_aff += o.cov_aff;
        self.pairwise_cov += o.pairwise_cov;
        self.identity += o.identity;
    }

    pub fn scale(&mut self, s: f64) {
        self.cov_tran *= s;
        self.cov_aff *= s;
        self.pairwise_cov *= s;
        self.identity *= s;
    }
}

/// Full result of evaluating the configured objective on one tuple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOutput<T> {
    /// Sum of the enabled components.
    pub total: f64,
    pub components: LossComponents,
    pub grads: TupleGrads<T>,
}

#[inline]
fn sub2<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn norm2_sq<T: Real>(v: [T; 2]) -> T {
    v[0] * v[0] + v[1] * v[1]
}

/// Composite translation target of one triplet pair: `alpha * ti - beta * tj`.
pub fn t_ij<T: Real>(ti: [T; 2], tj: [T; 2], alpha: T, beta: T) -> [T; 2] {
    [alpha * ti[0] - beta * tj[0], alpha * ti[1] - beta * tj[1]]
}

/// Result of [`loss_cov_tran`]: value plus gradients for the four outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovTranResult<T> {
    pub value: T,
    pub d_x: [T; 2],
    pub d_x1: [T; 2],
    pub d_x2: [T; 2],
    pub d_x3: [T; 2],
}

/// Triplet translation-covariance loss over the cyclic pairs (1,2), (2,3),
/// (3,1):
///
/// ```text
/// sum_(i,j) || alpha*phi(xi) - beta*phi(xj) - (alpha-beta)*phi(x) - t_ij ||^2
/// ```
#[allow(clippy::too_many_arguments)]
pub fn loss_cov_tran<T: Real>(
    phi_x: [T; 2],
    phi_x1: [T; 2],
    phi_x2: [T; 2],
    phi_x3: [T; 2],
    t1: [T; 2],
    t2: [T; 2],
    t3: [T; 2],
    alpha: T,
    beta: T,
) -> CovTranResult<T> {
    let ab = alpha - beta;
    let residual = |pi: [T; 2], pj: [T; 2], ti: [T; 2], tj: [T; 2]| -> [T; 2] {
        let target = t_ij(ti, tj, alpha, beta);
        [
            alpha * pi[0] - beta * pj[0] - ab * phi_x[0] - target[0],
            alpha * pi[1] - beta * pj[1] - ab * phi_x[1] - target[1],
        ]
    };
    let r12 = residual(phi_x1, phi_x2, t1, t2);
    let r23 = residual(phi_x2, phi_x3, t2, t3);
    let r31 = residual(phi_x3, phi_x1, t3, t1);
    let value = norm2_sq(r12) + norm2_sq(r23) + norm2_sq(r31);
    let two = T::from_f64(2.0);
    let mk = |ra: [T; 2], rb: [T; 2]| -> [T; 2] {
        // d/dp of |r_a|^2 + |r_b|^2 where p enters r_a with +alpha and r_b
        // with -beta.
        [
            two * (alpha * ra[0] - beta * rb[0]),
            two * (alpha * ra[1] - beta * rb[1]),
        ]
    };
    let sum_r = [r12[0] + r23[0] + r31[0], r12[1] + r23[1] + r31[1]];
    CovTranResult {
        value,
        d_x: [-two * ab * sum_r[0], -two * ab * sum_r[1]],
        d_x1: mk(r12, r31),
        d_x2: mk(r23, r12),
        d_x3: mk(r31, r23),
    }
}

/// Result of [`loss_cov_aff`]: value plus gradients for both outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovAffResult<T> {
    pub value: T,
    pub d_x: [T; 2],
    pub d_xa: [T; 2],
}

/// Affine-covariance loss `|| phi(xA) - A * phi(x) ||^2`, where `A` is the
/// linear 2x2 part of the warp that generated `xA`. Predictions are
/// center-relative offsets, so only the linear action applies.
pub fn loss_cov_aff<T: Real>(phi_x: [T; 2], phi_xa: [T; 2], a: [[T; 2]; 2]) -> CovAffResult<T> {
    let ax = [
        a[0][0] * phi_x[0] + a[0][1] * phi_x[1],
        a[1][0] * phi_x[0] + a[1][1] * phi_x[1],
    ];
    let r = sub2(phi_xa, ax);
    let two = T::from_f64(2.0);
    CovAffResult {
        value: norm2_sq(r),
        // Chain rule through -A: gradient is -2 * A^T r.
        d_x: [
            -two * (a[0][0] * r[0] + a[1][0] * r[1]),
            -two * (a[0][1] * r[0] + a[1][1] * r[1]),
        ],
        d_xa: [two * r[0], two * r[1]],
    }
}

/// Result of the single-pair baseline losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairResult<T> {
    pub value: T,
    /// Pairwise component only (identity part reported separately).
    pub pairwise: T,
    /// Identity component (zero for the Ddet form).
    pub identity: T,
    pub d_x: [T; 2],
    pub d_gx: [T; 2],
}

/// Single-pair covariance baseline: `|| phi(g*x) - phi(x) - t ||^2` for a
/// pure translation `t`.
pub fn loss_ddet_baseline<T: Real>(phi_x: [T; 2], phi_gx: [T; 2], t: [T; 2]) -> PairResult<T> {
    let e = [phi_gx[0] - phi_x[0] - t[0], phi_gx[1] - phi_x[1] - t[1]];
    let two = T::from_f64(2.0);
    PairResult {
        value: norm2_sq(e),
        pairwise: norm2_sq(e),
        identity: T::zero(),
        d_x: [-two * e[0], -two * e[1]],
        d_gx: [two * e[0], two * e[1]],
    }
}

/// Single-pair covariance plus an identity anchor pulling the reference
/// prediction to the patch center:
/// `|| phi(g*x) - phi(x) - t ||^2 + identity_weight * || phi(x) ||^2`.
pub fn loss_covdet_baseline<T: Real>(
    phi_x: [T; 2],
    phi_gx: [T; 2],
    t: [T; 2],
    identity_weight: T,
) -> PairResult<T> {
    let mut out = loss_ddet_baseline(phi_x, phi_gx, t);
    let id = identity_weight * norm2_sq(phi_x);
    let two = T::from_f64(2.0);
    out.identity = id;
    out.value = out.value + id;
    out.d_x[0] = out.d_x[0] + two * identity_weight * phi_x[0];
    out.d_x[1] = out.d_x[1] + two * identity_weight * phi_x[1];
    out
}

/// Evaluates the configured objective on one tuple at the given 0-based
/// epoch. The affine component is exactly zero (value and gradients) while
/// `epoch < affine_enabled_epoch`; variants without a term report zero for
/// it at every epoch. Baselines use only the `(x, x1, t1)` pair of the tuple.
pub fn loss_total<T: Real>(
    outputs: &TupleOutputs<T>,
    targets: &TupleTargets,
    config: &LossConfig,
    epoch: usize,
) -> LossOutput<T> {
    let mut components = LossComponents::default();
    let mut grads = TupleGrads::default();
    let cast2 = |v: Vec2| -> [T; 2] { [T::from_f64(v.x), T::from_f64(v.y)] };
    if config.variant.is_triplet() {
        let r = loss_cov_tran(
            outputs.x,
            outputs.x1,
            outputs.x2,
            outputs.x3,
            cast2(targets.t1),
            cast2(targets.t2),
            cast2(targets.t3),
            T::from_f64(config.alpha),
            T::from_f64(config.beta),
        );
        components.cov_tran = r.value.into_f64();
        grads.x = r.d_x;
        grads.x1 = r.d_x1;
        grads.x2 = r.d_x2;
        grads.x3 = r.d_x3;
    } else {
        let t1 = cast2(targets.t1);
        let r = if config.variant.has_identity_term() {
            loss_covdet_baseline(
                outputs.x,
                outputs.x1,
                t1,
                T::from_f64(config.identity_weight),
            )
        } else {
            loss_ddet_baseline(outputs.x, outputs.x1, t1)
        };
        components.pairwise_cov = r.pairwise.into_f64();
        components.identity = r.identity.into_f64();
        grads.x = r.d_x;
        grads.x1 = r.d_gx;
    }
    if config.affine_active(epoch) {
        let a = [
            [T::from_f64(targets.a[0][0]), T::from_f64(targets.a[0][1])],
            [T::from_f64(targets.a[1][0]), T::from_f64(targets.a[1][1])],
        ];
        let r = loss_cov_aff(outputs.x, outputs.xa, a);
        components.cov_aff = r.value.into_f64();
        grads.x[0] = grads.x[0] + r.d_x[0];
        grads.x[1] = grads.x[1] + r.d_x[1];
        grads.xa = r.d_xa;
    }
    LossOutput {
        total: components.total(),
        components,
        grads,
    }
}
