//! Twice-differentiable convex loss functions.
//!
//! Every loss maps a label `y` and a real-valued prediction `t` to a value
//! together with first and second derivatives with respect to `t`. All
//! families are convex in `t` with uniformly bounded curvature, which is what
//! the solver and the influence expansion rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tol::ENVELOPE_GRID;

/// What labels a loss accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpace {
    /// Labels restricted to `{-1, +1}`.
    Binary,
    /// Any finite real label.
    Real,
}

impl TargetSpace {
    pub(crate) fn validate<T: Real>(self, y: T) -> Result<()> {
        match self {
            TargetSpace::Binary => {
                if y == T::one() || y == -T::one() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "binary loss requires labels in {{-1, +1}}, got {y}"
                    )))
                }
            }
            TargetSpace::Real => {
                if y.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("non-finite label".into()))
                }
            }
        }
    }
}

/// Loss value and derivatives with respect to the prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval<T> {
    /// `L(y, t)`.
    pub value: T,
    /// `dL/dt`.
    pub d1: T,
    /// `d^2 L / dt^2`.
    pub d2: T,
}

/// Supported loss families.
///
/// Parameters are validated at construction and on deserialization. The
/// non-smooth hinge loss is intentionally absent; asking for it by name in a
/// serialized spec produces a configuration error pointing at
/// `smoothed_hinge`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawLossSpec<T>",
    into = "RawLossSpec<T>",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
pub enum SmoothLoss<T: Real> {
    /// `L(y, t) = ln(1 + exp(-y t))` for `y` in `{-1, +1}`.
    LogisticClassification,
    /// Symmetric super-linear regression loss
    /// `L(y, t) = 2 (ln(1 + exp(r)) - ln 2) - r` with `r = y - t`; zero at
    /// `r = 0`, asymptotically `|r| - 2 ln 2`.
    LogisticRegression,
    /// Huber loss with threshold `delta > 0`, with the curvature jump at
    /// `|r| = delta` replaced by a linear ramp over a window of half-width
    /// `min(5e-4, delta / 2)` so the loss is twice differentiable.
    Huber { delta: T },
    /// Quadratically smoothed hinge for `y` in `{-1, +1}`: with margin
    /// deficit `v = 1 - y t`, the penalty is `0` for `v <= -2 eps`,
    /// `(v + 2 eps)^2 / (8 eps)` on the window, and `v` for `v >= 2 eps`.
    /// The uniform gap to the exact hinge is exactly `eps / 2`.
    SmoothedHinge { eps: T },
}

#[derive(Serialize, Deserialize)]
#[serde(
    tag = "family",
    rename_all = "snake_case",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
enum RawLossSpec<T> {
    LogisticClassification,
    LogisticRegression,
    Huber { delta: T },
    SmoothedHinge { eps: T },
    Hinge,
}

impl<T: Real> TryFrom<RawLossSpec<T>> for SmoothLoss<T> {
    type Error = Error;
    fn try_from(raw: RawLossSpec<T>) -> Result<Self> {
        match raw {
            RawLossSpec::LogisticClassification => Ok(SmoothLoss::LogisticClassification),
            RawLossSpec::LogisticRegression => Ok(SmoothLoss::LogisticRegression),
            RawLossSpec::Huber { delta } => SmoothLoss::huber(delta),
            RawLossSpec::SmoothedHinge { eps } => SmoothLoss::smoothed_hinge(eps),
            RawLossSpec::Hinge => Err(Error::InvalidConfig(
                "the hinge loss is not differentiable; use smoothed_hinge with an eps parameter"
                    .into(),
            )),
        }
    }
}

impl<T: Real> From<SmoothLoss<T>> for RawLossSpec<T> {
    fn from(l: SmoothLoss<T>) -> Self {
        match l {
            SmoothLoss::LogisticClassification => RawLossSpec::LogisticClassification,
            SmoothLoss::LogisticRegression => RawLossSpec::LogisticRegression,
            SmoothLoss::Huber { delta } => RawLossSpec::Huber { delta },
            SmoothLoss::SmoothedHinge { eps } => RawLossSpec::SmoothedHinge { eps },
        }
    }
}

/// `ln(1 + exp(x))` without overflow for large positive `x`.
pub(crate) fn ln1p_exp<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid `1 / (1 + exp(-x))`, stable at both tails.
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> SmoothLoss<T> {
    pub fn logistic_classification() -> Self {
        SmoothLoss::LogisticClassification
    }

    pub fn logistic_regression() -> Self {
        SmoothLoss::LogisticRegression
    }

    /// Huber loss; `delta` must be finite and positive.
    pub fn huber(delta: T) -> Result<Self> {
        if !delta.is_finite() || delta <= T::zero() {
            return Err(Error::InvalidConfig(format!(
                "huber delta must be finite and positive, got {delta}"
            )));
        }
        Ok(SmoothLoss::Huber { delta })
    }

    /// Smoothed hinge; `eps` must be finite and positive.
    pub fn smoothed_hinge(eps: T) -> Result<Self> {
        if !eps.is_finite() || eps <= T::zero() {
            return Err(Error::InvalidConfig(format!(
                "smoothed_hinge eps must be finite and positive, got {eps}"
            )));
        }
        Ok(SmoothLoss::SmoothedHinge { eps })
    }

    /// Which labels this loss accepts.
    pub fn target_space(&self) -> TargetSpace {
        match self {
            SmoothLoss::LogisticClassification | SmoothLoss::SmoothedHinge { .. } => {
                TargetSpace::Binary
            }
            SmoothLoss::LogisticRegression | SmoothLoss::Huber { .. } => TargetSpace::Real,
        }
    }

    /// A uniform upper bound on `d^2 L / dt^2` over all labels and
    /// predictions.
    pub fn curvature_bound(&self) -> T {
        match *self {
            SmoothLoss::LogisticClassification => T::of(0.25),
            SmoothLoss::LogisticRegression => T::of(0.5),
            SmoothLoss::Huber { .. } => T::one(),
            SmoothLoss::SmoothedHinge { eps } => T::one() / (T::of(4.0) * eps),
        }
    }

    /// Evaluates the loss and its first two prediction derivatives, after
    /// validating the label against [`SmoothLoss::target_space`] and
    /// requiring a finite prediction.
    pub fn evaluate(&self, y: T, t: T) -> Result<LossEval<T>> {
        self.target_space().validate(y)?;
        if !t.is_finite() {
            return Err(Error::InvalidInput("non-finite prediction".into()));
        }
        Ok(self.eval_raw(y, t))
    }

    /// Evaluation without input validation, for hot loops over data that has
    /// already been validated.
    #[inline]
    pub(crate) fn eval_raw(&self, y: T, t: T) -> LossEval<T> {
        match *self {
            SmoothLoss::LogisticClassification => {
                let m = y * t;
                let s_neg = sigmoid(-m);
                let s_pos = sigmoid(m);
                LossEval { value: ln1p_exp(-m), d1: -y * s_neg, d2: s_pos * s_neg }
            }
            SmoothLoss::LogisticRegression => {
                let r = y - t;
                let two = T::of(2.0);
                let ln2 = T::of(core::f64::consts::LN_2);
                let value = (two * (ln1p_exp(r) - ln2) - r).max(T::zero());
                let d1 = -(r / two).tanh();
                let d2 = two * sigmoid(r) * sigmoid(-r);
                LossEval { value, d1, d2 }
            }
            SmoothLoss::Huber { delta } => {
                let r = y - t;
                let (v, psi, ramp) = huber_pieces(r.abs(), delta);
                let sign = if r < T::zero() { -T::one() } else { T::one() };
                LossEval { value: v, d1: -sign * psi, d2: ramp }
            }
            SmoothLoss::SmoothedHinge { eps } => {
                let v = T::one() - y * t;
                let lo = -(T::of(2.0) * eps);
                let hi = T::of(2.0) * eps;
                if v <= lo {
                    LossEval { value: T::zero(), d1: T::zero(), d2: T::zero() }
                } else if v < hi {
                    let w = v + hi;
                    let s1 = w / (T::of(4.0) * eps);
                    LossEval {
                        value: w * w / (T::of(8.0) * eps),
                        d1: -y * s1,
                        d2: T::one() / (T::of(4.0) * eps),
                    }
                } else {
                    LossEval { value: v, d1: -y, d2: T::zero() }
                }
            }
        }
    }
}

/// Smoothed-Huber value, slope, and curvature as a function of `s = |r|`.
///
/// The curvature ramps linearly from 1 to 0 over `[delta - w, delta + w]`
/// with `w = min(5e-4, delta / 2)`; slope and value are its exact integrals,
/// so the triple is consistent and the loss is C^2 in `r`.
fn huber_pieces<T: Real>(s: T, delta: T) -> (T, T, T) {
    let w = T::of(5e-4).min(delta / T::of(2.0));
    let lo = delta - w;
    let hi = delta + w;
    if s <= lo {
        (s * s / T::of(2.0), s, T::one())
    } else if s < hi {
        let e = s - lo;
        let four_w = T::of(4.0) * w;
        let value = lo * lo / T::of(2.0) + lo * e + e * e / T::of(2.0)
            - e * e * e / (T::of(12.0) * w);
        let slope = lo + e - e * e / four_w;
        let ramp = (hi - s) / (T::of(2.0) * w);
        (value, slope, ramp)
    } else {
        // delta * s - delta^2/2 - w^2/6: the smoothing window shaves w^2/6
        // off the exact Huber tail value.
        (delta * s - delta * delta / T::of(2.0) - w * w / T::of(6.0), delta, T::zero())
    }
}

/// Per-point envelope `sup_{|t| <= radius} |dL/dt(y_i, t)|`, certified on a
/// dense grid of [`ENVELOPE_GRID`] predictions that includes both endpoints.
///
/// For every supported family `|dL/dt|` is maximized at an endpoint, so the
/// grid value equals the exact supremum; the grid serves as an independent
/// certificate rather than an approximation.
pub fn envelope_certificate<T: Real>(
    loss: &SmoothLoss<T>,
    ys: &[T],
    radius: T,
) -> Result<Vec<T>> {
    if !radius.is_finite() || radius <= T::zero() {
        return Err(Error::InvalidInput(format!(
            "envelope radius must be finite and positive, got {radius}"
        )));
    }
    let space = loss.target_space();
    for &y in ys {
        space.validate(y)?;
    }
    let m = ENVELOPE_GRID;
    let step = T::of(2.0) * radius / T::from_usize(m - 1).unwrap();
    Ok(ys
        .iter()
        .map(|&y| {
            let mut best = T::zero();
            for k in 0..m {
                let t = if k == m - 1 { radius } else { -radius + T::from_usize(k).unwrap() * step };
                let d1 = loss.eval_raw(y, t).d1.abs();
                if d1 > best {
                    best = d1;
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_classification_at_zero_margin() {
        let loss = SmoothLoss::<f64>::logistic_classification();
        let e = loss.evaluate(1.0, 0.0).unwrap();
        assert_abs_diff_eq!(e.value, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d1, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d2, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn logistic_classification_misclassified_point() {
        let loss = SmoothLoss::<f64>::logistic_classification();
        let e = loss.evaluate(-1.0, 2.0).unwrap();
        let sig2 = 1.0 / (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(e.value, (1.0 + 2.0f64.exp()).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.d1, sig2, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d2, sig2 * (1.0 - sig2), epsilon = 1e-15);
    }

    #[test]
    fn logistic_regression_zero_at_exact_fit() {
        let loss = SmoothLoss::<f64>::logistic_regression();
        let e = loss.evaluate(1.7, 1.7).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.d1, 0.0);
        assert_abs_diff_eq!(e.d2, 0.5, epsilon = 1e-15);
        // Symmetric in the residual.
        let a = loss.evaluate(1.0, 3.0).unwrap();
        let b = loss.evaluate(3.0, 1.0).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-14);
        assert_abs_diff_eq!(a.d1, -b.d1, epsilon = 1e-14);
    }

    #[test]
    fn huber_matches_closed_forms() {
        let loss = SmoothLoss::huber(1.0).unwrap();
        // Quadratic region.
        let e = loss.evaluate(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(e.value, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d1, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d2, 1.0, epsilon = 1e-15);
        // Linear tail: value is the exact Huber value minus w^2/6.
        let w = 5e-4f64;
        let e = loss.evaluate(3.0, 0.0).unwrap();
        assert_abs_diff_eq!(e.value, 2.5 - w * w / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d1, -1.0, epsilon = 1e-15);
        assert_eq!(e.d2, 0.0);
        // Negative residual mirrors.
        let e = loss.evaluate(-3.0, 0.0).unwrap();
        assert_abs_diff_eq!(e.d1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn huber_is_c2_across_the_blend_window() {
        let loss = SmoothLoss::huber(1.0).unwrap();
        let w = 5e-4f64;
        for s in [1.0 - w, 1.0 - w / 2.0, 1.0, 1.0 + w / 2.0, 1.0 + w] {
            let below = loss.evaluate(s - 1e-9, 0.0).unwrap();
            let above = loss.evaluate(s + 1e-9, 0.0).unwrap();
            assert_abs_diff_eq!(below.value, above.value, epsilon = 1e-8);
            assert_abs_diff_eq!(below.d1, above.d1, epsilon = 1e-8);
            // d2 itself is continuous (a linear ramp).
            assert_abs_diff_eq!(below.d2, above.d2, epsilon = 1e-5 / w);
        }
    }

    #[test]
    fn smoothed_hinge_matches_closed_forms() {
        let loss = SmoothLoss::smoothed_hinge(0.1).unwrap();
        // Margin exactly 1: v = 0, the middle of the smoothing window.
        let e = loss.evaluate(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(e.value, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d1, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d2, 2.5, epsilon = 1e-15);
        // Comfortably correct side: identically zero.
        let e = loss.evaluate(1.0, 2.0).unwrap();
        assert_eq!((e.value, e.d1, e.d2), (0.0, 0.0, 0.0));
        // Wrong side: linear with unit slope in v.
        let e = loss.evaluate(1.0, -1.0).unwrap();
        assert_abs_diff_eq!(e.value, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.d1, -1.0, epsilon = 1e-15);
        assert_eq!(e.d2, 0.0);
    }

    #[test]
    fn smoothed_hinge_gap_to_hinge_is_exactly_half_eps() {
        let eps = 0.1;
        let loss = SmoothLoss::smoothed_hinge(eps).unwrap();
        let mut sup: f64 = 0.0;
        for k in 0..=4000 {
            let t = -2.0 + 4.0 * (k as f64) / 4000.0;
            let v = 1.0 - t;
            let hinge = v.max(0.0);
            let gap = (loss.evaluate(1.0, t).unwrap().value - hinge).abs();
            sup = sup.max(gap);
        }
        assert_abs_diff_eq!(sup, eps / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn losses_are_convex_with_bounded_curvature() {
        let cases: Vec<(SmoothLoss<f64>, Vec<f64>)> = vec![
            (SmoothLoss::logistic_classification(), vec![-1.0, 1.0]),
            (SmoothLoss::logistic_regression(), vec![-2.0, 0.3, 4.0]),
            (SmoothLoss::huber(0.7).unwrap(), vec![-1.5, 0.0, 2.0]),
            (SmoothLoss::smoothed_hinge(0.05).unwrap(), vec![-1.0, 1.0]),
        ];
        for (loss, ys) in cases {
            let bound = loss.curvature_bound();
            for &y in &ys {
                for k in 0..=800 {
                    let t = -4.0 + 8.0 * (k as f64) / 800.0;
                    let d2 = loss.evaluate(y, t).unwrap().d2;
                    assert!(d2 >= 0.0, "{loss:?} d2 {d2} at y={y}, t={t}");
                    assert!(d2 <= bound + 1e-12, "{loss:?} d2 {d2} exceeds {bound}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Probe points chosen away from the Huber blend window and the hinge
        // window boundaries, where one-sided effects would bias the centered
        // difference at this step size.
        let cases: Vec<(SmoothLoss<f64>, f64, Vec<f64>)> = vec![
            (SmoothLoss::logistic_classification(), 1.0, vec![-2.1, -0.4, 0.0, 0.9, 3.0]),
            (SmoothLoss::logistic_classification(), -1.0, vec![-1.3, 0.2, 2.4]),
            (SmoothLoss::logistic_regression(), 0.7, vec![-3.0, 0.1, 0.7, 2.9]),
            (SmoothLoss::huber(1.0).unwrap(), 0.0, vec![-2.5, -0.6, 0.3, 2.0]),
            (SmoothLoss::smoothed_hinge(0.25).unwrap(), 1.0, vec![-1.5, 0.2, 0.75, 2.2]),
        ];
        let h = 1e-5;
        for (loss, y, ts) in cases {
            for &t in &ts {
                let e = loss.evaluate(y, t).unwrap();
                let vp = loss.evaluate(y, t + h).unwrap().value;
                let vm = loss.evaluate(y, t - h).unwrap().value;
                let d1_fd = (vp - vm) / (2.0 * h);
                assert_abs_diff_eq!(e.d1, d1_fd, epsilon = 1e-6);
                let gp = loss.evaluate(y, t + h).unwrap().d1;
                let gm = loss.evaluate(y, t - h).unwrap().d1;
                let d2_fd = (gp - gm) / (2.0 * h);
                assert_abs_diff_eq!(e.d2, d2_fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn binary_losses_reject_non_binary_labels() {
        let loss = SmoothLoss::<f64>::logistic_classification();
        assert_eq!(loss.evaluate(0.5, 0.0).unwrap_err().kind(), "input");
        assert_eq!(loss.evaluate(f64::NAN, 0.0).unwrap_err().kind(), "input");
        assert_eq!(loss.evaluate(1.0, f64::INFINITY).unwrap_err().kind(), "input");
        let huber = SmoothLoss::huber(1.0).unwrap();
        assert!(huber.evaluate(0.5, 0.0).is_ok());
        assert_eq!(huber.evaluate(f64::NAN, 0.0).unwrap_err().kind(), "input");
    }

    #[test]
    fn large_arguments_stay_finite() {
        let loss = SmoothLoss::<f64>::logistic_classification();
        let e = loss.evaluate(1.0, -500.0).unwrap();
        assert!(e.value.is_finite() && (e.value - 500.0).abs() < 1e-9);
        assert_abs_diff_eq!(e.d1, -1.0, epsilon = 1e-15);
        let e = loss.evaluate(1.0, 500.0).unwrap();
        assert!(e.value >= 0.0 && e.value <= 1e-200, "value {}", e.value);
        let reg = SmoothLoss::<f64>::logistic_regression();
        let e = reg.evaluate(400.0, -400.0).unwrap();
        assert!(e.value.is_finite());
    }

    #[test]
    fn serde_round_trips_and_rejects_hinge() {
        let loss = SmoothLoss::huber(1.5).unwrap();
        let json = serde_json::to_string(&loss).unwrap();
        assert_eq!(json, r#"{"family":"huber","delta":1.5}"#);
        let back: SmoothLoss<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, loss);

        let err = serde_json::from_str::<SmoothLoss<f64>>(r#"{"family":"hinge"}"#).unwrap_err();
        assert!(err.to_string().contains("smoothed_hinge"), "{err}");

        assert!(serde_json::from_str::<SmoothLoss<f64>>(r#"{"family":"huber","delta":0.0}"#)
            .is_err());
        assert!(serde_json::from_str::<SmoothLoss<f64>>(r#"{"family":"smoothed_hinge","eps":-1.0}"#)
            .is_err());
    }

    #[test]
    fn envelope_certificates_attain_the_exact_supremum() {
        // Logistic classification: |dL/dt| = sigmoid(-y t) peaks at t = -y a.
        let loss = SmoothLoss::<f64>::logistic_classification();
        let env = envelope_certificate(&loss, &[1.0, -1.0, 1.0], 2.0).unwrap();
        let sig2 = 1.0 / (1.0 + (-2.0f64).exp());
        for v in env {
            assert_abs_diff_eq!(v, sig2, epsilon = 1e-12);
        }
        // Smoothed hinge saturates at slope 1 inside the radius.
        let loss = SmoothLoss::smoothed_hinge(0.1).unwrap();
        let env = envelope_certificate(&loss, &[1.0], 2.0).unwrap();
        assert_abs_diff_eq!(env[0], 1.0, epsilon = 1e-12);
        // Huber: residual range [y - a, y + a] caps |psi| at delta.
        let loss = SmoothLoss::huber(0.5).unwrap();
        let env = envelope_certificate(&loss, &[3.0], 1.0).unwrap();
        assert_abs_diff_eq!(env[0], 0.5, epsilon = 1e-12);
        // Small radius keeps Huber in the quadratic region: sup = |y| + a.
        let env = envelope_certificate(&loss, &[0.1], 0.2).unwrap();
        assert_abs_diff_eq!(env[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn envelope_rejects_bad_inputs() {
        let loss = SmoothLoss::<f64>::logistic_classification();
        assert_eq!(envelope_certificate(&loss, &[1.0], 0.0).unwrap_err().kind(), "input");
        assert_eq!(envelope_certificate(&loss, &[0.3], 1.0).unwrap_err().kind(), "input");
    }

    #[test]
    fn curvature_bounds_per_family() {
        assert_eq!(SmoothLoss::<f64>::logistic_classification().curvature_bound(), 0.25);
        assert_eq!(SmoothLoss::<f64>::logistic_regression().curvature_bound(), 0.5);
        assert_eq!(SmoothLoss::huber(2.0).unwrap().curvature_bound(), 1.0);
        assert_eq!(SmoothLoss::smoothed_hinge(0.1).unwrap().curvature_bound(), 2.5);
    }
}
