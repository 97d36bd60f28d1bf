//! Flux functions and the scalar quantities derived from them.
//!
//! Everything the solver needs from the flux `f` lives in one place: `f`
//! itself, its derivatives `f'` and `f''`, the inverse of `f'` on the
//! admissible value range, and the Rankine-Hugoniot shock speed
//!
//! ```text
//! s(u, v) = (f(u) - f(v)) / (u - v),        s(u, u) = f'(u).
//! ```
//!
//! The flux is assumed twice differentiable and either convex (`f'' > 0`) or
//! concave (`f'' < 0`) on the value range, so `f'` is strictly monotone and
//! invertible there.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Below this separation `shock_speed` abandons the difference quotient for a
/// Taylor expansion: the quotient loses roughly `eps_machine / |u - v|` digits
/// to cancellation, while the Taylor truncation error is `O(|u - v|^2)`.
pub const SPEED_TAYLOR_THRESHOLD: f64 = 1e-8;

/// Slack applied to range checks, absorbing harmless transient round-off at
/// the range endpoints during time integration.
pub const RANGE_TOLERANCE: f64 = 1e-9;

/// Sign of `f''` on the interior of the value range.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Convexity {
    Convex,
    Concave,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type BinaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A convex or concave flux together with its derived quantities.
///
/// Immutable after construction; cloning is cheap (shared closures) and the
/// type is `Send + Sync`, so one instance can serve concurrent solves.
#[derive(Clone)]
pub struct FluxFunction {
    name: String,
    value: ScalarFn,
    deriv: ScalarFn,
    deriv2: ScalarFn,
    inv_deriv: ScalarFn,
    /// Exact closed form of the nonlinear segment average, when one is known.
    segment_avg: Option<BinaryFn>,
    range: (f64, f64),
    convexity: Convexity,
}

impl fmt::Debug for FluxFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxFunction")
            .field("name", &self.name)
            .field("range", &self.range)
            .field("convexity", &self.convexity)
            .finish()
    }
}

/// Ingredients for a user-defined flux.
///
/// `inv_deriv` may be omitted; a bisection fallback (tolerance 1e-14,
/// bracketed by `range`) is installed in that case. Analytic inverses are
/// preferred since `inv_deriv` sits in the inner evaluation loop.
pub struct CustomFlux {
    pub name: String,
    pub value: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub deriv: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub deriv2: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub inv_deriv: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    pub range: (f64, f64),
    pub convexity: Convexity,
}

impl FluxFunction {
    /// Burgers flux `f(u) = u^2 / 2` on `[0, 1]`.
    pub fn burgers() -> Self {
        FluxFunction {
            name: "burgers".to_owned(),
            value: Arc::new(|u| 0.5 * u * u),
            deriv: Arc::new(|u| u),
            deriv2: Arc::new(|_| 1.0),
            inv_deriv: Arc::new(|w| w),
            // f'(u)u - f(u) = u^2/2, so the average is the arithmetic mean.
            segment_avg: Some(Arc::new(|v, w| 0.5 * (v + w))),
            range: (0.0, 1.0),
            convexity: Convexity::Convex,
        }
    }

    /// Quartic flux `f(u) = u^4 / 4` on `[0.05, 1]`.
    ///
    /// The range is clipped away from zero because `f''(0) = 0` violates
    /// strict convexity at the origin.
    pub fn quartic() -> Self {
        FluxFunction {
            name: "quartic".to_owned(),
            value: Arc::new(|u| 0.25 * u * u * u * u),
            deriv: Arc::new(|u| u * u * u),
            deriv2: Arc::new(|u| 3.0 * u * u),
            inv_deriv: Arc::new(|w| w.cbrt()),
            // (3/4)(w^4 - v^4)/(w^3 - v^3) with the common (w - v) cancelled,
            // so the expression stays finite and accurate as v -> w.
            segment_avg: Some(Arc::new(|v, w| {
                0.75 * (w + v) * (w * w + v * v) / (w * w + v * w + v * v)
            })),
            range: (0.05, 1.0),
            convexity: Convexity::Convex,
        }
    }

    /// Look up a built-in flux by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "burgers" => Ok(Self::burgers()),
            "quartic" => Ok(Self::quartic()),
            other => Err(Error::UnknownFlux(other.to_owned())),
        }
    }

    /// Build a flux from user-supplied closures.
    pub fn custom(spec: CustomFlux) -> Self {
        let (lo, hi) = spec.range;
        let deriv: ScalarFn = Arc::from(spec.deriv);
        let inv_deriv: ScalarFn = match spec.inv_deriv {
            Some(f) => Arc::from(f),
            None => {
                let d = deriv.clone();
                Arc::new(move |w| bisect_inverse(&*d, lo, hi, w))
            }
        };
        FluxFunction {
            name: spec.name,
            value: Arc::from(spec.value),
            deriv,
            deriv2: Arc::from(spec.deriv2),
            inv_deriv,
            segment_avg: None,
            range: spec.range,
            convexity: spec.convexity,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Admissible value range `[u_min, u_max]`.
    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn convexity(&self) -> Convexity {
        self.convexity
    }

    /// `f(u)`.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        (self.value)(u)
    }

    /// `f'(u)`.
    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        (self.deriv)(u)
    }

    /// `f''(u)`.
    #[inline]
    pub fn deriv2(&self, u: f64) -> f64 {
        (self.deriv2)(u)
    }

    /// Inverse of `f'`: returns `u` with `f'(u) = w`.
    #[inline]
    pub fn inv_deriv(&self, w: f64) -> f64 {
        (self.inv_deriv)(w)
    }

    pub(crate) fn segment_avg_hint(&self) -> Option<&BinaryFn> {
        self.segment_avg.as_ref()
    }

    /// Check that `u` lies in the admissible range (with [`RANGE_TOLERANCE`]
    /// slack).
    pub fn check_range(&self, u: f64) -> Result<()> {
        let (lo, hi) = self.range;
        if u.is_finite() && u >= lo - RANGE_TOLERANCE && u <= hi + RANGE_TOLERANCE {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                value: u,
                min: lo,
                max: hi,
            })
        }
    }

    /// Rankine-Hugoniot shock speed between states `u` and `v`.
    ///
    /// Uses the difference quotient of `f` when `|u - v|` exceeds
    /// [`SPEED_TAYLOR_THRESHOLD`] and the second-order Taylor expansion
    /// `f'(a) + (b - a) f''(a) / 2` (arguments ordered so the result is
    /// exactly symmetric) below it. The two branches agree to `O(eps^2)`
    /// across the switch.
    pub fn shock_speed(&self, u: f64, v: f64) -> Result<f64> {
        self.check_range(u)?;
        self.check_range(v)?;
        Ok(self.shock_speed_unchecked(u, v))
    }

    /// [`shock_speed`](Self::shock_speed) without the range check; used on
    /// trial integrator stages, which may transiently leave the range.
    #[inline]
    pub(crate) fn shock_speed_unchecked(&self, u: f64, v: f64) -> f64 {
        if (u - v).abs() > SPEED_TAYLOR_THRESHOLD {
            ((self.value)(u) - (self.value)(v)) / (u - v)
        } else {
            let (a, b) = if u <= v { (u, v) } else { (v, u) };
            (self.deriv)(a) + 0.5 * (b - a) * (self.deriv2)(a)
        }
    }
}

/// Solve `deriv(u) = w` for `u` in `[lo, hi]` by bisection to 1e-14.
fn bisect_inverse(deriv: &(dyn Fn(f64) -> f64 + Send + Sync), lo: f64, hi: f64, w: f64) -> f64 {
    let increasing = deriv(lo) <= deriv(hi);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        if b - a <= 1e-14 {
            break;
        }
        let mid = 0.5 * (a + b);
        let below = if increasing { deriv(mid) < w } else { deriv(mid) > w };
        if below {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}
