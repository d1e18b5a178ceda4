//! Modified Gompertz growth curve.
//!
//! The expected optical density at time `t` is
//!
//! ```text
//! N(t) = N0 + D * exp(-exp(1 + mu * e * (lambda - t) / D))
//! ```
//!
//! where `D` is the growth amplitude, `mu` the maximum specific growth rate
//! (slope at the inflection point) and `lambda` the lag time, i.e. the time at
//! which the inflection tangent crosses the baseline `N0`.

use std::f64::consts::E;

use crate::error::{invalid, Result};

/// Smallest admissible growth amplitude (OD600).
pub const MIN_AMPLITUDE: f64 = 1e-9;

/// The `(D, mu, lambda)` triple of one growth curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GompertzParams {
    d: f64,
    mu: f64,
    lambda: f64,
}

impl GompertzParams {
    pub fn new(d: f64, mu: f64, lambda: f64) -> Result<Self> {
        if !(d.is_finite() && mu.is_finite() && lambda.is_finite()) {
            return Err(invalid(format!(
                "Gompertz parameters must be finite (d={d}, mu={mu}, lambda={lambda})"
            )));
        }
        if d <= MIN_AMPLITUDE {
            return Err(invalid(format!("growth amplitude d={d} must exceed {MIN_AMPLITUDE}")));
        }
        if mu <= 0.0 {
            return Err(invalid(format!("growth rate mu={mu} must be positive")));
        }
        if lambda < 0.0 {
            return Err(invalid(format!("lag time lambda={lambda} must be non-negative")));
        }
        Ok(Self { d, mu, lambda })
    }

    /// Constructs without validation; callers guarantee the invariants.
    pub(crate) fn new_unchecked(d: f64, mu: f64, lambda: f64) -> Self {
        debug_assert!(d > MIN_AMPLITUDE && mu > 0.0 && lambda >= 0.0);
        Self { d, mu, lambda }
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Curve value at `t`. Infallible counterpart of [`gompertz_eval`].
    #[inline]
    pub fn eval(&self, t: f64, n0: f64) -> f64 {
        let inner = 1.0 + self.mu * E * (self.lambda - t) / self.d;
        n0 + self.d * (-inner.exp()).exp()
    }

    /// Analytic time derivative of the curve at `t`.
    pub fn slope(&self, t: f64) -> f64 {
        let inner = 1.0 + self.mu * E * (self.lambda - t) / self.d;
        let ez = inner.exp();
        self.mu * E * ez * (-ez).exp()
    }

    /// Time of maximal slope, `lambda + D / (mu * e)`.
    pub fn inflection_time(&self) -> f64 {
        self.lambda + self.d / (self.mu * E)
    }

    /// Earliest time at which the curve reaches `target`.
    ///
    /// Returns `Some(0.0)` when the target is at or below the baseline and
    /// `None` when it is at or above the upper asymptote `n0 + D`.
    pub fn time_to_reach(&self, n0: f64, target: f64) -> Option<f64> {
        let frac = (target - n0) / self.d;
        if frac >= 1.0 {
            return None;
        }
        if frac <= 0.0 {
            return Some(0.0);
        }
        let inner = (-frac.ln()).ln();
        let t = self.lambda + self.d * (1.0 - inner) / (self.mu * E);
        Some(t.max(0.0))
    }
}

/// One `(t, od)` observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthPoint {
    pub t: f64,
    pub od: f64,
}

/// Evaluates the modified Gompertz curve.
///
/// Negative `t` is accepted; the `t >= 0` domain is enforced by the dataset layer.
pub fn gompertz_eval(t: f64, n0: f64, params: &GompertzParams) -> Result<f64> {
    if !t.is_finite() || !n0.is_finite() {
        return Err(invalid(format!("non-finite input t={t}, n0={n0}")));
    }
    if n0 < 0.0 {
        return Err(invalid(format!("initial density n0={n0} must be non-negative")));
    }
    Ok(params.eval(t, n0))
}

/// Evaluates the curve over a strictly increasing time grid.
pub fn gompertz_curve(times: &[f64], n0: f64, params: &GompertzParams) -> Result<Vec<GrowthPoint>> {
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(invalid(format!(
            "times must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    times
        .iter()
        .map(|&t| gompertz_eval(t, n0, params).map(|od| GrowthPoint { t, od }))
        .collect()
}

pub fn inflection_time(params: &GompertzParams) -> f64 {
    params.inflection_time()
}
