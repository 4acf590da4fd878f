//! The bounded solution `f_x` of the Stein equation
//! `f'(w) - w f(w) = 1(w <= x) - Phi(x)` for the standard normal target.
//!
//! Both branches are written through the Mills ratio
//! `R(t) = (1 - Phi(t)) / phi(t)`:
//! `f_x(w) = (1 - Phi(x)) R(-w)` for `w <= x` and `f_x(w) = Phi(x) R(w)` for
//! `w > x`. `R` uses erfc for `|t| <= 7` and a continued fraction beyond,
//! which avoids the overflowing product `e^{w^2/2} * tiny`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::diagnostics::normal_cdf;

/// Switch point between the erfc form and the continued fraction.
pub const MILLS_SWITCH: f64 = 7.0;

/// `sqrt(2 pi) / 4`, the supremum of every `f_x`.
pub fn sup_bound() -> f64 {
    (2.0 * PI).sqrt() / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteinFunction {
    pub x: f64,
}

impl SteinFunction {
    pub fn new(x: f64) -> Self {
        Self { x }
    }
}

/// `1 - Phi(t)` without cancellation.
fn upper_tail(t: f64) -> f64 {
    0.5 * libm::erfc(t * FRAC_1_SQRT_2)
}

fn mills_direct(t: f64) -> f64 {
    (2.0 * PI).sqrt() * (0.5 * t * t).exp() * upper_tail(t)
}

fn mills_continued_fraction(t: f64) -> f64 {
    // R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...)))), evaluated backwards
    let mut tail = 0.0;
    for k in (1..=200).rev() {
        tail = k as f64 / (t + tail);
    }
    1.0 / (t + tail)
}

/// The Mills ratio `R(t) = sqrt(2 pi) e^{t^2/2} (1 - Phi(t))`.
pub fn mills_ratio(t: f64) -> f64 {
    if t > MILLS_SWITCH {
        mills_continued_fraction(t)
    } else {
        mills_direct(t)
    }
}

#[doc(hidden)]
pub fn mills_ratio_branches(t: f64) -> (f64, f64) {
    (mills_direct(t), mills_continued_fraction(t))
}

/// `f_x(w)`.
pub fn stein_solution(s: SteinFunction, w: f64) -> f64 {
    if w <= s.x {
        upper_tail(s.x) * mills_ratio(-w)
    } else {
        normal_cdf(s.x) * mills_ratio(w)
    }
}

/// `f_x'(w)` from the analytic form. At `w = x` this is the left derivative
/// `1 - Phi(x) + x f_x(x)`.
pub fn derivative(s: SteinFunction, w: f64) -> f64 {
    if w <= s.x {
        upper_tail(s.x) * (1.0 + w * mills_ratio(-w))
    } else {
        normal_cdf(s.x) * (w * mills_ratio(w) - 1.0)
    }
}

/// `f_x'(w) - w f_x(w) - (1(w <= x) - Phi(x))`, zero up to rounding.
pub fn stein_residual(s: SteinFunction, w: f64) -> f64 {
    let indicator = if w <= s.x { 1.0 } else { 0.0 };
    derivative(s, w) - w * stein_solution(s, w) - (indicator - normal_cdf(s.x))
}

/// `(|w| + sqrt(2 pi)/4)(|u| + |v|) - |(w+u) f_x(w+u) - (w+v) f_x(w+v)|`,
/// nonnegative when the increment bound holds.
pub fn increment_margin(s: SteinFunction, w: f64, u: f64, v: f64) -> f64 {
    let g = |t: f64| t * stein_solution(s, t);
    (w.abs() + sup_bound()) * (u.abs() + v.abs()) - (g(w + u) - g(w + v)).abs()
}
