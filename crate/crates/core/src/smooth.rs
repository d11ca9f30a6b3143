//! C∞ cutoff profiles shared by the partition of unity and the collar construction.

#[inline]
fn g(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

#[inline]
fn dg(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp() / (t * t)
    }
}

/// Smooth decreasing step: 1 for `t <= 0`, 0 for `t >= 1`, C∞ in between.
///
/// Satisfies `step_down(t) + step_down(1 - t) == 1`.
#[inline]
pub fn step_down(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let a = g(1.0 - t);
    let b = g(t);
    a / (a + b)
}

/// Derivative of [`step_down`]; its magnitude never exceeds 2.
#[inline]
pub fn step_down_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let a = g(1.0 - t);
    let b = g(t);
    let s = a + b;
    (-dg(1.0 - t) * b - a * dg(t)) / (s * s)
}

/// Smooth increasing step: 0 for `t <= 0`, 1 for `t >= 1`.
#[inline]
pub fn step_up(t: f64) -> f64 {
    step_down(1.0 - t)
}

#[inline]
pub fn step_up_deriv(t: f64) -> f64 {
    -step_down_deriv(1.0 - t)
}
