//! Float helpers routed through `libm` so that `std` and `no_std` builds
//! produce the same bits.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

#[inline]
pub(crate) fn dist2_2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Largest float strictly below `x` (for positive finite `x`).
#[inline]
pub(crate) fn next_below(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    f64::from_bits(x.to_bits() - 1)
}

/// True when `x` is within a relative `1e-9` of an integer; returns that integer.
pub(crate) fn near_integer(x: f64) -> Option<i64> {
    let r = round(x);
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}
