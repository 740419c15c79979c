//! Numerical tolerances shared by every module.

/// Primal feasibility of LP rows and bounds.
pub const FEAS: f64 = 1e-7;
/// A value counts as integral when within this distance of an integer.
pub const INT: f64 = 1e-6;
/// Generic floating-point comparison.
pub const CMP: f64 = 1e-9;
/// Smallest admissible simplex pivot magnitude.
pub const PIVOT: f64 = 1e-10;
/// Reduced-cost optimality threshold.
pub const OPT: f64 = 1e-9;

#[inline]
pub fn is_integral(v: f64) -> bool {
    (v - v.round()).abs() <= INT
}

#[inline]
pub fn frac(v: f64) -> f64 {
    v - v.floor()
}

/// Floor that snaps values within [`INT`] of an integer onto it first.
#[inline]
pub fn floor_snap(v: f64) -> f64 {
    if is_integral(v) {
        v.round()
    } else {
        v.floor()
    }
}

/// Ceil that snaps values within [`INT`] of an integer onto it first.
#[inline]
pub fn ceil_snap(v: f64) -> f64 {
    if is_integral(v) {
        v.round()
    } else {
        v.ceil()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapping_respects_integrality_tolerance() {
        assert_eq!(floor_snap(2.0 - 1e-9), 2.0);
        assert_eq!(ceil_snap(2.0 + 1e-9), 2.0);
        assert_eq!(floor_snap(2.5), 2.0);
        assert_eq!(ceil_snap(2.5), 3.0);
        assert!(!is_integral(0.5));
    }
}
