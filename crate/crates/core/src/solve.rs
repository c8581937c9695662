//! Scalar root finding on a sign-changing bracket.
//!
//! Everything here assumes the caller supplies a genuine bracket
//! (`f(lo)` and `f(hi)` of opposite sign, both finite). Bisection provides
//! the guarantee, Newton provides the speed; `bisect_newton` combines them
//! by keeping every Newton iterate inside the shrinking bracket, so it can
//! never diverge and degrades to plain bisection in the worst case.

use crate::error::{Error, Result};

/// Relative bracket width at which further halving is pointless.
fn width_exhausted(lo: f64, hi: f64) -> bool {
    (hi - lo) <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0)
}

/// Plain bisection to (near) machine precision.
///
/// Returns the bracket midpoint once the width collapses. Errors if the
/// endpoints do not straddle a sign change or evaluate non-finite.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Numerical(format!(
            "bisection endpoints not finite: f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::Numerical(format!(
            "no sign change on [{lo}, {hi}]: f = {flo}, {fhi}"
        )));
    }
    let positive_hi = fhi > 0.0;
    while !width_exhausted(lo, hi) {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == positive_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection with Newton polish.
///
/// Iterates until `|f(x)| <= tol` or the bracket collapses to machine
/// width; in the latter case the midpoint is still accepted if it meets
/// `tol`, otherwise the residual is reported as a numerical failure.
/// Newton steps that would leave the current bracket are replaced by
/// bisection steps, so convergence is guaranteed for any continuous `f`.
pub(crate) fn bisect_newton<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let flo = f(lo);
    let fhi = f(hi);
    if !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Numerical(format!(
            "root bracket endpoints not finite: f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    if flo.abs() <= tol {
        return Ok(lo);
    }
    if fhi.abs() <= tol {
        return Ok(hi);
    }
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::Numerical(format!(
            "no sign change on [{lo}, {hi}]: f = {flo}, {fhi}"
        )));
    }
    let positive_hi = fhi > 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..256 {
        let fx = f(x);
        if fx.abs() <= tol {
            return Ok(x);
        }
        if (fx > 0.0) == positive_hi {
            hi = x;
        } else {
            lo = x;
        }
        if width_exhausted(lo, hi) {
            break;
        }
        let d = df(x);
        let newton = x - fx / d;
        // Reject steps outside the open bracket (covers d == 0 and NaN).
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    if fm.abs() <= tol {
        Ok(mid)
    } else {
        Err(Error::Numerical(format!(
            "root refinement stalled at x = {mid} with residual {fm:e} (tolerance {tol:e})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let x = bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((x - std::f64::consts::SQRT_2).abs() < 1e-14, "x = {x}");
    }

    #[test]
    fn bisect_newton_meets_tolerance() {
        let f = |x: f64| x.exp() - 3.0;
        let x = bisect_newton(f, |x| x.exp(), 0.0, 2.0, 1e-14).unwrap();
        assert!(f(x).abs() <= 1e-14);
        assert!((x - 3.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn bisect_newton_survives_flat_derivative() {
        // Derivative vanishes at the left endpoint; the guard must fall
        // back to bisection instead of dividing by zero.
        let f = |x: f64| x * x * x - 1e-6;
        let x = bisect_newton(f, |x| 3.0 * x * x, 0.0, 1.0, 1e-18).unwrap();
        assert!((x - 1e-2).abs() < 1e-9, "x = {x}");
    }

    #[test]
    fn rejects_unbracketed_input() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0).is_err());
        assert!(bisect_newton(|x| x + 10.0, |_| 1.0, 0.0, 1.0, 1e-12).is_err());
    }
}
