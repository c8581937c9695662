//! Exact exponential asymptotics of the ruin probability:
//! `psi(u) ~ A exp(-omega_star u)` as the initial reserve `u` grows.
//!
//! The decay rate `omega_star` is the unique positive solution of
//!
//! ```text
//! g(omega) = sum_i p_i q / (q - phi_i(-omega)) - 1 = 0,
//! ```
//!
//! equivalently the point where the dominant eigenvalue of `M(-omega)`
//! crosses zero. `g` is convex on `(0, omega_max)` with `g(0) = 0` and
//! `g'(0) = -kappa/q < 0`, and blows up at `omega_max`, so the root exists
//! and is unique precisely when the net profit condition `kappa > 0` holds.
//! For a single state the equation collapses to the classical Lundberg
//! condition `phi(-omega) = 0`, independent of the resampling rate.
//!
//! The prefactor combines the stationary ladder law `pibar` with the
//! spectral decomposition at `-omega_star`: with `ell = kappa pibar`, `h`
//! the right and `nu` the left eigenvector of the vanishing eigenvalue
//! (columns/rows of `S`, `S^{-1}`), and `theta_bar'` the dominant-eigenvalue
//! derivative,
//!
//! ```text
//! A = -(ell . h)(nu . e) / theta_bar'(-omega_star).
//! ```
//!
//! For `d = 1` this reduces to the classical `-phi'(0)/phi'(-omega_star)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::solve;
use crate::spectral;

/// Residual tolerance for the decay-rate equation, `|g(omega_star)| <= 1e-12`.
const ROOT_TOL: f64 = 1e-12;

/// `g(omega)` with the convention that any nonpositive denominator counts
/// as "past the blow-up", reported as a huge positive value so bracketing
/// logic keeps working right up to `omega_max`.
fn g(model: &Model, omega: f64) -> f64 {
    let mut sum = 0.0;
    for s in &model.states {
        let den = match s.phi(-omega) {
            Ok(phi) => model.q - phi,
            Err(_) => return f64::MAX,
        };
        if den <= 0.0 {
            return f64::MAX;
        }
        sum += s.p * model.q / den;
    }
    sum - 1.0
}

/// `g'(omega) = -sum_i p_i q phi_i'(-omega) / (q - phi_i(-omega))^2`;
/// NaN outside the domain so Newton steps there get rejected.
///
/// At `omega = omega_star` this equals the mean per-period increment of the
/// loss process under the exponentially twisted measure, which [`crate::twist`]
/// exposes as `mean_increment`.
pub(crate) fn g_deriv(model: &Model, omega: f64) -> f64 {
    let mut sum = 0.0;
    for s in &model.states {
        let (phi, dphi) = match (s.phi(-omega), s.phi_deriv(-omega)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return f64::NAN,
        };
        let den = model.q - phi;
        sum += -s.p * model.q * dphi / (den * den);
    }
    sum
}

/// The exponential decay rate of the ruin probability.
///
/// Errors: `Invalid` if the net profit condition fails (the reserve has no
/// upward drift, so the ruin probability does not decay); `Domain` if the
/// model admits no ruin at all (no claims, no diffusion); `Numerical` if
/// the residual tolerance cannot be met.
pub fn omega_star(model: &Model) -> Result<f64> {
    let kappa = model.kappa();
    if !(kappa > 0.0) {
        return Err(Error::Invalid(format!(
            "drift condition violated: mean drift kappa = {kappa} must be positive \
             for the ruin probability to decay"
        )));
    }
    let cap = model.omega_max()?;
    // Find a point where g > 0. For finite cap, g blows up as omega -> cap;
    // otherwise scan upward (and give up: ruin is impossible for such models).
    let mut hi = None;
    if cap.is_finite() {
        for k in 1..64 {
            let w = cap * (1.0 - 0.5f64.powi(k));
            if g(model, w) > 0.0 {
                hi = Some(w);
                break;
            }
        }
    } else {
        for k in 0..64 {
            let w = 2.0f64.powi(k);
            if g(model, w) > 0.0 {
                hi = Some(w);
                break;
            }
        }
    }
    let hi = hi.ok_or_else(|| {
        Error::Domain(
            "the decay-rate equation has no positive root: ruin appears impossible \
             (no claims and no diffusion against the drift)"
                .into(),
        )
    })?;
    // And a point where g < 0 (exists since g ~ -kappa omega / q near 0).
    let mut lo = None;
    for k in 1..64 {
        let w = hi * 0.5f64.powi(k);
        if g(model, w) < 0.0 {
            lo = Some(w);
            break;
        }
    }
    let lo = lo.ok_or_else(|| {
        Error::Numerical("could not bracket the decay rate away from zero".into())
    })?;
    let mut w = solve::bisect_newton(|w| g(model, w), |w| g_deriv(model, w), lo, hi, ROOT_TOL)?;
    // The residual stop leaves omega underresolved when g' is small (fast
    // resampling). Polish to fixed point; each Newton step from a near-root
    // point is contractive, so this lands on the machine-accurate root.
    for _ in 0..4 {
        let d = g_deriv(model, w);
        if !d.is_finite() || d == 0.0 {
            break;
        }
        let step = g(model, w) / d;
        let next = w - step;
        if !next.is_finite() || next <= 0.0 {
            break;
        }
        w = next;
        if step.abs() <= f64::EPSILON * w {
            break;
        }
    }
    Ok(w)
}

/// The exact asymptotic prefactor `A`, given the decay rate.
///
/// Requires the spectral decomposition at `-omega_star`; fails with a
/// structured error for models with indistinguishable states (see
/// [`spectral::decompose`]).
pub fn cramer_constant(model: &Model, omega_star: f64) -> Result<f64> {
    let d = model.d();
    let ladder = spectral::ladder(model)?;
    let kappa = model.kappa();
    let dec = spectral::decompose(model, -omega_star)?;
    // The dominant eigenvalue must vanish at -omega_star: same root found
    // through an independent route.
    let dominant = dec.thetas[d - 1];
    let scale = model.q.max(1.0);
    if dominant.abs() > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "dominant eigenvalue at -omega_star is {dominant:e}, expected 0: \
             decay rate and spectrum disagree"
        )));
    }
    let slope = spectral::dominant_derivative(model, -omega_star)?;
    // ell . h with ell = kappa pibar, h the eigenvector of the vanishing
    // eigenvalue; nu . e with nu the matching left eigenvector.
    let mut ell_h = 0.0;
    let mut nu_e = 0.0;
    for j in 0..d {
        ell_h += kappa * ladder.pibar[j] * dec.s[(j, d - 1)];
        nu_e += dec.s_inv[(d - 1, j)];
    }
    let a = -(ell_h * nu_e) / slope;
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Numerical(format!(
            "asymptotic prefactor came out nonpositive or non-finite: {a}"
        )));
    }
    Ok(a)
}

/// Decay rate and prefactor bundled with the evaluation helper.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Asymptotics {
    /// Exponential decay rate of the ruin probability.
    pub omega_star: f64,
    /// Asymptotic prefactor `A`.
    pub constant: f64,
}

impl Asymptotics {
    /// The asymptotic approximation `A exp(-omega_star u)`.
    pub fn decay(&self, u: f64) -> f64 {
        self.constant * (-self.omega_star * u).exp()
    }
}

/// Compute both asymptotic quantities for a validated model.
pub fn asymptotics(model: &Model) -> Result<Asymptotics> {
    let omega = omega_star(model)?;
    let constant = cramer_constant(model, omega)?;
    Ok(Asymptotics {
        omega_star: omega,
        constant,
    })
}
