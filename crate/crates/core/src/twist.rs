//! Exponential change of measure at the adjustment coefficient.
//!
//! Tilting every state's law by `exp(omega_star * loss)` produces another
//! model of the same family under which the loss process drifts *upward*, so
//! the reserve level is crossed almost surely, while the likelihood ratio of
//! a path stopped at the crossing stays bounded. This module constructs the
//! tilted parameters together with the quantities the estimator and the
//! uniform bound are built from:
//!
//! * per-state Wiener-Hopf rates: over one exponential inter-event time the
//!   running maximum of the Brownian segment is `Exp(alpha_plus)` and the
//!   drop from that maximum is `Exp(alpha_minus)`, independent;
//! * the per-state constants `gamma_i` relating the original and tilted
//!   Wiener-Hopf factors;
//! * the uniform bound prefactor `Omega`, with
//!   `psi(u) <= Omega exp(-omega_star u)`;
//! * the almost-sure likelihood ceiling `path_bound >= Omega`: every
//!   simulated path's likelihood is at most
//!   `path_bound * exp(-omega_star * level at crossing)`. (`Omega` itself
//!   ceils the likelihood on claim-segment crossings but can be edged past
//!   when the diffusion maximum right before a resampling epoch does the
//!   crossing, so the pathwise statement needs the larger constant.)

use serde::Serialize;

use crate::asymptotics::{self, omega_star};
use crate::error::{Error, Result};
use crate::model::{ClaimLaw, Model};

/// Relative tolerance for the tilted-rate shift identities
/// `alpha_plus^Q = alpha_plus - omega` and `alpha_minus^Q = alpha_minus + omega`.
const SHIFT_TOL: f64 = 1e-8;

/// Relative tolerance for the two defining expressions of `gamma_i`.
const GAMMA_DUAL_TOL: f64 = 1e-10;

/// Tolerance for the tilted state-probabilities summing to one, which is
/// algebraically equivalent to `omega` solving the decay-rate equation.
const SIMPLEX_TOL: f64 = 1e-12;

/// Rates of the running maximum (`plus`) and of the drop from the maximum
/// (`minus`) of a drifted Brownian segment over an exponential horizon.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WienerHopf {
    /// The maximum over the horizon is `Exp(plus)`.
    pub plus: f64,
    /// The end-of-horizon drop below the maximum is `Exp(minus)`.
    pub minus: f64,
}

/// Factorization rates for premium rate `r`, variance `sigma2` and horizon
/// rate `f`: `alpha_{plus,minus} = (sqrt(r^2 + 2 f sigma2) +- r) / sigma2`.
///
/// Evaluated in the cancellation-free arrangement: whichever of the two
/// rates subtracts `|r|` from the square root is computed through the
/// product identity `alpha_plus alpha_minus = 2 f / sigma2` instead, so the
/// result stays accurate as `sigma2 -> 0` (where the naive difference loses
/// half the significant digits).
///
/// Errors: `Domain` unless `sigma2 > 0` and `f > 0`.
pub fn wiener_hopf_rates(r: f64, sigma2: f64, f: f64) -> Result<WienerHopf> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "factorization needs a diffusion: sigma2 = {sigma2} (use a small \
             positive value such as 1e-6 instead of 0)"
        )));
    }
    if !(f > 0.0) {
        return Err(Error::Domain(format!(
            "horizon rate must be positive, got {f}"
        )));
    }
    let root = (r * r + 2.0 * f * sigma2).sqrt();
    if r >= 0.0 {
        let plus = (root + r) / sigma2;
        Ok(WienerHopf {
            plus,
            minus: 2.0 * f / (root + r),
        })
    } else {
        let minus = (root - r) / sigma2;
        Ok(WienerHopf {
            plus: 2.0 * f / (root - r),
            minus,
        })
    }
}

/// One state of the twisted model, bundling the original quantities the
/// likelihood factors need (`f`, `wh`) with their tilted counterparts.
#[derive(Debug, Clone, Serialize)]
pub struct TwistedState {
    /// Tilted selection probability `p^Q = p q / (q - phi(-omega))`.
    pub p: f64,
    /// Tilted resampling rate `q^Q = q - phi(-omega)`.
    pub q_rate: f64,
    /// Tilted premium rate `r^Q = r - omega sigma2`.
    pub r: f64,
    /// Variance, unchanged by the tilt.
    pub sigma2: f64,
    /// Tilted claim arrival rate `lambda^Q = lambda b(-omega)`.
    pub lambda: f64,
    /// Tilted claim-size law.
    pub claims: ClaimLaw,
    /// Claim transform at the tilt, `b(-omega) = E exp(omega B) >= 1`.
    pub transform: f64,
    /// Total event rate `f = lambda + q` under the original measure.
    pub f: f64,
    /// Total event rate `f^Q = lambda^Q + q^Q` under the tilted measure.
    pub f_q: f64,
    /// Original-measure Wiener-Hopf rates for `(r, sigma2, f)`.
    pub wh: WienerHopf,
    /// Tilted-measure Wiener-Hopf rates for `(r^Q, sigma2, f^Q)`.
    pub wh_q: WienerHopf,
    /// `gamma = (f^Q/f) (alpha_plus / alpha_plus^Q) / b(-omega)`; the
    /// likelihood constant of a path whose crossing is a diffusion maximum
    /// inside a claim segment.
    pub gamma: f64,
}

impl TwistedState {
    /// `alpha_minus^Q / alpha_minus = gamma b(-omega) > 1`: the likelihood
    /// constant of a path that crosses during the diffusion segment right
    /// before a resampling epoch.
    pub fn drop_ratio(&self) -> f64 {
        self.wh_q.minus / self.wh.minus
    }
}

/// The exponentially tilted model at `omega_star`, plus the constants of
/// the uniform bound.
#[derive(Debug, Clone, Serialize)]
pub struct TwistedModel {
    /// The tilt parameter (the decay rate when built by [`twist`]).
    pub omega_star: f64,
    /// Tilted states, same order as the original model.
    pub states: Vec<TwistedState>,
    /// Uniform bound prefactor: `psi(u) <= omega_big * exp(-omega_star u)`.
    pub omega_big: f64,
    /// Almost-sure likelihood ceiling, `>= omega_big`; see the module docs.
    pub path_bound: f64,
    /// Mean per-period loss increment under the tilted measure; positive at
    /// `omega_star`, which is what guarantees the simulation terminates.
    pub mean_increment: f64,
}

impl TwistedModel {
    /// Number of states.
    pub fn d(&self) -> usize {
        self.states.len()
    }

    /// The uniform bound `min(1, omega_big exp(-omega_star u))`.
    pub fn bound(&self, u: f64) -> f64 {
        (self.omega_big * (-self.omega_star * u).exp()).min(1.0)
    }

    /// The almost-sure per-path ceiling `path_bound exp(-omega_star u)`.
    pub fn path_ceiling(&self, u: f64) -> f64 {
        self.path_bound * (-self.omega_star * u).exp()
    }
}

/// Tilt the model at its adjustment coefficient.
///
/// Beyond [`twist_at`]'s per-state checks this verifies the two facts that
/// characterize the correct tilt parameter: the tilted state-probabilities
/// form a distribution (to 1e-12) and the tilted mean drift is upward.
///
/// Errors: propagates [`omega_star`]'s `Domain` errors; `Numerical` if the
/// verification fails (which would mean the root and the tilt disagree).
pub fn twist(model: &Model) -> Result<TwistedModel> {
    let omega = omega_star(model)?;
    let twisted = twist_at(model, omega)?;
    let sum: f64 = twisted.states.iter().map(|s| s.p).sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Numerical(format!(
            "tilted probabilities sum to {sum} (adjustment coefficient and \
             tilt disagree beyond {SIMPLEX_TOL:e})"
        )));
    }
    if !(twisted.mean_increment > 0.0) {
        return Err(Error::Numerical(format!(
            "tilted mean increment {} is not positive; simulated paths would \
             not terminate",
            twisted.mean_increment
        )));
    }
    Ok(twisted)
}

/// Tilt the model at an arbitrary `omega in [0, omega_max)`.
///
/// Only `omega = omega_star` yields tilted state-probabilities that sum to
/// one; this constructor skips that check (and the drift-direction check) so
/// the identity tilt `omega = 0` and diagnostic tilts remain expressible.
/// Estimation should always go through [`twist`].
///
/// Errors: `Domain` if `omega < 0`, if some state has `sigma2 = 0`, if the
/// claim transform diverges at `omega`, or if `phi_i(-omega) >= q` for some
/// state; `Numerical` if the tilted Wiener-Hopf rates fail their shift or
/// duality identities.
pub fn twist_at(model: &Model, omega: f64) -> Result<TwistedModel> {
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!(
            "tilt parameter must be nonnegative, got {omega}"
        )));
    }
    let mut states = Vec::with_capacity(model.d());
    for (i, s) in model.states.iter().enumerate() {
        if !(s.sigma2 > 0.0) {
            return Err(Error::Domain(format!(
                "state {i}: sigma2 = {} but simulation segments need a \
                 diffusion; use a small positive value such as 1e-6",
                s.sigma2
            )));
        }
        let phi = s.phi(-omega)?;
        let q_rate = model.q - phi;
        if !(q_rate > 0.0) {
            return Err(Error::Domain(format!(
                "state {i}: phi(-omega) = {phi} >= q = {}; the tilt at \
                 omega = {omega} does not exist",
                model.q
            )));
        }
        let transform = s.claims.laplace(-omega)?;
        let lambda = s.lambda * transform;
        let r = s.r - omega * s.sigma2;
        let f = s.lambda + model.q;
        let f_q = lambda + q_rate;
        let wh = wiener_hopf_rates(s.r, s.sigma2, f)?;
        let wh_q = wiener_hopf_rates(r, s.sigma2, f_q)?;

        // The tilt shifts the factorization rates by exactly omega; this is
        // how the per-segment likelihood factors telescope into
        // exp(-omega * increment). Enforce it rather than assume it.
        let shift_plus = (wh_q.plus - (wh.plus - omega)).abs();
        let shift_minus = (wh_q.minus - (wh.minus + omega)).abs();
        if shift_plus > SHIFT_TOL * wh.plus.max(1.0) || shift_minus > SHIFT_TOL * wh.minus.max(1.0)
        {
            return Err(Error::Numerical(format!(
                "state {i}: tilted factorization rates violate the shift \
                 identity (plus residual {shift_plus:e}, minus residual \
                 {shift_minus:e})"
            )));
        }

        let gamma = (f_q / f) * (wh.plus / wh_q.plus) / transform;
        let gamma_dual = (wh_q.minus / wh.minus) / transform;
        let spread = (gamma - gamma_dual).abs();
        if spread > GAMMA_DUAL_TOL * gamma.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "state {i}: the two expressions for gamma differ by {spread:e}"
            )));
        }

        states.push(TwistedState {
            p: s.p * model.q / q_rate,
            q_rate,
            r,
            sigma2: s.sigma2,
            lambda,
            claims: s.claims.tilt(omega)?,
            transform,
            f,
            f_q,
            wh,
            wh_q,
            gamma,
        });
    }

    let omega_big = states
        .iter()
        .map(|s| s.q_rate / model.q * s.gamma.max(1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let path_bound = states
        .iter()
        .map(|s| (s.q_rate / model.q * s.gamma.max(1.0)).max(s.drop_ratio()))
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(TwistedModel {
        omega_star: omega,
        states,
        omega_big,
        path_bound,
        mean_increment: asymptotics::g_deriv(model, omega),
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::testkit::*;
    use crate::Error;

    #[test]
    fn driftless_rates_are_symmetric() {
        let wh = wiener_hopf_rates(0.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(wh.plus, 2.0, max_relative = 1e-14);
        assert_relative_eq!(wh.minus, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn rates_match_the_closed_form() {
        // r=1, sigma2=1, f = 0.45 + 0.75: plus = sqrt(3.4) + 1, minus = sqrt(3.4) - 1.
        let wh = wiener_hopf_rates(1.0, 1.0, 1.2).unwrap();
        let root = 3.4_f64.sqrt();
        assert_relative_eq!(wh.plus, root + 1.0, max_relative = 1e-14);
        assert_relative_eq!(wh.minus, root - 1.0, max_relative = 1e-12);
        assert_relative_eq!(wh.plus * wh.minus, 2.4, max_relative = 1e-14);
    }

    #[test]
    fn negating_the_drift_swaps_the_rates() {
        let fwd = wiener_hopf_rates(1.3, 0.7, 2.1).unwrap();
        let bwd = wiener_hopf_rates(-1.3, 0.7, 2.1).unwrap();
        assert_relative_eq!(fwd.plus, bwd.minus, max_relative = 1e-15);
        assert_relative_eq!(fwd.minus, bwd.plus, max_relative = 1e-15);
    }

    #[test]
    fn tiny_variance_rates_stay_accurate() {
        // sigma2 = 1e-6 would lose ~9 digits in the naive (root - r)/sigma2
        // form of the minus rate; the product arrangement keeps 15.
        let wh = wiener_hopf_rates(2.0, 1.0e-6, 2.0).unwrap();
        assert_relative_eq!(wh.plus, 4000000.99999975, max_relative = 1e-12);
        assert_relative_eq!(wh.minus, 0.999999750000125, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_domain_errors() {
        assert!(matches!(
            wiener_hopf_rates(1.0, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            wiener_hopf_rates(1.0, -1.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            wiener_hopf_rates(1.0, 1.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn base_model_twist_matches_frozen_values() {
        let t = twist(&base_model(0.75)).unwrap();
        assert_relative_eq!(t.omega_star, 0.0485427855490848, max_relative = 1e-10);

        let s0 = &t.states[0];
        assert_relative_eq!(s0.p, 0.645656279488291, max_relative = 1e-10);
        assert_relative_eq!(s0.q_rate, 0.774405850116212, max_relative = 1e-10);
        assert_relative_eq!(s0.lambda, 0.472958734418441, max_relative = 1e-10);
        assert_relative_eq!(s0.gamma, 1.00618632559986, max_relative = 1e-10);
        assert_relative_eq!(s0.wh.plus, 2.84390889145858, max_relative = 1e-10);
        assert_relative_eq!(s0.wh.minus, 0.843908891458577, max_relative = 1e-10);
        assert_relative_eq!(s0.wh_q.plus, 2.79536610590949, max_relative = 1e-10);
        assert_relative_eq!(s0.wh_q.minus, 0.892451677007662, max_relative = 1e-10);
        assert_relative_eq!(s0.drop_ratio(), 1.05752135809967, max_relative = 1e-10);

        let s1 = &t.states[1];
        assert_relative_eq!(s1.p, 0.354343720511709, max_relative = 1e-10);
        assert_relative_eq!(s1.q_rate, 0.705529646860889, max_relative = 1e-10);
        assert_relative_eq!(s1.lambda, 1.89183493767376, max_relative = 1e-10);
        assert_relative_eq!(s1.gamma, 0.982880417584543, max_relative = 1e-10);

        assert_relative_eq!(t.omega_big, 1.03892876913529, max_relative = 1e-10);
        assert_relative_eq!(t.path_bound, 1.05752135809967, max_relative = 1e-10);
        assert_relative_eq!(t.mean_increment, 0.141942515899185, max_relative = 1e-10);
    }

    #[test]
    fn slow_resampling_ceiling_is_omega_itself() {
        // At q = 0.1875 the per-state gamma factors dominate the drop
        // ratios, so the pathwise ceiling adds nothing over Omega.
        let t = twist(&base_model(0.1875)).unwrap();
        assert_relative_eq!(t.omega_big, 1.098625184613, max_relative = 1e-10);
        assert_relative_eq!(t.path_bound, 1.098625184613, max_relative = 1e-10);
    }

    #[test]
    fn fast_resampling_bound_tends_to_one() {
        let t = twist(&base_model(48.0)).unwrap();
        assert_relative_eq!(t.omega_big, 1.0006826676975, max_relative = 1e-10);
        assert_relative_eq!(t.path_bound, 1.00762151550925, max_relative = 1e-10);
    }

    #[test]
    fn single_state_twist_is_the_scalar_tilt() {
        // d = 1: phi(-omega_star) = 0, so p^Q = 1 and q^Q = q exactly.
        let t = twist(&single_state_model()).unwrap();
        assert_relative_eq!(t.omega_star, 0.43844718719117, max_relative = 1e-9);
        assert_relative_eq!(t.states[0].p, 1.0, max_relative = 1e-12);
        assert_relative_eq!(t.states[0].q_rate, 1.0, max_relative = 1e-9);
        assert_relative_eq!(t.states[0].gamma, 0.858756083779411, max_relative = 1e-9);
        // gamma < 1 and q^Q = q make the uniform bound prefactor exactly 1,
        // yet the drop ratio exceeds it by half: the pathwise ceiling is
        // genuinely larger than Omega here.
        assert_relative_eq!(t.omega_big, 1.0, max_relative = 1e-9);
        assert_relative_eq!(t.path_bound, 1.52925257285063, max_relative = 1e-9);
        assert_relative_eq!(t.mean_increment, 1.60961179679779, max_relative = 1e-9);
    }

    #[test]
    fn epsilon_variance_twist_matches_frozen_values() {
        let t = twist(&epsilon_model()).unwrap();
        assert_relative_eq!(t.omega_star, 0.4999999375, max_relative = 1e-10);
        let s = &t.states[0];
        assert_relative_eq!(s.wh.plus, 4000000.99999975, max_relative = 1e-9);
        assert_relative_eq!(s.wh.minus, 0.999999750000125, max_relative = 1e-9);
        assert_relative_eq!(s.wh_q.plus, 4000000.49999981, max_relative = 1e-9);
        assert_relative_eq!(s.wh_q.minus, 1.49999968750012, max_relative = 1e-9);
        assert_relative_eq!(s.gamma, 0.750000124999981, max_relative = 1e-9);
        assert_relative_eq!(t.path_bound, 1.50000006249995, max_relative = 1e-9);
    }

    #[test]
    fn hyperexponential_twist_matches_frozen_values() {
        let t = twist(&hyperexp_model()).unwrap();
        assert_relative_eq!(t.omega_star, 0.158715833782709, max_relative = 1e-10);
        assert_relative_eq!(t.states[0].lambda, 0.569836400160237, max_relative = 1e-10);
        assert_relative_eq!(t.states[1].lambda, 1.70950920048071, max_relative = 1e-10);
        assert_relative_eq!(t.states[0].gamma, 1.03096666970673, max_relative = 1e-10);
        assert_relative_eq!(t.states[1].gamma, 0.949082550626368, max_relative = 1e-10);
        assert_relative_eq!(t.omega_big, 1.14233915607481, max_relative = 1e-10);
        assert_relative_eq!(t.path_bound, 1.17496467150175, max_relative = 1e-10);
    }

    #[test]
    fn three_state_twist_matches_frozen_values() {
        let t = twist(&three_state_model()).unwrap();
        let p: Vec<f64> = t.states.iter().map(|s| s.p).collect();
        assert_relative_eq!(p[0], 0.445716326278437, max_relative = 1e-10);
        assert_relative_eq!(p[1], 0.309476355327614, max_relative = 1e-10);
        assert_relative_eq!(p[2], 0.244807318393948, max_relative = 1e-10);
        assert_relative_eq!(t.omega_big, 1.12178973602966, max_relative = 1e-10);
        assert_relative_eq!(t.path_bound, 1.24830329369, max_relative = 1e-9);
    }

    #[test]
    fn tilted_probabilities_sum_to_one_across_the_corpus() {
        for model in [
            base_model(0.1875),
            base_model(0.75),
            base_model(3.0),
            base_model(12.0),
            base_model(48.0),
            averaged_model(),
            hyperexp_model(),
            three_state_model(),
        ] {
            let t = twist(&model).unwrap();
            let sum: f64 = t.states.iter().map(|s| s.p).sum();
            assert!((sum - 1.0).abs() <= 1e-12, "sum = {sum}");
            assert!(t.mean_increment > 0.0);
        }
    }

    #[test]
    fn zero_tilt_is_the_identity() {
        let model = base_model(0.75);
        let t = twist_at(&model, 0.0).unwrap();
        for (s, orig) in t.states.iter().zip(&model.states) {
            assert_relative_eq!(s.p, orig.p, max_relative = 1e-14);
            assert_relative_eq!(s.q_rate, model.q, max_relative = 1e-14);
            assert_relative_eq!(s.lambda, orig.lambda, max_relative = 1e-14);
            assert_relative_eq!(s.r, orig.r, max_relative = 1e-14);
            assert_relative_eq!(s.gamma, 1.0, max_relative = 1e-12);
            assert_relative_eq!(s.wh.plus, s.wh_q.plus, max_relative = 1e-14);
        }
        assert_relative_eq!(t.omega_big, 1.0, max_relative = 1e-12);
        // Under the original measure the loss drifts down: kappa > 0.
        assert!(t.mean_increment < 0.0);
    }

    #[test]
    fn tilted_claims_follow_the_transform_arithmetic() {
        // Exp(1.1) tilted by 0.0486 -> Exp(1.0514); arrival rate scales by
        // b(-omega) = 1.1/1.0514.
        let model = Model {
            q: 0.75,
            states: vec![exp_state(1.0, 1.0, 1.0, 0.45, 1.1)],
        };
        let t = twist_at(&model, 0.0486).unwrap();
        match t.states[0].claims {
            ClaimLaw::Exponential { mu } => assert_relative_eq!(mu, 1.0514, max_relative = 1e-14),
            _ => panic!("tilt changed the claim family"),
        }
        assert_relative_eq!(
            t.states[0].lambda,
            0.45 * 1.1 / 1.0514,
            max_relative = 1e-13
        );
    }

    #[test]
    fn shift_identities_hold_tightly_on_the_corpus() {
        for model in [base_model(0.75), hyperexp_model(), three_state_model()] {
            let t = twist(&model).unwrap();
            for s in &t.states {
                assert_relative_eq!(s.wh_q.plus, s.wh.plus - t.omega_star, max_relative = 1e-12);
                assert_relative_eq!(
                    s.wh_q.minus,
                    s.wh.minus + t.omega_star,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn zero_variance_states_are_rejected_with_guidance() {
        let model = Model {
            q: 1.0,
            states: vec![exp_state(1.0, 2.0, 0.0, 1.0, 1.0)],
        };
        match twist(&model) {
            Err(Error::Domain(msg)) => assert!(msg.contains("1e-6"), "message: {msg}"),
            other => panic!("expected a domain error, got {other:?}"),
        }
    }

    #[test]
    fn oversized_tilt_is_a_domain_error() {
        // phi(-omega) >= q already at omega just beyond omega_max.
        let model = base_model(0.75);
        let cap = model.omega_max().unwrap();
        assert!(twist_at(&model, cap + 0.05).is_err());
    }

    #[test]
    fn bound_is_clamped_to_one() {
        let t = twist(&base_model(0.75)).unwrap();
        assert_eq!(t.bound(0.0), 1.0);
        let at175 = t.bound(175.0);
        assert_relative_eq!(at175, 0.000212451396426579, max_relative = 1e-9);
        assert!(t.path_ceiling(175.0) > at175);
    }
}
