//! Model description: a Lévy-driven risk reserve whose parameters are
//! redrawn at the epochs of an independent Poisson clock.
//!
//! Between consecutive epochs of a rate-`q` Poisson process the reserve
//! evolves as `R(t) = u - L(t)` where the net-loss process `L` of the
//! currently active state `i` is a Brownian-perturbed compound Poisson
//! process: claims arrive at rate `lambda_i`, premiums accrue at rate `r_i`,
//! and the diffusion has variance `sigma2_i`. At each epoch a fresh state is
//! drawn from the probability vector `p`, independently of the past. Ruin is
//! the event that `L` ever exceeds the initial reserve `u`.
//!
//! Each state is summarised by its Laplace exponent
//!
//! ```text
//! phi_i(alpha) = r_i alpha + sigma2_i alpha^2 / 2 - lambda_i + lambda_i b_i(alpha),
//! ```
//!
//! with `b_i` the claim-size Laplace transform, so that
//! `E[exp(-alpha L_i(1))] = exp(phi_i(alpha))`. `phi_i` is finite and convex
//! for `alpha` above the negated smallest claim rate and satisfies
//! `phi_i(0) = 0`. The mean drift `kappa = sum_i p_i phi_i'(0)` must be
//! positive (net profit) for ruin to be a rare event.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solve;

/// Tolerance for probability vectors summing to one.
const PROB_SUM_TOL: f64 = 1e-9;

/// Draw from Exp(rate). Ziggurat-based; simulation runs spend most of their
/// time here, and the ziggurat is several times cheaper than inversion.
pub(crate) fn exp_draw<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Claim-size distribution of one state.
///
/// Both variants have rational Laplace transforms, which is what makes the
/// downstream spectral analysis and the exponential change of measure
/// closed-form. Rates are strictly positive; hyperexponential weights are
/// strictly positive and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClaimLaw {
    /// Exp(mu): density `mu exp(-mu x)`.
    Exponential { mu: f64 },
    /// Mixture of exponentials: density `sum_k weights[k] rates[k] exp(-rates[k] x)`.
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
}

impl ClaimLaw {
    /// Structural validation; see the variant docs for the constraints.
    pub fn validate(&self) -> Result<()> {
        match self {
            ClaimLaw::Exponential { mu } => {
                if !(mu.is_finite() && *mu > 0.0) {
                    return Err(Error::Invalid(format!(
                        "claim rate mu must be positive, got {mu}"
                    )));
                }
            }
            ClaimLaw::Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::Invalid(format!(
                        "hyperexponential needs matching nonempty weights/rates, got {} and {}",
                        weights.len(),
                        rates.len()
                    )));
                }
                for &w in weights {
                    if !(w.is_finite() && w > 0.0) {
                        return Err(Error::Invalid(format!(
                            "mixture weight must be positive, got {w}"
                        )));
                    }
                }
                for &m in rates {
                    if !(m.is_finite() && m > 0.0) {
                        return Err(Error::Invalid(format!(
                            "mixture rate must be positive, got {m}"
                        )));
                    }
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::Invalid(format!(
                        "mixture weights must sum to 1, got {sum}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smallest rate parameter: the transform `b` has its first pole at
    /// `alpha = -min_rate()`.
    pub fn min_rate(&self) -> f64 {
        match self {
            ClaimLaw::Exponential { mu } => *mu,
            ClaimLaw::Hyperexponential { rates, .. } => {
                rates.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Mean claim size.
    pub fn mean(&self) -> f64 {
        match self {
            ClaimLaw::Exponential { mu } => 1.0 / mu,
            ClaimLaw::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, m)| w / m).sum()
            }
        }
    }

    /// Laplace transform `b(alpha) = E[exp(-alpha B)]`, defined for
    /// `alpha > -min_rate()`.
    pub fn laplace(&self, alpha: f64) -> Result<f64> {
        self.domain_check(alpha)?;
        Ok(match self {
            ClaimLaw::Exponential { mu } => mu / (mu + alpha),
            ClaimLaw::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, m)| w * m / (m + alpha))
                .sum(),
        })
    }

    /// Derivative `b'(alpha) = -E[B exp(-alpha B)]` on the same domain.
    pub fn laplace_deriv(&self, alpha: f64) -> Result<f64> {
        self.domain_check(alpha)?;
        Ok(match self {
            ClaimLaw::Exponential { mu } => -mu / ((mu + alpha) * (mu + alpha)),
            ClaimLaw::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, m)| -w * m / ((m + alpha) * (m + alpha)))
                .sum(),
        })
    }

    /// Exponentially tilted law with density proportional to
    /// `exp(omega x)` times the original density; requires `omega < min_rate()`.
    /// Exp(mu) tilts to Exp(mu - omega); a mixture tilts each component and
    /// reweights by `w_k mu_k / (mu_k - omega)`, normalised.
    pub fn tilt(&self, omega: f64) -> Result<ClaimLaw> {
        if omega >= self.min_rate() {
            return Err(Error::Domain(format!(
                "tilt parameter {omega} reaches the claim transform pole at {}",
                self.min_rate()
            )));
        }
        Ok(match self {
            ClaimLaw::Exponential { mu } => ClaimLaw::Exponential { mu: mu - omega },
            ClaimLaw::Hyperexponential { weights, rates } => {
                let raw: Vec<f64> = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, m)| w * m / (m - omega))
                    .collect();
                let norm: f64 = raw.iter().sum();
                ClaimLaw::Hyperexponential {
                    weights: raw.into_iter().map(|x| x / norm).collect(),
                    rates: rates.iter().map(|m| m - omega).collect(),
                }
            }
        })
    }

    /// Sample one claim.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ClaimLaw::Exponential { mu } => exp_draw(rng, *mu),
            ClaimLaw::Hyperexponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, m) in weights.iter().zip(rates) {
                    acc += w;
                    if u < acc {
                        return exp_draw(rng, *m);
                    }
                }
                // Weight rounding can leave acc marginally below 1.
                exp_draw(rng, *rates.last().expect("validated nonempty"))
            }
        }
    }

    fn domain_check(&self, alpha: f64) -> Result<()> {
        if alpha <= -self.min_rate() {
            Err(Error::Domain(format!(
                "alpha = {alpha} is at or past the claim transform pole at {}",
                -self.min_rate()
            )))
        } else {
            Ok(())
        }
    }
}

/// One state of the environment: its occupation probability under
/// resampling and the parameters of its net-loss process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    /// Probability of drawing this state at a resampling epoch.
    pub p: f64,
    /// Premium rate.
    pub r: f64,
    /// Diffusion variance (>= 0; simulation requires > 0).
    pub sigma2: f64,
    /// Claim arrival rate (>= 0).
    pub lambda: f64,
    /// Claim-size distribution.
    pub claims: ClaimLaw,
}

impl State {
    /// Laplace exponent `phi(alpha)` of this state's net-loss process.
    pub fn phi(&self, alpha: f64) -> Result<f64> {
        let jump = if self.lambda > 0.0 {
            self.lambda * (self.claims.laplace(alpha)? - 1.0)
        } else {
            0.0
        };
        Ok(self.r * alpha + 0.5 * self.sigma2 * alpha * alpha + jump)
    }

    /// Derivative `phi'(alpha)`; in particular `phi'(0) = r - lambda E[B]`
    /// is this state's mean drift of the reserve.
    pub fn phi_deriv(&self, alpha: f64) -> Result<f64> {
        let jump = if self.lambda > 0.0 {
            self.lambda * self.claims.laplace_deriv(alpha)?
        } else {
            0.0
        };
        Ok(self.r + self.sigma2 * alpha + jump)
    }

    fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::Invalid(format!(
                "state probability must be positive, got {}",
                self.p
            )));
        }
        if !self.r.is_finite() {
            return Err(Error::Invalid(format!(
                "premium rate must be finite, got {}",
                self.r
            )));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::Invalid(format!(
                "diffusion variance must be nonnegative, got {}",
                self.sigma2
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Invalid(format!(
                "claim arrival rate must be nonnegative, got {}",
                self.lambda
            )));
        }
        self.claims.validate()
    }

    /// Largest `w` such that `phi(-w') < q` for all `w' < w`: the first
    /// solution of `phi(-w) = q` if one exists below the claim transform
    /// pole, else the pole itself, else infinity. `w -> phi(-w)` is convex
    /// and starts at 0, so the upcrossing of `q > 0` is unique.
    fn decay_cap(&self, q: f64) -> Result<f64> {
        let h = |w: f64| self.phi(-w).map_or(f64::INFINITY, |v| v - q);
        let pole = if self.lambda > 0.0 {
            self.claims.min_rate()
        } else {
            f64::INFINITY
        };
        if pole.is_finite() {
            // h -> +inf as w -> pole; find any positive value then bisect.
            let mut hi = None;
            for k in 1..64 {
                let w = pole * (1.0 - 0.5f64.powi(k));
                if h(w) > 0.0 {
                    hi = Some(w);
                    break;
                }
            }
            match hi {
                Some(hi) => solve::bisect(h, 0.0, hi),
                None => Ok(pole), // q unreachable below the pole at double precision
            }
        } else {
            // No claims: h is a (possibly degenerate) upward parabola.
            for k in 0..512 {
                let w = 2.0f64.powi(k);
                if h(w) > 0.0 {
                    return solve::bisect(h, 0.0, w);
                }
            }
            Ok(f64::INFINITY)
        }
    }
}

/// A complete model: resampling rate `q` and the state list.
///
/// The JSON form mirrors this struct:
///
/// ```json
/// {
///   "q": 0.75,
///   "states": [
///     { "p": 0.6667, "r": 1.0, "sigma2": 1.0, "lambda": 0.45,
///       "claims": { "type": "exponential", "mu": 1.0 } }
///   ]
/// }
/// ```
///
/// Unknown fields are rejected. [`Model::from_json`] and
/// [`Model::from_path`] validate after parsing; direct construction should
/// be followed by [`Model::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    /// Rate of the Poisson resampling clock.
    pub q: f64,
    /// Environment states; probabilities must sum to one.
    pub states: Vec<State>,
}

impl Model {
    /// Parse and validate a model from JSON text.
    pub fn from_json(text: &str) -> Result<Model> {
        let model: Model = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    /// Read, parse, and validate a model file.
    pub fn from_path<P: AsRef<std::path::Path>>(path: P) -> Result<Model> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }

    /// Number of states.
    pub fn d(&self) -> usize {
        self.states.len()
    }

    /// Structural validation plus the net-profit condition `kappa > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::Invalid(format!(
                "resampling rate q must be positive, got {}",
                self.q
            )));
        }
        if self.states.is_empty() {
            return Err(Error::Invalid("at least one state is required".into()));
        }
        for state in &self.states {
            state.validate()?;
        }
        let psum: f64 = self.states.iter().map(|s| s.p).sum();
        if (psum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Invalid(format!(
                "state probabilities must sum to 1, got {psum}"
            )));
        }
        let kappa = self.kappa();
        if !(kappa > 0.0) {
            return Err(Error::Invalid(format!(
                "drift condition violated: mean drift kappa = {kappa} must be \
                 positive (net profit condition)"
            )));
        }
        Ok(())
    }

    /// Laplace exponent of state `i` (see [`State::phi`]).
    pub fn phi(&self, i: usize, alpha: f64) -> Result<f64> {
        self.states[i].phi(alpha)
    }

    /// Derivative of the Laplace exponent of state `i`.
    pub fn phi_deriv(&self, i: usize, alpha: f64) -> Result<f64> {
        self.states[i].phi_deriv(alpha)
    }

    /// Mean drift `kappa = sum_i p_i phi_i'(0) = sum_i p_i (r_i - lambda_i E[B_i])`.
    ///
    /// `phi'(0)` never hits a transform pole, so this is total.
    pub fn kappa(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.p * s.phi_deriv(0.0).expect("phi'(0) is always defined"))
            .sum()
    }

    /// Upper end of the decay-rate search interval: the smallest over
    /// states of the first `w > 0` where `phi_i(-w)` reaches `q` (or the
    /// claim transform pole if `q` is never reached). On `(0, omega_max())`
    /// every denominator `q - phi_i(-w)` is strictly positive. May be
    /// infinite for models with neither claims nor diffusion.
    pub fn omega_max(&self) -> Result<f64> {
        let mut cap = f64::INFINITY;
        for state in &self.states {
            cap = cap.min(state.decay_cap(self.q)?);
        }
        Ok(cap)
    }

    /// Collapse the modulation: a single-state model with the `p`-averaged
    /// premium, variance, and claim rate, and claims drawn from the
    /// arrival-weighted mixture of the state claim laws. This is the
    /// classical approximation that ignores parameter uncertainty; its
    /// behaviour is the natural comparison point for the modulated model.
    pub fn no_modulation(&self) -> Model {
        let r = self.states.iter().map(|s| s.p * s.r).sum();
        let sigma2 = self.states.iter().map(|s| s.p * s.sigma2).sum();
        let lambda: f64 = self.states.iter().map(|s| s.p * s.lambda).sum();
        let claims = if lambda > 0.0 {
            // Mixture component (weight, rate) pairs, weighted by arrival share.
            let mut parts: Vec<(f64, f64)> = Vec::new();
            for s in &self.states {
                let share = s.p * s.lambda / lambda;
                if share == 0.0 {
                    continue;
                }
                match &s.claims {
                    ClaimLaw::Exponential { mu } => parts.push((share, *mu)),
                    ClaimLaw::Hyperexponential { weights, rates } => {
                        parts.extend(weights.iter().zip(rates).map(|(w, m)| (share * w, *m)));
                    }
                }
            }
            // Merge identical rates so a common-rate model collapses to Exp.
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for (w, m) in parts {
                match merged.iter_mut().find(|(_, rate)| *rate == m) {
                    Some(entry) => entry.0 += w,
                    None => merged.push((w, m)),
                }
            }
            if merged.len() == 1 {
                ClaimLaw::Exponential { mu: merged[0].1 }
            } else {
                ClaimLaw::Hyperexponential {
                    weights: merged.iter().map(|(w, _)| *w).collect(),
                    rates: merged.iter().map(|(_, m)| *m).collect(),
                }
            }
        } else {
            ClaimLaw::Exponential { mu: 1.0 } // unused: lambda = 0
        };
        Model {
            q: self.q,
            states: vec![State {
                p: 1.0,
                r,
                sigma2,
                lambda,
                claims,
            }],
        }
    }
}
