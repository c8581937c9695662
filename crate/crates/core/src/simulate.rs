//! Monte Carlo estimation of the ruin probability.
//!
//! The estimator of choice simulates under the exponential twist of
//! [`crate::twist`], where the loss drifts upward and every path crosses the
//! reserve level in finite time; the likelihood ratio carried along the way
//! is an unbiased estimate of the ruin probability and is bounded by
//! `path_bound * exp(-omega_star u)`, so the relative error stays bounded as
//! `u` grows. A crude baseline simulates under the original measure and
//! counts crossings; it is only usable where ruin is not rare.
//!
//! Paths are built from the Wiener-Hopf decomposition of each exponential
//! inter-event interval: the loss increment over an interval splits into the
//! running maximum `A+ ~ Exp(alpha_plus)` followed by an independent drop
//! `A- ~ Exp(alpha_minus)`, so the interval's contribution is `A+ - A-` and
//! the level can only be hit at a local maximum (after an `A+`) or by a
//! claim jump. Events are claims (rate `lambda`) and resampling epochs
//! (rate `q`); each period between resamplings holds a geometric number of
//! claim segments followed by one switch segment.
//!
//! Every run consumes its own counter-derived random stream keyed by
//! `(seed, run index)`, so estimates are reproducible bit for bit for a
//! given seed regardless of how many threads execute the batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{exp_draw, ClaimLaw, Model};
use crate::twist::{twist, TwistedModel};

/// Per-run event-count ceiling. Generous against the expected
/// `O(u / mean_increment)` events of a twisted run; a breach signals a
/// mis-twisted model rather than an unlucky path.
const EVENT_CAP: u64 = 10_000_000;

/// How the simulated path first reached the reserve level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Crossing {
    /// The running maximum of a diffusion segment touched the level.
    DiffusionMax,
    /// A claim jump carried the loss over the level.
    ClaimJump,
}

/// One importance-sampling path, stopped at the crossing.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The likelihood ratio `L`; the per-run unbiased estimate of the ruin
    /// probability.
    pub likelihood: f64,
    /// `ln L`, accumulated factor by factor (what the run actually tracks).
    pub log_likelihood: f64,
    /// What carried the loss over the level.
    pub crossing: Crossing,
    /// True when the crossing happened in the diffusion segment that
    /// precedes a resampling epoch (there the likelihood constant differs;
    /// see [`reconciliation_residual`]).
    pub switch_segment: bool,
    /// Number of environment draws, counting the initial one.
    pub cycles: u64,
    /// State active at the crossing.
    pub final_state: usize,
    /// Loss level at detection, `>= u`.
    pub x_at_crossing: f64,
    /// Claims sampled along the path.
    pub claims_seen: u64,
}

impl RunOutcome {
    /// Residual of the closed-form likelihood reconciliation.
    ///
    /// The per-segment factors telescope, so the accumulated `ln L` must
    /// equal `-omega_star * Z + ln C` with `Z` the level at crossing and
    /// `C` a constant fixed by how the path ended: `p_I/p_I^Q` for a claim
    /// jump, times `gamma_I` for a diffusion maximum inside a claim
    /// segment, or `alpha_minus^Q/alpha_minus` for a diffusion maximum just
    /// before a resampling epoch. Anything nonzero beyond roundoff means
    /// the bookkeeping and the sampled laws disagree.
    pub fn reconciliation_residual(&self, model: &Model, twisted: &TwistedModel) -> f64 {
        let s = &twisted.states[self.final_state];
        let log_c = match (self.crossing, self.switch_segment) {
            (Crossing::ClaimJump, _) => (model.states[self.final_state].p / s.p).ln(),
            (Crossing::DiffusionMax, false) => {
                (model.states[self.final_state].p / s.p).ln() + s.gamma.ln()
            }
            (Crossing::DiffusionMax, true) => s.drop_ratio().ln(),
        };
        self.log_likelihood + twisted.omega_star * self.x_at_crossing - log_c
    }
}

/// Which estimator produced an [`Estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ImportanceSampling,
    Crude,
}

/// A batch estimate of the ruin probability with its sampling error.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    /// Sample mean (the estimate of `psi(u)`).
    pub mean: f64,
    /// Standard error of the mean; serialized as `se`.
    #[serde(rename = "se")]
    pub std_error: f64,
    /// `std_error / mean`; infinite when the mean is zero (which JSON
    /// renders as null). Serialized as `rel_err`.
    #[serde(rename = "rel_err")]
    pub relative_error: f64,
    /// 95% normal confidence bounds.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Batch size.
    pub runs: u64,
    /// Seed the substreams were derived from.
    pub seed: u64,
    pub method: Method,
    /// Importance sampling only: largest per-run likelihood divided by
    /// `omega_big * exp(-omega_star u)`. Values slightly above 1 are
    /// expected on paths that cross right before a resampling epoch; the
    /// ratio never exceeds `path_bound / omega_big`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bound_ratio: Option<f64>,
}

/// The random stream of run `index` within a batch keyed by `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Hot-loop constants of one twisted state.
#[derive(Debug, Clone)]
struct SimState {
    /// Probability that the next event is a claim, `lambda^Q / f^Q`.
    claim_prob: f64,
    /// Tilted segment rates (what gets sampled).
    ap_q: f64,
    am_q: f64,
    /// Tilted claim law (what gets sampled).
    claims: ClaimLaw,
    /// `ln(p / p^Q)`: entry factor of a period spent in this state.
    log_entry: f64,
    /// `ln((f^Q/f)(lambda/lambda^Q))`: claim-segment type factor.
    log_type_claim: f64,
    /// `ln((f^Q/f)(q/q^Q))`: switch-segment type factor.
    log_type_switch: f64,
    /// `ln(alpha_plus / alpha_plus^Q)` and the rate gap
    /// `alpha_plus - alpha_plus^Q`, the maximum's density-ratio pieces.
    log_ap: f64,
    d_ap: f64,
    /// Same for the drop.
    log_am: f64,
    d_am: f64,
    /// `ln b(-omega)`: the claim jump's constant factor (the variable part
    /// is `-omega B`).
    log_claim: f64,
}

/// Importance-sampling path generator for one model.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: Model,
    twisted: TwistedModel,
    states: Vec<SimState>,
    /// Cumulative tilted state-selection probabilities.
    cum_p: Vec<f64>,
}

impl Simulator {
    /// Build the twisted model (validating it, see [`twist`]) and
    /// precompute the per-state likelihood constants.
    pub fn new(model: &Model) -> Result<Simulator> {
        model.validate()?;
        let twisted = twist(model)?;
        let states = model
            .states
            .iter()
            .zip(&twisted.states)
            .map(|(orig, s)| SimState {
                claim_prob: s.lambda / s.f_q,
                ap_q: s.wh_q.plus,
                am_q: s.wh_q.minus,
                claims: s.claims.clone(),
                log_entry: (orig.p / s.p).ln(),
                log_type_claim: if s.lambda > 0.0 {
                    (s.f_q / s.f).ln() + (orig.lambda / s.lambda).ln()
                } else {
                    // Claim segments have probability zero; keep the slot
                    // poisoned so accidental use shows up immediately.
                    f64::NAN
                },
                log_type_switch: (s.f_q / s.f).ln() + (model.q / s.q_rate).ln(),
                log_ap: (s.wh.plus / s.wh_q.plus).ln(),
                d_ap: s.wh.plus - s.wh_q.plus,
                log_am: (s.wh.minus / s.wh_q.minus).ln(),
                d_am: s.wh.minus - s.wh_q.minus,
                log_claim: s.transform.ln(),
            })
            .collect();
        let mut acc = 0.0;
        let mut cum_p: Vec<f64> = twisted
            .states
            .iter()
            .map(|s| {
                acc += s.p;
                acc
            })
            .collect();
        // The tilted probabilities sum to 1 within 1e-12 (verified by
        // twist); force the last edge so the draw can never fall off.
        *cum_p.last_mut().expect("at least one state") = 1.0;
        Ok(Simulator {
            model: model.clone(),
            twisted,
            states,
            cum_p,
        })
    }

    /// The verified twisted model backing this simulator.
    pub fn twisted(&self) -> &TwistedModel {
        &self.twisted
    }

    /// The original model.
    pub fn model(&self) -> &Model {
        &self.model
    }

    fn draw_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x: f64 = rng.random();
        self.cum_p
            .iter()
            .position(|&c| x < c)
            .unwrap_or(self.cum_p.len() - 1)
    }

    /// Simulate one path under the twisted measure until the loss crosses
    /// `u`, tracking the likelihood ratio factor by factor.
    ///
    /// Errors: `Invalid` unless `u > 0`; `Numerical` if the event cap is
    /// breached (a correctness guard, not a statistical outlier).
    pub fn run<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> Result<RunOutcome> {
        if !(u > 0.0) {
            return Err(Error::Invalid(format!(
                "initial reserve must be positive, got {u}"
            )));
        }
        let omega = self.twisted.omega_star;
        let mut x = 0.0_f64;
        let mut log_l = 0.0_f64;
        let mut cycles = 1_u64;
        let mut claims_seen = 0_u64;
        let mut events = 0_u64;

        let mut i = self.draw_state(rng);
        log_l += self.states[i].log_entry;

        let finish = |log_l: f64, crossing, switch_segment, cycles, i, z, claims_seen| {
            Ok(RunOutcome {
                likelihood: log_l.exp(),
                log_likelihood: log_l,
                crossing,
                switch_segment,
                cycles,
                final_state: i,
                x_at_crossing: z,
                claims_seen,
            })
        };

        loop {
            events += 1;
            if events > EVENT_CAP {
                return Err(Error::Numerical(format!(
                    "importance-sampling run exceeded {EVENT_CAP} events; the \
                     twisted drift is too weak for u = {u}"
                )));
            }
            let s = &self.states[i];
            if rng.random::<f64>() < s.claim_prob {
                // Claim segment: maximum, drop, then the claim jump.
                log_l += s.log_type_claim;
                let a_plus = exp_draw(rng, s.ap_q);
                log_l += s.log_ap - s.d_ap * a_plus;
                if x + a_plus >= u {
                    return finish(
                        log_l,
                        Crossing::DiffusionMax,
                        false,
                        cycles,
                        i,
                        x + a_plus,
                        claims_seen,
                    );
                }
                let a_minus = exp_draw(rng, s.am_q);
                log_l += s.log_am - s.d_am * a_minus;
                x += a_plus - a_minus;
                let b = s.claims.sample(rng);
                claims_seen += 1;
                log_l += s.log_claim - omega * b;
                x += b;
                if x >= u {
                    return finish(log_l, Crossing::ClaimJump, false, cycles, i, x, claims_seen);
                }
            } else {
                // Switch segment: maximum, drop, then resample the state.
                log_l += s.log_type_switch;
                let a_plus = exp_draw(rng, s.ap_q);
                log_l += s.log_ap - s.d_ap * a_plus;
                if x + a_plus >= u {
                    return finish(
                        log_l,
                        Crossing::DiffusionMax,
                        true,
                        cycles,
                        i,
                        x + a_plus,
                        claims_seen,
                    );
                }
                let a_minus = exp_draw(rng, s.am_q);
                log_l += s.log_am - s.d_am * a_minus;
                x += a_plus - a_minus;
                i = self.draw_state(rng);
                cycles += 1;
                log_l += self.states[i].log_entry;
            }
        }
    }
}

/// Hot-loop constants of one original-measure state (crude baseline).
#[derive(Debug, Clone)]
struct CrudeState {
    claim_prob: f64,
    ap: f64,
    am: f64,
    claims: ClaimLaw,
}

/// Crude Monte Carlo: simulate under the original measure, return whether
/// the loss crossed `u` before drifting below `-depth`.
struct CrudeSimulator {
    states: Vec<CrudeState>,
    cum_p: Vec<f64>,
    /// Abandon depth: once the loss is this far below zero, the remaining
    /// ruin probability is at most `exp(-omega_star (depth + u))`, which the
    /// stopping rule keeps below `e^-50` relative to the estimate.
    depth: f64,
}

impl CrudeSimulator {
    fn new(model: &Model, omega_star: f64, u: f64) -> Result<CrudeSimulator> {
        let states = model
            .states
            .iter()
            .map(|s| {
                let f = s.lambda + model.q;
                let wh = crate::twist::wiener_hopf_rates(s.r, s.sigma2, f)?;
                Ok(CrudeState {
                    claim_prob: s.lambda / f,
                    ap: wh.plus,
                    am: wh.minus,
                    claims: s.claims.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let mut acc = 0.0;
        let mut cum_p: Vec<f64> = model
            .states
            .iter()
            .map(|s| {
                acc += s.p;
                acc
            })
            .collect();
        *cum_p.last_mut().expect("at least one state") = 1.0;
        Ok(CrudeSimulator {
            states,
            cum_p,
            depth: (50.0 / omega_star).max(25.0 * u),
        })
    }

    fn draw_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let x: f64 = rng.random();
        self.cum_p
            .iter()
            .position(|&c| x < c)
            .unwrap_or(self.cum_p.len() - 1)
    }

    /// One crude path; `true` means ruin. Paths that reach the event cap
    /// count as survival (the abandon depth fires long before in any model
    /// that passes validation, and the induced bias is below `e^-50`).
    fn run<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> bool {
        let mut x = 0.0_f64;
        let mut i = self.draw_state(rng);
        for _ in 0..EVENT_CAP {
            let s = &self.states[i];
            if rng.random::<f64>() < s.claim_prob {
                let a_plus = exp_draw(rng, s.ap);
                if x + a_plus >= u {
                    return true;
                }
                x += a_plus - exp_draw(rng, s.am);
                x += s.claims.sample(rng);
                if x >= u {
                    return true;
                }
            } else {
                let a_plus = exp_draw(rng, s.ap);
                if x + a_plus >= u {
                    return true;
                }
                x += a_plus - exp_draw(rng, s.am);
                i = self.draw_state(rng);
            }
            if x < -self.depth {
                return false;
            }
        }
        false
    }
}

/// Run `runs` independent paths of `one_run` on substreams of `seed`,
/// spread over `jobs` worker threads (0 = all cores, 1 = in place), and
/// return the per-run values in run order.
fn collect_runs<F>(runs: u64, seed: u64, jobs: usize, one_run: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let sequential = |one_run: &F| {
        (0..runs)
            .map(|j| one_run(&mut substream(seed, j)))
            .collect::<Result<Vec<f64>>>()
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parallel = |one_run: &F| {
            (0..runs)
                .into_par_iter()
                .map(|j| one_run(&mut substream(seed, j)))
                .collect::<Result<Vec<f64>>>()
        };
        match jobs {
            1 => sequential(&one_run),
            0 => parallel(&one_run),
            n => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Numerical(format!("could not build thread pool: {e}")))?
                .install(|| parallel(&one_run)),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        // Single-threaded build: the jobs knob degrades to sequential
        // execution with identical output.
        let _ = jobs;
        sequential(&one_run)
    }
}

/// Fold per-run values into an [`Estimate`]; deterministic left-to-right
/// summation in run order, independent of how the runs were scheduled.
fn summarize(values: &[f64], seed: u64, method: Method, ceiling: Option<f64>) -> Estimate {
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Estimate {
        mean,
        std_error,
        relative_error: if mean > 0.0 {
            std_error / mean
        } else {
            f64::INFINITY
        },
        ci_low: mean - 1.96 * std_error,
        ci_high: mean + 1.96 * std_error,
        runs: values.len() as u64,
        seed,
        method,
        max_bound_ratio: ceiling.map(|c| max / c),
    }
}

fn check_batch(u: f64, runs: u64) -> Result<()> {
    if !(u > 0.0) {
        return Err(Error::Invalid(format!(
            "initial reserve must be positive, got {u}"
        )));
    }
    if runs < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 runs for a standard error, got {runs}"
        )));
    }
    Ok(())
}

/// Estimate `psi(u)` by importance sampling under the exponential twist.
///
/// `jobs`: 0 uses every core, 1 stays on the calling thread, anything else
/// uses a dedicated pool of that size. The estimate is identical in every
/// case.
pub fn ruin_probability_is(
    model: &Model,
    u: f64,
    runs: u64,
    seed: u64,
    jobs: usize,
) -> Result<Estimate> {
    check_batch(u, runs)?;
    let sim = Simulator::new(model)?;
    let values = collect_runs(runs, seed, jobs, |rng| Ok(sim.run(u, rng)?.likelihood))?;
    let ceiling = sim.twisted.omega_big * (-sim.twisted.omega_star * u).exp();
    Ok(summarize(
        &values,
        seed,
        Method::ImportanceSampling,
        Some(ceiling),
    ))
}

/// Estimate `psi(u)` by crude Monte Carlo under the original measure.
///
/// Only practical where ruin is not rare: the relative error grows like
/// `exp(omega_star u / 2)`, against the twisted estimator's bounded one.
pub fn ruin_probability_crude(
    model: &Model,
    u: f64,
    runs: u64,
    seed: u64,
    jobs: usize,
) -> Result<Estimate> {
    check_batch(u, runs)?;
    model.validate()?;
    let omega = crate::asymptotics::omega_star(model)?;
    let sim = CrudeSimulator::new(model, omega, u)?;
    let values = collect_runs(runs, seed, jobs, |rng| {
        Ok(if sim.run(u, rng) { 1.0 } else { 0.0 })
    })?;
    Ok(summarize(&values, seed, Method::Crude, None))
}

/// Importance-sampling relative error at each reserve level, with common
/// random numbers across levels (same seed, same substreams).
///
/// The bounded-relative-error property shows up as a flat profile; the
/// crude estimator's error would grow exponentially on the same grid.
pub fn relative_error_profile(
    model: &Model,
    levels: &[f64],
    runs: u64,
    seed: u64,
    jobs: usize,
) -> Result<Vec<(f64, f64)>> {
    levels
        .iter()
        .map(|&u| {
            Ok((
                u,
                ruin_probability_is(model, u, runs, seed, jobs)?.relative_error,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::*;

    #[test]
    fn likelihood_mean_is_one_at_negligible_reserve() {
        // Ruin is certain as u -> 0, and every path crosses on its first
        // segment; the branch constants must average back to exactly 1.
        let sim = Simulator::new(&base_model(0.75)).unwrap();
        let mut sum = 0.0;
        let n = 20_000;
        for j in 0..n {
            sum += sim.run(1e-9, &mut substream(7, j)).unwrap().likelihood;
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn base_model_estimate_matches_the_exact_value() {
        // psi(175) = 1.895311e-4 (the asymptote is exact to ~60 digits at
        // this depth); 2000 runs give a relative error around 0.15%.
        let est = ruin_probability_is(&base_model(0.75), 175.0, 2000, 42, 1).unwrap();
        let truth = 1.895311e-4;
        assert!(
            (est.mean - truth).abs() < 4.0 * est.std_error,
            "mean {} vs {truth} (se {})",
            est.mean,
            est.std_error
        );
        assert!(est.relative_error < 0.01);
        assert!(est.ci_low <= est.mean && est.mean <= est.ci_high);
    }

    #[test]
    fn estimates_are_reproducible_across_thread_counts() {
        let model = base_model(0.75);
        let a = ruin_probability_is(&model, 50.0, 400, 9, 1).unwrap();
        let b = ruin_probability_is(&model, 50.0, 400, 9, 2).unwrap();
        let c = ruin_probability_is(&model, 50.0, 400, 9, 0).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.mean.to_bits(), c.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        let d = ruin_probability_is(&model, 50.0, 400, 10, 1).unwrap();
        assert_ne!(a.mean.to_bits(), d.mean.to_bits());
    }

    #[test]
    fn every_path_respects_the_corrected_ceiling() {
        // ... and a measurable fraction exceeds the uniform-bound prefactor
        // Omega, which is why the pathwise ceiling needs the larger
        // constant (drop ratio 1.529 vs Omega = 1 in this model).
        let model = single_state_model();
        let sim = Simulator::new(&model).unwrap();
        let u = 5.0;
        let ceiling = sim.twisted().path_ceiling(u);
        let omega_ceiling = sim.twisted().omega_big * (-sim.twisted().omega_star * u).exp();
        let mut over_omega = 0;
        for j in 0..2000 {
            let run = sim.run(u, &mut substream(3, j)).unwrap();
            assert!(
                run.likelihood <= ceiling * (1.0 + 1e-9),
                "run {j}: L = {} > {ceiling}",
                run.likelihood
            );
            if run.likelihood > omega_ceiling {
                over_omega += 1;
                assert!(run.switch_segment && run.crossing == Crossing::DiffusionMax);
            }
        }
        assert!(
            over_omega > 0,
            "expected some paths above the Omega ceiling"
        );
    }

    #[test]
    fn likelihood_reconciles_with_the_closed_form() {
        for model in [base_model(0.75), hyperexp_model(), three_state_model()] {
            let sim = Simulator::new(&model).unwrap();
            for j in 0..2000 {
                let run = sim.run(10.0, &mut substream(11, j)).unwrap();
                let residual = run.reconciliation_residual(&model, sim.twisted());
                assert!(
                    residual.abs() <= 1e-7 * (1.0 + run.log_likelihood.abs()),
                    "run {j}: residual {residual}"
                );
                assert!(run.x_at_crossing >= 10.0);
                assert!(run.cycles >= 1);
                if run.crossing == Crossing::ClaimJump {
                    assert!(run.claims_seen >= 1);
                }
            }
        }
    }

    #[test]
    fn importance_sampling_agrees_with_crude_monte_carlo() {
        // psi(5) = 6.937498e-2 for this model; both estimators must land
        // there within their joint sampling error.
        let model = single_state_model();
        let truth = 0.0693749820345683;
        let is = ruin_probability_is(&model, 5.0, 50_000, 17, 0).unwrap();
        let crude = ruin_probability_crude(&model, 5.0, 200_000, 17, 0).unwrap();
        let joint = (is.std_error.powi(2) + crude.std_error.powi(2)).sqrt();
        assert!(
            (is.mean - crude.mean).abs() <= 4.0 * joint,
            "IS {} vs crude {} (joint se {joint})",
            is.mean,
            crude.mean
        );
        assert!((is.mean - truth).abs() <= 4.0 * is.std_error);
        assert!((crude.mean - truth).abs() <= 4.0 * crude.std_error);
    }

    #[test]
    fn symmetric_model_estimates_match_the_collapsed_model() {
        // Two identical states are statistically the same model as their
        // collapse; the estimates differ only by sampling noise.
        let sym = ruin_probability_is(&symmetric_model(), 20.0, 30_000, 5, 0).unwrap();
        let solo =
            ruin_probability_is(&symmetric_model().no_modulation(), 20.0, 30_000, 6, 0).unwrap();
        let joint = (sym.std_error.powi(2) + solo.std_error.powi(2)).sqrt();
        assert!(
            (sym.mean - solo.mean).abs() <= 4.0 * joint,
            "symmetric {} vs collapsed {}",
            sym.mean,
            solo.mean
        );
    }

    #[test]
    fn cycle_increments_drift_at_the_tilted_mean() {
        // Long paths: the loss at crossing over the number of periods
        // estimates the tilted per-period increment. A single path has a
        // ~13% spread (the period count is a first-passage time), so
        // average a batch of them.
        let model = base_model(0.75);
        let sim = Simulator::new(&model).unwrap();
        let mut sum = 0.0;
        let n = 64;
        for j in 0..n {
            let run = sim.run(1000.0, &mut substream(23, j)).unwrap();
            sum += run.x_at_crossing / run.cycles as f64;
        }
        let per_cycle = sum / n as f64;
        let expected = sim.twisted().mean_increment;
        assert!(
            per_cycle > 0.9 * expected && per_cycle < 1.1 * expected,
            "per-cycle increment {per_cycle} vs mean {expected}"
        );
    }

    #[test]
    fn crude_estimator_hits_the_boundary_cases() {
        let model = single_state_model();
        // Deep level: ruin is ~e^-35; no path among 200 crosses.
        let deep = ruin_probability_crude(&model, 80.0, 200, 1, 1).unwrap();
        assert_eq!(deep.mean, 0.0);
        assert!(deep.relative_error.is_infinite());
        // Negligible level: every path crosses immediately.
        let shallow = ruin_probability_crude(&model, 1e-9, 200, 1, 1).unwrap();
        assert!(shallow.mean > 0.99, "mean = {}", shallow.mean);
    }

    #[test]
    fn relative_error_is_flat_in_the_reserve() {
        let profile =
            relative_error_profile(&base_model(0.75), &[50.0, 100.0, 150.0], 4000, 31, 0).unwrap();
        let res: Vec<f64> = profile.iter().map(|&(_, re)| re).collect();
        let spread = res.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            / res.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 2.0, "relative errors {res:?}");
        assert_eq!(profile.len(), 3);
    }

    #[test]
    fn batch_parameters_are_validated() {
        let model = base_model(0.75);
        assert!(matches!(
            ruin_probability_is(&model, 0.0, 100, 1, 1),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            ruin_probability_is(&model, 10.0, 1, 1, 1),
            Err(Error::Invalid(_))
        ));
        let sim = Simulator::new(&model).unwrap();
        assert!(sim.run(-1.0, &mut substream(0, 0)).is_err());
    }

    #[test]
    fn estimate_serializes_without_the_crude_only_gap() {
        let est = ruin_probability_is(&base_model(0.75), 10.0, 100, 1, 1).unwrap();
        let json = serde_json::to_value(&est).unwrap();
        assert!(json.get("max_bound_ratio").is_some());
        assert_eq!(json["method"], "importance_sampling");
        let crude = ruin_probability_crude(&base_model(0.75), 1.0, 50, 1, 1).unwrap();
        let json = serde_json::to_value(&crude).unwrap();
        assert!(json.get("max_bound_ratio").is_none());
    }
}
