//! Spectral analysis of the matrix Laplace exponent.
//!
//! Tracking the active state alongside the net-loss level turns the
//! resampled model into a Markov-additive process on `d` phases with matrix
//! exponent
//!
//! ```text
//! M(alpha) = q e p^T - q I + diag(phi_i(alpha)),
//! ```
//!
//! i.e. `E[exp(-alpha L(t)); J(t) = k | J(0) = j] = (exp(M(alpha) t))_{jk}`.
//! Conjugating by `diag(sqrt(p_i))` makes `M(alpha)` symmetric, so its
//! spectrum is real. Eigenvalues are the roots of the rational secular
//! equation
//!
//! ```text
//! Psi_alpha(theta) = sum_i p_i / (theta - c_i) = 1/q,   c_i = phi_i(alpha) - q,
//! ```
//!
//! which interlace the poles `c_i`: one root in each gap between distinct
//! poles, one dominant root in `(max c_i, max c_i + q]`, and a root *at*
//! each pole of multiplicity `m > 1`, repeated `m - 1` times. Eigenvectors
//! come in closed form, `S_{jk} = 1/(q - phi_j + theta_k)`, valid while no
//! eigenvalue sits on a pole.
//!
//! The ladder-height machinery at the bottom converts the positive roots of
//! `det M(alpha)` (exactly `d - 1` of them under the net-profit condition)
//! into the generator of the descending ladder phase process, whose
//! stationary law feeds the exact asymptotic prefactor.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::solve;

/// Poles closer than this are treated as one pole with multiplicity.
const POLE_MERGE_TOL: f64 = 1e-9;

/// Relative residual required of every non-pole eigenvalue,
/// `|Psi(theta) - 1/q| <= RESIDUAL_TOL * max(1, 1/q)`. Roots wedged
/// between near-coincident poles are exempt up to the derivative-limited
/// floor `|Psi'| * O(ulp)`, where no f64 can do better.
const RESIDUAL_TOL: f64 = 1e-10;

/// `det M(alpha)`, expanded so no division can blow up on a pole of `Psi`:
///
/// ```text
/// det M(alpha) = prod_i (phi_i - q) + q sum_i p_i prod_{j != i} (phi_j - q)
/// ```
///
/// (matrix determinant lemma applied to the rank-one update `q e p^T` of
/// `diag(phi_i - q)`). Defined for all `alpha >= 0`; errors only if some
/// `phi_i(alpha)` is past its transform pole (negative `alpha`).
pub fn det_exponent(model: &Model, alpha: f64) -> Result<f64> {
    let c: Vec<f64> = model
        .states
        .iter()
        .map(|s| s.phi(alpha).map(|v| v - model.q))
        .collect::<Result<_>>()?;
    let mut det: f64 = c.iter().product();
    for (i, s) in model.states.iter().enumerate() {
        let partial: f64 = c
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v)
            .product();
        det += model.q * s.p * partial;
    }
    Ok(det)
}

/// Secular function `Psi(theta) = sum_i p_i / (theta - c_i)`.
fn secular(p: &[f64], c: &[f64], theta: f64) -> f64 {
    p.iter().zip(c).map(|(pi, ci)| pi / (theta - ci)).sum()
}

/// `Psi'(theta) = -sum_i p_i / (theta - c_i)^2`.
fn secular_deriv(p: &[f64], c: &[f64], theta: f64) -> f64 {
    -p.iter()
        .zip(c)
        .map(|(pi, ci)| pi / ((theta - ci) * (theta - ci)))
        .sum::<f64>()
}

/// Poles `c_i = phi_i(alpha) - q` in state order.
fn poles(model: &Model, alpha: f64) -> Result<Vec<f64>> {
    model
        .states
        .iter()
        .map(|s| s.phi(alpha).map(|v| v - model.q))
        .collect()
}

/// Solve `Psi(theta) = 1/q` on the open gap `(lo, hi)` between two poles,
/// or on `(lo, lo + q]` for the dominant root when `hi` is infinite.
///
/// `Psi -> +inf` at the left end and `-> -inf` (or `-> 0+` past the last
/// pole) at the right end, so a sign change is guaranteed; the endpoints
/// are walked inwards geometrically until the signs confirm it.
fn gap_root(p: &[f64], c: &[f64], q: f64, lo: f64, hi: f64) -> Result<f64> {
    let target = 1.0 / q;
    let h = |theta: f64| secular(p, c, theta) - target;
    let dh = |theta: f64| secular_deriv(p, c, theta);
    let (mut a, b);
    if hi.is_finite() {
        let gap = hi - lo;
        let mut left = None;
        let mut right = None;
        for t in 1..60 {
            let step = gap * 0.5f64.powi(t);
            if left.is_none() && h(lo + step) > 0.0 {
                left = Some(lo + step);
            }
            if right.is_none() && h(hi - step) < 0.0 {
                right = Some(hi - step);
            }
            if left.is_some() && right.is_some() {
                break;
            }
        }
        (a, b) = match (left, right) {
            (Some(a), Some(b)) if a < b => (a, b),
            // The gap is too narrow to resolve: the root is the gap itself.
            _ => return Ok(0.5 * (lo + hi)),
        };
    } else {
        // Dominant root: Psi(lo + q) <= 1/q since every theta - c_i >= q.
        b = lo + q;
        a = b;
        for t in 1..60 {
            a = lo + q * 0.5f64.powi(t);
            if h(a) > 0.0 {
                break;
            }
        }
        if h(a) <= 0.0 {
            // All mass sits on the pole: the root is exactly lo + q.
            return Ok(b);
        }
    }
    if h(b) == 0.0 {
        return Ok(b);
    }
    let tol = RESIDUAL_TOL * target.max(1.0) * 1e-2; // headroom under the advertised bound
    let mut root = match solve::bisect_newton(h, dh, a, b, tol) {
        Ok(root) => root,
        // Extremely stiff gaps can defeat the residual target; fall back to
        // the bisection answer and let the caller's residual check decide.
        Err(_) => solve::bisect(h, a, b)?,
    };
    // Polish to the attainable fixed point: near-coincident poles make Psi
    // steep enough that a residual target alone under-resolves the root.
    for _ in 0..4 {
        let d = dh(root);
        if !d.is_finite() || d == 0.0 {
            break;
        }
        let step = h(root) / d;
        let next = root - step;
        if !next.is_finite() || next <= lo || next >= hi {
            break;
        }
        root = next;
        if step.abs() <= f64::EPSILON * root.abs().max(1.0) {
            break;
        }
    }
    Ok(root)
}

/// All `d` eigenvalues of `M(alpha)`, ascending, with multiplicity.
///
/// Poles within [`POLE_MERGE_TOL`] of each other are merged; a pole of
/// multiplicity `m` contributes `m - 1` eigenvalues equal to the pole. The
/// secular residual of every non-pole eigenvalue is verified to
/// [`RESIDUAL_TOL`] before returning.
pub fn eigenvalues(model: &Model, alpha: f64) -> Result<Vec<f64>> {
    let p: Vec<f64> = model.states.iter().map(|s| s.p).collect();
    let c = poles(model, alpha)?;
    let q = model.q;

    // Group near-coincident poles: (representative, total mass, multiplicity).
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c[i].total_cmp(&c[j]));
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if (c[i] - g.0).abs() < POLE_MERGE_TOL => {
                g.1 += p[i];
                g.2 += 1;
            }
            _ => groups.push((c[i], p[i], 1)),
        }
    }

    let gp: Vec<f64> = groups.iter().map(|g| g.1).collect();
    let gc: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let mut out = Vec::with_capacity(model.d());
    for (k, g) in groups.iter().enumerate() {
        // A pole of multiplicity m pins m - 1 eigenvalues.
        for _ in 1..g.2 {
            out.push(g.0);
        }
        let hi = groups.get(k + 1).map_or(f64::INFINITY, |next| next.0);
        out.push(gap_root(&gp, &gc, q, g.0, hi)?);
    }
    out.sort_by(f64::total_cmp);

    // Verify the advertised residual on non-pole roots.
    let target = 1.0 / q;
    for &theta in &out {
        if gc.iter().any(|&ci| (theta - ci).abs() <= POLE_MERGE_TOL) {
            continue; // pole eigenvalue: Psi is singular there by construction
        }
        let res = (secular(&gp, &gc, theta) - target).abs();
        if res > RESIDUAL_TOL * target.max(1.0) {
            // Roots squeezed between near-coincident poles carry residuals
            // amplified by |Psi'|; accept them when the root itself is
            // machine-accurate (Newton correction within a few ulps).
            let floor =
                secular_deriv(&gp, &gc, theta).abs() * 32.0 * f64::EPSILON * theta.abs().max(1.0);
            if res > floor {
                return Err(Error::Numerical(format!(
                    "secular residual {res:e} at eigenvalue {theta} exceeds tolerance"
                )));
            }
        }
    }
    Ok(out)
}

/// Largest eigenvalue of `M(alpha)` (the Perron branch of the symmetrised
/// matrix; always a simple root strictly above every pole).
pub fn dominant_eigenvalue(model: &Model, alpha: f64) -> Result<f64> {
    Ok(*eigenvalues(model, alpha)?.last().expect("d >= 1"))
}

/// Derivative of the dominant eigenvalue branch, by implicit
/// differentiation of the secular equation:
///
/// ```text
/// theta'(alpha) = sum_i p_i phi_i'(alpha) / (theta - c_i)^2
///               / sum_i p_i / (theta - c_i)^2 .
/// ```
///
/// At `alpha = 0` this is the mean drift `kappa`. All denominators are
/// positive since the dominant root exceeds every pole.
pub fn dominant_derivative(model: &Model, alpha: f64) -> Result<f64> {
    let theta = dominant_eigenvalue(model, alpha)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in &model.states {
        let gap = theta - (s.phi(alpha)? - model.q);
        let w = s.p / (gap * gap);
        num += w * s.phi_deriv(alpha)?;
        den += w;
    }
    Ok(num / den)
}

/// Spectral decomposition `M(alpha) = S diag(theta) S^{-1}`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Eigenvalues, ascending.
    pub thetas: Vec<f64>,
    /// Eigenvector matrix, `S_{jk} = 1/(q - phi_j + theta_k)`.
    pub s: DMatrix<f64>,
    /// Its inverse (rows are left eigenvectors).
    pub s_inv: DMatrix<f64>,
}

/// Diagonalise `M(alpha)`.
///
/// Errors with a structured message if an eigenvalue collides with a pole
/// (`q - phi_j + theta_k ~ 0`), which happens exactly when states are
/// indistinguishable at `alpha`; collapsing duplicate states is the remedy.
pub fn decompose(model: &Model, alpha: f64) -> Result<Decomposition> {
    let thetas = eigenvalues(model, alpha)?;
    let c = poles(model, alpha)?;
    let d = model.d();
    let scale = c.iter().fold(model.q, |m, v| m.max(v.abs()));
    let mut s = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            let den = thetas[k] - c[j];
            if den.abs() < 1e-12 * scale.max(1.0) {
                return Err(Error::Numerical(format!(
                    "eigenvector matrix is singular: eigenvalue {} sits on the pole of state {j} \
                     (indistinguishable states at alpha = {alpha}; collapse duplicate states)",
                    thetas[k]
                )));
            }
            s[(j, k)] = 1.0 / den;
        }
    }
    let s_inv = s
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("eigenvector matrix is numerically singular".into()))?;
    // The decomposition must actually reproduce M(alpha) = q e p^T + diag(c).
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            m[(j, k)] = model.q * model.states[k].p + if j == k { c[j] } else { 0.0 };
        }
    }
    let recon = &s * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(thetas.clone())) * &s_inv;
    let err = (&recon - &m).amax();
    if err > 1e-8 * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "spectral reconstruction error {err:e} exceeds tolerance"
        )));
    }
    Ok(Decomposition { thetas, s, s_inv })
}

/// Ladder-height phase process of the loss maximum.
pub struct Ladder {
    /// Positive roots of `det M(alpha)`, ascending (`d - 1` of them).
    pub roots: Vec<f64>,
    /// Generator of the descending ladder phase process,
    /// `Lambda = -V diag(0, roots) V^{-1}` with `V = [e, v_1, ..]`,
    /// `v_j(a) = 1/(q - phi_j(a))`.
    pub generator: DMatrix<f64>,
    /// Stationary law of the ladder phase process (left null vector of the
    /// generator, normalised to a probability vector).
    pub pibar: Vec<f64>,
}

/// Positive roots of `det M(alpha)`, ascending.
///
/// Under the net-profit condition there are exactly `d - 1`; any other
/// count found by the scan is reported as a numerical failure. The scan
/// stops once every unbounded `phi_i` has crossed level `q`: beyond that
/// point all eigenvalues are positive and the determinant cannot vanish.
pub fn positive_roots(model: &Model) -> Result<Vec<f64>> {
    let want = model.d() - 1;
    if want == 0 {
        return Ok(Vec::new());
    }
    // Upper end of the scan: the largest first crossing of phi_i = q among
    // states whose exponent is unbounded (sigma2 > 0 or r > 0).
    let mut hi: f64 = 0.0;
    for s in &model.states {
        if s.sigma2 == 0.0 && s.r <= 0.0 {
            continue; // phi bounded above by 0 < q: never crosses
        }
        let h = |a: f64| s.phi(a).expect("phi is entire for alpha >= 0") - model.q;
        let mut w = 1.0;
        while h(w) <= 0.0 {
            w *= 2.0;
            if w > 1e12 {
                return Err(Error::Numerical(
                    "could not bracket the level-q crossing of a state exponent".into(),
                ));
            }
        }
        hi = hi.max(solve::bisect(h, 0.0, w)?);
    }
    if hi == 0.0 {
        return Err(Error::Numerical(
            "determinant root scan has no upper bound: every state exponent is bounded".into(),
        ));
    }
    hi *= 1.0 + 1e-9; // include a root exactly at the crossing

    let min_rate = model
        .states
        .iter()
        .filter(|s| s.lambda > 0.0)
        .map(|s| s.claims.min_rate())
        .fold(f64::INFINITY, f64::min);
    let step = if min_rate.is_finite() {
        0.01 * min_rate.min(hi)
    } else {
        0.01 * hi
    };

    let mut roots = Vec::new();
    let mut a = step; // skip the structural root at alpha = 0
    let mut fa = det_exponent(model, a)?;
    if fa == 0.0 {
        roots.push(a);
    }
    while a < hi {
        let b = (a + step).min(hi);
        let fb = det_exponent(model, b)?;
        if fb == 0.0 {
            roots.push(b);
        } else if (fa > 0.0) != (fb > 0.0) {
            roots.push(solve::bisect(|x| det_exponent(model, x).unwrap(), a, b)?);
        }
        a = b;
        fa = fb;
    }
    if roots.len() != want {
        return Err(Error::Numerical(format!(
            "determinant root scan found {} positive roots, expected {want}",
            roots.len()
        )));
    }
    Ok(roots)
}

/// Build the ladder phase generator and its stationary law.
///
/// For `d = 1` the ladder phase is trivial: no positive roots, generator
/// `[0]`, stationary law `(1)`.
pub fn ladder(model: &Model) -> Result<Ladder> {
    let d = model.d();
    if d == 1 {
        return Ok(Ladder {
            roots: Vec::new(),
            generator: DMatrix::zeros(1, 1),
            pibar: vec![1.0],
        });
    }
    let roots = positive_roots(model)?;
    let mut v = DMatrix::zeros(d, d);
    for j in 0..d {
        v[(j, 0)] = 1.0;
    }
    for (k, &a) in roots.iter().enumerate() {
        let mut col: Vec<f64> = Vec::with_capacity(d);
        for s in &model.states {
            let den = model.q - s.phi(a)?;
            if den.abs() < 1e-14 {
                return Err(Error::Numerical(format!(
                    "ladder eigenvector undefined: q - phi_{} vanishes at root {a}",
                    col.len()
                )));
            }
            col.push(1.0 / den);
        }
        let norm = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for j in 0..d {
            v[(j, k + 1)] = col[j] / norm;
        }
    }
    let v_inv = v
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("ladder eigenvector matrix is singular".into()))?;
    let mut gamma = DMatrix::zeros(d, d);
    for (k, &a) in roots.iter().enumerate() {
        gamma[(k + 1, k + 1)] = a;
    }
    let generator = -(&v * gamma * &v_inv);

    // Left null vector: pibar V = c e_1, so pibar is row 0 of V^{-1}.
    let mut pibar: Vec<f64> = (0..d).map(|j| v_inv[(0, j)]).collect();
    let total: f64 = pibar.iter().sum();
    for x in &mut pibar {
        *x /= total;
    }

    // Construction invariants: generator rows sum to 0, nonnegative
    // off-diagonals, and pibar kills it from the left.
    let scale = roots.last().copied().unwrap_or(1.0).max(1.0);
    for j in 0..d {
        let row_sum: f64 = (0..d).map(|k| generator[(j, k)]).sum();
        if row_sum.abs() > 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "ladder generator row {j} sums to {row_sum:e}, not 0"
            )));
        }
        for k in 0..d {
            if j != k && generator[(j, k)] < -1e-9 * scale {
                return Err(Error::Numerical(format!(
                    "ladder generator off-diagonal ({j},{k}) = {} is negative",
                    generator[(j, k)]
                )));
            }
        }
    }
    for k in 0..d {
        let dot: f64 = (0..d).map(|j| pibar[j] * generator[(j, k)]).sum();
        if dot.abs() > 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "ladder stationary law residual {dot:e} in column {k}"
            )));
        }
    }
    Ok(Ladder {
        roots,
        generator,
        pibar,
    })
}

/// Closed forms for two-state models, used to cross-check the general path.
pub mod d2 {
    use super::*;

    /// Discriminant of the characteristic polynomial of `M(alpha)`:
    /// `(phi_1 - phi_2)^2 - 2q(phi_1 + phi_2) + q^2 + 4q(p_1 phi_1 + p_2 phi_2)`.
    pub fn discriminant(model: &Model, alpha: f64) -> Result<f64> {
        let [s1, s2] = two(model)?;
        let (f1, f2) = (s1.phi(alpha)?, s2.phi(alpha)?);
        let q = model.q;
        Ok((f1 - f2).powi(2) - 2.0 * q * (f1 + f2) + q * q + 4.0 * q * (s1.p * f1 + s2.p * f2))
    }

    /// Both eigenvalues `(trace -/+ sqrt(discriminant)) / 2`, ascending.
    pub fn eigenvalues(model: &Model, alpha: f64) -> Result<(f64, f64)> {
        let [s1, s2] = two(model)?;
        let t = s1.phi(alpha)? + s2.phi(alpha)? - model.q;
        let root = discriminant(model, alpha)?.max(0.0).sqrt();
        Ok(((t - root) / 2.0, (t + root) / 2.0))
    }

    /// The unique positive root of `det M(alpha)`, i.e. of
    /// `phi_1 phi_2 = q (p_1 phi_1 + p_2 phi_2)`.
    pub fn alpha_star(model: &Model) -> Result<f64> {
        let roots = positive_roots(model)?;
        debug_assert_eq!(roots.len(), 1);
        Ok(roots[0])
    }

    /// Stationary ladder law in closed form,
    /// `pibar ∝ (p_1 phi_1(alpha*), p_2 phi_2(alpha*))`.
    pub fn pibar(model: &Model) -> Result<[f64; 2]> {
        let [s1, s2] = two(model)?;
        let a = alpha_star(model)?;
        let (w1, w2) = (s1.p * s1.phi(a)?, s2.p * s2.phi(a)?);
        Ok([w1 / (w1 + w2), w2 / (w1 + w2)])
    }

    fn two(model: &Model) -> Result<[&crate::model::State; 2]> {
        match model.states.as_slice() {
            [a, b] => Ok([a, b]),
            _ => Err(Error::Domain(format!(
                "closed forms require exactly two states, model has {}",
                model.d()
            ))),
        }
    }
}
