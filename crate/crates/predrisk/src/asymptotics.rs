//! The second-order risk expansion
//! `R(theta, f_h) = p/(2n) - p/(4n^2) + G(theta)/n^2 + O(n^-3)`,
//! its likelihood/prior split, the quadratic-in-alpha risk over the
//! relatively invariant class, and a finite-n extrapolation oracle.
//!
//! `G(theta)` is evaluated from per-observation cumulant tensors through a
//! fixed coefficient table. Two published transcriptions of this constant
//! disagree in places, so the table below was settled empirically: the
//! finite-n oracle (exact risks extrapolated against the expansion) is the
//! authority, and the per-entry comments record where each coefficient came
//! from and which printed variant it overrides. The uncorrected variant of
//! the disputed gradient-coupling coefficient is kept behind
//! [`H1Coupling::PrintedSingleInverse`] for diagnostics; the oracle rejects
//! it decisively.

use crate::cumulants::{cumulants, CumulantMethod, CumulantTensors};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::numerics::weighted_lstsq;
use crate::prior::{Prior, PriorKind};
use crate::risk::{risk_exact, risk_mc, Procedure, RiskEstimate};
use serde::Serialize;

/// The expansion constant at one parameter point, split into the
/// prior-independent likelihood term (the value at the Jeffreys prior) and
/// the prior term (the Jeffreys-centered remainder, exactly zero at the
/// Jeffreys prior itself).
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionResult {
    pub p: usize,
    pub g_theta: f64,
    pub likelihood_term: f64,
    pub prior_term: f64,
}

impl ExpansionResult {
    pub fn first_order(&self, n: usize) -> f64 {
        self.p as f64 / (2.0 * n as f64)
    }

    pub fn second_order_const(&self, n: usize) -> f64 {
        -(self.p as f64) / (4.0 * (n * n) as f64)
    }

    pub fn total(&self, n: usize) -> f64 {
        self.first_order(n) + self.second_order_const(n) + self.g_theta / ((n * n) as f64)
    }
}

// ---------------------------------------------------------------------------
// The coefficient table
// ---------------------------------------------------------------------------

type QuadPattern = fn(&CumulantTensors, usize, usize, usize, usize) -> f64;
type CubicPattern = fn(&CumulantTensors, usize, usize, usize, usize, usize, usize) -> f64;

/// Double-inverse-information block: coeff * Linv_ir Linv_js * L_pattern.
/// Each entry notes the contraction it encodes; the set reproduces the
/// one-dimensional corollary exactly and extrapolated exact risks to O(n^-3).
const QUAD_TERMS: [(f64, QuadPattern); 4] = [
    // 1/2 L_{ij,r,s}
    (0.5, |t, i, r, j, s| t.t211.get(&[i, j, r, s])),
    // 3/4 L_{ij,rs}
    (0.75, |t, i, r, j, s| t.t22.get(&[i, j, r, s])),
    // L_{irj,s}
    (1.0, |t, i, r, j, s| t.t31.get(&[i, r, j, s])),
    // 1/2 L_{irjs}
    (0.5, |t, i, r, j, s| t.t4.get(&[i, r, j, s])),
];

/// Triple-inverse-information block: coeff * Linv_ir Linv_js Linv_kt * product.
const CUBIC_TERMS: [(f64, CubicPattern); 7] = [
    // 1/2 L_{i,rj} L_{k,st}
    (0.5, |t, i, r, j, s, k, tt| t.t21.get(&[r, j, i]) * t.t21.get(&[s, tt, k])),
    // 1/2 L_{i,jk} L_{t,rs}
    (0.5, |t, i, r, j, s, k, tt| t.t21.get(&[j, k, i]) * t.t21.get(&[r, s, tt])),
    // 1/6 L_{ijk} L_{r,s,t}
    (1.0 / 6.0, |t, i, r, j, s, k, tt| t.t3.get(&[i, j, k]) * t.t111.get(&[r, s, tt])),
    // L_{irj} L_{k,st}
    (1.0, |t, i, r, j, s, k, tt| t.t3.get(&[i, r, j]) * t.t21.get(&[s, tt, k])),
    // 3/2 L_{ijk} L_{r,st}
    (1.5, |t, i, r, j, s, k, tt| t.t3.get(&[i, j, k]) * t.t21.get(&[s, tt, r])),
    // 1/2 L_{irj} L_{skt}
    (0.5, |t, i, r, j, s, k, tt| t.t3.get(&[i, r, j]) * t.t3.get(&[s, k, tt])),
    // 7/12 L_{ijk} L_{rst}
    (7.0 / 12.0, |t, i, r, j, s, k, tt| t.t3.get(&[i, j, k]) * t.t3.get(&[r, s, tt])),
];

/// Evaluate `G(theta)` from the tensors and a prior's differential form.
///
/// The baseline constant `-p/4` aligns the table with the expansion
/// `p/(2n) - p/(4n^2) + G/n^2`: the finite-n oracle fixes it (the normal
/// location family with a flat prior must give G identically zero, and the
/// extrapolated exact risks of the discrete families agree only with this
/// alignment).
fn g_from_tensors(ct: &CumulantTensors, h_grad: &[f64], h_hess: &[f64]) -> f64 {
    let d = ct.d;
    let inv = &ct.fisher_inv;
    let mut g = 0.0;
    for i in 0..d {
        for r in 0..d {
            let wir = inv.get(&[i, r]);
            if wir == 0.0 {
                continue;
            }
            for j in 0..d {
                for s in 0..d {
                    let w2 = wir * inv.get(&[j, s]);
                    if w2 == 0.0 {
                        continue;
                    }
                    let mut quad = 0.0;
                    for (c, pat) in QUAD_TERMS {
                        quad += c * pat(ct, i, r, j, s);
                    }
                    g += w2 * quad;
                    for k in 0..d {
                        for t in 0..d {
                            let w3 = w2 * inv.get(&[k, t]);
                            if w3 == 0.0 {
                                continue;
                            }
                            let mut cubic = 0.0;
                            for (c, pat) in CUBIC_TERMS {
                                cubic += c * pat(ct, i, r, j, s, k, t);
                            }
                            g += w3 * cubic;
                        }
                    }
                }
            }
        }
    }
    // gradient coupling: Linv_ir Linv_js (L_{rj,s} + L_{rjs}) h_i
    for i in 0..d {
        for r in 0..d {
            let wir = inv.get(&[i, r]);
            if wir == 0.0 || h_grad[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                for s in 0..d {
                    g += wir
                        * inv.get(&[j, s])
                        * (ct.t21.get(&[r, j, s]) + ct.t3.get(&[r, j, s]))
                        * h_grad[i];
                }
            }
        }
    }
    // curvature coupling: Linv_ir (h_ir + h_i h_r / 2)
    for i in 0..d {
        for r in 0..d {
            g += inv.get(&[i, r]) * (h_hess[i * d + r] + 0.5 * h_grad[i] * h_grad[r]);
        }
    }
    g - d as f64 / 4.0
}

/// General-p expansion constant with the likelihood/prior split.
///
/// The likelihood term is `G` at the Jeffreys prior (where the prior term
/// vanishes identically); the prior term is the Jeffreys-centered remainder.
pub fn g_term_general(family: &Family, prior: &Prior, theta: &[f64]) -> Result<ExpansionResult> {
    let ct = cumulants(family, theta, CumulantMethod::Analytic)?;
    let d = ct.d;
    let jeff = Prior::jeffreys(family)?;
    let likelihood_term = g_from_tensors(&ct, &jeff.log_grad(theta), &jeff.log_hess(theta));
    let is_jeffreys = matches!(prior.kind(), PriorKind::Jeffreys { .. });
    let (g_theta, prior_term) = if is_jeffreys {
        (likelihood_term, 0.0)
    } else {
        let g = g_from_tensors(&ct, &prior.log_grad(theta), &prior.log_hess(theta));
        (g, g - likelihood_term)
    };
    Ok(ExpansionResult { p: d, g_theta, likelihood_term, prior_term })
}

/// Variant selector for the disputed one-dimensional gradient-coupling
/// coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum H1Coupling {
    /// `Linv^2 (L_{1,2} + L_3) h_1` — the coefficient consistent with the
    /// worked Poisson form and confirmed by the extrapolation oracle.
    SquaredInverse,
    /// `Linv (L_{1,2} + L_3) h_1` as printed in the corollary display;
    /// rejected by the oracle, kept for diagnostics.
    PrintedSingleInverse,
}

/// One-dimensional expansion constant via the scalar corollary bracket
/// (an independent transcription of the same constant; `g_term_general`
/// must agree with it at p = 1).
pub fn g_term_1d(family: &Family, prior: &Prior, theta: &[f64]) -> Result<ExpansionResult> {
    let jeff = Prior::jeffreys(family)?;
    let lik = g_1d_value(family, &jeff, theta, H1Coupling::SquaredInverse)?;
    let is_jeffreys = matches!(prior.kind(), PriorKind::Jeffreys { .. });
    let (g, pt) = if is_jeffreys {
        (lik, 0.0)
    } else {
        let g = g_1d_value(family, prior, theta, H1Coupling::SquaredInverse)?;
        (g, g - lik)
    };
    Ok(ExpansionResult { p: 1, g_theta: g, likelihood_term: lik, prior_term: pt })
}

/// The raw one-dimensional bracket with an explicit coupling choice.
pub fn g_1d_value(
    family: &Family,
    prior: &Prior,
    theta: &[f64],
    coupling: H1Coupling,
) -> Result<f64> {
    if family.param_dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "g_term_1d needs a one-parameter family; `{}` has p = {} (use g_term_general)",
            family.name(),
            family.param_dim()
        )));
    }
    let ct = cumulants(family, theta, CumulantMethod::Analytic)?;
    let l11 = ct.t11.get(&[0, 0]);
    let inv = 1.0 / l11;
    let l112 = ct.t211.get(&[0, 0, 0, 0]); // L_{1,1,2} = E[l'' l' l']
    let l22 = ct.t22.get(&[0, 0, 0, 0]);
    let l13 = ct.t31.get(&[0, 0, 0, 0]); // E[l''' l']
    let l4 = ct.t4.get(&[0, 0, 0, 0]);
    let l12 = ct.t21.get(&[0, 0, 0]); // E[l'' l']
    let l3 = ct.t3.get(&[0, 0, 0]);
    let l111 = ct.t111.get(&[0, 0, 0]);
    let h1 = prior.log_grad(theta)[0];
    let h2 = prior.log_hess(theta)[0];
    let quad = inv * inv * (0.5 * l112 + 0.75 * l22 + l13 + 0.5 * l4);
    let cubic = inv.powi(3)
        * (l12 * l12 + l3 * l111 / 6.0 + 2.5 * l3 * l12 + 13.0 / 12.0 * l3 * l3);
    let coupling_coef = match coupling {
        H1Coupling::SquaredInverse => inv * inv * (l12 + l3),
        H1Coupling::PrintedSingleInverse => inv * (l12 + l3),
    };
    Ok(quad + cubic + coupling_coef * h1 + inv * (h2 + 0.5 * h1 * h1) - 0.25)
}

/// The prior term exactly as displayed in the Jeffreys-centered remainder
/// form, `Linv_ir { -J_r (h_i - J_i) + (h_ir - J_ir) + (h_i - J_i)(h_r - J_r)/2 }`.
/// For one-parameter and location families it coincides with
/// `g_term_general`'s prior term; elsewhere the two differ by a computable
/// parametrization-dependent coupling, and the split used operationally is
/// the Jeffreys-centered one (prior term := G(h) - G(J)).
pub fn prior_term_centered_display(
    family: &Family,
    prior: &Prior,
    theta: &[f64],
) -> Result<f64> {
    let ct = cumulants(family, theta, CumulantMethod::Analytic)?;
    let d = ct.d;
    let jeff = Prior::jeffreys(family)?;
    let h = prior.log_grad(theta);
    let hh = prior.log_hess(theta);
    let jg = jeff.log_grad(theta);
    let jh = jeff.log_hess(theta);
    let mut out = 0.0;
    for i in 0..d {
        for r in 0..d {
            out += ct.fisher_inv.get(&[i, r])
                * (-jg[r] * (h[i] - jg[i])
                    + (hh[i * d + r] - jh[i * d + r])
                    + 0.5 * (h[i] - jg[i]) * (h[r] - jg[r]));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Finite-n extrapolation oracle
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub enum RiskSource {
    Exact,
    MonteCarlo { reps: u64, seed: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtrapolationResult {
    pub g: f64,
    pub cubic_coef: f64,
    /// max |fit residual| / |excess| over the grid.
    pub fit_residual: f64,
    pub risks: Vec<RiskEstimate>,
    pub n_grid: Vec<usize>,
}

/// Estimate `G(theta)` from finite-n risks: fit
/// `R(n) - p/(2n) + p/(4n^2)` against `{1/n^2, 1/n^3}` and report the
/// `1/n^2` coefficient. Exact risks are weighted by `n^4` per row (the
/// remaining model error is O(n^-4)); Monte Carlo risks are
/// inverse-variance weighted and rejected when noise dominates.
pub fn excess_risk_extrapolate(
    family: &Family,
    prior: &Prior,
    theta: &[f64],
    n_grid: &[usize],
    source: RiskSource,
) -> Result<ExtrapolationResult> {
    if n_grid.len() < 4 {
        return Err(Error::InvalidArgument(
            "extrapolation needs at least 4 sample sizes".into(),
        ));
    }
    let p = family.param_dim() as f64;
    let mut risks = Vec::with_capacity(n_grid.len());
    for (k, &n) in n_grid.iter().enumerate() {
        let r = match source {
            RiskSource::Exact => risk_exact(family, theta, n, Procedure::Predictive(prior))?,
            RiskSource::MonteCarlo { reps, seed } => risk_mc(
                family,
                theta,
                n,
                Procedure::Predictive(prior),
                reps,
                seed.wrapping_add(k as u64),
            )?,
        };
        risks.push(r);
    }
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (&n, r) in n_grid.iter().zip(risks.iter()) {
        let nf = n as f64;
        let y = r.value - p / (2.0 * nf) + p / (4.0 * nf * nf);
        if !y.is_finite() {
            return Err(Error::FitRejected(format!("risk at n = {n} is not finite")));
        }
        // Monte Carlo noise gate: the n^-2 term must dwarf the noise.
        if let RiskSource::MonteCarlo { .. } = source {
            let scale = y.abs().max(p / (4.0 * nf * nf));
            if r.std_error > 0.1 * scale {
                return Err(Error::FitRejected(format!(
                    "noise-dominated at n = {n}: se {:.3e} exceeds 10% of the n^-2 term {:.3e}; \
                     raise the replicate count",
                    r.std_error, scale
                )));
            }
        }
        rows.push(vec![1.0 / (nf * nf), 1.0 / (nf * nf * nf)]);
        ys.push(y);
        let w = match source {
            RiskSource::Exact => nf.powi(8),
            RiskSource::MonteCarlo { .. } => 1.0 / (r.std_error * r.std_error).max(1e-300),
        };
        ws.push(w);
    }
    let beta = weighted_lstsq(&rows, &ys, &ws)?;
    let mut worst = 0.0f64;
    for (row, &y) in rows.iter().zip(ys.iter()) {
        let fit = beta[0] * row[0] + beta[1] * row[1];
        worst = worst.max((fit - y).abs() / y.abs().max(1e-12));
    }
    Ok(ExtrapolationResult {
        g: beta[0],
        cubic_coef: beta[1],
        fit_residual: worst,
        risks,
        n_grid: n_grid.to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Quadratic-in-alpha solve
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct AlphaSolveResult {
    /// Coefficients (a, b, c) of `g_theta(alpha) = a alpha^2 + b alpha + c`,
    /// averaged over the grid.
    pub quad: [f64; 3],
    /// Spread of the coefficients across the grid (zero in transitive
    /// problems where the risk really is parameter-free).
    pub quad_range: [f64; 3],
    /// Real roots of the constancy condition (candidate alphas before the
    /// range-tolerance filter).
    pub roots: Vec<f64>,
    /// Alphas at which `g_theta` is parameter-free over the grid (filtered).
    pub constant_risk_alphas: Vec<f64>,
    /// Stationary alpha of the quadratic, averaged over the grid.
    pub argmin_alpha: f64,
    /// Spread of the per-theta argmins (a constancy diagnostic).
    pub argmin_range: f64,
    /// Max |quadratic residual| of the reported constant-risk roots.
    pub root_residual: f64,
    /// Degenerate quadratic flag (a ~ 0 somewhere: reported, not solved).
    pub degenerate: bool,
    pub per_theta: Vec<PerThetaQuad>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerThetaQuad {
    pub theta: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub argmin: f64,
}

const CONST_RISK_TOL_BASE: f64 = 1e-8;

/// Evaluate the alpha-class risk quadratic over a parameter grid, find the
/// minimum-risk alpha and any constant-risk members.
///
/// `g_theta(alpha)` is exactly quadratic in alpha (the class gradient is
/// affine in alpha and enters the constant quadratically), so evaluating at
/// alpha in {0, 1/2, 1} determines it; the stationary alpha is `-b/(2a)`.
pub fn alpha_solve(family: &Family, theta_grid: &[Vec<f64>]) -> Result<AlphaSolveResult> {
    if theta_grid.is_empty() {
        return Err(Error::InvalidArgument("alpha_solve needs a nonempty grid".into()));
    }
    let mut per_theta = Vec::with_capacity(theta_grid.len());
    for theta in theta_grid {
        let mut gs = [0.0; 3];
        for (k, alpha) in [0.0, 0.5, 1.0].into_iter().enumerate() {
            let prior = Prior::alpha(family, alpha)?;
            gs[k] = g_term_general(family, &prior, theta)?.g_theta;
        }
        let a = 2.0 * (gs[2] + gs[0] - 2.0 * gs[1]);
        let b = gs[2] - gs[0] - a;
        let c = gs[0];
        let argmin = if a.abs() > 1e-12 { -b / (2.0 * a) } else { f64::NAN };
        per_theta.push(PerThetaQuad { theta: theta.clone(), a, b, c, argmin });
    }
    let avg = |f: &dyn Fn(&PerThetaQuad) -> f64| -> f64 {
        per_theta.iter().map(|q| f(q)).sum::<f64>() / per_theta.len() as f64
    };
    let range = |f: &dyn Fn(&PerThetaQuad) -> f64| -> f64 {
        let lo = per_theta.iter().map(|q| f(q)).fold(f64::INFINITY, f64::min);
        let hi = per_theta.iter().map(|q| f(q)).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let quad = [avg(&|q| q.a), avg(&|q| q.b), avg(&|q| q.c)];
    let quad_range = [range(&|q| q.a), range(&|q| q.b), range(&|q| q.c)];
    let degenerate = per_theta.iter().any(|q| q.a.abs() <= 1e-12);

    // Constant risk: g(alpha; theta_i) - g(alpha; theta_0) = 0 for all i.
    // Each pairwise difference is itself a quadratic in alpha; take the
    // best-conditioned one for the roots, then verify on the whole grid.
    let mut roots: Vec<f64> = Vec::new();
    if per_theta.len() >= 2 {
        let q0 = &per_theta[0];
        let best = per_theta
            .iter()
            .skip(1)
            .max_by(|x, y| {
                (x.a - q0.a)
                    .abs()
                    .partial_cmp(&(y.a - q0.a).abs())
                    .unwrap()
            })
            .unwrap();
        let (da, db, dc) = (best.a - q0.a, best.b - q0.b, best.c - q0.c);
        if da.abs() > 1e-14 {
            let disc = db * db - 4.0 * da * dc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                roots.push((-db - sq) / (2.0 * da));
                roots.push((-db + sq) / (2.0 * da));
                roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
            }
        } else if db.abs() > 1e-14 {
            roots.push(-dc / db);
        }
    }
    let mut constant_risk_alphas = Vec::new();
    let mut root_residual = 0.0f64;
    for &r in &roots {
        let vals: Vec<f64> = per_theta.iter().map(|q| q.a * r * r + q.b * r + q.c).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let level = 0.5 * (lo + hi);
        let q0 = &per_theta[0];
        let qx = per_theta.last().unwrap();
        let resid = ((qx.a - q0.a) * r * r + (qx.b - q0.b) * r + (qx.c - q0.c)).abs();
        root_residual = root_residual.max(resid);
        if hi - lo < CONST_RISK_TOL_BASE * (1.0 + level.abs()) {
            constant_risk_alphas.push(r);
        }
    }
    Ok(AlphaSolveResult {
        quad,
        quad_range,
        roots,
        constant_risk_alphas,
        argmin_alpha: avg(&|q| q.argmin),
        argmin_range: range(&|q| q.argmin),
        root_residual,
        degenerate,
        per_theta,
    })
}

// ---------------------------------------------------------------------------
// Minimax probe (one-dimensional)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct MinimaxComparison {
    pub alpha: f64,
    /// g at the comparison alpha, max over the probe grid.
    pub sup_g: f64,
    /// strictly below the constant-risk member at every grid point?
    pub dominates_everywhere: bool,
    /// sup over the grid of g(alpha) - constant level (<= 0 means the
    /// maximum risk never beats the constant-risk prior).
    pub sup_gap_to_constant: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimaxProbeReport {
    pub alpha_star: f64,
    pub constant_level: f64,
    pub constant_range_over_grid: f64,
    pub comparisons: Vec<MinimaxComparison>,
}

/// Check the constant-risk member against comparison alphas over a probe
/// grid: a comparison prior may dominate pointwise (inadmissibility of the
/// constant-risk member) while its supremum still creeps up to the constant
/// level (minimaxity).
pub fn minimax_probe_1d(
    family: &Family,
    alpha_star: f64,
    theta_grid: &[Vec<f64>],
    comparison_alphas: &[f64],
) -> Result<MinimaxProbeReport> {
    if family.param_dim() != 1 {
        return Err(Error::InvalidArgument("minimax_probe_1d needs p = 1".into()));
    }
    let star = Prior::alpha(family, alpha_star)?;
    let star_vals: Vec<f64> = theta_grid
        .iter()
        .map(|t| g_term_1d(family, &star, t).map(|e| e.g_theta))
        .collect::<Result<_>>()?;
    let lo = star_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = star_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let constant_level = 0.5 * (lo + hi);
    let mut comparisons = Vec::with_capacity(comparison_alphas.len());
    for &alpha in comparison_alphas {
        let pr = Prior::alpha(family, alpha)?;
        let vals: Vec<f64> = theta_grid
            .iter()
            .map(|t| g_term_1d(family, &pr, t).map(|e| e.g_theta))
            .collect::<Result<_>>()?;
        let sup = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dominates = vals
            .iter()
            .zip(star_vals.iter())
            .all(|(v, s)| v < s);
        comparisons.push(MinimaxComparison {
            alpha,
            sup_g: sup,
            dominates_everywhere: dominates,
            sup_gap_to_constant: sup - constant_level,
        });
    }
    Ok(MinimaxProbeReport {
        alpha_star,
        constant_level,
        constant_range_over_grid: hi - lo,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poisson_g_closed(alpha: f64, theta: f64) -> f64 {
        // Derived in closed form: parameter part ((alpha-1)^2/2 - 1/12)/theta,
        // no constant term.
        (0.5 * (alpha - 1.0) * (alpha - 1.0) - 1.0 / 12.0) / theta
    }

    #[test]
    fn poisson_bracket_matches_the_closed_form() {
        let fam = Family::poisson();
        for alpha in [0.5, 1.0, 1.3] {
            let pr = Prior::alpha(&fam, alpha).unwrap();
            for theta in [0.25, 1.0, 4.0] {
                let e = g_term_1d(&fam, &pr, &[theta]).unwrap();
                assert_relative_eq!(
                    e.g_theta,
                    poisson_g_closed(alpha, theta),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn poisson_printed_parameter_form_after_substitution() {
        // h_1 + theta (h_2 + h_1^2 / 2) - 1/(12 theta) with h = theta^(alpha-1)
        let fam = Family::poisson();
        let alpha = 1.3;
        let pr = Prior::alpha(&fam, alpha).unwrap();
        for theta in [0.5, 2.0] {
            let h1 = (alpha - 1.0) / theta;
            let h2 = -(alpha - 1.0) / (theta * theta);
            let printed = h1 + theta * (h2 + 0.5 * h1 * h1) - 1.0 / (12.0 * theta);
            let e = g_term_1d(&fam, &pr, &[theta]).unwrap();
            assert_relative_eq!(e.g_theta, printed, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_risk_roots_zero_the_parameter_part() {
        let fam = Family::poisson();
        for alpha in [1.0 - 1.0 / 6.0f64.sqrt(), 1.0 + 1.0 / 6.0f64.sqrt()] {
            let pr = Prior::alpha(&fam, alpha).unwrap();
            let vals: Vec<f64> = [0.25, 1.0, 4.0]
                .iter()
                .map(|&t| g_term_1d(&fam, &pr, &[t]).unwrap().g_theta)
                .collect();
            for w in vals.windows(2) {
                assert!((w[0] - w[1]).abs() < 1e-10, "not constant: {vals:?}");
            }
        }
    }

    #[test]
    fn normal_location_flat_prior_has_zero_g() {
        let fam = Family::normal_location(1.0).unwrap();
        let pr = Prior::uniform(1);
        for mu in [-3.0, 0.0, 2.0] {
            let e = g_term_1d(&fam, &pr, &[mu]).unwrap();
            assert!(e.g_theta.abs() < 1e-12, "g = {}", e.g_theta);
            assert!(e.prior_term.abs() < 1e-12);
        }
    }

    #[test]
    fn split_consistency_general_vs_1d() {
        let cases: Vec<(Family, Vec<f64>)> = vec![
            (Family::poisson(), vec![0.7]),
            (Family::poisson(), vec![3.0]),
            (Family::bernoulli_canonical(), vec![-0.5]),
            (Family::bernoulli_canonical(), vec![1.0]),
            (Family::negbinomial_canonical(2).unwrap(), vec![-0.8]),
            (Family::normal_location(1.0).unwrap(), vec![1.0]),
        ];
        for (fam, theta) in cases {
            for spec in ["jeffreys", "alpha:1", "alpha:1.3", "uniform"] {
                let pr = Prior::from_spec(spec, &fam).unwrap();
                let g1 = g_term_1d(&fam, &pr, &theta).unwrap();
                let gg = g_term_general(&fam, &pr, &theta).unwrap();
                assert_relative_eq!(g1.g_theta, gg.g_theta, epsilon = 1e-6, max_relative = 1e-6);
                assert_relative_eq!(
                    g1.likelihood_term,
                    gg.likelihood_term,
                    epsilon = 1e-6,
                    max_relative = 1e-6
                );
                assert_relative_eq!(g1.prior_term, gg.prior_term, epsilon = 1e-6, max_relative = 1e-6);
                // invariant: the split always reassembles the total
                assert_relative_eq!(
                    gg.likelihood_term + gg.prior_term,
                    gg.g_theta,
                    epsilon = 1e-8
                );
            }
        }
    }

    #[test]
    fn prior_term_is_exactly_zero_at_jeffreys() {
        let fam = Family::normal_location_scale();
        let pr = Prior::jeffreys(&fam).unwrap();
        let e = g_term_general(&fam, &pr, &[0.3, 1.7]).unwrap();
        assert_eq!(e.prior_term, 0.0);
    }

    #[test]
    fn centered_display_matches_for_one_parameter_families() {
        // For p = 1 the Jeffreys-centered remainder display coincides with
        // the operational prior term.
        let fam = Family::poisson();
        let pr = Prior::alpha(&fam, 1.2).unwrap();
        for theta in [0.6, 2.5] {
            let e = g_term_general(&fam, &pr, &[theta]).unwrap();
            let disp = prior_term_centered_display(&fam, &pr, &[theta]).unwrap();
            assert_relative_eq!(e.prior_term, disp, epsilon = 1e-9);
        }
    }

    #[test]
    fn location_likelihood_term_is_constant() {
        let fam = Family::mvn_location(3).unwrap();
        let pr = Prior::shrinkage(3, -0.25);
        let a = g_term_general(&fam, &pr, &[0.0, 0.0, 0.0]).unwrap();
        let b = g_term_general(&fam, &pr, &[2.0, -1.0, 5.0]).unwrap();
        assert_relative_eq!(a.likelihood_term, b.likelihood_term, epsilon = 1e-10);
        // location-scale transitivity: constant over (mu, v)
        let ls = Family::normal_location_scale();
        let prls = Prior::alpha(&ls, 0.8).unwrap();
        let x = g_term_general(&ls, &prls, &[0.0, 1.0]).unwrap();
        let y = g_term_general(&ls, &prls, &[3.0, 0.4]).unwrap();
        assert_relative_eq!(x.g_theta, y.g_theta, epsilon = 1e-8);
        assert_relative_eq!(x.likelihood_term, y.likelihood_term, epsilon = 1e-8);
    }

    #[test]
    fn location_scale_argmin_is_two_thirds() {
        let fam = Family::normal_location_scale();
        let grid = vec![vec![0.0, 0.5], vec![0.0, 1.0], vec![1.0, 2.0]];
        let res = alpha_solve(&fam, &grid).unwrap();
        assert_relative_eq!(res.argmin_alpha, 2.0 / 3.0, epsilon = 1e-8);
        assert!(res.argmin_range < 1e-8);
        // strictly smaller risk than Jeffreys
        let g23 = g_term_general(&fam, &Prior::alpha(&fam, 2.0 / 3.0).unwrap(), &grid[0])
            .unwrap()
            .g_theta;
        let g12 = g_term_general(&fam, &Prior::alpha(&fam, 0.5).unwrap(), &grid[0])
            .unwrap()
            .g_theta;
        assert!(g23 < g12);
        assert_relative_eq!(g23 - g12, -0.25, epsilon = 1e-8);
    }

    #[test]
    fn poisson_alpha_solve_finds_the_known_structure() {
        let fam = Family::poisson();
        let grid: Vec<Vec<f64>> = (0..9)
            .map(|i| vec![0.1 * 10.0f64.powf(i as f64 / 4.0)])
            .collect();
        let res = alpha_solve(&fam, &grid).unwrap();
        let root_lo = 1.0 - 1.0 / 6.0f64.sqrt();
        let root_hi = 1.0 + 1.0 / 6.0f64.sqrt();
        assert_eq!(res.constant_risk_alphas.len(), 2);
        assert_relative_eq!(res.constant_risk_alphas[0], root_lo, epsilon = 1e-6);
        assert_relative_eq!(res.constant_risk_alphas[1], root_hi, epsilon = 1e-6);
        assert_relative_eq!(res.argmin_alpha, 1.0, epsilon = 1e-8);
        assert!(res.root_residual < 1e-8);
        // Jeffreys membership: the quadratic at alpha = 1/2 equals g(jeffreys)
        let theta = &grid[3];
        let q = &res.per_theta[3];
        let at_half = q.a * 0.25 + q.b * 0.5 + q.c;
        let jeff = g_term_general(&fam, &Prior::jeffreys(&fam).unwrap(), theta).unwrap();
        assert_relative_eq!(at_half, jeff.g_theta, epsilon = 1e-9);
    }

    #[test]
    fn extrapolation_oracle_poisson_within_tolerance() {
        let fam = Family::poisson();
        let pr = Prior::jeffreys(&fam).unwrap();
        let res = excess_risk_extrapolate(
            &fam,
            &pr,
            &[1.0],
            &[20, 40, 80, 160],
            RiskSource::Exact,
        )
        .unwrap();
        let g = g_term_1d(&fam, &pr, &[1.0]).unwrap().g_theta;
        assert!(
            (res.g - g).abs() / g.abs() < 0.05,
            "extrapolated {} vs analytic {}",
            res.g,
            g
        );
        // The uncorrected printed coupling variant must fail the oracle.
        // Evaluate away from theta = 1 (there the unit Fisher information
        // makes the two variants coincide).
        let theta = [2.0];
        let pr13 = Prior::alpha(&fam, 1.3).unwrap();
        let res2 = excess_risk_extrapolate(
            &fam,
            &pr13,
            &theta,
            &[20, 40, 80, 160],
            RiskSource::Exact,
        )
        .unwrap();
        let good = g_1d_value(&fam, &pr13, &theta, H1Coupling::SquaredInverse).unwrap();
        let bad = g_1d_value(&fam, &pr13, &theta, H1Coupling::PrintedSingleInverse).unwrap();
        assert!((res2.g - good).abs() / good.abs() < 0.05);
        assert!(
            (res2.g - bad).abs() / bad.abs() > 0.05,
            "oracle failed to discriminate: {} vs {}",
            res2.g,
            bad
        );
    }

    #[test]
    fn mc_extrapolation_rejects_noise_dominated_fits() {
        let fam = Family::normal_location(1.0).unwrap();
        let pr = Prior::uniform(1);
        let r = excess_risk_extrapolate(
            &fam,
            &pr,
            &[0.0],
            &[20, 40, 80, 160],
            RiskSource::MonteCarlo { reps: 400, seed: 3 },
        );
        assert!(matches!(r, Err(Error::FitRejected(_))), "got {r:?}");
    }

    #[test]
    fn minimax_probe_poisson() {
        let fam = Family::poisson();
        let root_hi = 1.0 + 1.0 / 6.0f64.sqrt();
        let grid: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![0.05 * 10.0f64.powf(i as f64 * 0.25)])
            .collect();
        let rep = minimax_probe_1d(&fam, root_hi, &grid, &[1.0]).unwrap();
        assert!(rep.constant_range_over_grid < 1e-8);
        let cmp = &rep.comparisons[0];
        assert!(cmp.dominates_everywhere);
        // the alpha = 1 sup approaches the constant level from below
        assert!(cmp.sup_gap_to_constant <= 0.0);
        assert!(cmp.sup_gap_to_constant > -0.2);
    }

    #[test]
    fn reparametrization_invariance_of_g_for_the_poisson() {
        // theta -> log theta: the alpha class maps onto itself and the
        // expansion constant is unchanged.
        let fam = Family::poisson();
        let can = Family::poisson_canonical();
        for alpha in [0.5, 1.0, 1.3] {
            let pr = Prior::alpha(&fam, alpha).unwrap();
            let prc = Prior::alpha(&can, alpha).unwrap();
            for theta in [0.5, 1.0, 2.0] {
                let a = g_term_1d(&fam, &pr, &[theta]).unwrap().g_theta;
                let b = g_term_1d(&can, &prc, &[theta.ln()]).unwrap().g_theta;
                assert_relative_eq!(a, b, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn negbinomial_constant_risk_structure() {
        let fam = Family::negbinomial_canonical(2).unwrap();
        let grid: Vec<Vec<f64>> = (0..9).map(|i| vec![-2.5 + 0.25 * i as f64]).collect();
        let res = alpha_solve(&fam, &grid).unwrap();
        let root_lo = 1.0 - 1.0 / 6.0f64.sqrt();
        assert_eq!(res.constant_risk_alphas.len(), 2);
        assert_relative_eq!(res.constant_risk_alphas[0], root_lo, epsilon = 1e-6);
        // the lower root gives the least constant level
        let level = |alpha: f64| {
            let pr = Prior::alpha(&fam, alpha).unwrap();
            g_term_1d(&fam, &pr, &grid[0]).unwrap().g_theta
        };
        assert!(level(res.constant_risk_alphas[0]) < level(res.constant_risk_alphas[1]));
    }

    #[test]
    fn mvn_scale_argmin_is_one_half() {
        for p in [1usize, 2] {
            let fam = Family::mvn_scale(p).unwrap();
            let grid = match p {
                1 => vec![vec![1.0], vec![2.0]],
                _ => vec![vec![1.0, 0.0, 1.0], vec![1.5, 0.3, 0.9]],
            };
            let res = alpha_solve(&fam, &grid).unwrap();
            assert_relative_eq!(res.argmin_alpha, 0.5, epsilon = 1e-6);
            assert!(res.argmin_range < 1e-6);
        }
    }
}
