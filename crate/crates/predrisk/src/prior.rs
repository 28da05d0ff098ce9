//! Prior densities in dual representation: an (unnormalised) density for
//! predictive computation plus exact log-gradient and log-Hessian
//! evaluators for the asymptotics. Improper priors are permitted; the
//! predictive machinery only ever works with posterior ratios.
//!
//! The relatively invariant `alpha` class is defined by the gradient
//! condition
//!
//! ```text
//!   h_i = Linv_{j,s} (alpha * L_{i,j,s} + L_{ij,s}),
//! ```
//!
//! whose closed-form solutions for the built-in families are powers of the
//! per-observation Fisher information (canonical families), `theta^(alpha-1)`
//! for the mean-parametrized Poisson, `v^{3(alpha-1)}` for the normal
//! location-scale family, and `|V|^{(p+1)(alpha-1)}` for the multivariate
//! normal scale family. Jeffreys is the `alpha = 1/2` member.

use crate::cumulants::{cumulants, CumulantMethod};
use crate::error::{Error, Result};
use crate::family::{mvnscale, Family, FamilyKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Propriety {
    Proper,
    Improper,
    Unknown,
}

#[derive(Clone, Debug)]
pub enum PriorKind {
    /// Density identically one in the family's fixed parametrization.
    Uniform { dim: usize },
    /// The alpha-class member for `family`.
    Alpha { family: Family, alpha: f64 },
    /// Jeffreys prior (root-determinant of the Fisher information); shares
    /// the alpha = 1/2 differential structure.
    Jeffreys { family: Family },
    /// Location shrinkage prior with density g^2, g = (1 + |mu|^2)^alpha.
    Shrinkage { dim: usize, alpha: f64 },
    /// Proper Gaussian prior on a location parameter (spherical).
    GaussianLocation { mean: Vec<f64>, var: f64 },
}

/// A prior over a `dim`-dimensional parameter.
#[derive(Clone, Debug)]
pub struct Prior {
    label: String,
    kind: PriorKind,
    proper: Propriety,
}

impl Prior {
    pub fn uniform(dim: usize) -> Prior {
        Prior {
            label: "uniform".into(),
            kind: PriorKind::Uniform { dim },
            proper: Propriety::Improper,
        }
    }

    pub fn jeffreys(family: &Family) -> Result<Prior> {
        Ok(Prior {
            label: "jeffreys".into(),
            proper: alpha_propriety(family, 0.5),
            kind: PriorKind::Jeffreys { family: family.clone() },
        })
    }

    pub fn alpha(family: &Family, alpha: f64) -> Result<Prior> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument("alpha must be finite".into()));
        }
        Ok(Prior {
            label: format!("alpha:{alpha}"),
            proper: alpha_propriety(family, alpha),
            kind: PriorKind::Alpha { family: family.clone(), alpha },
        })
    }

    /// Shrinkage prior for a p-dimensional location parameter. The exponent
    /// validity range for superharmonicity is checked by the location
    /// analysis, not here.
    pub fn shrinkage(dim: usize, alpha: f64) -> Prior {
        let proper = if 4.0 * alpha + (dim as f64) < 0.0 {
            Propriety::Proper
        } else {
            Propriety::Improper
        };
        Prior {
            label: format!("shrink:{alpha}"),
            kind: PriorKind::Shrinkage { dim, alpha },
            proper,
        }
    }

    pub fn gaussian_location(mean: Vec<f64>, var: f64) -> Result<Prior> {
        if !(var > 0.0) {
            return Err(Error::InvalidArgument("prior variance must be positive".into()));
        }
        Ok(Prior {
            label: format!("normal(m,{var})"),
            kind: PriorKind::GaussianLocation { mean, var },
            proper: Propriety::Proper,
        })
    }

    /// Parse the CLI prior grammar: `jeffreys | uniform | alpha:<real> |
    /// shrink:<real>`.
    pub fn from_spec(spec: &str, family: &Family) -> Result<Prior> {
        let s = spec.trim();
        match s {
            "jeffreys" => Prior::jeffreys(family),
            "uniform" => Ok(Prior::uniform(family.param_dim())),
            _ => {
                if let Some(rest) = s.strip_prefix("alpha:") {
                    let a: f64 = rest
                        .parse()
                        .map_err(|_| Error::InvalidPriorSpec(spec.to_string()))?;
                    Prior::alpha(family, a)
                } else if let Some(rest) = s.strip_prefix("shrink:") {
                    let a: f64 = rest
                        .parse()
                        .map_err(|_| Error::InvalidPriorSpec(spec.to_string()))?;
                    if !family.is_location() {
                        return Err(Error::InvalidArgument(format!(
                            "shrink priors apply to location families, not `{}`",
                            family.name()
                        )));
                    }
                    Ok(Prior::shrinkage(family.param_dim(), a))
                } else {
                    Err(Error::InvalidPriorSpec(spec.to_string()))
                }
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &PriorKind {
        &self.kind
    }

    pub fn proper(&self) -> Propriety {
        self.proper
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            PriorKind::Uniform { dim } | PriorKind::Shrinkage { dim, .. } => *dim,
            PriorKind::Alpha { family, .. } | PriorKind::Jeffreys { family } => family.param_dim(),
            PriorKind::GaussianLocation { mean, .. } => mean.len(),
        }
    }

    /// Unnormalised log density. All built-in priors expose one.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match &self.kind {
            PriorKind::Uniform { .. } => 0.0,
            PriorKind::Alpha { family, alpha } => alpha_log_density(family, *alpha, theta),
            PriorKind::Jeffreys { family } => alpha_log_density(family, 0.5, theta),
            PriorKind::Shrinkage { alpha, .. } => {
                let r2: f64 = theta.iter().map(|t| t * t).sum();
                2.0 * alpha * (1.0 + r2).ln()
            }
            PriorKind::GaussianLocation { mean, var } => {
                let q: f64 = theta
                    .iter()
                    .zip(mean.iter())
                    .map(|(&t, &m)| (t - m) * (t - m))
                    .sum();
                -0.5 * q / var
            }
        }
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        self.log_density(theta).exp()
    }

    /// Log-density gradient h_i.
    pub fn log_grad(&self, theta: &[f64]) -> Vec<f64> {
        match &self.kind {
            PriorKind::Uniform { dim } => vec![0.0; *dim],
            PriorKind::Alpha { family, alpha } => alpha_log_grad(family, *alpha, theta),
            PriorKind::Jeffreys { family } => alpha_log_grad(family, 0.5, theta),
            PriorKind::Shrinkage { dim, alpha } => {
                let r2: f64 = theta.iter().map(|t| t * t).sum();
                theta
                    .iter()
                    .take(*dim)
                    .map(|&t| 4.0 * alpha * t / (1.0 + r2))
                    .collect()
            }
            PriorKind::GaussianLocation { mean, var } => theta
                .iter()
                .zip(mean.iter())
                .map(|(&t, &m)| -(t - m) / var)
                .collect(),
        }
    }

    /// Log-density Hessian h_ij, row-major.
    pub fn log_hess(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match &self.kind {
            PriorKind::Uniform { .. } => vec![0.0; d * d],
            PriorKind::Alpha { family, alpha } => alpha_log_hess(family, *alpha, theta),
            PriorKind::Jeffreys { family } => alpha_log_hess(family, 0.5, theta),
            PriorKind::Shrinkage { dim, alpha } => {
                let r2: f64 = theta.iter().map(|t| t * t).sum();
                let s = 1.0 + r2;
                let mut h = vec![0.0; dim * dim];
                for i in 0..*dim {
                    for j in 0..*dim {
                        let kron = if i == j { 1.0 } else { 0.0 };
                        h[i * dim + j] =
                            4.0 * alpha * (kron / s - 2.0 * theta[i] * theta[j] / (s * s));
                    }
                }
                h
            }
            PriorKind::GaussianLocation { var, .. } => {
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    h[i * d + i] = -1.0 / var;
                }
                h
            }
        }
    }

    /// For shrinkage priors: the base function g = (1 + |mu|^2)^alpha.
    pub fn shrink_g(&self, mu: &[f64]) -> Option<f64> {
        match &self.kind {
            PriorKind::Shrinkage { alpha, .. } => {
                let r2: f64 = mu.iter().map(|t| t * t).sum();
                Some((1.0 + r2).powf(*alpha))
            }
            _ => None,
        }
    }

    /// For shrinkage priors: the analytic Laplacian
    /// `Delta g = 2 alpha (1+r^2)^(alpha-2) (p + (p + 2 alpha - 2) r^2)`.
    pub fn shrink_laplacian(&self, mu: &[f64]) -> Option<f64> {
        match &self.kind {
            PriorKind::Shrinkage { dim, alpha } => {
                let p = *dim as f64;
                let r2: f64 = mu.iter().map(|t| t * t).sum();
                Some(2.0 * alpha * (1.0 + r2).powf(alpha - 2.0) * (p + (p + 2.0 * alpha - 2.0) * r2))
            }
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Closed-form alpha-class structure per family
// ---------------------------------------------------------------------------

fn alpha_propriety(family: &Family, alpha: f64) -> Propriety {
    match family.kind() {
        FamilyKind::BernoulliCanonical => {
            if alpha > 0.0 {
                Propriety::Proper
            } else {
                Propriety::Improper
            }
        }
        FamilyKind::NegBinomialCanonical { .. } => {
            if alpha > 0.0 && alpha < 0.5 {
                Propriety::Proper
            } else {
                Propriety::Improper
            }
        }
        _ => Propriety::Improper,
    }
}

fn alpha_log_density(family: &Family, alpha: f64, theta: &[f64]) -> f64 {
    match family.kind() {
        FamilyKind::Poisson => (alpha - 1.0) * theta[0].ln(),
        FamilyKind::PoissonCanonical => alpha * theta[0],
        FamilyKind::BernoulliCanonical => {
            // (p q)^alpha with p q = e^theta / (1 + e^theta)^2
            alpha * (theta[0] - 2.0 * (1.0 + theta[0].exp()).ln())
        }
        FamilyKind::NegBinomialCanonical { r } => {
            // Fisher^alpha, Fisher = r e^theta / (1 - e^theta)^2
            let u = theta[0].exp();
            alpha * ((*r as f64).ln() + theta[0] - 2.0 * (1.0 - u).ln())
        }
        FamilyKind::NormalLocation { .. } | FamilyKind::MvnLocation { .. } => 0.0,
        FamilyKind::NormalLocationScale => 3.0 * (alpha - 1.0) * theta[1].ln(),
        FamilyKind::MvnScale { dim } => {
            let p = *dim;
            let v = mvnscale::unflatten(theta, p);
            let det = crate::numerics::spd_det(&v, p).expect("domain-checked V");
            (p as f64 + 1.0) * (alpha - 1.0) * det.ln()
        }
    }
}

fn alpha_log_grad(family: &Family, alpha: f64, theta: &[f64]) -> Vec<f64> {
    match family.kind() {
        FamilyKind::Poisson => vec![(alpha - 1.0) / theta[0]],
        FamilyKind::PoissonCanonical => vec![alpha],
        FamilyKind::BernoulliCanonical => {
            let p = 1.0 / (1.0 + (-theta[0]).exp());
            vec![alpha * (1.0 - 2.0 * p)]
        }
        FamilyKind::NegBinomialCanonical { .. } => {
            let u = theta[0].exp();
            vec![alpha * (1.0 + u) / (1.0 - u)]
        }
        FamilyKind::NormalLocation { .. } => vec![0.0],
        FamilyKind::MvnLocation { dim, .. } => vec![0.0; *dim],
        FamilyKind::NormalLocationScale => vec![0.0, 3.0 * (alpha - 1.0) / theta[1]],
        FamilyKind::MvnScale { dim } => {
            let p = *dim;
            let c = (p as f64 + 1.0) * (alpha - 1.0);
            let v = mvnscale::unflatten(theta, p);
            let w = crate::numerics::spd_inverse(&v, p).expect("domain-checked V");
            mvnscale::pairs(p)
                .iter()
                .map(|&(a, b)| {
                    // d log|V| / d V_ab = tr(W E_ab) = (2 - [a==b]) W_ab
                    let mult = if a == b { 1.0 } else { 2.0 };
                    c * mult * w[a * p + b]
                })
                .collect()
        }
    }
}

fn alpha_log_hess(family: &Family, alpha: f64, theta: &[f64]) -> Vec<f64> {
    match family.kind() {
        FamilyKind::Poisson => vec![-(alpha - 1.0) / (theta[0] * theta[0])],
        FamilyKind::PoissonCanonical => vec![0.0],
        FamilyKind::BernoulliCanonical => {
            let p = 1.0 / (1.0 + (-theta[0]).exp());
            vec![-2.0 * alpha * p * (1.0 - p)]
        }
        FamilyKind::NegBinomialCanonical { .. } => {
            let u = theta[0].exp();
            vec![2.0 * alpha * u / ((1.0 - u) * (1.0 - u))]
        }
        FamilyKind::NormalLocation { .. } => vec![0.0],
        FamilyKind::MvnLocation { dim, .. } => vec![0.0; dim * dim],
        FamilyKind::NormalLocationScale => {
            let v = theta[1];
            vec![0.0, 0.0, 0.0, -3.0 * (alpha - 1.0) / (v * v)]
        }
        FamilyKind::MvnScale { dim } => {
            let p = *dim;
            let c = (p as f64 + 1.0) * (alpha - 1.0);
            let v = mvnscale::unflatten(theta, p);
            let w = crate::numerics::spd_inverse(&v, p).expect("domain-checked V");
            let prs = mvnscale::pairs(p);
            let d = prs.len();
            let mut h = vec![0.0; d * d];
            // d/dV_cd tr(W E_ab) = -tr(W E_cd W E_ab)
            for (i, &(a, b)) in prs.iter().enumerate() {
                for (j, &(cc, dd)) in prs.iter().enumerate() {
                    let mut tr = 0.0;
                    let ends_ab: &[(usize, usize)] =
                        if a == b { &[(a, b)] } else { &[(a, b), (b, a)] };
                    let ends_cd: &[(usize, usize)] =
                        if cc == dd { &[(cc, dd)] } else { &[(cc, dd), (dd, cc)] };
                    for &(x1, x2) in ends_ab {
                        for &(y1, y2) in ends_cd {
                            tr += w[x2 * p + y1] * w[y2 * p + x1];
                        }
                    }
                    h[i * d + j] = -c * tr;
                }
            }
            h
        }
    }
}

/// Log density of the Jeffreys prior computed directly from the Fisher
/// information determinant (the generic route, used to cross-validate the
/// closed forms).
pub fn jeffreys_log_density_from_fisher(family: &Family, theta: &[f64]) -> Result<f64> {
    let ct = cumulants(family, theta, CumulantMethod::Analytic)?;
    let det = crate::numerics::spd_det(&ct.t11.data, ct.d)
        .ok_or_else(|| Error::SingularFisher(theta.to_vec()))?;
    Ok(0.5 * det.ln())
}

/// Max-abs residual of the alpha-class defining gradient condition
/// `h_i = Linv_{j,s} (alpha L_{i,j,s} + L_{ij,s})` at `theta`.
pub fn alpha_defining_residual(
    family: &Family,
    alpha: f64,
    h_grad: &[f64],
    theta: &[f64],
) -> Result<f64> {
    let ct = cumulants(family, theta, CumulantMethod::Analytic)?;
    let d = ct.d;
    let mut worst = 0.0f64;
    for i in 0..d {
        let mut rhs = 0.0;
        for j in 0..d {
            for s in 0..d {
                rhs += ct.fisher_inv.get(&[j, s])
                    * (alpha * ct.t111.get(&[i, j, s]) + ct.t21.get(&[i, j, s]));
            }
        }
        worst = worst.max((h_grad[i] - rhs).abs());
    }
    Ok(worst)
}

/// Finite-difference consistency of the differential representation with
/// the density: returns (max grad error, max Hessian error), both relative.
pub fn finite_diff_residuals(prior: &Prior, theta: &[f64]) -> (f64, f64) {
    let d = prior.dim();
    let grad = prior.log_grad(theta);
    let hess = prior.log_hess(theta);
    let mut gerr = 0.0f64;
    let mut herr = 0.0f64;
    for i in 0..d {
        let h = 1e-5 * (1.0 + theta[i].abs());
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[i] += h;
        tm[i] -= h;
        let fd = (prior.log_density(&tp) - prior.log_density(&tm)) / (2.0 * h);
        gerr = gerr.max((grad[i] - fd).abs() / (1.0 + grad[i].abs()));
        for j in 0..d {
            let hj = 1e-4 * (1.0 + theta[j].abs());
            let mut tpp = theta.to_vec();
            let mut tpm = theta.to_vec();
            let mut tmp = theta.to_vec();
            let mut tmm = theta.to_vec();
            tpp[i] += h;
            tpp[j] += hj;
            tpm[i] += h;
            tpm[j] -= hj;
            tmp[i] -= h;
            tmp[j] += hj;
            tmm[i] -= h;
            tmm[j] -= hj;
            let fd2 = (prior.log_density(&tpp) - prior.log_density(&tpm)
                - prior.log_density(&tmp)
                + prior.log_density(&tmm))
                / (4.0 * h * hj);
            herr = herr.max((hess[i * d + j] - fd2).abs() / (1.0 + hess[i * d + j].abs()));
        }
    }
    (gerr, herr)
}
