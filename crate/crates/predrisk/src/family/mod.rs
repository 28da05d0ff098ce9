//! Built-in parametric families: log densities, analytic log-likelihood
//! derivatives through order four, samplers, and sufficient statistics.
//!
//! Parametrizations are fixed once per family and everything downstream
//! (priors, predictives, expansion tensors) is expressed in them:
//!
//! - `poisson` — mean `theta > 0`;
//! - `bernoulli-canonical` — log odds `theta` in `R`, success probability
//!   `e^theta / (1 + e^theta)`;
//! - `negbinomial-canonical(r)` — `theta < 0` with success probability
//!   `1 - e^theta` and `r` required successes;
//! - `normal-location(sigma)` — mean `mu`, known standard deviation;
//! - `normal-location-scale` — `(mu, sigma^2)`;
//! - `mvn-location(p)` — mean vector, known covariance (identity unless a
//!   covariance is supplied, in which case whitening data reduces to it);
//! - `mvn-scale(p)` — zero-mean covariance `V`, parametrized by the entries
//!   `V_{ab}` with `a <= b` flattened row-wise.
//!
//! A canonically parametrized Poisson (`poisson-canonical`, `theta = log`
//! mean) is also provided; it is not reachable from the CLI spec strings and
//! exists so reparametrization invariance can be exercised.

mod discrete;
mod gaussian;
pub mod mvnscale;

use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// z-polynomial machinery shared with the cumulant engine.
pub(crate) mod gaussian_zpoly {
    pub(crate) use super::gaussian::{normal_ls_deriv_poly, zpoly_product_expect, ZPoly};
}

/// Truncated-series expectation for the discrete families (exposed for the
/// cumulant engine).
pub(crate) fn series_expect_pub(fam: &Family, theta: &[f64], f: impl FnMut(f64) -> f64) -> f64 {
    discrete::series_expect(fam, theta, f)
}

/// Margin inside which a parameter counts as "on the boundary" and is
/// rejected rather than extrapolated.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Discrete,
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    Poisson,
    PoissonCanonical,
    BernoulliCanonical,
    NegBinomialCanonical { r: u32 },
    NormalLocation { sigma: f64 },
    NormalLocationScale,
    MvnLocation { dim: usize, cov: Option<Vec<f64>> },
    MvnScale { dim: usize },
}

/// A parametric model with analytic derivative structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    kind: FamilyKind,
}

/// A batch of observations stored flat; `obs_dim` consecutive values form
/// one observation.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub data: Vec<f64>,
    pub obs_dim: usize,
}

impl SampleBatch {
    pub fn from_scalars(xs: &[f64]) -> Self {
        SampleBatch {
            data: xs.to_vec(),
            obs_dim: 1,
        }
    }

    pub fn n(&self) -> usize {
        if self.obs_dim == 0 {
            0
        } else {
            self.data.len() / self.obs_dim
        }
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.data[i * self.obs_dim..(i + 1) * self.obs_dim]
    }
}

/// Reduced statistic preserving the posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SuffStat {
    /// Sum of counts (Poisson, Bernoulli, negative binomial).
    CountSum { sum: u64, n: usize },
    /// Sample mean for a known-variance location family.
    Mean { mean: Vec<f64>, n: usize },
    /// Sample mean and centered sum of squares for the location-scale family.
    MeanSq { mean: f64, centered_sq: f64, n: usize },
    /// Scatter matrix (row-major p x p) for the zero-mean scale family.
    Scatter { mat: Vec<f64>, dim: usize, n: usize },
}

impl SuffStat {
    pub fn n(&self) -> usize {
        match self {
            SuffStat::CountSum { n, .. }
            | SuffStat::Mean { n, .. }
            | SuffStat::MeanSq { n, .. }
            | SuffStat::Scatter { n, .. } => *n,
        }
    }
}

impl Family {
    // ----- constructors -------------------------------------------------

    pub fn poisson() -> Family {
        Family { kind: FamilyKind::Poisson }
    }

    /// Poisson in its canonical (log-mean) parameter.
    pub fn poisson_canonical() -> Family {
        Family { kind: FamilyKind::PoissonCanonical }
    }

    pub fn bernoulli_canonical() -> Family {
        Family { kind: FamilyKind::BernoulliCanonical }
    }

    pub fn negbinomial_canonical(r: u32) -> Result<Family> {
        if r < 1 {
            return Err(Error::InvalidHyper {
                family: "negbinomial-canonical",
                reason: format!("r must be a positive integer, got {r}"),
            });
        }
        Ok(Family { kind: FamilyKind::NegBinomialCanonical { r } })
    }

    pub fn normal_location(sigma: f64) -> Result<Family> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidHyper {
                family: "normal-location",
                reason: format!("sigma must be positive and finite, got {sigma}"),
            });
        }
        Ok(Family { kind: FamilyKind::NormalLocation { sigma } })
    }

    pub fn normal_location_scale() -> Family {
        Family { kind: FamilyKind::NormalLocationScale }
    }

    pub fn mvn_location(dim: usize) -> Result<Family> {
        if dim < 1 || dim > 16 {
            return Err(Error::InvalidHyper {
                family: "mvn-location",
                reason: format!("dimension must be in 1..=16, got {dim}"),
            });
        }
        Ok(Family { kind: FamilyKind::MvnLocation { dim, cov: None } })
    }

    /// Location family with a known non-identity covariance. The covariance
    /// is validated to be symmetric positive definite.
    pub fn mvn_location_with_cov(dim: usize, cov: Vec<f64>) -> Result<Family> {
        if cov.len() != dim * dim {
            return Err(Error::InvalidHyper {
                family: "mvn-location",
                reason: "covariance has the wrong shape".into(),
            });
        }
        if crate::numerics::cholesky(&cov, dim).is_none() {
            return Err(Error::InvalidHyper {
                family: "mvn-location",
                reason: "covariance must be symmetric positive definite".into(),
            });
        }
        Ok(Family { kind: FamilyKind::MvnLocation { dim, cov: Some(cov) } })
    }

    pub fn mvn_scale(dim: usize) -> Result<Family> {
        if dim < 1 || dim > 3 {
            return Err(Error::InvalidHyper {
                family: "mvn-scale",
                reason: format!(
                    "dimension must be in 1..=3 (parameter dimension p(p+1)/2 stays dense), got {dim}"
                ),
            });
        }
        Ok(Family { kind: FamilyKind::MvnScale { dim } })
    }

    /// Build a family from the spec-string grammar used by the CLI:
    /// `poisson`, `bernoulli-canonical`, `negbinomial-canonical:<r>`,
    /// `normal-location:<sigma>`, `normal-location-scale`,
    /// `mvn-location:<p>`, `mvn-scale:<p>`.
    pub fn from_spec(spec: &str) -> Result<Family> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec.trim(), None),
        };
        let parse_f64 = |a: Option<&str>, what: &str| -> Result<f64> {
            a.ok_or_else(|| Error::UnknownFamily(format!("{spec} (missing {what})")))?
                .parse::<f64>()
                .map_err(|_| Error::UnknownFamily(format!("{spec} (bad {what})")))
        };
        match name {
            "poisson" => Ok(Family::poisson()),
            "bernoulli-canonical" | "bernoulli" => Ok(Family::bernoulli_canonical()),
            "negbinomial-canonical" | "negbinomial" => {
                let r = parse_f64(arg, "r")?;
                if r.fract() != 0.0 || r < 1.0 {
                    return Err(Error::InvalidHyper {
                        family: "negbinomial-canonical",
                        reason: format!("r must be a positive integer, got {r}"),
                    });
                }
                Family::negbinomial_canonical(r as u32)
            }
            "normal-location" => Family::normal_location(parse_f64(arg, "sigma")?),
            "normal-location-scale" => Ok(Family::normal_location_scale()),
            "mvn-location" => Family::mvn_location(parse_f64(arg, "p")? as usize),
            "mvn-scale" => Family::mvn_scale(parse_f64(arg, "p")? as usize),
            _ => Err(Error::UnknownFamily(spec.to_string())),
        }
    }

    pub(crate) fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            FamilyKind::Poisson => "poisson".into(),
            FamilyKind::PoissonCanonical => "poisson-canonical".into(),
            FamilyKind::BernoulliCanonical => "bernoulli-canonical".into(),
            FamilyKind::NegBinomialCanonical { r } => format!("negbinomial-canonical:{r}"),
            FamilyKind::NormalLocation { sigma } => format!("normal-location:{sigma}"),
            FamilyKind::NormalLocationScale => "normal-location-scale".into(),
            FamilyKind::MvnLocation { dim, .. } => format!("mvn-location:{dim}"),
            FamilyKind::MvnScale { dim } => format!("mvn-scale:{dim}"),
        }
    }

    // ----- shape --------------------------------------------------------

    pub fn param_dim(&self) -> usize {
        match &self.kind {
            FamilyKind::Poisson
            | FamilyKind::PoissonCanonical
            | FamilyKind::BernoulliCanonical
            | FamilyKind::NegBinomialCanonical { .. }
            | FamilyKind::NormalLocation { .. } => 1,
            FamilyKind::NormalLocationScale => 2,
            FamilyKind::MvnLocation { dim, .. } => *dim,
            FamilyKind::MvnScale { dim } => dim * (dim + 1) / 2,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match &self.kind {
            FamilyKind::MvnLocation { dim, .. } | FamilyKind::MvnScale { dim } => *dim,
            _ => 1,
        }
    }

    pub fn support(&self) -> Support {
        match &self.kind {
            FamilyKind::Poisson
            | FamilyKind::PoissonCanonical
            | FamilyKind::BernoulliCanonical
            | FamilyKind::NegBinomialCanonical { .. } => Support::Discrete,
            _ => Support::Continuous,
        }
    }

    /// True iff the location parameter shifts a fixed shape (constant Fisher
    /// information in the parameter).
    pub fn is_location(&self) -> bool {
        matches!(
            self.kind,
            FamilyKind::NormalLocation { .. } | FamilyKind::MvnLocation { .. }
        )
    }

    // ----- parameter domain ----------------------------------------------

    /// Strict interior membership, with a `BOUNDARY_MARGIN` buffer: values
    /// this close to the boundary are rejected rather than extrapolated.
    pub fn contains(&self, theta: &[f64]) -> bool {
        if theta.len() != self.param_dim() || theta.iter().any(|t| !t.is_finite()) {
            return false;
        }
        match &self.kind {
            FamilyKind::Poisson => theta[0] > BOUNDARY_MARGIN,
            FamilyKind::PoissonCanonical => theta[0].abs() < 700.0,
            FamilyKind::BernoulliCanonical => theta[0].abs() < 36.0,
            FamilyKind::NegBinomialCanonical { .. } => theta[0] < -BOUNDARY_MARGIN && theta[0] > -36.0,
            FamilyKind::NormalLocation { .. } => true,
            FamilyKind::NormalLocationScale => theta[1] > BOUNDARY_MARGIN,
            FamilyKind::MvnLocation { .. } => true,
            FamilyKind::MvnScale { dim } => {
                let v = mvnscale::unflatten(theta, *dim);
                match crate::numerics::cholesky(&v, *dim) {
                    Some(l) => (0..*dim).all(|i| l[i * dim + i] > BOUNDARY_MARGIN),
                    None => false,
                }
            }
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::ParamOutsideDomain(theta.to_vec()))
        }
    }

    // ----- density and derivatives ----------------------------------------

    pub fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        match &self.kind {
            FamilyKind::Poisson => discrete::poisson_mean().log_density(x[0], theta[0]),
            FamilyKind::PoissonCanonical => discrete::poisson_canonical().log_density(x[0], theta[0]),
            FamilyKind::BernoulliCanonical => discrete::bernoulli().log_density(x[0], theta[0]),
            FamilyKind::NegBinomialCanonical { r } => {
                discrete::negbinomial(*r).log_density(x[0], theta[0])
            }
            FamilyKind::NormalLocation { sigma } => {
                gaussian::normal_location_logpdf(x[0], theta[0], *sigma)
            }
            FamilyKind::NormalLocationScale => {
                gaussian::normal_ls_logpdf(x[0], theta[0], theta[1])
            }
            FamilyKind::MvnLocation { dim, cov } => {
                gaussian::mvn_location_logpdf(x, theta, *dim, cov.as_deref())
            }
            FamilyKind::MvnScale { dim } => mvnscale::logpdf(x, theta, *dim),
        }
    }

    /// Mixed partial derivative of the log density with respect to the
    /// parameter, specified by per-coordinate multiplicities (total order at
    /// most four; order five is available only through [`Family::deriv5_bound`]).
    pub fn log_density_deriv(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> f64 {
        debug_assert_eq!(orders.len(), self.param_dim());
        let total: usize = orders.iter().sum();
        debug_assert!(total >= 1 && total <= 4);
        match &self.kind {
            FamilyKind::Poisson => discrete::poisson_mean().deriv(x[0], theta[0], orders[0]),
            FamilyKind::PoissonCanonical => {
                discrete::poisson_canonical().deriv(x[0], theta[0], orders[0])
            }
            FamilyKind::BernoulliCanonical => discrete::bernoulli().deriv(x[0], theta[0], orders[0]),
            FamilyKind::NegBinomialCanonical { r } => {
                discrete::negbinomial(*r).deriv(x[0], theta[0], orders[0])
            }
            FamilyKind::NormalLocation { sigma } => {
                gaussian::normal_location_deriv(x[0], theta[0], *sigma, orders[0])
            }
            FamilyKind::NormalLocationScale => {
                gaussian::normal_ls_deriv(x[0], theta[0], theta[1], orders)
            }
            FamilyKind::MvnLocation { dim, cov } => {
                gaussian::mvn_location_deriv(x, theta, *dim, cov.as_deref(), orders)
            }
            FamilyKind::MvnScale { dim } => mvnscale::deriv(x, theta, *dim, orders),
        }
    }

    /// Crude bound on the magnitude of any order-five log-likelihood
    /// derivative in a unit neighbourhood of `theta`, for diagnostics.
    pub fn deriv5_bound(&self, theta: &[f64]) -> f64 {
        match &self.kind {
            FamilyKind::Poisson => {
                // |d^5 log f| = 24 x / theta^5 near theta; bound E-scale x by theta + 10 sqrt(theta)
                let t = (theta[0] - 0.5).max(BOUNDARY_MARGIN);
                24.0 * (theta[0] + 10.0 * theta[0].sqrt() + 10.0) / t.powi(5)
            }
            FamilyKind::PoissonCanonical => (theta[0] + 1.0).exp(),
            FamilyKind::BernoulliCanonical => 1.0, // |A^(5)| = |v(1-2p)(1-12v)| <= 1
            FamilyKind::NegBinomialCanonical { r } => {
                let u = (theta[0] + 1.0).min(-1e-9_f64).exp();
                *r as f64 * u * (1.0 + 11.0 * u + 11.0 * u * u + u.powi(3)) / (1.0 - u).powi(5)
            }
            FamilyKind::NormalLocation { .. } => 0.0,
            FamilyKind::NormalLocationScale => {
                let v = (theta[1] * 0.5).max(BOUNDARY_MARGIN);
                // largest coefficient pattern: |d^5_v| = |-12/v^5 + 60 z^2/v^6| at z^2 ~ 9 v
                12.0 / v.powi(5) + 540.0 / v.powi(5)
            }
            FamilyKind::MvnLocation { .. } => 0.0,
            FamilyKind::MvnScale { dim } => mvnscale::deriv5_bound(theta, *dim),
        }
    }

    /// |total probability mass - 1| computed numerically (series for discrete
    /// support, nested adaptive quadrature for continuous support).
    pub fn normalization_gap(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        match &self.kind {
            FamilyKind::Poisson
            | FamilyKind::PoissonCanonical
            | FamilyKind::BernoulliCanonical
            | FamilyKind::NegBinomialCanonical { .. } => {
                let total = discrete::series_total_mass(self, theta);
                Ok((total - 1.0).abs())
            }
            FamilyKind::NormalLocation { sigma } => {
                let (mu, s) = (theta[0], *sigma);
                let v = crate::numerics::integrate_concentrated(
                    |x| self.log_density(&[x], theta).exp(),
                    mu,
                    s,
                    None,
                    1e-11,
                    1e-11,
                )?;
                Ok((v - 1.0).abs())
            }
            FamilyKind::NormalLocationScale => {
                let (mu, s) = (theta[0], theta[1].sqrt());
                let v = crate::numerics::integrate_concentrated(
                    |x| self.log_density(&[x], theta).exp(),
                    mu,
                    s,
                    None,
                    1e-11,
                    1e-11,
                )?;
                Ok((v - 1.0).abs())
            }
            FamilyKind::MvnLocation { dim, .. } | FamilyKind::MvnScale { dim } => {
                if *dim > 3 {
                    return Err(Error::Unsupported {
                        op: "normalization_gap",
                        family: self.name(),
                        reason: "nested quadrature only runs for p <= 3".into(),
                    });
                }
                let d = *dim;
                let this = self.clone();
                let th = theta.to_vec();
                let v = nested_integral(&|x: &[f64]| this.log_density(x, &th).exp(), d, 12.0)?;
                Ok((v - 1.0).abs())
            }
        }
    }

    // ----- sampling -------------------------------------------------------

    /// Fill `out` (length a multiple of `obs_dim`) with draws at `theta`.
    pub fn sample_into(&self, theta: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        use rand::Rng;
        use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
        match &self.kind {
            FamilyKind::Poisson | FamilyKind::PoissonCanonical => {
                let mean = if matches!(self.kind, FamilyKind::Poisson) {
                    theta[0]
                } else {
                    theta[0].exp()
                };
                let d = Poisson::new(mean).expect("valid Poisson mean");
                for o in out.iter_mut() {
                    *o = d.sample(rng);
                }
            }
            FamilyKind::BernoulliCanonical => {
                let p = 1.0 / (1.0 + (-theta[0]).exp());
                for o in out.iter_mut() {
                    *o = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                }
            }
            FamilyKind::NegBinomialCanonical { r } => {
                // Poisson mixed over Gamma(shape r, scale u/(1-u)) has the
                // negative binomial law with success probability 1 - u.
                let u = theta[0].exp();
                let g = Gamma::new(*r as f64, u / (1.0 - u)).expect("valid Gamma");
                for o in out.iter_mut() {
                    let lam: f64 = g.sample(rng);
                    *o = if lam > 0.0 {
                        Poisson::new(lam).expect("valid Poisson mean").sample(rng)
                    } else {
                        0.0
                    };
                }
            }
            FamilyKind::NormalLocation { sigma } => {
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = theta[0] + sigma * z;
                }
            }
            FamilyKind::NormalLocationScale => {
                let s = theta[1].sqrt();
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = theta[0] + s * z;
                }
            }
            FamilyKind::MvnLocation { dim, cov } => {
                let d = *dim;
                let chol = cov
                    .as_ref()
                    .map(|c| crate::numerics::cholesky(c, d).expect("SPD validated"));
                for obs in out.chunks_mut(d) {
                    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                    match &chol {
                        None => obs.copy_from_slice(&z),
                        Some(l) => {
                            for i in 0..d {
                                obs[i] = (0..=i).map(|k| l[i * d + k] * z[k]).sum();
                            }
                        }
                    }
                    for (o, t) in obs.iter_mut().zip(theta.iter()) {
                        *o += t;
                    }
                }
            }
            FamilyKind::MvnScale { dim } => {
                let d = *dim;
                let v = mvnscale::unflatten(theta, d);
                let l = crate::numerics::cholesky(&v, d).expect("domain-checked V");
                for obs in out.chunks_mut(d) {
                    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                    for i in 0..d {
                        obs[i] = (0..=i).map(|k| l[i * d + k] * z[k]).sum();
                    }
                }
            }
        }
    }

    pub fn sample(&self, theta: &[f64], rng: &mut ChaCha8Rng, count: usize) -> SampleBatch {
        let mut data = vec![0.0; count * self.obs_dim()];
        self.sample_into(theta, rng, &mut data);
        SampleBatch { data, obs_dim: self.obs_dim() }
    }

    // ----- sufficient statistics ------------------------------------------

    pub fn sufficient_stat(&self, batch: &SampleBatch) -> SuffStat {
        let n = batch.n();
        match &self.kind {
            FamilyKind::Poisson
            | FamilyKind::PoissonCanonical
            | FamilyKind::BernoulliCanonical
            | FamilyKind::NegBinomialCanonical { .. } => SuffStat::CountSum {
                sum: batch.data.iter().map(|&x| x as u64).sum(),
                n,
            },
            FamilyKind::NormalLocation { .. } => SuffStat::Mean {
                mean: vec![batch.data.iter().sum::<f64>() / n as f64],
                n,
            },
            FamilyKind::NormalLocationScale => {
                let mean = batch.data.iter().sum::<f64>() / n as f64;
                let ss = batch.data.iter().map(|&x| (x - mean) * (x - mean)).sum();
                SuffStat::MeanSq { mean, centered_sq: ss, n }
            }
            FamilyKind::MvnLocation { dim, .. } => {
                let d = *dim;
                let mut mean = vec![0.0; d];
                for i in 0..n {
                    for (m, &x) in mean.iter_mut().zip(batch.obs(i)) {
                        *m += x;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= n as f64;
                }
                SuffStat::Mean { mean, n }
            }
            FamilyKind::MvnScale { dim } => {
                let d = *dim;
                let mut mat = vec![0.0; d * d];
                for i in 0..n {
                    let x = batch.obs(i);
                    for a in 0..d {
                        for b in 0..d {
                            mat[a * d + b] += x[a] * x[b];
                        }
                    }
                }
                SuffStat::Scatter { mat, dim: d, n }
            }
        }
    }
}

/// Nested adaptive quadrature of `f` over `[-half, half]^d` (d <= 3).
fn nested_integral(f: &dyn Fn(&[f64]) -> f64, d: usize, half: f64) -> Result<f64> {
    fn go(f: &dyn Fn(&[f64]) -> f64, d: usize, half: f64, fixed: &mut Vec<f64>) -> Result<f64> {
        if fixed.len() == d {
            return Ok(f(fixed));
        }
        let lvl_tol = 1e-9;
        let mut captured: Option<Error> = None;
        let val = crate::numerics::integrate(
            |x| {
                let mut inner = fixed.clone();
                inner.push(x);
                match go(f, d, half, &mut inner) {
                    Ok(v) => v,
                    Err(_) => f64::NAN,
                }
            },
            -half,
            half,
            lvl_tol,
            lvl_tol,
        );
        match val {
            Ok(v) => Ok(v),
            Err(e) => {
                captured.get_or_insert(e);
                Err(captured.unwrap())
            }
        }
    }
    go(f, d, half, &mut Vec::new())
}
