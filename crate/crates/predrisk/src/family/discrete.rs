//! Discrete one-parameter families and the truncated-series expectation
//! engine behind their analytic cumulant tensors.

use super::{Family, FamilyKind};
use crate::numerics::{ln_choose, ln_gamma};

/// A one-parameter family with log density `x * eta(theta) - A(theta) + base(x)`
/// described through the derivatives of its mean-value function. Covers the
/// canonical families directly and the mean-parametrized Poisson through its
/// own derivative table.
#[derive(Clone, Copy)]
pub(crate) struct CanonicalExp {
    pub kind: DiscreteKind,
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum DiscreteKind {
    PoissonMean,
    PoissonCanonical,
    Bernoulli,
    NegBinomial { r: u32 },
}

pub(crate) fn poisson_mean() -> CanonicalExp {
    CanonicalExp { kind: DiscreteKind::PoissonMean }
}
pub(crate) fn poisson_canonical() -> CanonicalExp {
    CanonicalExp { kind: DiscreteKind::PoissonCanonical }
}
pub(crate) fn bernoulli() -> CanonicalExp {
    CanonicalExp { kind: DiscreteKind::Bernoulli }
}
pub(crate) fn negbinomial(r: u32) -> CanonicalExp {
    CanonicalExp { kind: DiscreteKind::NegBinomial { r } }
}

impl CanonicalExp {
    pub fn log_density(&self, x: f64, theta: f64) -> f64 {
        match self.kind {
            DiscreteKind::PoissonMean => x * theta.ln() - theta - ln_gamma(x + 1.0),
            DiscreteKind::PoissonCanonical => x * theta - theta.exp() - ln_gamma(x + 1.0),
            DiscreteKind::Bernoulli => x * theta - (1.0 + theta.exp()).ln(),
            DiscreteKind::NegBinomial { r } => {
                let rf = r as f64;
                ln_choose(x + rf - 1.0, x) + x * theta + rf * (-theta.exp()).ln_1p()
            }
        }
    }

    /// k-th derivative of the log density in theta, k in 1..=4.
    pub fn deriv(&self, x: f64, theta: f64, k: usize) -> f64 {
        match self.kind {
            DiscreteKind::PoissonMean => match k {
                0 => self.log_density(x, theta),
                1 => x / theta - 1.0,
                // d^k/dtheta^k (x log theta) = (-1)^(k-1) (k-1)! x / theta^k
                k => {
                    let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
                    let fact: f64 = (1..k).map(|i| i as f64).product();
                    sign * fact * x / theta.powi(k as i32)
                }
            },
            _ => {
                if k == 1 {
                    x - self.a_deriv(theta, 1)
                } else {
                    -self.a_deriv(theta, k)
                }
            }
        }
    }

    /// k-th derivative of the cumulant function A(theta), k in 1..=4.
    fn a_deriv(&self, theta: f64, k: usize) -> f64 {
        match self.kind {
            DiscreteKind::PoissonMean => unreachable!("mean parametrization has no A"),
            DiscreteKind::PoissonCanonical => theta.exp(),
            DiscreteKind::Bernoulli => {
                let p = 1.0 / (1.0 + (-theta).exp());
                let v = p * (1.0 - p);
                match k {
                    1 => p,
                    2 => v,
                    3 => v * (1.0 - 2.0 * p),
                    4 => v * (1.0 - 6.0 * v),
                    _ => unreachable!(),
                }
            }
            DiscreteKind::NegBinomial { r } => {
                let rf = r as f64;
                let u = theta.exp();
                let om = 1.0 - u;
                match k {
                    1 => rf * u / om,
                    2 => rf * u / (om * om),
                    3 => rf * u * (1.0 + u) / om.powi(3),
                    4 => rf * u * (1.0 + 4.0 * u + u * u) / om.powi(4),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Mean of the observation distribution.
    pub fn mean(&self, theta: f64) -> f64 {
        match self.kind {
            DiscreteKind::PoissonMean => theta,
            _ => self.a_deriv(theta, 1),
        }
    }

    /// Probability mass ratio pmf(x + 1) / pmf(x); drives the stable
    /// mode-outward recurrences in the series engine.
    pub fn pmf_ratio(&self, x: f64, theta: f64) -> f64 {
        match self.kind {
            DiscreteKind::PoissonMean => theta / (x + 1.0),
            DiscreteKind::PoissonCanonical => theta.exp() / (x + 1.0),
            DiscreteKind::Bernoulli => {
                let p = 1.0 / (1.0 + (-theta).exp());
                if x == 0.0 {
                    p / (1.0 - p)
                } else {
                    0.0
                }
            }
            DiscreteKind::NegBinomial { r } => theta.exp() * (x + r as f64) / (x + 1.0),
        }
    }

    pub fn upper_support(&self) -> f64 {
        match self.kind {
            DiscreteKind::Bernoulli => 1.0,
            _ => f64::INFINITY,
        }
    }
}

fn as_canonical(fam: &Family) -> CanonicalExp {
    match fam.kind() {
        FamilyKind::Poisson => poisson_mean(),
        FamilyKind::PoissonCanonical => poisson_canonical(),
        FamilyKind::BernoulliCanonical => bernoulli(),
        FamilyKind::NegBinomialCanonical { r } => negbinomial(*r),
        _ => panic!("not a discrete family"),
    }
}

/// Expectation of `f(x)` under the family's observation law, summed from the
/// mode outwards and truncated when the remaining tail mass drops below
/// 1e-12 of the total. Exact to roundoff for every support point visited.
pub(crate) fn series_expect(fam: &Family, theta: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
    let ce = as_canonical(fam);
    let th = theta[0];
    let mode = ce.mean(th).floor().max(0.0);
    let upper = ce.upper_support();
    let lw_mode = ce.log_density(mode, th);
    // Walk right from the mode, then left, with pmf recurrences.
    let mut total = 0.0;
    let mut acc = 0.0;
    let peak = lw_mode.exp();
    let cut = peak * 1e-19;
    let mut w = peak;
    let mut x = mode;
    loop {
        acc += w * f(x);
        total += w;
        if x + 1.0 > upper {
            break;
        }
        w *= ce.pmf_ratio(x, th);
        x += 1.0;
        if w < cut && x > ce.mean(th) {
            break;
        }
        if x > 1e9 {
            break;
        }
    }
    let mut x = mode - 1.0;
    if x >= 0.0 {
        let mut w = peak / ce.pmf_ratio(x, th);
        loop {
            acc += w * f(x);
            total += w;
            if x == 0.0 || w < cut {
                break;
            }
            x -= 1.0;
            w /= ce.pmf_ratio(x, th);
        }
    }
    // total is within 1e-12 of 1 by construction; dividing by it removes the
    // truncation bias of the visited mass.
    acc / total
}

/// Total probability mass reached by the series walk (diagnostic for the
/// normalization invariant).
pub(crate) fn series_total_mass(fam: &Family, theta: &[f64]) -> f64 {
    let mut mass = 0.0;
    // series_expect normalizes by the visited mass, so accumulate manually.
    let ce = as_canonical(fam);
    let th = theta[0];
    let mode = ce.mean(th).floor().max(0.0);
    let upper = ce.upper_support();
    let mut w = ce.log_density(mode, th).exp();
    let cut = w * 1e-19;
    let mut x = mode;
    loop {
        mass += w;
        if x + 1.0 > upper {
            break;
        }
        w *= ce.pmf_ratio(x, th);
        x += 1.0;
        if w < cut && x > ce.mean(th) {
            break;
        }
        if x > 1e9 {
            break;
        }
    }
    let mut x = mode - 1.0;
    if x >= 0.0 {
        let mut w = ce.log_density(mode, th).exp() / ce.pmf_ratio(x, th);
        loop {
            mass += w;
            if x == 0.0 || w < cut {
                break;
            }
            x -= 1.0;
            w /= ce.pmf_ratio(x, th);
        }
    }
    mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn series_mean_matches_closed_form() {
        let fam = Family::poisson();
        let m = series_expect(&fam, &[3.7], |x| x);
        assert_relative_eq!(m, 3.7, epsilon = 1e-10);

        let nb = Family::negbinomial_canonical(3).unwrap();
        let th = -0.9_f64;
        let u = th.exp();
        let m = series_expect(&nb, &[th], |x| x);
        assert_relative_eq!(m, 3.0 * u / (1.0 - u), epsilon = 1e-10);
    }

    #[test]
    fn series_handles_large_poisson_means() {
        let fam = Family::poisson();
        let lam = 1.0e6;
        let m = series_expect(&fam, &[lam], |x| x);
        assert_relative_eq!(m, lam, max_relative = 1e-10);
        let v = series_expect(&fam, &[lam], |x| (x - lam) * (x - lam));
        assert_relative_eq!(v, lam, max_relative = 1e-8);
    }

    #[test]
    fn bernoulli_series_is_exact_enumeration() {
        let fam = Family::bernoulli_canonical();
        let th = 0.7_f64;
        let p = 1.0 / (1.0 + (-th).exp());
        let m = series_expect(&fam, &[th], |x| x);
        assert_relative_eq!(m, p, epsilon = 1e-14);
    }
}
