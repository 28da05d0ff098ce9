//! Normal location, normal location-scale, and multivariate normal location
//! families.
//!
//! Every log-likelihood derivative of the location-scale family is a
//! polynomial of degree at most two in `z = x - mu`, so expectations of
//! products of derivatives reduce to even Gaussian moments of `z`. The
//! [`ZPoly`] representation carries exactly that structure.

use crate::numerics::spd_inverse;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// ---------------------------------------------------------------------------
// normal-location (known sigma)
// ---------------------------------------------------------------------------

pub(crate) fn normal_location_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * LN_2PI - sigma.ln() - 0.5 * z * z
}

pub(crate) fn normal_location_deriv(x: f64, mu: f64, sigma: f64, k: usize) -> f64 {
    match k {
        1 => (x - mu) / (sigma * sigma),
        2 => -1.0 / (sigma * sigma),
        _ => 0.0,
    }
}

// ---------------------------------------------------------------------------
// normal location-scale, parametrized by (mu, v = sigma^2)
// ---------------------------------------------------------------------------

pub(crate) fn normal_ls_logpdf(x: f64, mu: f64, v: f64) -> f64 {
    let z = x - mu;
    -0.5 * (LN_2PI + v.ln()) - z * z / (2.0 * v)
}

/// Coefficients of `c0 + c1 z + c2 z^2` with `z = x - mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ZPoly(pub [f64; 3]);

/// Derivative `d^{a}/dmu^{a} d^{b}/dv^{b} log f` as a polynomial in `z`.
pub(crate) fn normal_ls_deriv_poly(v: f64, a: usize, b: usize) -> ZPoly {
    let v2 = v * v;
    let v3 = v2 * v;
    let v4 = v3 * v;
    let v5 = v4 * v;
    ZPoly(match (a, b) {
        (1, 0) => [0.0, 1.0 / v, 0.0],
        (0, 1) => [-0.5 / v, 0.0, 0.5 / v2],
        (2, 0) => [-1.0 / v, 0.0, 0.0],
        (1, 1) => [0.0, -1.0 / v2, 0.0],
        (0, 2) => [0.5 / v2, 0.0, -1.0 / v3],
        (3, 0) => [0.0, 0.0, 0.0],
        (2, 1) => [1.0 / v2, 0.0, 0.0],
        (1, 2) => [0.0, 2.0 / v3, 0.0],
        (0, 3) => [-1.0 / v3, 0.0, 3.0 / v4],
        (4, 0) | (3, 1) => [0.0, 0.0, 0.0],
        (2, 2) => [-2.0 / v3, 0.0, 0.0],
        (1, 3) => [0.0, -6.0 / v4, 0.0],
        (0, 4) => [3.0 / v4, 0.0, -12.0 / v5],
        _ => panic!("unsupported derivative order ({a},{b})"),
    })
}

pub(crate) fn normal_ls_deriv(x: f64, mu: f64, v: f64, orders: &[usize]) -> f64 {
    let z = x - mu;
    let ZPoly(c) = normal_ls_deriv_poly(v, orders[0], orders[1]);
    c[0] + c[1] * z + c[2] * z * z
}

/// Even central moments E[z^{2k}] of N(0, v) for 2k = 0..=8.
pub(crate) fn gaussian_even_moments(v: f64) -> [f64; 5] {
    [1.0, v, 3.0 * v * v, 15.0 * v * v * v, 105.0 * v * v * v * v]
}

/// Expectation of a product of up to four `ZPoly`s under z ~ N(0, v).
pub(crate) fn zpoly_product_expect(polys: &[ZPoly], v: f64) -> f64 {
    // Multiply out the polynomials (degree <= 8), then contract with moments.
    let mut coef = [0.0; 9];
    coef[0] = 1.0;
    let mut deg = 0;
    for ZPoly(c) in polys {
        let mut next = [0.0; 9];
        for (i, &a) in coef.iter().enumerate().take(deg + 1) {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in c.iter().enumerate() {
                if b != 0.0 {
                    next[i + j] += a * b;
                }
            }
        }
        coef = next;
        deg += 2;
    }
    let m = gaussian_even_moments(v);
    (0..=4).map(|k| coef[2 * k] * m[k]).sum()
}

// ---------------------------------------------------------------------------
// mvn-location (known covariance; identity unless provided)
// ---------------------------------------------------------------------------

pub(crate) fn mvn_location_logpdf(x: &[f64], mu: &[f64], dim: usize, cov: Option<&[f64]>) -> f64 {
    match cov {
        None => {
            let q: f64 = x
                .iter()
                .zip(mu.iter())
                .map(|(&xi, &mi)| (xi - mi) * (xi - mi))
                .sum();
            -0.5 * (dim as f64) * LN_2PI - 0.5 * q
        }
        Some(c) => {
            let w = spd_inverse(c, dim).expect("SPD validated at construction");
            let det = crate::numerics::spd_det(c, dim).unwrap();
            let z: Vec<f64> = x.iter().zip(mu.iter()).map(|(&a, &b)| a - b).collect();
            let mut q = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    q += z[i] * w[i * dim + j] * z[j];
                }
            }
            -0.5 * (dim as f64) * LN_2PI - 0.5 * det.ln() - 0.5 * q
        }
    }
}

pub(crate) fn mvn_location_deriv(
    x: &[f64],
    mu: &[f64],
    dim: usize,
    cov: Option<&[f64]>,
    orders: &[usize],
) -> f64 {
    let total: usize = orders.iter().sum();
    let idx: Vec<usize> = orders
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat(i).take(k))
        .collect();
    match total {
        1 => {
            let i = idx[0];
            match cov {
                None => x[i] - mu[i],
                Some(c) => {
                    let w = spd_inverse(c, dim).expect("SPD validated");
                    (0..dim).map(|j| w[i * dim + j] * (x[j] - mu[j])).sum()
                }
            }
        }
        2 => {
            let (i, j) = (idx[0], idx[1]);
            match cov {
                None => {
                    if i == j {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Some(c) => {
                    let w = spd_inverse(c, dim).expect("SPD validated");
                    -w[i * dim + j]
                }
            }
        }
        _ => 0.0,
    }
}
