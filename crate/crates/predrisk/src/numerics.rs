//! Shared numerical kernels: deterministic summation, small dense linear
//! algebra, adaptive Gauss-Kronrod quadrature, and a uniform lookup table.

use crate::error::{Error, Result};

pub use statrs::function::gamma::ln_gamma;

/// Deterministic pairwise summation. The reduction tree depends only on the
/// slice length, so totals are bit-identical however the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n if n <= 32 => xs.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Mean and standard error of the mean, via pairwise sums.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let devs: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&devs) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Small dense symmetric linear algebra (row-major d x d in a flat Vec).
// ---------------------------------------------------------------------------

/// Cholesky factor L (lower, row-major) of a symmetric positive definite
/// matrix, or `None` if the matrix is not positive definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, d)?;
    // Invert L in place (lower triangular).
    let mut linv = vec![0.0; d * d];
    for i in 0..d {
        linv[i * d + i] = 1.0 / l[i * d + i];
        for j in (0..i).rev() {
            let mut s = 0.0;
            for k in j..i {
                s += l[i * d + k] * linv[k * d + j];
            }
            linv[i * d + j] = -s / l[i * d + i];
        }
    }
    // A^{-1} = L^{-T} L^{-1}
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in i.max(j)..d {
                s += linv[k * d + i] * linv[k * d + j];
            }
            inv[i * d + j] = s;
        }
    }
    Some(inv)
}

/// Determinant of a symmetric positive definite matrix (via Cholesky).
pub fn spd_det(a: &[f64], d: usize) -> Option<f64> {
    let l = cholesky(a, d)?;
    let mut det = 1.0;
    for i in 0..d {
        det *= l[i * d + i] * l[i * d + i];
    }
    Some(det)
}

/// General weighted linear least squares with a small number of columns:
/// minimises sum_i w_i (y_i - X_i . beta)^2 via normal equations.
pub fn weighted_lstsq(xrows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let m = xrows.len();
    let k = xrows.first().map(|r| r.len()).unwrap_or(0);
    if m < k || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "least squares needs at least {k} rows, got {m}"
        )));
    }
    let mut ata = vec![0.0; k * k];
    let mut atb = vec![0.0; k];
    for i in 0..m {
        for a in 0..k {
            atb[a] += w[i] * xrows[i][a] * y[i];
            for b in 0..k {
                ata[a * k + b] += w[i] * xrows[i][a] * xrows[i][b];
            }
        }
    }
    let inv = spd_inverse(&ata, k)
        .ok_or_else(|| Error::InvalidArgument("singular normal equations".into()))?;
    let mut beta = vec![0.0; k];
    for a in 0..k {
        for b in 0..k {
            beta[a] += inv[a * k + b] * atb[b];
        }
    }
    Ok(beta)
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod quadrature (7-15 pair).
// ---------------------------------------------------------------------------

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        resk += WGK[j] * (f1 + f2);
        if j % 2 != 0 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    ((resk * h), ((resk - resg) * h).abs())
}

/// Adaptive quadrature of `f` on `[a, b]` to the requested absolute or
/// relative tolerance (whichever is met first).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if !(a < b) {
        return Ok(0.0);
    }
    // Worklist of (lo, hi, estimate, error).
    let (v, e) = gk15(&f, a, b);
    let mut segments = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let total: f64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= abs_tol || err <= rel_tol * total.abs() {
            return Ok(total);
        }
        // Split the segment with the largest error.
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval exhausted by floating point; accept what we have.
            let total: f64 = segments.iter().map(|s| s.2).sum();
            return Ok(total + v);
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        segments.push((lo, mid, v1, e1));
        segments.push((mid, hi, v2, e2));
    }
    let total: f64 = segments.iter().map(|s| s.2).sum();
    let err: f64 = segments.iter().map(|s| s.3).sum();
    if err <= abs_tol.max(rel_tol * total.abs()) {
        Ok(total)
    } else {
        Err(Error::QuadratureTolerance {
            achieved: err,
            requested: abs_tol.max(rel_tol * total.abs()),
        })
    }
}

/// Integrate a function concentrated around `center` with scale `width` over
/// the whole line (or the part of it above `lower` when given), expanding the
/// window until the increments are negligible.
pub fn integrate_concentrated<F: Fn(f64) -> f64>(
    f: F,
    center: f64,
    width: f64,
    lower: Option<f64>,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let clamp = |x: f64| match lower {
        Some(lo) => x.max(lo),
        None => x,
    };
    let mut k = 8.0;
    let mut lo = clamp(center - k * width);
    let mut hi = center + k * width;
    let mut total = integrate(&f, lo, hi, abs_tol, rel_tol)?;
    loop {
        let lo2 = clamp(center - 2.0 * k * width);
        let hi2 = center + 2.0 * k * width;
        let mut inc = 0.0;
        if lo2 < lo {
            inc += integrate(&f, lo2, lo, abs_tol, rel_tol)?;
        }
        inc += integrate(&f, hi, hi2, abs_tol, rel_tol)?;
        total += inc;
        if inc.abs() <= abs_tol.max(rel_tol * total.abs()) || k > 512.0 {
            return Ok(total);
        }
        lo = lo2;
        hi = hi2;
        k *= 2.0;
    }
}

// ---------------------------------------------------------------------------
// Uniform lookup table with linear interpolation.
// ---------------------------------------------------------------------------

/// Values of a smooth function tabulated on a uniform grid; evaluation
/// interpolates linearly and is exact at the nodes.
#[derive(Clone, Debug)]
pub struct UniformTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl UniformTable {
    pub fn build<F: Fn(f64) -> f64>(lo: f64, hi: f64, step: f64, f: F) -> Self {
        let n = ((hi - lo) / step).ceil() as usize + 2;
        let values = (0..n).map(|i| f(lo + i as f64 * step)).collect();
        UniformTable { lo, step, values }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.step;
        if t <= 0.0 {
            return self.values[0];
        }
        let i = t.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// log(n choose k) for nonnegative integers.
pub fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}
