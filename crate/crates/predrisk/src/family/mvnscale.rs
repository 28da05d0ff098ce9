//! Zero-mean multivariate normal with unknown covariance `V`, parametrized
//! by the entries `V_{ab}`, `a <= b` (flattened row-wise).
//!
//! Every mixed partial of the log likelihood in the `V_{ab}` coordinates is
//! an affine function of the outer product `S = x x^T`:
//!
//! ```text
//!   l_(a1..ar)(x) = c + x^T A x,
//!   A = -1/2 * d^r W,          d^r W = (-1)^r sum over orderings W E W E ... W,
//!   c = -1/2 * d^r log|V|,     as a signed sum of trace words tr(W E .. W E).
//! ```
//!
//! Expectations of products of such forms reduce to Gaussian moments of
//! quadratic forms, evaluated exactly by enumerating Wick pairings; the
//! pairing cycles alternate the `A` matrices with `V`. Closed-form
//! alternatives for the pure-derivative expectations (the whitened-entry
//! cycle sums, including the 48-term fourth-order enumeration in which every
//! `W`-pair must draw its indices from at least three of the four index
//! pairs) are provided alongside and are cross-checked against both this
//! engine and Monte Carlo estimates.

use crate::error::{Error, Result};
use crate::numerics::{spd_det, spd_inverse};
use std::cell::RefCell;
use std::collections::HashMap;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Ordered list of index pairs (a, b) with a <= b.
pub fn pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for a in 0..p {
        for b in a..p {
            out.push((a, b));
        }
    }
    out
}

/// Flat symmetric matrix from the packed parameter vector.
pub fn unflatten(theta: &[f64], p: usize) -> Vec<f64> {
    let mut v = vec![0.0; p * p];
    for (k, &(a, b)) in pairs(p).iter().enumerate() {
        v[a * p + b] = theta[k];
        v[b * p + a] = theta[k];
    }
    v
}

/// Packed parameter vector from a full symmetric matrix.
pub fn flatten(v: &[f64], p: usize) -> Vec<f64> {
    pairs(p).iter().map(|&(a, b)| v[a * p + b]).collect()
}

fn basis(p: usize) -> Vec<Vec<f64>> {
    pairs(p)
        .into_iter()
        .map(|(a, b)| {
            let mut e = vec![0.0; p * p];
            e[a * p + b] = 1.0;
            e[b * p + a] = 1.0;
            e
        })
        .collect()
}

fn mat_mul(a: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let aik = a[i * p + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..p {
                c[i * p + j] += aik * b[k * p + j];
            }
        }
    }
    c
}

fn mat_trace(a: &[f64], p: usize) -> f64 {
    (0..p).map(|i| a[i * p + i]).sum()
}

fn quad_form(a: &[f64], x: &[f64], p: usize) -> f64 {
    let mut q = 0.0;
    for i in 0..p {
        for j in 0..p {
            q += x[i] * a[i * p + j] * x[j];
        }
    }
    q
}

pub(crate) fn logpdf(x: &[f64], theta: &[f64], p: usize) -> f64 {
    let v = unflatten(theta, p);
    let w = spd_inverse(&v, p).expect("domain-checked V");
    let det = spd_det(&v, p).unwrap();
    -0.5 * (p as f64) * LN_2PI - 0.5 * det.ln() - 0.5 * quad_form(&w, x, p)
}

pub(crate) fn deriv(x: &[f64], theta: &[f64], p: usize, orders: &[usize]) -> f64 {
    let eval = WordEval::new(theta, p).expect("domain-checked V");
    let multiset: Vec<usize> = orders
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat(i).take(k))
        .collect();
    let (c, a) = eval.form(&multiset);
    c + quad_form(&a, x, p)
}

pub(crate) fn deriv5_bound(theta: &[f64], p: usize) -> f64 {
    let v = unflatten(theta, p);
    let w = spd_inverse(&v, p).expect("domain-checked V");
    let wmax = w.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let vtr = mat_trace(&v, p);
    // 5! word terms, each a product of six W factors against S or a trace.
    120.0 * (2.0 * wmax * p as f64).powi(6) * (vtr * 16.0 + p as f64)
}

/// Per-theta evaluator carrying the inverse covariance and a cache of the
/// affine derivative forms.
pub(crate) struct WordEval {
    p: usize,
    v: Vec<f64>,
    w: Vec<f64>,
    es: Vec<Vec<f64>>,
    forms: RefCell<HashMap<Vec<usize>, (f64, Vec<f64>)>>,
}

impl WordEval {
    pub fn new(theta: &[f64], p: usize) -> Result<Self> {
        let v = unflatten(theta, p);
        let w = spd_inverse(&v, p).ok_or_else(|| Error::SingularFisher(theta.to_vec()))?;
        Ok(WordEval {
            p,
            v,
            w,
            es: basis(p),
            forms: RefCell::new(HashMap::new()),
        })
    }

    /// d^r W for the index multiset, as the permutation sum of alternating
    /// products.
    fn deriv_w(&self, idxs: &[usize]) -> Vec<f64> {
        let p = self.p;
        let r = idxs.len();
        let mut total = vec![0.0; p * p];
        let mut perm: Vec<usize> = (0..r).collect();
        loop {
            let mut m = self.w.clone();
            for &pos in &perm {
                m = mat_mul(&mat_mul(&m, &self.es[idxs[pos]], p), &self.w, p);
            }
            for (t, x) in total.iter_mut().zip(m.iter()) {
                *t += x;
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        for t in total.iter_mut() {
            *t *= sign;
        }
        total
    }

    /// d^r log|V| via the signed cyclic-word expansion.
    fn deriv_logdet(&self, idxs: &[usize]) -> f64 {
        let p = self.p;
        let mut words: Vec<(f64, Vec<usize>)> = vec![(1.0, vec![idxs[0]])];
        for &b in &idxs[1..] {
            let mut next = Vec::with_capacity(words.len() * (words[0].1.len() + 1));
            for (s, word) in &words {
                for m in 0..word.len() {
                    let mut w2 = word.clone();
                    w2.insert(m, b);
                    next.push((-s, w2));
                }
            }
            words = next;
        }
        let mut val = 0.0;
        for (s, word) in &words {
            let mut m: Vec<f64> = {
                let mut id = vec![0.0; p * p];
                for i in 0..p {
                    id[i * p + i] = 1.0;
                }
                id
            };
            for &e in word {
                m = mat_mul(&mat_mul(&m, &self.w, p), &self.es[e], p);
            }
            val += s * mat_trace(&m, p);
        }
        val
    }

    /// The affine form (c, A) with `l_(idxs)(x) = c + x^T A x`.
    pub fn form(&self, idxs: &[usize]) -> (f64, Vec<f64>) {
        let mut key = idxs.to_vec();
        key.sort_unstable();
        if let Some(f) = self.forms.borrow().get(&key) {
            return f.clone();
        }
        let dw = self.deriv_w(&key);
        let a: Vec<f64> = dw.iter().map(|x| -0.5 * x).collect();
        let c = -0.5 * self.deriv_logdet(&key);
        self.forms.borrow_mut().insert(key, (c, a.clone()));
        (c, a)
    }

    /// E[prod over groups of l_(group)] with x ~ N(0, V).
    pub fn expect(&self, groups: &[Vec<usize>]) -> f64 {
        let forms: Vec<(f64, Vec<f64>)> = groups.iter().map(|g| self.form(g)).collect();
        let k = forms.len();
        let mut total = 0.0;
        for mask in 0..(1u32 << k) {
            let mut cpart = 1.0;
            let mut qs: Vec<&[f64]> = Vec::with_capacity(k);
            for (g, form) in forms.iter().enumerate() {
                if mask & (1 << g) == 0 {
                    cpart *= form.0;
                } else {
                    qs.push(&form.1);
                }
            }
            if cpart != 0.0 {
                total += cpart * self.wick(&qs);
            }
        }
        total
    }

    /// E[prod x^T A_g x] over the Wick pairings of the 2k Gaussian slots.
    fn wick(&self, forms: &[&[f64]]) -> f64 {
        let k = forms.len();
        if k == 0 {
            return 1.0;
        }
        let slots: Vec<usize> = (0..2 * k).collect();
        let mut partner = vec![usize::MAX; 2 * k];
        let mut total = 0.0;
        self.wick_rec(forms, &slots, &mut partner, &mut total);
        total
    }

    fn wick_rec(&self, forms: &[&[f64]], free: &[usize], partner: &mut [usize], total: &mut f64) {
        if free.is_empty() {
            *total += self.matching_value(forms, partner);
            return;
        }
        let a = free[0];
        for j in 1..free.len() {
            let b = free[j];
            partner[a] = b;
            partner[b] = a;
            let rest: Vec<usize> = free[1..j]
                .iter()
                .chain(free[j + 1..].iter())
                .copied()
                .collect();
            self.wick_rec(forms, &rest, partner, total);
        }
    }

    fn matching_value(&self, forms: &[&[f64]], partner: &[usize]) -> f64 {
        let p = self.p;
        let k = forms.len();
        let mut visited = vec![false; k];
        let mut val = 1.0;
        for g in 0..k {
            if visited[g] {
                continue;
            }
            let mut m: Vec<f64> = {
                let mut id = vec![0.0; p * p];
                for i in 0..p {
                    id[i * p + i] = 1.0;
                }
                id
            };
            let mut cur_form = g;
            let mut cur_exit = 1usize;
            loop {
                visited[cur_form] = true;
                m = mat_mul(&mat_mul(&m, forms[cur_form], p), &self.v, p);
                let nxt = partner[2 * cur_form + cur_exit];
                let (nf, ns) = (nxt / 2, nxt % 2);
                if nf == g && ns == 0 {
                    break;
                }
                cur_form = nf;
                cur_exit = 1 - ns;
            }
            val *= mat_trace(&m, p);
        }
        val
    }
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

// ---------------------------------------------------------------------------
// Closed-form routes for the pure-derivative expectations (whitened-entry
// cycle sums). These are the independent cross-checks for the engine above.
// ---------------------------------------------------------------------------

/// Fisher information entry for pair indices `(i,i')` and `(r,r')`:
/// `(W_ir W_i'r' + W_ir' W_i'r) / 2^{[i=i'] + [r=r']}`.
pub fn closed_fisher(w: &[f64], p: usize, a: (usize, usize), b: (usize, usize)) -> f64 {
    let (i, i2) = a;
    let (r, r2) = b;
    let denom = (1 << (usize::from(i == i2) + usize::from(r == r2))) as f64;
    (w[i * p + r] * w[i2 * p + r2] + w[i * p + r2] * w[i2 * p + r]) / denom
}

/// Inverse Fisher entry: `V_ir V_i'r' + V_ir' V_i'r`.
pub fn closed_fisher_inv(v: &[f64], p: usize, a: (usize, usize), b: (usize, usize)) -> f64 {
    let (i, i2) = a;
    let (r, r2) = b;
    v[i * p + r] * v[i2 * p + r2] + v[i * p + r2] * v[i2 * p + r]
}

/// Expectation of the pure third derivative `E[l_(ab)(cd)(ef)]` via the
/// cycle sum: twice the eight orientation terms over the single 3-cycle,
/// divided by `2^{#diagonal pairs}`.
pub fn closed_third(w: &[f64], p: usize, prs: [(usize, usize); 3]) -> f64 {
    let ndiag = prs.iter().filter(|&&(a, b)| a == b).count();
    let mut sum = 0.0;
    for bits in 0..8u32 {
        let ends: Vec<(usize, usize)> = prs
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| if bits & (1 << k) == 0 { (a, b) } else { (b, a) })
            .collect();
        // cycle 0 -> 1 -> 2 -> 0 through "right" endpoints to "left" endpoints
        sum += w[ends[0].1 * p + ends[1].0]
            * w[ends[1].1 * p + ends[2].0]
            * w[ends[2].1 * p + ends[0].0];
    }
    2.0 * sum / (1u32 << ndiag) as f64
}

/// Expectation of the pure fourth derivative `E[l_(ab)(cd)(ef)(gh)]`: the
/// 48-term enumeration (3 Hamiltonian cycle structures x 16 endpoint
/// orientations, every W factor bridging two distinct index pairs so each
/// W-pair touches at least three of the four), scaled by -3 and the
/// diagonal-pair halving.
pub fn closed_fourth(w: &[f64], p: usize, prs: [(usize, usize); 4]) -> f64 {
    let ndiag = prs.iter().filter(|&&(a, b)| a == b).count();
    let cycles: [[usize; 4]; 3] = [[0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3]];
    let mut sum = 0.0;
    for cyc in &cycles {
        for bits in 0..16u32 {
            let ends: Vec<(usize, usize)> = prs
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| if bits & (1 << k) == 0 { (a, b) } else { (b, a) })
                .collect();
            let mut term = 1.0;
            for j in 0..4 {
                let cur = cyc[j];
                let nxt = cyc[(j + 1) % 4];
                term *= w[ends[cur].1 * p + ends[nxt].0];
            }
            sum += term;
        }
    }
    -3.0 * sum / (1u32 << ndiag) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_v(p: usize) -> Vec<f64> {
        match p {
            1 => vec![1.3],
            2 => vec![1.3, 0.4, 0.4, 0.9],
            _ => panic!(),
        }
    }

    #[test]
    fn univariate_scale_matches_hand_formulas() {
        // V = v scalar: l_v = x^2/(2v^2) - 1/(2v), etc.
        let v = 1.7;
        let eval = WordEval::new(&[v], 1).unwrap();
        let (c, a) = eval.form(&[0]);
        assert_relative_eq!(c, -0.5 / v, epsilon = 1e-12);
        assert_relative_eq!(a[0], 0.5 / (v * v), epsilon = 1e-12);
        // Fisher 1/(2v^2), third derivative expectation 2/v^3, fourth -9/v^4.
        assert_relative_eq!(eval.expect(&[vec![0], vec![0]]), 0.5 / (v * v), epsilon = 1e-12);
        assert_relative_eq!(eval.expect(&[vec![0, 0, 0]]), 2.0 / v.powi(3), epsilon = 1e-12);
        assert_relative_eq!(eval.expect(&[vec![0, 0, 0, 0]]), -9.0 / v.powi(4), epsilon = 1e-12);
    }

    #[test]
    fn closed_forms_agree_with_the_word_engine() {
        let p = 2;
        let vflat = test_v(p);
        let theta = flatten(&vflat, p);
        let eval = WordEval::new(&theta, p).unwrap();
        let w = spd_inverse(&vflat, p).unwrap();
        let prs = pairs(p);
        let d = prs.len();
        for a in 0..d {
            for b in 0..d {
                let fisher = eval.expect(&[vec![a], vec![b]]);
                assert_relative_eq!(
                    fisher,
                    closed_fisher(&w, p, prs[a], prs[b]),
                    epsilon = 1e-11
                );
                // second-derivative expectation is minus the Fisher entry
                assert_relative_eq!(
                    eval.expect(&[vec![a, b]]),
                    -fisher,
                    epsilon = 1e-11
                );
                for c in 0..d {
                    assert_relative_eq!(
                        eval.expect(&[vec![a, b, c]]),
                        closed_third(&w, p, [prs[a], prs[b], prs[c]]),
                        epsilon = 1e-10
                    );
                    for e in 0..d {
                        assert_relative_eq!(
                            eval.expect(&[vec![a, b, c, e]]),
                            closed_fourth(&w, p, [prs[a], prs[b], prs[c], prs[e]]),
                            epsilon = 1e-9
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn closed_inverse_really_inverts_the_fisher_matrix() {
        let p = 2;
        let vflat = test_v(p);
        let w = spd_inverse(&vflat, p).unwrap();
        let prs = pairs(p);
        let d = prs.len();
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += closed_fisher(&w, p, prs[i], prs[k])
                        * closed_fisher_inv(&vflat, p, prs[k], prs[j]);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(s, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn wick_moments_match_small_closed_forms() {
        let p = 2;
        let vflat = test_v(p);
        let theta = flatten(&vflat, p);
        let eval = WordEval::new(&theta, p).unwrap();
        // E[(x^T A x)^2] = tr(AV)^2 + 2 tr(AVAV) for symmetric A
        let a = vec![0.7, 0.2, 0.2, -0.3];
        let av = mat_mul(&a, &vflat, p);
        let t1 = mat_trace(&av, p);
        let t2 = mat_trace(&mat_mul(&av, &av, p), p);
        assert_relative_eq!(eval.wick(&[&a, &a]), t1 * t1 + 2.0 * t2, epsilon = 1e-12);
    }
}
