//! Per-observation expectation tensors of log-likelihood derivative
//! products, indexed by derivative partitions.
//!
//! Notation: a partition groups derivative indices, e.g. `L_{ij,k}` is
//! `E[l_ij * l_k]`. The eleven partitions stored here are everything the
//! second-order risk expansion consumes:
//!
//! | field   | partition      | meaning                         |
//! |---------|----------------|---------------------------------|
//! | `t1`    | `L_i`          | `E[l_i]`                        |
//! | `t11`   | `L_{i,j}`      | `E[l_i l_j]` (Fisher)           |
//! | `t2`    | `L_{ij}`       | `E[l_ij]`                       |
//! | `t3`    | `L_{ijk}`      | `E[l_ijk]`                      |
//! | `t21`   | `L_{ij,k}`     | `E[l_ij l_k]`                   |
//! | `t111`  | `L_{i,j,k}`    | `E[l_i l_j l_k]`                |
//! | `t4`    | `L_{ijkl}`     | `E[l_ijkl]`                     |
//! | `t31`   | `L_{ijk,l}`    | `E[l_ijk l_l]`                  |
//! | `t22`   | `L_{ij,kl}`    | `E[l_ij l_kl]`                  |
//! | `t211`  | `L_{ij,k,l}`   | `E[l_ij l_k l_l]`               |
//! | `t1111` | `L_{i,j,k,l}`  | `E[l_i l_j l_k l_l]`            |
//!
//! All tensors are normalized per observation (n = 1); the bracketed risk
//! constant is the same for every n, so per-observation tensors are all the
//! downstream formulas ever need.

use crate::error::{Error, Result};
use crate::exec;
use crate::family::{Family, FamilyKind};
use crate::family::mvnscale::WordEval;
use crate::numerics::spd_inverse;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

/// Dense tensor over `d` coordinates with entries addressed row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub d: usize,
    pub rank: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(d: usize, rank: usize) -> Tensor {
        Tensor {
            d,
            rank,
            data: vec![0.0; d.pow(rank as u32)],
        }
    }

    #[inline]
    pub fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.d + i)
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: f64) {
        let f = self.flat(idx);
        self.data[f] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

/// How the tensors were produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CumulantMethod {
    Analytic,
    MonteCarlo { reps: u64, seed: u64 },
}

/// The partition-indexed tensor bundle at one parameter point.
#[derive(Clone, Debug)]
pub struct CumulantTensors {
    pub d: usize,
    pub t1: Tensor,
    pub t11: Tensor,
    pub t2: Tensor,
    pub t3: Tensor,
    pub t21: Tensor,
    pub t111: Tensor,
    pub t4: Tensor,
    pub t31: Tensor,
    pub t22: Tensor,
    pub t211: Tensor,
    pub t1111: Tensor,
    /// Inverse of the Fisher information `t11`, by symmetric positive
    /// definite solve.
    pub fisher_inv: Tensor,
    /// Standard errors per entry (Monte Carlo method only), same layout.
    pub se: Option<Box<CumulantTensorsSe>>,
}

#[derive(Clone, Debug)]
pub struct CumulantTensorsSe {
    pub t1: Tensor,
    pub t11: Tensor,
    pub t2: Tensor,
    pub t3: Tensor,
    pub t21: Tensor,
    pub t111: Tensor,
    pub t4: Tensor,
    pub t31: Tensor,
    pub t22: Tensor,
    pub t211: Tensor,
    pub t1111: Tensor,
}

impl CumulantTensors {
    pub fn fisher(&self) -> &Tensor {
        &self.t11
    }

    /// Pairs of (partition name, tensor, standard errors) for sweep-style
    /// comparisons.
    pub fn named(&self) -> Vec<(&'static str, &Tensor, Option<&Tensor>)> {
        let se = self.se.as_deref();
        vec![
            ("L_i", &self.t1, se.map(|s| &s.t1)),
            ("L_{i,j}", &self.t11, se.map(|s| &s.t11)),
            ("L_{ij}", &self.t2, se.map(|s| &s.t2)),
            ("L_{ijk}", &self.t3, se.map(|s| &s.t3)),
            ("L_{ij,k}", &self.t21, se.map(|s| &s.t21)),
            ("L_{i,j,k}", &self.t111, se.map(|s| &s.t111)),
            ("L_{ijkl}", &self.t4, se.map(|s| &s.t4)),
            ("L_{ijk,l}", &self.t31, se.map(|s| &s.t31)),
            ("L_{ij,kl}", &self.t22, se.map(|s| &s.t22)),
            ("L_{ij,k,l}", &self.t211, se.map(|s| &s.t211)),
            ("L_{i,j,k,l}", &self.t1111, se.map(|s| &s.t1111)),
        ]
    }
}

/// Compute the tensor bundle at `theta`.
pub fn cumulants(family: &Family, theta: &[f64], method: CumulantMethod) -> Result<CumulantTensors> {
    family.check_theta(theta)?;
    let mut out = match method {
        CumulantMethod::Analytic => analytic_tensors(family, theta)?,
        CumulantMethod::MonteCarlo { reps, seed } => mc_tensors(family, theta, reps, seed)?,
    };
    let d = out.d;
    let inv = spd_inverse(&out.t11.data, d)
        .ok_or_else(|| Error::SingularFisher(theta.to_vec()))?;
    out.fisher_inv = Tensor { d, rank: 2, data: inv };
    Ok(out)
}

// ---------------------------------------------------------------------------
// Analytic evaluation
// ---------------------------------------------------------------------------

enum Evaluator<'a> {
    /// 1-D discrete families via exact truncated series summation.
    Series { fam: &'a Family, theta: &'a [f64] },
    /// Scalar families whose derivatives are degree-<=2 polynomials in
    /// z = x - mu: normal-location and the (mu, sigma^2) family.
    ZPolys { polys: ZPolyTable, v: f64 },
    /// Multivariate normal location with known precision.
    MvnLoc { prec: Vec<f64>, p: usize },
    /// Multivariate normal scale via the word-derivative engine.
    Word(WordEval),
}

/// Derivative polynomials per multi-index for the z-polynomial families.
struct ZPolyTable {
    dim: usize,
    sigma2: f64,
    sigma_known: Option<f64>,
}

impl ZPolyTable {
    fn poly(&self, group: &[usize]) -> crate::family::gaussian_zpoly::ZPoly {
        use crate::family::gaussian_zpoly as gz;
        match self.sigma_known {
            Some(s) => {
                // normal-location: l' = z/s^2, l'' = -1/s^2, higher zero
                match group.len() {
                    1 => gz::ZPoly([0.0, 1.0 / (s * s), 0.0]),
                    2 => gz::ZPoly([-1.0 / (s * s), 0.0, 0.0]),
                    _ => gz::ZPoly([0.0, 0.0, 0.0]),
                }
            }
            None => {
                let a = group.iter().filter(|&&i| i == 0).count();
                let b = group.len() - a;
                debug_assert_eq!(self.dim, 2);
                gz::normal_ls_deriv_poly(self.sigma2, a, b)
            }
        }
    }
}

impl Evaluator<'_> {
    fn expect(&self, groups: &[Vec<usize>]) -> f64 {
        match self {
            Evaluator::Series { fam, theta } => {
                let orders: Vec<usize> = groups.iter().map(|g| g.len()).collect();
                crate::family::series_expect_pub(fam, theta, |x| {
                    orders
                        .iter()
                        .map(|&k| fam.log_density_deriv(&[x], theta, &[k]))
                        .product()
                })
            }
            Evaluator::ZPolys { polys, v } => {
                use crate::family::gaussian_zpoly as gz;
                let ps: Vec<gz::ZPoly> = groups.iter().map(|g| polys.poly(g)).collect();
                gz::zpoly_product_expect(&ps, *v)
            }
            Evaluator::MvnLoc { prec, p } => {
                let mut const_part = 1.0;
                let mut singles: Vec<usize> = Vec::new();
                for g in groups {
                    match g.len() {
                        1 => singles.push(g[0]),
                        2 => const_part *= -prec[g[0] * p + g[1]],
                        _ => return 0.0,
                    }
                }
                // E over products of the linear forms (W z)_i, Cov = W.
                let w = |i: usize, j: usize| prec[i * p + j];
                let singles_part = match singles.len() {
                    0 => 1.0,
                    2 => w(singles[0], singles[1]),
                    4 => {
                        let (i, j, k, l) = (singles[0], singles[1], singles[2], singles[3]);
                        w(i, j) * w(k, l) + w(i, k) * w(j, l) + w(i, l) * w(j, k)
                    }
                    _ => 0.0,
                };
                const_part * singles_part
            }
            Evaluator::Word(we) => we.expect(groups),
        }
    }
}

fn make_evaluator<'a>(family: &'a Family, theta: &'a [f64]) -> Result<Evaluator<'a>> {
    Ok(match family.kind() {
        FamilyKind::Poisson
        | FamilyKind::PoissonCanonical
        | FamilyKind::BernoulliCanonical
        | FamilyKind::NegBinomialCanonical { .. } => Evaluator::Series { fam: family, theta },
        FamilyKind::NormalLocation { sigma } => Evaluator::ZPolys {
            polys: ZPolyTable { dim: 1, sigma2: sigma * sigma, sigma_known: Some(*sigma) },
            v: sigma * sigma,
        },
        FamilyKind::NormalLocationScale => Evaluator::ZPolys {
            polys: ZPolyTable { dim: 2, sigma2: theta[1], sigma_known: None },
            v: theta[1],
        },
        FamilyKind::MvnLocation { dim, cov } => {
            let prec = match cov {
                None => {
                    let mut id = vec![0.0; dim * dim];
                    for i in 0..*dim {
                        id[i * dim + i] = 1.0;
                    }
                    id
                }
                Some(c) => spd_inverse(c, *dim)
                    .ok_or_else(|| Error::SingularFisher(theta.to_vec()))?,
            };
            Evaluator::MvnLoc { prec, p: *dim }
        }
        FamilyKind::MvnScale { dim } => Evaluator::Word(WordEval::new(theta, *dim)?),
    })
}

/// The eleven partitions with their group sizes and tensor rank.
const PARTITIONS: [(&str, &[usize]); 11] = [
    ("t1", &[1]),
    ("t11", &[1, 1]),
    ("t2", &[2]),
    ("t3", &[3]),
    ("t21", &[2, 1]),
    ("t111", &[1, 1, 1]),
    ("t4", &[4]),
    ("t31", &[3, 1]),
    ("t22", &[2, 2]),
    ("t211", &[2, 1, 1]),
    ("t1111", &[1, 1, 1, 1]),
];

/// Canonical key of an index tuple under within-group and equal-group
/// exchange symmetry; equivalent tuples share one expectation evaluation.
fn canonical_key(group_sizes: &[usize], idx: &[usize]) -> Vec<usize> {
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(group_sizes.len());
    let mut off = 0;
    for &gs in group_sizes {
        let mut g: Vec<usize> = idx[off..off + gs].to_vec();
        g.sort_unstable();
        groups.push(g);
        off += gs;
    }
    // sort groups of equal size among themselves
    groups.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    groups.into_iter().flatten().collect()
}

fn analytic_tensors(family: &Family, theta: &[f64]) -> Result<CumulantTensors> {
    let d = family.param_dim();
    let eval = make_evaluator(family, theta)?;
    let mut tensors: Vec<Tensor> = PARTITIONS
        .iter()
        .map(|(_, gs)| Tensor::zeros(d, gs.iter().sum()))
        .collect();
    let mut cache: std::collections::HashMap<(usize, Vec<usize>), f64> =
        std::collections::HashMap::new();
    for (pi, (_, group_sizes)) in PARTITIONS.iter().enumerate() {
        let rank: usize = group_sizes.iter().sum();
        let count = d.pow(rank as u32);
        for flat in 0..count {
            let mut idx = vec![0usize; rank];
            let mut rem = flat;
            for slot in (0..rank).rev() {
                idx[slot] = rem % d;
                rem /= d;
            }
            let key = canonical_key(group_sizes, &idx);
            let v = *cache.entry((pi, key)).or_insert_with(|| {
                let mut off = 0;
                let groups: Vec<Vec<usize>> = group_sizes
                    .iter()
                    .map(|&gs| {
                        let g = idx[off..off + gs].to_vec();
                        off += gs;
                        g
                    })
                    .collect();
                eval.expect(&groups)
            });
            tensors[pi].data[flat] = v;
        }
    }
    let mut it = tensors.into_iter();
    Ok(CumulantTensors {
        d,
        t1: it.next().unwrap(),
        t11: it.next().unwrap(),
        t2: it.next().unwrap(),
        t3: it.next().unwrap(),
        t21: it.next().unwrap(),
        t111: it.next().unwrap(),
        t4: it.next().unwrap(),
        t31: it.next().unwrap(),
        t22: it.next().unwrap(),
        t211: it.next().unwrap(),
        t1111: it.next().unwrap(),
        fisher_inv: Tensor::zeros(d, 2),
        se: None,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo evaluation
// ---------------------------------------------------------------------------

/// All sorted index multisets of sizes 1..=4 over d coordinates.
fn all_multisets(d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in 1..=4usize {
        let mut cur = vec![0usize; size];
        'tuples: loop {
            out.push(cur.clone());
            let mut k = size;
            while k > 0 {
                k -= 1;
                if cur[k] + 1 < d {
                    let v = cur[k] + 1;
                    for slot in cur.iter_mut().skip(k) {
                        *slot = v;
                    }
                    continue 'tuples;
                }
            }
            break;
        }
    }
    out
}

const MC_BATCH: usize = 8192;

/// Per-draw derivative evaluation. The scale family precomputes its affine
/// forms `l = c + x' A x` once per theta; everything else goes through the
/// family's derivative dispatch directly.
enum DerivProvider<'a> {
    Generic(&'a Family, &'a [f64]),
    MvnForms { p: usize, forms: Vec<(f64, Vec<f64>)> },
}

impl<'a> DerivProvider<'a> {
    fn new(family: &'a Family, theta: &'a [f64], multisets: &[Vec<usize>]) -> Result<Self> {
        match family.kind() {
            FamilyKind::MvnScale { dim } => {
                let eval = WordEval::new(theta, *dim)?;
                let forms = multisets.iter().map(|m| eval.form(m)).collect();
                Ok(DerivProvider::MvnForms { p: *dim, forms })
            }
            _ => Ok(DerivProvider::Generic(family, theta)),
        }
    }

    fn eval_all(&self, x: &[f64], multisets: &[Vec<usize>], orders: &mut [usize], out: &mut [f64]) {
        match self {
            DerivProvider::Generic(family, theta) => {
                for (mi, ms) in multisets.iter().enumerate() {
                    orders.iter_mut().for_each(|o| *o = 0);
                    for &c in ms {
                        orders[c] += 1;
                    }
                    out[mi] = family.log_density_deriv(x, theta, orders);
                }
            }
            DerivProvider::MvnForms { p, forms } => {
                let p = *p;
                for (mi, (c, a)) in forms.iter().enumerate() {
                    let mut q = 0.0;
                    for i in 0..p {
                        for j in 0..p {
                            q += x[i] * a[i * p + j] * x[j];
                        }
                    }
                    out[mi] = c + q;
                }
            }
        }
    }
}

struct McPlan {
    multisets: Vec<Vec<usize>>,
    /// For each partition: (rank, list of (flat index, multiset positions)).
    jobs: Vec<(usize, Vec<(usize, Vec<usize>)>)>,
    total_entries: usize,
}

fn build_mc_plan(d: usize) -> McPlan {
    let multisets = all_multisets(d);
    let find = |key: &[usize]| -> usize {
        multisets
            .iter()
            .position(|m| m.as_slice() == key)
            .expect("multiset enumerated")
    };
    let mut jobs = Vec::new();
    let mut total_entries = 0;
    for (_, group_sizes) in PARTITIONS.iter() {
        let rank: usize = group_sizes.iter().sum();
        let count = d.pow(rank as u32);
        let mut list = Vec::with_capacity(count);
        for flat in 0..count {
            let mut idx = vec![0usize; rank];
            let mut rem = flat;
            for slot in (0..rank).rev() {
                idx[slot] = rem % d;
                rem /= d;
            }
            let mut off = 0;
            let mut poss = Vec::with_capacity(group_sizes.len());
            for &gs in group_sizes.iter() {
                let mut g = idx[off..off + gs].to_vec();
                g.sort_unstable();
                poss.push(find(&g));
                off += gs;
            }
            list.push((flat, poss));
        }
        total_entries += count;
        jobs.push((rank, list));
    }
    McPlan { multisets, jobs, total_entries }
}

fn mc_tensors(family: &Family, theta: &[f64], reps: u64, seed: u64) -> Result<CumulantTensors> {
    if reps < 100 {
        return Err(Error::InvalidArgument(
            "Monte Carlo cumulants need reps >= 100".into(),
        ));
    }
    let d = family.param_dim();
    let plan = build_mc_plan(d);
    let nbatch = ((reps as usize) + MC_BATCH - 1) / MC_BATCH;
    let obs_dim = family.obs_dim();
    let provider = DerivProvider::new(family, theta, &plan.multisets)?;

    // Per-batch accumulation; batches combine in index order.
    let accs: Vec<(Vec<f64>, Vec<f64>)> = exec::map_indexed(nbatch, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let lo = b * MC_BATCH;
        let hi = ((b + 1) * MC_BATCH).min(reps as usize);
        let mut sums = vec![0.0; plan.total_entries];
        let mut sqs = vec![0.0; plan.total_entries];
        let mut x = vec![0.0; obs_dim];
        let mut dvals = vec![0.0; plan.multisets.len()];
        let mut orders = vec![0usize; d];
        for _ in lo..hi {
            family.sample_into(theta, &mut rng, &mut x);
            provider.eval_all(&x, &plan.multisets, &mut orders, &mut dvals);
            let mut base = 0usize;
            for (_, list) in plan.jobs.iter() {
                for (flat, poss) in list.iter() {
                    let mut prod = 1.0;
                    for &pp in poss {
                        prod *= dvals[pp];
                    }
                    sums[base + flat] += prod;
                    sqs[base + flat] += prod * prod;
                }
                base += list.len();
            }
        }
        (sums, sqs)
    });

    let mut sums = vec![0.0; plan.total_entries];
    let mut sqs = vec![0.0; plan.total_entries];
    for (s, q) in accs {
        for i in 0..plan.total_entries {
            sums[i] += s[i];
            sqs[i] += q[i];
        }
    }
    let n = reps as f64;
    let mut tensors: Vec<Tensor> = Vec::with_capacity(11);
    let mut ses: Vec<Tensor> = Vec::with_capacity(11);
    let mut base = 0usize;
    for ((_, group_sizes), (_, list)) in PARTITIONS.iter().zip(plan.jobs.iter()) {
        let rank: usize = group_sizes.iter().sum();
        let mut t = Tensor::zeros(d, rank);
        let mut s = Tensor::zeros(d, rank);
        for (flat, _) in list.iter() {
            let mean = sums[base + flat] / n;
            let var = (sqs[base + flat] / n - mean * mean).max(0.0);
            t.data[*flat] = mean;
            s.data[*flat] = (var / n).sqrt();
        }
        base += list.len();
        tensors.push(t);
        ses.push(s);
    }
    let mut it = tensors.into_iter();
    let mut is = ses.into_iter();
    Ok(CumulantTensors {
        d,
        t1: it.next().unwrap(),
        t11: it.next().unwrap(),
        t2: it.next().unwrap(),
        t3: it.next().unwrap(),
        t21: it.next().unwrap(),
        t111: it.next().unwrap(),
        t4: it.next().unwrap(),
        t31: it.next().unwrap(),
        t22: it.next().unwrap(),
        t211: it.next().unwrap(),
        t1111: it.next().unwrap(),
        fisher_inv: Tensor::zeros(d, 2),
        se: Some(Box::new(CumulantTensorsSe {
            t1: is.next().unwrap(),
            t11: is.next().unwrap(),
            t2: is.next().unwrap(),
            t3: is.next().unwrap(),
            t21: is.next().unwrap(),
            t111: is.next().unwrap(),
            t4: is.next().unwrap(),
            t31: is.next().unwrap(),
            t22: is.next().unwrap(),
            t211: is.next().unwrap(),
            t1111: is.next().unwrap(),
        })),
    })
}

// ---------------------------------------------------------------------------
// Likelihood identities
// ---------------------------------------------------------------------------

/// Residual report of the four likelihood identities obtained by
/// differentiating the total-mass integral up to four times.
#[derive(Clone, Debug)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct IdentityRow {
    pub order: usize,
    pub max_abs_residual: f64,
    /// max |residual| / se over index tuples (Monte Carlo mode only).
    pub max_se_ratio: Option<f64>,
    pub pass: bool,
}

const ANALYTIC_IDENTITY_TOL: f64 = 1e-8;
const MC_SE_FACTOR: f64 = 4.0;

/// Check the likelihood identities at `theta`.
///
/// Analytic mode evaluates the identity combinations from the analytic
/// tensors and requires residuals below 1e-8. Monte Carlo mode accumulates
/// the per-draw combined expressions so every residual carries its own
/// standard error and is flagged beyond four standard errors.
pub fn identities_check(
    family: &Family,
    theta: &[f64],
    method: CumulantMethod,
) -> Result<IdentityReport> {
    match method {
        CumulantMethod::Analytic => {
            let ct = cumulants(family, theta, method)?;
            let d = ct.d;
            let mut rows = Vec::with_capacity(4);
            let r1 = ct.t1.max_abs();
            rows.push(IdentityRow { order: 1, max_abs_residual: r1, max_se_ratio: None, pass: r1 < ANALYTIC_IDENTITY_TOL });
            let mut r2 = 0.0f64;
            for i in 0..d {
                for j in 0..d {
                    r2 = r2.max((ct.t2.get(&[i, j]) + ct.t11.get(&[i, j])).abs());
                }
            }
            rows.push(IdentityRow { order: 2, max_abs_residual: r2, max_se_ratio: None, pass: r2 < ANALYTIC_IDENTITY_TOL });
            let mut r3 = 0.0f64;
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let v = ct.t3.get(&[i, j, k])
                            + ct.t21.get(&[i, j, k])
                            + ct.t21.get(&[i, k, j])
                            + ct.t21.get(&[j, k, i])
                            + ct.t111.get(&[i, j, k]);
                        r3 = r3.max(v.abs());
                    }
                }
            }
            rows.push(IdentityRow { order: 3, max_abs_residual: r3, max_se_ratio: None, pass: r3 < ANALYTIC_IDENTITY_TOL });
            let mut r4 = 0.0f64;
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            let v = identity4_combination(&ct, i, j, k, l);
                            r4 = r4.max(v.abs());
                        }
                    }
                }
            }
            rows.push(IdentityRow { order: 4, max_abs_residual: r4, max_se_ratio: None, pass: r4 < ANALYTIC_IDENTITY_TOL });
            let passed = rows.iter().all(|r| r.pass);
            Ok(IdentityReport { rows, passed })
        }
        CumulantMethod::MonteCarlo { reps, seed } => {
            identities_check_mc(family, theta, reps, seed)
        }
    }
}

fn identity4_combination(ct: &CumulantTensors, i: usize, j: usize, k: usize, l: usize) -> f64 {
    ct.t4.get(&[i, j, k, l])
        + ct.t31.get(&[i, j, k, l])
        + ct.t31.get(&[i, j, l, k])
        + ct.t31.get(&[i, k, l, j])
        + ct.t31.get(&[j, k, l, i])
        + ct.t22.get(&[i, j, k, l])
        + ct.t22.get(&[i, k, j, l])
        + ct.t22.get(&[i, l, j, k])
        + ct.t211.get(&[i, j, k, l])
        + ct.t211.get(&[i, k, j, l])
        + ct.t211.get(&[i, l, j, k])
        + ct.t211.get(&[j, k, i, l])
        + ct.t211.get(&[j, l, i, k])
        + ct.t211.get(&[k, l, i, j])
        + ct.t1111.get(&[i, j, k, l])
}

fn identities_check_mc(family: &Family, theta: &[f64], reps: u64, seed: u64) -> Result<IdentityReport> {
    family.check_theta(theta)?;
    let d = family.param_dim();
    let obs_dim = family.obs_dim();
    let multisets = all_multisets(d);
    let ms_pos = |key: &mut Vec<usize>| -> usize {
        key.sort_unstable();
        multisets
            .iter()
            .position(|m| m == key)
            .expect("multiset enumerated")
    };
    // Precompile each identity combination as a sum of products of cached
    // multiset derivative values.
    let mut terms_per_tuple: Vec<(usize, Vec<Vec<Vec<usize>>>)> = Vec::new();
    let mut tuple_counts = [0usize; 4];
    for r in 1..=4usize {
        let count = d.pow(r as u32);
        tuple_counts[r - 1] = count;
        for flat in 0..count {
            let mut idx = vec![0usize; r];
            let mut rem = flat;
            for slot in (0..r).rev() {
                idx[slot] = rem % d;
                rem /= d;
            }
            let groupings: Vec<Vec<Vec<usize>>> = identity_groupings(&idx);
            let compiled: Vec<Vec<usize>> = groupings
                .into_iter()
                .map(|term| {
                    term.into_iter()
                        .map(|mut g| ms_pos(&mut g))
                        .collect::<Vec<usize>>()
                })
                .collect();
            terms_per_tuple.push((r, vec![compiled]));
        }
    }
    let total = terms_per_tuple.len();
    let nbatch = ((reps as usize) + MC_BATCH - 1) / MC_BATCH;
    let provider = DerivProvider::new(family, theta, &multisets)?;

    let accs: Vec<(Vec<f64>, Vec<f64>)> = exec::map_indexed(nbatch, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let lo = b * MC_BATCH;
        let hi = ((b + 1) * MC_BATCH).min(reps as usize);
        let mut sums = vec![0.0; total];
        let mut sqs = vec![0.0; total];
        let mut x = vec![0.0; obs_dim];
        let mut dvals = vec![0.0; multisets.len()];
        let mut orders = vec![0usize; d];
        for _ in lo..hi {
            family.sample_into(theta, &mut rng, &mut x);
            provider.eval_all(&x, &multisets, &mut orders, &mut dvals);
            for (pos, (_, compiled)) in terms_per_tuple.iter().enumerate() {
                let mut v = 0.0;
                for term in &compiled[0] {
                    let mut prod = 1.0;
                    for &mp in term {
                        prod *= dvals[mp];
                    }
                    v += prod;
                }
                sums[pos] += v;
                sqs[pos] += v * v;
            }
        }
        (sums, sqs)
    });

    let mut sums = vec![0.0; total];
    let mut sqs = vec![0.0; total];
    for (s, q) in accs {
        for i in 0..total {
            sums[i] += s[i];
            sqs[i] += q[i];
        }
    }
    let n = reps as f64;
    let mut rows = Vec::with_capacity(4);
    let mut pos = 0usize;
    for (order, &count) in tuple_counts.iter().enumerate() {
        let mut max_abs: f64 = 0.0;
        let mut max_ratio: f64 = 0.0;
        for _ in 0..count {
            let mean = sums[pos] / n;
            let var = (sqs[pos] / n - mean * mean).max(0.0);
            let se = (var / n).sqrt();
            max_abs = max_abs.max(mean.abs());
            let ratio = if se > 0.0 {
                mean.abs() / se
            } else if mean.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            max_ratio = max_ratio.max(ratio);
            pos += 1;
        }
        rows.push(IdentityRow {
            order: order + 1,
            max_abs_residual: max_abs,
            max_se_ratio: Some(max_ratio),
            pass: max_ratio < MC_SE_FACTOR,
        });
    }
    let passed = rows.iter().all(|r| r.pass);
    Ok(IdentityReport { rows, passed })
}

/// The grouping expansion behind the identity of each order: summing the
/// expectations of these per-draw products over all listed partitions of
/// the index tuple gives zero.
fn identity_groupings(idx: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let g = |slots: &[&[usize]]| -> Vec<Vec<usize>> {
        slots
            .iter()
            .map(|s| s.iter().map(|&slot| idx[slot]).collect())
            .collect()
    };
    match idx.len() {
        1 => vec![g(&[&[0]])],
        2 => vec![g(&[&[0, 1]]), g(&[&[0], &[1]])],
        3 => vec![
            g(&[&[0, 1, 2]]),
            g(&[&[0, 1], &[2]]),
            g(&[&[0, 2], &[1]]),
            g(&[&[1, 2], &[0]]),
            g(&[&[0], &[1], &[2]]),
        ],
        4 => vec![
            g(&[&[0, 1, 2, 3]]),
            g(&[&[0, 1, 2], &[3]]),
            g(&[&[0, 1, 3], &[2]]),
            g(&[&[0, 2, 3], &[1]]),
            g(&[&[1, 2, 3], &[0]]),
            g(&[&[0, 1], &[2, 3]]),
            g(&[&[0, 2], &[1, 3]]),
            g(&[&[0, 3], &[1, 2]]),
            g(&[&[0, 1], &[2], &[3]]),
            g(&[&[0, 2], &[1], &[3]]),
            g(&[&[0, 3], &[1], &[2]]),
            g(&[&[1, 2], &[0], &[3]]),
            g(&[&[1, 3], &[0], &[2]]),
            g(&[&[2, 3], &[0], &[1]]),
            g(&[&[0], &[1], &[2], &[3]]),
        ],
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_cumulants_at_unit_mean() {
        let fam = Family::poisson();
        let ct = cumulants(&fam, &[1.0], CumulantMethod::Analytic).unwrap();
        assert_relative_eq!(ct.t11.get(&[0, 0]), 1.0, epsilon = 1e-10);
        assert_relative_eq!(ct.t111.get(&[0, 0, 0]), 1.0, epsilon = 1e-10);
        assert_relative_eq!(ct.t21.get(&[0, 0, 0]), -1.0, epsilon = 1e-10);
        assert_relative_eq!(ct.fisher_inv.get(&[0, 0]), 1.0, epsilon = 1e-10);
        // A5 order-2 identity holds exactly: L_2 + L_{1,1} = -1 + 1 = 0.
        assert_relative_eq!(
            ct.t2.get(&[0, 0]) + ct.t11.get(&[0, 0]),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bernoulli_fisher_is_a_quarter_at_the_origin() {
        // Oracle: enumeration over x in {0, 1} of (x - 1/2)^2 = 1/4.
        let fam = Family::bernoulli_canonical();
        let ct = cumulants(&fam, &[0.0], CumulantMethod::Analytic).unwrap();
        assert_relative_eq!(ct.t11.get(&[0, 0]), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn normal_location_odd_tensors_vanish() {
        let fam = Family::normal_location(1.0).unwrap();
        for mu in [-2.0, 0.0, 5.0] {
            let ct = cumulants(&fam, &[mu], CumulantMethod::Analytic).unwrap();
            assert_relative_eq!(ct.t3.get(&[0, 0, 0]), 0.0, epsilon = 1e-12);
            assert_relative_eq!(ct.t111.get(&[0, 0, 0]), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn location_family_tensors_do_not_depend_on_mu() {
        for fam in [
            Family::normal_location(1.3).unwrap(),
            Family::mvn_location(2).unwrap(),
        ] {
            let d = fam.param_dim();
            let a = cumulants(&fam, &vec![0.0; d], CumulantMethod::Analytic).unwrap();
            let b = cumulants(&fam, &vec![7.0; d], CumulantMethod::Analytic).unwrap();
            for ((_, ta, _), (_, tb, _)) in a.named().iter().zip(b.named().iter()) {
                for (x, y) in ta.data.iter().zip(tb.data.iter()) {
                    assert!((x - y).abs() < 1e-10, "mu-dependence in location tensors");
                }
            }
        }
    }

    #[test]
    fn fisher_two_paths_agree() {
        // E[l_i l_j] vs -E[l_ij], computed as separate expectations.
        let cases: Vec<(Family, Vec<f64>)> = vec![
            (Family::poisson(), vec![2.3]),
            (Family::bernoulli_canonical(), vec![0.8]),
            (Family::negbinomial_canonical(3).unwrap(), vec![-1.1]),
            (Family::normal_location_scale(), vec![0.0, 1.6]),
            (Family::mvn_scale(2).unwrap(), vec![1.2, 0.3, 0.9]),
        ];
        for (fam, theta) in cases {
            let ct = cumulants(&fam, &theta, CumulantMethod::Analytic).unwrap();
            let d = ct.d;
            for i in 0..d {
                for j in 0..d {
                    assert_relative_eq!(
                        ct.t11.get(&[i, j]),
                        -ct.t2.get(&[i, j]),
                        epsilon = 1e-8,
                        max_relative = 1e-8
                    );
                }
            }
        }
    }

    #[test]
    fn analytic_identities_pass_for_all_families() {
        let cases: Vec<(Family, Vec<f64>)> = vec![
            (Family::poisson(), vec![1.0]),
            (Family::poisson_canonical(), vec![0.3]),
            (Family::bernoulli_canonical(), vec![0.7]),
            (Family::negbinomial_canonical(2).unwrap(), vec![-0.6]),
            (Family::normal_location(1.0).unwrap(), vec![0.4]),
            (Family::normal_location_scale(), vec![0.2, 1.5]),
            (Family::mvn_location(3).unwrap(), vec![0.0, 1.0, -1.0]),
            (Family::mvn_scale(2).unwrap(), vec![1.0, 0.2, 0.8]),
        ];
        for (fam, theta) in cases {
            let rep = identities_check(&fam, &theta, CumulantMethod::Analytic).unwrap();
            assert!(rep.passed, "{} identities failed: {:?}", fam.name(), rep.rows);
        }
    }

    #[test]
    fn mc_cumulants_agree_with_analytic_within_four_ses() {
        let fam = Family::poisson();
        let theta = [1.5];
        let an = cumulants(&fam, &theta, CumulantMethod::Analytic).unwrap();
        let mc = cumulants(
            &fam,
            &theta,
            CumulantMethod::MonteCarlo { reps: 200_000, seed: 9 },
        )
        .unwrap();
        for ((name, ta, _), (_, tm, tse)) in an.named().iter().zip(mc.named().iter()) {
            let se = tse.expect("MC carries standard errors");
            for i in 0..ta.data.len() {
                let diff = (ta.data[i] - tm.data[i]).abs();
                let bound = 4.0 * se.data[i] + 1e-9;
                assert!(diff <= bound, "{name}[{i}]: diff {diff} > 4 se {bound}");
            }
        }
    }

    #[test]
    fn boundary_theta_is_rejected() {
        let fam = Family::poisson();
        assert!(matches!(
            cumulants(&fam, &[5e-7], CumulantMethod::Analytic),
            Err(Error::ParamOutsideDomain(_))
        ));
    }

    #[test]
    fn singular_fisher_is_reported() {
        // A nearly-singular covariance puts V outside the checked domain or
        // fails the SPD solve; either way the Fisher pathway must refuse.
        let fam = Family::mvn_scale(2).unwrap();
        let theta = [1.0, 1.0, 1.0]; // V = [[1,1],[1,1]] singular
        let r = cumulants(&fam, &theta, CumulantMethod::Analytic);
        assert!(r.is_err());
    }

    #[test]
    fn multiset_enumeration_is_complete_and_sorted() {
        let ms = all_multisets(3);
        // C(3,1)+C(4,2)+C(5,3)+C(6,4) = 3 + 6 + 10 + 15 = 34
        assert_eq!(ms.len(), 34);
        assert!(ms.iter().all(|m| m.windows(2).all(|w| w[0] <= w[1])));
        let mut uniq = ms.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), ms.len());
    }
}
