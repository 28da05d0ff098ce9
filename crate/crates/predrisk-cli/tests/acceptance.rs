//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one PASS line (run with `--nocapture` to see them). The criteria
//! pin: the Poisson constant-risk pair, the Poisson inadmissibility and
//! minimaxity structure, the expansion-vs-oracle agreement that arbitrates
//! the coefficient transcription, first-order universality, paired
//! predictive-vs-estimative dominance, the location-scale and multivariate
//! scale optimal alphas, the dimension-three shrinkage probes, the
//! cross-family property suites, and bit-exact CLI determinism.

use approx::assert_relative_eq;
use predrisk::asymptotics::{
    alpha_solve, excess_risk_extrapolate, g_term_1d, g_term_general, minimax_probe_1d,
    RiskSource,
};
use predrisk::cumulants::{cumulants, identities_check, CumulantMethod};
use predrisk::family::SampleBatch;
use predrisk::location::{
    dominance_experiment, superharmonic_scan, uniform_gap_probe, SignSummary,
};
use predrisk::predictive::{bayes_predictive, normalization_gap, ObsDensity};
use predrisk::risk::{kl_divergence, risk_difference, risk_mc, Procedure};
use predrisk::{Error, Family, Prior};
use std::process::Command;

fn pass(k: u32, what: &str) {
    println!("ACCEPTANCE {k:02} PASS: {what}");
}

const ROOT_LO: f64 = 0.591_751_709_536_136_9; // 1 - 1/sqrt(6)
const ROOT_HI: f64 = 1.408_248_290_463_863; // 1 + 1/sqrt(6)

#[test]
fn c01_poisson_constant_risk_roots() {
    let fam = Family::poisson();
    let grid: Vec<Vec<f64>> = (0..9)
        .map(|i| vec![0.1 * 10.0f64.powf(i as f64 / 4.0)])
        .collect();
    let res = alpha_solve(&fam, &grid).unwrap();
    assert_eq!(res.constant_risk_alphas.len(), 2);
    assert_relative_eq!(res.constant_risk_alphas[0], ROOT_LO, epsilon = 1e-6);
    assert_relative_eq!(res.constant_risk_alphas[1], ROOT_HI, epsilon = 1e-6);
    // At the constant-risk alphas the parameter-dependent part of the
    // bracket vanishes identically: g_theta is exactly zero for the Poisson.
    for &alpha in &[ROOT_LO, ROOT_HI] {
        let pr = Prior::alpha(&fam, alpha).unwrap();
        for theta in [0.25, 1.0, 4.0] {
            let g = g_term_1d(&fam, &pr, &[theta]).unwrap().g_theta;
            assert!(
                g.abs() < 1e-10,
                "parameter part at alpha={alpha}, theta={theta}: {g}"
            );
        }
    }
    pass(1, "alpha_solve(poisson) returns 1 +- 1/sqrt(6); parameter part < 1e-10");
}

#[test]
fn c02_poisson_inadmissibility_and_minimax_structure() {
    let fam = Family::poisson();
    // 20-point grid: alpha = 1 dominates both constant-risk members pointwise
    let grid: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![0.05 * 10.0f64.powf(i as f64 * 0.3)])
        .collect();
    let one = Prior::alpha(&fam, 1.0).unwrap();
    for &alpha in &[ROOT_LO, ROOT_HI] {
        let root = Prior::alpha(&fam, alpha).unwrap();
        for theta in &grid {
            let g1 = g_term_1d(&fam, &one, theta).unwrap().g_theta;
            let gr = g_term_1d(&fam, &root, theta).unwrap().g_theta;
            assert!(
                g1 < gr,
                "alpha=1 fails to dominate at theta={theta:?}: {g1} vs {gr}"
            );
        }
    }
    // sup over (0, 1e6] of the alpha = 1 part approaches the constant level
    // (zero) from below: >= -1e-6 by theta = 1e6, and never above it.
    let probe: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![10.0f64.powf(-1.0 + 7.0 * i as f64 / 39.0)])
        .collect();
    let rep = minimax_probe_1d(&fam, ROOT_HI, &probe, &[1.0]).unwrap();
    let cmp = &rep.comparisons[0];
    assert!(cmp.dominates_everywhere);
    assert!(
        cmp.sup_gap_to_constant >= -1e-6,
        "sup gap {}",
        cmp.sup_gap_to_constant
    );
    assert!(cmp.sup_gap_to_constant <= 0.0);
    pass(2, "alpha=1 dominates the constant-risk pair pointwise; its sup approaches the constant level (gap in [-1e-6, 0])");
}

#[test]
fn c03_expansion_vs_oracle_agreement() {
    // The arbiter criterion: for each family/theta/prior cell the
    // extrapolated exact risks must match the analytic bracket within 5%
    // relative. One Bernoulli cell (theta = 0 under the Jeffreys-class
    // prior) has an exactly-zero target, where a relative comparison is
    // ill-posed; a 1e-3 absolute floor covers that single structural zero.
    let n_grid = [20usize, 40, 80, 160];
    let cells: Vec<(Family, Vec<f64>)> = vec![
        (Family::poisson(), vec![0.5]),
        (Family::poisson(), vec![1.0]),
        (Family::poisson(), vec![2.0]),
        (Family::bernoulli_canonical(), vec![-1.0]),
        (Family::bernoulli_canonical(), vec![0.0]),
        (Family::bernoulli_canonical(), vec![1.0]),
    ];
    let mut worst: f64 = 0.0;
    for (fam, theta) in &cells {
        for spec in ["jeffreys", "alpha:1", "alpha:1.3"] {
            let pr = Prior::from_spec(spec, fam).unwrap();
            let ext =
                excess_risk_extrapolate(fam, &pr, theta, &n_grid, RiskSource::Exact).unwrap();
            let g = g_term_1d(fam, &pr, theta).unwrap().g_theta;
            let err = (ext.g - g).abs();
            let bound = 0.05 * g.abs() + 1e-3;
            assert!(
                err <= bound,
                "{} theta={theta:?} {spec}: extrapolated {} vs analytic {g}",
                fam.name(),
                ext.g
            );
            if g.abs() > 1e-9 {
                worst = worst.max(err / g.abs());
            }
        }
    }
    pass(3, &format!(
        "extrapolated G matches g_term_1d on all 18 cells (worst relative gap {:.2}%)",
        100.0 * worst
    ));
}

#[test]
fn c04_first_order_universality() {
    let fam = Family::poisson();
    let theta = [2.0];
    let n = 200;
    let reps = 100_000;
    let first_order = 1.0 / (2.0 * n as f64);
    let mut values = Vec::new();
    for spec in ["jeffreys", "alpha:1", "alpha:1.3"] {
        let pr = Prior::from_spec(spec, &fam).unwrap();
        let r = risk_mc(&fam, &theta, n, Procedure::Predictive(&pr), reps, 41).unwrap();
        values.push((spec.to_string(), r.value));
    }
    let re = risk_mc(&fam, &theta, n, Procedure::Estimative, reps, 41).unwrap();
    values.push(("estimative".into(), re.value));
    for (label, v) in &values {
        assert!(
            (v - first_order).abs() <= 0.15 * first_order,
            "{label}: {v} vs p/2n = {first_order}"
        );
    }
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let d = (values[i].1 - values[j].1).abs();
            assert!(
                d < 0.2 * first_order,
                "{} vs {}: difference {d} not O(n^-2)-small",
                values[i].0,
                values[j].0
            );
        }
    }
    pass(4, "all four procedures sit within 15% of p/(2n) at n=200; pairwise gaps < 0.2 p/(2n)");
}

#[test]
fn c05_aitchison_dominance() {
    let cells: Vec<(Family, Vec<f64>)> = vec![
        (Family::poisson(), vec![0.5, 1.0, 2.0]),
        (Family::bernoulli_canonical(), vec![-1.0, 0.0, 1.0]),
    ];
    for (fam, thetas) in &cells {
        let pr = Prior::jeffreys(fam).unwrap();
        for &theta in thetas {
            for n in [5usize, 10] {
                let d = risk_difference(
                    fam,
                    &[theta],
                    n,
                    Procedure::Predictive(&pr),
                    Procedure::Estimative,
                    60_000,
                    13,
                )
                .unwrap();
                assert!(
                    d.delta < 0.0 && d.delta + 1.96 * d.std_error < 0.0,
                    "{} theta={theta} n={n}: delta {} +- {}",
                    fam.name(),
                    d.delta,
                    d.std_error
                );
            }
        }
    }
    pass(5, "predictive(jeffreys) beats estimative with CI clear of zero (Poisson and Bernoulli, n in {5,10}, 3-point grids)");
}

#[test]
fn c06_location_scale_alpha() {
    let fam = Family::normal_location_scale();
    let grid = vec![vec![0.0, 0.5], vec![0.0, 1.0], vec![1.0, 2.0], vec![-2.0, 4.0]];
    let res = alpha_solve(&fam, &grid).unwrap();
    assert_relative_eq!(res.argmin_alpha, 2.0 / 3.0, epsilon = 1e-8);
    let g23 = g_term_general(&fam, &Prior::alpha(&fam, 2.0 / 3.0).unwrap(), &grid[1])
        .unwrap()
        .g_theta;
    let g12 = g_term_general(&fam, &Prior::alpha(&fam, 0.5).unwrap(), &grid[1])
        .unwrap()
        .g_theta;
    assert!(g23 < g12, "g(2/3) = {g23} vs g(1/2) = {g12}");
    pass(6, "alpha_solve(normal-location-scale) argmin = 2/3 (1e-8); g(2/3) < g(1/2)");
}

#[test]
fn c07_mvn_scale() {
    let fam = Family::mvn_scale(2).unwrap();
    let grid = vec![
        vec![1.0, 0.0, 1.0],
        vec![1.5, 0.3, 0.9],
        vec![0.8, -0.2, 1.2],
    ];
    let res = alpha_solve(&fam, &grid).unwrap();
    assert_relative_eq!(res.argmin_alpha, 0.5, epsilon = 1e-6);
    assert!(res.argmin_range < 1e-6);

    // analytic tensors vs Monte Carlo at a million draws, entry-wise within
    // four standard errors, including the fourth-order pure-derivative
    // tensor built from the 48-term cycle enumeration.
    let theta = [1.0, 0.0, 1.0];
    let an = cumulants(&fam, &theta, CumulantMethod::Analytic).unwrap();
    let mc = cumulants(
        &fam,
        &theta,
        CumulantMethod::MonteCarlo { reps: 1_000_000, seed: 29 },
    )
    .unwrap();
    let mut checked = 0usize;
    for ((name, ta, _), (_, tm, tse)) in an.named().iter().zip(mc.named().iter()) {
        let se = tse.unwrap();
        for i in 0..ta.data.len() {
            let diff = (ta.data[i] - tm.data[i]).abs();
            assert!(
                diff <= 4.0 * se.data[i] + 1e-8,
                "{name}[{i}]: diff {diff} vs 4se {}",
                4.0 * se.data[i]
            );
            checked += 1;
        }
    }
    // the closed-form fourth-derivative route agrees with the engine
    use predrisk::family::mvnscale::{closed_fourth, pairs, unflatten};
    let v = unflatten(&theta, 2);
    let w = predrisk::numerics::spd_inverse(&v, 2).unwrap();
    let prs = pairs(2);
    for (i, a) in prs.iter().enumerate() {
        for (j, b) in prs.iter().enumerate() {
            for (k, c) in prs.iter().enumerate() {
                for (l, d) in prs.iter().enumerate() {
                    let closed = closed_fourth(&w, 2, [*a, *b, *c, *d]);
                    let engine = an.t4.get(&[i, j, k, l]);
                    assert_relative_eq!(closed, engine, epsilon = 1e-9, max_relative = 1e-9);
                }
            }
        }
    }
    pass(7, &format!(
        "mvn-scale p=2: argmin alpha = 1/2 (1e-6); {checked} tensor entries within 4 SE of MC at 1e6 draws; 48-term route consistent"
    ));
}

#[test]
fn c08_theorem2_probes() {
    // (a) strict superharmonicity of the shrinkage prior at p = 3
    let scan = superharmonic_scan(3, -0.25, 1000.0, 64);
    assert_eq!(scan.sign_summary, SignSummary::AllNegative);

    // (b) no uniform negative gap: sup Delta g / g within 1e-3 of zero by r = 100
    let prior = Prior::shrinkage(3, -0.25);
    let gap = uniform_gap_probe(&prior, &[1.0, 10.0, 100.0]).unwrap();
    assert!(gap.overall_sup < 0.0);
    assert!(
        gap.sup_delta_g_over_g.last().unwrap().abs() < 1e-3,
        "sup at r=100: {}",
        gap.sup_delta_g_over_g.last().unwrap()
    );

    // (c) paired dominance at n = 25, 2e5 replicates, with 95% CIs clear of
    // zero at the origin and at |mu| = 3. Magnitudes are regression-pinned
    // from the first validated run (the asymptotic theory claims only the
    // sign); the run is deterministic given the seed.
    let verdict = dominance_experiment(
        3,
        -0.25,
        &[vec![0.0, 0.0, 0.0], vec![3.0, 0.0, 0.0]],
        25,
        200_000,
        11,
    )
    .unwrap();
    for probe in &verdict.probes {
        assert!(
            probe.delta < 0.0 && probe.ci_high < 0.0,
            "probe {:?}: delta {} CI ({}, {})",
            probe.mu,
            probe.delta,
            probe.ci_low,
            probe.ci_high
        );
        assert!(probe.sign_matches_prediction);
    }
    // golden regression values (deterministic seeded run)
    assert_relative_eq!(verdict.probes[0].delta, -3.28472145092e-3, max_relative = 1e-6);
    assert_relative_eq!(verdict.probes[1].delta, -1.09000048084e-4, max_relative = 1e-6);

    // (d) the construction range is empty below dimension three
    assert!(matches!(
        dominance_experiment(1, -0.25, &[vec![0.0]], 25, 1000, 1),
        Err(Error::EmptyShrinkageRange(1))
    ));
    assert!(matches!(
        dominance_experiment(2, -0.1, &[vec![0.0, 0.0]], 25, 1000, 1),
        Err(Error::EmptyShrinkageRange(2))
    ));
    pass(8, &format!(
        "p=3 scan all-negative; gap sup -> 0 (|{:.1e}| < 1e-3); dominance deltas {:+.3e} / {:+.3e} with 95% CIs below zero; p in {{1,2}} range empty",
        gap.sup_delta_g_over_g.last().unwrap(),
        verdict.probes[0].delta,
        verdict.probes[1].delta
    ));
}

#[test]
fn c09_property_suites() {
    // A5 identity residuals for all seven built-in families, analytic and MC
    let families: Vec<(Family, Vec<f64>)> = vec![
        (Family::poisson(), vec![1.0]),
        (Family::bernoulli_canonical(), vec![0.7]),
        (Family::negbinomial_canonical(2).unwrap(), vec![-0.8]),
        (Family::normal_location(1.0).unwrap(), vec![0.3]),
        (Family::normal_location_scale(), vec![0.1, 1.3]),
        (Family::mvn_location(3).unwrap(), vec![0.0, 1.0, -0.5]),
        (Family::mvn_scale(2).unwrap(), vec![1.0, 0.2, 0.9]),
    ];
    for (fam, theta) in &families {
        let analytic = identities_check(fam, theta, CumulantMethod::Analytic).unwrap();
        assert!(analytic.passed, "{} analytic identities: {:?}", fam.name(), analytic.rows);
        for row in &analytic.rows {
            assert!(row.max_abs_residual < 1e-8);
        }
        let mc = identities_check(
            fam,
            theta,
            CumulantMethod::MonteCarlo { reps: 200_000, seed: 59 },
        )
        .unwrap();
        assert!(mc.passed, "{} MC identities: {:?}", fam.name(), mc.rows);
    }

    // KL nonnegativity and predictive normalization
    let fam = Family::poisson();
    let pr = Prior::jeffreys(&fam).unwrap();
    let pd = bayes_predictive(&fam, &pr, &SampleBatch::from_scalars(&[2.0, 0.0, 1.0])).unwrap();
    let kl = kl_divergence(&fam, &[1.5], &pd).unwrap();
    assert!(kl >= 0.0);
    assert!(normalization_gap(&pd, &fam).unwrap() < 1e-6);

    // 1-D split consistency between the general table and the scalar bracket
    let one_d: Vec<(Family, Vec<f64>)> = vec![
        (Family::poisson(), vec![0.7]),
        (Family::bernoulli_canonical(), vec![0.4]),
        (Family::negbinomial_canonical(2).unwrap(), vec![-1.1]),
    ];
    for (fam, theta) in &one_d {
        for spec in ["jeffreys", "alpha:1.2", "uniform"] {
            let prior = Prior::from_spec(spec, fam).unwrap();
            let a = g_term_1d(fam, &prior, theta).unwrap();
            let b = g_term_general(fam, &prior, theta).unwrap();
            assert!(
                (a.g_theta - b.g_theta).abs() < 1e-6
                    && (a.likelihood_term - b.likelihood_term).abs() < 1e-6
                    && (a.prior_term - b.prior_term).abs() < 1e-6,
                "{} {spec}: split mismatch",
                fam.name()
            );
        }
    }

    // reparametrization invariance of G under theta -> log theta
    let pois = Family::poisson();
    let can = Family::poisson_canonical();
    for alpha in [0.5, 1.0, 1.3] {
        let pr = Prior::alpha(&pois, alpha).unwrap();
        let prc = Prior::alpha(&can, alpha).unwrap();
        for theta in [0.5, 1.0, 2.0] {
            let a = g_term_1d(&pois, &pr, &[theta]).unwrap().g_theta;
            let b = g_term_1d(&can, &prc, &[theta.ln()]).unwrap().g_theta;
            assert!(
                (a - b).abs() < 1e-6,
                "alpha={alpha} theta={theta}: {a} vs {b}"
            );
        }
    }
    pass(9, "A5 identities (7 families, analytic < 1e-8 and MC < 4 SE); KL/normalization; 1-D split < 1e-6; reparametrization invariance < 1e-6");
}

#[test]
fn c10_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_predrisk");
    let dir = std::env::temp_dir().join(format!("predrisk-acc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f1 = dir.join("t1.csv");
    let f4 = dir.join("t4.csv");
    for (threads, path) in [("1", &f1), ("4", &f4)] {
        let st = Command::new(bin)
            .args([
                "risk",
                "--family",
                "poisson",
                "--theta",
                "1",
                "--n",
                "100",
                "--prior",
                "alpha:0.5",
                "--reps",
                "100000",
                "--seed",
                "7",
                "--threads",
                threads,
                "--out",
                path.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(st.success());
    }
    let b1 = std::fs::read(&f1).unwrap();
    let b4 = std::fs::read(&f4).unwrap();
    assert_eq!(b1, b4, "outputs differ across --threads");

    // a second MC subcommand: the dominance experiment
    let d1 = dir.join("d1.csv");
    let d2 = dir.join("d2.csv");
    for (threads, path) in [("2", &d1), ("8", &d2)] {
        let st = Command::new(bin)
            .args([
                "dominance",
                "--dim",
                "3",
                "--shrink-alpha",
                "-0.25",
                "--n",
                "25",
                "--reps",
                "4000",
                "--seed",
                "11",
                "--threads",
                threads,
                "--out",
                path.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(st.success());
    }
    assert_eq!(std::fs::read(&d1).unwrap(), std::fs::read(&d2).unwrap());
    let _ = std::fs::remove_dir_all(&dir);
    pass(10, "MC subcommands are byte-identical across --threads for a fixed seed");
}
