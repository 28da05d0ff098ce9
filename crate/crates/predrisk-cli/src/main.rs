//! Command-line front end: Kullback-Leibler risks of Bayes predictive and
//! estimative densities, alpha-class searches, expansion checks, Laplacian
//! scans, dominance experiments, and likelihood-identity reports, all with
//! reproducible seeding and machine-readable output.

mod config;
mod emit;

use clap::{Args, Parser, Subcommand};
use config::{parse_grid, parse_n_grid, parse_points, RunConfig};
use emit::{render, write_output, Cell, Table};
use predrisk::asymptotics::{
    alpha_solve, excess_risk_extrapolate, g_term_1d, g_term_general, RiskSource,
};
use predrisk::cumulants::{identities_check, CumulantMethod};
use predrisk::location::{dominance_experiment, superharmonic_scan};
use predrisk::risk::{risk_exact, risk_mc, Procedure, RiskMethod};
use predrisk::{Error, Family, Prior};

#[derive(Parser)]
#[command(
    name = "predrisk",
    about = "Bayes predictive densities and their Kullback-Leibler risks",
    version
)]
struct Cli {
    /// Worker threads for the Monte Carlo engines (results are independent
    /// of this value).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format.
    #[arg(long, global = true, default_value = "csv")]
    format: String,

    /// Output path (stdout when omitted; relative paths resolve against
    /// PREDRISK_OUT_DIR when that variable is set).
    #[arg(long, global = true)]
    out: Option<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Risk of a predictive or estimative procedure over a parameter grid.
    Risk(RiskArgs),
    /// Search the alpha class for constant-risk and minimum-risk members.
    AlphaSearch(AlphaSearchArgs),
    /// Compare the analytic expansion constant against the finite-n
    /// extrapolation oracle.
    ExpansionCheck(ExpansionArgs),
    /// Paired dominance experiment of the shrinkage prior against the
    /// uniform prior in the location family.
    Dominance(DominanceArgs),
    /// Laplacian sign scan of the shrinkage prior.
    LaplacianScan(LaplacianArgs),
    /// Likelihood-identity residual report.
    Identities(IdentityArgs),
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long)]
    family: String,
    /// Parameter point (comma-separated for multi-parameter families).
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Scalar parameter grid `lo:hi:count` or comma list (one-parameter
    /// families).
    #[arg(long, allow_hyphen_values = true)]
    theta_grid: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long, default_value = "jeffreys")]
    prior: String,
    /// predictive | estimative | both
    #[arg(long, default_value = "predictive")]
    procedure: String,
    /// Exact enumeration (discrete families only).
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AlphaSearchArgs {
    #[arg(long)]
    family: String,
    /// Parameter grid: `lo:hi:count`, a comma list (one-parameter families),
    /// or semicolon-separated points for multi-parameter families.
    #[arg(long, allow_hyphen_values = true)]
    theta_grid: Option<String>,
}

#[derive(Args)]
struct ExpansionArgs {
    #[arg(long)]
    family: String,
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[arg(long, default_value = "jeffreys")]
    prior: String,
    #[arg(long, default_value = "20,40,80,160")]
    n_grid: String,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DominanceArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, allow_hyphen_values = true)]
    shrink_alpha: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Probe means, semicolon-separated vectors (default: origin and a
    /// distant point on the first axis).
    #[arg(long, allow_hyphen_values = true)]
    probes: Option<String>,
}

#[derive(Args)]
struct LaplacianArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, allow_hyphen_values = true)]
    shrink_alpha: f64,
    #[arg(long, default_value_t = 100.0)]
    radius_max: f64,
    #[arg(long, default_value_t = 64)]
    grid_size: usize,
}

#[derive(Args)]
struct IdentityArgs {
    #[arg(long)]
    family: String,
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    /// Estimate the residuals by Monte Carlo instead of analytically.
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // Worker count only affects scheduling; outputs are bit-identical.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let code = match run(&cli) {
        Ok(()) => 0,
        Err(Error::InvalidArgument(msg)) | Err(Error::InvalidPriorSpec(msg)) => {
            eprintln!("usage error: {msg}");
            eprintln!("prior grammar: jeffreys | uniform | alpha:<real> | shrink:<real>");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.cmd {
        Cmd::Risk(a) => cmd_risk(cli, a),
        Cmd::AlphaSearch(a) => cmd_alpha_search(cli, a),
        Cmd::ExpansionCheck(a) => cmd_expansion_check(cli, a),
        Cmd::Dominance(a) => cmd_dominance(cli, a),
        Cmd::LaplacianScan(a) => cmd_laplacian(cli, a),
        Cmd::Identities(a) => cmd_identities(cli, a),
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64, Error> {
    seed.ok_or_else(|| {
        Error::InvalidArgument(
            "Monte Carlo subcommands require an explicit --seed (no silent nondeterminism)".into(),
        )
    })
}

fn theta_points(
    family: &Family,
    theta: Option<&str>,
    theta_grid: Option<&str>,
) -> Result<Vec<Vec<f64>>, Error> {
    match (theta, theta_grid) {
        (Some(t), None) => Ok(vec![parse_points(t)?.remove(0)]),
        (None, Some(g)) => {
            if g.contains(';') {
                parse_points(g)
            } else {
                if family.param_dim() != 1 {
                    return Err(Error::InvalidArgument(
                        "scalar grids apply to one-parameter families; pass semicolon-separated points".into(),
                    ));
                }
                let log = matches!(family.name().as_str(), "poisson");
                Ok(parse_grid(g, log)?.into_iter().map(|t| vec![t]).collect())
            }
        }
        (Some(_), Some(_)) => Err(Error::InvalidArgument(
            "pass either --theta or --theta-grid, not both".into(),
        )),
        (None, None) => Err(Error::InvalidArgument("missing --theta or --theta-grid".into())),
    }
}

// ---------------------------------------------------------------------------

fn cmd_risk(cli: &Cli, a: &RiskArgs) -> Result<(), Error> {
    let family = Family::from_spec(&a.family)?;
    let prior = Prior::from_spec(&a.prior, &family)?;
    let thetas = theta_points(&family, a.theta.as_deref(), a.theta_grid.as_deref())?;
    let ns: Vec<usize> = match (&a.n, &a.n_grid) {
        (Some(n), None) => vec![*n],
        (None, Some(g)) => parse_n_grid(g)?,
        _ => return Err(Error::InvalidArgument("pass exactly one of --n or --n-grid".into())),
    };
    let procedures: Vec<&str> = match a.procedure.as_str() {
        "predictive" => vec!["predictive"],
        "estimative" => vec!["estimative"],
        "both" => vec!["predictive", "estimative"],
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown procedure `{other}` (predictive | estimative | both)"
            )))
        }
    };
    let seed = if a.exact { a.seed.unwrap_or(0) } else { require_seed(a.seed)? };
    let reps = if a.exact {
        0
    } else {
        a.reps.ok_or_else(|| {
            Error::InvalidArgument("Monte Carlo risk needs --reps (or pass --exact)".into())
        })?
    };

    let mut config = RunConfig::new("risk", &cli.format);
    config.family = Some(family.name());
    config.prior = Some(prior.label().to_string());
    if thetas.len() == 1 {
        config.theta = Some(thetas[0].clone());
    } else {
        config.theta_grid = a.theta_grid.clone();
    }
    if ns.len() == 1 {
        config.n = Some(ns[0]);
        config.first_order_ref = Some(family.param_dim() as f64 / (2.0 * ns[0] as f64));
    } else {
        config.n_grid = a.n_grid.clone();
    }
    config.procedure = Some(a.procedure.clone());
    config.exact = Some(a.exact);
    if !a.exact {
        config.reps = Some(reps);
        config.seed = Some(seed);
    }

    let mut table = Table::new(vec![
        "theta", "n", "procedure", "value", "std_error", "method", "reps", "seed",
        "excluded_fraction", "first_order",
    ]);
    for theta in &thetas {
        for &n in &ns {
            for proc_name in &procedures {
                let procedure = match *proc_name {
                    "predictive" => Procedure::Predictive(&prior),
                    _ => Procedure::Estimative,
                };
                let est = if a.exact {
                    risk_exact(&family, theta, n, procedure)
                } else {
                    risk_mc(&family, theta, n, procedure, reps, seed)
                }
                .map_err(|e| {
                    // fail fast, naming the offending grid point
                    eprintln!("failed at grid point theta={theta:?}, n={n}, procedure={proc_name}");
                    e
                })?;
                let method = match est.method {
                    RiskMethod::Exact => "exact",
                    RiskMethod::MonteCarlo => "monte-carlo",
                    RiskMethod::Extrapolated => "extrapolated",
                };
                table.push(vec![
                    Cell::Text(join_floats(theta)),
                    Cell::Int(n as i64),
                    Cell::Text((*proc_name).into()),
                    Cell::Num(est.value),
                    Cell::Num(est.std_error),
                    Cell::Text(method.into()),
                    Cell::Int(est.reps as i64),
                    Cell::Int(est.seed as i64),
                    Cell::Num(est.excluded_fraction),
                    Cell::Num(family.param_dim() as f64 / (2.0 * n as f64)),
                ]);
            }
        }
    }
    write_output(cli.out.as_deref(), &render(&config, &table)?)
}

fn default_theta_grid(family: &Family) -> Vec<Vec<f64>> {
    match family.name().as_str() {
        "poisson" => (0..9)
            .map(|i| vec![0.1 * 10.0f64.powf(i as f64 / 4.0)])
            .collect(),
        "bernoulli-canonical" => (0..9).map(|i| vec![-2.0 + 0.5 * i as f64]).collect(),
        s if s.starts_with("negbinomial") => (0..9).map(|i| vec![-2.6 + 0.25 * i as f64]).collect(),
        "normal-location-scale" => vec![vec![0.0, 0.5], vec![0.0, 1.0], vec![1.0, 2.0]],
        "mvn-scale:1" => vec![vec![0.7], vec![1.0], vec![1.9]],
        "mvn-scale:2" => vec![
            vec![1.0, 0.0, 1.0],
            vec![1.5, 0.3, 0.9],
            vec![0.8, -0.2, 1.2],
        ],
        "mvn-scale:3" => vec![
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![1.2, 0.1, -0.1, 0.9, 0.2, 1.1],
        ],
        _ => {
            let d = family.param_dim();
            vec![vec![0.0; d], vec![1.0; d]]
        }
    }
}

fn cmd_alpha_search(cli: &Cli, a: &AlphaSearchArgs) -> Result<(), Error> {
    let family = Family::from_spec(&a.family)?;
    let grid = match &a.theta_grid {
        Some(g) => theta_points(&family, None, Some(g))?,
        None => default_theta_grid(&family),
    };
    let res = alpha_solve(&family, &grid)?;

    let mut config = RunConfig::new("alpha-search", &cli.format);
    config.family = Some(family.name());
    config.theta_grid = a.theta_grid.clone();
    let mut table = Table::new(vec![
        "kind", "theta", "a", "b", "c", "argmin_alpha", "roots", "constant_risk_alphas",
        "root_residual", "degenerate",
    ]);
    table.push(vec![
        Cell::Text("summary".into()),
        Cell::Text(String::new()),
        Cell::Num(res.quad[0]),
        Cell::Num(res.quad[1]),
        Cell::Num(res.quad[2]),
        Cell::Num(res.argmin_alpha),
        Cell::Text(join_floats(&res.roots)),
        Cell::Text(join_floats(&res.constant_risk_alphas)),
        Cell::Num(res.root_residual),
        Cell::Text(res.degenerate.to_string()),
    ]);
    for q in &res.per_theta {
        table.push(vec![
            Cell::Text("per-theta".into()),
            Cell::Text(join_floats(&q.theta)),
            Cell::Num(q.a),
            Cell::Num(q.b),
            Cell::Num(q.c),
            Cell::Num(q.argmin),
            Cell::Text(String::new()),
            Cell::Text(String::new()),
            Cell::Num(0.0),
            Cell::Text(String::new()),
        ]);
    }
    write_output(cli.out.as_deref(), &render(&config, &table)?)
}

fn cmd_expansion_check(cli: &Cli, a: &ExpansionArgs) -> Result<(), Error> {
    let family = Family::from_spec(&a.family)?;
    let prior = Prior::from_spec(&a.prior, &family)?;
    let theta = parse_points(&a.theta)?.remove(0);
    let n_grid = parse_n_grid(&a.n_grid)?;
    let source = match (a.reps, a.seed) {
        (None, None) => RiskSource::Exact,
        (Some(reps), seed) => RiskSource::MonteCarlo { reps, seed: require_seed(seed)? },
        (None, Some(_)) => {
            return Err(Error::InvalidArgument("--seed without --reps".into()))
        }
    };
    let res = excess_risk_extrapolate(&family, &prior, &theta, &n_grid, source)?;
    let analytic = if family.param_dim() == 1 {
        g_term_1d(&family, &prior, &theta)?
    } else {
        g_term_general(&family, &prior, &theta)?
    };
    let rel_gap = (res.g - analytic.g_theta).abs() / analytic.g_theta.abs().max(1e-12);

    let mut config = RunConfig::new("expansion-check", &cli.format);
    config.family = Some(family.name());
    config.prior = Some(prior.label().to_string());
    config.theta = Some(theta.clone());
    config.n_grid = Some(a.n_grid.clone());
    if let RiskSource::MonteCarlo { reps, seed } = source {
        config.reps = Some(reps);
        config.seed = Some(seed);
    }
    let mut table = Table::new(vec![
        "kind", "n", "risk", "std_error", "g_extrapolated", "g_analytic", "rel_gap",
        "fit_residual",
    ]);
    for (n, r) in res.n_grid.iter().zip(res.risks.iter()) {
        table.push(vec![
            Cell::Text("risk".into()),
            Cell::Int(*n as i64),
            Cell::Num(r.value),
            Cell::Num(r.std_error),
            Cell::Num(0.0),
            Cell::Num(0.0),
            Cell::Num(0.0),
            Cell::Num(0.0),
        ]);
    }
    table.push(vec![
        Cell::Text("summary".into()),
        Cell::Int(0),
        Cell::Num(0.0),
        Cell::Num(0.0),
        Cell::Num(res.g),
        Cell::Num(analytic.g_theta),
        Cell::Num(rel_gap),
        Cell::Num(res.fit_residual),
    ]);
    write_output(cli.out.as_deref(), &render(&config, &table)?)
}

fn cmd_dominance(cli: &Cli, a: &DominanceArgs) -> Result<(), Error> {
    let reps = a.reps.ok_or_else(|| Error::InvalidArgument("dominance needs --reps".into()))?;
    let seed = require_seed(a.seed)?;
    let probes = match &a.probes {
        Some(p) => parse_points(p)?,
        None => {
            let mut far = vec![0.0; a.dim];
            if a.dim > 0 {
                far[0] = 3.0;
            }
            vec![vec![0.0; a.dim], far]
        }
    };
    let verdict = dominance_experiment(a.dim, a.shrink_alpha, &probes, a.n, reps, seed)?;

    let mut config = RunConfig::new("dominance", &cli.format);
    config.dim = Some(a.dim);
    config.shrink_alpha = Some(a.shrink_alpha);
    config.n = Some(a.n);
    config.reps = Some(reps);
    config.seed = Some(seed);
    config.probes = Some(
        probes
            .iter()
            .map(|p| join_floats(p))
            .collect::<Vec<_>>()
            .join(";"),
    );
    let mut table = Table::new(vec![
        "mu", "delta", "std_error", "ci_low", "ci_high", "delta_g_over_g", "sign_match",
        "verdict", "uniform_gap_sup",
    ]);
    for probe in &verdict.probes {
        table.push(vec![
            Cell::Text(join_floats(&probe.mu)),
            Cell::Num(probe.delta),
            Cell::Num(probe.std_error),
            Cell::Num(probe.ci_low),
            Cell::Num(probe.ci_high),
            Cell::Num(probe.delta_g_over_g),
            Cell::Text(probe.sign_matches_prediction.to_string()),
            Cell::Text(format!("{:?}", verdict.verdict).to_lowercase()),
            Cell::Num(verdict.uniform_gap_sup),
        ]);
    }
    write_output(cli.out.as_deref(), &render(&config, &table)?)
}

fn cmd_laplacian(cli: &Cli, a: &LaplacianArgs) -> Result<(), Error> {
    let rep = superharmonic_scan(a.dim, a.shrink_alpha, a.radius_max, a.grid_size);
    let mut config = RunConfig::new("laplacian-scan", &cli.format);
    config.dim = Some(a.dim);
    config.shrink_alpha = Some(a.shrink_alpha);
    config.radius_max = Some(a.radius_max);
    config.grid_size = Some(a.grid_size);
    let mut table = Table::new(vec![
        "r", "delta_g", "delta_g_over_g", "sign_summary", "sup_delta_over_g",
        "range_empty", "alpha_in_range",
    ]);
    for ((r, dg), dgg) in rep
        .radii
        .iter()
        .zip(rep.delta_g.iter())
        .zip(rep.delta_g_over_g.iter())
    {
        table.push(vec![
            Cell::Num(*r),
            Cell::Num(*dg),
            Cell::Num(*dgg),
            Cell::Text(format!("{:?}", rep.sign_summary)),
            Cell::Num(rep.sup_delta_over_g),
            Cell::Text(rep.admissible_range_empty.to_string()),
            Cell::Text(rep.alpha_in_range.to_string()),
        ]);
    }
    write_output(cli.out.as_deref(), &render(&config, &table)?)
}

fn cmd_identities(cli: &Cli, a: &IdentityArgs) -> Result<(), Error> {
    let family = Family::from_spec(&a.family)?;
    let theta = parse_points(&a.theta)?.remove(0);
    let method = match a.reps {
        None => CumulantMethod::Analytic,
        Some(reps) => CumulantMethod::MonteCarlo { reps, seed: require_seed(a.seed)? },
    };
    let rep = identities_check(&family, &theta, method)?;
    let mut config = RunConfig::new("identities", &cli.format);
    config.family = Some(family.name());
    config.theta = Some(theta);
    if let CumulantMethod::MonteCarlo { reps, seed } = method {
        config.reps = Some(reps);
        config.seed = Some(seed);
    }
    let mut table = Table::new(vec!["order", "max_abs_residual", "max_se_ratio", "pass"]);
    for row in &rep.rows {
        table.push(vec![
            Cell::Int(row.order as i64),
            Cell::Num(row.max_abs_residual),
            match row.max_se_ratio {
                Some(r) => Cell::Num(r),
                None => Cell::Text(String::new()),
            },
            Cell::Text(row.pass.to_string()),
        ]);
    }
    write_output(cli.out.as_deref(), &render(&config, &table)?)
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| {
            if *x == x.round() && x.abs() < 1e15 {
                format!("{x}")
            } else {
                emit::fmt_sig(*x)
            }
        })
        .collect::<Vec<_>>()
        .join("|")
}
