//! Run configuration embedded in every output header, and the grid grammar.

use predrisk::{Error, Result};
use serde::{Deserialize, Serialize};

/// The semantic inputs of a run. Execution details (worker threads) are
/// deliberately not part of the config so reruns with different `--threads`
/// produce byte-identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub procedure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shrink_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_alphas: Option<Vec<f64>>,
    /// Reference first-order risk p/(2n) echoed when n is a single value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_order_ref: Option<f64>,
    pub format: String,
}

impl RunConfig {
    pub fn new(subcommand: &str, format: &str) -> Self {
        RunConfig {
            subcommand: subcommand.into(),
            family: None,
            prior: None,
            theta: None,
            theta_grid: None,
            n: None,
            n_grid: None,
            reps: None,
            seed: None,
            exact: None,
            procedure: None,
            dim: None,
            shrink_alpha: None,
            probes: None,
            radius_max: None,
            grid_size: None,
            comparison_alphas: None,
            first_order_ref: None,
            format: format.into(),
        }
    }
}

/// Parse a scalar grid: either a comma list `a,b,c` or `lo:hi:count`
/// (log-spaced when `log_spaced`, linear otherwise).
pub fn parse_grid(spec: &str, log_spaced: bool) -> Result<Vec<f64>> {
    let s = spec.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "grid `{spec}` must be lo:hi:count or a comma list"
            )));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad grid lower bound in `{spec}`")))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad grid upper bound in `{spec}`")))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad grid count in `{spec}`")))?;
        if count < 1 || !(hi >= lo) {
            return Err(Error::InvalidArgument(format!("degenerate grid `{spec}`")));
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        let mut out = Vec::with_capacity(count);
        if log_spaced {
            if lo <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "log-spaced grid `{spec}` needs positive bounds"
                )));
            }
            let (l0, l1) = (lo.ln(), hi.ln());
            for i in 0..count {
                out.push((l0 + (l1 - l0) * i as f64 / (count - 1) as f64).exp());
            }
        } else {
            for i in 0..count {
                out.push(lo + (hi - lo) * i as f64 / (count - 1) as f64);
            }
        }
        Ok(out)
    } else {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad grid value `{t}` in `{spec}`")))
            })
            .collect()
    }
}

/// Parse an n-grid into sorted unique sample sizes.
pub fn parse_n_grid(spec: &str) -> Result<Vec<usize>> {
    let vals = parse_grid(spec, !spec.contains(','))?;
    let mut out: Vec<usize> = vals
        .into_iter()
        .map(|v| v.round().max(1.0) as usize)
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Parse semicolon-separated parameter vectors: `1,0,1;1.5,0.3,0.9`.
pub fn parse_points(spec: &str) -> Result<Vec<Vec<f64>>> {
    spec.split(';')
        .map(|chunk| {
            chunk
                .split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidArgument(format!("bad number `{t}` in `{spec}`"))
                    })
                })
                .collect()
        })
        .collect()
}
