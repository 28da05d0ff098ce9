//! Bayes predictive densities, Kullback-Leibler risk, and asymptotically
//! minimax priors for classical parametric families.
//!
//! The crate is organised around a pipeline:
//!
//! 1. [`family`] defines the built-in parametric models together with their
//!    log-likelihood derivatives and samplers.
//! 2. [`cumulants`] turns a family into the per-observation expectation
//!    tensors `L_{...}` (products of log-likelihood derivatives grouped by
//!    a derivative partition) that every asymptotic formula consumes.
//! 3. [`prior`] builds Jeffreys, uniform, relatively invariant (`alpha`)
//!    and location shrinkage priors in dual form: an unnormalised density
//!    plus exact log-gradient/log-Hessian evaluators.
//! 4. [`predictive`] forms Bayes predictive densities (closed form where
//!    conjugate, log-domain quadrature otherwise) and the plug-in
//!    estimative density.
//! 5. [`risk`] computes Kullback-Leibler divergences and frequentist risks
//!    exactly (discrete enumeration) or by seeded, reproducible Monte Carlo.
//! 6. [`asymptotics`] evaluates the second-order risk constant `G(theta)`,
//!    its likelihood/prior split, the quadratic-in-alpha risk over the
//!    alpha class, and a finite-n extrapolation oracle that arbitrates the
//!    coefficient set.
//! 7. [`location`] runs the location-family analysis: Laplacian scans of
//!    shrinkage priors, uniform-gap probes, and paired dominance
//!    experiments against the uniform prior.
//!
//! Everything that consumes randomness takes an explicit seed and derives
//! per-replicate substreams, so results are bit-identical regardless of the
//! number of worker threads (see [`exec`]).

#![forbid(unsafe_code)]

pub mod asymptotics;
pub mod cumulants;
pub mod error;
pub mod exec;
pub mod family;
pub mod location;
pub mod numerics;
pub mod predictive;
pub mod prior;
pub mod risk;

pub use error::{Error, Result};
pub use family::{Family, SampleBatch, SuffStat, Support};
pub use prior::Prior;
