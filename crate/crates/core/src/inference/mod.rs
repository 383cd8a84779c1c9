//! Availability queries on a compiled network.

mod exact;
mod sampling;

pub use exact::{
    exact_distribution, plan_elimination, split_deterministic, EliminationPlan, Heuristic,
};
pub use sampling::forward_counts;

use crate::bn::{BayesNet, NodeRef};
use crate::error::{Error, Result};
use crate::gates::T;

/// Largest intermediate factor exact inference may allocate.
pub const DEFAULT_FACTOR_LIMIT: f64 = (1u64 << 24) as f64;

pub const DEFAULT_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Exact {
        factor_limit: f64,
    },
    Forward {
        samples: usize,
        seed: u64,
        workers: usize,
    },
}

impl Method {
    pub fn exact() -> Self {
        Method::Exact {
            factor_limit: DEFAULT_FACTOR_LIMIT,
        }
    }

    pub fn forward(samples: usize, seed: u64) -> Self {
        Method::Forward {
            samples,
            seed,
            workers: 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact { .. } => "exact",
            Method::Forward { .. } => "forward",
        }
    }
}

/// `P(query = T)` with its sampling uncertainty (zero for exact results).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalResult {
    pub availability: f64,
    pub std_err: f64,
    /// 95% normal-approximation interval, clamped to `[0, 1]`.
    pub ci95: (f64, f64),
    pub samples: Option<usize>,
    pub method: &'static str,
}

impl MarginalResult {
    pub fn exact(p: f64) -> Self {
        MarginalResult {
            availability: p,
            std_err: 0.0,
            ci95: (p, p),
            samples: None,
            method: "exact",
        }
    }

    pub fn from_counts(successes: u64, samples: usize, method: &'static str) -> Self {
        let n = samples.max(1) as f64;
        let p = successes as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        MarginalResult {
            availability: p,
            std_err: se,
            ci95: ((p - 1.96 * se).max(0.0), (p + 1.96 * se).min(1.0)),
            samples: Some(samples),
            method,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }
}

pub fn exact_marginal(net: &BayesNet, query: NodeRef, factor_limit: f64) -> Result<MarginalResult> {
    let dist = exact_distribution(net, query, factor_limit)?;
    Ok(MarginalResult::exact(dist[T]))
}

pub fn forward_sample_marginal(
    net: &BayesNet,
    query: NodeRef,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<MarginalResult> {
    let counts = forward_counts(net, query, samples, seed, workers)?;
    Ok(MarginalResult::from_counts(counts[T], samples, "forward"))
}

/// Availability of the service node of `net`.
pub fn availability(net: &BayesNet, method: Method) -> Result<MarginalResult> {
    let s = net
        .service()
        .ok_or_else(|| Error::UnknownNode("S".to_string()))?;
    match method {
        Method::Exact { factor_limit } => exact_marginal(net, s, factor_limit),
        Method::Forward {
            samples,
            seed,
            workers,
        } => forward_sample_marginal(net, s, samples, seed, workers),
    }
}
