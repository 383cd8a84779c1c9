//! Reference availability computed directly on the model.
//!
//! Nothing here goes through the Bayesian network: a world fixes which
//! components fail intrinsically, fault trees propagate failures, a
//! breadth-first search over working network nodes decides reachability,
//! and the quorum rule is checked on the instances that can be reached.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::MarginalResult;
use crate::model::{FaultTree, QuorumIndex, SystemModel};

/// Exhaustive enumeration refuses models with more uncertain components.
pub const MAX_ENUMERATED: usize = 25;

#[derive(Debug, Clone)]
enum Tree {
    Leaf(usize),
    And(Vec<Tree>),
    Or(Vec<Tree>),
    Vote(usize, Vec<Tree>),
}

impl Tree {
    fn build(t: &FaultTree, index: &std::collections::HashMap<&str, usize>) -> Result<Tree> {
        let all = |xs: &[FaultTree]| {
            xs.iter()
                .map(|x| Tree::build(x, index))
                .collect::<Result<Vec<_>>>()
        };
        Ok(match t {
            FaultTree::Leaf(id) => Tree::Leaf(
                *index
                    .get(id.as_str())
                    .ok_or_else(|| Error::UnknownComponent(id.clone()))?,
            ),
            FaultTree::And(xs) => Tree::And(all(xs)?),
            FaultTree::Or(xs) => Tree::Or(all(xs)?),
            FaultTree::Vote { k, inputs } => Tree::Vote(*k, all(inputs)?),
        })
    }

    fn fires(&self, failed: &[bool]) -> bool {
        match self {
            Tree::Leaf(i) => failed[*i],
            Tree::And(xs) => xs.iter().all(|x| x.fires(failed)),
            Tree::Or(xs) => xs.iter().any(|x| x.fires(failed)),
            Tree::Vote(k, xs) => xs.iter().filter(|x| x.fires(failed)).count() >= *k,
        }
    }
}

/// Index-based view of a model for repeated world evaluation.
#[derive(Debug, Clone)]
pub struct Oracle {
    fault_probs: Vec<f64>,
    order: Vec<usize>,
    trees: Vec<Option<Tree>>,
    adj: Vec<Vec<usize>>,
    in_network: Vec<bool>,
    gateways: Vec<usize>,
    instances: Vec<usize>,
    hosts: Vec<usize>,
    quorum: QuorumIndex,
    replicated: bool,
}

impl Oracle {
    pub fn new(model: &SystemModel) -> Result<Oracle> {
        let report = model.validate();
        if !report.is_valid() {
            return Err(Error::InvalidModel(report));
        }
        let index = model.component_index();
        let n = model.components.len();
        let order = model.fault_order().ok_or(Error::Cyclic)?;
        let trees = model
            .components
            .iter()
            .map(|c| {
                model
                    .fault_tree(&c.id)
                    .map(|t| Tree::build(&t, &index))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut adj = vec![Vec::new(); n];
        let mut in_network = vec![false; n];
        for (a, nbs) in model.network.adjacency() {
            let ai = index[a];
            in_network[ai] = true;
            adj[ai] = nbs.iter().map(|b| index[b]).collect();
        }
        let instances: Vec<usize> = model.instances().iter().map(|i| index[i]).collect();
        let hosts = model
            .instances()
            .iter()
            .map(|i| index[model.deployment[*i].as_str()])
            .collect();
        Ok(Oracle {
            fault_probs: model.components.iter().map(|c| c.fault_prob).collect(),
            order,
            trees,
            adj,
            in_network,
            gateways: model.gateways.iter().map(|g| index[g.as_str()]).collect(),
            instances,
            hosts,
            quorum: model.quorum_index(),
            replicated: model.replicated,
        })
    }

    /// Effective failure of every component given intrinsic failures.
    pub fn effective(&self, intrinsic: &[bool]) -> Vec<bool> {
        let mut failed = intrinsic.to_vec();
        for &i in &self.order {
            if let Some(t) = &self.trees[i] {
                failed[i] = failed[i] || t.fires(&failed);
            }
        }
        failed
    }

    /// Working network nodes reachable from `start` through working nodes.
    fn reach(&self, start: usize, failed: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; failed.len()];
        if failed[start] || !self.in_network[start] {
            return seen;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for &y in &self.adj[x] {
                if !seen[y] && !failed[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen
    }

    /// Whether the service is available given intrinsic failures.
    pub fn service_up(&self, intrinsic: &[bool]) -> bool {
        let failed = self.effective(intrinsic);
        let n = self.instances.len();
        let inst_up = |j: usize| !failed[self.instances[j]];
        for &g in &self.gateways {
            let from_g = self.reach(g, &failed);
            if !self.replicated {
                let up: Vec<bool> = (0..n)
                    .map(|j| inst_up(j) && from_g[self.hosts[j]])
                    .collect();
                if self.quorum.holds(&up) {
                    return true;
                }
                continue;
            }
            for j in 0..n {
                if !inst_up(j) || !from_g[self.hosts[j]] {
                    continue;
                }
                let from_j = self.reach(self.hosts[j], &failed);
                let up: Vec<bool> = (0..n)
                    .map(|i| i == j || (inst_up(i) && from_j[self.hosts[i]]))
                    .collect();
                if self.quorum.holds(&up) {
                    return true;
                }
            }
        }
        false
    }

    /// Components with `0 < q < 1`.
    pub fn uncertain(&self) -> Vec<usize> {
        (0..self.fault_probs.len())
            .filter(|&i| self.fault_probs[i] > 0.0 && self.fault_probs[i] < 1.0)
            .collect()
    }

    /// Exact availability by summing over every intrinsic failure pattern.
    pub fn enumerate(&self, limit: usize) -> Result<f64> {
        let free = self.uncertain();
        if free.len() > limit {
            return Err(Error::TooManyWorlds {
                count: free.len(),
                limit,
            });
        }
        let base: Vec<bool> = self.fault_probs.iter().map(|&q| q >= 1.0).collect();
        let worlds = 1u64 << free.len();
        const CHUNK: u64 = 1 << 12;
        let chunks = worlds.div_ceil(CHUNK);
        let partial: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut intrinsic = base.clone();
                let mut sum = 0.0;
                for w in (c * CHUNK)..((c + 1) * CHUNK).min(worlds) {
                    let mut weight = 1.0;
                    for (b, &i) in free.iter().enumerate() {
                        let f = w >> b & 1 == 1;
                        intrinsic[i] = f;
                        let q = self.fault_probs[i];
                        weight *= if f { q } else { 1.0 - q };
                    }
                    if self.service_up(&intrinsic) {
                        sum += weight;
                    }
                }
                sum
            })
            .collect();
        Ok(partial.iter().sum())
    }

    /// Monte Carlo estimate over intrinsic failure patterns.
    pub fn monte_carlo(&self, samples: usize, seed: u64) -> MarginalResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut intrinsic = vec![false; self.fault_probs.len()];
        let mut ok = 0u64;
        for _ in 0..samples {
            for (f, &q) in intrinsic.iter_mut().zip(&self.fault_probs) {
                *f = q >= 1.0 || (q > 0.0 && rng.random::<f64>() < q);
            }
            if self.service_up(&intrinsic) {
                ok += 1;
            }
        }
        MarginalResult::from_counts(ok, samples, "oracle-mc")
    }
}

/// Whether the service is available when exactly the components in
/// `failed` fail intrinsically.
pub fn service_up(model: &SystemModel, failed: &BTreeSet<&str>) -> Result<bool> {
    let oracle = Oracle::new(model)?;
    let intrinsic: Vec<bool> = model
        .components
        .iter()
        .map(|c| failed.contains(c.id.as_str()))
        .collect();
    Ok(oracle.service_up(&intrinsic))
}

pub fn enumerate_availability(model: &SystemModel) -> Result<f64> {
    Oracle::new(model)?.enumerate(MAX_ENUMERATED)
}

pub fn mc_availability(model: &SystemModel, samples: usize, seed: u64) -> Result<MarginalResult> {
    Ok(Oracle::new(model)?.monte_carlo(samples, seed))
}
