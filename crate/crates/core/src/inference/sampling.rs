//! Forward (ancestral) sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bn::{BayesNet, NodeRef};
use crate::error::Result;
use crate::gates::{Cpd, Rule, F, T};

/// Ancestors of the query flattened into evaluation order.
struct Program<'a> {
    cpds: Vec<&'a Cpd>,
    /// `parents[starts[i]..starts[i + 1]]` are the local indices of the
    /// parents of instruction `i`.
    starts: Vec<usize>,
    parents: Vec<u32>,
    query: usize,
    query_card: usize,
}

impl<'a> Program<'a> {
    fn new(net: &'a BayesNet, query: NodeRef) -> Result<Self> {
        net.check_complete()?;
        let mask = net.ancestors(query);
        let order: Vec<NodeRef> = net
            .topological_order()?
            .into_iter()
            .filter(|r| mask[r.0])
            .collect();
        let mut local = vec![u32::MAX; net.len()];
        for (i, r) in order.iter().enumerate() {
            local[r.0] = i as u32;
        }
        let mut cpds = Vec::with_capacity(order.len());
        let mut starts = Vec::with_capacity(order.len() + 1);
        let mut parents = Vec::new();
        starts.push(0);
        for r in &order {
            let node = net.node(*r);
            cpds.push(node.cpd.as_ref().expect("network checked complete"));
            parents.extend(node.parents.iter().map(|p| local[p.0]));
            starts.push(parents.len());
        }
        Ok(Program {
            cpds,
            starts,
            parents,
            query: local[query.0] as usize,
            query_card: net.node(query).card,
        })
    }

    /// Draw one joint sample into `states` and return the query state.
    fn run(&self, rng: &mut ChaCha8Rng, states: &mut [u32], buf: &mut Vec<usize>) -> usize {
        let bern = |rng: &mut ChaCha8Rng, fault: f64| -> u32 {
            if fault <= 0.0 {
                T as u32
            } else if fault >= 1.0 || rng.random::<f64>() < fault {
                F as u32
            } else {
                T as u32
            }
        };
        for (i, cpd) in self.cpds.iter().enumerate() {
            let ps = &self.parents[self.starts[i]..self.starts[i + 1]];
            let s = match cpd.rule() {
                Rule::Prior { fault } => bern(rng, *fault),
                Rule::NoisyAnd { q } => {
                    if states[ps[0] as usize] == F as u32 {
                        F as u32
                    } else {
                        bern(rng, *q)
                    }
                }
                Rule::And => {
                    if ps.iter().all(|&p| states[p as usize] == F as u32) {
                        F as u32
                    } else {
                        T as u32
                    }
                }
                Rule::Or => {
                    if ps.iter().any(|&p| states[p as usize] == F as u32) {
                        F as u32
                    } else {
                        T as u32
                    }
                }
                rule => {
                    buf.clear();
                    buf.extend(ps.iter().map(|&p| states[p as usize] as usize));
                    match rule {
                        Rule::Table(_) => {
                            let u: f64 = rng.random();
                            let mut acc = 0.0;
                            let mut chosen = cpd.card() - 1;
                            for st in 0..cpd.card() {
                                acc += cpd.prob(st, buf);
                                if u < acc {
                                    chosen = st;
                                    break;
                                }
                            }
                            chosen as u32
                        }
                        _ => cpd.eval(buf) as u32,
                    }
                }
            };
            states[i] = s;
        }
        states[self.query] as usize
    }

    fn count(&self, samples: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
        let mut states = vec![0u32; self.cpds.len()];
        let mut buf = Vec::new();
        let mut counts = vec![0u64; self.query_card];
        for _ in 0..samples {
            counts[self.run(rng, &mut states, &mut buf)] += 1;
        }
        counts
    }
}

/// State counts of `query` over `samples` ancestral samples.
///
/// With `workers > 1` the samples are split across independent streams of
/// the same seed, so the result depends on `workers` but not on scheduling.
pub fn forward_counts(
    net: &BayesNet,
    query: NodeRef,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<u64>> {
    let program = Program::new(net, query)?;
    let workers = workers.max(1);
    if workers == 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok(program.count(samples, &mut rng));
    }
    let per: Vec<usize> = (0..workers)
        .map(|w| samples / workers + usize::from(w < samples % workers))
        .collect();
    let parts: Vec<Vec<u64>> = per
        .par_iter()
        .enumerate()
        .map(|(w, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64);
            program.count(n, &mut rng)
        })
        .collect();
    let mut total = vec![0u64; program.query_card];
    for p in parts {
        for (t, c) in total.iter_mut().zip(p) {
            *t += c;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{noisy_and_cpd, or_cpd};

    fn net() -> (BayesNet, NodeRef) {
        let mut net = BayesNet::new();
        let a = net
            .add_node_with("A", &[], Cpd::prior(0.2).unwrap())
            .unwrap();
        let b = net
            .add_node_with("B", &[], Cpd::prior(0.1).unwrap())
            .unwrap();
        let c = net.add_node_with("C", &[a, b], or_cpd(2).unwrap()).unwrap();
        let d = net
            .add_node_with("D", &[c], noisy_and_cpd(0.5).unwrap())
            .unwrap();
        (net, d)
    }

    #[test]
    fn same_seed_same_counts() {
        let (net, d) = net();
        let a = forward_counts(&net, d, 10_000, 7, 1).unwrap();
        let b = forward_counts(&net, d, 10_000, 7, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().sum::<u64>(), 10_000);
        let c = forward_counts(&net, d, 10_000, 7, 3).unwrap();
        assert_eq!(c.iter().sum::<u64>(), 10_000);
    }

    #[test]
    fn close_to_exact() {
        let (net, d) = net();
        let counts = forward_counts(&net, d, 200_000, 1, 1).unwrap();
        let p = counts[T] as f64 / 200_000.0;
        let exact = 0.8 * 0.9 * 0.5;
        assert!((p - exact).abs() < 0.005, "{p} vs {exact}");
    }
}
