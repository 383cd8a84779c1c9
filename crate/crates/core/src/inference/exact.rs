//! Variable elimination.
//!
//! Only ancestors of the query node are touched. The elimination order is
//! chosen greedily by fill-in with a symbolic pass that runs before any
//! table is allocated; if some intermediate factor would exceed the entry
//! limit the query fails with [`Error::ResourceLimit`].

use std::collections::BTreeSet;

use crate::bn::{BayesNet, NodeRef};
use crate::error::{Error, Result};

/// Table over `vars` (ascending), last variable varying fastest.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn strides(&self, cards: &[usize]) -> Vec<usize> {
        let mut s = vec![0; self.vars.len()];
        let mut acc = 1;
        for (j, &v) in self.vars.iter().enumerate().rev() {
            s[j] = acc;
            acc *= cards[v];
        }
        s
    }

    fn stride_of(&self, var: usize, strides: &[usize]) -> usize {
        self.vars
            .iter()
            .position(|&x| x == var)
            .map_or(0, |j| strides[j])
    }
}

/// Elimination plan produced by the symbolic pass.
#[derive(Debug, Clone)]
pub struct EliminationPlan {
    /// Network nodes in elimination order.
    pub order: Vec<NodeRef>,
    /// Entries of the largest factor built along the way.
    pub max_factor_entries: f64,
}

fn entries(vars: impl IntoIterator<Item = usize>, cards: &[usize]) -> f64 {
    vars.into_iter().map(|v| cards[v] as f64).product()
}

/// Elimination order heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    /// Greedy minimum fill-in, ties broken by factor size, then chain
    /// auxiliaries first.
    MinFill,
    /// Deterministic nodes in depth-first post-order from the query, then
    /// the random nodes by minimum fill-in. Suited to networks whose
    /// deterministic part is a forest, see [`split_deterministic`].
    PostOrder,
}

type Key = (u64, u64, bool, usize);

/// Plan the elimination of every ancestor of `query` except `query` itself.
pub fn plan_elimination(
    net: &BayesNet,
    query: NodeRef,
    limit: f64,
    h: Heuristic,
) -> Result<EliminationPlan> {
    let mask = net.ancestors(query);
    let cards: Vec<usize> = net.nodes().iter().map(|n| n.card).collect();
    let n = cards.len();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut max_entries: f64 = 1.0;

    for (i, node) in net.nodes().iter().enumerate() {
        if !mask[i] {
            continue;
        }
        let mut scope: Vec<usize> = node.parents.iter().map(|p| p.0).collect();
        scope.push(i);
        scope.sort_unstable();
        scope.dedup();
        let size = entries(scope.iter().copied(), &cards);
        if size > limit {
            return Err(Error::ResourceLimit {
                what: format!("table of node `{}`", node.id),
                required: size,
                limit,
            });
        }
        max_entries = max_entries.max(size);
        for &a in &scope {
            for &b in &scope {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }

    let is_aux: Vec<bool> = net
        .nodes()
        .iter()
        .map(|n| n.id.starts_with("aux:"))
        .collect();
    let fixed: Vec<Option<u64>> = match h {
        Heuristic::MinFill => vec![None; n],
        Heuristic::PostOrder => post_order(net, query)
            .into_iter()
            .zip(net.nodes())
            .map(|(pos, node)| {
                pos.filter(|_| node.cpd.as_ref().is_some_and(|c| c.is_deterministic()))
            })
            .collect(),
    };
    let log_limit = limit.log2();
    let score = |v: usize, adj: &[BTreeSet<usize>]| -> Key {
        let log_w: f64 = adj[v]
            .iter()
            .chain([&v])
            .map(|&u| (cards[u] as f64).log2())
            .sum();
        let w_key = (log_w * 1e6).round() as u64;
        if let Some(pos) = fixed[v] {
            return (pos, w_key, !is_aux[v], v);
        }
        // Fixed-order nodes go first; over-limit nodes last.
        let base = if h == Heuristic::PostOrder {
            1 << 40
        } else {
            0
        };
        if log_w > log_limit + 1e-9 {
            return (u64::MAX, w_key, !is_aux[v], v);
        }
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        let mut fill = 0u64;
        for (x, &a) in nb.iter().enumerate() {
            for &b in &nb[x + 1..] {
                if !adj[a].contains(&b) {
                    fill += 1;
                }
            }
        }
        (base + fill, w_key, !is_aux[v], v)
    };

    let mut keys: Vec<Option<Key>> = vec![None; n];
    let mut queue = BTreeSet::new();
    for v in 0..n {
        if mask[v] && v != query.0 {
            let k = score(v, &adj);
            keys[v] = Some(k);
            queue.insert(k);
        }
    }

    let mut order = Vec::with_capacity(queue.len());
    while let Some(key) = queue.pop_first() {
        let v = key.3;
        keys[v] = None;
        let size = entries(adj[v].iter().copied().chain([v]), &cards);
        if size > limit {
            return Err(Error::ResourceLimit {
                what: format!("eliminating `{}`", net.node(NodeRef(v)).id),
                required: size,
                limit,
            });
        }
        max_entries = max_entries.max(size);
        order.push(NodeRef(v));
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for &a in &nb {
            adj[a].remove(&v);
            for &b in &nb {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        adj[v].clear();
        // Fill-in changes for neighbors and their neighbors.
        let mut touched: BTreeSet<usize> = BTreeSet::new();
        for &a in &nb {
            if keys[a].is_some() {
                touched.insert(a);
                touched.extend(adj[a].iter().copied().filter(|&b| fixed[b].is_none()));
            }
        }
        for a in touched {
            if let Some(old) = keys[a] {
                let k = score(a, &adj);
                if k != old {
                    queue.remove(&old);
                    keys[a] = Some(k);
                    queue.insert(k);
                }
            }
        }
    }
    Ok(EliminationPlan {
        order,
        max_factor_entries: max_entries,
    })
}

/// Position of each ancestor of `query` in a depth-first post-order over
/// parent links.
fn post_order(net: &BayesNet, query: NodeRef) -> Vec<Option<u64>> {
    let mut pos = vec![None; net.len()];
    let mut seen = vec![false; net.len()];
    let mut k = 0u64;
    let mut stack: Vec<(usize, usize)> = vec![(query.0, 0)];
    seen[query.0] = true;
    while let Some(top) = stack.last_mut() {
        let (v, i) = *top;
        let ps = &net.node(NodeRef(v)).parents;
        if i < ps.len() {
            top.1 += 1;
            let p = ps[i].0;
            if !seen[p] {
                seen[p] = true;
                stack.push((p, 0));
            }
        } else {
            pos[v] = Some(k);
            k += 1;
            stack.pop();
        }
    }
    pos
}

fn node_factor(net: &BayesNet, i: usize, cards: &[usize]) -> Factor {
    let node = net.node(NodeRef(i));
    let cpd = node.cpd.as_ref().expect("network checked complete");
    let mut vars: Vec<usize> = node.parents.iter().map(|p| p.0).collect();
    vars.push(i);
    vars.sort_unstable();
    vars.dedup();
    let parent_pos: Vec<usize> = node
        .parents
        .iter()
        .map(|p| {
            vars.iter()
                .position(|&v| v == p.0)
                .expect("parent in scope")
        })
        .collect();
    let child_pos = vars.iter().position(|&v| v == i).expect("child in scope");
    let size = entries(vars.iter().copied(), cards) as usize;
    let mut values = Vec::with_capacity(size);
    let mut digits = vec![0usize; vars.len()];
    let mut parents = vec![0usize; parent_pos.len()];
    for _ in 0..size {
        for (s, &p) in parents.iter_mut().zip(&parent_pos) {
            *s = digits[p];
        }
        values.push(cpd.prob(digits[child_pos], &parents));
        for k in (0..vars.len()).rev() {
            digits[k] += 1;
            if digits[k] < cards[vars[k]] {
                break;
            }
            digits[k] = 0;
        }
    }
    Factor { vars, values }
}

/// Multiply `factors` and sum out `var`.
fn sum_product(factors: &[Factor], var: usize, cards: &[usize]) -> Factor {
    let mut union: Vec<usize> = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .collect();
    union.sort_unstable();
    union.dedup();
    let out_vars: Vec<usize> = union.into_iter().filter(|&x| x != var).collect();
    let out_cards: Vec<usize> = out_vars.iter().map(|&v| cards[v]).collect();
    let size: usize = out_cards.iter().product();

    let prepared: Vec<(&[f64], Vec<usize>, usize)> = factors
        .iter()
        .map(|f| {
            let s = f.strides(cards);
            let per_out = out_vars.iter().map(|&v| f.stride_of(v, &s)).collect();
            (f.values.as_slice(), per_out, f.stride_of(var, &s))
        })
        .collect();
    let cv = cards[var];
    let mut idx = vec![0usize; prepared.len()];
    let mut digits = vec![0usize; out_vars.len()];
    let mut values = Vec::with_capacity(size);
    for _ in 0..size {
        let mut total = 0.0;
        for s in 0..cv {
            let mut p = 1.0;
            for (fi, (vals, _, sv)) in prepared.iter().enumerate() {
                p *= vals[idx[fi] + s * sv];
                if p == 0.0 {
                    break;
                }
            }
            total += p;
        }
        values.push(total);
        for k in (0..out_vars.len()).rev() {
            digits[k] += 1;
            if digits[k] < out_cards[k] {
                for (fi, (_, st, _)) in prepared.iter().enumerate() {
                    idx[fi] += st[k];
                }
                break;
            }
            digits[k] = 0;
            for (fi, (_, st, _)) in prepared.iter().enumerate() {
                idx[fi] -= st[k] * (out_cards[k] - 1);
            }
        }
    }
    Factor {
        vars: out_vars,
        values,
    }
}

/// Exact marginal distribution of `query`.
/// Split copies larger than this are not attempted.
const MAX_SPLIT_NODES: usize = 500_000;
/// Greedy min-fill on split copies above this size takes too long to plan.
const MAX_SPLIT_MIN_FILL: usize = 5_000;

/// Exact marginal distribution of `query`.
///
/// Plans min-fill elimination on `net` first. If that needs a factor above
/// `limit` entries, the deterministic part is unrolled with
/// [`split_deterministic`] and eliminated tree by tree. Fails with
/// [`Error::ResourceLimit`] when no plan fits.
pub fn exact_distribution(net: &BayesNet, query: NodeRef, limit: f64) -> Result<Vec<f64>> {
    net.check_complete()?;
    let first = match plan_elimination(net, query, limit, Heuristic::MinFill) {
        Ok(plan) => return Ok(eliminate(net, query, &plan)),
        Err(e @ Error::ResourceLimit { .. }) => e,
        Err(e) => return Err(e),
    };
    let Some((split, q)) = split_deterministic(net, query, MAX_SPLIT_NODES)? else {
        return Err(first);
    };
    let mut best = first;
    let mut heuristics = vec![Heuristic::PostOrder];
    if split.len() <= MAX_SPLIT_MIN_FILL {
        heuristics.push(Heuristic::MinFill);
    }
    for h in heuristics {
        match plan_elimination(&split, q, limit, h) {
            Ok(plan) => return Ok(eliminate(&split, q, &plan)),
            Err(e @ Error::ResourceLimit { .. }) => {
                if required(&e) < required(&best) {
                    best = e;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(best)
}

fn required(e: &Error) -> f64 {
    match e {
        Error::ResourceLimit { required, .. } => *required,
        _ => f64::INFINITY,
    }
}

fn eliminate(net: &BayesNet, query: NodeRef, plan: &EliminationPlan) -> Vec<f64> {
    let cards: Vec<usize> = net.nodes().iter().map(|n| n.card).collect();
    let mask = net.ancestors(query);

    let mut factors: Vec<Option<Factor>> = Vec::new();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cards.len()];
    let push = |f: Factor, factors: &mut Vec<Option<Factor>>, buckets: &mut Vec<Vec<usize>>| {
        let id = factors.len();
        for &v in &f.vars {
            buckets[v].push(id);
        }
        factors.push(Some(f));
    };
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        push(node_factor(net, i, &cards), &mut factors, &mut buckets);
    }
    for &v in &plan.order {
        let ids = std::mem::take(&mut buckets[v.0]);
        let taken: Vec<Factor> = ids.iter().filter_map(|&id| factors[id].take()).collect();
        if taken.is_empty() {
            continue;
        }
        let f = sum_product(&taken, v.0, &cards);
        push(f, &mut factors, &mut buckets);
    }

    let card = cards[query.0];
    let mut dist = vec![1.0; card];
    for f in factors.into_iter().flatten() {
        match f.vars.as_slice() {
            [] => dist.iter_mut().for_each(|d| *d *= f.values[0]),
            [v] if *v == query.0 => {
                for (d, x) in dist.iter_mut().zip(&f.values) {
                    *d *= x;
                }
            }
            other => unreachable!("factor over {other:?} left after elimination"),
        }
    }
    let z: f64 = dist.iter().sum();
    if z > 0.0 {
        dist.iter_mut().for_each(|d| *d /= z);
    }
    dist
}

/// Copy of the ancestors of `query` in which every deterministic node is
/// duplicated once per child that reads it, recursively, so deterministic
/// parts become trees hanging off the random nodes. Copies equal the
/// original almost surely, so the marginal of `query` is unchanged, while
/// children no longer couple through shared deterministic nodes.
///
/// Returns `None` when the copy would exceed `max_nodes`.
pub fn split_deterministic(
    net: &BayesNet,
    query: NodeRef,
    max_nodes: usize,
) -> Result<Option<(BayesNet, NodeRef)>> {
    net.check_complete()?;
    let mask = net.ancestors(query);
    let order: Vec<NodeRef> = net
        .topological_order()?
        .into_iter()
        .filter(|r| mask[r.0])
        .collect();
    let shared = |i: usize| {
        i == query.0
            || !net
                .node(NodeRef(i))
                .cpd
                .as_ref()
                .is_some_and(|c| c.is_deterministic())
    };

    // Count instances from the query down before building anything.
    let mut copies = vec![0f64; net.len()];
    copies[query.0] = 1.0;
    let mut readers = vec![0f64; net.len()];
    for r in order.iter().rev() {
        let i = r.0;
        if i != query.0 {
            copies[i] = if shared(i) { 1.0 } else { readers[i] };
        }
        let mut distinct = net.node(*r).parents.clone();
        distinct.sort_unstable();
        distinct.dedup();
        for p in distinct {
            readers[p.0] += copies[i];
        }
    }
    if copies.iter().sum::<f64>() > max_nodes as f64 {
        return Ok(None);
    }

    // Emit parents before children; shared nodes once, the rest once per
    // reading child instance.
    let mut out = BayesNet::new();
    let mut single: Vec<Option<NodeRef>> = vec![None; net.len()];
    let mut made = vec![0usize; net.len()];
    for r in &order {
        if shared(r.0) {
            let ps = instantiate_parents(net, *r, &mut out, &mut single, &mut made, &shared)?;
            let node = net.node(*r);
            let id = node.id.clone();
            single[r.0] = Some(out.add_node_with(id, &ps, node.cpd.clone().expect("complete"))?);
        }
    }
    let q = single[query.0].expect("query is shared");
    out.set_service(q);
    Ok(Some((out, q)))
}

fn instantiate_parents(
    net: &BayesNet,
    r: NodeRef,
    out: &mut BayesNet,
    single: &mut Vec<Option<NodeRef>>,
    made: &mut Vec<usize>,
    shared: &dyn Fn(usize) -> bool,
) -> Result<Vec<NodeRef>> {
    let node = net.node(r);
    let mut seen: Vec<(usize, NodeRef)> = Vec::new();
    let mut ps = Vec::with_capacity(node.parents.len());
    for p in &node.parents {
        let inst = match seen.iter().find(|(q, _)| *q == p.0) {
            Some((_, x)) => *x,
            None => {
                let x = if shared(p.0) {
                    single[p.0].expect("parents come first")
                } else {
                    let grand = instantiate_parents(net, *p, out, single, made, shared)?;
                    let pn = net.node(*p);
                    let k = made[p.0];
                    made[p.0] += 1;
                    let id = if k == 0 {
                        pn.id.clone()
                    } else {
                        format!("{}#{k}", pn.id)
                    };
                    out.add_node_with(id, &grand, pn.cpd.clone().expect("complete"))?
                };
                seen.push((p.0, x));
                x
            }
        };
        ps.push(inst);
    }
    Ok(ps)
}
