//! Evaluation inputs: the two-datacenter example, the seeded large
//! infrastructure, random models for property tests, and instance sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::compiler::{compile, CompileOptions};
use crate::error::{Error, Result};
use crate::inference::{availability, Method};
use crate::model::{
    Component, ComponentKind, FaultDependencyGraph, FaultTree, NetworkGraph, QuorumSpec,
    SystemModel,
};

fn beta(a: f64, b: f64) -> Beta<f64> {
    Beta::new(a, b).expect("positive shape parameters")
}

fn edges(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// The two-datacenter database example: 19 infrastructure, network and
/// host components plus 7 instances on hosts H1..H7, majority quorum,
/// gateway FW, replicated service.
///
/// Priors not fixed below are drawn from Beta(10, 1000) with `seed`.
pub fn small_infrastructure(seed: u64) -> SystemModel {
    use ComponentKind::*;
    let published: BTreeMap<&str, f64> = [
        ("DC1", 0.0092),
        ("DC2", 0.0069),
        ("H8", 0.0084),
        ("H9", 0.0107),
    ]
    .into();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = beta(10.0, 1000.0);

    let mut specs: Vec<(String, ComponentKind)> = vec![
        ("DC1".into(), Infrastructure),
        ("DC2".into(), Infrastructure),
        ("Ra1".into(), Infrastructure),
        ("Ra2".into(), Infrastructure),
        ("Ra3".into(), Infrastructure),
        ("FW".into(), Network),
    ];
    specs.extend((1..=4).map(|i| (format!("N{i}"), Network)));
    specs.extend((1..=9).map(|i| (format!("H{i}"), Host)));
    let mut components: Vec<Component> = specs
        .into_iter()
        .map(|(id, kind)| {
            let q = published
                .get(id.as_str())
                .copied()
                .unwrap_or_else(|| dist.sample(&mut rng));
            Component::new(id, kind, q)
        })
        .collect();
    components.extend((1..=7).map(|i| Component::new(format!("I{i}"), Instance, 0.0)));

    let mut fault_edges = edges(&[("DC1", "Ra1"), ("DC1", "Ra2"), ("DC2", "Ra3")]);
    for c in ["FW", "N1", "N2", "H1", "H2", "H3"] {
        fault_edges.push(("Ra1".into(), c.into()));
    }
    for c in ["N3", "H4", "H5", "H6"] {
        fault_edges.push(("Ra2".into(), c.into()));
    }
    for c in ["N4", "H7", "H8", "H9"] {
        fault_edges.push(("Ra3".into(), c.into()));
    }

    let mut net_edges = edges(&[
        ("FW", "N2"),
        ("N2", "N1"),
        ("N2", "N3"),
        ("N1", "N3"),
        ("N1", "N4"),
        ("N3", "N4"),
    ]);
    for (switch, hosts) in [("N1", 1..=3), ("N3", 4..=6), ("N4", 7..=9)] {
        for h in hosts {
            net_edges.push((switch.into(), format!("H{h}")));
        }
    }
    let mut net_nodes: Vec<String> = vec!["FW".into()];
    net_nodes.extend((1..=4).map(|i| format!("N{i}")));
    net_nodes.extend((1..=9).map(|i| format!("H{i}")));

    SystemModel {
        components,
        quorum: QuorumSpec::majority(7),
        fault_graph: FaultDependencyGraph {
            edges: fault_edges,
            trees: BTreeMap::new(),
        },
        network: NetworkGraph {
            nodes: net_nodes,
            edges: net_edges,
        },
        deployment: (1..=7)
            .map(|i| (format!("I{i}"), format!("H{i}")))
            .collect(),
        gateways: vec!["FW".into()],
        replicated: true,
    }
}

pub const LARGE_DATACENTERS: usize = 3;
pub const LARGE_INFRA_PER_DC: usize = 100;
pub const LARGE_HOSTS_PER_DC: usize = 40;
pub const LARGE_NETWORK: usize = 20;
/// Layer sizes of the infrastructure DAG of one data center, root first.
const LARGE_LAYERS: [usize; 5] = [1, 9, 20, 30, 40];
const LARGE_EXTRA_LINKS: usize = 4;

/// Seeded three-datacenter infrastructure with 440 components and no
/// instances; add them with [`with_instances`].
///
/// Per data center: 100 infrastructure components in a layered DAG rooted
/// at `DC<d>`, 40 hosts. The 20 switches `N<k>` are dealt to data centers in
/// turn and joined by a random spanning tree plus a few extra links; each
/// host hangs off one switch of its data center, and the first switch of
/// each data center is a gateway. Every non-root component fails when any
/// of its parents fails. Fault probabilities are `1 - Beta(10000, 1)`.
pub fn large_infrastructure(seed: u64) -> SystemModel {
    use ComponentKind::*;
    debug_assert_eq!(LARGE_LAYERS.iter().sum::<usize>(), LARGE_INFRA_PER_DC);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let avail = beta(10000.0, 1.0);
    let mut components = Vec::new();
    let mut fault_edges: Vec<(String, String)> = Vec::new();
    let mut trees = BTreeMap::new();

    let switches: Vec<String> = (1..=LARGE_NETWORK).map(|k| format!("N{k}")).collect();
    let dc_of_switch = |k: usize| k % LARGE_DATACENTERS;

    let mut net_edges: Vec<(String, String)> = Vec::new();
    let mut linked: BTreeSet<(usize, usize)> = BTreeSet::new();
    for k in 1..LARGE_NETWORK {
        let j = rng.random_range(0..k);
        linked.insert((j, k));
        net_edges.push((switches[j].clone(), switches[k].clone()));
    }
    while linked.len() < LARGE_NETWORK - 1 + LARGE_EXTRA_LINKS {
        let a = rng.random_range(0..LARGE_NETWORK);
        let b = rng.random_range(0..LARGE_NETWORK);
        let key = (a.min(b), a.max(b));
        if a != b && linked.insert(key) {
            net_edges.push((switches[key.0].clone(), switches[key.1].clone()));
        }
    }

    let mut hosts = Vec::new();
    for d in 0..LARGE_DATACENTERS {
        let mut layers: Vec<Vec<String>> = Vec::new();
        for (l, &size) in LARGE_LAYERS.iter().enumerate() {
            let layer: Vec<String> = if l == 0 {
                vec![format!("DC{}", d + 1)]
            } else {
                (1..=size)
                    .map(|j| format!("INF{}_{l}_{j}", d + 1))
                    .collect()
            };
            for (j, id) in layer.iter().enumerate() {
                components.push(Component::new(id.clone(), Infrastructure, 0.0));
                if l > 0 {
                    let above = &layers[l - 1];
                    let mut parents = vec![above[j % above.len()].clone()];
                    let extra = above[rng.random_range(0..above.len())].clone();
                    if !parents.contains(&extra) {
                        parents.push(extra);
                    }
                    attach(&mut fault_edges, &mut trees, id, parents);
                }
            }
            layers.push(layer);
        }
        let bottom = layers.last().expect("layers").clone();
        let local_switches: Vec<usize> = (0..LARGE_NETWORK)
            .filter(|&k| dc_of_switch(k) == d)
            .collect();
        let mut dependants: Vec<String> = local_switches
            .iter()
            .map(|&k| switches[k].clone())
            .collect();
        for h in 1..=LARGE_HOSTS_PER_DC {
            let id = format!("H{}_{h}", d + 1);
            let sw = local_switches[rng.random_range(0..local_switches.len())];
            net_edges.push((switches[sw].clone(), id.clone()));
            dependants.push(id.clone());
            hosts.push((id, Host));
        }
        for (i, id) in dependants.iter().enumerate() {
            let mut parents = vec![bottom[i % bottom.len()].clone()];
            let extra = bottom[rng.random_range(0..bottom.len())].clone();
            if !parents.contains(&extra) {
                parents.push(extra);
            }
            attach(&mut fault_edges, &mut trees, id, parents);
        }
    }
    components.extend(
        switches
            .iter()
            .map(|s| Component::new(s.clone(), Network, 0.0)),
    );
    let host_ids: Vec<String> = hosts.iter().map(|(h, _)| h.clone()).collect();
    components.extend(hosts.into_iter().map(|(h, k)| Component::new(h, k, 0.0)));
    for c in &mut components {
        c.fault_prob = 1.0 - avail.sample(&mut rng);
    }

    let mut net_nodes = switches.clone();
    net_nodes.extend(host_ids);
    let gateways = (0..LARGE_DATACENTERS)
        .map(|d| switches[d].clone())
        .collect();
    SystemModel {
        components,
        quorum: QuorumSpec::majority(0),
        fault_graph: FaultDependencyGraph {
            edges: fault_edges,
            trees,
        },
        network: NetworkGraph {
            nodes: net_nodes,
            edges: net_edges,
        },
        deployment: BTreeMap::new(),
        gateways,
        replicated: true,
    }
}

fn attach(
    edges: &mut Vec<(String, String)>,
    trees: &mut BTreeMap<String, FaultTree>,
    child: &str,
    parents: Vec<String>,
) {
    for p in &parents {
        edges.push((p.clone(), child.to_string()));
    }
    if parents.len() > 1 {
        trees.insert(
            child.to_string(),
            FaultTree::Or(parents.into_iter().map(FaultTree::Leaf).collect()),
        );
    }
}

/// Instance `I<i+1>` on `hosts[i % hosts.len()]`.
pub fn place_round_robin(n: usize, hosts: &[&str]) -> BTreeMap<String, String> {
    assert!(!hosts.is_empty(), "round-robin placement needs a host");
    (0..n)
        .map(|i| (format!("I{}", i + 1), hosts[i % hosts.len()].to_string()))
        .collect()
}

/// Replace the instances of `model` by `n` fault-free instances placed
/// round-robin over its hosts, with a majority quorum.
pub fn with_instances(model: &SystemModel, n: usize, replicated: bool) -> SystemModel {
    let mut m = model.clone();
    let old: BTreeSet<String> = m
        .components
        .iter()
        .filter(|c| c.kind == ComponentKind::Instance)
        .map(|c| c.id.clone())
        .collect();
    m.components.retain(|c| c.kind != ComponentKind::Instance);
    m.fault_graph
        .edges
        .retain(|(p, c)| !old.contains(p) && !old.contains(c));
    m.fault_graph.trees.retain(|id, _| !old.contains(id));
    let net: BTreeSet<&str> = model.network.nodes.iter().map(String::as_str).collect();
    let hosts: Vec<&str> = model
        .components
        .iter()
        .filter(|c| c.kind == ComponentKind::Host && net.contains(c.id.as_str()))
        .map(|c| c.id.as_str())
        .collect();
    m.deployment = place_round_robin(n, &hosts);
    m.components
        .extend((1..=n).map(|i| Component::new(format!("I{i}"), ComponentKind::Instance, 0.0)));
    m.quorum = QuorumSpec::majority(n);
    m.replicated = replicated;
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceKind {
    Redundant,
    Replicated,
}

impl ServiceKind {
    pub fn is_replicated(self) -> bool {
        self == ServiceKind::Replicated
    }
}

/// One point of an instance sweep. `availability` is `None` when the
/// point failed; `method` then carries the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub n: usize,
    pub availability: Option<f64>,
    pub build_time_s: f64,
    pub inference_time_s: f64,
    pub method: String,
    pub seed: u64,
}

/// Evaluate `base` with `n` instances for every `n` in `ns`.
///
/// Points run one after another so that their timings are comparable;
/// a failing point is recorded and the sweep continues.
pub fn sweep(
    base: &SystemModel,
    ns: &[usize],
    kind: ServiceKind,
    method: Method,
    opts: &CompileOptions,
    seed: u64,
) -> Vec<SweepRecord> {
    ns.iter()
        .map(|&n| sweep_point(base, n, kind, method, opts, seed))
        .collect()
}

fn sweep_point(
    base: &SystemModel,
    n: usize,
    kind: ServiceKind,
    method: Method,
    opts: &CompileOptions,
    seed: u64,
) -> SweepRecord {
    let model = with_instances(base, n, kind.is_replicated());
    let failed = |reason: &str, build: f64, infer: f64| SweepRecord {
        n,
        availability: None,
        build_time_s: build,
        inference_time_s: infer,
        method: format!("{}:{reason}", method.name()),
        seed,
    };
    let t0 = Instant::now();
    let compiled = match compile(&model, opts) {
        Ok(c) => c,
        Err(e) => return failed(reason(&e), t0.elapsed().as_secs_f64(), 0.0),
    };
    let build = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    match availability(&compiled.net, method) {
        Ok(r) => SweepRecord {
            n,
            availability: Some(r.availability),
            build_time_s: build,
            inference_time_s: t1.elapsed().as_secs_f64(),
            method: method.name().to_string(),
            seed,
        },
        Err(e) => failed(reason(&e), build, t1.elapsed().as_secs_f64()),
    }
}

fn reason(e: &Error) -> &'static str {
    if e.exit_code() == 2 {
        "infeasible"
    } else {
        "error"
    }
}

pub const SWEEP_HEADER: [&str; 6] = [
    "n",
    "availability",
    "build_time_s",
    "inference_time_s",
    "method",
    "seed",
];

/// Write records as CSV. With `timings == false` the time columns are left
/// empty so that repeated runs produce identical files.
pub fn write_sweep_csv(records: &[SweepRecord], out: impl io::Write, timings: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        let time = |t: f64| {
            if timings {
                format!("{t:.6}")
            } else {
                String::new()
            }
        };
        w.write_record([
            r.n.to_string(),
            r.availability
                .map_or_else(String::new, |a| format!("{a:.15}")),
            time(r.build_time_s),
            time(r.inference_time_s),
            r.method.clone(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Shape parameters of [`random_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomModelConfig {
    /// Upper bound on components with `0 < q < 1`.
    pub max_probabilistic: usize,
    pub max_infrastructure: usize,
    pub max_network: usize,
    pub max_hosts: usize,
    pub max_instances: usize,
    /// Force the service kind; random when `None`.
    pub replicated: Option<bool>,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        RandomModelConfig {
            max_probabilistic: 12,
            max_infrastructure: 3,
            max_network: 4,
            max_hosts: 4,
            max_instances: 5,
            replicated: None,
        }
    }
}

/// A random valid model. Quorums are drawn from read-one, write-all,
/// majority, weighted votes and explicit sets; fault trees from AND, OR,
/// k-out-of-n and nested gates.
pub fn random_model(seed: u64, cfg: &RandomModelConfig) -> SystemModel {
    use ComponentKind::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_infra = rng.random_range(0..=cfg.max_infrastructure);
    let n_net = rng.random_range(1..=cfg.max_network.max(1));
    let n_hosts = rng.random_range(1..=cfg.max_hosts.max(1));
    let replicated = cfg.replicated.unwrap_or_else(|| rng.random_bool(0.5));
    let min_inst = if replicated { 2 } else { 1 };
    let n_inst = rng.random_range(min_inst..=cfg.max_instances.max(min_inst));

    let infra: Vec<String> = (1..=n_infra).map(|i| format!("X{i}")).collect();
    let switches: Vec<String> = (1..=n_net).map(|i| format!("N{i}")).collect();
    let hosts: Vec<String> = (1..=n_hosts).map(|i| format!("H{i}")).collect();
    let insts: Vec<String> = (1..=n_inst).map(|i| format!("I{i}")).collect();

    let mut components = Vec::new();
    for (ids, kind) in [
        (&infra, Infrastructure),
        (&switches, Network),
        (&hosts, Host),
        (&insts, Instance),
    ] {
        components.extend(ids.iter().map(|id| Component::new(id.clone(), kind, 0.0)));
    }
    // Draw fault probabilities, keeping within the uncertain budget.
    let mut budget = cfg.max_probabilistic;
    for c in &mut components {
        let roll: f64 = rng.random();
        let want = if c.kind == Instance {
            roll < 0.3
        } else {
            roll < 0.9
        };
        if want && budget > 0 {
            budget -= 1;
            c.fault_prob = rng.random_range(0.01..0.4);
        } else if c.kind != Instance && roll > 0.97 {
            c.fault_prob = 1.0;
        }
    }

    // Fault edges: infrastructure forms a DAG by index, everything else may
    // depend on infrastructure; instances depend on their host.
    let mut fault_edges = Vec::new();
    let mut parents_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let non_inst: Vec<&String> = infra.iter().chain(&switches).chain(&hosts).collect();
    for (i, child) in non_inst.iter().enumerate() {
        let pool: Vec<&String> = infra.iter().take(i.min(infra.len())).collect();
        for p in pool {
            if rng.random_bool(0.4) {
                fault_edges.push((p.clone(), (*child).clone()));
                parents_of
                    .entry((*child).clone())
                    .or_default()
                    .push(p.clone());
            }
        }
    }
    let mut deployment = BTreeMap::new();
    for inst in &insts {
        let h = hosts[rng.random_range(0..hosts.len())].clone();
        if rng.random_bool(0.5) {
            fault_edges.push((h.clone(), inst.clone()));
        }
        deployment.insert(inst.clone(), h);
    }
    let mut trees = BTreeMap::new();
    for (child, ps) in parents_of {
        if ps.len() < 2 {
            continue;
        }
        let leaves: Vec<FaultTree> = ps.iter().cloned().map(FaultTree::Leaf).collect();
        let tree = match rng.random_range(0..4) {
            0 => continue,
            1 => FaultTree::Or(leaves),
            2 => FaultTree::Vote {
                k: rng.random_range(1..=leaves.len()),
                inputs: leaves,
            },
            _ => {
                let mut rest = leaves;
                let first = rest.remove(0);
                let inner = if rest.len() == 1 {
                    rest.pop().expect("one left")
                } else {
                    FaultTree::And(rest)
                };
                FaultTree::Or(vec![first, inner])
            }
        };
        trees.insert(child, tree);
    }

    // Network: random spanning tree over switches, hosts attached to one or
    // two switches, plus an occasional extra link.
    let mut net_edges = Vec::new();
    for k in 1..n_net {
        let j = rng.random_range(0..k);
        net_edges.push((switches[j].clone(), switches[k].clone()));
    }
    for h in &hosts {
        let a = rng.random_range(0..n_net);
        net_edges.push((switches[a].clone(), h.clone()));
        if n_net > 1 && rng.random_bool(0.3) {
            let b = rng.random_range(0..n_net);
            if b != a {
                net_edges.push((switches[b].clone(), h.clone()));
            }
        }
    }
    if n_net > 2 && rng.random_bool(0.5) {
        let a = rng.random_range(0..n_net);
        let b = rng.random_range(0..n_net);
        if a != b {
            net_edges.push((switches[a].clone(), switches[b].clone()));
        }
    }
    let mut net_nodes = switches.clone();
    net_nodes.extend(hosts.iter().cloned());

    let mut gateways = vec![switches[0].clone()];
    if n_net > 1 && rng.random_bool(0.3) {
        gateways.push(switches[n_net - 1].clone());
    }

    let quorum = match rng.random_range(0..5) {
        0 => QuorumSpec::read_one(n_inst),
        1 => QuorumSpec::write_all(n_inst),
        2 => QuorumSpec::majority(n_inst),
        3 => {
            let votes: Vec<u64> = (0..n_inst).map(|_| rng.random_range(1..=3)).collect();
            let total: u64 = votes.iter().sum();
            let threshold = rng.random_range(1..=total);
            QuorumSpec::Voting { votes, threshold }
        }
        _ => {
            let count = rng.random_range(1..=3);
            let sets = (0..count)
                .map(|_| {
                    let mut s: BTreeSet<String> = BTreeSet::new();
                    s.insert(insts[rng.random_range(0..n_inst)].clone());
                    for i in &insts {
                        if rng.random_bool(0.3) {
                            s.insert(i.clone());
                        }
                    }
                    s
                })
                .collect();
            QuorumSpec::Sets(sets)
        }
    };

    SystemModel {
        components,
        quorum,
        fault_graph: FaultDependencyGraph {
            edges: fault_edges,
            trees,
        },
        network: NetworkGraph {
            nodes: net_nodes,
            edges: net_edges,
        },
        deployment,
        gateways,
        replicated,
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}

/// Gateway `G` (q = 0.01) linked to host `H` (q = 0.1) running one
/// instance. Availability 0.99 * 0.9.
pub fn series_example() -> SystemModel {
    use ComponentKind::*;
    SystemModel {
        components: vec![
            Component::new("G", Network, 0.01),
            Component::new("H", Host, 0.1),
            Component::new("I1", Instance, 0.0),
        ],
        quorum: QuorumSpec::read_one(1),
        fault_graph: FaultDependencyGraph::default(),
        network: NetworkGraph {
            nodes: strings(&["G", "H"]),
            edges: edges(&[("G", "H")]),
        },
        deployment: [("I1".to_string(), "H".to_string())].into_iter().collect(),
        gateways: strings(&["G"]),
        replicated: false,
    }
}

/// Three instances on hosts with q = 0.1 behind a perfect gateway switch,
/// majority quorum. Availability p^3 + 3p^2(1 - p) with p = 0.9.
pub fn three_replica_example(replicated: bool) -> SystemModel {
    use ComponentKind::*;
    let hosts = ["H1", "H2", "H3"];
    let mut components = vec![Component::new("G", Network, 0.0)];
    components.extend(hosts.iter().map(|h| Component::new(*h, Host, 0.1)));
    components.extend((1..=3).map(|i| Component::new(format!("I{i}"), Instance, 0.0)));
    SystemModel {
        components,
        quorum: QuorumSpec::majority(3),
        fault_graph: FaultDependencyGraph::default(),
        network: NetworkGraph {
            nodes: strings(&["G", "H1", "H2", "H3"]),
            edges: edges(&[("G", "H1"), ("G", "H2"), ("G", "H3")]),
        },
        deployment: place_round_robin(3, &hosts),
        gateways: strings(&["G"]),
        replicated,
    }
}

/// One instance on host `H` (q = 0.1) which is also the gateway.
/// Availability 0.9.
pub fn single_host_example() -> SystemModel {
    use ComponentKind::*;
    SystemModel {
        components: vec![
            Component::new("H", Host, 0.1),
            Component::new("I1", Instance, 0.0),
        ],
        quorum: QuorumSpec::read_one(1),
        fault_graph: FaultDependencyGraph::default(),
        network: NetworkGraph {
            nodes: strings(&["H"]),
            edges: Vec::new(),
        },
        deployment: [("I1".to_string(), "H".to_string())].into_iter().collect(),
        gateways: strings(&["H"]),
        replicated: false,
    }
}
