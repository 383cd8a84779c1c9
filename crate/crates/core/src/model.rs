//! High-level description of a redundant or replicated service.
//!
//! A [`SystemModel`] bundles the components, the fault dependency graph with
//! a static fault tree per component, the communication network, the
//! deployment of instances onto hosts, the client gateways and the quorum
//! rule. Models are plain data: [`SystemModel::validate`] reports every
//! violated constraint instead of failing on the first one.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Infrastructure,
    Network,
    Host,
    Instance,
}

impl ComponentKind {
    /// Whether components of this kind may appear in the network graph.
    pub fn is_networked(self) -> bool {
        matches!(self, ComponentKind::Network | ComponentKind::Host)
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ComponentKind::Infrastructure => "infrastructure",
            ComponentKind::Network => "network",
            ComponentKind::Host => "host",
            ComponentKind::Instance => "instance",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub kind: ComponentKind,
    /// Probability of observing the component faulty absent external causes.
    #[serde(rename = "q")]
    pub fault_prob: f64,
}

impl Component {
    pub fn new(id: impl Into<String>, kind: ComponentKind, fault_prob: f64) -> Self {
        Component {
            id: id.into(),
            kind,
            fault_prob,
        }
    }
}

/// Static fault tree over a component's parents.
///
/// The tree fires (the component is externally faulted) according to the
/// fault semantics of its gates: `And` fires when every input fired, `Or`
/// when any input fired, `Vote` when at least `k` inputs fired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultTree {
    Leaf(String),
    And(Vec<FaultTree>),
    Or(Vec<FaultTree>),
    Vote { k: usize, inputs: Vec<FaultTree> },
}

impl FaultTree {
    pub fn leaf(id: impl Into<String>) -> Self {
        FaultTree::Leaf(id.into())
    }

    /// All leaf ids, in first-occurrence order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        self.visit_leaves(&mut |id| {
            if seen.insert(id) {
                out.push(id);
            }
        });
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            FaultTree::Leaf(id) => f(id),
            FaultTree::And(xs) | FaultTree::Or(xs) | FaultTree::Vote { inputs: xs, .. } => {
                for x in xs {
                    x.visit_leaves(f);
                }
            }
        }
    }

    /// Evaluate the tree; `failed` tells whether a leaf is in state F.
    pub fn fires(&self, failed: &impl Fn(&str) -> bool) -> bool {
        match self {
            FaultTree::Leaf(id) => failed(id),
            FaultTree::And(xs) => xs.iter().all(|x| x.fires(failed)),
            FaultTree::Or(xs) => xs.iter().any(|x| x.fires(failed)),
            FaultTree::Vote { k, inputs } => {
                inputs.iter().filter(|x| x.fires(failed)).count() >= *k
            }
        }
    }

    fn check_gates(&self, owner: &str, out: &mut Vec<Violation>) {
        match self {
            FaultTree::Leaf(_) => {}
            FaultTree::And(xs) | FaultTree::Or(xs) => {
                if xs.is_empty() {
                    out.push(Violation::new(
                        ViolationKind::InvalidGate,
                        format!("fault tree of `{owner}` has a gate without inputs"),
                    ));
                }
                xs.iter().for_each(|x| x.check_gates(owner, out));
            }
            FaultTree::Vote { k, inputs } => {
                if *k < 1 || *k > inputs.len() {
                    out.push(Violation::new(
                        ViolationKind::InvalidGate,
                        format!(
                            "fault tree of `{owner}` has vote:{k} over {} input(s)",
                            inputs.len()
                        ),
                    ));
                }
                inputs.iter().for_each(|x| x.check_gates(owner, out));
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultDependencyGraph {
    /// `(parent, child)` pairs.
    pub edges: Vec<(String, String)>,
    /// Explicit fault trees. A non-root component without an entry fails
    /// when all of its parents fail.
    pub trees: BTreeMap<String, FaultTree>,
}

/// Undirected communication graph over network and host components.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl NetworkGraph {
    /// Adjacency lists keyed by node id, neighbors sorted.
    pub fn adjacency(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = self
            .nodes
            .iter()
            .map(|n| (n.as_str(), BTreeSet::new()))
            .collect();
        for (a, b) in &self.edges {
            if a == b {
                continue;
            }
            adj.entry(a).or_default().insert(b);
            adj.entry(b).or_default().insert(a);
        }
        adj.into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect()
    }
}

/// Which instance combinations keep the service working.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuorumSpec {
    /// Explicit path set: the service works if some member set is up.
    Sets(Vec<BTreeSet<String>>),
    /// Votes per instance (declaration order) and a threshold.
    Voting { votes: Vec<u64>, threshold: u64 },
}

impl QuorumSpec {
    pub fn majority(n: usize) -> Self {
        QuorumSpec::Voting {
            votes: vec![1; n],
            threshold: (n / 2 + 1) as u64,
        }
    }

    pub fn read_one(n: usize) -> Self {
        QuorumSpec::Voting {
            votes: vec![1; n],
            threshold: 1,
        }
    }

    pub fn write_all(n: usize) -> Self {
        QuorumSpec::Voting {
            votes: vec![1; n],
            threshold: n as u64,
        }
    }

    pub fn k_of_n(k: usize, n: usize) -> Self {
        QuorumSpec::Voting {
            votes: vec![1; n],
            threshold: k as u64,
        }
    }
}

/// Quorum rule resolved against instance positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuorumIndex {
    Voting { votes: Vec<u64>, threshold: u64 },
    Sets(Vec<Vec<usize>>),
}

impl QuorumIndex {
    /// `up[i]` is the state of the i-th instance.
    pub fn holds(&self, up: &[bool]) -> bool {
        match self {
            QuorumIndex::Voting { votes, threshold } => {
                let sum: u64 = votes
                    .iter()
                    .zip(up)
                    .filter(|(_, &u)| u)
                    .map(|(v, _)| *v)
                    .sum();
                sum >= *threshold
            }
            QuorumIndex::Sets(sets) => sets.iter().any(|s| s.iter().all(|&i| up[i])),
        }
    }

    /// The equivalent unit-vote threshold, if the rule is "any t instances".
    pub fn unit_threshold(&self, n: usize) -> Option<u64> {
        match self {
            QuorumIndex::Voting { votes, threshold } => {
                votes.iter().all(|&v| v == 1).then_some(*threshold)
            }
            QuorumIndex::Sets(sets) => {
                let minimal = minimal_sets(sets);
                let t = minimal.first()?.len();
                if minimal.iter().any(|s| s.len() != t) {
                    return None;
                }
                (minimal.len() as f64 == binomial(n, t)).then_some(t as u64)
            }
        }
    }
}

fn minimal_sets(sets: &[Vec<usize>]) -> Vec<BTreeSet<usize>> {
    let sets: BTreeSet<BTreeSet<usize>> =
        sets.iter().map(|s| s.iter().copied().collect()).collect();
    sets.iter()
        .filter(|s| !sets.iter().any(|o| o != *s && o.is_subset(s)))
        .cloned()
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k)
        .fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        .round()
}

/// Quorum check by instance names.
///
/// `instances` fixes the vote order of the voting form.
pub fn quorum_holds(quorum: &QuorumSpec, instances: &[&str], up: &BTreeSet<&str>) -> bool {
    match quorum {
        QuorumSpec::Voting { votes, threshold } => {
            let sum: u64 = instances
                .iter()
                .zip(votes)
                .filter(|(i, _)| up.contains(**i))
                .map(|(_, v)| *v)
                .sum();
            sum >= *threshold
        }
        QuorumSpec::Sets(sets) => sets
            .iter()
            .any(|s| s.iter().all(|i| up.contains(i.as_str()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub components: Vec<Component>,
    pub quorum: QuorumSpec,
    pub fault_graph: FaultDependencyGraph,
    pub network: NetworkGraph,
    /// Instance id to host id.
    pub deployment: BTreeMap<String, String>,
    pub gateways: Vec<String>,
    pub replicated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    DuplicateComponent,
    InvalidProbability,
    UnknownComponent,
    FaultCycle,
    TreeMismatch,
    InvalidGate,
    InstanceParent,
    NetworkNode,
    NetworkEdge,
    Deployment,
    Gateway,
    Quorum,
    Instances,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, message: String) -> Self {
        Violation { kind, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl SystemModel {
    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn component_index(&self) -> HashMap<&str, usize> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect()
    }

    /// Instance ids in declaration order; this order indexes quorum votes.
    pub fn instances(&self) -> Vec<&str> {
        self.components
            .iter()
            .filter(|c| c.kind == ComponentKind::Instance)
            .map(|c| c.id.as_str())
            .collect()
    }

    /// Parents of `id` in the fault graph, including the implicit
    /// host-to-instance edge of the deployment.
    pub fn fault_parents(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (p, c) in &self.fault_graph.edges {
            if c == id && !out.contains(&p.as_str()) {
                out.push(p);
            }
        }
        if let Some(host) = self.deployment.get(id) {
            if !out.contains(&host.as_str()) {
                out.push(host);
            }
        }
        out
    }

    /// The fault tree governing `id`, or `None` for a root component.
    pub fn fault_tree(&self, id: &str) -> Option<FaultTree> {
        if let Some(t) = self.fault_graph.trees.get(id) {
            return Some(t.clone());
        }
        let parents = self.fault_parents(id);
        match parents.len() {
            0 => None,
            1 => Some(FaultTree::leaf(parents[0])),
            _ => Some(FaultTree::And(
                parents.into_iter().map(FaultTree::leaf).collect(),
            )),
        }
    }

    /// Component indices ordered so that parents precede children, or
    /// `None` if the fault graph has a cycle.
    pub fn fault_order(&self) -> Option<Vec<usize>> {
        let index = self.component_index();
        let n = self.components.len();
        let mut indeg = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (ci, c) in self.components.iter().enumerate() {
            for p in self.fault_parents(&c.id) {
                if let Some(&pi) = index.get(p) {
                    children[pi].push(ci);
                    indeg[ci] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Resolve the quorum rule against instance positions.
    ///
    /// Unknown instance names in explicit sets are dropped; `validate`
    /// reports them.
    pub fn quorum_index(&self) -> QuorumIndex {
        match &self.quorum {
            QuorumSpec::Voting { votes, threshold } => QuorumIndex::Voting {
                votes: votes.clone(),
                threshold: *threshold,
            },
            QuorumSpec::Sets(sets) => {
                let pos: HashMap<&str, usize> = self
                    .instances()
                    .into_iter()
                    .enumerate()
                    .map(|(i, id)| (id, i))
                    .collect();
                QuorumIndex::Sets(
                    sets.iter()
                        .map(|s| {
                            s.iter()
                                .filter_map(|id| pos.get(id.as_str()).copied())
                                .collect()
                        })
                        .collect(),
                )
            }
        }
    }

    pub fn quorum_holds(&self, up: &BTreeSet<&str>) -> bool {
        quorum_holds(&self.quorum, &self.instances(), up)
    }

    /// Number of components whose intrinsic fault is uncertain (0 < q < 1).
    pub fn probabilistic_count(&self) -> usize {
        self.components
            .iter()
            .filter(|c| c.fault_prob > 0.0 && c.fault_prob < 1.0)
            .count()
    }

    /// Check every structural constraint; an empty report means the model
    /// can be compiled.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        let mut ids: HashMap<&str, &Component> = HashMap::new();
        for c in &self.components {
            if ids.insert(&c.id, c).is_some() {
                out.push(Violation::new(
                    ViolationKind::DuplicateComponent,
                    format!("component `{}` declared more than once", c.id),
                ));
            }
            if !(0.0..=1.0).contains(&c.fault_prob) {
                out.push(Violation::new(
                    ViolationKind::InvalidProbability,
                    format!(
                        "component `{}` has fault probability {} outside [0,1]",
                        c.id, c.fault_prob
                    ),
                ));
            }
        }
        let known = |id: &str| ids.contains_key(id);
        let kind_of = |id: &str| ids.get(id).map(|c| c.kind);

        self.validate_fault_graph(&ids, &mut out);
        self.validate_network(&ids, &mut out);

        // deployment
        let instances = self.instances();
        if instances.is_empty() {
            out.push(Violation::new(
                ViolationKind::Instances,
                "model declares no instances".to_string(),
            ));
        }
        for inst in &instances {
            if !self.deployment.contains_key(*inst) {
                out.push(Violation::new(
                    ViolationKind::Deployment,
                    format!("instance `{inst}` is not deployed on any host"),
                ));
            }
        }
        let net_nodes: HashSet<&str> = self.network.nodes.iter().map(String::as_str).collect();
        for (inst, host) in &self.deployment {
            if kind_of(inst) != Some(ComponentKind::Instance) {
                out.push(Violation::new(
                    ViolationKind::Deployment,
                    format!("deployment key `{inst}` is not a declared instance"),
                ));
            }
            if kind_of(host) != Some(ComponentKind::Host) {
                out.push(Violation::new(
                    ViolationKind::Deployment,
                    format!(
                        "instance `{inst}` is deployed on `{host}`, which is not a declared host"
                    ),
                ));
            } else if !net_nodes.contains(host.as_str()) {
                out.push(Violation::new(
                    ViolationKind::Deployment,
                    format!("instance `{inst}` is deployed on host `{host}`, which is not in the network graph"),
                ));
            }
        }

        // gateways
        if self.gateways.is_empty() {
            out.push(Violation::new(
                ViolationKind::Gateway,
                "model has no gateway".to_string(),
            ));
        }
        for g in &self.gateways {
            if !net_nodes.contains(g.as_str()) || !known(g) {
                out.push(Violation::new(
                    ViolationKind::Gateway,
                    format!("gateway `{g}` is not a network node"),
                ));
            }
        }
        let unique_gateways: HashSet<&String> = self.gateways.iter().collect();
        if unique_gateways.len() != self.gateways.len() {
            out.push(Violation::new(
                ViolationKind::Gateway,
                "gateway listed twice".to_string(),
            ));
        }

        if self.replicated && instances.len() < 2 {
            out.push(Violation::new(
                ViolationKind::Instances,
                format!(
                    "replicated service needs at least two instances, found {}",
                    instances.len()
                ),
            ));
        }

        self.validate_quorum(&instances, &mut out);
        ValidationReport { violations: out }
    }

    fn validate_fault_graph(&self, ids: &HashMap<&str, &Component>, out: &mut Vec<Violation>) {
        let mut bad_edge = false;
        for (p, c) in &self.fault_graph.edges {
            for end in [p, c] {
                if !ids.contains_key(end.as_str()) {
                    bad_edge = true;
                    out.push(Violation::new(
                        ViolationKind::UnknownComponent,
                        format!("fault edge ({p}, {c}) references unknown component `{end}`"),
                    ));
                }
            }
            if ids.get(c.as_str()).map(|x| x.kind) == Some(ComponentKind::Instance)
                && self.deployment.get(c) != Some(p)
            {
                out.push(Violation::new(
                    ViolationKind::InstanceParent,
                    format!("instance `{c}` may only depend on its host, found parent `{p}`"),
                ));
            }
        }
        if !bad_edge && self.fault_order().is_none() {
            let members = self.cycle_members();
            out.push(Violation::new(
                ViolationKind::FaultCycle,
                format!(
                    "fault dependency graph has a cycle through {}",
                    members.join(", ")
                ),
            ));
        }
        for (owner, tree) in &self.fault_graph.trees {
            if !ids.contains_key(owner.as_str()) {
                out.push(Violation::new(
                    ViolationKind::UnknownComponent,
                    format!("fault tree given for unknown component `{owner}`"),
                ));
                continue;
            }
            tree.check_gates(owner, out);
            let leaves: BTreeSet<&str> = tree.leaves().into_iter().collect();
            let parents: BTreeSet<&str> = self.fault_parents(owner).into_iter().collect();
            for l in leaves.difference(&parents) {
                out.push(Violation::new(
                    ViolationKind::TreeMismatch,
                    format!("fault tree of `{owner}` references `{l}`, which is not a parent"),
                ));
            }
            for p in parents.difference(&leaves) {
                out.push(Violation::new(
                    ViolationKind::TreeMismatch,
                    format!("fault tree of `{owner}` ignores parent `{p}`"),
                ));
            }
        }
    }

    fn cycle_members(&self) -> Vec<String> {
        // Peel off nodes with no remaining children or parents; what is left
        // lies on or between cycles.
        let n = self.components.len();
        let index = self.component_index();
        let mut indeg = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (ci, c) in self.components.iter().enumerate() {
            for p in self.fault_parents(&c.id) {
                if let Some(&pi) = index.get(p) {
                    children[pi].push(ci);
                    indeg[ci] += 1;
                }
            }
        }
        let mut removed = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        while let Some(i) = queue.pop_front() {
            removed[i] = true;
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (0..n)
            .filter(|&i| !removed[i])
            .map(|i| self.components[i].id.clone())
            .collect()
    }

    fn validate_network(&self, ids: &HashMap<&str, &Component>, out: &mut Vec<Violation>) {
        let mut seen = HashSet::new();
        for n in &self.network.nodes {
            match ids.get(n.as_str()) {
                None => out.push(Violation::new(
                    ViolationKind::NetworkNode,
                    format!("network node `{n}` is not a declared component"),
                )),
                Some(c) if !c.kind.is_networked() => out.push(Violation::new(
                    ViolationKind::NetworkNode,
                    format!(
                        "network node `{n}` is of kind {}, expected network or host",
                        c.kind
                    ),
                )),
                _ => {}
            }
            if !seen.insert(n.as_str()) {
                out.push(Violation::new(
                    ViolationKind::NetworkNode,
                    format!("network node `{n}` listed twice"),
                ));
            }
        }
        for (a, b) in &self.network.edges {
            for end in [a, b] {
                if !seen.contains(end.as_str()) {
                    out.push(Violation::new(
                        ViolationKind::NetworkEdge,
                        format!("network edge {{{a}, {b}}} references `{end}`, which is not a network node"),
                    ));
                }
            }
            if a == b {
                out.push(Violation::new(
                    ViolationKind::NetworkEdge,
                    format!("network edge {{{a}, {b}}} is a self loop"),
                ));
            }
        }
    }

    fn validate_quorum(&self, instances: &[&str], out: &mut Vec<Violation>) {
        match &self.quorum {
            QuorumSpec::Sets(sets) => {
                if sets.is_empty() {
                    out.push(Violation::new(
                        ViolationKind::Quorum,
                        "quorum path set is empty".to_string(),
                    ));
                }
                if instances.len() > 64 {
                    out.push(Violation::new(
                        ViolationKind::Quorum,
                        format!(
                            "explicit quorum sets support at most 64 instances, model has {}",
                            instances.len()
                        ),
                    ));
                }
                for s in sets {
                    if s.is_empty() {
                        out.push(Violation::new(
                            ViolationKind::Quorum,
                            "quorum path set contains an empty member".to_string(),
                        ));
                    }
                    for i in s {
                        if !instances.contains(&i.as_str()) {
                            out.push(Violation::new(
                                ViolationKind::Quorum,
                                format!("quorum set references `{i}`, which is not an instance"),
                            ));
                        }
                    }
                }
            }
            QuorumSpec::Voting { votes, threshold } => {
                if votes.len() != instances.len() {
                    out.push(Violation::new(
                        ViolationKind::Quorum,
                        format!(
                            "{} vote(s) given for {} instance(s)",
                            votes.len(),
                            instances.len()
                        ),
                    ));
                }
                if let Some(pos) = votes.iter().position(|&v| v == 0) {
                    out.push(Violation::new(
                        ViolationKind::Quorum,
                        format!("vote {} is zero, votes must be positive", pos + 1),
                    ));
                }
                let total: u64 = votes.iter().sum();
                if *threshold == 0 {
                    out.push(Violation::new(
                        ViolationKind::Quorum,
                        "quorum threshold must be positive".to_string(),
                    ));
                } else if *threshold > total {
                    out.push(Violation::new(
                        ViolationKind::Quorum,
                        format!("quorum threshold {threshold} exceeds total votes {total}"),
                    ));
                }
            }
        }
    }
}
