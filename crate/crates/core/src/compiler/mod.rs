//! Translation of a [`SystemModel`] into a [`BayesNet`].
//!
//! The network is built in three layers: one node per component with its
//! fault tree compiled to gate nodes, channel sub-graphs over enumerated
//! routes, and finally the redundant or replicated service layer that ends
//! in the service node `S`.
//!
//! Node ids are namespaced: `comp:<id>`, `ft:<id>/<k>` (fault tree gates),
//! `route:R<k>`, `and:<channel>`, `chan:<a>-<b>`, `K:<k>`, `aux:<owner>/<j>`
//! (counting-chain links) and `S`.

mod routes;

use std::collections::HashMap;

pub use routes::{enumerate_routes, Route, RouteFinder};

use crate::bn::{BayesNet, NodeRef};
use crate::error::{Error, Result};
use crate::gates::{self, expand_scalable, Cpd, GateKind, GateSpec};
use crate::model::{FaultTree, QuorumIndex, SystemModel};

/// How multi-input gates are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// One node per gate with a table over all inputs.
    Dense,
    /// Chains of two-input nodes for every gate with two or more inputs.
    Scalable,
    /// Dense while the table has at most `dense_cap` columns, chains above.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileOptions {
    pub gate_mode: GateMode,
    /// Largest number of parent combinations a single dense table may have.
    pub dense_cap: f64,
    /// Keep only the first `route_limit` routes per channel.
    pub route_limit: Option<usize>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            gate_mode: GateMode::Auto,
            dense_cap: (1u64 << 20) as f64,
            route_limit: None,
        }
    }
}

impl CompileOptions {
    pub fn with_mode(gate_mode: GateMode) -> Self {
        CompileOptions {
            gate_mode,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelRef {
    pub node: NodeRef,
    pub id: String,
    pub and_node: NodeRef,
    pub src_cause: NodeRef,
    pub dst_cause: NodeRef,
    pub routes: Vec<NodeRef>,
}

/// A compiled network together with bookkeeping about its channels.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub net: BayesNet,
    pub channels: Vec<ChannelRef>,
    pub k_nodes: Vec<NodeRef>,
    pub route_nodes: usize,
}

/// Compile `model` and return the network with its service node set.
pub fn create_service_model(model: &SystemModel, opts: &CompileOptions) -> Result<BayesNet> {
    compile(model, opts).map(|c| c.net)
}

pub fn compile(model: &SystemModel, opts: &CompileOptions) -> Result<Compiled> {
    let report = model.validate();
    if !report.is_valid() {
        return Err(Error::InvalidModel(report));
    }
    let mut c = Compiler::new(model, *opts);
    c.create_fault_graph()?;
    if model.replicated {
        c.replicated_service()?;
    } else {
        c.redundant_service()?;
    }
    c.finish()
}

/// Incremental builder; the public methods mirror the translation steps.
pub struct Compiler<'m> {
    model: &'m SystemModel,
    opts: CompileOptions,
    net: BayesNet,
    finder: RouteFinder,
    /// Route nodes keyed by their sorted interior component set.
    route_nodes: HashMap<Vec<usize>, NodeRef>,
    route_cache: HashMap<(usize, usize), Vec<Vec<usize>>>,
    channels: Vec<ChannelRef>,
    k_nodes: Vec<NodeRef>,
    comp_nodes: HashMap<String, NodeRef>,
}

impl<'m> Compiler<'m> {
    pub fn new(model: &'m SystemModel, opts: CompileOptions) -> Self {
        Compiler {
            model,
            opts,
            net: BayesNet::new(),
            finder: RouteFinder::new(&model.network),
            route_nodes: HashMap::new(),
            route_cache: HashMap::new(),
            channels: Vec::new(),
            k_nodes: Vec::new(),
            comp_nodes: HashMap::new(),
        }
    }

    pub fn net(&self) -> &BayesNet {
        &self.net
    }

    pub fn channels(&self) -> &[ChannelRef] {
        &self.channels
    }

    pub fn route_node_count(&self) -> usize {
        self.route_nodes.len()
    }

    pub fn finish(self) -> Result<Compiled> {
        self.net.check_complete()?;
        Ok(Compiled {
            net: self.net,
            channels: self.channels,
            k_nodes: self.k_nodes,
            route_nodes: self.route_nodes.len(),
        })
    }

    pub fn component_node(&self, id: &str) -> Result<NodeRef> {
        self.comp_nodes
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownComponent(id.to_string()))
    }

    /// One node per component; fault trees become gate nodes feeding each
    /// component's noisy-AND table. Instances hang off their hosts.
    pub fn create_fault_graph(&mut self) -> Result<()> {
        let model = self.model;
        for c in &model.components {
            let r = self.net.add_node(format!("comp:{}", c.id), 2)?;
            self.comp_nodes.insert(c.id.clone(), r);
        }
        for c in &model.components {
            let node = self.comp_nodes[&c.id];
            match model.fault_tree(&c.id) {
                None => self.net.set_cpd(node, Cpd::prior(c.fault_prob)?)?,
                Some(tree) => {
                    let mut counter = 0;
                    let top = self.compile_tree(&c.id, &tree, &mut counter)?;
                    self.net.add_edge(top, node)?;
                    self.net
                        .set_cpd(node, gates::noisy_and_cpd(c.fault_prob)?)?;
                }
            }
        }
        Ok(())
    }

    fn compile_tree(
        &mut self,
        owner: &str,
        tree: &FaultTree,
        counter: &mut usize,
    ) -> Result<NodeRef> {
        let (kind, inputs) = match tree {
            FaultTree::Leaf(id) => return self.component_node(id),
            FaultTree::And(xs) => (GateKind::And, xs),
            FaultTree::Or(xs) => (GateKind::Or, xs),
            FaultTree::Vote { k, inputs } => (GateKind::KOutOfN(*k), inputs),
        };
        let mut parents = Vec::with_capacity(inputs.len());
        for x in inputs {
            parents.push(self.compile_tree(owner, x, counter)?);
        }
        let id = format!("ft:{owner}/{counter}");
        *counter += 1;
        self.emit_gate(kind, &parents, &id)
    }

    fn use_chain(&self, arity: usize) -> bool {
        match self.opts.gate_mode {
            GateMode::Dense => false,
            GateMode::Scalable => arity >= 2,
            GateMode::Auto => 2f64.powi(arity as i32) > self.opts.dense_cap,
        }
    }

    /// Emit a gate named `id` over `parents`, dense or as a chain.
    fn emit_gate(&mut self, kind: GateKind, parents: &[NodeRef], id: &str) -> Result<NodeRef> {
        let spec = GateSpec::new(kind, parents.len());
        if !self.use_chain(parents.len()) {
            return self.net.add_node_with(id, parents, spec.dense()?);
        }
        let names: Vec<String> = parents
            .iter()
            .map(|p| self.net.node(*p).id.clone())
            .collect();
        let sub = expand_scalable(&spec, &names, id)?;
        let mut last = None;
        for n in sub.nodes {
            let ps = n
                .parents
                .iter()
                .map(|p| self.net.require(p))
                .collect::<Result<Vec<_>>>()?;
            last = Some(self.net.add_node_with(n.id, &ps, n.cpd)?);
        }
        Ok(last.expect("expansion emits at least one node"))
    }

    fn routes_between(&mut self, src: usize, dst: usize) -> Vec<Vec<usize>> {
        if let Some(r) = self.route_cache.get(&(src, dst)) {
            return r.clone();
        }
        let r = self.finder.routes(src, dst, self.opts.route_limit);
        self.route_cache.insert((src, dst), r.clone());
        r
    }

    /// Channel between network nodes `src` and `dst` whose endpoint failure
    /// causes are `x_src` and `x_dst`. Route nodes are shared across channels.
    pub fn create_channel(
        &mut self,
        src: &str,
        dst: &str,
        x_src: NodeRef,
        x_dst: NodeRef,
        name: &str,
    ) -> Result<ChannelRef> {
        let s = self.finder.position(src)?;
        let d = self.finder.position(dst)?;
        let routes = self.routes_between(s, d);

        let mut route_refs: Vec<NodeRef> = Vec::with_capacity(routes.len());
        for path in routes {
            let mut key = path.clone();
            key.sort_unstable();
            let r = match self.route_nodes.get(&key) {
                Some(&r) => r,
                None => {
                    let id = format!("route:R{}", self.route_nodes.len() + 1);
                    let r = if path.is_empty() {
                        self.net.add_node_with(id, &[], Cpd::prior(0.0)?)?
                    } else {
                        let comps = path
                            .iter()
                            .map(|&i| self.component_node(self.finder.id(i)))
                            .collect::<Result<Vec<_>>>()?;
                        self.emit_gate(GateKind::Or, &comps, &id)?
                    };
                    self.route_nodes.insert(key, r);
                    r
                }
            };
            if !route_refs.contains(&r) {
                route_refs.push(r);
            }
        }

        let and_id = format!("and:{name}");
        let and_node = if route_refs.is_empty() {
            // no route at all: the channel can never be established
            self.net.add_node_with(and_id, &[], Cpd::prior(1.0)?)?
        } else {
            self.emit_gate(GateKind::And, &route_refs, &and_id)?
        };
        let id = format!("chan:{name}");
        let node =
            self.net
                .add_node_with(id.clone(), &[and_node, x_src, x_dst], gates::or_cpd(3)?)?;
        let ch = ChannelRef {
            node,
            id,
            and_node,
            src_cause: x_src,
            dst_cause: x_dst,
            routes: route_refs,
        };
        self.channels.push(ch.clone());
        Ok(ch)
    }

    fn host_of(&self, instance: &str) -> Result<&'m str> {
        self.model
            .deployment
            .get(instance)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownComponent(instance.to_string()))
    }

    /// One `K` node per gateway over the channels from that gateway to every
    /// instance; `S` is faulty only if every `K` is.
    pub fn redundant_service(&mut self) -> Result<()> {
        let model = self.model;
        if model.gateways.is_empty() {
            return Err(Error::NoGateway);
        }
        let instances = model.instances();
        let quorum = model.quorum_index();
        let mut ks = Vec::new();
        for (gi, g) in model.gateways.iter().enumerate() {
            let g_node = self.component_node(g)?;
            let mut chans = Vec::with_capacity(instances.len());
            for inst in &instances {
                let host = self.host_of(inst)?;
                let i_node = self.component_node(inst)?;
                let ch = self.create_channel(g, host, g_node, i_node, &format!("{g}-{inst}"))?;
                chans.push(ch.node);
            }
            let k = self.quorum_gate(
                &quorum,
                &chans,
                &positions_except(instances.len(), None),
                None,
                &format!("K:{}", gi + 1),
            )?;
            ks.push(k);
        }
        self.k_nodes = ks.clone();
        let s = self.emit_gate(GateKind::And, &ks, "S")?;
        self.net.set_service(s);
        Ok(())
    }

    /// Channels between every pair of instances feed one `K` node per
    /// instance; gateway channels use `K` as the instance-side cause and `S`
    /// is faulty only if every gateway channel is.
    pub fn replicated_service(&mut self) -> Result<()> {
        let model = self.model;
        if model.gateways.is_empty() {
            return Err(Error::NoGateway);
        }
        let instances = model.instances();
        let n = instances.len();
        if n < 2 {
            return Err(Error::TooFewInstances(n));
        }
        let mut incident: Vec<Vec<NodeRef>> = vec![Vec::with_capacity(n - 1); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (instances[i], instances[j]);
                let ha = self.host_of(a)?;
                let hb = self.host_of(b)?;
                let na = self.component_node(a)?;
                let nb = self.component_node(b)?;
                let ch = self.create_channel(ha, hb, na, nb, &format!("{a}-{b}"))?;
                incident[i].push(ch.node);
                incident[j].push(ch.node);
            }
        }
        // incident[i] is ordered by the peer's position
        let quorum = model.quorum_index();
        let mut ks = Vec::with_capacity(n);
        for (i, chans) in incident.iter().enumerate() {
            let own = self.component_node(instances[i])?;
            let k = self.quorum_gate(
                &quorum,
                chans,
                &positions_except(n, Some(i)),
                Some((i, own)),
                &format!("K:{}", i + 1),
            )?;
            ks.push(k);
        }
        self.k_nodes = ks.clone();

        let mut gateway_chans = Vec::with_capacity(model.gateways.len() * n);
        for g in &model.gateways {
            let g_node = self.component_node(g)?;
            for (j, inst) in instances.iter().enumerate() {
                let host = self.host_of(inst)?;
                let ch = self.create_channel(g, host, g_node, ks[j], &format!("{g}-{inst}"))?;
                gateway_chans.push(ch.node);
            }
        }
        let s = self.emit_gate(GateKind::And, &gateway_chans, "S")?;
        self.net.set_service(s);
        Ok(())
    }

    /// `K` node over channel parents; `peers[j]` is the instance position at
    /// the far end of channel `j`. `own` is the initiating instance in
    /// replicated mode, whose votes count without a channel.
    fn quorum_gate(
        &mut self,
        quorum: &QuorumIndex,
        chans: &[NodeRef],
        peers: &[usize],
        own: Option<(usize, NodeRef)>,
        id: &str,
    ) -> Result<NodeRef> {
        let n_total = self.model.instances().len();
        let m = chans.len();

        // When the initiating instance alone satisfies the quorum, K only
        // needs that instance to be up.
        let own_suffices = own.is_some_and(|(i, _)| {
            let mut up = vec![false; n_total];
            up[i] = true;
            quorum.holds(&up)
        });
        if own_suffices {
            let (_, own_node) = own.expect("checked above");
            return self.net.add_node_with(id, &[own_node], gates::and_cpd(1)?);
        }

        if let Some(t) = quorum.unit_threshold(n_total) {
            let residual = (t as usize).saturating_sub(usize::from(own.is_some()));
            if residual == 0 {
                return self.net.add_node_with(id, &[], Cpd::prior(0.0)?);
            }
            // faulty once more than m - residual channels are faulty
            let k = m - residual + 1;
            let kind = if k == m {
                GateKind::And
            } else if k == 1 {
                GateKind::Or
            } else {
                GateKind::KOutOfN(k)
            };
            return self.emit_gate(kind, chans, id);
        }

        match quorum {
            QuorumIndex::Voting { votes, threshold } => {
                let own_votes = own.map_or(0, |(i, _)| votes[i]);
                let peer_votes: Vec<u64> = peers.iter().map(|&p| votes[p]).collect();
                let kind = GateKind::Weighted {
                    votes: peer_votes,
                    residual: *threshold as i64 - own_votes as i64,
                };
                self.emit_gate(kind, chans, id)
            }
            QuorumIndex::Sets(sets) => {
                if 2f64.powi(m as i32) > self.opts.dense_cap {
                    return Err(Error::ResourceLimit {
                        what: format!("explicit quorum table of `{id}`"),
                        required: 2f64.powi(m as i32),
                        limit: self.opts.dense_cap,
                    });
                }
                let masks: Vec<u64> = sets
                    .iter()
                    .map(|s| s.iter().fold(0u64, |acc, &i| acc | (1 << i)))
                    .collect();
                let parent_bits: Vec<u64> = peers.iter().map(|&p| 1u64 << p).collect();
                let base = own.map_or(0, |(i, _)| 1u64 << i);
                self.net
                    .add_node_with(id, chans, Cpd::path_sets(masks, parent_bits, base))
            }
        }
    }
}

fn positions_except(n: usize, skip: Option<usize>) -> Vec<usize> {
    (0..n).filter(|&i| Some(i) != skip).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Component, ComponentKind, FaultDependencyGraph, NetworkGraph, QuorumSpec};

    fn chain_model() -> SystemModel {
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
                nodes: vec!["G".into(), "H".into()],
                edges: vec![("G".into(), "H".into())],
            },
            deployment: [("I1".to_string(), "H".to_string())].into_iter().collect(),
            gateways: vec!["G".into()],
            replicated: false,
        }
    }

    #[test]
    fn redundant_chain_shape() {
        let c = compile(&chain_model(), &CompileOptions::default()).unwrap();
        let net = &c.net;
        assert_eq!(net.count_prefix("chan:"), 1);
        assert_eq!(net.count_prefix("route:"), 1);
        assert_eq!(net.count_prefix("K:"), 1);
        assert!(net.contains("S"));
        assert_eq!(net.node(net.service().unwrap()).id, "S");
        assert!(net.check_acyclic());
    }

    #[test]
    fn invalid_model_is_rejected() {
        let mut m = chain_model();
        m.gateways.clear();
        assert!(matches!(
            compile(&m, &CompileOptions::default()),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn shared_routes_are_deduplicated() {
        let m = chain_model();
        let mut c = Compiler::new(&m, CompileOptions::default());
        c.create_fault_graph().unwrap();
        let g = c.component_node("G").unwrap();
        let i = c.component_node("I1").unwrap();
        c.create_channel("G", "H", g, i, "a").unwrap();
        let before = c.route_node_count();
        c.create_channel("G", "H", g, i, "b").unwrap();
        assert_eq!(c.route_node_count(), before);
    }

    #[test]
    fn host_fault_tree_gates() {
        use ComponentKind::*;
        let mut m = chain_model();
        for id in ["PSU1", "PSU2", "Rack"] {
            m.components.push(Component::new(id, Infrastructure, 0.05));
            m.fault_graph.edges.push((id.into(), "H".into()));
        }
        m.fault_graph.trees.insert(
            "H".into(),
            FaultTree::Or(vec![
                FaultTree::leaf("Rack"),
                FaultTree::And(vec![FaultTree::leaf("PSU1"), FaultTree::leaf("PSU2")]),
            ]),
        );
        let c = compile(&m, &CompileOptions::with_mode(GateMode::Dense)).unwrap();
        let net = &c.net;
        let inner = net.node(net.lookup("ft:H/0").unwrap());
        let names: Vec<&str> = inner
            .parents
            .iter()
            .map(|p| net.node(*p).id.as_str())
            .collect();
        assert_eq!(names, vec!["comp:PSU1", "comp:PSU2"]);
        let top = net.node(net.lookup("ft:H/1").unwrap());
        let names: Vec<&str> = top
            .parents
            .iter()
            .map(|p| net.node(*p).id.as_str())
            .collect();
        assert_eq!(names, vec!["comp:Rack", "ft:H/0"]);
        let host = net.node(net.lookup("comp:H").unwrap());
        assert_eq!(host.parents, vec![net.lookup("ft:H/1").unwrap()]);
    }
}
