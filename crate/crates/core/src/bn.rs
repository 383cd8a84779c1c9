//! Discrete Bayesian network container.
//!
//! Parent order of a node is the order in which its in-edges were added;
//! its [`Cpd`] is indexed relative to that order.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::io;

use crate::error::{Error, Result};
use crate::gates::Cpd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef(pub usize);

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub card: usize,
    pub parents: Vec<NodeRef>,
    pub cpd: Option<Cpd>,
}

#[derive(Debug, Clone, Default)]
pub struct BayesNet {
    nodes: Vec<Node>,
    index: HashMap<String, NodeRef>,
    edges: usize,
    service: Option<NodeRef>,
}

/// Dumps print full tables only up to this many parent combinations.
const DUMP_MAX_COLUMNS: f64 = 64.0;

impl BayesNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, r: NodeRef) -> &Node {
        &self.nodes[r.0]
    }

    pub fn lookup(&self, id: &str) -> Option<NodeRef> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<NodeRef> {
        self.lookup(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn add_node(&mut self, id: impl Into<String>, card: usize) -> Result<NodeRef> {
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateNode(id));
        }
        let r = NodeRef(self.nodes.len());
        self.index.insert(id.clone(), r);
        self.nodes.push(Node {
            id,
            card,
            parents: Vec::new(),
            cpd: None,
        });
        Ok(r)
    }

    /// Append `parent` to the parent list of `child`. Cycles are not
    /// detected here; see [`BayesNet::check_acyclic`].
    pub fn add_edge(&mut self, parent: NodeRef, child: NodeRef) -> Result<()> {
        if parent.0 >= self.nodes.len() {
            return Err(Error::UnknownNode(format!("#{}", parent.0)));
        }
        if child.0 >= self.nodes.len() {
            return Err(Error::UnknownNode(format!("#{}", child.0)));
        }
        self.nodes[child.0].parents.push(parent);
        self.edges += 1;
        Ok(())
    }

    /// Attach a CPD whose parent cardinalities match the node's current parents.
    pub fn set_cpd(&mut self, node: NodeRef, cpd: Cpd) -> Result<()> {
        let actual: Vec<usize> = self.nodes[node.0]
            .parents
            .iter()
            .map(|p| self.nodes[p.0].card)
            .collect();
        let n = &self.nodes[node.0];
        if cpd.parent_cards() != actual.as_slice() || cpd.card() != n.card {
            return Err(Error::CpdMismatch {
                node: n.id.clone(),
                expected: cpd.arity(),
                cards: cpd.parent_cards().to_vec(),
                actual,
            });
        }
        self.nodes[node.0].cpd = Some(cpd);
        Ok(())
    }

    /// Add a node together with its in-edges and CPD.
    pub fn add_node_with(
        &mut self,
        id: impl Into<String>,
        parents: &[NodeRef],
        cpd: Cpd,
    ) -> Result<NodeRef> {
        let r = self.add_node(id, cpd.card())?;
        for &p in parents {
            self.add_edge(p, r)?;
        }
        self.set_cpd(r, cpd)?;
        Ok(r)
    }

    pub fn set_service(&mut self, node: NodeRef) {
        self.service = Some(node);
    }

    pub fn service(&self) -> Option<NodeRef> {
        self.service
    }

    pub fn check_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Kahn order; parents before children.
    pub fn topological_order(&self) -> Result<Vec<NodeRef>> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = self.nodes.iter().map(|x| x.parents.len()).collect();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            for p in &node.parents {
                children[p.0].push(i);
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(NodeRef(i));
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(Error::Cyclic)
        }
    }

    /// Mask of `node` and all of its ancestors.
    pub fn ancestors(&self, node: NodeRef) -> Vec<bool> {
        let mut mark = vec![false; self.nodes.len()];
        let mut stack = vec![node.0];
        mark[node.0] = true;
        while let Some(i) = stack.pop() {
            for p in &self.nodes[i].parents {
                if !mark[p.0] {
                    mark[p.0] = true;
                    stack.push(p.0);
                }
            }
        }
        mark
    }

    /// Every node carries a CPD consistent with its parents, and the graph is a DAG.
    pub fn check_complete(&self) -> Result<()> {
        for node in &self.nodes {
            let cpd = node
                .cpd
                .as_ref()
                .ok_or_else(|| Error::MissingCpd(node.id.clone()))?;
            let actual: Vec<usize> = node.parents.iter().map(|p| self.nodes[p.0].card).collect();
            if cpd.parent_cards() != actual.as_slice() || cpd.card() != node.card {
                return Err(Error::CpdMismatch {
                    node: node.id.clone(),
                    expected: cpd.arity(),
                    cards: cpd.parent_cards().to_vec(),
                    actual,
                });
            }
        }
        self.topological_order().map(|_| ())
    }

    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.id.starts_with(prefix))
            .count()
    }

    /// Text dump, one node per line:
    /// `id <TAB> card <TAB> parents <TAB> rule <TAB> table`.
    ///
    /// The table lists one `|`-separated column per parent combination, or
    /// `-` when there are more than 64 columns.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        if let Some(s) = self.service {
            let _ = writeln!(out, "# service\t{}", self.nodes[s.0].id);
        }
        for node in &self.nodes {
            let parents: Vec<&str> = node
                .parents
                .iter()
                .map(|p| self.nodes[p.0].id.as_str())
                .collect();
            let (rule, table) = match &node.cpd {
                None => ("none".to_string(), "-".to_string()),
                Some(cpd) if cpd.columns() <= DUMP_MAX_COLUMNS => {
                    let cols: Vec<String> = cpd
                        .dense()
                        .chunks(cpd.card())
                        .map(|c| {
                            c.iter()
                                .map(|p| p.to_string())
                                .collect::<Vec<_>>()
                                .join(",")
                        })
                        .collect();
                    (cpd.describe(), cols.join("|"))
                }
                Some(cpd) => (cpd.describe(), "-".to_string()),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                node.id,
                node.card,
                parents.join(","),
                rule,
                table
            );
        }
        out
    }

    pub fn write_dump(&self, w: &mut impl io::Write) -> Result<()> {
        w.write_all(self.dump().as_bytes())?;
        Ok(())
    }
}
