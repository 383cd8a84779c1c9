//! JSON model documents.
//!
//! ```json
//! {
//!   "components": [{"id": "H1", "kind": "host", "q": 0.01}, ...],
//!   "fault_edges": [["Rack", "H1"]],
//!   "fault_trees": {"H1": {"op": "or", "inputs": ["Rack", {"op": "vote:2", "inputs": [...]}]}},
//!   "network_nodes": ["SW", "H1"],
//!   "network_edges": [["SW", "H1"]],
//!   "deployment": {"I1": "H1"},
//!   "gateways": ["SW"],
//!   "quorum": {"votes": [1, 1, 1], "threshold": 2},
//!   "replicated": true
//! }
//! ```
//!
//! `quorum` may instead list explicit member sets: `{"sets": [["I1", "I2"]]}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Component, FaultDependencyGraph, FaultTree, NetworkGraph, QuorumSpec, SystemModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeExpr {
    Leaf(String),
    Gate { op: String, inputs: Vec<TreeExpr> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum QuorumDoc {
    Sets { sets: Vec<Vec<String>> },
    Votes { votes: Vec<u64>, threshold: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub components: Vec<Component>,
    #[serde(default)]
    pub fault_edges: Vec<(String, String)>,
    #[serde(default)]
    pub fault_trees: BTreeMap<String, TreeExpr>,
    pub network_nodes: Vec<String>,
    #[serde(default)]
    pub network_edges: Vec<(String, String)>,
    pub deployment: BTreeMap<String, String>,
    pub gateways: Vec<String>,
    pub quorum: QuorumDoc,
    pub replicated: bool,
}

impl TreeExpr {
    fn from_tree(t: &FaultTree) -> TreeExpr {
        let all = |xs: &[FaultTree]| xs.iter().map(TreeExpr::from_tree).collect();
        match t {
            FaultTree::Leaf(id) => TreeExpr::Leaf(id.clone()),
            FaultTree::And(xs) => TreeExpr::Gate {
                op: "and".into(),
                inputs: all(xs),
            },
            FaultTree::Or(xs) => TreeExpr::Gate {
                op: "or".into(),
                inputs: all(xs),
            },
            FaultTree::Vote { k, inputs } => TreeExpr::Gate {
                op: format!("vote:{k}"),
                inputs: all(inputs),
            },
        }
    }

    fn to_tree(&self, owner: &str) -> Result<FaultTree> {
        match self {
            TreeExpr::Leaf(id) => Ok(FaultTree::Leaf(id.clone())),
            TreeExpr::Gate { op, inputs } => {
                let xs = inputs
                    .iter()
                    .map(|x| x.to_tree(owner))
                    .collect::<Result<Vec<_>>>()?;
                match op.as_str() {
                    "and" => Ok(FaultTree::And(xs)),
                    "or" => Ok(FaultTree::Or(xs)),
                    other => {
                        let k = other
                            .strip_prefix("vote:")
                            .and_then(|k| k.parse::<usize>().ok())
                            .ok_or_else(|| {
                                Error::InvalidGate(format!(
                                    "fault tree of `{owner}` uses unknown operator `{other}`"
                                ))
                            })?;
                        Ok(FaultTree::Vote { k, inputs: xs })
                    }
                }
            }
        }
    }
}

impl ModelDocument {
    pub fn from_model(m: &SystemModel) -> ModelDocument {
        ModelDocument {
            components: m.components.clone(),
            fault_edges: m.fault_graph.edges.clone(),
            fault_trees: m
                .fault_graph
                .trees
                .iter()
                .map(|(k, t)| (k.clone(), TreeExpr::from_tree(t)))
                .collect(),
            network_nodes: m.network.nodes.clone(),
            network_edges: m.network.edges.clone(),
            deployment: m.deployment.clone(),
            gateways: m.gateways.clone(),
            quorum: match &m.quorum {
                QuorumSpec::Sets(sets) => QuorumDoc::Sets {
                    sets: sets.iter().map(|s| s.iter().cloned().collect()).collect(),
                },
                QuorumSpec::Voting { votes, threshold } => QuorumDoc::Votes {
                    votes: votes.clone(),
                    threshold: *threshold,
                },
            },
            replicated: m.replicated,
        }
    }

    /// Convert to a model. Structural checks are left to
    /// [`SystemModel::validate`].
    pub fn to_model(&self) -> Result<SystemModel> {
        let trees = self
            .fault_trees
            .iter()
            .map(|(k, t)| Ok((k.clone(), t.to_tree(k)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(SystemModel {
            components: self.components.clone(),
            quorum: match &self.quorum {
                QuorumDoc::Sets { sets } => QuorumSpec::Sets(
                    sets.iter()
                        .map(|s| s.iter().cloned().collect::<BTreeSet<_>>())
                        .collect(),
                ),
                QuorumDoc::Votes { votes, threshold } => QuorumSpec::Voting {
                    votes: votes.clone(),
                    threshold: *threshold,
                },
            },
            fault_graph: FaultDependencyGraph {
                edges: self.fault_edges.clone(),
                trees,
            },
            network: NetworkGraph {
                nodes: self.network_nodes.clone(),
                edges: self.network_edges.clone(),
            },
            deployment: self.deployment.clone(),
            gateways: self.gateways.clone(),
            replicated: self.replicated,
        })
    }
}

pub fn parse_model(json: &str) -> Result<SystemModel> {
    serde_json::from_str::<ModelDocument>(json)?.to_model()
}

pub fn to_json(m: &SystemModel) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ModelDocument::from_model(m))?;
    s.push('\n');
    Ok(s)
}

pub fn load_model(path: &Path) -> Result<SystemModel> {
    parse_model(&std::fs::read_to_string(path)?)
}
