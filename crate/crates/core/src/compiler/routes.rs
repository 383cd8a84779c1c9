//! Simple-path enumeration over the network graph.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::NetworkGraph;

/// A simple path between two network nodes, endpoints excluded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    pub components: Vec<String>,
}

/// Index-based view of a network graph for repeated route queries.
#[derive(Debug, Clone)]
pub struct RouteFinder {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    /// Neighbors sorted by id so DFS yields lexicographic order.
    adj: Vec<Vec<usize>>,
}

impl RouteFinder {
    pub fn new(network: &NetworkGraph) -> Self {
        let adjacency = network.adjacency();
        let ids: Vec<String> = adjacency.keys().map(|s| s.to_string()).collect();
        let index: HashMap<String, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let adj = adjacency
            .values()
            .map(|ns| ns.iter().map(|n| index[*n]).collect())
            .collect();
        RouteFinder { ids, index, adj }
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::NotInNetwork(id.to_string()))
    }

    /// Interior node indices of every simple path from `src` to `dst`,
    /// shortest first, then lexicographic by id. `src == dst` yields one
    /// empty route.
    pub fn routes(&self, src: usize, dst: usize, limit: Option<usize>) -> Vec<Vec<usize>> {
        if src == dst {
            return if limit == Some(0) {
                Vec::new()
            } else {
                vec![Vec::new()]
            };
        }
        let mut out = Vec::new();
        match limit {
            None => {
                self.dfs(src, dst, usize::MAX, &mut out);
                out.sort_by_key(|p| p.len());
            }
            Some(limit) => {
                // Grow the exact path length until enough routes are found.
                for len in 0..self.ids.len().saturating_sub(1) {
                    let mut level = Vec::new();
                    self.dfs(src, dst, len, &mut level);
                    level.retain(|p| p.len() == len);
                    out.extend(level);
                    if out.len() >= limit {
                        break;
                    }
                }
                out.truncate(limit);
            }
        }
        out
    }

    fn dfs(&self, src: usize, dst: usize, max_interior: usize, out: &mut Vec<Vec<usize>>) {
        let mut on_path = vec![false; self.ids.len()];
        on_path[src] = true;
        let mut path = Vec::new();
        // Explicit stack of (node, next neighbor position).
        let mut stack: Vec<(usize, usize)> = vec![(src, 0)];
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            if top.1 >= self.adj[node].len() {
                stack.pop();
                if node != src {
                    on_path[node] = false;
                    path.pop();
                }
                continue;
            }
            let nb = self.adj[node][top.1];
            top.1 += 1;
            if on_path[nb] {
                continue;
            }
            if nb == dst {
                out.push(path.clone());
                continue;
            }
            if path.len() < max_interior {
                on_path[nb] = true;
                path.push(nb);
                stack.push((nb, 0));
            }
        }
    }
}

/// All simple routes between two network nodes, shortest first then
/// lexicographic, truncated to `limit`.
pub fn enumerate_routes(
    network: &NetworkGraph,
    src: &str,
    dst: &str,
    limit: Option<usize>,
) -> Result<Vec<Route>> {
    let finder = RouteFinder::new(network);
    let s = finder.position(src)?;
    let d = finder.position(dst)?;
    Ok(finder
        .routes(s, d, limit)
        .into_iter()
        .map(|p| Route {
            components: p.into_iter().map(|i| finder.id(i).to_string()).collect(),
        })
        .collect())
}
