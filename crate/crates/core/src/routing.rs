//! Decentralized greedy forwarding over the adapted link set.
//!
//! Each node only knows its own position, its contacts' positions and the
//! target's position. It forwards to the unvisited contact closest (L1) to
//! the target; ties go to the lowest node id. A node with no unvisited
//! contact hands the message back to its predecessor. The breadth-first
//! [`shortest_path_oracle`] gives the true minimum for comparison.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::adaption::AdaptedLinkSet;
use crate::error::{Error, Result};
use crate::lattice::{l1_distance, BaseGraph, LatticeCoord};
use crate::overlay::{LinkId, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn trivial(node: NodeId) -> Self {
        Path {
            nodes: vec![node],
            links: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Consecutive node pairs with the link joining them.
    pub fn hops(&self) -> impl Iterator<Item = (NodeId, NodeId, LinkId)> + '_ {
        self.nodes.windows(2).zip(&self.links).map(|(w, l)| (w[0], w[1], *l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteStatus {
    Found,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    pub status: RouteStatus,
    pub path: Option<Path>,
    /// Edge count of the returned path; 0 when unreachable.
    pub diameter: usize,
    /// Forwarding decisions, backtracks included.
    pub steps_taken: usize,
}

impl RoutingOutcome {
    pub fn found(path: Path, steps_taken: usize) -> Self {
        RoutingOutcome {
            status: RouteStatus::Found,
            diameter: path.len(),
            path: Some(path),
            steps_taken,
        }
    }

    pub fn unreachable(steps_taken: usize) -> Self {
        RoutingOutcome {
            status: RouteStatus::Unreachable,
            path: None,
            diameter: 0,
            steps_taken,
        }
    }

    pub fn is_found(&self) -> bool {
        self.status == RouteStatus::Found
    }
}

/// Adjacency over `S*` prepared once for repeated queries.
pub struct Router<'a> {
    index: HashMap<NodeId, usize>,
    ids: Vec<NodeId>,
    coords: Vec<&'a LatticeCoord>,
    adjacency: Vec<Vec<(usize, LinkId)>>,
}

impl<'a> Router<'a> {
    pub fn new(graph: &'a BaseGraph, adapted: &AdaptedLinkSet) -> Self {
        let ids: Vec<NodeId> = graph.placement().keys().copied().collect();
        let coords = graph.placement().values().collect();
        let index: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let adjacency = ids
            .iter()
            .map(|id| {
                let mut out: Vec<(usize, LinkId)> = Vec::new();
                // contacts are sorted by (neighbor, link): the first hit per
                // neighbor is its lowest usable link
                for c in graph.contacts(*id) {
                    if !adapted.contains(c.link) {
                        continue;
                    }
                    let Some(&j) = index.get(&c.node) else { continue };
                    if out.last().map(|(n, _)| *n) != Some(j) {
                        out.push((j, c.link));
                    }
                }
                out
            })
            .collect();
        Router {
            index,
            ids,
            coords,
            adjacency,
        }
    }

    fn lookup(&self, node: NodeId) -> Result<usize> {
        self.index.get(&node).copied().ok_or(Error::UnmappedNode(node))
    }

    fn distance(&self, a: usize, b: usize) -> u64 {
        // all coordinates come from one lattice, so dimensions agree
        l1_distance(self.coords[a], self.coords[b]).unwrap_or(u64::MAX)
    }

    pub fn route(&self, source: NodeId, target: NodeId) -> Result<RoutingOutcome> {
        self.route_avoiding(source, target, &BTreeSet::new())
    }

    /// Greedy route that never enters a node of `avoid` (the source is
    /// always allowed).
    pub fn route_avoiding(&self, source: NodeId, target: NodeId, avoid: &BTreeSet<NodeId>) -> Result<RoutingOutcome> {
        let s = self.lookup(source)?;
        let t = self.lookup(target)?;
        if s == t {
            return Ok(RoutingOutcome::found(Path::trivial(source), 0));
        }
        let mut visited = vec![false; self.ids.len()];
        for node in avoid {
            if let Some(&i) = self.index.get(node) {
                visited[i] = true;
            }
        }
        visited[s] = true;

        let mut stack: Vec<(usize, Option<LinkId>)> = vec![(s, None)];
        let mut steps = 0;
        while let Some(&(current, _)) = stack.last() {
            if current == t {
                let nodes = stack.iter().map(|(i, _)| self.ids[*i]).collect();
                let links = stack.iter().filter_map(|(_, l)| *l).collect();
                return Ok(RoutingOutcome::found(Path { nodes, links }, steps));
            }
            let next = self.adjacency[current]
                .iter()
                .filter(|(j, _)| !visited[*j])
                .min_by_key(|(j, _)| (self.distance(*j, t), self.ids[*j]));
            steps += 1;
            match next {
                Some(&(j, link)) => {
                    visited[j] = true;
                    stack.push((j, Some(link)));
                }
                None => {
                    stack.pop();
                }
            }
        }
        Ok(RoutingOutcome::unreachable(steps))
    }
}

/// Routes `source -> target` over the links of `adapted` only.
pub fn route(graph: &BaseGraph, adapted: &AdaptedLinkSet, source: NodeId, target: NodeId) -> Result<RoutingOutcome> {
    Router::new(graph, adapted).route(source, target)
}

/// Minimum-hop path by breadth-first search over `S*`. Neighbors are
/// expanded in node-id order; `steps_taken` counts expanded nodes.
pub fn shortest_path_oracle(
    graph: &BaseGraph,
    adapted: &AdaptedLinkSet,
    source: NodeId,
    target: NodeId,
) -> Result<RoutingOutcome> {
    for node in [source, target] {
        if graph.coord(node).is_none() {
            return Err(Error::UnmappedNode(node));
        }
    }
    if source == target {
        return Ok(RoutingOutcome::found(Path::trivial(source), 0));
    }
    let mut parent: HashMap<NodeId, (NodeId, LinkId)> = HashMap::new();
    let mut queue = VecDeque::from([source]);
    let mut expanded = 0;
    while let Some(node) = queue.pop_front() {
        expanded += 1;
        for c in graph.contacts(node) {
            if !adapted.contains(c.link) || c.node == source || parent.contains_key(&c.node) {
                continue;
            }
            parent.insert(c.node, (node, c.link));
            if c.node == target {
                let mut nodes = vec![target];
                let mut links = Vec::new();
                let mut at = target;
                while at != source {
                    let (prev, link) = parent[&at];
                    links.push(link);
                    nodes.push(prev);
                    at = prev;
                }
                nodes.reverse();
                links.reverse();
                return Ok(RoutingOutcome::found(Path { nodes, links }, expanded));
            }
            queue.push_back(c.node);
        }
    }
    Ok(RoutingOutcome::unreachable(expanded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{map_overlay, PlacementSpec};
    use crate::overlay::{EntangledLink, OverlayNetwork};

    fn on_line(nodes: u32, edges: &[(u32, u32)]) -> (OverlayNetwork, BaseGraph) {
        let links = edges
            .iter()
            .enumerate()
            .map(|(i, (a, b))| EntangledLink::ideal(i as u32, *a, *b, 1));
        let net = OverlayNetwork::checked((0..nodes).map(NodeId), links).unwrap();
        let spec = PlacementSpec::Explicit((0..nodes).map(|i| (NodeId(i), LatticeCoord::new(vec![i]))).collect());
        let g = map_overlay(&net, 1, nodes.max(2), &spec).unwrap();
        (net, g)
    }

    #[test]
    fn same_node_is_trivial() {
        let (net, g) = on_line(3, &[(0, 1), (1, 2)]);
        let out = route(&g, &AdaptedLinkSet::all(&net), NodeId(1), NodeId(1)).unwrap();
        assert!(out.is_found());
        assert_eq!(out.diameter, 0);
        assert!(out.path.unwrap().links.is_empty());
    }

    #[test]
    fn line_of_six() {
        let (net, g) = on_line(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        let s = AdaptedLinkSet::all(&net);
        let out = route(&g, &s, NodeId(0), NodeId(5)).unwrap();
        assert_eq!(out.diameter, 5);
        assert_eq!(out.steps_taken, 5);
        assert_eq!(shortest_path_oracle(&g, &s, NodeId(0), NodeId(5)).unwrap().diameter, 5);
    }

    #[test]
    fn disconnected_target() {
        let (net, g) = on_line(4, &[(0, 1), (2, 3)]);
        let s = AdaptedLinkSet::all(&net);
        let out = route(&g, &s, NodeId(0), NodeId(3)).unwrap();
        assert_eq!(out.status, RouteStatus::Unreachable);
        assert!(out.path.is_none());
        assert_eq!(
            shortest_path_oracle(&g, &s, NodeId(0), NodeId(3)).unwrap().status,
            RouteStatus::Unreachable
        );
        assert!(matches!(
            route(&g, &s, NodeId(0), NodeId(9)),
            Err(Error::UnmappedNode(_))
        ));
    }

    #[test]
    fn dead_end_backtracks() {
        // 0 - 2 - 3 where 2 is a dead end for target 4 reached through 1
        let (net, g) = on_line(5, &[(0, 2), (2, 3), (0, 1), (1, 4)]);
        let s = AdaptedLinkSet::all(&net);
        let out = route(&g, &s, NodeId(0), NodeId(4)).unwrap();
        let path = out.path.clone().unwrap();
        assert_eq!(path.nodes, vec![NodeId(0), NodeId(1), NodeId(4)]);
        assert!(out.steps_taken > out.diameter);
    }

    #[test]
    fn oracle_examples() {
        let (net, g) = on_line(2, &[(0, 1)]);
        let s = AdaptedLinkSet::all(&net);
        assert_eq!(shortest_path_oracle(&g, &s, NodeId(0), NodeId(1)).unwrap().diameter, 1);

        // 4-cycle 0-1-2-3-0, opposite corners 0 and 2
        let (net, g) = on_line(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let s = AdaptedLinkSet::all(&net);
        assert_eq!(shortest_path_oracle(&g, &s, NodeId(0), NodeId(2)).unwrap().diameter, 2);
        assert!(route(&g, &s, NodeId(0), NodeId(2)).unwrap().diameter >= 2);
    }

    #[test]
    fn only_adapted_links_are_used() {
        let (net, g) = on_line(3, &[(0, 2), (0, 1), (1, 2)]);
        let mut s = AdaptedLinkSet::all(&net);
        s.links.remove(&LinkId(0));
        let out = route(&g, &s, NodeId(0), NodeId(2)).unwrap();
        assert_eq!(out.path.unwrap().links, vec![LinkId(1), LinkId(2)]);
    }

    #[test]
    fn avoid_set_blocks_nodes() {
        let (net, g) = on_line(4, &[(0, 1), (1, 3), (0, 2), (2, 3)]);
        let s = AdaptedLinkSet::all(&net);
        let router = Router::new(&g, &s);
        let out = router
            .route_avoiding(NodeId(0), NodeId(3), &BTreeSet::from([NodeId(2)]))
            .unwrap();
        assert_eq!(out.path.unwrap().nodes, vec![NodeId(0), NodeId(1), NodeId(3)]);
        let out = router
            .route_avoiding(NodeId(0), NodeId(3), &BTreeSet::from([NodeId(1), NodeId(2)]))
            .unwrap();
        assert!(!out.is_found());
    }
}
