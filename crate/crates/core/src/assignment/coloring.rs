use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AssignmentInstance;
use crate::error::{Error, Result};

/// Graphs up to this many vertices are colored by exhaustive search.
pub const EXACT_COLORING_CAP: usize = 20;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    vertices: Vec<u32>,
    edges: Vec<(u32, u32)>,
    #[serde(default)]
    k_star: Option<usize>,
}

/// Conflict graph: vertices are entangled states (demands), edges join
/// states that interfere on some resource state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile")]
pub struct ConflictGraph {
    pub vertices: Vec<u32>,
    /// Undirected edges stored as `(low, high)`.
    pub edges: BTreeSet<(u32, u32)>,
    /// Number of interfering states.
    pub k_star: usize,
}

impl TryFrom<GraphFile> for ConflictGraph {
    type Error = Error;

    fn try_from(file: GraphFile) -> Result<Self> {
        let mut g = ConflictGraph::new(file.vertices, file.edges)?;
        if let Some(k_star) = file.k_star {
            g.k_star = k_star;
        }
        Ok(g)
    }
}

impl ConflictGraph {
    /// Simple graph on `vertices`; `k_star` counts the non-isolated ones.
    pub fn new(vertices: impl IntoIterator<Item = u32>, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let vertices: Vec<u32> = vertices.into_iter().collect();
        let set: BTreeSet<u32> = vertices.iter().copied().collect();
        if set.len() != vertices.len() {
            return Err(Error::InvalidInstance("duplicate vertex".into()));
        }
        let mut normalized = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidInstance(format!("self-loop on vertex {a}")));
            }
            if !set.contains(&a) || !set.contains(&b) {
                return Err(Error::InvalidInstance(format!(
                    "edge ({a}, {b}) names an unknown vertex"
                )));
            }
            normalized.insert((a.min(b), a.max(b)));
        }
        let k_star = normalized
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .collect::<BTreeSet<_>>()
            .len();
        Ok(ConflictGraph {
            vertices,
            edges: normalized,
            k_star,
        })
    }

    pub fn neighbors(&self) -> BTreeMap<u32, BTreeSet<u32>> {
        let mut out: BTreeMap<u32, BTreeSet<u32>> = self.vertices.iter().map(|v| (*v, BTreeSet::new())).collect();
        for (a, b) in &self.edges {
            out.entry(*a).or_default().insert(*b);
            out.entry(*b).or_default().insert(*a);
        }
        out
    }
}

/// Conflict graph of an instance: one vertex per demand, one edge per pair
/// of demands competing in the same interference set. `k_star` is the
/// number of demands that appear in any interference set.
pub fn build_conflict_graph(instance: &AssignmentInstance) -> ConflictGraph {
    let mut edges = BTreeSet::new();
    let mut interfering = BTreeSet::new();
    for set in instance.interference() {
        for (i, a) in set.competing.iter().enumerate() {
            interfering.insert(a.demand.0);
            for b in &set.competing[i + 1..] {
                if a.demand != b.demand {
                    edges.insert((a.demand.0.min(b.demand.0), a.demand.0.max(b.demand.0)));
                }
            }
        }
    }
    ConflictGraph {
        vertices: instance.demand_ids().map(|q| q.0).collect(),
        edges,
        k_star: interfering.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub color: BTreeMap<u32, u32>,
}

impl Coloring {
    /// Every vertex colored below `colors`, no edge monochromatic.
    pub fn is_proper(&self, graph: &ConflictGraph, colors: u32) -> bool {
        graph
            .vertices
            .iter()
            .all(|v| self.color.get(v).is_some_and(|c| *c < colors))
            && graph.edges.iter().all(|(a, b)| self.color.get(a) != self.color.get(b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ColoringResult {
    Colored(Coloring),
    /// Exhaustive search proved no coloring exists.
    Infeasible,
    /// Greedy coloring failed on a graph too large for exhaustive search.
    Unknown,
}

/// Proper coloring with at most `colors` colors.
pub fn color_graph(graph: &ConflictGraph, colors: u32) -> ColoringResult {
    let neighbors = graph.neighbors();
    // largest degree first, ties by vertex id
    let mut order: Vec<u32> = graph.vertices.clone();
    order.sort_by_key(|v| (std::cmp::Reverse(neighbors[v].len()), *v));

    if graph.vertices.len() <= EXACT_COLORING_CAP {
        let mut color = BTreeMap::new();
        if backtrack(&order, &neighbors, colors, &mut color) {
            ColoringResult::Colored(Coloring { color })
        } else {
            ColoringResult::Infeasible
        }
    } else {
        let mut color = BTreeMap::new();
        for v in &order {
            let used: BTreeSet<u32> = neighbors[v].iter().filter_map(|u| color.get(u).copied()).collect();
            let c = (0..).find(|c| !used.contains(c)).unwrap_or(u32::MAX);
            if c >= colors {
                return ColoringResult::Unknown;
            }
            color.insert(*v, c);
        }
        ColoringResult::Colored(Coloring { color })
    }
}

fn backtrack(
    order: &[u32],
    neighbors: &BTreeMap<u32, BTreeSet<u32>>,
    colors: u32,
    color: &mut BTreeMap<u32, u32>,
) -> bool {
    let Some((&v, rest)) = order.split_first() else {
        return true;
    };
    // a fresh color is interchangeable with any other unused one
    let fresh = color.values().max().map_or(0, |m| m + 1);
    for c in 0..colors.min(fresh + 1) {
        if neighbors[&v].iter().any(|u| color.get(u) == Some(&c)) {
            continue;
        }
        color.insert(v, c);
        if backtrack(rest, neighbors, colors, color) {
            return true;
        }
        color.remove(&v);
    }
    false
}
