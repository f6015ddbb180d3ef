use super::{AssignmentInstance, Competitor, ConflictGraph, Demand, DemandId, InterferenceSet, StateRef};
use crate::adaption::AdaptedLinkSet;
use crate::error::{Error, Result};
use crate::lattice::{map_overlay, LatticeCoord, PlacementSpec};
use crate::overlay::{EntangledLink, LinkId, NodeId, OverlayNetwork};

/// Builds an assignment instance that is feasible exactly when `graph` has
/// a proper coloring with `colors` colors.
///
/// Every vertex `i` becomes a demand from its own source node `i` through a
/// hub to a shared target. The hub-target link stores one state per color
/// and has room for all demands; each edge makes its endpoints interfere on
/// every one of those states, so adjacent vertices must take different
/// states.
pub fn reduction_from_coloring(graph: &ConflictGraph, colors: u32) -> Result<AssignmentInstance> {
    if colors == 0 {
        return Err(Error::InvalidInstance("the reduction needs at least one color".into()));
    }
    let n = graph.vertices.len() as u32;
    let hub = n;
    let target = n + 1;
    let index = |v: u32| graph.vertices.iter().position(|w| *w == v).map(|i| i as u32);

    let mut links: Vec<EntangledLink> = (0..n).map(|i| EntangledLink::ideal(i, i, hub, 1)).collect();
    links.push(EntangledLink {
        throughput: f64::from(n.max(1)),
        resource_count: colors,
        ..EntangledLink::ideal(n, hub, target, 1)
    });
    let network = OverlayNetwork::checked((0..n + 2).map(NodeId), links)?;
    let placement = (0..n + 2).map(|i| (NodeId(i), LatticeCoord::new(vec![i]))).collect();
    let lattice = map_overlay(&network, 1, (n + 2).max(2), &PlacementSpec::Explicit(placement))?;
    let adapted = AdaptedLinkSet::all(&network);

    let demands = graph
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| Demand {
            user: *v,
            source: NodeId(i as u32),
            target: NodeId(target),
            rate: 1.0,
        })
        .collect();

    let mut interference = Vec::new();
    for (a, b) in &graph.edges {
        let (Some(ia), Some(ib)) = (index(*a), index(*b)) else {
            return Err(Error::InvalidInstance(format!(
                "edge ({a}, {b}) names an unknown vertex"
            )));
        };
        for state in 0..colors {
            interference.push(InterferenceSet {
                resource_state: StateRef { link: LinkId(n), state },
                competing: vec![
                    Competitor {
                        user: *a,
                        demand: DemandId(ia),
                    },
                    Competitor {
                        user: *b,
                        demand: DemandId(ib),
                    },
                ],
            });
        }
    }
    AssignmentInstance::new(network, lattice, adapted, demands, interference)
}

#[cfg(test)]
mod tests {
    use super::super::{build_conflict_graph, check_solution, solve_exact};
    use super::*;

    fn feasible(graph: &ConflictGraph, colors: u32) -> bool {
        let inst = reduction_from_coloring(graph, colors).unwrap();
        match solve_exact(&inst).unwrap() {
            Some(sol) => {
                assert!(check_solution(&inst, &sol).unwrap().is_valid());
                true
            }
            None => false,
        }
    }

    #[test]
    fn reduction_examples() {
        let edgeless = ConflictGraph::new([0, 1, 2], []).unwrap();
        assert!(feasible(&edgeless, 1));
        let edge = ConflictGraph::new([0, 1], [(0, 1)]).unwrap();
        assert!(!feasible(&edge, 1));
        let triangle = ConflictGraph::new([0, 1, 2], [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(feasible(&triangle, 3));
        assert!(!feasible(&triangle, 2));
        assert!(reduction_from_coloring(&triangle, 0).is_err());
    }

    #[test]
    fn conflict_graph_round_trips() {
        let g = ConflictGraph::new([0, 1, 2, 3], [(0, 1), (1, 2), (2, 3)]).unwrap();
        let inst = reduction_from_coloring(&g, 2).unwrap();
        assert_eq!(build_conflict_graph(&inst).edges, g.edges);
    }

    #[test]
    fn empty_graph() {
        let g = ConflictGraph::new([], []).unwrap();
        assert!(feasible(&g, 1));
    }
}
