//! Multi-user entanglement assignment over the adapted network.
//!
//! Every demand needs a simple path from its source to its target with one
//! stored entangled state reserved on each traversed link. Link throughput
//! bounds the summed demand rates on a link, and each interference set lets
//! at most one of its competing demands take the contested state. The cost
//! of an assignment is the summed unreliability `1 - p*` of the reserved
//! states.

mod checks;
mod coloring;
mod exact;
mod greedy;
mod reduction;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::adaption::AdaptedLinkSet;
use crate::error::{Error, Result};
use crate::lattice::{BaseGraph, Embedding};
use crate::overlay::{EntangledLink, LinkId, NodeId, OverlayNetwork};
use crate::routing::Path;

pub use checks::{
    check_capacity, check_flow, check_interference, check_solution, flow_imbalance, objective, CapacityViolation,
    InterferenceViolation, SolutionReport,
};
pub use coloring::{build_conflict_graph, color_graph, Coloring, ColoringResult, ConflictGraph, EXACT_COLORING_CAP};
pub use exact::{candidate_paths, solve_exact, solve_exact_with, variable_count, ExactConfig};
pub use greedy::{solve_greedy, GreedyOutcome};
pub use reduction::reduction_from_coloring;

/// Index of a demand within its instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemandId(pub u32);

impl fmt::Display for DemandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "demand {}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demand {
    pub user: u32,
    pub source: NodeId,
    pub target: NodeId,
    /// Requested entangled states per second.
    pub rate: f64,
}

/// One stored entangled state: state `state` of link `link`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRef {
    pub link: LinkId,
    pub state: u32,
}

impl fmt::Display for StateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "state {} of {}", self.state, self.link)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSet {
    pub link: LinkId,
    pub states: Vec<u32>,
}

impl ResourceSet {
    pub fn for_link(link: &EntangledLink) -> Self {
        ResourceSet {
            link: link.id,
            states: (0..link.resource_count).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Competitor {
    pub user: u32,
    pub demand: DemandId,
}

/// Demands contending for one resource state; at most one may hold it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSet {
    pub resource_state: StateRef,
    pub competing: Vec<Competitor>,
}

/// `C` entry: `user` holds `state` of `link`, traversing it away from `from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub user: u32,
    pub link: LinkId,
    pub state: u32,
    pub from: NodeId,
}

impl Assignment {
    pub fn state_ref(&self) -> StateRef {
        StateRef {
            link: self.link,
            state: self.state,
        }
    }
}

/// `K` entry: `demand` of `user` was granted a contested resource state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grant {
    pub user: u32,
    pub demand: DemandId,
    pub state: StateRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentSolution {
    pub c: Vec<Assignment>,
    pub k: Vec<Grant>,
}

/// One traversed link of a demand's route with the state reserved on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub from: NodeId,
    pub to: NodeId,
    pub link: LinkId,
    pub state: u32,
}

impl AssignmentSolution {
    /// Builds `C` from per-demand hops and derives `K` from the instance's
    /// interference sets.
    pub fn from_routes<'a>(
        instance: &AssignmentInstance,
        routes: impl IntoIterator<Item = (DemandId, &'a [Hop])>,
    ) -> Self {
        let mut c = Vec::new();
        let mut k = Vec::new();
        for (q, hops) in routes {
            let user = instance.demands[q.0 as usize].user;
            for hop in hops {
                let a = Assignment {
                    user,
                    link: hop.link,
                    state: hop.state,
                    from: hop.from,
                };
                c.push(a);
                if instance.is_contested(a.state_ref(), q) {
                    k.push(Grant {
                        user,
                        demand: q,
                        state: a.state_ref(),
                    });
                }
            }
        }
        c.sort();
        k.sort();
        AssignmentSolution { c, k }
    }

    /// Users holding at least one state.
    pub fn served_users(&self) -> BTreeSet<u32> {
        self.c.iter().map(|a| a.user).collect()
    }

    /// Union of two solutions over disjoint user sets.
    pub fn merged(&self, other: &AssignmentSolution) -> AssignmentSolution {
        let mut c: Vec<_> = self.c.iter().chain(&other.c).copied().collect();
        let mut k: Vec<_> = self.k.iter().chain(&other.k).copied().collect();
        c.sort();
        k.sort();
        AssignmentSolution { c, k }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    network: OverlayNetwork,
    lattice: Embedding,
    adapted: AdaptedLinkSet,
    demands: Vec<Demand>,
    resource_sets: Vec<ResourceSet>,
    interference: Vec<InterferenceSet>,
}

/// Assignment problem over `N = (V, S*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct AssignmentInstance {
    network: OverlayNetwork,
    graph: BaseGraph,
    adapted: AdaptedLinkSet,
    demands: Vec<Demand>,
    resource_sets: BTreeMap<LinkId, ResourceSet>,
    interference: Vec<InterferenceSet>,
    contested: BTreeMap<StateRef, Vec<usize>>,
}

impl TryFrom<InstanceFile> for AssignmentInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let graph = file.lattice.apply(&file.network)?;
        AssignmentInstance::with_resource_sets(
            file.network,
            graph,
            file.adapted,
            file.demands,
            file.resource_sets,
            file.interference,
        )
    }
}

impl From<AssignmentInstance> for InstanceFile {
    fn from(inst: AssignmentInstance) -> Self {
        InstanceFile {
            lattice: inst.graph.embedding(),
            network: inst.network,
            adapted: inst.adapted,
            demands: inst.demands,
            resource_sets: inst.resource_sets.into_values().collect(),
            interference: inst.interference,
        }
    }
}

impl AssignmentInstance {
    /// Builds an instance whose resource sets follow each adapted link's
    /// stored state count.
    pub fn new(
        network: OverlayNetwork,
        graph: BaseGraph,
        adapted: AdaptedLinkSet,
        demands: Vec<Demand>,
        interference: Vec<InterferenceSet>,
    ) -> Result<Self> {
        let resource_sets = network
            .links()
            .filter(|l| adapted.contains(l.id))
            .map(ResourceSet::for_link)
            .collect();
        Self::with_resource_sets(network, graph, adapted, demands, resource_sets, interference)
    }

    pub fn with_resource_sets(
        network: OverlayNetwork,
        graph: BaseGraph,
        adapted: AdaptedLinkSet,
        demands: Vec<Demand>,
        resource_sets: Vec<ResourceSet>,
        interference: Vec<InterferenceSet>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidInstance(msg));

        for id in &adapted.links {
            let Some(link) = network.link(*id) else {
                return invalid(format!("adapted {id} is not in the network"));
            };
            if adapted.p_star(*id).is_none() {
                return invalid(format!("adapted {id} has no p*"));
            }
            if graph.coord(link.a).is_none() || graph.coord(link.b).is_none() {
                return invalid(format!("{id} has an unmapped endpoint"));
            }
        }

        let mut sets = BTreeMap::new();
        for set in resource_sets {
            let Some(link) = network.link(set.link) else {
                return invalid(format!("resource set for unknown {}", set.link));
            };
            if !adapted.contains(set.link) {
                return invalid(format!("resource set for {} outside S*", set.link));
            }
            let distinct: BTreeSet<_> = set.states.iter().collect();
            if distinct.len() != set.states.len() || set.states.len() != link.resource_count as usize {
                return invalid(format!(
                    "resource set of {} must hold {} distinct states",
                    set.link, link.resource_count
                ));
            }
            if sets.insert(set.link, set).is_some() {
                return invalid("duplicate resource set".into());
            }
        }
        if let Some(missing) = adapted.links.iter().find(|id| !sets.contains_key(id)) {
            return invalid(format!("{missing} has no resource set"));
        }

        let mut users = BTreeSet::new();
        for (i, d) in demands.iter().enumerate() {
            if d.source == d.target {
                return invalid(format!("demand {i} starts and ends at {}", d.source));
            }
            if !(d.rate >= 0.0 && d.rate.is_finite()) {
                return invalid(format!("demand {i} has rate {}", d.rate));
            }
            for node in [d.source, d.target] {
                if graph.coord(node).is_none() {
                    return invalid(format!("demand {i} uses unmapped {node}"));
                }
            }
            if !users.insert(d.user) {
                return invalid(format!("user {} has more than one demand", d.user));
            }
        }

        let mut contested: BTreeMap<StateRef, Vec<usize>> = BTreeMap::new();
        for (i, set) in interference.iter().enumerate() {
            let f = set.resource_state;
            if !sets.get(&f.link).is_some_and(|r| r.states.contains(&f.state)) {
                return invalid(format!("interference set {i} names missing {f}"));
            }
            let distinct: BTreeSet<_> = set.competing.iter().collect();
            if set.competing.len() < 2 || distinct.len() != set.competing.len() {
                return invalid(format!("interference set {i} needs at least two distinct competitors"));
            }
            for c in &set.competing {
                match demands.get(c.demand.0 as usize) {
                    Some(d) if d.user == c.user => {}
                    _ => {
                        return invalid(format!(
                            "interference set {i} names unknown {} of user {}",
                            c.demand, c.user
                        ))
                    }
                }
            }
            contested.entry(f).or_default().push(i);
        }

        Ok(AssignmentInstance {
            network,
            graph,
            adapted,
            demands,
            resource_sets: sets,
            interference,
            contested,
        })
    }

    pub fn network(&self) -> &OverlayNetwork {
        &self.network
    }

    pub fn graph(&self) -> &BaseGraph {
        &self.graph
    }

    pub fn adapted(&self) -> &AdaptedLinkSet {
        &self.adapted
    }

    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }

    pub fn demand_ids(&self) -> impl Iterator<Item = DemandId> {
        (0..self.demands.len() as u32).map(DemandId)
    }

    pub fn demand(&self, id: DemandId) -> Option<&Demand> {
        self.demands.get(id.0 as usize)
    }

    pub fn demand_of_user(&self, user: u32) -> Option<(DemandId, &Demand)> {
        self.demands
            .iter()
            .enumerate()
            .find(|(_, d)| d.user == user)
            .map(|(i, d)| (DemandId(i as u32), d))
    }

    pub fn interference(&self) -> &[InterferenceSet] {
        &self.interference
    }

    pub fn resource_sets(&self) -> impl Iterator<Item = &ResourceSet> {
        self.resource_sets.values()
    }

    /// States stored on `link`; empty for links outside `S*`.
    pub fn states(&self, link: LinkId) -> &[u32] {
        self.resource_sets
            .get(&link)
            .map(|r| r.states.as_slice())
            .unwrap_or(&[])
    }

    /// Adapted links with their `p*`, in id order.
    pub fn usable_links(&self) -> impl Iterator<Item = (&EntangledLink, f64)> + '_ {
        self.adapted
            .links
            .iter()
            .filter_map(|id| Some((self.network.link(*id)?, self.adapted.p_star(*id)?)))
    }

    pub fn p_star(&self, link: LinkId) -> Option<f64> {
        if self.adapted.contains(link) {
            self.adapted.p_star(link)
        } else {
            None
        }
    }

    /// Interference sets on `state`.
    pub fn sets_on(&self, state: StateRef) -> impl Iterator<Item = &InterferenceSet> + '_ {
        self.contested
            .get(&state)
            .into_iter()
            .flatten()
            .map(|i| &self.interference[*i])
    }

    /// Whether `demand` appears in some interference set on `state`.
    pub fn is_contested(&self, state: StateRef, demand: DemandId) -> bool {
        self.sets_on(state)
            .any(|s| s.competing.iter().any(|c| c.demand == demand))
    }

    /// Whether `demand` may take `state` while `holders` already hold it.
    pub fn conflicts(&self, state: StateRef, demand: DemandId, holders: &[DemandId]) -> bool {
        self.sets_on(state).any(|s| {
            s.competing.iter().any(|c| c.demand == demand)
                && s.competing
                    .iter()
                    .any(|c| c.demand != demand && holders.contains(&c.demand))
        })
    }

    /// Copy of the instance with different demands and interference sets.
    pub fn with_demands(&self, demands: Vec<Demand>, interference: Vec<InterferenceSet>) -> Result<Self> {
        Self::with_resource_sets(
            self.network.clone(),
            self.graph.clone(),
            self.adapted.clone(),
            demands,
            self.resource_sets.values().cloned().collect(),
            interference,
        )
    }
}

/// Interference sets implied by routed paths: demands whose paths share a
/// link contend for every state of that link.
pub fn derive_interference(
    adapted: &AdaptedLinkSet,
    network: &OverlayNetwork,
    demands: &[Demand],
    paths: &[Option<Path>],
) -> Vec<InterferenceSet> {
    let mut users_of: BTreeMap<LinkId, Vec<Competitor>> = BTreeMap::new();
    for (i, (d, path)) in demands.iter().zip(paths).enumerate() {
        let Some(path) = path else { continue };
        for link in &path.links {
            users_of.entry(*link).or_default().push(Competitor {
                user: d.user,
                demand: DemandId(i as u32),
            });
        }
    }
    let mut out = Vec::new();
    for (link, competing) in users_of {
        if competing.len() < 2 || !adapted.contains(link) {
            continue;
        }
        let Some(l) = network.link(link) else { continue };
        for state in 0..l.resource_count {
            out.push(InterferenceSet {
                resource_state: StateRef { link, state },
                competing: competing.clone(),
            });
        }
    }
    out
}
