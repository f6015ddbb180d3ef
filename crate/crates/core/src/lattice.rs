//! Embedding of the overlay network into a flat `k`-dimensional lattice of
//! side `n`, and the distance-based connection probabilities computed there.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlay::{EntangledLink, LinkId, NodeId, OverlayNetwork};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeCoord(pub Vec<u32>);

impl LatticeCoord {
    pub fn new(coords: impl Into<Vec<u32>>) -> Self {
        LatticeCoord(coords.into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Manhattan distance on the flat lattice (no wraparound).
pub fn l1_distance(a: &LatticeCoord, b: &LatticeCoord) -> Result<u64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| u64::from(x.abs_diff(*y))).sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementRecord {
    pub node: NodeId,
    pub coords: LatticeCoord,
}

/// How overlay nodes are assigned lattice positions.
#[derive(Debug, Clone, PartialEq)]
pub enum PlacementSpec {
    Explicit(BTreeMap<NodeId, LatticeCoord>),
    /// Uniform random injective placement drawn from the seed.
    Seeded(u64),
}

impl PlacementSpec {
    pub fn from_records(records: &[PlacementRecord]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert(r.node, r.coords.clone()).is_some() {
                return Err(Error::Placement(format!("{} placed twice", r.node)));
            }
        }
        Ok(PlacementSpec::Explicit(map))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Contact {
    pub node: NodeId,
    pub link: LinkId,
}

/// Lattice parameters plus placement; enough to rebuild a [`BaseGraph`]
/// from the same overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Embedding {
    pub k: u32,
    pub n: u32,
    pub placement: Vec<PlacementRecord>,
}

/// The base-graph `G^k`: node positions plus the entangled contacts each
/// node inherits from the overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseGraph {
    k: u32,
    n: u32,
    placement: BTreeMap<NodeId, LatticeCoord>,
    contacts: BTreeMap<NodeId, Vec<Contact>>,
}

fn cell_count(k: u32, n: u32) -> u128 {
    (0..k)
        .try_fold(1u128, |acc, _| acc.checked_mul(u128::from(n)))
        .unwrap_or(u128::MAX)
}

fn index_to_coord(mut index: u128, k: u32, n: u32) -> LatticeCoord {
    let n = u128::from(n);
    let coords = (0..k)
        .map(|_| {
            let c = (index % n) as u32;
            index /= n;
            c
        })
        .collect::<Vec<_>>();
    LatticeCoord(coords)
}

/// Maps every overlay node onto the lattice and records its contacts.
pub fn map_overlay(network: &OverlayNetwork, k: u32, n: u32, spec: &PlacementSpec) -> Result<BaseGraph> {
    if k < 1 || n < 2 {
        return Err(Error::LatticeParams(format!(
            "need k >= 1 and n >= 2, got k={k}, n={n}"
        )));
    }
    let cells = cell_count(k, n);
    let count = network.nodes().len();
    if (count as u128) > cells {
        return Err(Error::TooSmallLattice { cells, nodes: count });
    }

    let placement = match spec {
        PlacementSpec::Explicit(map) => {
            let mut used = HashSet::with_capacity(map.len());
            for (node, coord) in map {
                if !network.contains_node(*node) {
                    return Err(Error::Placement(format!("{node} is not in the overlay")));
                }
                if coord.dim() != k as usize || coord.0.iter().any(|&c| c >= n) {
                    return Err(Error::Placement(format!(
                        "{node} placed outside the lattice at {:?}",
                        coord.0
                    )));
                }
                if !used.insert(coord) {
                    return Err(Error::Placement(format!("collision at {:?}", coord.0)));
                }
            }
            if let Some(node) = network.nodes().iter().find(|v| !map.contains_key(v)) {
                return Err(Error::Placement(format!("{node} has no coordinate")));
            }
            map.clone()
        }
        PlacementSpec::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let coords: Vec<LatticeCoord> = match usize::try_from(cells) {
                Ok(c) if c < usize::MAX / 2 => rand::seq::index::sample(&mut rng, c, count)
                    .into_iter()
                    .map(|i| index_to_coord(i as u128, k, n))
                    .collect(),
                _ => {
                    let mut seen = HashSet::with_capacity(count);
                    let mut out = Vec::with_capacity(count);
                    while out.len() < count {
                        let coord = LatticeCoord((0..k).map(|_| rng.random_range(0..n)).collect());
                        if seen.insert(coord.clone()) {
                            out.push(coord);
                        }
                    }
                    out
                }
            };
            network.nodes().iter().copied().zip(coords).collect()
        }
    };
    finish(network, k, n, placement)
}

fn finish(network: &OverlayNetwork, k: u32, n: u32, placement: BTreeMap<NodeId, LatticeCoord>) -> Result<BaseGraph> {
    let mut contacts: BTreeMap<NodeId, Vec<Contact>> = BTreeMap::new();
    for link in network.links() {
        for (from, to) in [(link.a, link.b), (link.b, link.a)] {
            if !placement.contains_key(&from) {
                return Err(Error::UnmappedNode(from));
            }
            contacts.entry(from).or_default().push(Contact {
                node: to,
                link: link.id,
            });
        }
    }
    for list in contacts.values_mut() {
        list.sort();
    }
    Ok(BaseGraph {
        k,
        n,
        placement,
        contacts,
    })
}

impl BaseGraph {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn coord(&self, node: NodeId) -> Option<&LatticeCoord> {
        self.placement.get(&node)
    }

    pub fn placement(&self) -> &BTreeMap<NodeId, LatticeCoord> {
        &self.placement
    }

    /// Entangled contacts of `node`, sorted by neighbor then link id.
    pub fn contacts(&self, node: NodeId) -> &[Contact] {
        self.contacts.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn distance(&self, x: NodeId, y: NodeId) -> Result<u64> {
        let a = self.coord(x).ok_or(Error::UnmappedNode(x))?;
        let b = self.coord(y).ok_or(Error::UnmappedNode(y))?;
        l1_distance(a, b)
    }

    pub fn embedding(&self) -> Embedding {
        Embedding {
            k: self.k,
            n: self.n,
            placement: self
                .placement
                .iter()
                .map(|(node, coords)| PlacementRecord {
                    node: *node,
                    coords: coords.clone(),
                })
                .collect(),
        }
    }

    /// Re-derives contacts for another link set over the same nodes and
    /// placement.
    pub fn rebind(&self, network: &OverlayNetwork) -> Result<BaseGraph> {
        map_overlay(
            network,
            self.k,
            self.n,
            &PlacementSpec::Explicit(self.placement.clone()),
        )
    }
}

impl Embedding {
    pub fn apply(&self, network: &OverlayNetwork) -> Result<BaseGraph> {
        map_overlay(network, self.k, self.n, &PlacementSpec::from_records(&self.placement)?)
    }
}

/// The normalizing term `H_n` of `node`: summed L1 distance to each of its
/// distinct entangled contacts.
pub fn normalizing_term(graph: &BaseGraph, node: NodeId) -> Result<f64> {
    let origin = graph.coord(node).ok_or(Error::UnmappedNode(node))?;
    let contacts = graph.contacts(node);
    if contacts.is_empty() {
        return Err(Error::NoContacts(node));
    }
    let mut total = 0u64;
    let mut last = None;
    // contacts are sorted by neighbor, so repeated neighbors are adjacent
    for c in contacts {
        if last == Some(c.node) {
            continue;
        }
        last = Some(c.node);
        let there = graph.coord(c.node).ok_or(Error::UnmappedNode(c.node))?;
        total += l1_distance(origin, there)?;
    }
    Ok(total as f64)
}

/// Connection probability of a mapped pair, split into its lattice term and
/// correction constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConnectionProbability {
    pub pair: (NodeId, NodeId),
    pub link: LinkId,
    pub p: f64,
    pub lattice_term: f64,
    pub correction: f64,
}

/// `d(x,y)^-k / H_n(x)` for a linked pair.
pub fn lattice_term(graph: &BaseGraph, x: NodeId, y: NodeId) -> Result<f64> {
    let d = graph.distance(x, y)?;
    let h = normalizing_term(graph, x)?;
    Ok((d as f64).powi(-(graph.k as i32)) / h)
}

/// Connection probability of `link` as seen from endpoint `from`, with the
/// correction taken against `target_probability`.
pub(crate) fn oriented_probability(
    graph: &BaseGraph,
    link: &EntangledLink,
    from: NodeId,
    target_probability: f64,
) -> Result<ConnectionProbability> {
    let to = link.other(from).ok_or(Error::NotConnected(from, link.a))?;
    let lattice = lattice_term(graph, from, to)?;
    // the correction cancels the lattice term, so p is the target value
    // itself; lattice_term + correction reproduces it up to rounding
    let correction = target_probability - lattice;
    Ok(ConnectionProbability {
        pair: (from, to),
        link: link.id,
        p: target_probability,
        lattice_term: lattice,
        correction,
    })
}

/// The most probable link between `x` and `y`; ties go to the lower id.
pub fn strongest_link(network: &OverlayNetwork, x: NodeId, y: NodeId) -> Option<&EntangledLink> {
    network
        .links_between(x, y)
        .fold(None, |best: Option<&EntangledLink>, l| match best {
            Some(b) if b.existence_probability() >= l.existence_probability() => Some(b),
            _ => Some(l),
        })
}

/// Probability that `x` and `y` are connected in the base-graph. When
/// several levels join the pair the strongest link is used.
pub fn connection_probability(
    graph: &BaseGraph,
    network: &OverlayNetwork,
    x: NodeId,
    y: NodeId,
) -> Result<ConnectionProbability> {
    let link = strongest_link(network, x, y).ok_or(Error::NotConnected(x, y))?;
    oriented_probability(graph, link, x, link.existence_probability())
}

/// Connection probability of a specific link, oriented from its `a` end.
pub fn link_connection_probability(
    graph: &BaseGraph,
    network: &OverlayNetwork,
    link: LinkId,
) -> Result<ConnectionProbability> {
    let link = network.link(link).ok_or_else(|| Error::NotFound(link.to_string()))?;
    oriented_probability(graph, link, link.a, link.existence_probability())
}
