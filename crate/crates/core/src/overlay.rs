//! The entangled overlay network: quantum nodes joined by multi-level
//! entangled links, each carrying its own stability parameters.
//!
//! Everything here is a plain value. Failure events produce a new network
//! instead of mutating a shared one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "link {}", self.0)
    }
}

fn default_resource_count() -> u32 {
    1
}

/// An `L_l`-level entangled link between two quantum nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntangledLink {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub level: u32,
    /// Success probability of the entanglement swapping that built the link.
    pub swap_success: f64,
    /// Photon loss probability of the link.
    pub photon_loss: f64,
    pub fidelity: f64,
    /// Maximally entangled states per second deliverable at `fidelity`.
    pub throughput: f64,
    /// Number of stored entangled states on the link.
    #[serde(default = "default_resource_count")]
    pub resource_count: u32,
}

impl EntangledLink {
    /// A perfectly stable link with unit throughput and one stored state.
    pub fn ideal(id: u32, a: u32, b: u32, level: u32) -> Self {
        EntangledLink {
            id: LinkId(id),
            a: NodeId(a),
            b: NodeId(b),
            level,
            swap_success: 1.0,
            photon_loss: 0.0,
            fidelity: 1.0,
            throughput: 1.0,
            resource_count: 1,
        }
    }

    pub fn existence_probability(&self) -> f64 {
        link_existence_probability(self)
    }

    /// Endpoints with the smaller id first.
    pub fn pair(&self) -> (NodeId, NodeId) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.a == node || self.b == node
    }

    /// The endpoint opposite to `node`, if `node` is an endpoint.
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if self.a == node {
            Some(self.b)
        } else if self.b == node {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn connects(&self, x: NodeId, y: NodeId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

/// Probability that the link exists: swap success times photon survival
/// times fidelity.
pub fn link_existence_probability(link: &EntangledLink) -> f64 {
    link.swap_success * (1.0 - link.photon_loss) * link.fidelity
}

/// Hop distance spanned by a link of the given level under the doubling
/// architecture, `2^(level-1)`.
pub fn hop_distance(level: u32) -> Result<u64> {
    if level == 0 || level > 64 {
        return Err(Error::InvalidLevel(level));
    }
    Ok(1u64 << (level - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    nodes: Vec<NodeId>,
    links: Vec<EntangledLink>,
}

/// The overlay network `N = (V, S)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct OverlayNetwork {
    nodes: BTreeSet<NodeId>,
    links: BTreeMap<LinkId, EntangledLink>,
}

impl TryFrom<NetworkFile> for OverlayNetwork {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        let mut nodes = BTreeSet::new();
        for node in file.nodes {
            if !nodes.insert(node) {
                return Err(Error::InvalidNetwork(format!("duplicate {node}")));
            }
        }
        OverlayNetwork::from_parts(nodes, file.links)
    }
}

impl From<OverlayNetwork> for NetworkFile {
    fn from(net: OverlayNetwork) -> Self {
        NetworkFile {
            nodes: net.nodes.into_iter().collect(),
            links: net.links.into_values().collect(),
        }
    }
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownEndpoint {
        link: LinkId,
        node: NodeId,
    },
    SelfLoop {
        link: LinkId,
    },
    InvalidLevel {
        link: LinkId,
        level: u32,
    },
    OutOfRange {
        link: LinkId,
        field: &'static str,
        value: f64,
    },
    ParallelLinks {
        pair: (NodeId, NodeId),
        level: u32,
        links: (LinkId, LinkId),
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownEndpoint { link, node } => {
                write!(f, "{link} references unknown {node}")
            }
            Violation::SelfLoop { link } => write!(f, "{link} joins a node to itself"),
            Violation::InvalidLevel { link, level } => write!(f, "{link} has level {level}"),
            Violation::OutOfRange { link, field, value } => {
                write!(f, "{link} has {field} = {value} out of range")
            }
            Violation::ParallelLinks { pair, level, links } => write!(
                f,
                "{} and {} both join {}-{} at level {level}",
                links.0, links.1, pair.0 .0, pair.1 .0
            ),
        }
    }
}

impl OverlayNetwork {
    /// Builds a network, rejecting duplicate link ids. Other invariants are
    /// reported by [`validate`].
    pub fn from_parts(
        nodes: impl IntoIterator<Item = NodeId>,
        links: impl IntoIterator<Item = EntangledLink>,
    ) -> Result<Self> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let mut map = BTreeMap::new();
        for link in links {
            let id = link.id;
            if map.insert(id, link).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate {id}")));
            }
        }
        Ok(OverlayNetwork { nodes, links: map })
    }

    /// Like [`OverlayNetwork::from_parts`] but also requires [`validate`] to pass.
    pub fn checked(
        nodes: impl IntoIterator<Item = NodeId>,
        links: impl IntoIterator<Item = EntangledLink>,
    ) -> Result<Self> {
        let net = Self::from_parts(nodes, links)?;
        net.ensure_valid()?;
        Ok(net)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidNetwork(msg.join("; ")))
        }
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn links(&self) -> impl ExactSizeIterator<Item = &EntangledLink> + '_ {
        self.links.values()
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.links.keys().copied()
    }

    pub fn link(&self, id: LinkId) -> Option<&EntangledLink> {
        self.links.get(&id)
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    /// All links joining `x` and `y`, in id order.
    pub fn links_between(&self, x: NodeId, y: NodeId) -> impl Iterator<Item = &EntangledLink> + '_ {
        self.links.values().filter(move |l| l.connects(x, y))
    }

    pub fn incident(&self, node: NodeId) -> impl Iterator<Item = &EntangledLink> + '_ {
        self.links.values().filter(move |l| l.touches(node))
    }

    /// Copy of the network keeping only the listed links.
    pub fn restricted_to(&self, keep: &BTreeSet<LinkId>) -> OverlayNetwork {
        OverlayNetwork {
            nodes: self.nodes.clone(),
            links: self
                .links
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .map(|(id, l)| (*id, l.clone()))
                .collect(),
        }
    }

    fn link_mut(&mut self, id: LinkId) -> Result<&mut EntangledLink> {
        self.links.get_mut(&id).ok_or_else(|| Error::NotFound(id.to_string()))
    }
}

/// Reports every invariant violation of `network`; empty means well formed.
pub fn validate(network: &OverlayNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: BTreeMap<((NodeId, NodeId), u32), LinkId> = BTreeMap::new();
    for link in network.links.values() {
        for node in [link.a, link.b] {
            if !network.nodes.contains(&node) {
                out.push(Violation::UnknownEndpoint { link: link.id, node });
            }
        }
        if link.a == link.b {
            out.push(Violation::SelfLoop { link: link.id });
        }
        if hop_distance(link.level).is_err() {
            out.push(Violation::InvalidLevel {
                link: link.id,
                level: link.level,
            });
        }
        for (field, value) in [
            ("swap_success", link.swap_success),
            ("photon_loss", link.photon_loss),
            ("fidelity", link.fidelity),
        ] {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::OutOfRange {
                    link: link.id,
                    field,
                    value,
                });
            }
        }
        if !(link.throughput >= 0.0 && link.throughput.is_finite()) {
            out.push(Violation::OutOfRange {
                link: link.id,
                field: "throughput",
                value: link.throughput,
            });
        }
        let key = (link.pair(), link.level);
        if let Some(first) = seen.get(&key) {
            out.push(Violation::ParallelLinks {
                pair: key.0,
                level: key.1,
                links: (*first, link.id),
            });
        } else {
            seen.insert(key, link.id);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FailureTarget {
    Link(LinkId),
    /// Applies the event to every link incident to the node.
    Node(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    RemoveLink,
    DegradeSwap,
    DegradeLoss,
    DegradeFidelity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEvent {
    pub target: FailureTarget,
    pub kind: FailureKind,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default)]
    pub time: u64,
}

/// Applies a failure event and returns the resulting network.
///
/// `degrade-*` multiplies the named attribute by `1 - magnitude`; for
/// photon loss this is applied to the survival probability `1 - loss`, so
/// every degradation lowers the link's existence probability.
pub fn apply_failure(network: &OverlayNetwork, event: &FailureEvent) -> Result<OverlayNetwork> {
    if !(0.0..=1.0).contains(&event.magnitude) {
        return Err(Error::InvalidFailure(format!(
            "magnitude {} outside [0, 1]",
            event.magnitude
        )));
    }
    let targets: Vec<LinkId> = match event.target {
        FailureTarget::Link(id) => {
            if network.link(id).is_none() {
                return Err(Error::NotFound(id.to_string()));
            }
            vec![id]
        }
        FailureTarget::Node(node) => {
            if !network.contains_node(node) {
                return Err(Error::NotFound(node.to_string()));
            }
            network.incident(node).map(|l| l.id).collect()
        }
    };

    let mut next = network.clone();
    let keep = 1.0 - event.magnitude;
    for id in targets {
        if event.kind == FailureKind::RemoveLink {
            next.links.remove(&id);
            continue;
        }
        let link = next.link_mut(id)?;
        match event.kind {
            FailureKind::DegradeSwap => link.swap_success *= keep,
            FailureKind::DegradeLoss => link.photon_loss = 1.0 - (1.0 - link.photon_loss) * keep,
            FailureKind::DegradeFidelity => link.fidelity *= keep,
            FailureKind::RemoveLink => unreachable!(),
        }
    }
    Ok(next)
}
