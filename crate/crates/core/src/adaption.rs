//! Threshold-driven topology adaption: every link whose existence
//! probability reaches its level's threshold survives into the adapted set
//! `S*`, and the base-graph probabilities are rewritten accordingly.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{oriented_probability, BaseGraph};
use crate::overlay::{EntangledLink, LinkId, NodeId, OverlayNetwork};
use crate::routing::{route, RoutingOutcome};

/// Per-level probability thresholds with a fallback for unlisted levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPolicy {
    #[serde(default)]
    pub default: f64,
    #[serde(default, with = "level_keys")]
    pub levels: BTreeMap<u32, f64>,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::uniform(0.0)
    }
}

impl ThresholdPolicy {
    pub fn uniform(threshold: f64) -> Self {
        ThresholdPolicy {
            default: threshold,
            levels: BTreeMap::new(),
        }
    }

    pub fn with_level(mut self, level: u32, threshold: f64) -> Self {
        self.levels.insert(level, threshold);
        self
    }

    pub fn threshold(&self, level: u32) -> f64 {
        self.levels.get(&level).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.default) {
            return Err(Error::config(
                "thresholds.default",
                format!("{} outside [0, 1]", self.default),
            ));
        }
        for (level, t) in &self.levels {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::config(
                    format!("thresholds.levels.{level}"),
                    format!("{t} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

// Level keys are written as strings so the same map reads from TOML and JSON.
mod level_keys {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u32, f64>, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, f64> = map.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        keyed.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, f64>, D::Error> {
        let keyed = BTreeMap::<String, f64>::deserialize(d)?;
        keyed
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("level key `{k}` is not an integer")))
            })
            .collect()
    }
}

/// Which value a retained link's updated probability carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PStarMode {
    /// The link's own (estimated) existence probability.
    #[default]
    Measured,
    /// The level threshold the link cleared.
    Threshold,
}

/// Additive uniform noise on probability estimates, drawn in link-id order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationNoise {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptOptions {
    pub pstar_mode: PStarMode,
    pub noise: Option<EstimationNoise>,
}

/// The adapted link set `S*` and the updated probability `p*` of every
/// link in the overlay (zero for excluded links).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptedLinkSet {
    pub links: BTreeSet<LinkId>,
    pub p_star: BTreeMap<LinkId, f64>,
}

impl AdaptedLinkSet {
    /// Treats every link as retained with its overlay probability.
    pub fn all(network: &OverlayNetwork) -> Self {
        AdaptedLinkSet {
            links: network.link_ids().collect(),
            p_star: network.links().map(|l| (l.id, l.existence_probability())).collect(),
        }
    }

    pub fn contains(&self, link: LinkId) -> bool {
        self.links.contains(&link)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn p_star(&self, link: LinkId) -> Option<f64> {
        self.p_star.get(&link).copied()
    }

    /// `p*` of a node pair: the largest value over the links joining it.
    pub fn pair_probability(&self, network: &OverlayNetwork, x: NodeId, y: NodeId) -> Option<f64> {
        network
            .links_between(x, y)
            .filter_map(|l| self.p_star(l.id))
            .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
    }
}

fn estimate(link: &EntangledLink, noise: Option<&mut (ChaCha8Rng, f64)>) -> f64 {
    let p = link.existence_probability();
    match noise {
        Some((rng, amplitude)) if *amplitude > 0.0 => (p + rng.random_range(-*amplitude..=*amplitude)).clamp(0.0, 1.0),
        _ => p,
    }
}

fn updated_for_link(
    graph: &BaseGraph,
    link: &EntangledLink,
    from: NodeId,
    estimated: f64,
    policy: &ThresholdPolicy,
    mode: PStarMode,
) -> Result<(bool, f64)> {
    let threshold = policy.threshold(link.level);
    if estimated < threshold {
        return Ok((false, 0.0));
    }
    let target = match mode {
        PStarMode::Measured => estimated,
        PStarMode::Threshold => threshold,
    };
    let cp = oriented_probability(graph, link, from, target)?;
    Ok((true, cp.p))
}

/// Updated probability `p*` of the pair `(x, y)` under `policy`: the
/// lattice term plus the corrected constant when the link clears its
/// threshold, zero otherwise.
pub fn updated_probability(
    graph: &BaseGraph,
    network: &OverlayNetwork,
    x: NodeId,
    y: NodeId,
    policy: &ThresholdPolicy,
) -> Result<f64> {
    updated_probability_with(graph, network, x, y, policy, &AdaptOptions::default())
}

pub fn updated_probability_with(
    graph: &BaseGraph,
    network: &OverlayNetwork,
    x: NodeId,
    y: NodeId,
    policy: &ThresholdPolicy,
    options: &AdaptOptions,
) -> Result<f64> {
    if options.noise.is_some() {
        // noisy estimates are drawn in link order, so evaluate the full pass
        let adapted = adapt_with(graph, network, policy, options)?;
        return adapted.pair_probability(network, x, y).ok_or(Error::NotConnected(x, y));
    }
    let mut best: Option<f64> = None;
    for link in network.links_between(x, y) {
        let (_, p) = updated_for_link(graph, link, x, link.existence_probability(), policy, options.pstar_mode)?;
        best = Some(best.map_or(p, |b: f64| b.max(p)));
    }
    best.ok_or(Error::NotConnected(x, y))
}

/// Runs the threshold filter over every link and returns `S*` with `p*`.
pub fn adapt(graph: &BaseGraph, network: &OverlayNetwork, policy: &ThresholdPolicy) -> Result<AdaptedLinkSet> {
    adapt_with(graph, network, policy, &AdaptOptions::default())
}

pub fn adapt_with(
    graph: &BaseGraph,
    network: &OverlayNetwork,
    policy: &ThresholdPolicy,
    options: &AdaptOptions,
) -> Result<AdaptedLinkSet> {
    policy.validate()?;
    let mut noise = options.noise.map(|n| (ChaCha8Rng::seed_from_u64(n.seed), n.amplitude));
    let mut out = AdaptedLinkSet::default();
    for link in network.links() {
        let estimated = estimate(link, noise.as_mut());
        let (kept, p) = updated_for_link(graph, link, link.a, estimated, policy, options.pstar_mode)?;
        if kept {
            out.links.insert(link.id);
        }
        out.p_star.insert(link.id, p);
    }
    Ok(out)
}

/// Adapts the topology and routes `source -> target` over the result.
pub fn adapt_and_route(
    graph: &BaseGraph,
    network: &OverlayNetwork,
    policy: &ThresholdPolicy,
    source: NodeId,
    target: NodeId,
) -> Result<RoutingOutcome> {
    let adapted = adapt(graph, network, policy)?;
    route(graph, &adapted, source, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{map_overlay, PlacementSpec};
    use crate::routing::RouteStatus;
    use proptest::prelude::*;

    fn with_probability(id: u32, a: u32, b: u32, level: u32, p: f64) -> EntangledLink {
        EntangledLink {
            swap_success: p,
            ..EntangledLink::ideal(id, a, b, level)
        }
    }

    fn fixture(probs: &[f64]) -> (OverlayNetwork, BaseGraph) {
        let links = probs
            .iter()
            .enumerate()
            .map(|(i, p)| with_probability(i as u32, i as u32, i as u32 + 1, 1, *p));
        let net = OverlayNetwork::checked((0..=probs.len() as u32).map(NodeId), links).unwrap();
        let g = map_overlay(&net, 2, 8, &PlacementSpec::Seeded(7)).unwrap();
        (net, g)
    }

    #[test]
    fn updated_probability_examples() {
        let (net, g) = fixture(&[0.85, 0.95]);
        let policy = ThresholdPolicy::uniform(0.9);
        assert_eq!(
            updated_probability(&g, &net, NodeId(0), NodeId(1), &policy).unwrap(),
            0.0
        );
        let p = updated_probability(&g, &net, NodeId(1), NodeId(2), &policy).unwrap();
        assert!((p - 0.95).abs() < 1e-12);

        let open = ThresholdPolicy::uniform(0.0);
        let p = updated_probability(&g, &net, NodeId(0), NodeId(1), &open).unwrap();
        assert!((p - 0.85).abs() < 1e-12);

        assert!(matches!(
            updated_probability(&g, &net, NodeId(0), NodeId(2), &policy),
            Err(Error::NotConnected(..))
        ));
    }

    #[test]
    fn threshold_mode_reports_the_threshold() {
        let (net, g) = fixture(&[0.95]);
        let opts = AdaptOptions {
            pstar_mode: PStarMode::Threshold,
            noise: None,
        };
        let policy = ThresholdPolicy::uniform(0.9);
        let p = updated_probability_with(&g, &net, NodeId(0), NodeId(1), &policy, &opts).unwrap();
        assert!((p - 0.9).abs() < 1e-12);
    }

    #[test]
    fn adapt_examples() {
        let (net, g) = fixture(&[0.95, 0.80, 0.99]);
        let all = adapt(&g, &net, &ThresholdPolicy::uniform(0.0)).unwrap();
        assert_eq!(all.links, net.link_ids().collect());

        let none = adapt(&g, &net, &ThresholdPolicy::uniform(1.0)).unwrap();
        assert!(none.is_empty());
        assert!(none.p_star.values().all(|p| *p == 0.0));

        let s = adapt(&g, &net, &ThresholdPolicy::uniform(0.9)).unwrap();
        assert_eq!(s.links, BTreeSet::from([LinkId(0), LinkId(2)]));
        assert_eq!(s.p_star(LinkId(1)), Some(0.0));
    }

    #[test]
    fn per_level_thresholds() {
        let net = OverlayNetwork::checked(
            (0..3).map(NodeId),
            [with_probability(0, 0, 1, 1, 0.7), with_probability(1, 1, 2, 2, 0.7)],
        )
        .unwrap();
        let g = map_overlay(&net, 1, 4, &PlacementSpec::Seeded(1)).unwrap();
        let policy = ThresholdPolicy::uniform(0.5).with_level(2, 0.8);
        let s = adapt(&g, &net, &policy).unwrap();
        assert_eq!(s.links, BTreeSet::from([LinkId(0)]));
    }

    #[test]
    fn invalid_policy_rejected() {
        let (net, g) = fixture(&[0.5]);
        let err = adapt(&g, &net, &ThresholdPolicy::uniform(0.5).with_level(3, 1.5)).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "thresholds.levels.3"));
    }

    #[test]
    fn noise_is_seeded() {
        let (net, g) = fixture(&[0.5, 0.6, 0.7, 0.8]);
        let opts = AdaptOptions {
            pstar_mode: PStarMode::Measured,
            noise: Some(EstimationNoise {
                amplitude: 0.2,
                seed: 9,
            }),
        };
        let policy = ThresholdPolicy::uniform(0.65);
        let a = adapt_with(&g, &net, &policy, &opts).unwrap();
        let b = adapt_with(&g, &net, &policy, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.p_star.values().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn adapt_and_route_examples() {
        let (net, g) = fixture(&[0.95, 0.95, 0.95]);
        let open = ThresholdPolicy::uniform(0.0);
        let direct = route(&g, &AdaptedLinkSet::all(&net), NodeId(0), NodeId(3)).unwrap();
        assert_eq!(adapt_and_route(&g, &net, &open, NodeId(0), NodeId(3)).unwrap(), direct);

        let (net, g) = fixture(&[0.95, 0.5, 0.95]);
        let cut = adapt_and_route(&g, &net, &ThresholdPolicy::uniform(0.9), NodeId(0), NodeId(3)).unwrap();
        assert_eq!(cut.status, RouteStatus::Unreachable);

        let same = adapt_and_route(&g, &net, &open, NodeId(2), NodeId(2)).unwrap();
        assert_eq!(same.status, RouteStatus::Found);
        assert_eq!(same.diameter, 0);
    }

    #[test]
    fn policy_reads_toml_and_json() {
        let p: ThresholdPolicy = toml::from_str("default = 0.4\nlevels = { 1 = 0.5, 3 = 0.9 }").unwrap();
        assert_eq!(p.threshold(1), 0.5);
        assert_eq!(p.threshold(2), 0.4);
        assert_eq!(p.threshold(3), 0.9);
        let j: ThresholdPolicy = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(j, p);
        assert!(toml::from_str::<ThresholdPolicy>("default = 0.4\nlevels = { x = 0.5 }").is_err());
    }

    proptest! {
        #[test]
        fn adapt_is_idempotent(probs in proptest::collection::vec(0.0..=1.0f64, 1..12), t in 0.0..=1.0f64) {
            let (net, g) = fixture(&probs);
            let policy = ThresholdPolicy::uniform(t);
            let first = adapt(&g, &net, &policy).unwrap();
            let reduced = net.restricted_to(&first.links);
            let again = adapt(&g.rebind(&reduced).unwrap(), &reduced, &policy).unwrap();
            prop_assert_eq!(&again.links, &first.links);
            for id in &first.links {
                prop_assert_eq!(first.p_star(*id), again.p_star(*id));
            }
        }
    }
}
