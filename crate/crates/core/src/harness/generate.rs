use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlay::{EntangledLink, FailureEvent, FailureKind, FailureTarget, LinkId, NodeId, OverlayNetwork};

fn unit() -> [f64; 2] {
    [1.0, 1.0]
}

fn zero() -> [f64; 2] {
    [0.0, 0.0]
}

fn one_state() -> [u32; 2] {
    [1, 1]
}

fn level_one() -> Vec<f64> {
    vec![1.0]
}

/// Random overlay parameters. Ranges are inclusive `[min, max]` pairs
/// sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub nodes: u32,
    pub links: u32,
    /// Relative weight of level `i + 1` at index `i`.
    #[serde(default = "level_one")]
    pub level_weights: Vec<f64>,
    #[serde(default = "unit")]
    pub swap_success: [f64; 2],
    #[serde(default = "zero")]
    pub photon_loss: [f64; 2],
    #[serde(default = "unit")]
    pub fidelity: [f64; 2],
    #[serde(default = "unit")]
    pub throughput: [f64; 2],
    #[serde(default = "one_state")]
    pub resource_count: [u32; 2],
}

impl GeneratorParams {
    pub fn new(nodes: u32, links: u32) -> Self {
        GeneratorParams {
            nodes,
            links,
            level_weights: level_one(),
            swap_success: unit(),
            photon_loss: zero(),
            fidelity: unit(),
            throughput: unit(),
            resource_count: one_state(),
        }
    }

    /// Checks the parameters; errors carry the offending field name.
    pub fn validate(&self, path: &str) -> Result<()> {
        let field = |name: &str| format!("{path}.{name}");
        if self.level_weights.is_empty()
            || self.level_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.level_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::config(
                field("level_weights"),
                "needs nonnegative weights with a positive sum",
            ));
        }
        for (name, [lo, hi]) in [
            ("swap_success", self.swap_success),
            ("photon_loss", self.photon_loss),
            ("fidelity", self.fidelity),
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::config(
                    field(name),
                    format!("range [{lo}, {hi}] must satisfy 0 <= min <= max <= 1"),
                ));
            }
        }
        let [lo, hi] = self.throughput;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                field("throughput"),
                format!("range [{lo}, {hi}] must satisfy 0 <= min <= max"),
            ));
        }
        let [lo, hi] = self.resource_count;
        if !(1 <= lo && lo <= hi) {
            return Err(Error::config(
                field("resource_count"),
                format!("range [{lo}, {hi}] must satisfy 1 <= min <= max"),
            ));
        }
        Ok(())
    }

    /// Distinct (pair, level) slots available to the generator.
    pub fn slot_count(&self) -> u64 {
        let n = u64::from(self.nodes);
        let levels = self.level_weights.iter().filter(|w| **w > 0.0).count() as u64;
        n * n.saturating_sub(1) / 2 * levels
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    rng.random_range(lo..=hi)
}

/// Random overlay on nodes `0..nodes` with exactly `links` links. Pairs are
/// uniform, levels follow `level_weights`, and no pair repeats a level.
pub fn generate_network(params: &GeneratorParams, seed: u64) -> Result<OverlayNetwork> {
    generate_network_with(params, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn generate_network_with(params: &GeneratorParams, rng: &mut impl Rng) -> Result<OverlayNetwork> {
    params
        .validate("network.generate")
        .map_err(|e| Error::ImpossibleParams(e.to_string()))?;
    if u64::from(params.links) > params.slot_count() {
        return Err(Error::ImpossibleParams(format!(
            "{} links requested but only {} node pairs and levels exist",
            params.links,
            params.slot_count()
        )));
    }
    let levels = WeightedIndex::new(&params.level_weights).map_err(|e| Error::ImpossibleParams(e.to_string()))?;
    let mut used: BTreeSet<(u32, u32, u32)> = BTreeSet::new();
    let mut links = Vec::with_capacity(params.links as usize);
    while links.len() < params.links as usize {
        let a = rng.random_range(0..params.nodes);
        let b = rng.random_range(0..params.nodes);
        let level = levels.sample(rng) as u32 + 1;
        if a == b || !used.insert((a.min(b), a.max(b), level)) {
            continue;
        }
        links.push(EntangledLink {
            id: LinkId(links.len() as u32),
            a: NodeId(a.min(b)),
            b: NodeId(a.max(b)),
            level,
            swap_success: draw(rng, params.swap_success),
            photon_loss: draw(rng, params.photon_loss),
            fidelity: draw(rng, params.fidelity),
            throughput: draw(rng, params.throughput),
            resource_count: rng.random_range(params.resource_count[0]..=params.resource_count[1]),
        });
    }
    OverlayNetwork::checked((0..params.nodes).map(NodeId), links)
}

/// Random link failures drawn independently per link and trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFailures {
    /// Chance that a given link fails in a trial.
    pub probability: f64,
    pub kind: FailureKind,
    #[serde(default = "unit")]
    pub magnitude: [f64; 2],
}

impl RandomFailures {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::config(format!("{path}.probability"), "must lie in [0, 1]"));
        }
        let [lo, hi] = self.magnitude;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::config(
                format!("{path}.magnitude"),
                "range must satisfy 0 <= min <= max <= 1",
            ));
        }
        Ok(())
    }
}

/// Failure events for one tick: every link fails with the configured
/// probability, in link-id order.
pub fn generate_failures(
    network: &OverlayNetwork,
    params: &RandomFailures,
    time: u64,
    rng: &mut impl Rng,
) -> Vec<FailureEvent> {
    let mut out = Vec::new();
    for id in network.link_ids() {
        // draw both values for every link so the stream advances evenly
        let hit = rng.random_bool(params.probability);
        let magnitude = draw(rng, params.magnitude);
        if hit {
            out.push(FailureEvent {
                target: FailureTarget::Link(id),
                kind: params.kind,
                magnitude,
                time,
            });
        }
    }
    out
}
