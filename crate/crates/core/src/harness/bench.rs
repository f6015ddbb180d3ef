use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::seeds::{stream, Purpose};
use crate::adaption::AdaptedLinkSet;
use crate::error::{Error, Result};
use crate::lattice::{map_overlay, BaseGraph, LatticeCoord, PlacementSpec};
use crate::overlay::{EntangledLink, NodeId, OverlayNetwork};
use crate::routing::Router;

/// Level whose hop distance `2^(l-1)` is the largest not exceeding `d`.
fn level_for(distance: u64) -> u32 {
    64 - distance.max(1).leading_zeros()
}

/// `side x side` grid with links to the four nearest neighbors plus one
/// long-range link per node whose far end lies at lattice distance `d`
/// with probability proportional to `d^-2`.
pub fn small_world_lattice(side: u32, rng: &mut impl Rng) -> Result<(OverlayNetwork, BaseGraph)> {
    if side < 2 {
        return Err(Error::LatticeParams(format!("side {side} is below 2")));
    }
    let id = |x: u32, y: u32| y * side + x;
    let mut links = Vec::new();
    let mut seen: BTreeSet<(u32, u32, u32)> = BTreeSet::new();
    let mut push = |links: &mut Vec<EntangledLink>, a: u32, b: u32, level: u32| {
        if seen.insert((a.min(b), a.max(b), level)) {
            links.push(EntangledLink::ideal(links.len() as u32, a.min(b), a.max(b), level));
        }
    };
    for y in 0..side {
        for x in 0..side {
            if x + 1 < side {
                push(&mut links, id(x, y), id(x + 1, y), 1);
            }
            if y + 1 < side {
                push(&mut links, id(x, y), id(x, y + 1), 1);
            }
        }
    }

    // a ring at radius r holds 4r lattice points, so P(r) ~ 4r * r^-2 ~ 1/r;
    // draws that leave the grid are redrawn
    let max_r = 2 * (side - 1);
    let radius =
        WeightedIndex::new((1..=max_r).map(|r| 1.0 / f64::from(r))).map_err(|e| Error::LatticeParams(e.to_string()))?;
    for y in 0..side {
        for x in 0..side {
            let (tx, ty, r) = loop {
                let r = radius.sample(rng) as i64 + 1;
                let step = rng.random_range(0..4 * r);
                // walk the diamond |dx| + |dy| = r
                let (dx, dy) = match step / r {
                    0 => (r - step % r, step % r),
                    1 => (-(step % r), r - step % r),
                    2 => (-(r - step % r), -(step % r)),
                    _ => (step % r, -(r - step % r)),
                };
                let (tx, ty) = (i64::from(x) + dx, i64::from(y) + dy);
                if (0..i64::from(side)).contains(&tx) && (0..i64::from(side)).contains(&ty) {
                    break (tx as u32, ty as u32, r as u64);
                }
            };
            push(&mut links, id(x, y), id(tx, ty), level_for(r));
        }
    }

    let nodes = side * side;
    let network = OverlayNetwork::from_parts((0..nodes).map(NodeId), links)?;
    let placement = (0..nodes)
        .map(|i| (NodeId(i), LatticeCoord::new(vec![i % side, i / side])))
        .collect();
    let graph = map_overlay(&network, 2, side, &PlacementSpec::Explicit(placement))?;
    Ok((network, graph))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: u32,
    pub trials: usize,
    pub mean_steps: f64,
    /// `mean_steps / (log2 n)^2`.
    pub ratio: f64,
    /// `ratio` relative to the first size of the sweep.
    pub normalized: f64,
    pub unreachable: usize,
}

/// Mean greedy routing steps between random node pairs on small-world
/// lattices of each side length in `sizes`.
pub fn routing_scaling(sizes: &[u32], trials: usize, seed: u64) -> Result<Vec<ScalingPoint>> {
    let mut out: Vec<ScalingPoint> = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let (network, graph) = small_world_lattice(n, &mut stream(seed, i as u64, Purpose::Generation))?;
        let adapted = AdaptedLinkSet {
            links: network.link_ids().collect(),
            p_star: Default::default(),
        };
        let router = Router::new(&graph, &adapted);
        let nodes = n * n;
        let mut rng = stream(seed, i as u64, Purpose::Routing);
        let pairs: Vec<(u32, u32)> = (0..trials)
            .map(|_| loop {
                let (s, t) = (rng.random_range(0..nodes), rng.random_range(0..nodes));
                if s != t {
                    break (s, t);
                }
            })
            .collect();
        let outcomes: Vec<(usize, bool)> = pairs
            .par_iter()
            .map(|&(s, t)| {
                router
                    .route(NodeId(s), NodeId(t))
                    .map(|o| (o.steps_taken, o.is_found()))
            })
            .collect::<Result<_>>()?;
        let mean_steps = outcomes.iter().map(|(s, _)| *s as f64).sum::<f64>() / trials.max(1) as f64;
        let log = f64::from(n).log2();
        let ratio = mean_steps / (log * log);
        let normalized = out.first().map_or(1.0, |first| ratio / first.ratio);
        out.push(ScalingPoint {
            n,
            trials,
            mean_steps,
            ratio,
            normalized,
            unreachable: outcomes.iter().filter(|(_, found)| !found).count(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::l1_distance;
    use crate::overlay::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn levels_follow_distance() {
        assert_eq!(level_for(1), 1);
        assert_eq!(level_for(2), 2);
        assert_eq!(level_for(3), 2);
        assert_eq!(level_for(4), 3);
        assert_eq!(level_for(1000), 10);
    }

    #[test]
    fn lattice_shape() {
        let side = 16;
        let (net, graph) = small_world_lattice(side, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(validate(&net).is_empty());
        let nearest = 2 * side * (side - 1);
        let short = net
            .links()
            .filter(|l| graph.distance(l.a, l.b).unwrap() == 1 && l.level == 1)
            .count();
        assert_eq!(short as u32, nearest);
        assert!(net.link_count() as u32 > nearest);
        for l in net.links() {
            let d = l1_distance(graph.coord(l.a).unwrap(), graph.coord(l.b).unwrap()).unwrap();
            assert_eq!(l.level, level_for(d));
        }
    }

    #[test]
    fn long_links_favor_short_distances() {
        let (net, graph) = small_world_lattice(64, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let long: Vec<u64> = net
            .links()
            .filter(|l| l.level > 1)
            .map(|l| graph.distance(l.a, l.b).unwrap())
            .collect();
        let near = long.iter().filter(|d| **d <= 8).count();
        let far = long.iter().filter(|d| **d > 64).count();
        assert!(near > far);
    }

    #[test]
    fn scaling_runs() {
        let points = routing_scaling(&[8, 16], 50, 3).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].normalized, 1.0);
        assert!(points.iter().all(|p| p.unreachable == 0 && p.mean_steps > 0.0));
    }
}
