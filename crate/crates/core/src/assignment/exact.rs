use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::checks::fits;
use super::{AssignmentInstance, AssignmentSolution, DemandId, Hop, StateRef};
use crate::error::{Error, Result};
use crate::overlay::{LinkId, NodeId};
use crate::routing::Path;

/// Size limits for [`solve_exact_with`], counted in binary assignment
/// variables (one per demand and state on a link the demand could use).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactConfig {
    /// Up to this many variables the search runs without pruning.
    pub exhaustive_cap: usize,
    /// Hard limit; larger instances are rejected as too large.
    pub bnb_cap: usize,
    /// Limit on DFS expansions while listing candidate paths.
    pub path_budget: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig {
            exhaustive_cap: 12,
            bnb_cap: 40,
            path_budget: 100_000,
        }
    }
}

/// All simple `source -> target` paths over `S*`, parallel links counted
/// separately. `None` when listing them needs more than `budget` expansions.
pub fn candidate_paths(
    instance: &AssignmentInstance,
    source: NodeId,
    target: NodeId,
    budget: usize,
) -> Option<Vec<Path>> {
    let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, LinkId)>> = BTreeMap::new();
    for (link, _) in instance.usable_links() {
        adjacency.entry(link.a).or_default().push((link.b, link.id));
        adjacency.entry(link.b).or_default().push((link.a, link.id));
    }

    struct Walk<'a> {
        adjacency: &'a BTreeMap<NodeId, Vec<(NodeId, LinkId)>>,
        target: NodeId,
        nodes: Vec<NodeId>,
        links: Vec<LinkId>,
        out: Vec<Path>,
        budget: usize,
    }

    impl Walk<'_> {
        fn go(&mut self, at: NodeId) -> bool {
            if self.budget == 0 {
                return false;
            }
            self.budget -= 1;
            if at == self.target {
                self.out.push(Path {
                    nodes: self.nodes.clone(),
                    links: self.links.clone(),
                });
                return true;
            }
            let adjacency = self.adjacency;
            for &(next, link) in adjacency.get(&at).into_iter().flatten() {
                if self.nodes.contains(&next) {
                    continue;
                }
                self.nodes.push(next);
                self.links.push(link);
                let ok = self.go(next);
                self.nodes.pop();
                self.links.pop();
                if !ok {
                    return false;
                }
            }
            true
        }
    }

    let mut walk = Walk {
        adjacency: &adjacency,
        target,
        nodes: vec![source],
        links: Vec::new(),
        out: Vec::new(),
        budget,
    };
    walk.go(source).then_some(walk.out)
}

struct Prepared {
    /// Candidate paths per demand with their cost, cheapest first.
    paths: Vec<Vec<(f64, Path)>>,
    variables: usize,
}

fn prepare(instance: &AssignmentInstance, config: &ExactConfig) -> Result<Prepared> {
    let mut paths = Vec::new();
    let mut variables = 0;
    for d in instance.demands() {
        let Some(found) = candidate_paths(instance, d.source, d.target, config.path_budget) else {
            return Err(Error::TooLarge {
                variables: usize::MAX,
                cap: config.bnb_cap,
            });
        };
        let used: BTreeSet<LinkId> = found.iter().flat_map(|p| p.links.iter().copied()).collect();
        variables += used.iter().map(|l| instance.states(*l).len()).sum::<usize>();
        let mut costed: Vec<(f64, Path)> = found
            .into_iter()
            .map(|p| {
                (
                    p.links.iter().map(|l| 1.0 - instance.p_star(*l).unwrap_or(0.0)).sum(),
                    p,
                )
            })
            .collect();
        costed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.links.cmp(&b.1.links)));
        paths.push(costed);
    }
    Ok(Prepared { paths, variables })
}

/// Number of binary assignment variables the exact search would face.
pub fn variable_count(instance: &AssignmentInstance, config: &ExactConfig) -> Result<usize> {
    prepare(instance, config).map(|p| p.variables)
}

/// Minimum-cost assignment serving every demand, or `None` when no
/// feasible assignment exists.
pub fn solve_exact(instance: &AssignmentInstance) -> Result<Option<AssignmentSolution>> {
    solve_exact_with(instance, &ExactConfig::default())
}

pub fn solve_exact_with(instance: &AssignmentInstance, config: &ExactConfig) -> Result<Option<AssignmentSolution>> {
    let prepared = prepare(instance, config)?;
    if prepared.variables > config.bnb_cap {
        return Err(Error::TooLarge {
            variables: prepared.variables,
            cap: config.bnb_cap,
        });
    }
    if prepared.paths.iter().any(Vec::is_empty) {
        return Ok(None);
    }
    // cheapest remaining cost from demand i onward, for pruning
    let mut min_rest = vec![0.0; prepared.paths.len() + 1];
    for i in (0..prepared.paths.len()).rev() {
        min_rest[i] = min_rest[i + 1] + prepared.paths[i][0].0;
    }
    let mut search = Search {
        instance,
        paths: &prepared.paths,
        min_rest,
        prune: prepared.variables > config.exhaustive_cap,
        holders: BTreeMap::new(),
        load: BTreeMap::new(),
        routes: vec![Vec::new(); prepared.paths.len()],
        best: None,
    };
    search.demand(0, 0.0);
    Ok(search.best.map(|(_, routes)| {
        AssignmentSolution::from_routes(
            instance,
            routes
                .iter()
                .enumerate()
                .map(|(i, hops)| (DemandId(i as u32), hops.as_slice())),
        )
    }))
}

struct Search<'a> {
    instance: &'a AssignmentInstance,
    paths: &'a [Vec<(f64, Path)>],
    min_rest: Vec<f64>,
    prune: bool,
    holders: BTreeMap<StateRef, Vec<DemandId>>,
    load: BTreeMap<LinkId, f64>,
    routes: Vec<Vec<Hop>>,
    best: Option<(f64, Vec<Vec<Hop>>)>,
}

impl Search<'_> {
    fn bound(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |(c, _)| *c)
    }

    fn demand(&mut self, i: usize, cost: f64) {
        if i == self.paths.len() {
            if cost < self.bound() {
                self.best = Some((cost, self.routes.clone()));
            }
            return;
        }
        let paths = self.paths;
        for (path_cost, path) in &paths[i] {
            let total = cost + path_cost;
            if self.prune && total + self.min_rest[i + 1] >= self.bound() {
                // paths are sorted by cost, later ones cannot do better
                break;
            }
            self.hop(i, path, 0, total);
        }
    }

    fn hop(&mut self, i: usize, path: &Path, h: usize, cost: f64) {
        if self.prune && cost + self.min_rest[i + 1] >= self.bound() {
            return;
        }
        if h == path.links.len() {
            self.demand(i + 1, cost);
            return;
        }
        let q = DemandId(i as u32);
        let link = path.links[h];
        let rate = self.instance.demands()[i].rate;
        let throughput = self.instance.network().link(link).map_or(0.0, |l| l.throughput);
        let load = self.load.get(&link).copied().unwrap_or(0.0);
        if !fits(load + rate, throughput) {
            return;
        }
        for &state in self.instance.states(link) {
            let f = StateRef { link, state };
            let holders = self.holders.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            if self.instance.conflicts(f, q, holders) {
                continue;
            }
            self.holders.entry(f).or_default().push(q);
            self.load.insert(link, load + rate);
            self.routes[i].push(Hop {
                from: path.nodes[h],
                to: path.nodes[h + 1],
                link,
                state,
            });
            self.hop(i, path, h + 1, cost);
            self.routes[i].pop();
            self.load.insert(link, load);
            if let Some(v) = self.holders.get_mut(&f) {
                v.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::instance;
    use super::super::{check_solution, objective};
    use super::*;

    #[test]
    fn single_user_single_path() {
        let inst = instance(3, &[(0, 1, 0.75, 5.0, 1), (1, 2, 0.5, 5.0, 1)], &[(0, 2, 1.0)], &[]);
        let sol = solve_exact(&inst).unwrap().unwrap();
        assert_eq!(sol.c.len(), 2);
        assert_eq!(objective(&inst, &sol).unwrap(), 0.75);
        assert!(check_solution(&inst, &sol).unwrap().is_valid());
    }

    #[test]
    fn two_disjoint_users() {
        let inst = instance(
            4,
            &[(0, 1, 0.75, 5.0, 1), (2, 3, 0.5, 5.0, 1)],
            &[(0, 1, 1.0), (2, 3, 1.0)],
            &[],
        );
        let sol = solve_exact(&inst).unwrap().unwrap();
        assert_eq!(objective(&inst, &sol).unwrap(), 0.75);
    }

    #[test]
    fn picks_cheaper_route() {
        // direct link 0-2 is poor, the detour through 1 is better
        let inst = instance(
            3,
            &[(0, 2, 0.25, 5.0, 1), (0, 1, 1.0, 5.0, 1), (1, 2, 0.875, 5.0, 1)],
            &[(0, 2, 1.0)],
            &[],
        );
        let sol = solve_exact(&inst).unwrap().unwrap();
        assert_eq!(objective(&inst, &sol).unwrap(), 0.125);
    }

    #[test]
    fn pigeonhole_is_infeasible() {
        // three demands contend for the single state of the bottleneck 3-4
        let inst = instance(
            5,
            &[
                (0, 3, 1.0, 9.0, 1),
                (1, 3, 1.0, 9.0, 1),
                (2, 3, 1.0, 9.0, 1),
                (3, 4, 1.0, 9.0, 1),
            ],
            &[(0, 4, 1.0), (1, 4, 1.0), (2, 4, 1.0)],
            &[(3, 0, &[0, 1, 2])],
        );
        assert_eq!(solve_exact(&inst).unwrap(), None);
    }

    #[test]
    fn capacity_forces_detour() {
        let inst = instance(
            3,
            &[(0, 2, 1.0, 1.0, 1), (0, 1, 0.5, 5.0, 1), (1, 2, 0.5, 5.0, 1)],
            &[(0, 2, 1.0), (0, 2, 1.0)],
            &[],
        );
        let sol = solve_exact(&inst).unwrap().unwrap();
        assert_eq!(objective(&inst, &sol).unwrap(), 1.0);
        assert!(check_solution(&inst, &sol).unwrap().is_valid());
    }

    #[test]
    fn size_cap() {
        let inst = instance(2, &[(0, 1, 1.0, 99.0, 30)], &[(0, 1, 1.0), (1, 0, 1.0)], &[]);
        assert_eq!(variable_count(&inst, &ExactConfig::default()).unwrap(), 60);
        assert!(matches!(
            solve_exact(&inst),
            Err(Error::TooLarge { variables: 60, cap: 40 })
        ));
    }

    #[test]
    fn unreachable_demand() {
        let inst = instance(3, &[(0, 1, 1.0, 5.0, 1)], &[(0, 2, 1.0)], &[]);
        assert_eq!(solve_exact(&inst).unwrap(), None);
    }
}
