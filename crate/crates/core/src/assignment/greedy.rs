use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::checks::fits;
use super::{AssignmentInstance, AssignmentSolution, DemandId, Hop, StateRef};
use crate::overlay::{LinkId, NodeId};
use crate::routing::Router;

/// Route searches allowed per demand before it is rejected.
const SEARCH_BUDGET: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyOutcome {
    /// Assignments of the admitted demands.
    pub solution: AssignmentSolution,
    /// Demands that could not be served, in admission order.
    pub rejected: Vec<DemandId>,
    /// Admitted demands that left their first route through an alternate link.
    pub spilled: Vec<DemandId>,
}

impl GreedyOutcome {
    /// Whether every demand was admitted.
    pub fn is_feasible(&self) -> bool {
        self.rejected.is_empty()
    }
}

struct Greedy<'a> {
    instance: &'a AssignmentInstance,
    router: Router<'a>,
    holders: BTreeMap<StateRef, Vec<DemandId>>,
    load: BTreeMap<LinkId, f64>,
    budget: usize,
    spilled: bool,
}

impl Greedy<'_> {
    /// First state of `link` that `q` can take next to the admitted demands.
    fn free_state(&self, q: DemandId, link: LinkId) -> Option<u32> {
        let rate = self.instance.demands()[q.0 as usize].rate;
        let throughput = self.instance.network().link(link)?.throughput;
        if !fits(self.load.get(&link).copied().unwrap_or(0.0) + rate, throughput) {
            return None;
        }
        self.instance.states(link).iter().copied().find(|&state| {
            let f = StateRef { link, state };
            let holders = self.holders.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            !self.instance.conflicts(f, q, holders)
        })
    }

    /// Alternate `S*` links out of `node`, best `p*` first, skipping the
    /// blocked link, the link the demand arrived on and visited neighbors.
    fn alternates(
        &self,
        node: NodeId,
        blocked: LinkId,
        arrived: Option<LinkId>,
        visited: &BTreeSet<NodeId>,
    ) -> Vec<(NodeId, LinkId)> {
        let incident: Vec<(NodeId, LinkId, f64)> = self
            .instance
            .graph()
            .contacts(node)
            .iter()
            .filter_map(|c| Some((c.node, c.link, self.instance.p_star(c.link)?)))
            .collect();
        let z = incident.len();
        let mut out: Vec<(NodeId, LinkId, f64)> = incident
            .into_iter()
            .filter(|(w, l, _)| *l != blocked && Some(*l) != arrived && !visited.contains(w))
            .collect();
        out.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)));
        out.into_iter()
            .take(z.saturating_sub(1))
            .map(|(w, l, _)| (w, l))
            .collect()
    }

    /// Extends `hops` from `at` to the demand's target. On failure the
    /// hops and visited set may hold partial progress; callers restore.
    fn serve(
        &mut self,
        q: DemandId,
        at: NodeId,
        arrived: Option<LinkId>,
        visited: &mut BTreeSet<NodeId>,
        hops: &mut Vec<Hop>,
    ) -> bool {
        let target = self.instance.demands()[q.0 as usize].target;
        if at == target {
            return true;
        }
        if self.budget == 0 {
            return false;
        }
        self.budget -= 1;
        let Ok(outcome) = self.router.route_avoiding(at, target, visited) else {
            return false;
        };
        let Some(path) = outcome.path else {
            return false;
        };
        let mut arrived = arrived;
        for (a, b, link) in path.hops() {
            if let Some(state) = self.free_state(q, link) {
                hops.push(Hop {
                    from: a,
                    to: b,
                    link,
                    state,
                });
                visited.insert(b);
                arrived = Some(link);
                continue;
            }
            for (w, alt) in self.alternates(a, link, arrived, visited) {
                let Some(state) = self.free_state(q, alt) else { continue };
                let (mark, saved) = (hops.len(), visited.clone());
                hops.push(Hop {
                    from: a,
                    to: w,
                    link: alt,
                    state,
                });
                visited.insert(w);
                if self.serve(q, w, Some(alt), visited, hops) {
                    self.spilled = true;
                    return true;
                }
                hops.truncate(mark);
                *visited = saved;
            }
            return false;
        }
        true
    }

    fn commit(&mut self, q: DemandId, hops: &[Hop]) {
        let rate = self.instance.demands()[q.0 as usize].rate;
        for hop in hops {
            self.holders
                .entry(StateRef {
                    link: hop.link,
                    state: hop.state,
                })
                .or_default()
                .push(q);
            *self.load.entry(hop.link).or_default() += rate;
        }
    }
}

/// Admits demands one at a time, highest rate first, each taking the first
/// free state along its greedy route and spilling onto alternate links of
/// the blocked node when a link has no free state left. Demands that
/// cannot be placed are rejected.
pub fn solve_greedy(instance: &AssignmentInstance) -> GreedyOutcome {
    let mut order: Vec<DemandId> = instance.demand_ids().collect();
    order.sort_by(|a, b| {
        let (x, y) = (&instance.demands()[a.0 as usize], &instance.demands()[b.0 as usize]);
        y.rate.total_cmp(&x.rate).then(x.user.cmp(&y.user))
    });

    let mut greedy = Greedy {
        instance,
        router: Router::new(instance.graph(), instance.adapted()),
        holders: BTreeMap::new(),
        load: BTreeMap::new(),
        budget: 0,
        spilled: false,
    };
    let mut routes: Vec<(DemandId, Vec<Hop>)> = Vec::new();
    let mut rejected = Vec::new();
    let mut spilled = Vec::new();
    for q in order {
        let source = instance.demands()[q.0 as usize].source;
        greedy.budget = SEARCH_BUDGET;
        greedy.spilled = false;
        let mut visited = BTreeSet::from([source]);
        let mut hops = Vec::new();
        if greedy.serve(q, source, None, &mut visited, &mut hops) {
            greedy.commit(q, &hops);
            if greedy.spilled {
                spilled.push(q);
            }
            routes.push((q, hops));
        } else {
            rejected.push(q);
        }
    }
    routes.sort_by_key(|(q, _)| *q);
    let solution = AssignmentSolution::from_routes(instance, routes.iter().map(|(q, h)| (*q, h.as_slice())));
    GreedyOutcome {
        solution,
        rejected,
        spilled,
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::instance;
    use super::super::{check_solution, solve_exact};
    use super::*;

    #[test]
    fn trivial_case_served_directly() {
        // one interfering demand, three states on the link
        let inst = instance(2, &[(0, 1, 1.0, 5.0, 3)], &[(0, 1, 1.0)], &[]);
        let out = solve_greedy(&inst);
        assert!(out.is_feasible());
        assert!(out.spilled.is_empty());
        assert_eq!(out.solution.c.len(), 1);
    }

    #[test]
    fn spills_onto_alternate_link() {
        // sources 0 and 1 meet at hub 2 whose single-state link to 4 is
        // contested; the alternate 2-3-4 takes the second demand
        let inst = instance(
            5,
            &[
                (0, 2, 1.0, 9.0, 1),
                (1, 2, 1.0, 9.0, 1),
                (2, 4, 1.0, 9.0, 1),
                (2, 3, 0.5, 9.0, 1),
                (3, 4, 0.5, 9.0, 1),
            ],
            &[(0, 4, 1.0), (1, 4, 1.0)],
            &[(2, 0, &[0, 1])],
        );
        let out = solve_greedy(&inst);
        assert!(out.is_feasible(), "{out:?}");
        assert_eq!(out.spilled, vec![DemandId(1)]);
        let report = check_solution(&inst, &out.solution).unwrap();
        assert!(report.is_valid(), "{report:?}");
    }

    #[test]
    fn pigeonhole_rejects() {
        let inst = instance(
            5,
            &[
                (0, 3, 1.0, 9.0, 1),
                (1, 3, 1.0, 9.0, 1),
                (2, 3, 1.0, 9.0, 2),
                (3, 4, 1.0, 9.0, 2),
            ],
            &[(0, 4, 1.0), (1, 4, 1.0), (2, 4, 1.0)],
            &[(3, 0, &[0, 1, 2]), (3, 1, &[0, 1, 2])],
        );
        let out = solve_greedy(&inst);
        assert_eq!(out.rejected.len(), 1);
        assert!(check_solution(&inst, &out.solution).unwrap().is_valid());
    }

    #[test]
    fn admission_order_prefers_rate() {
        let inst = instance(
            2,
            &[(0, 1, 1.0, 5.0, 1)],
            &[(0, 1, 1.0), (0, 1, 4.0)],
            &[(0, 0, &[0, 1])],
        );
        let out = solve_greedy(&inst);
        assert_eq!(out.rejected, vec![DemandId(0)]);
    }

    #[test]
    fn greedy_never_beats_exact() {
        let inst = instance(
            4,
            &[
                (0, 3, 0.5, 5.0, 1),
                (0, 1, 1.0, 5.0, 1),
                (1, 3, 1.0, 5.0, 1),
                (2, 3, 1.0, 5.0, 1),
            ],
            &[(0, 3, 1.0)],
            &[],
        );
        let g = solve_greedy(&inst);
        let e = solve_exact(&inst).unwrap().unwrap();
        let zg = check_solution(&inst, &g.solution).unwrap().zeta;
        let ze = check_solution(&inst, &e).unwrap().zeta;
        assert!(zg >= ze);
    }
}
