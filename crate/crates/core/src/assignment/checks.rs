use std::collections::BTreeMap;

use serde::Serialize;

use super::{AssignmentInstance, AssignmentSolution, DemandId, StateRef};
use crate::error::{Error, Result};
use crate::overlay::{LinkId, NodeId};

/// Whether `load` stays within `throughput`, allowing for summation noise.
pub(crate) fn fits(load: f64, throughput: f64) -> bool {
    load <= throughput + 1e-9 * throughput.abs().max(1.0)
}

fn ensure_references(instance: &AssignmentInstance, solution: &AssignmentSolution) -> Result<()> {
    let dangling = |msg: String| Err(Error::DanglingReference(msg));
    for a in &solution.c {
        if instance.demand_of_user(a.user).is_none() {
            return dangling(format!("user {} has no demand", a.user));
        }
        if !instance.states(a.link).contains(&a.state) {
            return dangling(format!("{} is not an assignable state", a.state_ref()));
        }
    }
    for g in &solution.k {
        match instance.demand(g.demand) {
            Some(d) if d.user == g.user => {}
            _ => return dangling(format!("grant names {} of user {}", g.demand, g.user)),
        }
        if !instance.states(g.state.link).contains(&g.state.state) {
            return dangling(format!("grant names missing {}", g.state));
        }
    }
    Ok(())
}

/// Total unreliability of the reserved states: the sum of `1 - p*` over
/// every entry of `C`.
pub fn objective(instance: &AssignmentInstance, solution: &AssignmentSolution) -> Result<f64> {
    ensure_references(instance, solution)?;
    Ok(solution
        .c
        .iter()
        .map(|a| 1.0 - instance.p_star(a.link).unwrap_or(0.0))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityViolation {
    pub link: LinkId,
    pub load: f64,
    pub throughput: f64,
}

/// Links whose summed assigned demand rate exceeds their throughput.
pub fn check_capacity(instance: &AssignmentInstance, solution: &AssignmentSolution) -> Vec<CapacityViolation> {
    let mut load: BTreeMap<LinkId, f64> = BTreeMap::new();
    for a in &solution.c {
        let rate = instance.demand_of_user(a.user).map_or(0.0, |(_, d)| d.rate);
        *load.entry(a.link).or_default() += rate;
    }
    load.into_iter()
        .filter_map(|(link, load)| {
            let throughput = instance.network().link(link)?.throughput;
            (!fits(load, throughput)).then_some(CapacityViolation { link, load, throughput })
        })
        .collect()
}

/// States of `user` leaving `node` minus states entering it.
pub fn flow_imbalance(
    instance: &AssignmentInstance,
    solution: &AssignmentSolution,
    node: NodeId,
    user: u32,
) -> Result<i64> {
    if instance.graph().coord(node).is_none() {
        return Err(Error::UnmappedNode(node));
    }
    if instance.demand_of_user(user).is_none() {
        return Err(Error::NotFound(format!("user {user}")));
    }
    let mut delta = 0;
    for a in solution.c.iter().filter(|a| a.user == user) {
        let link = instance
            .network()
            .link(a.link)
            .ok_or_else(|| Error::DanglingReference(a.link.to_string()))?;
        let to = link
            .other(a.from)
            .ok_or_else(|| Error::DanglingReference(format!("{} does not touch {}", a.link, a.from)))?;
        if a.from == node {
            delta += 1;
        } else if to == node {
            delta -= 1;
        }
    }
    Ok(delta)
}

/// Users of `solution` whose states do not form a single source-to-target
/// flow: +1 at the source, -1 at the target and 0 everywhere else.
pub fn check_flow(instance: &AssignmentInstance, solution: &AssignmentSolution) -> Result<Vec<u32>> {
    let mut bad = Vec::new();
    for user in solution.served_users() {
        let Some((_, demand)) = instance.demand_of_user(user) else {
            return Err(Error::DanglingReference(format!("user {user} has no demand")));
        };
        let mut ok = true;
        for node in instance.graph().placement().keys() {
            let expected = if *node == demand.source {
                1
            } else if *node == demand.target {
                -1
            } else {
                0
            };
            if flow_imbalance(instance, solution, *node, user)? != expected {
                ok = false;
                break;
            }
        }
        if !ok {
            bad.push(user);
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InterferenceViolation {
    /// More than one competing demand of one interference set was granted
    /// its resource state.
    Overcommitted { state: StateRef, demands: Vec<DemandId> },
    /// A demand holds a contested state without a matching grant.
    MissingGrant {
        user: u32,
        demand: DemandId,
        state: StateRef,
    },
    /// A grant without the state assignment backing it.
    UngroundedGrant {
        user: u32,
        demand: DemandId,
        state: StateRef,
    },
}

/// Violations of "at most one competing demand per resource state", plus
/// any disagreement between the grants and the assignments.
pub fn check_interference(instance: &AssignmentInstance, solution: &AssignmentSolution) -> Vec<InterferenceViolation> {
    let mut out = Vec::new();
    for set in instance.interference() {
        let mut granted: Vec<DemandId> = solution
            .k
            .iter()
            .filter(|g| g.state == set.resource_state && set.competing.iter().any(|c| c.demand == g.demand))
            .map(|g| g.demand)
            .collect();
        granted.sort();
        granted.dedup();
        if granted.len() > 1 {
            out.push(InterferenceViolation::Overcommitted {
                state: set.resource_state,
                demands: granted,
            });
        }
    }
    for a in &solution.c {
        let Some((demand, _)) = instance.demand_of_user(a.user) else {
            continue;
        };
        let state = a.state_ref();
        if instance.is_contested(state, demand) && !solution.k.iter().any(|g| g.demand == demand && g.state == state) {
            out.push(InterferenceViolation::MissingGrant {
                user: a.user,
                demand,
                state,
            });
        }
    }
    for g in &solution.k {
        if !solution.c.iter().any(|a| a.user == g.user && a.state_ref() == g.state) {
            out.push(InterferenceViolation::UngroundedGrant {
                user: g.user,
                demand: g.demand,
                state: g.state,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport {
    pub zeta: f64,
    pub capacity: Vec<CapacityViolation>,
    pub interference: Vec<InterferenceViolation>,
    /// Users whose states break the source-to-target flow pattern.
    pub flow: Vec<u32>,
}

impl SolutionReport {
    pub fn is_valid(&self) -> bool {
        self.capacity.is_empty() && self.interference.is_empty() && self.flow.is_empty()
    }
}

/// Runs every check on `solution`.
pub fn check_solution(instance: &AssignmentInstance, solution: &AssignmentSolution) -> Result<SolutionReport> {
    Ok(SolutionReport {
        zeta: objective(instance, solution)?,
        capacity: check_capacity(instance, solution),
        interference: check_interference(instance, solution),
        flow: check_flow(instance, solution)?,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::instance;
    use super::super::{Assignment, Grant};
    use super::*;

    fn assign(user: u32, link: u32, state: u32, from: u32) -> Assignment {
        Assignment {
            user,
            link: LinkId(link),
            state,
            from: NodeId(from),
        }
    }

    #[test]
    fn objective_examples() {
        let inst = instance(3, &[(0, 1, 0.7, 5.0, 1)], &[(0, 1, 1.0)], &[]);
        assert_eq!(objective(&inst, &AssignmentSolution::default()).unwrap(), 0.0);
        let sol = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0)],
            k: vec![],
        };
        assert!((objective(&inst, &sol).unwrap() - 0.3).abs() < 1e-12);

        let inst = instance(
            4,
            &[(0, 1, 1.0, 5.0, 1), (2, 3, 0.9, 5.0, 1)],
            &[(0, 1, 1.0), (2, 3, 1.0)],
            &[],
        );
        let sol = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0), assign(1, 1, 0, 2)],
            k: vec![],
        };
        assert!((objective(&inst, &sol).unwrap() - 0.1).abs() < 1e-12);

        let dangling = AssignmentSolution {
            c: vec![assign(0, 0, 3, 0)],
            k: vec![],
        };
        assert!(matches!(objective(&inst, &dangling), Err(Error::DanglingReference(_))));
        let unknown_user = AssignmentSolution {
            c: vec![assign(7, 0, 0, 0)],
            k: vec![],
        };
        assert!(objective(&inst, &unknown_user).is_err());
    }

    #[test]
    fn objective_is_additive() {
        let inst = instance(
            4,
            &[(0, 1, 0.75, 5.0, 1), (2, 3, 0.5, 5.0, 1)],
            &[(0, 1, 1.0), (2, 3, 1.0)],
            &[],
        );
        let a = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0)],
            k: vec![],
        };
        let b = AssignmentSolution {
            c: vec![assign(1, 1, 0, 2)],
            k: vec![],
        };
        let sum = objective(&inst, &a).unwrap() + objective(&inst, &b).unwrap();
        assert_eq!(objective(&inst, &a.merged(&b)).unwrap(), sum);
    }

    #[test]
    fn capacity_examples() {
        let inst = instance(2, &[(0, 1, 1.0, 5.0, 2)], &[(0, 1, 2.0)], &[]);
        assert!(check_capacity(
            &inst,
            &AssignmentSolution {
                c: vec![assign(0, 0, 0, 0)],
                k: vec![]
            }
        )
        .is_empty());
        assert!(check_capacity(&inst, &AssignmentSolution::default()).is_empty());

        let inst = instance(
            3,
            &[(0, 1, 1.0, 5.0, 2), (1, 2, 1.0, 5.0, 1)],
            &[(0, 1, 3.0), (2, 0, 3.0)],
            &[],
        );
        let sol = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0), assign(1, 0, 1, 1), assign(1, 1, 0, 2)],
            k: vec![],
        };
        let v = check_capacity(&inst, &sol);
        assert_eq!(
            v,
            vec![CapacityViolation {
                link: LinkId(0),
                load: 6.0,
                throughput: 5.0
            }]
        );
    }

    #[test]
    fn flow_examples() {
        let inst = instance(3, &[(0, 1, 1.0, 5.0, 1), (1, 2, 1.0, 5.0, 1)], &[(0, 2, 1.0)], &[]);
        let sol = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0), assign(0, 1, 0, 1)],
            k: vec![],
        };
        assert_eq!(flow_imbalance(&inst, &sol, NodeId(0), 0).unwrap(), 1);
        assert_eq!(flow_imbalance(&inst, &sol, NodeId(2), 0).unwrap(), -1);
        assert_eq!(flow_imbalance(&inst, &sol, NodeId(1), 0).unwrap(), 0);
        assert!(check_flow(&inst, &sol).unwrap().is_empty());
        assert!(matches!(
            flow_imbalance(&inst, &sol, NodeId(9), 0),
            Err(Error::UnmappedNode(_))
        ));
        assert!(matches!(
            flow_imbalance(&inst, &sol, NodeId(0), 4),
            Err(Error::NotFound(_))
        ));

        let broken = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0)],
            k: vec![],
        };
        assert_eq!(check_flow(&inst, &broken).unwrap(), vec![0]);
    }

    #[test]
    fn interference_examples() {
        let inst = instance(
            3,
            &[(0, 1, 1.0, 5.0, 1), (2, 1, 1.0, 5.0, 1)],
            &[(0, 1, 1.0), (2, 1, 1.0)],
            &[(0, 0, &[0, 1])],
        );
        let f = StateRef {
            link: LinkId(0),
            state: 0,
        };
        let one = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0)],
            k: vec![Grant {
                user: 0,
                demand: DemandId(0),
                state: f,
            }],
        };
        assert!(check_interference(&inst, &one).is_empty());
        assert!(check_interference(&inst, &AssignmentSolution::default()).is_empty());

        let both = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0), assign(1, 0, 0, 1)],
            k: vec![
                Grant {
                    user: 0,
                    demand: DemandId(0),
                    state: f,
                },
                Grant {
                    user: 1,
                    demand: DemandId(1),
                    state: f,
                },
            ],
        };
        let v = check_interference(&inst, &both);
        assert_eq!(
            v,
            vec![InterferenceViolation::Overcommitted {
                state: f,
                demands: vec![DemandId(0), DemandId(1)]
            }]
        );

        let missing = AssignmentSolution {
            c: vec![assign(0, 0, 0, 0)],
            k: vec![],
        };
        assert!(matches!(
            check_interference(&inst, &missing)[..],
            [InterferenceViolation::MissingGrant { .. }]
        ));
        let ungrounded = AssignmentSolution {
            c: vec![],
            k: vec![Grant {
                user: 0,
                demand: DemandId(0),
                state: f,
            }],
        };
        assert!(matches!(
            check_interference(&inst, &ungrounded)[..],
            [InterferenceViolation::UngroundedGrant { .. }]
        ));
    }
}
