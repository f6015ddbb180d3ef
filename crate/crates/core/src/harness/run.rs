use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_failures, generate_network_with};
use super::scenario::{Scenario, SolverChoice};
use super::seeds::{stream, Purpose};
use crate::adaption::{adapt_with, AdaptOptions, EstimationNoise};
use crate::assignment::{
    derive_interference, objective, solve_exact_with, solve_greedy, AssignmentInstance, AssignmentSolution, DemandId,
};
use crate::error::{Error, Result};
use crate::lattice::{map_overlay, PlacementSpec};
use crate::overlay::{apply_failure, FailureTarget, OverlayNetwork};
use crate::routing::{RouteStatus, Router};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverUsed {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandRoute {
    pub user: u32,
    pub status: RouteStatus,
    pub diameter: usize,
    pub steps: usize,
}

/// Wall-clock time per pipeline phase, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub map_us: u64,
    pub adapt_us: u64,
    pub route_us: u64,
    pub assign_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub trial: u32,
    /// `|S|` after failures.
    pub links: usize,
    /// `|S*|`.
    pub adapted: usize,
    pub solver: SolverUsed,
    /// Every demand was served.
    pub feasible: bool,
    /// Objective of the exported solution; absent when no solution exists.
    pub zeta: Option<f64>,
    pub served: usize,
    pub rejected: usize,
    pub routes: Vec<DemandRoute>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<PhaseTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSolution {
    pub trial: u32,
    pub solver: SolverUsed,
    pub feasible: bool,
    pub zeta: Option<f64>,
    pub rejected: Vec<DemandId>,
    pub solution: Option<AssignmentSolution>,
    pub instance: AssignmentInstance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Record wall-clock phase timings. Timings differ between runs, so
    /// outputs are no longer byte-identical when enabled.
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub solutions: Vec<TrialSolution>,
}

impl RunOutput {
    /// No trial produced a feasible assignment.
    pub fn all_infeasible(&self) -> bool {
        self.records.iter().all(|r| !r.feasible)
    }

    pub fn metrics_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            writer.serialize(CsvRow::from(r))?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn metrics_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.records)? + "\n")
    }

    pub fn solutions_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.solutions)? + "\n")
    }

    /// Writes the metrics file and `solutions.json` into `dir` and returns
    /// the paths written.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let (name, body) = match format {
            OutputFormat::Csv => ("metrics.csv", self.metrics_csv()?),
            OutputFormat::Json => ("metrics.json", self.metrics_json()?),
        };
        let metrics = dir.join(name);
        fs::write(&metrics, body)?;
        let solutions = dir.join("solutions.json");
        fs::write(&solutions, self.solutions_json()?)?;
        Ok(vec![metrics, solutions])
    }
}

/// Flat CSV form of a record; per-demand values are `;`-separated in
/// demand order.
#[derive(Serialize)]
struct CsvRow {
    trial: u32,
    links: usize,
    adapted: usize,
    solver: SolverUsed,
    feasible: bool,
    zeta: Option<f64>,
    served: usize,
    rejected: usize,
    route_status: String,
    diameters: String,
    steps: String,
    map_us: Option<u64>,
    adapt_us: Option<u64>,
    route_us: Option<u64>,
    assign_us: Option<u64>,
}

impl From<&MetricsRecord> for CsvRow {
    fn from(r: &MetricsRecord) -> Self {
        let join = |f: &dyn Fn(&DemandRoute) -> String| r.routes.iter().map(f).collect::<Vec<_>>().join(";");
        CsvRow {
            trial: r.trial,
            links: r.links,
            adapted: r.adapted,
            solver: r.solver,
            feasible: r.feasible,
            zeta: r.zeta,
            served: r.served,
            rejected: r.rejected,
            route_status: join(&|d| match d.status {
                RouteStatus::Found => "found".into(),
                RouteStatus::Unreachable => "unreachable".into(),
            }),
            diameters: join(&|d| d.diameter.to_string()),
            steps: join(&|d| d.steps.to_string()),
            map_us: r.timings.map(|t| t.map_us),
            adapt_us: r.timings.map(|t| t.adapt_us),
            route_us: r.timings.map(|t| t.route_us),
            assign_us: r.timings.map(|t| t.assign_us),
        }
    }
}

/// Runs every trial of `scenario`. Trials run in parallel; results are
/// ordered by trial id.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    scenario.validate()?;
    let base = scenario.load_network()?;
    let placement = match scenario.load_placement()? {
        Some(records) => Some(
            PlacementSpec::from_records(&records)
                .map_err(|e| Error::config("base_graph.placement_file", e.to_string()))?,
        ),
        None => None,
    };
    let results: Vec<(MetricsRecord, TrialSolution)> = (0..scenario.trials)
        .into_par_iter()
        .map(|trial| run_trial(scenario, base.as_ref(), placement.as_ref(), trial, options))
        .collect::<Result<_>>()?;
    let (records, solutions) = results.into_iter().unzip();
    Ok(RunOutput { records, solutions })
}

struct Clock(Option<Instant>);

impl Clock {
    fn start(enabled: bool) -> Self {
        Clock(enabled.then(Instant::now))
    }

    fn lap(&mut self) -> u64 {
        match &mut self.0 {
            Some(t) => {
                let us = t.elapsed().as_micros() as u64;
                *t = Instant::now();
                us
            }
            None => 0,
        }
    }
}

fn trial_network(scenario: &Scenario, base: Option<&OverlayNetwork>, trial: u32) -> Result<OverlayNetwork> {
    let seed = scenario.seed;
    let original = match (base, &scenario.network.generate) {
        (Some(net), _) => net.clone(),
        (None, Some(params)) => generate_network_with(params, &mut stream(seed, trial.into(), Purpose::Generation))
            .map_err(|e| Error::config("network.generate", e.to_string()))?,
        (None, None) => return Err(Error::config("network", "no network source")),
    };

    let mut scheduled: Vec<(usize, _)> = scenario
        .failures
        .iter()
        .enumerate()
        .filter(|(_, f)| f.time <= u64::from(trial))
        .collect();
    scheduled.sort_by_key(|(i, f)| (f.time, *i));
    let mut net = original.clone();
    for (i, event) in scheduled {
        let known = match event.target {
            FailureTarget::Link(id) => original.link(id).is_some(),
            FailureTarget::Node(node) => original.contains_node(node),
        };
        if !known {
            return Err(Error::config(
                format!("failures.{i}.target"),
                "names nothing in the network",
            ));
        }
        // a link removed by an earlier event stays removed
        if let FailureTarget::Link(id) = event.target {
            if net.link(id).is_none() {
                continue;
            }
        }
        net = apply_failure(&net, event)?;
    }
    if let Some(random) = &scenario.random_failures {
        let events = generate_failures(
            &net,
            random,
            trial.into(),
            &mut stream(seed, trial.into(), Purpose::Failures),
        );
        for event in &events {
            net = apply_failure(&net, event)?;
        }
    }
    Ok(net)
}

fn run_trial(
    scenario: &Scenario,
    base: Option<&OverlayNetwork>,
    placement: Option<&PlacementSpec>,
    trial: u32,
    options: &RunOptions,
) -> Result<(MetricsRecord, TrialSolution)> {
    let seed = scenario.seed;
    let tick = u64::from(trial);
    let mut clock = Clock::start(options.timings);
    let network = trial_network(scenario, base, trial)?;

    let spec = match placement {
        Some(spec) => spec.clone(),
        None => PlacementSpec::Seeded(stream(seed, tick, Purpose::Placement).random()),
    };
    let graph = map_overlay(&network, scenario.base_graph.k, scenario.base_graph.n, &spec)
        .map_err(|e| Error::config("base_graph", e.to_string()))?;
    let map_us = clock.lap();

    let adapt_options = AdaptOptions {
        pstar_mode: scenario.pstar_mode,
        noise: scenario.noise_amplitude.map(|amplitude| EstimationNoise {
            amplitude,
            seed: stream(seed, tick, Purpose::Noise).random(),
        }),
    };
    let adapted = adapt_with(&graph, &network, &scenario.thresholds, &adapt_options)?;
    let adapt_us = clock.lap();

    let router = Router::new(&graph, &adapted);
    let mut routes = Vec::new();
    let mut paths = Vec::new();
    for (i, d) in scenario.demands.iter().enumerate() {
        let outcome = router
            .route(d.source, d.target)
            .map_err(|e| Error::config(format!("demands.{i}"), e.to_string()))?;
        routes.push(DemandRoute {
            user: d.user,
            status: outcome.status,
            diameter: outcome.diameter,
            steps: outcome.steps_taken,
        });
        paths.push(outcome.path);
    }
    let route_us = clock.lap();

    let interference = derive_interference(&adapted, &network, &scenario.demands, &paths);
    let links = network.link_count();
    let adapted_count = adapted.len();
    let instance = AssignmentInstance::new(network, graph, adapted, scenario.demands.clone(), interference)?;
    let all: Vec<DemandId> = instance.demand_ids().collect();

    let greedy = |instance: &AssignmentInstance| {
        let out = solve_greedy(instance);
        (SolverUsed::Greedy, Some(out.solution), out.rejected)
    };
    let exact = |instance: &AssignmentInstance| {
        solve_exact_with(instance, &scenario.exact).map(|found| match found {
            Some(solution) => (SolverUsed::Exact, Some(solution), Vec::new()),
            None => (SolverUsed::Exact, None, all.clone()),
        })
    };
    let (solver, solution, rejected) = match scenario.solver {
        SolverChoice::Greedy => greedy(&instance),
        SolverChoice::Exact => exact(&instance).map_err(|e| Error::config("solver", e.to_string()))?,
        SolverChoice::Auto => match exact(&instance) {
            Err(Error::TooLarge { .. }) => greedy(&instance),
            other => other?,
        },
    };
    let zeta = solution.as_ref().map(|s| objective(&instance, s)).transpose()?;
    let assign_us = clock.lap();

    let served = if solution.is_some() {
        all.len() - rejected.len()
    } else {
        0
    };
    let feasible = solution.is_some() && rejected.is_empty();
    let record = MetricsRecord {
        trial,
        links,
        adapted: adapted_count,
        solver,
        feasible,
        zeta,
        served,
        rejected: all.len() - served,
        routes,
        timings: options.timings.then_some(PhaseTimings {
            map_us,
            adapt_us,
            route_us,
            assign_us,
        }),
    };
    let dump = TrialSolution {
        trial,
        solver,
        feasible,
        zeta,
        rejected,
        solution,
        instance,
    };
    Ok((record, dump))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaption::ThresholdPolicy;
    use crate::assignment::Demand;
    use crate::harness::generate::GeneratorParams;
    use crate::harness::scenario::{BaseGraphParams, NetworkSection};
    use crate::overlay::{FailureEvent, FailureKind, NodeId};

    fn scenario(threshold: f64) -> Scenario {
        let mut params = GeneratorParams::new(10, 25);
        params.swap_success = [0.6, 1.0];
        params.resource_count = [1, 3];
        params.throughput = [2.0, 4.0];
        Scenario {
            seed: 5,
            trials: 4,
            solver: SolverChoice::Auto,
            exact: Default::default(),
            pstar_mode: Default::default(),
            noise_amplitude: None,
            network: NetworkSection {
                file: None,
                generate: Some(params),
            },
            base_graph: BaseGraphParams {
                k: 2,
                n: 6,
                placement_file: None,
            },
            thresholds: ThresholdPolicy::uniform(threshold),
            demands: vec![
                Demand {
                    user: 0,
                    source: NodeId(0),
                    target: NodeId(7),
                    rate: 1.0,
                },
                Demand {
                    user: 1,
                    source: NodeId(2),
                    target: NodeId(9),
                    rate: 1.0,
                },
            ],
            failures: vec![],
            random_failures: None,
        }
    }

    #[test]
    fn zero_threshold_keeps_every_link() {
        let out = run_scenario(&scenario(0.0), &RunOptions::default()).unwrap();
        assert_eq!(out.records.len(), 4);
        for r in &out.records {
            assert_eq!(r.links, r.adapted);
        }
    }

    #[test]
    fn reruns_are_identical() {
        let s = scenario(0.7);
        let a = run_scenario(&s, &RunOptions::default()).unwrap();
        let b = run_scenario(&s, &RunOptions::default()).unwrap();
        assert_eq!(a.metrics_csv().unwrap(), b.metrics_csv().unwrap());
        assert_eq!(a.solutions_json().unwrap(), b.solutions_json().unwrap());
    }

    #[test]
    fn zeta_revalidates() {
        let out = run_scenario(&scenario(0.5), &RunOptions::default()).unwrap();
        for (r, s) in out.records.iter().zip(&out.solutions) {
            let json = serde_json::to_string(&s.instance).unwrap();
            let instance: AssignmentInstance = serde_json::from_str(&json).unwrap();
            let z = s.solution.as_ref().map(|sol| objective(&instance, sol).unwrap());
            assert_eq!(r.zeta, z);
        }
    }

    #[test]
    fn removing_every_link_leaves_demands_unreachable() {
        let mut s = scenario(0.0);
        s.failures = (0..10)
            .map(|n| FailureEvent {
                target: FailureTarget::Node(NodeId(n)),
                kind: FailureKind::RemoveLink,
                magnitude: 1.0,
                time: 0,
            })
            .collect();
        let out = run_scenario(&s, &RunOptions::default()).unwrap();
        assert!(out.all_infeasible());
        for r in &out.records {
            assert_eq!(r.links, 0);
            assert!(r.zeta.is_none());
            assert!(r.routes.iter().all(|d| d.status == RouteStatus::Unreachable));
        }
    }

    #[test]
    fn failures_apply_from_their_tick() {
        let mut s = scenario(0.0);
        s.failures = vec![FailureEvent {
            target: FailureTarget::Node(NodeId(0)),
            kind: FailureKind::RemoveLink,
            magnitude: 1.0,
            time: 2,
        }];
        let with = run_scenario(&s, &RunOptions::default()).unwrap();
        s.failures.clear();
        let without = run_scenario(&s, &RunOptions::default()).unwrap();
        for t in 0..4 {
            let (a, b) = (&with.records[t], &without.records[t]);
            if t < 2 {
                assert_eq!(a.links, b.links);
            } else {
                assert!(a.links <= b.links);
                assert_eq!(a.routes[0].status, RouteStatus::Unreachable);
            }
        }
    }

    #[test]
    fn noise_does_not_move_other_streams() {
        let quiet = scenario(0.0);
        let mut noisy = quiet.clone();
        noisy.noise_amplitude = Some(0.1);
        let a = run_scenario(&quiet, &RunOptions::default()).unwrap();
        let b = run_scenario(&noisy, &RunOptions::default()).unwrap();
        for (x, y) in a.solutions.iter().zip(&b.solutions) {
            assert_eq!(x.instance.network(), y.instance.network());
            assert_eq!(x.instance.graph(), y.instance.graph());
        }
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&scenario(0.5), &RunOptions { timings: true }).unwrap();
        let files = out.write(dir.path(), OutputFormat::Csv).unwrap();
        let csv = fs::read_to_string(&files[0]).unwrap();
        assert!(
            csv.starts_with("trial,links,adapted,solver,feasible,zeta,served,rejected,route_status,diameters,steps")
        );
        assert_eq!(csv.lines().count(), 5);
        let files = out.write(dir.path(), OutputFormat::Json).unwrap();
        let records: Vec<MetricsRecord> = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(records, out.records);
    }
}
