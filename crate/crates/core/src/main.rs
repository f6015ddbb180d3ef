use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use etopo::adaption::{adapt_with, AdaptOptions, AdaptedLinkSet, PStarMode, ThresholdPolicy};
use etopo::assignment::{
    objective, reduction_from_coloring, solve_exact_with, solve_greedy, AssignmentInstance, AssignmentSolution,
    ConflictGraph, DemandId, ExactConfig,
};
use etopo::harness::{
    generate_network, routing_scaling, run_scenario, GeneratorParams, OutputFormat, RunOptions, Scenario, SolverChoice,
};
use etopo::lattice::{map_overlay, BaseGraph, PlacementRecord, PlacementSpec};
use etopo::overlay::{NodeId, OverlayNetwork};
use etopo::routing::{shortest_path_oracle, Router, RoutingOutcome};
use etopo::Error;

const CONFIG_ERROR: u8 = 1;
const INFEASIBLE: u8 = 2;
const INTERNAL_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "etopo", version, about = "Entangled repeater network topology tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random overlay network.
    Generate(GenerateArgs),
    /// Filter a network by link thresholds and report the adapted set.
    Adapt(AdaptArgs),
    /// Route between two nodes over the adapted network.
    Route(RouteArgs),
    /// Solve an assignment instance file.
    Assign(AssignArgs),
    /// Run a scenario file and write metrics and solutions.
    Run(RunArgs),
    /// Turn a graph-coloring question into an assignment instance.
    ReduceColoring(ReduceArgs),
    /// Measure greedy routing steps on small-world lattices.
    BenchRouting(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML file with generator parameters.
    #[arg(long, conflicts_with_all = ["nodes", "links"])]
    params: Option<PathBuf>,
    #[arg(long, required_unless_present = "params")]
    nodes: Option<u32>,
    #[arg(long, required_unless_present = "params")]
    links: Option<u32>,
    /// Comma-separated relative weights of levels 1, 2, ...
    #[arg(long, value_delimiter = ',')]
    level_weights: Option<Vec<f64>>,
    #[arg(long, env = "ETOPO_SEED", default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NetworkArgs {
    /// Network JSON file.
    #[arg(long)]
    network: PathBuf,
    /// Lattice dimension.
    #[arg(long, default_value_t = 2)]
    k: u32,
    /// Lattice side length.
    #[arg(long)]
    n: u32,
    /// Placement JSON file (list of `{node, coords}`); random when absent.
    #[arg(long)]
    placement: Option<PathBuf>,
    #[arg(long, env = "ETOPO_SEED", default_value_t = 0)]
    seed: u64,
    /// Threshold policy TOML file.
    #[arg(long, conflicts_with = "threshold")]
    thresholds: Option<PathBuf>,
    /// Uniform threshold for every level.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = PStarMode::Measured)]
    pstar_mode: PStarMode,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RouteArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    source: u32,
    #[arg(long)]
    target: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AssignArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverChoice::Auto)]
    solver: SolverChoice,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Overrides the scenario seed.
    #[arg(long, env = "ETOPO_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    pstar_mode: Option<PStarMode>,
    /// Record per-phase wall-clock times (outputs then differ between runs).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct ReduceArgs {
    /// Graph JSON file: `{"vertices": [...], "edges": [[a, b], ...]}`.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    colors: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    sizes: Vec<u32>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, env = "ETOPO_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a subcommand, tagged with its exit code.
enum Failure {
    Error(Error),
    Infeasible,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::Json(_)
        | Error::Io(_)
        | Error::InvalidInstance(_)
        | Error::InvalidNetwork(_)
        | Error::InvalidFailure(_)
        | Error::ImpossibleParams(_)
        | Error::LatticeParams(_)
        | Error::TooSmallLattice { .. }
        | Error::Placement(_)
        | Error::UnmappedNode(_)
        | Error::NotFound(_)
        | Error::TooLarge { .. }
        | Error::InvalidLevel(_) => CONFIG_ERROR,
        _ => INTERNAL_ERROR,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    toml::from_str(&read(path)?).map_err(|e| Error::config(path.display().to_string(), e.message().to_string()))
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> Result<(), Error> {
    emit(out, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load_network(args: &NetworkArgs) -> Result<(OverlayNetwork, BaseGraph, AdaptedLinkSet), Error> {
    let network: OverlayNetwork = read_json(&args.network)?;
    network.ensure_valid()?;
    let spec = match &args.placement {
        Some(path) => PlacementSpec::from_records(&read_json::<Vec<PlacementRecord>>(path)?)?,
        None => PlacementSpec::Seeded(args.seed),
    };
    let graph = map_overlay(&network, args.k, args.n, &spec)?;
    let policy = match (&args.thresholds, args.threshold) {
        (Some(path), _) => read_toml::<ThresholdPolicy>(path)?,
        (None, Some(t)) => ThresholdPolicy::uniform(t),
        (None, None) => ThresholdPolicy::default(),
    };
    let options = AdaptOptions {
        pstar_mode: args.pstar_mode,
        noise: None,
    };
    let adapted = adapt_with(&graph, &network, &policy, &options)?;
    Ok((network, graph, adapted))
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut params = match &args.params {
        Some(path) => read_toml::<GeneratorParams>(path)?,
        None => GeneratorParams::new(args.nodes.unwrap_or(0), args.links.unwrap_or(0)),
    };
    if let Some(w) = args.level_weights {
        params.level_weights = w;
    }
    let network = generate_network(&params, args.seed)?;
    emit_json(args.out.as_deref(), &network)?;
    Ok(())
}

#[derive(Serialize)]
struct AdaptReport {
    links: usize,
    adapted: usize,
    #[serde(flatten)]
    set: AdaptedLinkSet,
}

fn adapt(args: AdaptArgs) -> Result<(), Failure> {
    let (network, _, set) = load_network(&args.network)?;
    let report = AdaptReport {
        links: network.link_count(),
        adapted: set.len(),
        set,
    };
    emit_json(args.out.as_deref(), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct RouteReport {
    #[serde(flatten)]
    outcome: RoutingOutcome,
    shortest: Option<usize>,
}

fn route(args: RouteArgs) -> Result<(), Failure> {
    let (_, graph, adapted) = load_network(&args.network)?;
    let (s, t) = (NodeId(args.source), NodeId(args.target));
    let outcome = Router::new(&graph, &adapted).route(s, t)?;
    let oracle = shortest_path_oracle(&graph, &adapted, s, t)?;
    let found = outcome.is_found();
    let report = RouteReport {
        outcome,
        shortest: oracle.is_found().then_some(oracle.diameter),
    };
    emit_json(args.out.as_deref(), &report)?;
    if found {
        Ok(())
    } else {
        Err(Failure::Infeasible)
    }
}

#[derive(Serialize)]
struct AssignReport {
    solver: &'static str,
    feasible: bool,
    zeta: Option<f64>,
    rejected: Vec<DemandId>,
    #[serde(flatten)]
    solution: Option<AssignmentSolution>,
}

fn assign(args: AssignArgs) -> Result<(), Failure> {
    let instance: AssignmentInstance = read_json(&args.instance)?;
    let greedy = |instance: &AssignmentInstance| {
        let out = solve_greedy(instance);
        ("greedy", Some(out.solution), out.rejected)
    };
    let all: Vec<DemandId> = instance.demand_ids().collect();
    let exact = |instance: &AssignmentInstance| {
        solve_exact_with(instance, &ExactConfig::default()).map(|s| match s {
            Some(sol) => ("exact", Some(sol), Vec::new()),
            None => ("exact", None, all.clone()),
        })
    };
    let (solver, solution, rejected) = match args.solver {
        SolverChoice::Greedy => greedy(&instance),
        SolverChoice::Exact => exact(&instance)?,
        SolverChoice::Auto => match exact(&instance) {
            Err(Error::TooLarge { .. }) => greedy(&instance),
            other => other?,
        },
    };
    let zeta = solution.as_ref().map(|s| objective(&instance, s)).transpose()?;
    let feasible = solution.is_some() && rejected.is_empty();
    emit_json(
        args.out.as_deref(),
        &AssignReport {
            solver,
            feasible,
            zeta,
            rejected,
            solution,
        },
    )?;
    if feasible {
        Ok(())
    } else {
        Err(Failure::Infeasible)
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(mode) = args.pstar_mode {
        scenario.pstar_mode = mode;
    }
    let output = run_scenario(&scenario, &RunOptions { timings: args.timings })?;
    for path in output.write(&args.out, args.format)? {
        eprintln!("wrote {}", path.display());
    }
    if output.all_infeasible() {
        Err(Failure::Infeasible)
    } else {
        Ok(())
    }
}

fn reduce(args: ReduceArgs) -> Result<(), Failure> {
    let graph: ConflictGraph = read_json(&args.graph)?;
    let instance = reduction_from_coloring(&graph, args.colors)?;
    emit_json(args.out.as_deref(), &instance)?;
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let points = routing_scaling(&args.sizes, args.trials, args.seed)?;
    let body = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&points)? + "\n",
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in &points {
                w.serialize(p).map_err(Error::from)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv output is utf-8")
        }
    };
    emit(args.out.as_deref(), &body)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; help and version are not
            return if e.use_stderr() {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Adapt(a) => adapt(a),
        Command::Route(a) => route(a),
        Command::Assign(a) => assign(a),
        Command::Run(a) => run(a),
        Command::ReduceColoring(a) => reduce(a),
        Command::BenchRouting(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible) => ExitCode::from(INFEASIBLE),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
