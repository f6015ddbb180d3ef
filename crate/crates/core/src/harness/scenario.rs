use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{GeneratorParams, RandomFailures};
use crate::adaption::{PStarMode, ThresholdPolicy};
use crate::assignment::{Demand, ExactConfig};
use crate::error::{Error, Result};
use crate::lattice::PlacementRecord;
use crate::overlay::{FailureEvent, OverlayNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    /// Exact search when the instance is under the size cap, greedy otherwise.
    #[default]
    Auto,
    Exact,
    Greedy,
}

/// Where a trial's overlay comes from: a network file, or the generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseGraphParams {
    pub k: u32,
    pub n: u32,
    /// Explicit placement; nodes are placed at random from the trial seed
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement_file: Option<PathBuf>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: u32,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub exact: ExactConfig,
    #[serde(default)]
    pub pstar_mode: PStarMode,
    /// Amplitude of additive noise on probability estimates; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_amplitude: Option<f64>,
    pub network: NetworkSection,
    pub base_graph: BaseGraphParams,
    pub thresholds: ThresholdPolicy,
    #[serde(default)]
    pub demands: Vec<Demand>,
    #[serde(default)]
    pub failures: Vec<FailureEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_failures: Option<RandomFailures>,
}

impl Scenario {
    /// Parses a TOML scenario. Relative file paths are resolved against
    /// the scenario's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut scenario = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            scenario.resolve_paths(dir);
        }
        Ok(scenario)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = e
                .span()
                .map(|span| field_at(text, span.start))
                .unwrap_or_else(|| "scenario".into());
            Error::config(field, message)
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("scenario", e.to_string()))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        for path in [&mut self.network.file, &mut self.base_graph.placement_file]
            .into_iter()
            .flatten()
        {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.base_graph.k == 0 || self.base_graph.n < 2 {
            return Err(Error::config("base_graph", "needs k >= 1 and n >= 2"));
        }
        match (&self.network.file, &self.network.generate) {
            (Some(_), None) => {}
            (None, Some(params)) => params.validate("network.generate")?,
            _ => return Err(Error::config("network", "set exactly one of `file` or `generate`")),
        }
        if self.exact.exhaustive_cap > self.exact.bnb_cap {
            return Err(Error::config("exact.exhaustive_cap", "must not exceed exact.bnb_cap"));
        }
        if let Some(a) = self.noise_amplitude {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config("noise_amplitude", "must lie in [0, 1]"));
            }
        }
        if let Some(r) = &self.random_failures {
            r.validate("random_failures")?;
        }
        self.thresholds.validate()?;
        let mut users = BTreeSet::new();
        for (i, d) in self.demands.iter().enumerate() {
            let path = format!("demands.{i}");
            if !users.insert(d.user) {
                return Err(Error::config(
                    format!("{path}.user"),
                    format!("user {} appears twice", d.user),
                ));
            }
            if d.source == d.target {
                return Err(Error::config(path, "source and target coincide"));
            }
            if !(d.rate >= 0.0 && d.rate.is_finite()) {
                return Err(Error::config(format!("{path}.rate"), "must be a nonnegative number"));
            }
            if let Some(p) = &self.network.generate {
                for (name, node) in [("source", d.source), ("target", d.target)] {
                    if node.0 >= p.nodes {
                        return Err(Error::config(
                            format!("{path}.{name}"),
                            format!("{node} is outside the generated network"),
                        ));
                    }
                }
            }
        }
        for (i, f) in self.failures.iter().enumerate() {
            if !(0.0..=1.0).contains(&f.magnitude) {
                return Err(Error::config(format!("failures.{i}.magnitude"), "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Network named by `network.file`, if any.
    pub fn load_network(&self) -> Result<Option<OverlayNetwork>> {
        let Some(path) = &self.network.file else {
            return Ok(None);
        };
        let text =
            fs::read_to_string(path).map_err(|e| Error::config("network.file", format!("{}: {e}", path.display())))?;
        let net: OverlayNetwork = serde_json::from_str(&text)
            .map_err(|e| Error::config("network.file", format!("{}: {e}", path.display())))?;
        net.ensure_valid()
            .map_err(|e| Error::config("network.file", e.to_string()))?;
        for (i, d) in self.demands.iter().enumerate() {
            for (name, node) in [("source", d.source), ("target", d.target)] {
                if !net.contains_node(node) {
                    return Err(Error::config(
                        format!("demands.{i}.{name}"),
                        format!("{node} is not in the network"),
                    ));
                }
            }
        }
        Ok(Some(net))
    }

    pub fn load_placement(&self) -> Result<Option<Vec<PlacementRecord>>> {
        let Some(path) = &self.base_graph.placement_file else {
            return Ok(None);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("base_graph.placement_file", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::config("base_graph.placement_file", format!("{}: {e}", path.display())))
    }
}

/// Dotted key path of the TOML entry enclosing byte `offset`, best effort.
fn field_at(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let mut table = String::new();
    let mut key = None;
    for line in before.lines() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            table = name.trim().to_string();
            key = None;
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            table = name.trim().to_string();
            key = None;
        } else if let Some((k, _)) = line.split_once('=') {
            key = Some(k.trim().to_string());
        }
    }
    // the offending line itself may hold the key
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let current = text[line_start..].lines().next().unwrap_or("");
    if let Some((k, _)) = current.split_once('=') {
        key = Some(k.trim().to_string());
    }
    match (table.is_empty(), key) {
        (true, Some(k)) => k,
        (false, Some(k)) => format!("{table}.{k}"),
        (false, None) => table,
        (true, None) => "scenario".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
seed = 42
trials = 3

[network.generate]
nodes = 12
links = 24
level_weights = [2.0, 1.0]
swap_success = [0.8, 1.0]

[base_graph]
k = 2
n = 8

[thresholds]
default = 0.85

[thresholds.levels]
2 = 0.9

[[demands]]
user = 0
source = 0
target = 5
rate = 1.0

[[failures]]
target = { node = 3 }
kind = "degrade-swap"
magnitude = 0.5
time = 1
"#;

    #[test]
    fn parses_and_round_trips() {
        let s = Scenario::parse(BASIC).unwrap();
        assert_eq!(s.trials, 3);
        assert_eq!(s.thresholds.threshold(2), 0.9);
        assert_eq!(s.failures.len(), 1);
        let again = Scenario::parse(&s.to_toml().unwrap()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = BASIC.replace("trials = 3", "trials = 0");
        match Scenario::parse(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "trials"),
            other => panic!("{other:?}"),
        }
        let bad = BASIC.replace("k = 2", "k = \"two\"");
        match Scenario::parse(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "base_graph.k"),
            other => panic!("{other:?}"),
        }
        let bad = BASIC.replace("target = 5", "target = 50");
        match Scenario::parse(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "demands.0.target"),
            other => panic!("{other:?}"),
        }
        let bad = BASIC.replace("2 = 0.9", "2 = 1.9");
        assert!(matches!(Scenario::parse(&bad), Err(Error::Config { .. })));
        let bad = BASIC.replace("[base_graph]", "[base_graph]\nextra = 1");
        assert!(matches!(Scenario::parse(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn network_source_must_be_unique() {
        let bad = BASIC.replace(
            "[network.generate]",
            "[network]\nfile = \"net.json\"\n[network.generate]",
        );
        match Scenario::parse(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "network"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relative_paths_follow_the_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let text = BASIC.replace(
            "[network.generate]\nnodes = 12\nlinks = 24\nlevel_weights = [2.0, 1.0]\nswap_success = [0.8, 1.0]",
            "[network]\nfile = \"net.json\"",
        );
        let path = dir.path().join("s.toml");
        fs::write(&path, text).unwrap();
        let s = Scenario::load(&path).unwrap();
        assert_eq!(s.network.file.as_deref(), Some(dir.path().join("net.json").as_path()));
        assert!(matches!(s.load_network(), Err(Error::Config { .. })));
    }
}
