//! Loading environments, scenarios and scorers from command-line arguments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Result;

use mrplan_core::scorer::{HttpConfig, HttpScorer, RetryPolicy};
use mrplan_core::world::{load_environment, load_scenario, Environment, Scenario};
use mrplan_core::{MockPolicy, MockScorer, Scorer};

use crate::exit::Coded;

/// `--env` wins; otherwise the scenario's `env` field. Either may be a
/// bundled name or a path, scenario paths being relative to the scenario file.
pub fn resolve_env(flag: Option<&str>, scenario: Option<&Scenario>, scenario_path: Option<&Path>) -> Result<Environment> {
    if let Some(name) = flag {
        return load_env(name, None);
    }
    match scenario.and_then(|s| s.env.as_deref()) {
        Some(name) => load_env(name, scenario_path.and_then(Path::parent)),
        None => Err(Coded::config("no environment: pass --env or set `env` in the scenario").into()),
    }
}

fn load_env(name: &str, base: Option<&Path>) -> Result<Environment> {
    let path = base.map_or_else(|| PathBuf::from(name), |b| b.join(name));
    if path.is_file() {
        return Ok(load_environment(&path).map_err(Coded::from)?);
    }
    Environment::bundled(name).ok_or_else(|| {
        Coded::config(format!("{}: no such environment file or bundled environment", path.display())).into()
    })
}

/// Scenarios from a file or, recursively, a directory, sorted by path.
/// Names must be unique since they name the trace files.
pub fn collect_scenarios(path: &Path) -> Result<Vec<(PathBuf, Scenario)>> {
    let mut files = Vec::new();
    if path.is_dir() {
        walk(path, &mut files)?;
        files.sort();
    } else {
        files.push(path.to_owned());
    }
    let mut names: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let s = load_scenario(&f).map_err(Coded::from)?;
        if let Some(prev) = names.insert(s.name.clone(), f.clone()) {
            return Err(Coded::config(format!(
                "scenario name `{}` used by both {} and {}",
                s.name,
                prev.display(),
                f.display()
            ))
            .into());
        }
        out.push((f, s));
    }
    if out.is_empty() {
        return Err(Coded::config(format!("{}: no scenario files", path.display())).into());
    }
    Ok(out)
}

fn walk(dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Coded::config(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let p = entry?.path();
        if p.is_dir() {
            walk(&p, files)?;
        } else if p.extension().is_some_and(|x| x == "json") {
            files.push(p);
        }
    }
    Ok(())
}

/// Scorer settings shared by every scenario of one invocation.
pub struct ScorerSpec {
    http: Option<HttpConfig>,
    extra: Option<MockPolicy>,
}

impl ScorerSpec {
    pub fn new(
        http: bool,
        endpoint: Option<String>,
        model: Option<String>,
        timeout_s: u64,
        retries: u32,
        seed: Option<u64>,
        mock_script: Option<&Path>,
    ) -> Result<Self> {
        let extra = mock_script
            .map(|p| {
                let text = fs::read_to_string(p).map_err(|e| Coded::config(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<MockPolicy>(&text).map_err(|e| Coded::config(format!("{}: {e}", p.display())))
            })
            .transpose()?;
        let http = if http {
            let endpoint = endpoint.ok_or_else(|| Coded::config("--endpoint is required with --scorer http"))?;
            let mut config = HttpConfig::new(endpoint, model.unwrap_or_default());
            config.timeout = Duration::from_secs(timeout_s);
            config.seed = seed;
            config.retry = RetryPolicy {
                retries,
                ..RetryPolicy::default()
            };
            Some(config)
        } else {
            None
        };
        Ok(Self { http, extra })
    }

    pub fn is_http(&self) -> bool {
        self.http.is_some()
    }

    fn policy(&self, scenario: Option<&Scenario>) -> MockPolicy {
        let mut policy = scenario.and_then(Scenario::mock_policy).unwrap_or_default();
        if let Some(extra) = &self.extra {
            policy.merge(extra.clone());
        }
        policy
    }

    /// Mock latency used for virtual timing.
    pub fn latency_ms(&self, scenario: Option<&Scenario>) -> u64 {
        self.policy(scenario).latency_ms
    }

    pub fn build(&self, scenario: Option<&Scenario>) -> Result<Box<dyn Scorer>> {
        match &self.http {
            Some(config) => Ok(Box::new(HttpScorer::new(config.clone()).map_err(Coded::from)?)),
            None => Ok(Box::new(MockScorer::new(self.policy(scenario)).map_err(Coded::from)?)),
        }
    }
}
