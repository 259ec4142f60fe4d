//! `mrplan`: plan, simulate and score multi-robot tasks from the command line.

mod exit;
mod inputs;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use mrplan_core::allocate::DEFAULT_ALPHA;
use mrplan_core::decode::{build_skill_list, DEFAULT_MAX_LEN};
use mrplan_core::episode::{run_episode, PlanParams, PlanTrace, Task, TimingMode};
use mrplan_core::graph::{generate_dependencies, DEFAULT_MAX_ATTEMPTS};
use mrplan_core::metrics::{summarize, TrialResult};
use mrplan_core::Scorer;

use exit::{code_of, failure_code, Code, Coded};
use inputs::{collect_scenarios, resolve_env, ScorerSpec};

#[derive(Parser)]
#[command(name = "mrplan", version, about = "Multi-robot task planning with dependency graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode an instruction into skills and dependencies; write the graph as DOT.
    Plan(PlanArgs),
    /// Plan and simulate scenarios, writing one trace JSON per scenario.
    Run(RunArgs),
    /// Aggregate a directory of traces into a metrics report.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Mock,
    Http,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Timing {
    /// Scorer calls times the mock latency.
    Virtual,
    /// Measured wall-clock time.
    Wall,
}

#[derive(Args)]
struct ScorerArgs {
    #[arg(long, value_enum, default_value = "mock")]
    scorer: Backend,
    /// Completions endpoint for the http scorer. The bearer token is read
    /// from MRPLAN_API_KEY.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Request timeout in seconds for the http scorer.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Retries for transient http failures.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Extra mock script (JSON), merged over any scenario script.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Sampling seed forwarded to the http backend; the mock ignores it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlanningArgs {
    /// Environment file or bundled name (A, B, C).
    #[arg(long)]
    env: Option<String>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_graph_attempts: usize,
    /// Robot grasp condition from the environment file.
    #[arg(long, default_value_t = 1)]
    condition: u32,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    planning: PlanningArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Scenario file supplying the instruction and mock script.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, required_unless_present = "scenario")]
    instruction: Option<String>,
    /// Where to write the DOT graph.
    #[arg(long, default_value = "graph.dot")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    planning: PlanningArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Scenario file, or a directory searched recursively for `*.json`.
    #[arg(long)]
    scenario: PathBuf,
    /// Planning time measure; defaults to virtual for mock, wall for http.
    #[arg(long, value_enum)]
    timing: Option<Timing>,
    /// Output directory for traces.
    #[arg(long, default_value = "traces")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of trace files.
    traces: PathBuf,
    /// Report path; defaults to `report.json` inside the trace directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            code_of(&e).into()
        }
    }
}

fn params(p: &PlanningArgs, timing: TimingMode) -> Result<PlanParams> {
    if !(0.0..=1.0).contains(&p.alpha) {
        return Err(Coded::config(format!("--alpha must be in [0, 1], got {}", p.alpha)).into());
    }
    if p.max_graph_attempts == 0 {
        return Err(Coded::config("--max-graph-attempts must be at least 1").into());
    }
    Ok(PlanParams {
        alpha: p.alpha,
        max_len: p.max_len,
        max_graph_attempts: p.max_graph_attempts,
        timing,
        ..PlanParams::default()
    })
}

fn spec(a: &ScorerArgs) -> Result<ScorerSpec> {
    ScorerSpec::new(
        a.scorer == Backend::Http,
        a.endpoint.clone(),
        a.model.clone(),
        a.timeout,
        a.retries,
        a.seed,
        a.mock_script.as_deref(),
    )
}

/// Writes via a sibling temp file and rename, so readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    std::io::Write::write_all(&mut tmp, contents.as_bytes())?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_plan(a: &PlanArgs) -> Result<ExitCode> {
    let scenario = a
        .scenario
        .as_deref()
        .map(|p| mrplan_core::world::load_scenario(p).map_err(Coded::from))
        .transpose()?;
    let env = resolve_env(a.planning.env.as_deref(), scenario.as_ref(), a.scenario.as_deref())?;
    let instruction = match (&a.instruction, &scenario) {
        (Some(i), _) => i.clone(),
        (None, Some(s)) => s.instruction.clone(),
        (None, None) => return Err(Coded::config("--instruction or --scenario is required").into()),
    };
    let params = params(&a.planning, TimingMode::Wall)?;
    let world = env.world_for(a.planning.condition).map_err(Coded::from)?;
    let skills = env.skill_set(&world).map_err(Coded::from)?;
    let scorer = spec(&a.scorer)?.build(scenario.as_ref())?;

    let list = build_skill_list(
        &instruction,
        &skills,
        &scorer,
        &env.prompts.skill_sections(),
        params.max_len,
    )
    .map_err(Coded::from)?;
    let generated = generate_dependencies(&list, &scorer, &env.prompts.dependency_sections(), params.max_graph_attempts)
        .map_err(Coded::from)?;

    println!("skills:");
    for (i, s) in list.items.iter().enumerate() {
        println!("  {i}: {s}");
    }
    println!("dependencies ({} attempt(s)):", generated.attempts);
    let edges = generated.graph.edges();
    if edges.is_empty() {
        println!("  none");
    }
    for (i, j) in edges {
        println!("  {i} -> {j}");
    }
    write_atomic(&a.out, &generated.graph.to_dot())?;
    info!("wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(a: &RunArgs) -> Result<ExitCode> {
    let scenarios = collect_scenarios(&a.scenario)?;
    let spec = spec(&a.scorer)?;
    let timing = a.timing.unwrap_or(if spec.is_http() { Timing::Wall } else { Timing::Virtual });

    let mut tasks = Vec::with_capacity(scenarios.len());
    for (path, s) in &scenarios {
        let env = resolve_env(a.planning.env.as_deref(), Some(s), Some(path))?;
        let task = Task::from_scenario(&env, s, a.planning.condition).map_err(Coded::from)?;
        let scorer = spec.build(Some(s))?;
        let mode = match timing {
            Timing::Wall => TimingMode::Wall,
            Timing::Virtual => TimingMode::Virtual {
                latency_ms: spec.latency_ms(Some(s)),
            },
        };
        tasks.push((task, scorer, params(&a.planning, mode)?));
    }

    let traces: Vec<PlanTrace> = tasks
        .par_iter()
        .map(|(task, scorer, params)| run_episode(task, scorer as &dyn Scorer, params).trace)
        .collect();
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    traces
        .par_iter()
        .try_for_each(|t| write_atomic(&a.out.join(format!("{}.json", t.scenario)), &t.to_json()))?;

    let mut code = Code::Other;
    let mut failed = false;
    for t in &traces {
        match t.outcome.failure_reason() {
            None => println!("{}: success in {} round(s), optimum {}", t.scenario, t.step_count, t.min_steps),
            Some(r) => {
                println!("{}: failed ({}) after {} round(s)", t.scenario, reason_name(r), t.step_count);
                if !failed {
                    code = failure_code(r);
                    failed = true;
                }
            }
        }
    }
    Ok(if failed { code.into() } else { ExitCode::SUCCESS })
}

fn reason_name(r: mrplan_core::episode::FailureReason) -> String {
    serde_json::to_value(r)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn cmd_eval(a: &EvalArgs) -> Result<ExitCode> {
    let entries = fs::read_dir(&a.traces)
        .map_err(|e| Coded::config(format!("{}: {e}", a.traces.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "report.json"))
        .collect();
    paths.sort();

    let mut trials = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let trace: PlanTrace = serde_json::from_str(&text)
            .map_err(|e| Coded::new(Code::Config, "InvalidTrace", format!("{}: {e}", p.display())))?;
        trials.push(TrialResult::from_trace(&trace).map_err(Coded::from)?);
    }
    let report = summarize(&trials).map_err(Coded::from)?;
    print!("{}", report.to_text());
    let out = a.out.clone().unwrap_or_else(|| a.traces.join("report.json"));
    write_atomic(&out, &report.to_json())?;
    Ok(ExitCode::SUCCESS)
}
