mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use atelier_core::ablation::{run_ablation, AblationProfiles, SyntheticTaskSuite};
use atelier_core::agents::{
    AgentBundle, ChatAnnotator, ChatClient, ChatConfig, ChatEvaluator, ChatPlanner, ChatPreprocessor, MockScenario,
    PromptSet, Threshold,
};
use atelier_core::backend::stub::{Scenario, StubScript, StubServer};
use atelier_core::backend::{Backend, RemoteBackend, SimProfile, Simulator, WorkflowProfile};
use atelier_core::graph::{parse_workflow, validate_dag};
use atelier_core::plan::{run_task, EngineError, PlanConfig, Policy, TaskSpec, TaskStatus};
use atelier_core::swi::Library;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{AdapterChoice, BackendChoice, Settings};

const DEFAULT_LIBRARY: &str = "library.txt";
const DEFAULT_OUT: &str = "atelier-out";

#[derive(Parser)]
#[command(name = "atelier", version, about = "Plan and run tasks over a library of workflow templates")]
struct Cli {
    /// Settings file (default: ./atelier.toml when present)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan and execute one task
    Run(Box<RunArgs>),
    /// Check a workflow JSON file for cycles, dangling links and placeholders
    Validate {
        file: PathBuf,
        /// Also report unfilled placeholders
        #[arg(long)]
        concrete: bool,
    },
    /// Print the library, one workflow per line
    List {
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Compare planner policies on a synthetic suite
    Ablate(AblateArgs),
    /// Serve the scripted protocol stub
    StubServer {
        #[arg(long, default_value_t = 8188)]
        port: u16,
        #[arg(long)]
        script: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: String,
    /// Input files registered in the workspace before planning
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    library: Option<PathBuf>,
    /// sim, an http(s) URL, or remote:<url>
    #[arg(long)]
    backend: Option<String>,
    /// mock:<scenario file> or remote
    #[arg(long)]
    adapters: Option<String>,
    #[arg(long)]
    sim_profile: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    max_children: Option<usize>,
    #[arg(long)]
    max_expansions: Option<usize>,
    /// strict, normal or lenient
    #[arg(long)]
    threshold: Option<String>,
    /// Seconds
    #[arg(long)]
    job_timeout: Option<f64>,
    #[arg(long)]
    evaluate_intermediate: bool,
    /// Print a JSON summary instead of artifact paths
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Overrides the suite seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = Policy::ALL.map(|p| p.to_string()))]
    policies: Vec<String>,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(cli.config.as_deref(), *args),
        Command::Validate { file, concrete } => cmd_validate(&file, concrete),
        Command::List { library } => cmd_list(cli.config.as_deref(), library),
        Command::Ablate(args) => cmd_ablate(args),
        Command::StubServer { port, script } => cmd_stub_server(port, script.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_settings(config: Option<&Path>, flags: Settings) -> Result<Settings, Failure> {
    let file = match config {
        Some(p) => Settings::from_file(p).map_err(config_error)?,
        None if Path::new("atelier.toml").is_file() => {
            Settings::from_file(Path::new("atelier.toml")).map_err(config_error)?
        }
        None => Settings::default(),
    };
    let env = Settings::from_env(|k| std::env::var(k).ok()).map_err(config_error)?;
    Ok(file.overlay(env).overlay(flags))
}

fn load_library(path: Option<&Path>) -> Result<Library, Failure> {
    let path = path.unwrap_or(Path::new(DEFAULT_LIBRARY));
    Library::load_file(path).map_err(|e| config_error(format!("cannot load library {}: {e}", path.display())))
}

fn plan_config(s: &Settings) -> Result<PlanConfig, Failure> {
    let mut c = PlanConfig::default();
    if let Some(v) = s.max_depth {
        c.max_depth = v;
    }
    if let Some(v) = s.max_children {
        c.max_children_per_node = v;
    }
    if let Some(v) = s.max_expansions {
        c.max_total_expansions = v;
    }
    if let Some(t) = &s.threshold {
        c.evaluation_threshold = t.parse::<Threshold>().map_err(config_error)?;
    }
    if let Some(secs) = s.job_timeout {
        c.job_timeout = Duration::try_from_secs_f64(secs)
            .map_err(|_| config_error(format!("job timeout {secs} is not a valid duration")))?;
    }
    if let Some(v) = s.evaluate_intermediate {
        c.evaluate_intermediate = v;
    }
    c.validate().map_err(config_error)?;
    Ok(c)
}

fn make_backend(s: &Settings) -> Result<Box<dyn Backend>, Failure> {
    match BackendChoice::parse(s.backend.as_deref().unwrap_or("sim")).map_err(config_error)? {
        BackendChoice::Sim => {
            let mut profile = match &s.sim_profile {
                Some(p) => SimProfile::load(p).map_err(config_error)?,
                None => SimProfile::uniform(0, WorkflowProfile::default()),
            };
            if let Some(seed) = s.seed {
                profile.seed = seed;
            }
            Ok(Box::new(Simulator::new(profile)))
        }
        BackendChoice::Remote(url) => Ok(Box::new(RemoteBackend::new(&url))),
    }
}

fn make_agents(s: &Settings) -> Result<AgentBundle, Failure> {
    let choice = s
        .adapters
        .as_deref()
        .ok_or_else(|| config_error("no adapters selected (use --adapters mock:<file> or remote)"))?;
    match AdapterChoice::parse(choice).map_err(config_error)? {
        AdapterChoice::Mock(path) => Ok(MockScenario::load(&path).map_err(|e| config_error(e.to_string()))?.bundle()),
        AdapterChoice::Remote => {
            let cfg = ChatConfig::from_env().map_err(config_error)?;
            let prompts = match &s.prompts {
                Some(dir) => PromptSet::load_dir(dir)
                    .map_err(|e| config_error(format!("cannot read prompts from {}: {e}", dir.display())))?,
                None => PromptSet::default(),
            };
            let client = || ChatClient::new(cfg.clone());
            Ok(AgentBundle::new(
                std::sync::Arc::new(ChatPlanner::new(client(), prompts.clone())),
                std::sync::Arc::new(ChatAnnotator::new(client(), prompts.clone())),
                std::sync::Arc::new(ChatEvaluator::new(client(), prompts.clone())),
                std::sync::Arc::new(ChatPreprocessor::new(client(), prompts)),
            ))
        }
    }
}

fn next_run_dir(out: &Path) -> PathBuf {
    let runs = out.join("runs");
    (1..)
        .map(|n| runs.join(format!("run-{n:04}")))
        .find(|p| !p.exists())
        .expect("some run number is free")
}

fn cmd_run(config: Option<&Path>, a: RunArgs) -> Result<u8, Failure> {
    let flags = Settings {
        library: a.library,
        backend: a.backend,
        adapters: a.adapters,
        sim_profile: a.sim_profile,
        prompts: a.prompts,
        out: a.out,
        seed: a.seed,
        max_depth: a.max_depth,
        max_children: a.max_children,
        max_expansions: a.max_expansions,
        threshold: a.threshold,
        job_timeout: a.job_timeout,
        evaluate_intermediate: a.evaluate_intermediate.then_some(true),
    };
    let s = load_settings(config, flags)?;
    let library = load_library(s.library.as_deref())?;
    let plan = plan_config(&s)?;
    let backend = make_backend(&s)?;
    let agents = make_agents(&s)?;
    let run_dir = next_run_dir(s.out.as_deref().unwrap_or(Path::new(DEFAULT_OUT)));

    let task = TaskSpec::new(a.task).with_inputs(a.inputs);
    let result = run_task(&task, &library, &agents, backend.as_ref(), &plan, &run_dir).map_err(|e| match e {
        EngineError::BackendUnreachable(_) => Failure {
            code: 3,
            message: e.to_string(),
        },
        other => config_error(other.to_string()),
    })?;

    if a.json {
        let summary = json!({
            "status": result.status.as_str(),
            "artifacts": result.final_artifacts,
            "expansions": result.expansions,
            "duration_ms": result.duration.as_millis() as u64,
        });
        println!("{summary}");
    } else {
        for p in &result.final_artifacts {
            println!("{}", p.display());
        }
    }
    eprintln!(
        "status: {} after {} expansion(s), {} planner call(s)",
        result.status, result.expansions, result.planner_calls
    );
    eprintln!("trace: {}", result.trace_path.display());
    eprintln!("workspace: {}", result.workspace_path.display());
    Ok(if result.status == TaskStatus::Resolved { 0 } else { 1 })
}

fn cmd_validate(file: &Path, concrete: bool) -> Result<u8, Failure> {
    let bytes = std::fs::read(file).map_err(|e| config_error(format!("{}: {e}", file.display())))?;
    let graph = match parse_workflow(&bytes) {
        Ok(g) => g,
        Err(e) => {
            println!("FINDING parse-error {}", file.display());
            eprintln!("{}: {e}", file.display());
            return Ok(1);
        }
    };
    let report = validate_dag(&graph, concrete);
    for f in &report.findings {
        println!("{f}");
        eprintln!("  {}", f.detail);
    }
    if report.is_clean() {
        eprintln!("{}: {} nodes, {} links, ok", file.display(), graph.len(), graph.edges().len());
        Ok(0)
    } else {
        Ok(1)
    }
}

fn cmd_list(config: Option<&Path>, library: Option<PathBuf>) -> Result<u8, Failure> {
    let s = load_settings(
        config,
        Settings {
            library,
            ..Default::default()
        },
    )?;
    let lib = load_library(s.library.as_deref())?;
    for wf in lib.iter() {
        let d = &wf.descriptor;
        let short: String = d.description.chars().take(60).collect();
        println!("{}\t{}\t{}", d.name, d.task_kind.as_str(), short);
    }
    Ok(0)
}

fn cmd_ablate(a: AblateArgs) -> Result<u8, Failure> {
    let mut suite = SyntheticTaskSuite::load(&a.suite).map_err(|e| config_error(e.to_string()))?;
    if let Some(seed) = a.seed {
        suite.seed = seed;
    }
    let policies = a
        .policies
        .iter()
        .map(|p| p.parse::<Policy>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_error)?;
    let report =
        run_ablation(&suite, &AblationProfiles::default(), &policies, a.reps).map_err(|e| config_error(e.to_string()))?;
    for (policy, s) in &report.policies {
        println!(
            "{policy}\tresolve {:.3} [{:.3}, {:.3}]\tpass {:.3}\tmean expansions {:.2}",
            s.resolve_rate, s.ci95.0, s.ci95.1, s.pass_rate, s.mean_expansions
        );
    }
    if report.policies.contains_key(&Policy::Full) {
        for other in policies.iter().filter(|p| **p != Policy::Full) {
            if let Some(t) = report.compare(Policy::Full, *other) {
                println!("full > {other}\tz {:.3}\tp {:.2e}", t.z, t.p_greater);
            }
        }
    }
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
        std::fs::write(out, text + "\n").map_err(|e| config_error(format!("{}: {e}", out.display())))?;
        eprintln!("report: {}", out.display());
    }
    Ok(0)
}

fn cmd_stub_server(port: u16, script: Option<&Path>) -> Result<u8, Failure> {
    let script = match script {
        Some(p) => StubScript::load(p).map_err(config_error)?,
        None => StubScript::single(Scenario::Complete),
    };
    let server = StubServer::start(script, ([127, 0, 0, 1], port).into())
        .map_err(|e| config_error(format!("cannot listen on port {port}: {e}")))?;
    println!("{}", server.url());
    server.wait();
    Ok(0)
}
