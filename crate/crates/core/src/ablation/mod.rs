//! Seeded comparison of the full planner against its degraded policies on
//! synthetic task suites run by the simulator.

mod planner;
mod stats;

pub use planner::SimulatedPlanner;
pub use stats::{two_proportion_test, wilson_interval, ProportionTest};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::{AgentBundle, DigestAnnotator, IdentityPreprocessor, QualityEvaluator};
use crate::backend::{Backend, SimProfile, Simulator, WorkflowProfile};
use crate::graph::{InputValue, WorkflowGraph, WorkflowNode};
use crate::plan::{run_task, EngineError, PlanConfig, Policy, TaskSpec, TaskStatus};
use crate::swi::{AtomicWorkflow, Library, LibraryError, ParamKind, ParamSpec, SwiDescriptor, TaskKind};
use crate::util::mix_seed;

pub const MIN_REPETITIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub name: String,
    /// Workflows that must run in this order.
    pub required: Vec<String>,
    pub step_success: Vec<f64>,
    /// Plausible but wrong choices; their outputs are always rejected.
    #[serde(default)]
    pub distractors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskSuite {
    pub seed: u64,
    pub tasks: Vec<SyntheticTask>,
    /// Engine bounds; intermediate evaluation is always switched on.
    #[serde(default)]
    pub config: Option<PlanConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum AblationError {
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("at least {MIN_REPETITIONS} repetitions are required, got {0}")]
    TooFewRepetitions(usize),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("repetition {rep} under {policy}: {source}")]
    Engine {
        rep: usize,
        policy: Policy,
        source: EngineError,
    },
    #[error("cannot create scratch directory: {0}")]
    Io(#[from] std::io::Error),
}

impl SyntheticTaskSuite {
    /// `tasks` tasks of `steps` steps, each step succeeding with probability
    /// `success`, each task with `distractors` wrong alternatives.
    pub fn uniform(tasks: usize, steps: usize, success: f64, distractors: usize, seed: u64) -> Self {
        SyntheticTaskSuite {
            seed,
            tasks: (0..tasks)
                .map(|t| SyntheticTask {
                    name: format!("task-{t}"),
                    required: (0..steps).map(|i| format!("t{t}-step-{i}")).collect(),
                    step_success: vec![success; steps],
                    distractors: (0..distractors).map(|j| format!("t{t}-alt-{j}")).collect(),
                })
                .collect(),
            config: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, AblationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AblationError::InvalidSuite(format!("{}: {e}", path.display())))?;
        let suite: SyntheticTaskSuite = serde_yaml::from_str(&text)
            .map_err(|e| AblationError::InvalidSuite(format!("{}: {e}", path.display())))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<(), AblationError> {
        let bad = |m: String| Err(AblationError::InvalidSuite(m));
        if self.tasks.is_empty() {
            return bad("suite has no tasks".into());
        }
        for t in &self.tasks {
            if t.required.is_empty() {
                return bad(format!("{}: no required steps", t.name));
            }
            if t.required.len() != t.step_success.len() {
                return bad(format!("{}: one success probability per required step", t.name));
            }
            if let Some(p) = t.step_success.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return bad(format!("{}: probability {p} outside [0,1]", t.name));
            }
            let mut seen = BTreeSet::new();
            if let Some(dup) = t.required.iter().chain(&t.distractors).find(|n| !seen.insert(*n)) {
                return bad(format!("{}: workflow {dup} listed twice", t.name));
            }
        }
        if let Some(c) = &self.config {
            c.validate().map_err(AblationError::InvalidSuite)?;
        }
        self.roles().map(|_| ())
    }

    /// Workflow name to whether it consumes the previous image.
    fn roles(&self) -> Result<BTreeMap<String, bool>, AblationError> {
        let mut roles: BTreeMap<String, bool> = BTreeMap::new();
        for t in &self.tasks {
            let entries = t
                .required
                .iter()
                .enumerate()
                .map(|(i, n)| (n, i > 0))
                .chain(t.distractors.iter().map(|n| (n, false)));
            for (name, needs_image) in entries {
                if let Some(prev) = roles.insert(name.clone(), needs_image) {
                    if prev != needs_image {
                        return Err(AblationError::InvalidSuite(format!(
                            "workflow {name} is used both as a first step and as a later step"
                        )));
                    }
                }
            }
        }
        Ok(roles)
    }

    /// Library holding every workflow the suite mentions.
    pub fn library(&self) -> Result<Library, AblationError> {
        let workflows = self
            .roles()?
            .into_iter()
            .map(|(name, needs_image)| synthetic_workflow(&name, needs_image))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Library::from_workflows(workflows)?)
    }
}

fn synthetic_workflow(name: &str, needs_image: bool) -> Result<AtomicWorkflow, LibraryError> {
    let ph = |k: &str| InputValue::Placeholder(k.to_string());
    let lit = |v: Value| InputValue::Literal(v);
    let link = InputValue::link;
    let mut nodes = vec![
        WorkflowNode::new("1", "CheckpointLoaderSimple").with_input("ckpt_name", lit("synthetic.safetensors".into())),
        WorkflowNode::new("2", "CLIPTextEncode")
            .with_input("text", ph("prompt"))
            .with_input("clip", link("1", 1)),
    ];
    let (latent, denoise) = if needs_image {
        nodes.push(WorkflowNode::new("3", "LoadImage").with_input("image", ph("image")));
        nodes.push(
            WorkflowNode::new("4", "VAEEncode")
                .with_input("pixels", link("3", 0))
                .with_input("vae", link("1", 2)),
        );
        ("4", 0.5)
    } else {
        nodes.push(
            WorkflowNode::new("4", "EmptyLatentImage")
                .with_input("width", lit(512.into()))
                .with_input("height", lit(512.into()))
                .with_input("batch_size", lit(1.into())),
        );
        ("4", 1.0)
    };
    nodes.push(
        WorkflowNode::new("5", "KSampler")
            .with_input("model", link("1", 0))
            .with_input("positive", link("2", 0))
            .with_input("negative", link("2", 0))
            .with_input("latent_image", link(latent, 0))
            .with_input("seed", lit(0.into()))
            .with_input("steps", lit(20.into()))
            .with_input("cfg", lit(7.0.into()))
            .with_input("sampler_name", lit("euler".into()))
            .with_input("scheduler", lit("normal".into()))
            .with_input("denoise", lit(denoise.into())),
    );
    nodes.push(
        WorkflowNode::new("6", "VAEDecode")
            .with_input("samples", link("5", 0))
            .with_input("vae", link("1", 2)),
    );
    nodes.push(
        WorkflowNode::new("7", "SaveImage")
            .with_input("images", link("6", 0))
            .with_input("filename_prefix", lit(name.into())),
    );
    let template = WorkflowGraph::from_nodes(nodes).map_err(|e| LibraryError::InvalidTemplate {
        descriptor: name.to_string(),
        detail: e.to_string(),
    })?;
    let mut params = vec![ParamSpec {
        key: "prompt".into(),
        kind: ParamKind::PromptText,
        required: true,
        default: None,
    }];
    if needs_image {
        params.push(ParamSpec {
            key: "image".into(),
            kind: ParamKind::ImagePath,
            required: true,
            default: None,
        });
    }
    let descriptor = SwiDescriptor {
        name: name.to_string(),
        description: format!("synthetic {} step {name}", if needs_image { "refinement" } else { "generation" }),
        task_kind: if needs_image {
            TaskKind::ImageToImage
        } else {
            TaskKind::TextToImage
        },
        params,
        constraints: Vec::new(),
        template: None,
    };
    AtomicWorkflow::new(descriptor, template)
}

/// Simulator behaviour shared by every task of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationProfiles {
    pub required_quality: (f64, f64),
    pub distractor_success: f64,
    pub distractor_quality: (f64, f64),
    /// Planner prior on choosing the required workflow over a distractor.
    pub required_weight: f64,
}

impl Default for AblationProfiles {
    fn default() -> Self {
        AblationProfiles {
            required_quality: (0.85, 0.05),
            distractor_success: 0.7,
            distractor_quality: (0.3, 0.05),
            required_weight: 0.5,
        }
    }
}

impl AblationProfiles {
    pub fn sim_profile(&self, task: &SyntheticTask, seed: u64) -> SimProfile {
        let mut profile = SimProfile::uniform(seed, WorkflowProfile::default());
        for (name, p) in task.required.iter().zip(&task.step_success) {
            let (m, sd) = self.required_quality;
            profile = profile.with_workflow(name.clone(), WorkflowProfile::new(*p, m, sd));
        }
        for name in &task.distractors {
            let (m, sd) = self.distractor_quality;
            profile = profile.with_workflow(name.clone(), WorkflowProfile::new(self.distractor_success, m, sd));
        }
        profile
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub policy: Policy,
    pub status: TaskStatus,
    pub expansions: usize,
    pub structural_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub resolve_rate: f64,
    pub pass_rate: f64,
    pub mean_expansions: f64,
    pub ci95: (f64, f64),
    pub runs: usize,
    pub resolved: usize,
    pub structural_failures: usize,
}

impl PolicyStats {
    fn from_outcomes<'a>(outcomes: impl Iterator<Item = &'a RepOutcome>) -> Self {
        let (mut runs, mut resolved, mut passed, mut expansions, mut structural) = (0, 0, 0, 0, 0);
        for o in outcomes {
            runs += 1;
            resolved += usize::from(o.status == TaskStatus::Resolved);
            passed += usize::from(o.structural_failures == 0);
            expansions += o.expansions;
            structural += o.structural_failures;
        }
        let n = runs.max(1) as f64;
        PolicyStats {
            resolve_rate: resolved as f64 / n,
            pass_rate: passed as f64 / n,
            mean_expansions: expansions as f64 / n,
            ci95: wilson_interval(resolved, runs, 1.96),
            runs,
            resolved,
            structural_failures: structural,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub repetitions: usize,
    pub policies: BTreeMap<Policy, PolicyStats>,
    pub outcomes: Vec<RepOutcome>,
}

impl AblationReport {
    /// `{policy: {resolve_rate, pass_rate, mean_expansions, ci95}}`.
    pub fn to_json(&self) -> Value {
        let mut out = serde_json::Map::new();
        for (policy, s) in &self.policies {
            out.insert(
                policy.as_str().to_string(),
                json!({
                    "resolve_rate": s.resolve_rate,
                    "pass_rate": s.pass_rate,
                    "mean_expansions": s.mean_expansions,
                    "ci95": [s.ci95.0, s.ci95.1],
                }),
            );
        }
        Value::Object(out)
    }

    /// One-sided test that `a` resolves more often than `b`.
    pub fn compare(&self, a: Policy, b: Policy) -> Option<ProportionTest> {
        let (sa, sb) = (self.policies.get(&a)?, self.policies.get(&b)?);
        Some(two_proportion_test(sa.resolved, sa.runs, sb.resolved, sb.runs))
    }
}

/// Runs `repetitions` seeded tasks per policy on fresh simulators.
pub fn run_ablation(
    suite: &SyntheticTaskSuite,
    profiles: &AblationProfiles,
    policies: &[Policy],
    repetitions: usize,
) -> Result<AblationReport, AblationError> {
    run_ablation_with(suite, profiles, policies, repetitions, |p| Box::new(Simulator::new(p)))
}

/// [`run_ablation`] with a caller-supplied backend per repetition.
pub fn run_ablation_with<F>(
    suite: &SyntheticTaskSuite,
    profiles: &AblationProfiles,
    policies: &[Policy],
    repetitions: usize,
    make_backend: F,
) -> Result<AblationReport, AblationError>
where
    F: Fn(SimProfile) -> Box<dyn Backend> + Sync,
{
    if repetitions < MIN_REPETITIONS {
        return Err(AblationError::TooFewRepetitions(repetitions));
    }
    suite.validate()?;
    let library = suite.library()?;
    let roles = suite.roles()?;
    let needs_image: BTreeSet<String> = roles.into_iter().filter(|(_, v)| *v).map(|(k, _)| k).collect();
    let base = PlanConfig {
        evaluate_intermediate: true,
        ..suite.config.clone().unwrap_or_default()
    };
    let scratch = tempfile::tempdir()?;

    let jobs: Vec<(Policy, usize)> = policies
        .iter()
        .flat_map(|p| (0..repetitions).map(move |r| (*p, r)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(policy, rep)| {
            let task = &suite.tasks[rep % suite.tasks.len()];
            let rep_seed = mix_seed(&[&suite.seed.to_le_bytes(), &(rep as u64).to_le_bytes()]);
            let backend = make_backend(profiles.sim_profile(task, rep_seed));
            let planner = SimulatedPlanner::new(
                task.required.clone(),
                task.distractors.clone(),
                needs_image.clone(),
                profiles.required_weight,
                rep_seed,
            );
            let agents = AgentBundle::new(
                Arc::new(planner),
                Arc::new(DigestAnnotator),
                Arc::new(QualityEvaluator),
                Arc::new(IdentityPreprocessor),
            );
            let config = PlanConfig { policy, ..base.clone() };
            let run_dir = scratch.path().join(format!("{policy}-{rep}"));
            let spec = TaskSpec::new(format!("synthetic task {}", task.name));
            let result = run_task(&spec, &library, &agents, backend.as_ref(), &config, &run_dir)
                .map_err(|source| AblationError::Engine { rep, policy, source })?;
            let _ = std::fs::remove_dir_all(&run_dir);
            Ok(RepOutcome {
                rep,
                policy,
                status: result.status,
                expansions: result.expansions,
                structural_failures: result.structural_failures,
            })
        })
        .collect::<Result<Vec<_>, AblationError>>()?;

    let policies = policies
        .iter()
        .map(|p| (*p, PolicyStats::from_outcomes(outcomes.iter().filter(|o| o.policy == *p))))
        .collect();
    Ok(AblationReport {
        seed: suite.seed,
        repetitions,
        policies,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_steps_resolve_everywhere() {
        let suite = SyntheticTaskSuite::uniform(2, 3, 1.0, 0, 11);
        let r = run_ablation(&suite, &AblationProfiles::default(), &Policy::ALL, 100).unwrap();
        for s in r.policies.values() {
            assert_eq!(s.resolve_rate, 1.0);
            assert_eq!(s.pass_rate, 1.0);
            assert_eq!(s.mean_expansions, 3.0);
        }
    }

    #[test]
    fn rejects_small_runs_and_bad_suites() {
        let suite = SyntheticTaskSuite::uniform(1, 2, 0.5, 1, 1);
        assert!(matches!(
            run_ablation(&suite, &AblationProfiles::default(), &Policy::ALL, 10),
            Err(AblationError::TooFewRepetitions(10))
        ));
        let mut bad = suite.clone();
        bad.tasks[0].step_success.pop();
        assert!(bad.validate().is_err());
        let mut clash = suite.clone();
        clash.tasks[0].distractors = vec![clash.tasks[0].required[1].clone()];
        assert!(clash.validate().is_err());
    }

    #[test]
    fn synthetic_library_is_schema_valid() {
        let lib = SyntheticTaskSuite::uniform(1, 3, 0.7, 2, 1).library().unwrap();
        assert_eq!(lib.len(), 5);
        assert_eq!(lib.get("t0-step-1").unwrap().descriptor.params.len(), 2);
        assert_eq!(lib.get("t0-alt-0").unwrap().descriptor.params.len(), 1);
    }
}
