//! Seeded stand-in for a generation server.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{artifact_extension, Backend, ExecContext, ExecutionOutcome, ProducedArtifact};
use crate::graph::{topological_order, validate_dag, InputValue, WorkflowGraph};
use crate::util::{mix_seed, next_free_name};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowProfile {
    pub success_prob: f64,
    pub quality_mean: f64,
    pub quality_sd: f64,
    /// Inclusive range, milliseconds.
    pub latency_ms: (u64, u64),
}

impl Default for WorkflowProfile {
    fn default() -> Self {
        WorkflowProfile {
            success_prob: 1.0,
            quality_mean: 0.9,
            quality_sd: 0.02,
            latency_ms: (50, 200),
        }
    }
}

impl WorkflowProfile {
    pub fn new(success_prob: f64, quality_mean: f64, quality_sd: f64) -> Self {
        WorkflowProfile {
            success_prob,
            quality_mean,
            quality_sd,
            ..Default::default()
        }
    }

    fn check(&self, name: &str) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.success_prob) {
            return Err(format!("{name}: success_prob {} outside [0,1]", self.success_prob));
        }
        if !(0.0..=1.0).contains(&self.quality_mean) {
            return Err(format!("{name}: quality_mean {} outside [0,1]", self.quality_mean));
        }
        if !(self.quality_sd >= 0.0 && self.quality_sd.is_finite()) {
            return Err(format!("{name}: quality_sd must be finite and non-negative"));
        }
        if self.latency_ms.0 > self.latency_ms.1 {
            return Err(format!("{name}: latency range is reversed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimProfile {
    pub seed: u64,
    pub default: WorkflowProfile,
    pub workflows: BTreeMap<String, WorkflowProfile>,
    /// Sleep for the drawn latency instead of only reporting it.
    pub real_time: bool,
}

impl SimProfile {
    pub fn uniform(seed: u64, profile: WorkflowProfile) -> Self {
        SimProfile {
            seed,
            default: profile,
            ..Default::default()
        }
    }

    pub fn with_workflow(mut self, name: impl Into<String>, profile: WorkflowProfile) -> Self {
        self.workflows.insert(name.into(), profile);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        self.default.check("default")?;
        self.workflows.iter().try_for_each(|(n, p)| p.check(n))
    }

    /// Reads a YAML or JSON profile file.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let profile: SimProfile = serde_yaml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        profile.validate()?;
        Ok(profile)
    }
}

/// What a simulated artifact file contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPayload {
    pub atelier_sim: u32,
    pub workflow: String,
    pub seed: u64,
    pub draw: u64,
    pub quality: f64,
    pub node: String,
}

pub fn read_sim_payload(path: &Path) -> Option<SimPayload> {
    let bytes = std::fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// Save/preview nodes and video combiners write files.
pub fn is_output_node(class_type: &str) -> bool {
    class_type.starts_with("Save") || class_type.starts_with("Preview") || class_type == "VHS_VideoCombine"
}

#[derive(Debug)]
pub struct Simulator {
    profile: SimProfile,
    draws: AtomicU64,
}

impl Simulator {
    pub fn new(profile: SimProfile) -> Self {
        Simulator {
            profile,
            draws: AtomicU64::new(0),
        }
    }

    pub fn profile(&self) -> &SimProfile {
        &self.profile
    }

    pub fn draws(&self) -> u64 {
        self.draws.load(Ordering::SeqCst)
    }

    pub fn simulate(&self, graph: &WorkflowGraph, ctx: ExecContext<'_>) -> ExecutionOutcome {
        let report = validate_dag(graph, true);
        assert!(report.is_clean(), "simulator requires a concrete DAG: {:?}", report.findings);
        let order = topological_order(graph).expect("validated graph is acyclic");

        let draw = self.draws.fetch_add(1, Ordering::SeqCst);
        let name = graph.metadata.title.clone().unwrap_or_default();
        let mut warnings = Vec::new();
        let prof = match self.profile.workflows.get(&name) {
            Some(p) => p,
            None => {
                if !self.profile.workflows.is_empty() {
                    warnings.push(format!("no simulation profile for workflow {name:?}; using default"));
                }
                &self.profile.default
            }
        };

        let seed = mix_seed(&[
            &self.profile.seed.to_le_bytes(),
            &draw.to_le_bytes(),
            seed_material(graph).as_bytes(),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let succeeded = rng.random::<f64>() < prof.success_prob;
        let latency = Duration::from_millis(rng.random_range(prof.latency_ms.0..=prof.latency_ms.1));
        let quality = Normal::new(prof.quality_mean, prof.quality_sd)
            .map(|n| n.sample(&mut rng))
            .unwrap_or(prof.quality_mean)
            .clamp(0.0, 1.0);
        if self.profile.real_time {
            std::thread::sleep(latency);
        }

        if !succeeded {
            let diagnostics = match order.get(rng.random_range(0..order.len().max(1))) {
                Some(id) => {
                    let class = &graph.node(id).expect("ordered id exists").class_type;
                    format!("simulated fault in node {id} ({class}) of workflow {name}, draw {draw}")
                }
                None => format!("simulated fault in empty workflow {name}, draw {draw}"),
            };
            let mut out = ExecutionOutcome::failed(diagnostics, latency);
            out.warnings = warnings;
            return out;
        }

        let mut artifacts = Vec::new();
        for id in &order {
            let node = graph.node(id).expect("ordered id exists");
            if !is_output_node(&node.class_type) {
                continue;
            }
            let payload = SimPayload {
                atelier_sim: 1,
                workflow: name.clone(),
                seed: self.profile.seed,
                draw,
                quality,
                node: id.to_string(),
            };
            let path = next_free_name(ctx.artifact_dir, id.as_str(), artifact_extension(&node.class_type));
            let written = std::fs::create_dir_all(ctx.artifact_dir)
                .and_then(|_| std::fs::write(&path, serde_json::to_vec(&payload).expect("payload serializes")));
            if let Err(e) = written {
                let mut out = ExecutionOutcome::failed(format!("cannot write artifact {}: {e}", path.display()), latency);
                out.warnings = warnings;
                return out;
            }
            artifacts.push(ProducedArtifact { node: id.clone(), path });
        }
        let mut out = ExecutionOutcome::completed(artifacts, latency);
        out.warnings = warnings;
        out
    }
}

/// Graph text with absolute file paths cut to their file names, so the same
/// plan draws the same outcomes wherever its run directory lives.
fn seed_material(graph: &WorkflowGraph) -> String {
    let stripped = graph.map_inputs::<std::convert::Infallible>(|_, _, v| {
        Ok(match v.as_literal() {
            Some(Value::String(s)) if Path::new(s).is_absolute() => Path::new(s)
                .file_name()
                .map(|n| InputValue::literal(n.to_string_lossy().into_owned())),
            _ => None,
        })
    });
    match stripped {
        Ok(g) => g.to_json_string(),
        Err(never) => match never {},
    }
}

impl Backend for Simulator {
    fn name(&self) -> &str {
        "sim"
    }

    fn execute(&self, graph: &WorkflowGraph, ctx: ExecContext<'_>) -> ExecutionOutcome {
        self.simulate(graph, ctx)
    }
}
