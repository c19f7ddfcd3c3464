//! Planning and execution engine for libraries of node-graph workflow
//! templates.
//!
//! Templates are described once as typed functions ([`swi::AtomicWorkflow`])
//! and a planner composes them into chains. The [`plan`] module runs a
//! search tree over those chains with level-confined feedback, executing
//! graphs on a [`backend::Backend`]: a ComfyUI-compatible server or the
//! seeded simulator.

pub mod ablation;
pub mod agents;
pub mod backend;
pub mod graph;
pub mod plan;
pub mod swi;
pub mod util;
pub mod workspace;

pub use ablation::{run_ablation, AblationProfiles, AblationReport, SyntheticTaskSuite};
pub use agents::{AdapterFailure, AgentBundle, EvalVerdict, PlannerProposal, Threshold};
pub use backend::{Backend, ExecutionOutcome, OutcomeStatus, RemoteBackend, SimProfile, Simulator};
pub use graph::{
    diff_graphs, parse_workflow, serialize_workflow, topological_order, validate_dag, GraphDiff, NodeId,
    ValidationReport, WorkflowGraph,
};
pub use plan::{run_task, PlanConfig, Policy, RunTrace, TaskResult, TaskSpec, TaskStatus};
pub use swi::{adapt_parameters, instantiate, AtomicWorkflow, Library, SwiCall, SwiDescriptor};
pub use workspace::{snapshot, Workspace};
