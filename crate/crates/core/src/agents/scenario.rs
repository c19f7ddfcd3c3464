//! Scenario files scripting the mock bundle.
//!
//! ```yaml
//! planner:
//!   - chain:
//!       - workflow: flux-text-to-image
//!         arguments: { prompt: "{task}" }
//!   - terminate: true
//! evaluator:
//!   - pass: true
//! evaluator_fallback: accept   # or: quality
//! preprocess_append: "photorealistic, soft light"
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    AcceptingEvaluator, AgentBundle, AppendingPreprocessor, DigestAnnotator, EvalVerdict, Evaluator,
    IdentityPreprocessor, PlannerProposal, Preprocessor, QualityEvaluator, ScriptedEvaluator, ScriptedPlanner,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorFallback {
    #[default]
    Accept,
    Quality,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockScenario {
    pub planner: Vec<PlannerProposal>,
    pub evaluator: Vec<EvalVerdict>,
    pub evaluator_fallback: EvaluatorFallback,
    pub preprocess_append: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario {path} is invalid: {detail}")]
    Invalid { path: String, detail: String },
}

impl MockScenario {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_yaml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: shown.clone(),
            source,
        })?;
        Self::parse(&text).map_err(|detail| ScenarioError::Invalid { path: shown, detail })
    }

    /// Fresh stateful mocks; build one bundle per run.
    pub fn bundle(&self) -> AgentBundle {
        let fallback: Arc<dyn Evaluator> = match self.evaluator_fallback {
            EvaluatorFallback::Accept => Arc::new(AcceptingEvaluator),
            EvaluatorFallback::Quality => Arc::new(QualityEvaluator),
        };
        let preprocessor: Arc<dyn Preprocessor> = match &self.preprocess_append {
            Some(suffix) => Arc::new(AppendingPreprocessor { suffix: suffix.clone() }),
            None => Arc::new(IdentityPreprocessor),
        };
        AgentBundle::new(
            Arc::new(ScriptedPlanner::new(self.planner.clone())),
            Arc::new(DigestAnnotator),
            Arc::new(ScriptedEvaluator::new(self.evaluator.clone(), fallback)),
            preprocessor,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swi::SwiCall;

    #[test]
    fn parses_yaml_scenario() {
        let s = MockScenario::parse(
            "planner:\n  - chain:\n      - workflow: t2i\n        arguments: {prompt: \"{task}\"}\n  - terminate: true\nevaluator:\n  - pass: false\n    failure_analysis: too dark\n",
        )
        .unwrap();
        assert_eq!(s.planner.len(), 2);
        assert_eq!(s.planner[0], PlannerProposal::single(SwiCall::new("t2i").arg("prompt", "{task}")));
        assert!(!s.evaluator[0].pass);
        assert!(MockScenario::parse("planner: 3").is_err());
        assert!(MockScenario::parse("bogus: []").is_err());
    }
}
