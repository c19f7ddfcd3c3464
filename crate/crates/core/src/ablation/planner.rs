use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{AdapterFailure, PlanRequest, Planner, PlannerProposal};
use crate::swi::SwiCall;
use crate::util::mix_seed;
use crate::workspace::Workspace;

/// Model-free planner for synthetic tasks. It knows the required workflow
/// sequence but picks among the current step and the distractors by a prior,
/// and it learns from feedback only what it can read there: a workflow whose
/// output was rejected is not proposed again at that node.
#[derive(Debug, Clone)]
pub struct SimulatedPlanner {
    required: Vec<String>,
    distractors: Vec<String>,
    needs_image: BTreeSet<String>,
    required_weight: f64,
    seed: u64,
}

impl SimulatedPlanner {
    pub fn new(
        required: Vec<String>,
        distractors: Vec<String>,
        needs_image: BTreeSet<String>,
        required_weight: f64,
        seed: u64,
    ) -> Self {
        assert!(!required.is_empty(), "a synthetic task needs at least one step");
        SimulatedPlanner {
            required,
            distractors,
            needs_image,
            required_weight: required_weight.clamp(0.0, 1.0),
            seed,
        }
    }

    /// Leading required steps with an artifact in `ws`.
    pub fn progress(&self, ws: &Workspace) -> usize {
        self.required
            .iter()
            .take_while(|name| ws.artifacts().any(|a| &a.origin.workflow == *name))
            .count()
    }

    fn call(&self, name: &str, ws: &Workspace) -> SwiCall {
        let mut call = SwiCall::new(name).arg("prompt", ws.instruction.clone());
        if self.needs_image.contains(name) {
            let last = ws
                .latest_artifact()
                .map(|a| a.path.display().to_string())
                .unwrap_or_default();
            call = call.arg("image", last);
        }
        call
    }
}

fn rejected(name: &str, feedback: &[String]) -> bool {
    let prefix = format!("{name}: ");
    feedback
        .iter()
        .any(|f| f.starts_with(&prefix) && f.contains("evaluation failed"))
}

impl Planner for SimulatedPlanner {
    fn propose(&self, req: &PlanRequest<'_>) -> Result<PlannerProposal, AdapterFailure> {
        let k = self.progress(req.workspace);
        if k >= self.required.len() {
            return Ok(PlannerProposal::terminate());
        }
        let mut candidates: Vec<(&str, f64)> = vec![(&self.required[k], self.required_weight)];
        if !self.distractors.is_empty() {
            let w = (1.0 - self.required_weight) / self.distractors.len() as f64;
            candidates.extend(self.distractors.iter().map(|d| (d.as_str(), w)));
        }
        let open: Vec<(&str, f64)> = candidates
            .iter()
            .copied()
            .filter(|(n, w)| *w > 0.0 && !rejected(n, req.feedback))
            .collect();
        let pool = if open.is_empty() { &candidates } else { &open };

        let feedback = req.feedback.join("\n");
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
            &self.seed.to_le_bytes(),
            &req.node.to_le_bytes(),
            &(req.attempt as u64).to_le_bytes(),
            feedback.as_bytes(),
        ]));
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let mut x = rng.random::<f64>() * total;
        let mut pick = pool[0].0;
        for (name, w) in pool {
            pick = name;
            if x < *w {
                break;
            }
            x -= w;
        }

        let calls = std::iter::once(pick)
            .chain(self.required[k + 1..].iter().map(String::as_str))
            .map(|n| self.call(n, req.workspace))
            .collect();
        Ok(PlannerProposal::chain(calls))
    }
}
