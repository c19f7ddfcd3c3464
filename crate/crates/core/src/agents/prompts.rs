//! System prompt templates, one per role. Loaded from `<dir>/<role>.txt`
//! with built-in defaults for missing files.

use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptRole {
    Preprocess,
    Planning,
    ToolsDefinition,
    WorkspaceUpdate,
    Adaptation,
    Evaluation,
}

impl PromptRole {
    pub const ALL: [PromptRole; 6] = [
        PromptRole::Preprocess,
        PromptRole::Planning,
        PromptRole::ToolsDefinition,
        PromptRole::WorkspaceUpdate,
        PromptRole::Adaptation,
        PromptRole::Evaluation,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            PromptRole::Preprocess => "preprocess",
            PromptRole::Planning => "planning",
            PromptRole::ToolsDefinition => "tools-definition",
            PromptRole::WorkspaceUpdate => "workspace-update",
            PromptRole::Adaptation => "adaptation",
            PromptRole::Evaluation => "evaluation",
        }
    }

    fn builtin(self) -> &'static str {
        macro_rules! asset {
            ($f:literal) => {
                include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../prompts/", $f))
            };
        }
        match self {
            PromptRole::Preprocess => asset!("preprocess.txt"),
            PromptRole::Planning => asset!("planning.txt"),
            PromptRole::ToolsDefinition => asset!("tools-definition.txt"),
            PromptRole::WorkspaceUpdate => asset!("workspace-update.txt"),
            PromptRole::Adaptation => asset!("adaptation.txt"),
            PromptRole::Evaluation => asset!("evaluation.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    texts: [String; 6],
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            texts: PromptRole::ALL.map(|r| r.builtin().to_string()),
        }
    }
}

impl PromptSet {
    /// Files present in `dir` override the built-in text for their role.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = PromptSet::default();
        for (i, role) in PromptRole::ALL.into_iter().enumerate() {
            let path = dir.join(format!("{}.txt", role.file_stem()));
            match std::fs::read_to_string(&path) {
                Ok(text) => set.texts[i] = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(set)
    }

    pub fn get(&self, role: PromptRole) -> &str {
        let i = PromptRole::ALL.iter().position(|r| *r == role).expect("role listed");
        &self.texts[i]
    }
}
