use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Run settings from one source. Later sources override earlier ones field
/// by field: `atelier.toml`, then `ATELIER_*` variables, then flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub library: Option<PathBuf>,
    pub backend: Option<String>,
    pub adapters: Option<String>,
    pub sim_profile: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_depth: Option<usize>,
    pub max_children: Option<usize>,
    pub max_expansions: Option<usize>,
    pub threshold: Option<String>,
    pub job_timeout: Option<f64>,
    pub evaluate_intermediate: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay!(
            base,
            top,
            library,
            backend,
            adapters,
            sim_profile,
            prompts,
            out,
            seed,
            max_depth,
            max_children,
            max_expansions,
            threshold,
            job_timeout,
            evaluate_intermediate
        )
    }

    pub fn from_file(path: &Path) -> Result<Settings, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Result<Settings, String> {
        fn parse<T: std::str::FromStr>(name: &str, v: Option<String>) -> Result<Option<T>, String> {
            v.map(|s| s.trim().parse().map_err(|_| format!("{name}: cannot parse {s:?}")))
                .transpose()
        }
        let var = |k: &str| get(k).filter(|v| !v.is_empty());
        Ok(Settings {
            library: var("ATELIER_LIBRARY").map(PathBuf::from),
            backend: var("ATELIER_BACKEND"),
            adapters: var("ATELIER_ADAPTERS"),
            sim_profile: var("ATELIER_SIM_PROFILE").map(PathBuf::from),
            prompts: var("ATELIER_PROMPTS").map(PathBuf::from),
            out: var("ATELIER_OUT").map(PathBuf::from),
            seed: parse("ATELIER_SEED", var("ATELIER_SEED"))?,
            max_depth: parse("ATELIER_MAX_DEPTH", var("ATELIER_MAX_DEPTH"))?,
            max_children: parse("ATELIER_MAX_CHILDREN", var("ATELIER_MAX_CHILDREN"))?,
            max_expansions: parse("ATELIER_MAX_EXPANSIONS", var("ATELIER_MAX_EXPANSIONS"))?,
            threshold: var("ATELIER_THRESHOLD"),
            job_timeout: parse("ATELIER_JOB_TIMEOUT", var("ATELIER_JOB_TIMEOUT"))?,
            evaluate_intermediate: parse("ATELIER_EVALUATE_INTERMEDIATE", var("ATELIER_EVALUATE_INTERMEDIATE"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Sim,
    Remote(String),
}

impl BackendChoice {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "sim" {
            return Ok(BackendChoice::Sim);
        }
        let url = s.strip_prefix("remote:").unwrap_or(s);
        if url.starts_with("http://") || url.starts_with("https://") {
            Ok(BackendChoice::Remote(url.to_string()))
        } else {
            Err(format!("backend must be sim, an http(s) URL or remote:<url>, got {s:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterChoice {
    Mock(PathBuf),
    Remote,
}

impl AdapterChoice {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "remote" => Ok(AdapterChoice::Remote),
            other => match other.strip_prefix("mock:") {
                Some(p) if !p.is_empty() => Ok(AdapterChoice::Mock(PathBuf::from(p))),
                _ => Err(format!("adapters must be mock:<scenario file> or remote, got {other:?}")),
            },
        }
    }
}
