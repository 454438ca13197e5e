use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context as _;
use clap::{Args, ValueEnum};
use divkit::backends::BackendConfig;
use divkit::scoring::ScoringMode;
use divkit::{Method, Orientation};
use serde::Deserialize;

use crate::Failure;

/// Which trace the single-trace baselines are computed on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineModel {
    #[default]
    Adapted,
    General,
}

// Every run setting. The same keys are read from the flat TOML config file
// (snake_case) and from command-line flags (kebab-case); flags win.
//
// Credentials never appear here: `*_auth_env` names the environment
// variable that holds the bearer token. (Plain comments: a doc comment here
// would replace the program description in `--help`.)
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(next_help_heading = "Configuration (overrides config-file keys)")]
pub struct Settings {
    /// Corpus JSONL to score.
    #[arg(long, global = true, value_name = "PATH")]
    pub corpus_path: Option<PathBuf>,
    /// Comma-separated detector methods [default: divscore].
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub methods: Option<Vec<Method>>,
    /// Target false-positive rate for TPR and thresholds [default: 0.001].
    #[arg(long, global = true, value_name = "RATE")]
    pub target_fpr: Option<f64>,
    /// Trace cache directory; `DIVKIT_CACHE_DIR` takes precedence.
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Where `score` writes rows (and where other commands read them) [default: stdout].
    #[arg(long, global = true, value_name = "PATH")]
    pub scores_out: Option<PathBuf>,
    /// Where `evaluate` writes its report [default: stdout].
    #[arg(long, global = true, value_name = "PATH")]
    pub report_out: Option<PathBuf>,
    /// Seed for the simulator [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trace used by the single-trace baselines [default: adapted].
    #[arg(long, global = true)]
    pub baseline_model: Option<BaselineModel>,
    /// Scoring mode; only `realized_token` is supported.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Comma-separated `method=orientation` overrides, e.g. `rank=lower_is_machine`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub orientation_overrides: Option<Vec<String>>,

    /// Base URL of the general model's completions server.
    #[arg(long, global = true, value_name = "URL")]
    pub general_endpoint: Option<String>,
    /// General model name (also the model id looked up in its replay file).
    #[arg(long, global = true, value_name = "NAME")]
    pub general_model: Option<String>,
    /// Alternatives requested per position from the general endpoint [default: 5].
    #[arg(long, global = true, value_name = "K")]
    pub general_top_k: Option<u8>,
    /// Per-request timeout for the general endpoint [default: 60].
    #[arg(long, global = true, value_name = "SECS")]
    pub general_timeout_secs: Option<u64>,
    /// Concurrent requests to the general endpoint [default: 4].
    #[arg(long, global = true, value_name = "N")]
    pub general_max_parallel: Option<usize>,
    /// Environment variable holding the general endpoint's bearer token.
    #[arg(long, global = true, value_name = "VAR")]
    pub general_auth_env: Option<String>,
    /// Recorded general-model traces to replay instead of a live endpoint.
    #[arg(long, global = true, value_name = "PATH")]
    pub general_replay: Option<PathBuf>,

    /// Base URL of the adapted model's completions server.
    #[arg(long, global = true, value_name = "URL")]
    pub adapted_endpoint: Option<String>,
    /// Adapted model name (also the model id looked up in its replay file).
    #[arg(long, global = true, value_name = "NAME")]
    pub adapted_model: Option<String>,
    /// Alternatives requested per position from the adapted endpoint [default: 5].
    #[arg(long, global = true, value_name = "K")]
    pub adapted_top_k: Option<u8>,
    /// Per-request timeout for the adapted endpoint [default: 60].
    #[arg(long, global = true, value_name = "SECS")]
    pub adapted_timeout_secs: Option<u64>,
    /// Concurrent requests to the adapted endpoint [default: 4].
    #[arg(long, global = true, value_name = "N")]
    pub adapted_max_parallel: Option<usize>,
    /// Environment variable holding the adapted endpoint's bearer token.
    #[arg(long, global = true, value_name = "VAR")]
    pub adapted_auth_env: Option<String>,
    /// Recorded adapted-model traces to replay instead of a live endpoint.
    #[arg(long, global = true, value_name = "PATH")]
    pub adapted_replay: Option<PathBuf>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($field:ident),* $(,)?) => {
        Settings { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Settings {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::Config)?;
        let mut s: Settings = toml::from_str(&raw)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(Failure::Config)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut s.corpus_path,
            &mut s.cache_dir,
            &mut s.scores_out,
            &mut s.report_out,
            &mut s.general_replay,
            &mut s.adapted_replay,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// `self` with every unset key taken from `base`.
    pub fn or(self, base: Settings) -> Settings {
        overlay!(self, base;
            corpus_path, methods, target_fpr, cache_dir, scores_out, report_out, seed,
            baseline_model, mode, orientation_overrides,
            general_endpoint, general_model, general_top_k, general_timeout_secs,
            general_max_parallel, general_auth_env, general_replay,
            adapted_endpoint, adapted_model, adapted_top_k, adapted_timeout_secs,
            adapted_max_parallel, adapted_auth_env, adapted_replay,
        )
    }

    pub fn target_fpr(&self) -> Result<f64, Failure> {
        let t = self.target_fpr.unwrap_or(0.001);
        if t > 0.0 && t < 1.0 {
            Ok(t)
        } else {
            Err(Failure::config(format!(
                "target_fpr {t} must lie strictly between 0 and 1"
            )))
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn orientation_overrides(&self) -> Result<BTreeMap<Method, Orientation>, Failure> {
        let mut out = BTreeMap::new();
        for entry in self.orientation_overrides.iter().flatten() {
            let (m, o) = entry.split_once('=').ok_or_else(|| {
                Failure::config(format!(
                    "orientation override {entry:?} is not method=orientation"
                ))
            })?;
            let m: Method = m.trim().parse().map_err(Failure::config)?;
            let o: Orientation = o.trim().parse().map_err(Failure::config)?;
            out.insert(m, o);
        }
        Ok(out)
    }

    fn source(&self, side: &str) -> Result<Option<TraceSource>, Failure> {
        let (endpoint, model, top_k, timeout, parallel, auth, replay) = match side {
            "general" => (
                &self.general_endpoint,
                &self.general_model,
                self.general_top_k,
                self.general_timeout_secs,
                self.general_max_parallel,
                &self.general_auth_env,
                &self.general_replay,
            ),
            _ => (
                &self.adapted_endpoint,
                &self.adapted_model,
                self.adapted_top_k,
                self.adapted_timeout_secs,
                self.adapted_max_parallel,
                &self.adapted_auth_env,
                &self.adapted_replay,
            ),
        };
        let model = || {
            model
                .clone()
                .ok_or_else(|| Failure::config(format!("{side}_model is required")))
        };
        match (endpoint, replay) {
            (Some(_), Some(_)) => Err(Failure::config(format!(
                "{side}_endpoint and {side}_replay are mutually exclusive"
            ))),
            (None, None) => Ok(None),
            (None, Some(path)) => Ok(Some(TraceSource::Replay {
                path: path.clone(),
                model_id: model()?,
            })),
            (Some(url), None) => {
                let mut cfg = BackendConfig::new(url.clone(), model()?);
                if let Some(k) = top_k {
                    cfg.top_k_logprobs = k;
                }
                if let Some(secs) = timeout {
                    cfg.request_timeout = Duration::from_secs(secs);
                }
                if let Some(n) = parallel {
                    cfg.max_parallel_requests = n;
                }
                cfg.auth_token_env = auth.clone();
                cfg.validate()
                    .map_err(|e| Failure::config(format!("{side} backend: {e}")))?;
                Ok(Some(TraceSource::Live(cfg)))
            }
        }
    }
}

/// Where one model's traces come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Replay { path: PathBuf, model_id: String },
    Live(BackendConfig),
}

/// Validated inputs of the `score` command.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub corpus_path: PathBuf,
    pub methods: Vec<Method>,
    pub general: Option<TraceSource>,
    pub adapted: Option<TraceSource>,
    pub baseline_model: BaselineModel,
    pub orientation_overrides: BTreeMap<Method, Orientation>,
    pub cache_dir: Option<PathBuf>,
    pub scores_out: Option<PathBuf>,
}

impl ScoreConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, Failure> {
        if let Some(mode) = &s.mode {
            mode.parse::<ScoringMode>().map_err(Failure::config)?;
        }
        let corpus_path = s
            .corpus_path
            .clone()
            .ok_or_else(|| Failure::config("corpus_path is required"))?;
        let mut methods = Vec::new();
        for m in s.methods.clone().unwrap_or_else(|| vec![Method::Divscore]) {
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
        if methods.is_empty() {
            return Err(Failure::config("methods must name at least one detector"));
        }
        let general = s.source("general")?;
        let adapted = s.source("adapted")?;
        let baseline_model = s.baseline_model.unwrap_or_default();
        if let Some(m) = methods.iter().find(|m| m.is_paired()) {
            if general.is_none() || adapted.is_none() {
                return Err(Failure::config(format!(
                    "{m} needs both a general and an adapted backend (endpoint or replay)"
                )));
            }
        }
        if let Some(m) = methods.iter().find(|m| !m.is_paired()) {
            let (side, present) = match baseline_model {
                BaselineModel::Adapted => ("adapted", adapted.is_some()),
                BaselineModel::General => ("general", general.is_some()),
            };
            if !present {
                return Err(Failure::config(format!(
                    "{m} needs the {side} backend (endpoint or replay)"
                )));
            }
        }
        Ok(Self {
            corpus_path,
            methods,
            general,
            adapted,
            baseline_model,
            orientation_overrides: s.orientation_overrides()?,
            cache_dir: s.cache_dir.clone(),
            scores_out: s.scores_out.clone(),
        })
    }
}
