use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use divkit::backends::TraceCache;
use divkit::corpus::load_corpus;
use divkit::metrics::{roc_curve, roc_to_csv, GroupBy};
use divkit::theory::{grid_to_csv, simulate_grid};
use divkit::{Attack, Label, Method};

use crate::config::{ScoreConfig, Settings};
use crate::pipeline::{build_provider, score_corpus, ScorePlan};
use crate::reports::{
    calibrate_rows, evaluate_rows, group_members, pick_method, report_to_json, roc_file_name,
};
use crate::scores::{read_scores, scores_to_jsonl, to_labeled, ScoreRow};
use crate::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "divkit",
    version,
    about = "Detect machine-generated text from paired model log-probabilities"
)]
pub struct Cli {
    /// Flat TOML config file; any key can be overridden by the same-named flag.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub settings: Settings,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every corpus record with every configured method (JSONL out).
    Score,
    /// Per-group AUROC, TPR at the target FPR and thresholds (JSON out).
    Evaluate(EvaluateArgs),
    /// Threshold meeting the target FPR on human scores alone (JSON out).
    Calibrate(CalibrateArgs),
    /// Closed-form vs Monte Carlo AUROC over a Gaussian grid (CSV out).
    Simulate(SimulateArgs),
    /// ROC sweep of one group of scores (CSV out).
    ExportRoc(ExportRocArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScoresInput {
    /// Scores JSONL to read [default: the configured scores_out].
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
}

impl ScoresInput {
    fn load(&self, settings: &Settings) -> Result<Vec<ScoreRow>, Failure> {
        let path = self
            .scores
            .as_ref()
            .or(settings.scores_out.as_ref())
            .ok_or_else(|| Failure::config("no scores file: pass --scores or set scores_out"))?;
        read_scores(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupAxis {
    Domain,
    #[value(name = "source_model")]
    SourceModel,
    Attack,
    /// Method alone (always a grouping axis).
    Method,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: ScoresInput,
    /// Grouping axes in addition to the method.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "domain,source_model,attack"
    )]
    pub group_by: Vec<GroupAxis>,
    /// Also write one ROC CSV per evaluated group into this directory.
    #[arg(long, value_name = "DIR")]
    pub roc_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: ScoresInput,
    /// Method to calibrate (required when the scores hold several).
    #[arg(long)]
    pub method: Option<Method>,
    /// Output path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Mean gaps between the human and machine score distributions.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub deltas: Vec<f64>,
    /// `sigma_p:sigma_qp` standard-deviation pairs.
    #[arg(long, value_delimiter = ',', default_value = "1:1,1:2,2:2", value_parser = parse_sigma_pair)]
    pub sigma_pairs: Vec<(f64, f64)>,
    /// Draws per class per cell.
    #[arg(long, default_value_t = 200_000)]
    pub n: usize,
    /// Output path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn parse_sigma_pair(s: &str) -> Result<(f64, f64), String> {
    let (p, q) = s
        .split_once(':')
        .ok_or_else(|| format!("{s:?} is not sigma_p:sigma_qp"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(p)?, parse(q)?))
}

#[derive(Debug, Clone, Args)]
pub struct ExportRocArgs {
    #[command(flatten)]
    pub input: ScoresInput,
    /// Method to export (required when the scores hold several).
    #[arg(long)]
    pub method: Option<Method>,
    /// Restrict to one domain.
    #[arg(long)]
    pub domain: Option<String>,
    /// Restrict the machine side to one source model.
    #[arg(long)]
    pub source_model: Option<String>,
    /// Restrict the machine side to one attack variant.
    #[arg(long)]
    pub attack: Option<Attack>,
    /// Output path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<(), Failure> {
    let settings = match &cli.config {
        Some(path) => cli.settings.or(Settings::load(path)?),
        None => cli.settings,
    };
    match cli.command {
        Command::Score => cmd_score(&settings),
        Command::Evaluate(args) => cmd_evaluate(&settings, &args),
        Command::Calibrate(args) => cmd_calibrate(&settings, &args),
        Command::Simulate(args) => cmd_simulate(&settings, &args),
        Command::ExportRoc(args) => cmd_export_roc(&settings, &args),
    }
}

fn emit(path: Option<&Path>, content: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, content)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(Failure::Data),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|()| out.flush())
                .context("writing to stdout")
                .map_err(Failure::Data)
        }
    }
}

fn cmd_score(settings: &Settings) -> Result<(), Failure> {
    let cfg = ScoreConfig::from_settings(settings)?;
    let corpus = load_corpus(&cfg.corpus_path)
        .with_context(|| format!("loading corpus {}", cfg.corpus_path.display()))
        .map_err(Failure::Data)?;
    if corpus.is_empty() {
        log::warn!(
            "corpus {} is empty; writing an empty scores file",
            cfg.corpus_path.display()
        );
        return emit(cfg.scores_out.as_deref(), "");
    }
    let cache = match &cfg.cache_dir {
        Some(dir) => Some(TraceCache::from_env_or(dir)),
        None => std::env::var_os(divkit::backends::CACHE_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(TraceCache::new),
    };
    let general = cfg
        .general
        .as_ref()
        .map(|s| build_provider(s, cache.as_ref()))
        .transpose()?;
    let adapted = cfg
        .adapted
        .as_ref()
        .map(|s| build_provider(s, cache.as_ref()))
        .transpose()?;
    let plan = ScorePlan {
        methods: cfg.methods.clone(),
        baseline_model: cfg.baseline_model,
        orientation_overrides: cfg.orientation_overrides.clone(),
    };
    let rows = score_corpus(&corpus, &plan, general.as_deref(), adapted.as_deref())?;
    let unscored = rows.iter().filter(|r| r.value.is_none()).count();
    log::info!(
        "scored {} rows ({unscored} with diagnostics only)",
        rows.len()
    );
    emit(cfg.scores_out.as_deref(), &scores_to_jsonl(&rows))
}

fn group_by(axes: &[GroupAxis]) -> GroupBy {
    GroupBy {
        domain: axes.contains(&GroupAxis::Domain),
        source_model: axes.contains(&GroupAxis::SourceModel),
        attack: axes.contains(&GroupAxis::Attack),
    }
}

fn cmd_evaluate(settings: &Settings, args: &EvaluateArgs) -> Result<(), Failure> {
    let target = settings.target_fpr()?;
    let rows = args.input.load(settings)?;
    let report = evaluate_rows(&rows, group_by(&args.group_by), target);
    if let Some(dir) = &args.roc_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Data)?;
        let labeled = to_labeled(&rows);
        for g in report.groups.iter().filter(|g| g.auroc.is_some()) {
            let curve = roc_curve(&group_members(&labeled, g)).map_err(Failure::data)?;
            emit(Some(&dir.join(roc_file_name(g))), &roc_to_csv(&curve))?;
        }
    }
    emit(settings.report_out.as_deref(), &report_to_json(&report))
}

fn cmd_calibrate(settings: &Settings, args: &CalibrateArgs) -> Result<(), Failure> {
    let target = settings.target_fpr()?;
    let rows = args.input.load(settings)?;
    let cal = calibrate_rows(&rows, args.method, target)?;
    emit(args.out.as_deref(), &report_to_json(&cal))
}

fn cmd_simulate(settings: &Settings, args: &SimulateArgs) -> Result<(), Failure> {
    let rows = simulate_grid(&args.deltas, &args.sigma_pairs, args.n, settings.seed())
        .map_err(Failure::config)?;
    emit(args.out.as_deref(), &grid_to_csv(&rows))
}

fn cmd_export_roc(settings: &Settings, args: &ExportRocArgs) -> Result<(), Failure> {
    let rows = args.input.load(settings)?;
    let method = pick_method(&rows, args.method)?;
    let selected: Vec<_> = to_labeled(&rows)
        .into_iter()
        .filter(|s| s.method == method)
        .filter(|s| args.domain.as_ref().is_none_or(|d| *d == s.domain))
        .filter(|s| {
            s.label == Label::Human
                || (args
                    .source_model
                    .as_ref()
                    .is_none_or(|m| s.source_model.as_ref() == Some(m))
                    && args.attack.is_none_or(|a| a == s.attack))
        })
        .collect();
    let curve = roc_curve(&selected).map_err(|e| Failure::data(format!("{method}: {e}")))?;
    emit(args.out.as_deref(), &roc_to_csv(&curve))
}
