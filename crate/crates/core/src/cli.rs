//! Command-line front end: `select`, `causal`, `rl` and `score`.
//!
//! Settings come from an optional TOML file overridden by flags. Each run
//! writes its effective configuration to `config.toml` in the output
//! directory next to its reports, so the directory alone reconstructs the
//! run. Failures print one JSON object to stderr and exit with 2 (usage or
//! configuration), 3 (backend) or 4 (data).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{self, CausalError, CombineRule, EvalMode, EvalOptions, EvaluationReport};
use crate::featselect::{self, CorruptionSpec, FeatError};
use crate::learners::{LabelRule, LearnerId, RawTable};
use crate::lm::{BackendConfig, BackendKind, LmClient, LmError, Prompt, ScoreMode, TokenScoreRequest};
use crate::prompts::{load_template, PromptError, TaskKind};
use crate::rlshape::{self, Gridworld, QParams, RlError, Shaping, ShapingMode, ShapingTable};
use crate::seed::child_seed;
use crate::util::write_atomic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Backend(_) => 3,
            CliError::Data(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config { .. } => "config",
            CliError::Backend(_) => "backend",
            CliError::Data(_) => "data",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": {"kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string()}
        });
        if let CliError::Config { path, .. } = self {
            v["error"]["path"] = path.display().to_string().into();
        }
        v
    }
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config { path: path.to_path_buf(), message: e.to_string() }
}

fn from_lm(e: LmError) -> CliError {
    if e.is_backend_failure() {
        CliError::Backend(e.to_string())
    } else {
        CliError::Usage(e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<FeatError> for CliError {
    fn from(e: FeatError) -> Self {
        match e {
            FeatError::Lm { ref source, .. } if source.is_backend_failure() => CliError::Backend(e.to_string()),
            FeatError::Metadata { path, message } => CliError::Config { path: path.into(), message },
            FeatError::Prompt { .. } | FeatError::AnswerCount(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CausalError> for CliError {
    fn from(e: CausalError) -> Self {
        let mut root = &e;
        while let CausalError::Pair { source, .. } = root {
            root = source;
        }
        match root {
            CausalError::Lm(lm) if lm.is_backend_failure() => CliError::Backend(e.to_string()),
            CausalError::Lm(_) | CausalError::Prompt(_) | CausalError::Usage(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RlError> for CliError {
    fn from(e: RlError) -> Self {
        match e {
            RlError::Lm(lm) => from_lm(lm),
            RlError::NoJudgmentTokens { .. } => CliError::Backend(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lmprior", version, about = "Language-model priors for feature selection, causal direction and reward shaping")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding `{id}.txt` / `{id}.answers.json` template overrides.
    #[arg(long, global = true)]
    pub template_dir: Option<PathBuf>,
    /// Worker threads for concurrent scoring and training.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_parser = ["stub", "http"])]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub stub_table: Option<PathBuf>,
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub auth_token_env: Option<String>,
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score variables and keep those above the threshold.
    Select(SelectArgs),
    /// Infer causal direction for a directory of variable pairs.
    Causal(CausalArgs),
    /// Train Q-learning agents with and without judgment-based shaping.
    Rl(RlArgs),
    /// Score one prompt directly.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Variable metadata, CSV or JSON with `name` and `description`.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Template id: feature_selection, census, or one in --template-dir.
    #[arg(long)]
    pub template: Option<String>,
    /// Run the corruption experiment on --base-table and --nuisance-table.
    #[arg(long)]
    pub evaluate: bool,
    #[arg(long)]
    pub base_table: Option<PathBuf>,
    #[arg(long)]
    pub nuisance_table: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    /// `auto`, `> x` or `= value`.
    #[arg(long, allow_hyphen_values = true)]
    pub label_rule: Option<String>,
    #[arg(long)]
    pub learner: Option<String>,
    #[arg(long)]
    pub subsample_rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CausalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated list of reci_only, lm_only, combined, or `all`.
    #[arg(long)]
    pub mode: Option<String>,
    /// `log-odds` or `literal-prob`.
    #[arg(long)]
    pub combine: Option<String>,
    #[arg(long)]
    pub degree: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RlArgs {
    /// ASCII map; the bundled layout when omitted.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seeds: Option<u64>,
    /// `none`, `additive` or `potential`.
    #[arg(long)]
    pub shaping: Option<String>,
    /// Train an unshaped arm next to the shaped one.
    #[arg(long)]
    pub compare: bool,
    /// Four comma-separated bonuses; skips elicitation.
    #[arg(long, allow_hyphen_values = true)]
    pub pin_bonuses: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub prompt: Option<String>,
    /// Candidate continuation; repeat for several. Without candidates the
    /// top-k next-token distribution is returned.
    #[arg(long = "candidate", allow_hyphen_values = true)]
    pub candidates: Vec<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Score whole candidate sequences instead of their first token.
    #[arg(long)]
    pub sequence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub template_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub backend: BackendConfig,
    pub select: SelectConfig,
    pub causal: CausalConfig,
    pub rl: RlConfig,
    pub score: ScoreConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("lmprior-out"),
            template_dir: None,
            jobs: None,
            backend: BackendConfig::default(),
            select: SelectConfig::default(),
            causal: CausalConfig::default(),
            rl: RlConfig::default(),
            score: ScoreConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub metadata: Option<PathBuf>,
    pub tau: f64,
    pub template: String,
    pub evaluate: bool,
    pub base_table: Option<PathBuf>,
    pub nuisance_table: Option<PathBuf>,
    pub label: Option<String>,
    pub label_rule: String,
    pub learner: String,
    pub subsample_rows: Option<usize>,
    pub train_fraction: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            metadata: None,
            tau: featselect::DEFAULT_TAU,
            template: "feature_selection".into(),
            evaluate: false,
            base_table: None,
            nuisance_table: None,
            label: None,
            label_rule: "auto".into(),
            learner: "logreg".into(),
            subsample_rows: None,
            train_fraction: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalConfig {
    pub dataset: Option<PathBuf>,
    pub mode: String,
    pub combine: String,
    pub degree: usize,
    pub exclude: Vec<u32>,
}

impl Default for CausalConfig {
    fn default() -> Self {
        CausalConfig {
            dataset: None,
            mode: "combined".into(),
            combine: "log-odds".into(),
            degree: causal::reci::DEFAULT_DEGREE,
            exclude: causal::DEFAULT_EXCLUDED.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub map: Option<PathBuf>,
    pub steps: usize,
    pub seeds: u64,
    pub shaping: String,
    pub compare: bool,
    pub pin_bonuses: Option<String>,
    pub max_episode_steps: usize,
    pub alpha: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            map: None,
            steps: 100_000,
            seeds: 10,
            shaping: "additive".into(),
            compare: false,
            pin_bonuses: None,
            max_episode_steps: 100,
            alpha: QParams::default().alpha,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub prompt: Option<String>,
    pub candidates: Vec<String>,
    pub top_k: Option<usize>,
    pub sequence: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path, e))?;
        toml::from_str(&text).map_err(|e| config_err(path, e))
    }

    fn apply(&mut self, cli: &Cli) {
        let g = &cli.global;
        set(&mut self.output_dir, &g.output_dir);
        set(&mut self.seed, &g.seed);
        set_opt(&mut self.template_dir, &g.template_dir);
        set_opt(&mut self.jobs, &g.jobs);
        let b = &mut self.backend;
        if let Some(kind) = &g.backend {
            b.kind = if kind == "http" { BackendKind::Http } else { BackendKind::Stub };
        }
        set_opt(&mut b.stub_table_path, &g.stub_table);
        set_opt(&mut b.base_url, &g.base_url);
        set_opt(&mut b.model_name, &g.model);
        set(&mut b.auth_token_env, &g.auth_token_env);
        set_opt(&mut b.cache_path, &g.cache);
        set(&mut b.max_retries, &g.max_retries);

        match &cli.command {
            Command::Select(a) => {
                let s = &mut self.select;
                set_opt(&mut s.metadata, &a.metadata);
                set(&mut s.tau, &a.tau);
                set(&mut s.template, &a.template);
                s.evaluate |= a.evaluate;
                set_opt(&mut s.base_table, &a.base_table);
                set_opt(&mut s.nuisance_table, &a.nuisance_table);
                set_opt(&mut s.label, &a.label);
                set(&mut s.label_rule, &a.label_rule);
                set(&mut s.learner, &a.learner);
                set_opt(&mut s.subsample_rows, &a.subsample_rows);
            }
            Command::Causal(a) => {
                let c = &mut self.causal;
                set_opt(&mut c.dataset, &a.dataset);
                set(&mut c.mode, &a.mode);
                set(&mut c.combine, &a.combine);
                set(&mut c.degree, &a.degree);
            }
            Command::Rl(a) => {
                let r = &mut self.rl;
                set_opt(&mut r.map, &a.map);
                set(&mut r.steps, &a.steps);
                set(&mut r.seeds, &a.seeds);
                set(&mut r.shaping, &a.shaping);
                r.compare |= a.compare;
                set_opt(&mut r.pin_bonuses, &a.pin_bonuses);
            }
            Command::Score(a) => {
                let s = &mut self.score;
                set_opt(&mut s.prompt, &a.prompt);
                if !a.candidates.is_empty() {
                    s.candidates = a.candidates.clone();
                }
                set_opt(&mut s.top_k, &a.top_k);
                s.sequence |= a.sequence;
            }
        }
    }
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        *slot = v.clone();
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on stderr as JSON.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => return report(&CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("{}", e.to_json());
    e.exit_code()
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(cli);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| {
        let out = Output::create(&cfg.output_dir)?;
        let echoed = toml::to_string(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
        out.write("config.toml", echoed.as_bytes())?;
        match &cli.command {
            Command::Select(_) => cmd_select(&cfg, &out),
            Command::Causal(_) => cmd_causal(&cfg, &out),
            Command::Rl(_) => cmd_rl(&cfg, &out),
            Command::Score(_) => cmd_score(&cfg, &out),
        }
    })
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> Result<Output, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| config_err(dir, e))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes).map_err(|e| config_err(&path, e))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
        self.write(name, &bytes)
    }
}

fn client(cfg: &RunConfig) -> Result<LmClient, CliError> {
    LmClient::from_config(&cfg.backend).map_err(|e| match e {
        LmError::StubTable { ref path, .. } => config_err(Path::new(path), &e),
        other => from_lm(other),
    })
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn read_table(path: &Path) -> Result<RawTable, CliError> {
    if !path.exists() {
        return Err(config_err(path, "no such file"));
    }
    RawTable::read_csv(path).map_err(|e| CliError::Data(e.to_string()))
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    name: &'a str,
    score: f64,
    kept: bool,
}

#[derive(Serialize)]
struct Accuracies {
    learner: LearnerId,
    base: f64,
    corrupted: f64,
    filtered: f64,
    rows: usize,
}

#[derive(Serialize)]
struct SelectReport<'a> {
    tau: f64,
    template_id: &'a str,
    backend_id: &'a str,
    scores: Vec<ScoreRow<'a>>,
    kept: Vec<&'a str>,
    dropped_without_metadata: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracies: Option<Accuracies>,
}

fn cmd_select(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = &cfg.select;
    let metadata_path = required(&s.metadata, "--metadata")?;
    let metadata = featselect::load_metadata(metadata_path)?;
    let ctx = load_template(cfg.template_dir.as_deref(), &s.template, TaskKind::FeatureSelection)?;

    let mut tables = None;
    let (variables, dropped) = if s.evaluate {
        let label = required(&s.label, "--label")?;
        let base = read_table(required(&s.base_table, "--base-table")?)?;
        let nuisance = read_table(required(&s.nuisance_table, "--nuisance-table")?)?;
        let columns: Vec<String> =
            base.columns.iter().chain(&nuisance.columns).filter(|c| *c != label).cloned().collect();
        let (scoreable, dropped) = featselect::partition_scoreable(&columns, &metadata);
        tables = Some((base, nuisance, label));
        (scoreable, dropped)
    } else {
        (metadata, Vec::new())
    };

    let client = client(cfg)?;
    let run = featselect::select(&variables, &ctx, s.tau, &client)?;

    let accuracies = match tables {
        Some((base, nuisance, label)) => {
            let keep = |c: &str| !dropped.iter().any(|d| d == c);
            let mut spec = CorruptionSpec::new(base.retain_columns(keep), nuisance.retain_columns(keep), label, child_seed(cfg.seed, "select", 0));
            spec.subsample_rows = s.subsample_rows;
            spec.train_fraction = s.train_fraction;
            spec.label_rule = s.label_rule.parse::<LabelRule>().map_err(CliError::Usage)?;
            let learner: LearnerId = s.learner.parse().map_err(|e: crate::learners::LearnerError| CliError::Usage(e.to_string()))?;
            let r = featselect::run_corruption_experiment(&spec, &run, learner)?;
            Some(Accuracies {
                learner,
                base: r.acc_base,
                corrupted: r.acc_corrupted,
                filtered: r.acc_filtered,
                rows: r.rows,
            })
        }
        None => None,
    };

    let rows = || run.scores.iter().map(|f| ScoreRow { name: &f.variable.name, score: f.score, kept: f.kept });
    out.csv("scores.csv", rows())?;
    out.json(
        "report.json",
        &SelectReport {
            tau: run.tau,
            template_id: &run.template_id,
            backend_id: &run.backend_id,
            scores: rows().collect(),
            kept: run.kept_names(),
            dropped_without_metadata: dropped,
            accuracies,
        },
    )
}

fn parse_modes(s: &str) -> Result<Vec<EvalMode>, CliError> {
    if s.trim() == "all" {
        return Ok(EvalMode::ALL.to_vec());
    }
    let mut modes: Vec<EvalMode> = Vec::new();
    for part in s.split(',') {
        let m: EvalMode = part.trim().parse()?;
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    Ok(modes)
}

#[derive(Serialize)]
struct PairRow<'a> {
    pair_id: &'a str,
    lm_log_ratio: Option<f64>,
    rho: Option<f64>,
    combined: f64,
    verdict: String,
    correct: bool,
}

#[derive(Serialize)]
struct ModeSummary {
    mode: &'static str,
    accuracy: f64,
    n_pairs: usize,
    n_correct: usize,
}

fn cmd_causal(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let c = &cfg.causal;
    let modes = parse_modes(&c.mode)?;
    let rule: CombineRule = c.combine.parse()?;
    let dir = required(&c.dataset, "--dataset")?;
    if !dir.is_dir() {
        return Err(config_err(dir, "not a directory"));
    }
    let ds = causal::load_pair_dataset(dir, &c.exclude)?;
    let ctx = load_template(cfg.template_dir.as_deref(), "causal", TaskKind::Causal)?;
    let lm = if modes.iter().any(|m| *m != EvalMode::ReciOnly) { Some(client(cfg)?) } else { None };
    let opts = EvalOptions { rule, degree: c.degree };

    let reports: Vec<EvaluationReport> = modes
        .iter()
        .map(|&m| causal::evaluate_dataset(&ds, m, &ctx, lm.as_ref(), &opts))
        .collect::<Result<_, _>>()?;
    for r in &reports {
        out.csv(
            &format!("causal_{}.csv", r.mode.as_str()),
            r.pairs.iter().map(|p| PairRow {
                pair_id: &p.pair_id,
                lm_log_ratio: p.lm_log_ratio,
                rho: p.rho,
                combined: p.combined,
                verdict: p.verdict.to_string(),
                correct: p.correct,
            }),
        )?;
    }
    let summary: Vec<ModeSummary> = reports
        .iter()
        .map(|r| ModeSummary { mode: r.mode.as_str(), accuracy: r.accuracy, n_pairs: r.n_pairs, n_correct: r.n_correct })
        .collect();
    out.csv("summary.csv", &summary)?;
    out.json(
        "summary.json",
        &serde_json::json!({
            "combine": rule,
            "backend_id": lm.as_ref().map(|l| l.backend_id()),
            "modes": summary,
            "excluded": ds.excluded,
        }),
    )
}

#[derive(Serialize)]
struct SeedStats {
    seed: u64,
    shaped: bool,
    shaping: String,
    violations: usize,
    episodes: usize,
    mean_return_last_100: f64,
    greedy_reaches_goal: bool,
}

#[derive(Serialize)]
struct MeanStd {
    mean: f64,
    std: f64,
}

impl MeanStd {
    /// Sample standard deviation; 0 for a single value.
    fn of(v: &[f64]) -> MeanStd {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        MeanStd { mean, std: var.sqrt() }
    }
}

fn cmd_rl(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let r = &cfg.rl;
    let mut world = match &r.map {
        Some(p) => rlshape::render_layout(p).map_err(|e| config_err(p, e))?,
        None => Gridworld::island_navigation(),
    };
    world.max_episode_steps = r.max_episode_steps;
    let mode = match r.shaping.as_str() {
        "none" => None,
        "additive" => Some(ShapingMode::Additive),
        "potential" => Some(ShapingMode::Potential),
        other => return Err(CliError::Usage(format!("unknown shaping {other:?} (none | additive | potential)"))),
    };
    if r.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let needs_table = mode.is_some() || r.compare;
    let table = match (&r.pin_bonuses, needs_table) {
        (_, false) => None,
        (Some(p), true) => {
            let t: ShapingTable = p.parse()?;
            out.json("bonuses.json", &serde_json::json!({"source": "pinned", "table": t}))?;
            Some(t)
        }
        (None, true) => {
            let ctx = load_template(cfg.template_dir.as_deref(), "rl", TaskKind::RlJudgment)?;
            let lm = client(cfg)?;
            let (t, elicited) = rlshape::elicit_table(&ctx, &lm)?;
            out.json(
                "bonuses.json",
                &serde_json::json!({"source": "elicited", "backend_id": lm.backend_id(), "table": t, "elicited": elicited}),
            )?;
            Some(t)
        }
    };

    let shaped_arm = table.map(|t| Shaping { table: t, mode: mode.unwrap_or_default() });
    let mut arms: Vec<(&str, Option<&Shaping>)> = Vec::new();
    if r.compare || mode.is_none() {
        arms.push(("unshaped", None));
    }
    if let Some(s) = &shaped_arm {
        arms.push(("shaped", Some(s)));
    }
    let params = QParams { alpha: r.alpha, ..QParams::default() };
    let jobs: Vec<(usize, u64)> = (0..arms.len()).flat_map(|a| (0..r.seeds).map(move |i| (a, i))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(a, i)| {
            let seed = child_seed(cfg.seed, "rl", i);
            let run = rlshape::train_q_learning(&world, arms[a].1, r.steps, seed, &params)?;
            Ok((a, i, run))
        })
        .collect::<Result<Vec<_>, RlError>>()?;

    let mut aggregate = serde_json::Map::new();
    for (a, (name, shaping)) in arms.iter().enumerate() {
        let mut violations = Vec::new();
        let mut returns = Vec::new();
        let mut all_reach = true;
        for (_, i, run) in runs.iter().filter(|(ra, _, _)| *ra == a) {
            let stats = SeedStats {
                seed: run.stats.seed,
                shaped: shaping.is_some(),
                shaping: shaping.map_or("none".to_string(), |s| s.mode.to_string()),
                violations: run.stats.total_safety_violations,
                episodes: run.stats.episodes,
                mean_return_last_100: run.stats.mean_return_last(100),
                greedy_reaches_goal: run.reaches_goal(&world),
            };
            violations.push(stats.violations as f64);
            returns.push(stats.mean_return_last_100);
            all_reach &= stats.greedy_reaches_goal;
            out.json(&format!("rl_seed{i}_{name}.json"), &stats)?;
        }
        aggregate.insert(
            name.to_string(),
            serde_json::json!({
                "seeds": r.seeds,
                "violations": MeanStd::of(&violations),
                "mean_return_last_100": MeanStd::of(&returns),
                "all_greedy_reach_goal": all_reach,
            }),
        );
    }
    aggregate.insert("steps".into(), r.steps.into());
    out.json("aggregate.json", &aggregate)
}

fn cmd_score(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = &cfg.score;
    let prompt = Prompt::new(required(&s.prompt, "--prompt")?.clone()).map_err(from_lm)?;
    let lm = client(cfg)?;
    let result = if s.candidates.is_empty() {
        lm.next_token_distribution(&prompt, s.top_k.unwrap_or(5)).map_err(from_lm)?
    } else {
        let mode = if s.sequence { ScoreMode::Sequence } else { ScoreMode::FirstToken };
        let req = TokenScoreRequest::with_mode(prompt.clone(), s.candidates.clone(), mode).map_err(from_lm)?;
        lm.score_candidates(&req).map_err(from_lm)?
    };
    let value = serde_json::json!({
        "prompt_sha256": prompt.sha256(),
        "backend_id": result.backend_id,
        "entries": result.entries,
    });
    println!("{}", serde_json::to_string_pretty(&value).map_err(|e| CliError::Data(e.to_string()))?);
    out.json("score.json", &value)
}
