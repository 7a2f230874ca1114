//! Pairwise causal direction: a data-driven coefficient from [`reci`], the
//! language model's preference between the two direction answers, and
//! their combination in log-odds space.

mod dataset;
pub mod reci;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_pair_dataset, pair_number, ExcludedPair, PairDataset, PairMetadata, VarRecord, DEFAULT_EXCLUDED};
pub use reci::{reci_coefficient, reci_coefficient_with_degree};

use crate::lm::{tokenize, LmClient, LmError, TokenScoreRequest};
use crate::prompts::{render_causal_prompt, PromptError, TaskContext, VariableMeta};

/// Clamp applied to the coefficient's probability before taking log-odds.
pub const PROB_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("need at least 10 samples, got {0}")]
    TooFewSamples(usize),
    #[error("x has {0} samples but y has {1}")]
    LengthMismatch(usize, usize),
    #[error("column {0} is constant")]
    ConstantColumn(&'static str),
    #[error("normal equations are singular even for a linear fit")]
    Singular,
    #[error("variable names {0:?} are identical; direction cannot be scored")]
    IdenticalNames(String),
    #[error("pair {0}: missing ground-truth direction")]
    MissingLabel(String),
    #[error("pair {pair_id}: {source}")]
    Pair { pair_id: String, source: Box<CausalError> },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("{0}")]
    Usage(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "a->b")]
    XCausesY,
    #[serde(rename = "b->a")]
    YCausesX,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::XCausesY => Direction::YCausesX,
            Direction::YCausesX => Direction::XCausesY,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XCausesY => "x_causes_y",
            Direction::YCausesX => "y_causes_x",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalPair {
    pub pair_id: String,
    /// Variable of the first sample column.
    pub a: VariableMeta,
    /// Variable of the second sample column.
    pub b: VariableMeta,
    pub brief_context: String,
    pub samples: Vec<(f64, f64)>,
    pub ground_truth: Option<Direction>,
}

impl CausalPair {
    pub fn columns(&self) -> (Vec<f64>, Vec<f64>) {
        self.samples.iter().copied().unzip()
    }

    /// The same pair with variables and sample columns swapped.
    pub fn swapped(&self) -> CausalPair {
        CausalPair {
            pair_id: self.pair_id.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
            brief_context: self.brief_context.clone(),
            samples: self.samples.iter().map(|&(x, y)| (y, x)).collect(),
            ground_truth: self.ground_truth.map(Direction::reversed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineRule {
    /// Log-ratio plus the log-odds of the coefficient's probability.
    #[default]
    LogOdds,
    /// Log-ratio plus `p(x->y) - p(y->x)` taken as plain probabilities.
    LiteralProb,
}

impl FromStr for CombineRule {
    type Err = CausalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log-odds" => Ok(CombineRule::LogOdds),
            "literal-prob" => Ok(CombineRule::LiteralProb),
            other => Err(CausalError::Usage(format!("unknown combine rule {other:?} (log-odds | literal-prob)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalEvidence {
    pub lm_log_ratio: f64,
    pub reci_rho: f64,
    pub reci_prob: f64,
    pub combined: f64,
    pub verdict: Direction,
}

pub fn reci_probability(rho: f64) -> f64 {
    ((rho + 1.0) / 2.0).clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// `log(p / (1 - p))` for `p = reci_probability(rho)`, evaluated as
/// `ln(1 + r) - ln(1 - r)` with `r = 2p - 1` so that the sign of `rho`
/// survives even when `rho` is far below machine epsilon.
pub fn reci_log_odds(rho: f64) -> f64 {
    let bound = 1.0 - 2.0 * PROB_EPSILON;
    let r = rho.clamp(-bound, bound);
    r.ln_1p() - (-r).ln_1p()
}

pub fn verdict(combined: f64) -> Direction {
    if combined >= 0.0 {
        Direction::XCausesY
    } else {
        Direction::YCausesX
    }
}

pub fn combine(lm_log_ratio: f64, rho: f64) -> CausalEvidence {
    combine_with(lm_log_ratio, rho, CombineRule::LogOdds)
}

pub fn combine_with(lm_log_ratio: f64, rho: f64, rule: CombineRule) -> CausalEvidence {
    let reci_prob = reci_probability(rho);
    let data_term = match rule {
        CombineRule::LogOdds => reci_log_odds(rho),
        CombineRule::LiteralProb => reci_prob - (1.0 - reci_prob),
    };
    let combined = lm_log_ratio + data_term;
    CausalEvidence { lm_log_ratio, reci_rho: rho, reci_prob, combined, verdict: verdict(combined) }
}

/// The query actually sent for a direction judgment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionQuery {
    /// Pre-tokens shared by both answers, appended to the prompt.
    pub shared_prefix: String,
    /// First differing pre-token of the `a -> b` and `b -> a` answers.
    pub candidates: [String; 2],
}

/// Splits the two direction answers at their first differing pre-token.
pub fn direction_query(answer_ab: &str, answer_ba: &str) -> Option<DirectionQuery> {
    let ta = tokenize::pre_tokenize(answer_ab);
    let tb = tokenize::pre_tokenize(answer_ba);
    let k = ta.iter().zip(&tb).take_while(|(x, y)| x == y).count();
    let (ca, cb) = (ta.get(k)?, tb.get(k)?);
    Some(DirectionQuery { shared_prefix: ta[..k].concat(), candidates: [ca.to_string(), cb.to_string()] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmDirection {
    pub log_ratio: f64,
    pub query: DirectionQuery,
}

/// `log p(a-first answer) - log p(b-first answer)` from one next-token
/// query. When the answers share leading tokens those are appended to the
/// prompt and the first differing tokens are compared.
pub fn lm_direction_log_ratio(pair: &CausalPair, ctx: &TaskContext, client: &LmClient) -> Result<LmDirection, CausalError> {
    if pair.a.name == pair.b.name {
        return Err(CausalError::IdenticalNames(pair.a.name.clone()));
    }
    let rendered = render_causal_prompt(ctx, &pair.a, &pair.b, &pair.brief_context)?;
    let query = direction_query(&rendered.answer_tokens[0], &rendered.answer_tokens[1])
        .ok_or_else(|| CausalError::IdenticalNames(pair.a.name.clone()))?;
    let prompt = rendered.prompt.extended(&query.shared_prefix);
    let req = TokenScoreRequest::new(prompt, query.candidates.to_vec())?;
    let out = client.score_candidates(&req)?;
    Ok(LmDirection { log_ratio: out.entries[0].logprob - out.entries[1].logprob, query })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ReciOnly,
    LmOnly,
    Combined,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::ReciOnly, EvalMode::LmOnly, EvalMode::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::ReciOnly => "reci_only",
            EvalMode::LmOnly => "lm_only",
            EvalMode::Combined => "combined",
        }
    }

    fn needs_lm(self) -> bool {
        self != EvalMode::ReciOnly
    }
}

impl FromStr for EvalMode {
    type Err = CausalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CausalError::Usage(format!("unknown mode {s:?} (reci_only | lm_only | combined)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair_id: String,
    pub lm_log_ratio: Option<f64>,
    pub rho: Option<f64>,
    pub combined: f64,
    pub verdict: Direction,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvalMode,
    pub accuracy: f64,
    pub n_pairs: usize,
    pub n_correct: usize,
    pub pairs: Vec<PairResult>,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub rule: CombineRule,
    pub degree: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { rule: CombineRule::LogOdds, degree: reci::DEFAULT_DEGREE }
    }
}

fn wrap(pair_id: &str, e: CausalError) -> CausalError {
    CausalError::Pair { pair_id: pair_id.to_string(), source: Box::new(e) }
}

/// Scores every pair in `ds` under `mode`. `reci_only` never touches the
/// backend, so `client` may be `None` for it.
pub fn evaluate_dataset(
    ds: &PairDataset,
    mode: EvalMode,
    ctx: &TaskContext,
    client: Option<&LmClient>,
    opts: &EvalOptions,
) -> Result<EvaluationReport, CausalError> {
    if let Some(p) = ds.pairs.iter().find(|p| p.ground_truth.is_none()) {
        return Err(CausalError::MissingLabel(p.pair_id.clone()));
    }
    let client = match (mode.needs_lm(), client) {
        (true, None) => return Err(CausalError::Usage(format!("mode {} needs a backend", mode.as_str()))),
        (_, c) => c,
    };

    let pairs: Vec<PairResult> = ds
        .pairs
        .par_iter()
        .map(|pair| {
            let rho = match mode {
                EvalMode::LmOnly => None,
                _ => {
                    let (x, y) = pair.columns();
                    Some(reci_coefficient_with_degree(&x, &y, opts.degree).map_err(|e| wrap(&pair.pair_id, e))?)
                }
            };
            let lm = match (mode.needs_lm(), client) {
                (true, Some(c)) => Some(lm_direction_log_ratio(pair, ctx, c).map_err(|e| wrap(&pair.pair_id, e))?.log_ratio),
                _ => None,
            };
            let ev = combine_with(lm.unwrap_or(0.0), rho.unwrap_or(0.0), opts.rule);
            let truth = pair.ground_truth.expect("checked above");
            Ok(PairResult {
                pair_id: pair.pair_id.clone(),
                lm_log_ratio: lm,
                rho,
                combined: ev.combined,
                verdict: ev.verdict,
                correct: ev.verdict == truth,
            })
        })
        .collect::<Result<_, CausalError>>()?;

    let n_correct = pairs.iter().filter(|p| p.correct).count();
    let n_pairs = pairs.len();
    Ok(EvaluationReport {
        mode,
        accuracy: if n_pairs == 0 { 0.0 } else { n_correct as f64 / n_pairs as f64 },
        n_pairs,
        n_correct,
        pairs,
    })
}
