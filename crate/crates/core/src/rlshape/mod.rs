//! Gridworld reward shaping from judgment distributions.
//!
//! Each cell's distance to the nearest water cell falls into one of four
//! categories (0, 1, 2, 3+). A judgment prompt per category yields a
//! distribution over `Good / Neutral / Bad`; the bonus is `p(Good) - p(Bad)`
//! after renormalizing over those three tokens. The bonuses shape a tabular
//! Q-learning agent either additively or as a potential function.

mod agent;
mod grid;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{shortest_path_len, train_q_learning, QParams, QTable, TrainingRun, TrainingStats};
pub use grid::{render_layout, Action, Cell, DistanceMetric, Gridworld, Outcome, State, Step, ISLAND_NAVIGATION_MAP};

use crate::lm::{LmClient, LmError};
use crate::prompts::{render_rl_prompt_with, Builtin, PromptError, TaskContext, DISTANCE_PHRASES};

/// Number of next tokens requested when eliciting a bonus.
pub const BONUS_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("map is empty")]
    EmptyMap,
    #[error("map row {row} has {got} cells, expected {expected}")]
    RaggedMap { row: usize, expected: usize, got: usize },
    #[error("unknown map glyph {glyph:?} at row {row}, column {col}")]
    UnknownGlyph { glyph: char, row: usize, col: usize },
    #[error("map must have exactly one goal, found {0}")]
    GoalCount(usize),
    #[error("map has no start cell")]
    NoStart,
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    InvalidParam(String),
    #[error("shaping table: {0}")]
    BadTable(String),
    #[error("none of the judgment tokens {tokens:?} appear in the top-{top_k} distribution for distance {distance}")]
    NoJudgmentTokens { distance: usize, tokens: Vec<String>, top_k: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// Bonus per distance category `[0, 1, 2, 3+]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ShapingTable {
    bonus: [f64; 4],
}

impl ShapingTable {
    /// Bonuses reported for the four distance categories.
    pub const PINNED: ShapingTable = ShapingTable { bonus: [-1.0, -0.3, 0.6, 0.95] };

    pub fn new(bonus: [f64; 4]) -> Result<Self, RlError> {
        if let Some(v) = bonus.iter().find(|v| !v.is_finite()) {
            return Err(RlError::BadTable(format!("non-finite bonus {v}")));
        }
        Ok(ShapingTable { bonus })
    }

    pub fn bonus(&self, category: usize) -> f64 {
        self.bonus[category.min(3)]
    }

    pub fn values(&self) -> [f64; 4] {
        self.bonus
    }
}

impl TryFrom<Vec<f64>> for ShapingTable {
    type Error = RlError;
    fn try_from(v: Vec<f64>) -> Result<Self, RlError> {
        let arr: [f64; 4] =
            v.try_into().map_err(|v: Vec<f64>| RlError::BadTable(format!("expected 4 bonuses, got {}", v.len())))?;
        ShapingTable::new(arr)
    }
}

impl From<ShapingTable> for Vec<f64> {
    fn from(t: ShapingTable) -> Self {
        t.bonus.to_vec()
    }
}

/// Parses `"-1,-0.3,0.6,0.95"`; the Unicode minus sign is accepted.
impl FromStr for ShapingTable {
    type Err = RlError;
    fn from_str(s: &str) -> Result<Self, RlError> {
        s.split(',')
            .map(|f| {
                let f = f.trim().replace('\u{2212}', "-");
                f.parse::<f64>().map_err(|_| RlError::BadTable(format!("bad bonus {f:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?
            .try_into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapingMode {
    #[default]
    Additive,
    Potential,
}

impl fmt::Display for ShapingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapingMode::Additive => "additive",
            ShapingMode::Potential => "potential",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shaping {
    pub table: ShapingTable,
    pub mode: ShapingMode,
}

/// `Phi(s)`: the bonus of `s`'s distance category.
pub fn potential(world: &Gridworld, s: State, table: &ShapingTable) -> f64 {
    table.bonus(world.distance_category(s))
}

/// Shaping added to the environment reward of the transition `s -> next`:
/// `table[dist(next)]` (additive) or `gamma * Phi(next) - Phi(s)`
/// (potential). Terminal states keep their potential.
pub fn shaping_term(world: &Gridworld, s: State, next: State, shaping: &Shaping) -> f64 {
    match shaping.mode {
        ShapingMode::Additive => potential(world, next, &shaping.table),
        ShapingMode::Potential => {
            world.gamma * potential(world, next, &shaping.table) - potential(world, s, &shaping.table)
        }
    }
}

pub fn shaped_reward(world: &Gridworld, s: State, a: Action, shaping: &Shaping) -> f64 {
    let step = world.step(s, a);
    step.reward + shaping_term(world, s, step.next, shaping)
}

/// Judgment probabilities renormalized over the three answer tokens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgmentDistribution {
    pub p_good: f64,
    pub p_neutral: f64,
    pub p_bad: f64,
}

impl JudgmentDistribution {
    /// `None` when all three log-probabilities are absent.
    pub fn from_logprobs(good: Option<f64>, neutral: Option<f64>, bad: Option<f64>) -> Option<Self> {
        let [g, n, b] = [good, neutral, bad].map(|lp| lp.map_or(0.0, f64::exp));
        let total = g + n + b;
        if (good.is_none() && neutral.is_none() && bad.is_none()) || total <= 0.0 {
            return None;
        }
        Some(JudgmentDistribution { p_good: g / total, p_neutral: n / total, p_bad: b / total })
    }

    pub fn bonus(&self) -> f64 {
        self.p_good - self.p_bad
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElicitedBonus {
    pub distance: usize,
    pub phrase: String,
    pub distribution: JudgmentDistribution,
    pub bonus: f64,
}

/// Queries the judgment prompt for `distance` (categories above 3 collapse
/// to "far from"). `ctx.answer_tokens` lists the good, neutral and bad
/// tokens in that order.
pub fn elicit_bonus_with(distance: usize, ctx: &TaskContext, client: &LmClient) -> Result<ElicitedBonus, RlError> {
    let category = distance.min(3);
    let phrase = DISTANCE_PHRASES[category];
    let rendered = render_rl_prompt_with(ctx, phrase)?;
    if rendered.answer_tokens.len() != 3 {
        return Err(RlError::InvalidParam(format!(
            "judgment template needs 3 answer tokens, has {}",
            rendered.answer_tokens.len()
        )));
    }
    let top_k = BONUS_TOP_K.min(client.max_top_k());
    let dist = client.next_token_distribution(&rendered.prompt, top_k)?;
    let lp = |i: usize| dist.get(&rendered.answer_tokens[i]);
    let distribution = JudgmentDistribution::from_logprobs(lp(0), lp(1), lp(2)).ok_or_else(|| {
        RlError::NoJudgmentTokens { distance: category, tokens: rendered.answer_tokens.clone(), top_k }
    })?;
    Ok(ElicitedBonus { distance: category, phrase: phrase.to_string(), distribution, bonus: distribution.bonus() })
}

pub fn elicit_bonus(distance: usize, client: &LmClient) -> Result<f64, RlError> {
    Ok(elicit_bonus_with(distance, &TaskContext::builtin(Builtin::Rl), client)?.bonus)
}

/// One judgment query per distance category.
pub fn elicit_table(ctx: &TaskContext, client: &LmClient) -> Result<(ShapingTable, Vec<ElicitedBonus>), RlError> {
    let elicited = (0..4).map(|d| elicit_bonus_with(d, ctx, client)).collect::<Result<Vec<_>, _>>()?;
    let table = ShapingTable::new([0, 1, 2, 3].map(|i| elicited[i].bonus))?;
    Ok((table, elicited))
}
