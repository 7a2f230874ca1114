//! Prompt templates: a task description, a block of worked examples with
//! explanations, and a final query stanza with `{PLACEHOLDER}` slots.
//!
//! Templates are plain UTF-8 files. The built-in set is compiled in from
//! `templates/`; a directory with files of the same names overrides it
//! file by file.

mod template;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::Prompt;
pub use template::{Segment, Template};

pub const PH_NAME: &str = "NAME";
pub const PH_DESCRIPTION: &str = "DESCRIPTION";
pub const PH_VAR_A_NAME: &str = "VAR_A_NAME";
pub const PH_VAR_A_DESC: &str = "VAR_A_DESC";
pub const PH_VAR_B_NAME: &str = "VAR_B_NAME";
pub const PH_VAR_B_DESC: &str = "VAR_B_DESC";
pub const PH_CONTEXT: &str = "CONTEXT";
pub const PH_DISTANCE: &str = "DISTANCE";

/// Distance phrases accepted by the navigation-judgment template, indexed
/// by distance category.
pub const DISTANCE_PHRASES: [&str; 4] = ["in", "close to", "neither close nor far from", "far from"];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("variable name is empty")]
    EmptyName,
    #[error("variable {0:?} has an empty description")]
    EmptyDescription(String),
    #[error("{field} contains a line break: {value:?}")]
    LineBreak { field: &'static str, value: String },
    #[error("placeholder {{{0}}} left unsubstituted")]
    Unsubstituted(String),
    #[error("template {id} is for {actual:?} tasks, not {expected:?}")]
    WrongTaskKind { id: String, expected: TaskKind, actual: TaskKind },
    #[error("template {id}: {message}")]
    Malformed { id: String, message: String },
    #[error("distance phrase {0:?} is not one of in / close to / neither close nor far from / far from")]
    UnknownDistance(String),
    #[error("rendered text does not match template {0}")]
    NoMatch(String),
    #[error("template file {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    FeatureSelection,
    Causal,
    RlJudgment,
}

impl TaskKind {
    fn answer_count(self) -> usize {
        match self {
            TaskKind::FeatureSelection | TaskKind::Causal => 2,
            TaskKind::RlJudgment => 3,
        }
    }
}

/// A variable's name and free-text description.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    /// `None` only when built with [`VariableMeta::name_only`]; the
    /// description line is then left out of the rendered stanza.
    pub description: Option<String>,
}

impl VariableMeta {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Result<Self, PromptError> {
        let name = check_field("name", name.into())?;
        let description = description.into();
        if description.is_empty() {
            return Err(PromptError::EmptyDescription(name));
        }
        let description = check_field("description", description)?;
        Ok(VariableMeta { name, description: Some(description) })
    }

    pub fn name_only(name: impl Into<String>) -> Result<Self, PromptError> {
        Ok(VariableMeta { name: check_field("name", name.into())?, description: None })
    }
}

fn check_field(field: &'static str, value: String) -> Result<String, PromptError> {
    if field == "name" && value.is_empty() {
        return Err(PromptError::EmptyName);
    }
    if value.contains('\n') || value.contains('\r') {
        return Err(PromptError::LineBreak { field, value });
    }
    Ok(value)
}

/// A parsed template: header, few-shot block and query stanza.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskContext {
    pub id: String,
    pub task_kind: TaskKind,
    /// Task description, up to and including the first blank line.
    pub context_sentence: String,
    /// Worked examples, verbatim.
    pub few_shot_block: String,
    pub query: Template,
    /// Answer candidates. For causal templates these are themselves
    /// templates over the variable names (`" {VAR_A_NAME} -> {VAR_B_NAME}"`).
    pub answer_tokens: Vec<String>,
}

impl TaskContext {
    /// Splits `text` into header (through the first blank line), query
    /// stanza (after the last `--` separator line, or after the last blank
    /// line when there are none) and the examples in between.
    pub fn parse(id: &str, task_kind: TaskKind, text: &str, answer_tokens: Vec<String>) -> Result<Self, PromptError> {
        let malformed = |message: &str| PromptError::Malformed { id: id.to_string(), message: message.to_string() };
        if answer_tokens.len() != task_kind.answer_count() {
            return Err(malformed(&format!(
                "{:?} templates take {} answer tokens, got {}",
                task_kind,
                task_kind.answer_count(),
                answer_tokens.len()
            )));
        }
        let header_end = text.find("\n\n").map(|i| i + 2).ok_or_else(|| malformed("no task description paragraph"))?;
        let query_start = match text.rfind("\n--\n") {
            Some(i) if i + 4 > header_end => i + 4,
            _ => text.rfind("\n\n").map(|i| i + 2).filter(|&i| i > header_end).unwrap_or(header_end),
        };
        let context_sentence = &text[..header_end];
        let few_shot_block = &text[header_end..query_start];
        let query = Template::parse(&text[query_start..]);
        for (part, name) in [(context_sentence, "task description"), (few_shot_block, "examples")] {
            if let Some(ph) = Template::parse(part).placeholders().next() {
                return Err(malformed(&format!("placeholder {{{ph}}} outside the query stanza ({name})")));
            }
        }
        if query.placeholders().next().is_none() {
            return Err(malformed("query stanza has no placeholders"));
        }
        Ok(TaskContext {
            id: id.to_string(),
            task_kind,
            context_sentence: context_sentence.to_string(),
            few_shot_block: few_shot_block.to_string(),
            query,
            answer_tokens,
        })
    }

    pub fn builtin(which: Builtin) -> Self {
        let (kind, text, answers) = which.source();
        TaskContext::parse(which.id(), kind, text, answers.iter().map(|s| s.to_string()).collect())
            .expect("built-in templates parse")
    }

    pub fn prefix(&self) -> String {
        format!("{}{}", self.context_sentence, self.few_shot_block)
    }

    fn expect_kind(&self, expected: TaskKind) -> Result<(), PromptError> {
        if self.task_kind != expected {
            return Err(PromptError::WrongTaskKind { id: self.id.clone(), expected, actual: self.task_kind });
        }
        Ok(())
    }

    fn render(&self, values: &BTreeMap<&str, Option<&str>>) -> Result<Prompt, PromptError> {
        let stanza = self.query.render(values)?;
        Prompt::new(format!("{}{}", self.prefix(), stanza))
            .map_err(|_| PromptError::Malformed { id: self.id.clone(), message: "empty render".into() })
    }

    /// Recovers the placeholder values from a prompt rendered with this
    /// template.
    pub fn extract(&self, rendered: &str) -> Result<BTreeMap<String, String>, PromptError> {
        let prefix = self.prefix();
        let stanza = rendered.strip_prefix(prefix.as_str()).ok_or_else(|| PromptError::NoMatch(self.id.clone()))?;
        self.query.extract(stanza).ok_or_else(|| PromptError::NoMatch(self.id.clone()))
    }
}

/// The four compiled-in templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// Breast-cancer feature selection, Y/N answers.
    FeatureSelection,
    /// Census commute-time feature selection, T/F answers.
    Census,
    Causal,
    Rl,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [Builtin::FeatureSelection, Builtin::Census, Builtin::Causal, Builtin::Rl];

    pub fn id(self) -> &'static str {
        match self {
            Builtin::FeatureSelection => "feature_selection",
            Builtin::Census => "census",
            Builtin::Causal => "causal",
            Builtin::Rl => "rl",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.id() == id)
    }

    fn source(self) -> (TaskKind, &'static str, &'static [&'static str]) {
        match self {
            Builtin::FeatureSelection => (
                TaskKind::FeatureSelection,
                include_str!("../../templates/feature_selection.txt"),
                &[" Y", " N"],
            ),
            Builtin::Census => (TaskKind::FeatureSelection, include_str!("../../templates/census.txt"), &[" T", " F"]),
            Builtin::Causal => (
                TaskKind::Causal,
                include_str!("../../templates/causal.txt"),
                &[" {VAR_A_NAME} -> {VAR_B_NAME}", " {VAR_B_NAME} -> {VAR_A_NAME}"],
            ),
            Builtin::Rl => (TaskKind::RlJudgment, include_str!("../../templates/rl.txt"), &[" Good", " Neutral", " Bad"]),
        }
    }

    pub fn task_kind(self) -> TaskKind {
        self.source().0
    }
}

/// Loads template `id` from `dir/{id}.txt`, with answer tokens from an
/// optional `dir/{id}.answers.json` (a JSON array of strings). Missing files
/// fall back to the built-in template of the same id.
pub fn load_template(dir: Option<&Path>, id: &str, kind: TaskKind) -> Result<TaskContext, PromptError> {
    let builtin = Builtin::from_id(id);
    let file = dir.map(|d| d.join(format!("{id}.txt"))).filter(|p| p.is_file());
    let Some(path) = file else {
        let b = builtin.ok_or_else(|| PromptError::Io {
            path: dir.map(|d| d.join(format!("{id}.txt"))).unwrap_or_else(|| PathBuf::from(format!("{id}.txt"))),
            message: "no such template".into(),
        })?;
        let ctx = TaskContext::builtin(b);
        ctx.expect_kind(kind)?;
        return Ok(ctx);
    };
    let io = |path: &Path, e: &dyn std::fmt::Display| PromptError::Io { path: path.to_path_buf(), message: e.to_string() };
    let text = std::fs::read_to_string(&path).map_err(|e| io(&path, &e))?;
    let answers_path = path.with_extension("answers.json");
    let answers: Vec<String> = if answers_path.is_file() {
        let raw = std::fs::read_to_string(&answers_path).map_err(|e| io(&answers_path, &e))?;
        serde_json::from_str(&raw).map_err(|e| io(&answers_path, &e))?
    } else if let Some(b) = builtin {
        b.source().2.iter().map(|s| s.to_string()).collect()
    } else {
        return Err(io(&answers_path, &"custom template needs an answers file"));
    };
    TaskContext::parse(id, kind, &text, answers)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedPrompt {
    pub prompt: Prompt,
    pub answer_tokens: Vec<String>,
}

pub fn render_feature_prompt(ctx: &TaskContext, v: &VariableMeta) -> Result<RenderedPrompt, PromptError> {
    ctx.expect_kind(TaskKind::FeatureSelection)?;
    check_field("name", v.name.clone())?;
    let values = BTreeMap::from([(PH_NAME, Some(v.name.as_str())), (PH_DESCRIPTION, v.description.as_deref())]);
    Ok(RenderedPrompt { prompt: ctx.render(&values)?, answer_tokens: ctx.answer_tokens.clone() })
}

/// Inverse of [`render_feature_prompt`].
pub fn extract_feature_variable(ctx: &TaskContext, rendered: &str) -> Result<VariableMeta, PromptError> {
    let mut values = ctx.extract(rendered)?;
    let name = values.remove(PH_NAME).ok_or_else(|| PromptError::NoMatch(ctx.id.clone()))?;
    Ok(VariableMeta { name, description: values.remove(PH_DESCRIPTION) })
}

pub fn render_causal_prompt(
    ctx: &TaskContext,
    a: &VariableMeta,
    b: &VariableMeta,
    brief_context: &str,
) -> Result<RenderedPrompt, PromptError> {
    ctx.expect_kind(TaskKind::Causal)?;
    check_field("name", a.name.clone())?;
    check_field("name", b.name.clone())?;
    let brief_context = check_field("context", brief_context.to_string())?;
    let values = BTreeMap::from([
        (PH_VAR_A_NAME, Some(a.name.as_str())),
        (PH_VAR_A_DESC, a.description.as_deref()),
        (PH_VAR_B_NAME, Some(b.name.as_str())),
        (PH_VAR_B_DESC, b.description.as_deref()),
        (PH_CONTEXT, Some(brief_context.as_str())),
    ]);
    let answer_tokens = ctx
        .answer_tokens
        .iter()
        .map(|t| Template::parse(t).render(&values))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RenderedPrompt { prompt: ctx.render(&values)?, answer_tokens })
}

pub fn render_rl_prompt(distance_phrase: &str) -> Result<RenderedPrompt, PromptError> {
    render_rl_prompt_with(&TaskContext::builtin(Builtin::Rl), distance_phrase)
}

pub fn render_rl_prompt_with(ctx: &TaskContext, distance_phrase: &str) -> Result<RenderedPrompt, PromptError> {
    ctx.expect_kind(TaskKind::RlJudgment)?;
    if !DISTANCE_PHRASES.contains(&distance_phrase) {
        return Err(PromptError::UnknownDistance(distance_phrase.to_string()));
    }
    let values = BTreeMap::from([(PH_DISTANCE, Some(distance_phrase))]);
    Ok(RenderedPrompt { prompt: ctx.render(&values)?, answer_tokens: ctx.answer_tokens.clone() })
}
