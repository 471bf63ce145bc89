//! Self-supervised question/answer pair generation.
//!
//! Four generator families work off an [`AnnotatedContext`]: clozes (raw and
//! wh-translated), fragment templates, dependency-tree reconstruction and
//! QA-SRL role templates. [`assemble_training_set`] merges their output into
//! one capped, deduplicated and ordered training set.

mod cloze;
mod depparse;
mod srl;
mod template;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotatedContext;
use crate::{Error, Result};

pub use cloze::{generate_clozes, translate_cloze_rule, ClozeQuestion};
pub use depparse::{depparse_question, generate_depparse_questions};
pub use srl::generate_qasrl_questions;
pub use template::generate_template_questions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Cloze,
    ClozeTranslated,
    Template,
    DepParse,
    QaSrl,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Cloze,
        Method::ClozeTranslated,
        Method::Template,
        Method::DepParse,
        Method::QaSrl,
    ];

    /// Raw clozes are off unless asked for.
    pub const DEFAULT: [Method; 4] = [
        Method::ClozeTranslated,
        Method::Template,
        Method::DepParse,
        Method::QaSrl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cloze => "CLOZE",
            Method::ClozeTranslated => "CLOZE_TRANSLATED",
            Method::Template => "TEMPLATE",
            Method::DepParse => "DEP_PARSE",
            Method::QaSrl => "QA_SRL",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "cloze" => Ok(Method::Cloze),
            "cloze_translated" | "ct" => Ok(Method::ClozeTranslated),
            "template" | "t" => Ok(Method::Template),
            "dep_parse" | "depparse" | "dp" => Ok(Method::DepParse),
            "qa_srl" | "qasrl" | "srl" => Ok(Method::QaSrl),
            _ => Err(Error::Config(format!("unknown generation method `{s}`"))),
        }
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// A generated training pair `(question, answer span)` over one context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticQa {
    pub context_id: String,
    pub method: Method,
    pub question: String,
    pub answer_text: String,
    pub start_char: usize,
    pub end_char: usize,
}

impl SyntheticQa {
    pub(crate) fn from_tokens(
        ctx: &AnnotatedContext,
        method: Method,
        question: String,
        start_tok: usize,
        end_tok: usize,
    ) -> Self {
        let (start_char, end_char) = ctx.char_span(start_tok, end_tok);
        SyntheticQa {
            context_id: ctx.id.clone(),
            method,
            question,
            answer_text: ctx.slice_chars(start_char, end_char).to_string(),
            start_char,
            end_char,
        }
    }
}

/// Presentation order of the pooled pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum QaOrder {
    #[default]
    Shuffled,
    /// Method blocks, easiest first.
    Curriculum(Vec<Method>),
}

impl QaOrder {
    /// The orderings compared in the curriculum study.
    pub fn table() -> Vec<QaOrder> {
        use Method::*;
        vec![
            QaOrder::Shuffled,
            QaOrder::Curriculum(vec![QaSrl, Template, DepParse]),
            QaOrder::Curriculum(vec![Template, QaSrl, DepParse]),
            QaOrder::Curriculum(vec![Template, DepParse, QaSrl]),
        ]
    }

    fn check(&self) -> Result<()> {
        if let QaOrder::Curriculum(methods) = self {
            if methods.is_empty() {
                return Err(Error::Config("empty curriculum".into()));
            }
            let unique: HashSet<_> = methods.iter().collect();
            if unique.len() != methods.len() {
                return Err(Error::Config("curriculum lists a method twice".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for QaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QaOrder::Shuffled => f.write_str("random"),
            QaOrder::Curriculum(ms) => {
                let names: Vec<_> = ms.iter().map(|m| m.name()).collect();
                f.write_str(&names.join(">"))
            }
        }
    }
}

impl FromStr for QaOrder {
    type Err = Error;

    /// `random` (or `shuffled`), or methods separated by `>`, e.g.
    /// `qa_srl>template>dep_parse`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if matches!(t.as_str(), "random" | "shuffled" | "random_shuffled") {
            return Ok(QaOrder::Shuffled);
        }
        let order = QaOrder::Curriculum(t.split('>').map(str::parse).collect::<Result<_>>()?);
        order.check()?;
        Ok(order)
    }
}

impl Serialize for QaOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QaOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyConfig {
    pub methods: Vec<Method>,
    /// Global cap on the returned set.
    pub cap: usize,
    /// Per-method block size under a curriculum.
    pub per_method_quota: usize,
    pub order: QaOrder,
    pub seed: u64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            methods: Method::DEFAULT.to_vec(),
            cap: 4000,
            per_method_quota: 1000,
            order: QaOrder::Shuffled,
            seed: 0,
        }
    }
}

/// Run the requested generators over one context, deduplicating on
/// `(question, answer span)`. The first method to produce a pair keeps it.
pub fn generate(ctx: &AnnotatedContext, methods: &[Method]) -> Vec<SyntheticQa> {
    let mut wanted: Vec<Method> = methods.to_vec();
    wanted.sort_unstable();
    wanted.dedup();

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for method in wanted {
        let batch = match method {
            Method::Cloze => generate_clozes(ctx).iter().map(|c| c.to_synthetic(ctx)).collect(),
            Method::ClozeTranslated => generate_clozes(ctx)
                .iter()
                .map(|c| translate_cloze_rule(ctx, c))
                .collect(),
            Method::Template => generate_template_questions(ctx),
            Method::DepParse => generate_depparse_questions(ctx),
            Method::QaSrl => generate_qasrl_questions(ctx),
        };
        for qa in batch {
            if seen.insert((qa.question.clone(), qa.start_char, qa.end_char)) {
                out.push(qa);
            }
        }
    }
    out
}

/// Training set for a single context.
pub fn assemble_training_set(ctx: &AnnotatedContext, cfg: &AssemblyConfig) -> Result<Vec<SyntheticQa>> {
    assemble_pooled(&[ctx], cfg)
}

/// Training set pooled over several contexts. Deduplication is per context;
/// ordering and caps apply to the pool.
pub fn assemble_pooled(contexts: &[&AnnotatedContext], cfg: &AssemblyConfig) -> Result<Vec<SyntheticQa>> {
    if cfg.cap == 0 {
        return Err(Error::Config("qa cap must be at least 1".into()));
    }
    cfg.order.check()?;
    let methods = match &cfg.order {
        QaOrder::Shuffled => cfg.methods.clone(),
        QaOrder::Curriculum(blocks) => blocks.clone(),
    };
    let pool: Vec<SyntheticQa> = contexts.iter().flat_map(|ctx| generate(ctx, &methods)).collect();
    if pool.is_empty() {
        let id = contexts.first().map_or_else(String::new, |c| c.id.clone());
        return Err(Error::NoTrainablePairs(id));
    }
    arrange(pool, cfg)
}

/// Order an already generated pool and apply the quota and cap. Under a
/// curriculum, methods outside the block list are dropped.
pub fn arrange(pool: Vec<SyntheticQa>, cfg: &AssemblyConfig) -> Result<Vec<SyntheticQa>> {
    if cfg.cap == 0 {
        return Err(Error::Config("qa cap must be at least 1".into()));
    }
    cfg.order.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = match &cfg.order {
        QaOrder::Shuffled => {
            let mut pool = pool;
            pool.shuffle(&mut rng);
            pool
        }
        QaOrder::Curriculum(blocks) => {
            let mut out = Vec::new();
            for &method in blocks {
                let mut block: Vec<SyntheticQa> = pool.iter().filter(|qa| qa.method == method).cloned().collect();
                block.shuffle(&mut rng);
                block.truncate(cfg.per_method_quota);
                out.extend(block);
            }
            out
        }
    };
    out.truncate(cfg.cap);
    Ok(out)
}

/// One JSON object per line with the pair fields.
pub fn write_pairs(path: impl AsRef<Path>, pairs: &[SyntheticQa]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for qa in pairs {
        let line = serde_json::to_string(qa).expect("pair serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<SyntheticQa>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            at: format!("line {}", i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub(crate) fn is_punct(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// Drop punctuation-only tokens from both ends.
pub(crate) fn trim_punct(tokens: &[String]) -> &[String] {
    let start = tokens.iter().position(|t| !is_punct(t)).unwrap_or(tokens.len());
    let end = tokens.iter().rposition(|t| !is_punct(t)).map_or(start, |e| e + 1);
    &tokens[start..end.max(start)]
}
