//! Exact-match and token-F1 scoring with the usual answer normalization.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::annotation::Corpus;
use crate::{Error, Result};

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"));

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the as whole
/// words, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn check_golds<S: AsRef<str>>(golds: &[S]) -> Result<()> {
    if golds.is_empty() {
        Err(Error::NoGoldAnswers)
    } else {
        Ok(())
    }
}

/// 1.0 if the normalized prediction equals some normalized gold, else 0.0.
pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S]) -> Result<f64> {
    check_golds(golds)?;
    let p = normalize_answer(pred);
    Ok(if golds.iter().any(|g| normalize_answer(g.as_ref()) == p) {
        1.0
    } else {
        0.0
    })
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    match (pt.is_empty(), gt.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pt.len() as f64;
    let recall = same as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best multiset token F1 against any gold answer.
pub fn f1<S: AsRef<str>>(pred: &str, golds: &[S]) -> Result<f64> {
    check_golds(golds)?;
    Ok(golds.iter().map(|g| token_f1(pred, g.as_ref())).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question_id: String,
    pub context_id: String,
    pub prediction: String,
    pub exact_match: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    /// Fractions in `[0, 1]`.
    pub exact_match: f64,
    pub f1: f64,
}

impl Aggregate {
    pub fn of<'a>(scores: impl IntoIterator<Item = &'a QuestionScore>) -> Self {
        let mut a = Aggregate::default();
        for s in scores {
            a.count += 1;
            a.exact_match += s.exact_match;
            a.f1 += s.f1;
        }
        if a.count > 0 {
            a.exact_match /= a.count as f64;
            a.f1 /= a.count as f64;
        }
        a
    }

    pub fn em_percent(&self) -> f64 {
        100.0 * self.exact_match
    }

    pub fn f1_percent(&self) -> f64 {
        100.0 * self.f1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub questions: Vec<QuestionScore>,
    /// Unweighted mean over all questions.
    pub overall: Aggregate,
    pub by_context: BTreeMap<String, Aggregate>,
}

impl EvalReport {
    pub fn from_scores(questions: Vec<QuestionScore>) -> Self {
        let overall = Aggregate::of(&questions);
        let mut groups: BTreeMap<String, Vec<&QuestionScore>> = BTreeMap::new();
        for q in &questions {
            groups.entry(q.context_id.clone()).or_default().push(q);
        }
        let by_context = groups.into_iter().map(|(id, qs)| (id, Aggregate::of(qs))).collect();
        EvalReport {
            questions,
            overall,
            by_context,
        }
    }

    /// Plain-text table: one row per context, then the macro totals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let width = self.by_context.keys().map(String::len).max().unwrap_or(0).max(7);
        writeln!(out, "{:<width$}  {:>5}  {:>7}  {:>7}", "context", "n", "EM", "F1").unwrap();
        for (id, a) in &self.by_context {
            writeln!(
                out,
                "{id:<width$}  {:>5}  {:>7.2}  {:>7.2}",
                a.count,
                a.em_percent(),
                a.f1_percent()
            )
            .unwrap();
        }
        let a = &self.overall;
        writeln!(
            out,
            "{:<width$}  {:>5}  {:>7.2}  {:>7.2}",
            "ALL",
            a.count,
            a.em_percent(),
            a.f1_percent()
        )
        .unwrap();
        out
    }
}

/// Score one prediction per question of `corpus`. Missing or unknown ids are
/// an error naming them.
pub fn evaluate(predictions: &BTreeMap<String, String>, corpus: &Corpus) -> Result<EvalReport> {
    let known: HashMap<&str, ()> = corpus.questions.iter().map(|q| (q.id.as_str(), ())).collect();
    let missing: Vec<&str> = corpus
        .questions
        .iter()
        .filter(|q| !predictions.contains_key(&q.id))
        .map(|q| q.id.as_str())
        .collect();
    let unknown: Vec<&str> = predictions
        .keys()
        .filter(|id| !known.contains_key(id.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("no prediction for {}", missing.join(", ")));
        }
        if !unknown.is_empty() {
            parts.push(format!("unknown question ids {}", unknown.join(", ")));
        }
        return Err(Error::PredictionMismatch(parts.join("; ")));
    }
    if corpus.questions.is_empty() {
        return Err(Error::PredictionMismatch("no questions to score".into()));
    }
    let mut scores = Vec::with_capacity(corpus.questions.len());
    for q in &corpus.questions {
        let pred = &predictions[&q.id];
        let golds: Vec<&str> = q.answers.iter().map(|a| a.text.as_str()).collect();
        let err = |e: Error| match e {
            Error::NoGoldAnswers => Error::Validation(format!("question `{}` has no gold answers", q.id)),
            other => other,
        };
        scores.push(QuestionScore {
            question_id: q.id.clone(),
            context_id: q.context_id.clone(),
            prediction: pred.clone(),
            exact_match: exact_match(pred, &golds).map_err(err)?,
            f1: f1(pred, &golds).map_err(err)?,
        });
    }
    Ok(EvalReport::from_scores(scores))
}

/// A JSON object mapping question id to predicted answer text.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        at: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn save_predictions(path: impl AsRef<Path>, predictions: &BTreeMap<String, String>) -> Result<()> {
    let path = path.as_ref();
    let raw = serde_json::to_string_pretty(predictions).expect("map serializes");
    fs::write(path, raw).map_err(|e| Error::io(path, e))
}
