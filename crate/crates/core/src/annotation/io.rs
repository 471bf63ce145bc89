use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{char_slice, heuristic_annotate, validate, AnnotatedContext, Corpus, GoldAnswer, Question};
use crate::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_at<'de, T: Deserialize<'de>>(path: &Path, raw: &'de str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        at: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Parse and validate an interchange document already in memory.
pub fn parse_annotations(path: &Path, raw: &str) -> Result<Vec<AnnotatedContext>> {
    let contexts: Vec<AnnotatedContext> = parse_at(path, raw)?;
    let mut problems = Vec::new();
    for ctx in &contexts {
        for v in validate(ctx) {
            problems.push(format!("context `{}`: {v}", ctx.id));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(format!(
            "{}: {}",
            path.display(),
            problems.join("; ")
        )));
    }
    Ok(contexts)
}

/// Load an interchange file, verifying every context invariant.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotatedContext>> {
    let path = path.as_ref();
    parse_annotations(path, &read(path)?)
}

pub fn save_annotations(path: impl AsRef<Path>, contexts: &[AnnotatedContext]) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(contexts).expect("annotations serialize");
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct SquadFile {
    #[serde(default)]
    version: Option<String>,
    data: Vec<SquadArticle>,
}

#[derive(Serialize, Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Serialize, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Serialize, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Serialize, Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: i64,
}

/// Load a SQuAD v1.1 file. Each paragraph becomes one heuristically
/// annotated context with id `<article index>.<paragraph index>`.
pub fn load_squad_dataset(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = read(path)?;
    let file: SquadFile = parse_at(path, &raw)?;

    let mut corpus = Corpus::default();
    let mut bad = Vec::new();
    for (ai, article) in file.data.iter().enumerate() {
        for (pi, para) in article.paragraphs.iter().enumerate() {
            let id = format!("{ai}.{pi}");
            corpus.contexts.push(heuristic_annotate(&id, &para.context)?);
            for qa in &para.qas {
                let mut answers = Vec::with_capacity(qa.answers.len());
                for a in &qa.answers {
                    let len = a.text.chars().count();
                    let ok = a.answer_start >= 0
                        && char_slice(&para.context, a.answer_start as usize, a.answer_start as usize + len) == a.text;
                    if !ok {
                        bad.push(qa.id.clone());
                        continue;
                    }
                    answers.push(GoldAnswer {
                        text: a.text.clone(),
                        answer_start: a.answer_start as usize,
                    });
                }
                corpus.questions.push(Question {
                    id: qa.id.clone(),
                    context_id: id.clone(),
                    question: qa.question.clone(),
                    answers,
                });
            }
        }
    }
    if !bad.is_empty() {
        bad.dedup();
        return Err(Error::Validation(format!(
            "{}: answer_start does not point at the answer text for questions {}",
            path.display(),
            bad.join(", ")
        )));
    }
    Ok(corpus)
}

/// Render a corpus as a SQuAD v1.1 document. Contexts are grouped into
/// articles by the `<article>.` prefix of their ids when present.
pub fn squad_json(corpus: &Corpus, title: &str) -> serde_json::Value {
    let mut articles: Vec<SquadArticle> = Vec::new();
    let mut current: Option<String> = None;
    for ctx in &corpus.contexts {
        let group = ctx.id.split('.').next().unwrap_or("").to_string();
        if current.as_deref() != Some(group.as_str()) {
            articles.push(SquadArticle {
                title: format!("{title}_{}", articles.len()),
                paragraphs: Vec::new(),
            });
            current = Some(group);
        }
        let qas = corpus
            .questions_for(&ctx.id)
            .map(|q| SquadQa {
                id: q.id.clone(),
                question: q.question.clone(),
                answers: q
                    .answers
                    .iter()
                    .map(|a| SquadAnswer {
                        text: a.text.clone(),
                        answer_start: a.answer_start as i64,
                    })
                    .collect(),
            })
            .collect();
        articles
            .last_mut()
            .expect("article pushed above")
            .paragraphs
            .push(SquadParagraph {
                context: ctx.text.clone(),
                qas,
            });
    }
    serde_json::to_value(SquadFile {
        version: Some("1.1".into()),
        data: articles,
    })
    .expect("squad serializes")
}

pub fn write_squad_dataset(path: impl AsRef<Path>, corpus: &Corpus, title: &str) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(&squad_json(corpus, title)).expect("json");
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}
