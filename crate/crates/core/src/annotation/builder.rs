use super::{
    heuristic::tokenize, validate, AnnotatedContext, DepTree, EntityLabel, EntitySpan, Sentence, SrlArg, SrlFrame,
    SrlRole,
};
use crate::{Error, Result};

/// Hand-assembles an [`AnnotatedContext`] by surface strings rather than
/// token indices. Spans are located inside a given sentence.
#[derive(Debug, Clone)]
pub struct ContextBuilder {
    ctx: AnnotatedContext,
    problems: Vec<String>,
}

impl ContextBuilder {
    /// Tokenize and sentence-split `text`; no entities, trees or frames.
    pub fn new(id: &str, text: &str) -> Self {
        let mut ctx = super::heuristic_annotate(id, text).unwrap_or_else(|_| AnnotatedContext {
            id: id.to_string(),
            text: text.to_string(),
            tokens: Vec::new(),
            sentences: Vec::new(),
            entities: Vec::new(),
            dep: Vec::new(),
            srl: Vec::new(),
        });
        ctx.entities.clear();
        ContextBuilder {
            ctx,
            problems: Vec::new(),
        }
    }

    /// Keep the heuristic entities instead of starting empty.
    pub fn heuristic(id: &str, text: &str) -> Self {
        let mut b = Self::new(id, text);
        if let Ok(ctx) = super::heuristic_annotate(id, text) {
            b.ctx.entities = ctx.entities;
        }
        b
    }

    fn find(&mut self, sentence: usize, surface: &str) -> Option<(usize, usize)> {
        let Some(sent) = self.ctx.sentences.get(sentence).copied() else {
            self.problems.push(format!("no sentence {sentence}"));
            return None;
        };
        let needle: Vec<String> = tokenize(surface).into_iter().map(|t| t.text).collect();
        let hay = &self.ctx.tokens[sent.start_tok..sent.end_tok];
        let found = (0..hay.len().saturating_sub(needle.len()) + 1)
            .find(|&i| !needle.is_empty() && hay[i..i + needle.len()].iter().zip(&needle).all(|(t, n)| &t.text == n));
        match found {
            Some(i) => Some((sent.start_tok + i, sent.start_tok + i + needle.len())),
            None => {
                self.problems
                    .push(format!("`{surface}` not found in sentence {sentence}"));
                None
            }
        }
    }

    pub fn entity(mut self, sentence: usize, surface: &str, label: EntityLabel) -> Self {
        if let Some((start_tok, end_tok)) = self.find(sentence, surface) {
            self.ctx.entities.push(EntitySpan {
                start_tok,
                end_tok,
                label,
            });
            self.ctx.entities.sort_by_key(|e| (e.start_tok, e.end_tok));
        }
        self
    }

    /// Sentence-local heads, `-1` for the root.
    pub fn dep(mut self, sentence: usize, heads: &[i64]) -> Self {
        let n = self.ctx.sentences.len();
        if self.ctx.dep.len() != n {
            self.ctx.dep = vec![None; n];
        }
        if sentence < n {
            self.ctx.dep[sentence] = Some(DepTree {
                head: heads.iter().map(|&h| (h >= 0).then_some(h as usize)).collect(),
                rel: vec!["dep".to_string(); heads.len()],
            });
        }
        self
    }

    pub fn frame(mut self, sentence: usize, predicate: &str, args: &[(SrlRole, &str)]) -> Self {
        let Some((pred, _)) = self.find(sentence, predicate) else {
            return self;
        };
        let mut frame = SrlFrame { pred, args: Vec::new() };
        for &(role, surface) in args {
            if let Some((start_tok, end_tok)) = self.find(sentence, surface) {
                frame.args.push(SrlArg {
                    role,
                    start_tok,
                    end_tok,
                });
            }
        }
        self.ctx.srl.push(frame);
        self
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.ctx.sentences
    }

    pub fn build(self) -> Result<AnnotatedContext> {
        let mut problems = self.problems;
        problems.extend(validate(&self.ctx).into_iter().map(|v| v.to_string()));
        if problems.is_empty() {
            Ok(self.ctx)
        } else {
            Err(Error::Validation(format!(
                "context `{}`: {}",
                self.ctx.id,
                problems.join("; ")
            )))
        }
    }
}
