use super::{is_punct, Method, SyntheticQa};
use crate::annotation::{AnnotatedContext, EntityLabel};
use crate::util::join_tokens;

/// A sentence with one entity replaced by its category mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeQuestion {
    pub sentence: usize,
    /// Sentence tokens with the answer collapsed into a single mask token.
    pub tokens: Vec<String>,
    pub mask_index: usize,
    pub label: EntityLabel,
    /// Context-global token range of the answer.
    pub answer: (usize, usize),
    pub answer_text: String,
}

impl ClozeQuestion {
    pub fn text(&self) -> String {
        join_tokens(&self.tokens)
    }

    /// Re-insert the answer tokens in place of the mask.
    pub fn demask(&self, ctx: &AnnotatedContext) -> Vec<String> {
        let mut out = self.tokens[..self.mask_index].to_vec();
        out.extend(ctx.tokens[self.answer.0..self.answer.1].iter().map(|t| t.text.clone()));
        out.extend_from_slice(&self.tokens[self.mask_index + 1..]);
        out
    }

    pub(crate) fn to_synthetic(&self, ctx: &AnnotatedContext) -> SyntheticQa {
        SyntheticQa::from_tokens(ctx, Method::Cloze, self.text(), self.answer.0, self.answer.1)
    }
}

/// One cloze per (sentence, entity in sentence).
pub fn generate_clozes(ctx: &AnnotatedContext) -> Vec<ClozeQuestion> {
    let mut out = Vec::new();
    for (s, sent) in ctx.sentences.iter().enumerate() {
        for e in ctx
            .entities
            .iter()
            .filter(|e| sent.contains(e.start_tok) && e.end_tok <= sent.end_tok)
        {
            let mut tokens: Vec<String> = ctx.tokens[sent.start_tok..e.start_tok]
                .iter()
                .map(|t| t.text.clone())
                .collect();
            let mask_index = tokens.len();
            tokens.push(e.label.mask_token().to_string());
            tokens.extend(ctx.tokens[e.end_tok..sent.end_tok].iter().map(|t| t.text.clone()));
            out.push(ClozeQuestion {
                sentence: s,
                tokens,
                mask_index,
                label: e.label,
                answer: (e.start_tok, e.end_tok),
                answer_text: ctx.token_text(e.start_tok, e.end_tok).to_string(),
            });
        }
    }
    out
}

fn decapitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Wh-fronting: drop the mask, prepend the category wh-word, and replace the
/// terminal punctuation with `?`. A sentence-initial word that is not part of
/// a named entity loses its capital.
pub fn translate_cloze_rule(ctx: &AnnotatedContext, cloze: &ClozeQuestion) -> SyntheticQa {
    let sent_start = ctx.sentences[cloze.sentence].start_tok;
    let mut rest: Vec<String> = cloze
        .tokens
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != cloze.mask_index)
        .map(|(_, t)| t.clone())
        .collect();
    if cloze.mask_index != 0 && !rest.is_empty() {
        let in_entity = ctx
            .entities
            .iter()
            .any(|e| e.start_tok <= sent_start && sent_start < e.end_tok);
        if !in_entity {
            rest[0] = decapitalize(&rest[0]);
        }
    }
    while rest.last().is_some_and(|t| is_punct(t)) {
        rest.pop();
    }
    let mut words = vec![cloze.label.wh_word().to_string()];
    words.extend(rest);
    let question = join_tokens(&words) + "?";
    SyntheticQa::from_tokens(ctx, Method::ClozeTranslated, question, cloze.answer.0, cloze.answer.1)
}
