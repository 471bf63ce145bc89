use super::{trim_punct, Method, SyntheticQa};
use crate::annotation::AnnotatedContext;
use crate::util::join_tokens;

/// Fragment templates: a sentence `[A] [Answer] [B]` yields `Wh B A ?`.
///
/// Punctuation at either end of a fragment is stripped. A sentence that is
/// nothing but the answer yields no question.
pub fn generate_template_questions(ctx: &AnnotatedContext) -> Vec<SyntheticQa> {
    let words = |a: usize, b: usize| -> Vec<String> { ctx.tokens[a..b].iter().map(|t| t.text.clone()).collect() };
    let mut out = Vec::new();
    for sent in &ctx.sentences {
        for e in ctx
            .entities
            .iter()
            .filter(|e| sent.contains(e.start_tok) && e.end_tok <= sent.end_tok)
        {
            let before = words(sent.start_tok, e.start_tok);
            let after = words(e.end_tok, sent.end_tok);
            let (a, b) = (trim_punct(&before), trim_punct(&after));
            if a.is_empty() && b.is_empty() {
                continue;
            }
            let mut q = vec![e.label.wh_word().to_string()];
            q.extend_from_slice(b);
            q.extend_from_slice(a);
            let question = join_tokens(&q) + "?";
            out.push(SyntheticQa::from_tokens(
                ctx,
                Method::Template,
                question,
                e.start_tok,
                e.end_tok,
            ));
        }
    }
    out
}
