use super::{is_punct, Method, SyntheticQa};
use crate::annotation::{AnnotatedContext, EntityLabel, SrlArg, SrlFrame, SrlRole};

const PREPOSITIONS: &[&str] = &[
    "about", "across", "after", "against", "among", "at", "before", "between", "by", "during", "for", "from", "in",
    "into", "of", "on", "onto", "over", "since", "through", "to", "toward", "towards", "under", "upon", "with",
    "within", "without",
];

fn is_preposition(word: &str) -> bool {
    PREPOSITIONS.contains(&word.to_lowercase().as_str())
}

/// Question text and answer token range for one queried argument.
fn question_for(ctx: &AnnotatedContext, frame: &SrlFrame, arg: &SrlArg) -> (String, (usize, usize)) {
    let pred = ctx.tokens[frame.pred].text.as_str();
    let has = |role| frame.args.iter().any(|a| a.role == role);
    let span = (arg.start_tok, arg.end_tok);
    match arg.role {
        SrlRole::Arg0 => {
            let person = ctx
                .entities
                .iter()
                .any(|e| e.label == EntityLabel::Person && e.start_tok < arg.end_tok && arg.start_tok < e.end_tok);
            let wh = if person { "Who" } else { "What" };
            (format!("{wh} {pred}?"), span)
        }
        SrlRole::Arg1 if has(SrlRole::Arg0) => (format!("What did someone {pred}?"), span),
        SrlRole::Arg1 => (format!("What {pred}?"), span),
        SrlRole::ArgmLoc => (format!("Where did something {pred}?"), span),
        SrlRole::ArgmTmp => (format!("When did something {pred}?"), span),
        SrlRole::Arg2 => {
            let words = &ctx.tokens[arg.start_tok..arg.end_tok];
            // A leading preposition is stranded at the end of the question
            // and leaves the answer; otherwise the last preposition inside
            // the argument is echoed and the span stays whole.
            if words.len() > 1 && is_preposition(&words[0].text) {
                let prep = &words[0].text;
                (
                    format!("What was someone {pred} {}?", prep.to_lowercase()),
                    (arg.start_tok + 1, arg.end_tok),
                )
            } else if let Some(prep) = words.iter().rev().find(|t| is_preposition(&t.text)) {
                (format!("What was someone {pred} {}?", prep.text.to_lowercase()), span)
            } else {
                (format!("What was someone {pred}?"), span)
            }
        }
    }
}

/// One question per (frame, argument), from the role template table.
pub fn generate_qasrl_questions(ctx: &AnnotatedContext) -> Vec<SyntheticQa> {
    let mut out = Vec::new();
    for frame in &ctx.srl {
        for arg in &frame.args {
            let (question, (mut start, mut end)) = question_for(ctx, frame, arg);
            while start < end && is_punct(&ctx.tokens[start].text) {
                start += 1;
            }
            while end > start && is_punct(&ctx.tokens[end - 1].text) {
                end -= 1;
            }
            if start == end {
                continue;
            }
            out.push(SyntheticQa::from_tokens(ctx, Method::QaSrl, question, start, end));
        }
    }
    out
}
