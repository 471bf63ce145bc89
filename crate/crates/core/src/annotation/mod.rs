//! Annotated passages: the substrate every question generator reads.
//!
//! Offsets are Unicode codepoint offsets into the passage text, never byte
//! offsets, so fixtures written by other toolchains line up exactly.

mod builder;
mod heuristic;
mod io;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use builder::ContextBuilder;
pub use heuristic::{heuristic_annotate, tokenize};
pub use io::{
    load_annotations, load_squad_dataset, parse_annotations, save_annotations, squad_json, write_squad_dataset,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    #[serde(rename = "start")]
    pub start_char: usize,
    /// Exclusive.
    #[serde(rename = "end")]
    pub end_char: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityLabel {
    Person,
    Location,
    Temporal,
    Numeric,
    Thing,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 5] = [
        EntityLabel::Person,
        EntityLabel::Location,
        EntityLabel::Temporal,
        EntityLabel::Numeric,
        EntityLabel::Thing,
    ];

    /// Category mask token used in cloze questions.
    pub fn mask_token(self) -> &'static str {
        match self {
            EntityLabel::Person => "[PERSON]",
            EntityLabel::Location => "[LOCATION]",
            EntityLabel::Temporal => "[TEMPORAL]",
            EntityLabel::Numeric => "[NUMERIC]",
            EntityLabel::Thing => "[THING]",
        }
    }

    pub fn wh_word(self) -> &'static str {
        match self {
            EntityLabel::Person => "Who",
            EntityLabel::Location => "Where",
            EntityLabel::Temporal => "When",
            EntityLabel::Numeric => "How many",
            EntityLabel::Thing => "What",
        }
    }

    pub fn from_mask_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.mask_token() == token)
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityLabel::Person => "PERSON",
            EntityLabel::Location => "LOCATION",
            EntityLabel::Temporal => "TEMPORAL",
            EntityLabel::Numeric => "NUMERIC",
            EntityLabel::Thing => "THING",
        };
        f.write_str(s)
    }
}

/// Half-open token range `[start_tok, end_tok)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub start_tok: usize,
    pub end_tok: usize,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.end_tok.saturating_sub(self.start_tok)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, tok: usize) -> bool {
        (self.start_tok..self.end_tok).contains(&tok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start_tok: usize,
    pub end_tok: usize,
    pub label: EntityLabel,
}

/// Dependency tree of one sentence. Head indices are sentence-local;
/// `None` marks the root (`-1` on disk).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepTree {
    #[serde(with = "head_serde")]
    pub head: Vec<Option<usize>>,
    pub rel: Vec<String>,
}

impl DepTree {
    pub fn root(&self) -> Option<usize> {
        self.head.iter().position(Option::is_none)
    }

    /// Children of `node` in ascending token order.
    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.head.len()).filter(|&i| self.head[i] == Some(node)).collect()
    }
}

mod head_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(heads: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<i64> = heads.iter().map(|h| h.map_or(-1, |h| h as i64)).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        let raw = Vec::<i64>::deserialize(d)?;
        raw.into_iter()
            .map(|h| match h {
                -1 => Ok(None),
                h if h >= 0 => Ok(Some(h as usize)),
                h => Err(serde::de::Error::custom(format!(
                    "head index {h} is neither -1 nor a token index"
                ))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SrlRole {
    #[serde(rename = "ARG0")]
    Arg0,
    #[serde(rename = "ARG1")]
    Arg1,
    #[serde(rename = "ARG2")]
    Arg2,
    #[serde(rename = "ARGM-LOC")]
    ArgmLoc,
    #[serde(rename = "ARGM-TMP")]
    ArgmTmp,
}

impl SrlRole {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ARG0" => Some(SrlRole::Arg0),
            "ARG1" => Some(SrlRole::Arg1),
            "ARG2" => Some(SrlRole::Arg2),
            "ARGM-LOC" => Some(SrlRole::ArgmLoc),
            "ARGM-TMP" => Some(SrlRole::ArgmTmp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SrlArg {
    pub role: SrlRole,
    pub start_tok: usize,
    pub end_tok: usize,
}

/// Predicate-argument frame. Token indices are context-global.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawSrlFrame")]
pub struct SrlFrame {
    pub pred: usize,
    pub args: Vec<SrlArg>,
}

#[derive(Deserialize)]
struct RawSrlArg {
    role: String,
    start_tok: usize,
    end_tok: usize,
}

#[derive(Deserialize)]
struct RawSrlFrame {
    pred: usize,
    args: Vec<RawSrlArg>,
}

impl From<RawSrlFrame> for SrlFrame {
    fn from(raw: RawSrlFrame) -> Self {
        let args = raw
            .args
            .into_iter()
            .filter_map(|a| match SrlRole::parse(&a.role) {
                Some(role) => Some(SrlArg {
                    role,
                    start_tok: a.start_tok,
                    end_tok: a.end_tok,
                }),
                None => {
                    log::warn!("dropping unsupported SRL role `{}` (predicate {})", a.role, raw.pred);
                    None
                }
            })
            .collect();
        SrlFrame { pred: raw.pred, args }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedContext {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub sentences: Vec<Sentence>,
    pub entities: Vec<EntitySpan>,
    /// Empty when the context carries no parses; otherwise one slot per
    /// sentence, `null` for a sentence the parser skipped.
    #[serde(default)]
    pub dep: Vec<Option<DepTree>>,
    #[serde(default)]
    pub srl: Vec<SrlFrame>,
}

impl AnnotatedContext {
    pub fn sentence_of(&self, tok: usize) -> Option<usize> {
        self.sentences.iter().position(|s| s.contains(tok))
    }

    pub fn dep_tree(&self, sentence: usize) -> Option<&DepTree> {
        self.dep.get(sentence).and_then(Option::as_ref)
    }

    /// Character span covered by tokens `[start_tok, end_tok)`.
    pub fn char_span(&self, start_tok: usize, end_tok: usize) -> (usize, usize) {
        (self.tokens[start_tok].start_char, self.tokens[end_tok - 1].end_char)
    }

    pub fn slice_chars(&self, start_char: usize, end_char: usize) -> &str {
        char_slice(&self.text, start_char, end_char)
    }

    pub fn token_text(&self, start_tok: usize, end_tok: usize) -> &str {
        let (s, e) = self.char_span(start_tok, end_tok);
        self.slice_chars(s, e)
    }

    /// Token range exactly covering `[start_char, end_char)`, if the
    /// boundaries fall on token boundaries.
    pub fn token_span(&self, start_char: usize, end_char: usize) -> Option<(usize, usize)> {
        let start = self.tokens.iter().position(|t| t.start_char == start_char)?;
        let end = self.tokens[start..].iter().position(|t| t.end_char == end_char)? + start;
        Some((start, end + 1))
    }
}

/// Slice `text` by codepoint offsets. Out-of-range offsets clamp to the end.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let byte_at = |c: usize| text.char_indices().nth(c).map_or(text.len(), |(b, _)| b);
    let (s, e) = (byte_at(start), byte_at(end));
    if s <= e {
        &text[s..e]
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub text: String,
    pub answer_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub context_id: String,
    pub question: String,
    pub answers: Vec<GoldAnswer>,
}

/// Test passages together with their human-authored questions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub contexts: Vec<AnnotatedContext>,
    pub questions: Vec<Question>,
}

impl Corpus {
    pub fn context(&self, id: &str) -> Option<&AnnotatedContext> {
        self.contexts.iter().find(|c| c.id == id)
    }

    pub fn questions_for<'a>(&'a self, context_id: &'a str) -> impl Iterator<Item = &'a Question> {
        self.questions.iter().filter(move |q| q.context_id == context_id)
    }

    /// Replace heuristic contexts with externally produced annotations of the
    /// same id. The passage text must agree exactly.
    pub fn attach_annotations(&mut self, annotated: Vec<AnnotatedContext>) -> crate::Result<()> {
        for ann in annotated {
            let slot = self
                .contexts
                .iter_mut()
                .find(|c| c.id == ann.id)
                .ok_or_else(|| crate::Error::Validation(format!("annotation for unknown context `{}`", ann.id)))?;
            if slot.text != ann.text {
                return Err(crate::Error::Validation(format!(
                    "annotation text for context `{}` differs from the dataset passage",
                    ann.id
                )));
            }
            *slot = ann;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Check every structural invariant of `ctx`. Empty iff well-formed.
pub fn validate(ctx: &AnnotatedContext) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: String| out.push(Violation { location, message });

    let n_chars = ctx.text.chars().count();
    let n = ctx.tokens.len();

    let mut prev_end = 0;
    for (i, t) in ctx.tokens.iter().enumerate() {
        if t.start_char >= t.end_char {
            push(format!("tokens[{i}]"), "start must be before end".into());
            continue;
        }
        if t.end_char > n_chars {
            push(
                format!("tokens[{i}]"),
                format!("end {} beyond text length {n_chars}", t.end_char),
            );
            continue;
        }
        if t.start_char < prev_end {
            push(format!("tokens[{i}]"), "overlaps or precedes the previous token".into());
        }
        if char_slice(&ctx.text, t.start_char, t.end_char) != t.text {
            push(
                format!("tokens[{i}]"),
                format!("text `{}` does not match passage slice", t.text),
            );
        }
        prev_end = t.end_char;
    }

    let mut expected = 0;
    for (s, sent) in ctx.sentences.iter().enumerate() {
        if sent.start_tok != expected {
            push(
                format!("sentences[{s}]"),
                format!("starts at {} but previous ended at {expected}", sent.start_tok),
            );
        }
        if sent.start_tok >= sent.end_tok {
            push(format!("sentences[{s}]"), "empty sentence".into());
        }
        expected = sent.end_tok;
    }
    if expected != n {
        push("sentences".into(), format!("cover {expected} tokens, context has {n}"));
    }

    for (i, e) in ctx.entities.iter().enumerate() {
        if e.start_tok >= e.end_tok || e.end_tok > n {
            push(
                format!("entities[{i}]"),
                format!("bad span {}..{}", e.start_tok, e.end_tok),
            );
            continue;
        }
        match ctx.sentence_of(e.start_tok) {
            Some(s) if e.end_tok <= ctx.sentences[s].end_tok => {}
            Some(s) => push(format!("entities[{i}]"), format!("crosses the end of sentence {s}")),
            None => push(format!("entities[{i}]"), "not inside any sentence".into()),
        }
    }

    if !ctx.dep.is_empty() && ctx.dep.len() != ctx.sentences.len() {
        push(
            "dep".into(),
            format!("{} trees for {} sentences", ctx.dep.len(), ctx.sentences.len()),
        );
    }
    for (s, tree) in ctx.dep.iter().enumerate() {
        let (Some(tree), Some(sent)) = (tree, ctx.sentences.get(s)) else {
            continue;
        };
        for v in check_tree(tree, sent.len()) {
            push(format!("dep[{s}]"), format!("sentence {s}: {v}"));
        }
    }

    for (f, frame) in ctx.srl.iter().enumerate() {
        if frame.pred >= n {
            push(format!("srl[{f}]"), format!("predicate {} out of range", frame.pred));
            continue;
        }
        let sent = ctx.sentence_of(frame.pred).map(|s| ctx.sentences[s]);
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for (a, arg) in frame.args.iter().enumerate() {
            if arg.start_tok >= arg.end_tok || arg.end_tok > n {
                push(
                    format!("srl[{f}].args[{a}]"),
                    format!("bad span {}..{}", arg.start_tok, arg.end_tok),
                );
                continue;
            }
            if let Some(sent) = sent {
                if arg.start_tok < sent.start_tok || arg.end_tok > sent.end_tok {
                    push(format!("srl[{f}].args[{a}]"), "outside the predicate's sentence".into());
                }
            }
            spans.push((arg.start_tok, arg.end_tok));
        }
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            push(format!("srl[{f}]"), "overlapping argument spans".into());
        }
    }

    out
}

fn check_tree(tree: &DepTree, len: usize) -> Vec<String> {
    let mut out = Vec::new();
    if tree.head.len() != len || tree.rel.len() != len {
        out.push(format!(
            "{} heads and {} relations for {len} tokens",
            tree.head.len(),
            tree.rel.len()
        ));
        return out;
    }
    if let Some(bad) = tree.head.iter().flatten().find(|&&h| h >= len) {
        out.push(format!("head {bad} out of range"));
        return out;
    }
    let roots = tree.head.iter().filter(|h| h.is_none()).count();
    if roots != 1 {
        out.push(format!("{roots} roots, expected exactly one"));
    }
    // Any chain longer than the sentence revisits a node.
    for start in 0..len {
        let mut node = start;
        let mut steps = 0;
        while let Some(h) = tree.head[node] {
            node = h;
            steps += 1;
            if steps > len {
                out.push(format!("dependency cycle through token {start}"));
                return out;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(head: &[i64]) -> DepTree {
        DepTree {
            head: head.iter().map(|&h| (h >= 0).then_some(h as usize)).collect(),
            rel: vec!["dep".into(); head.len()],
        }
    }

    #[test]
    fn tree_rooted_at_middle_token_is_valid() {
        assert!(check_tree(&tree(&[1, -1, 1]), 3).is_empty());
    }

    #[test]
    fn two_cycle_is_reported() {
        let v = check_tree(&tree(&[1, 0]), 2);
        assert!(v.iter().any(|m| m.contains("cycle")), "{v:?}");
    }

    #[test]
    fn two_roots_are_reported() {
        let v = check_tree(&tree(&[-1, -1, 0]), 3);
        assert!(v.iter().any(|m| m.contains("2 roots")), "{v:?}");
    }

    #[test]
    fn well_formed_context_has_empty_report() {
        let mut ctx = heuristic_annotate("c", "Rollo raided France in 911.").unwrap();
        ctx.dep = vec![Some(tree(&[1, -1, 1, 1, 3, 1]))];
        assert_eq!(validate(&ctx), vec![]);
    }

    #[test]
    fn degenerate_entity_is_a_violation() {
        let mut ctx = heuristic_annotate("c", "Rollo raided France in 911.").unwrap();
        ctx.entities[0].end_tok = ctx.entities[0].start_tok;
        let report = validate(&ctx);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].location, "entities[0]");
    }

    #[test]
    fn entity_across_sentences_is_a_violation() {
        let mut ctx = heuristic_annotate("c", "Rollo came. France fell.").unwrap();
        ctx.entities.push(EntitySpan {
            start_tok: 1,
            end_tok: 4,
            label: EntityLabel::Thing,
        });
        assert!(validate(&ctx)
            .iter()
            .any(|v| v.message.contains("crosses the end of sentence 0")));
    }

    #[test]
    fn two_roots_in_context_tree_is_a_violation() {
        let mut ctx = heuristic_annotate("c", "Rollo raided France.").unwrap();
        ctx.dep = vec![Some(tree(&[1, -1, -1, 1]))];
        let report = validate(&ctx);
        assert!(report.iter().any(|v| v.location == "dep[0]"));
    }

    #[test]
    fn overlapping_srl_args_are_a_violation() {
        let mut ctx = heuristic_annotate("c", "Rollo raided France in 911.").unwrap();
        ctx.srl = vec![SrlFrame {
            pred: 1,
            args: vec![
                SrlArg {
                    role: SrlRole::Arg0,
                    start_tok: 0,
                    end_tok: 2,
                },
                SrlArg {
                    role: SrlRole::Arg1,
                    start_tok: 1,
                    end_tok: 3,
                },
            ],
        }];
        assert!(validate(&ctx).iter().any(|v| v.message.contains("overlapping")));
    }

    #[test]
    fn char_slice_uses_codepoints() {
        let text = "Zoë went to Köln.";
        assert_eq!(char_slice(text, 12, 16), "Köln");
        assert_eq!(char_slice(text, 0, 3), "Zoë");
    }

    #[test]
    fn unknown_srl_roles_are_dropped_on_ingest() {
        let frame: SrlFrame = serde_json::from_str(
            r#"{"pred": 1, "args": [{"role": "ARG0", "start_tok": 0, "end_tok": 1},
                                    {"role": "ARGM-MNR", "start_tok": 2, "end_tok": 3}]}"#,
        )
        .unwrap();
        assert_eq!(frame.args.len(), 1);
        assert_eq!(frame.args[0].role, SrlRole::Arg0);
    }
}
