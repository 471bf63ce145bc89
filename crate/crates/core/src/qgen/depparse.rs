//! Cloze-to-question translation by dependency-tree reconstruction.
//!
//! 1. The answer span collapses into one node, which keeps its right
//!    children; left children are pruned.
//! 2. Every ancestor of the answer moves the child on the answer path to the
//!    front of its child list.
//! 3. The tree is read back out: a node on the answer path emits its fronted
//!    child first, then itself, then its other children in sentence order.
//!    Subtrees off the answer path keep their surface order. The mask then
//!    becomes the category wh-word.

use super::{Method, SyntheticQa};
use crate::annotation::{AnnotatedContext, DepTree, EntityLabel};
use crate::util::join_tokens;

fn is_terminal(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

struct Reorder<'a> {
    tokens: &'a [String],
    /// Effective heads after collapsing the answer span into `answer`.
    head: Vec<Option<usize>>,
    alive: Vec<bool>,
    answer: usize,
    mask: &'a str,
    /// For each node on the answer path, its child leading to the answer.
    fronted: Vec<Option<usize>>,
    out: Vec<String>,
}

impl Reorder<'_> {
    fn children(&self, node: usize) -> Vec<usize> {
        (0..self.head.len())
            .filter(|&i| self.alive[i] && self.head[i] == Some(node))
            .collect()
    }

    fn emit(&mut self, node: usize) {
        let children = self.children(node);
        if node == self.answer {
            self.out.push(self.mask.to_string());
            for c in children {
                self.emit(c);
            }
        } else if let Some(first) = self.fronted[node] {
            self.emit(first);
            self.push_word(node);
            for c in children.into_iter().filter(|&c| c != first) {
                self.emit(c);
            }
        } else {
            for &c in children.iter().filter(|&&c| c < node) {
                self.emit(c);
            }
            self.push_word(node);
            for &c in children.iter().filter(|&&c| c > node) {
                self.emit(c);
            }
        }
    }

    fn push_word(&mut self, node: usize) {
        let w = &self.tokens[node];
        if !is_terminal(w) {
            self.out.push(w.clone());
        }
    }
}

fn depths(tree: &DepTree) -> Option<Vec<usize>> {
    let n = tree.head.len();
    let mut depth = vec![0; n];
    for (i, d) in depth.iter_mut().enumerate() {
        let mut node = i;
        while let Some(h) = tree.head[node] {
            *d += 1;
            node = h;
            if *d > n {
                return None;
            }
        }
    }
    Some(depth)
}

/// Reconstructed token sequence for one sentence with the answer span
/// (sentence-local, half-open) collapsed into `mask`. `None` if the tree has
/// a cycle or the span is empty.
///
/// The span becomes one node standing at its shallowest token. Tokens that
/// depend on any span token hang off that node; those left of the span are
/// pruned with their subtrees.
pub fn depparse_question(tokens: &[String], tree: &DepTree, answer: (usize, usize), mask: &str) -> Option<Vec<String>> {
    let (start, end) = answer;
    let n = tokens.len();
    if start >= end || end > n || tree.head.len() != n {
        return None;
    }
    let depth = depths(tree)?;
    let root = tree.root()?;
    let in_span = |i: usize| (start..end).contains(&i);
    let anchor = (start..end).min_by_key(|&i| depth[i])?;

    let mut head = tree.head.clone();
    let mut alive = vec![true; n];
    for i in 0..n {
        if in_span(i) {
            alive[i] = i == anchor;
        } else if head[i].is_some_and(in_span) {
            head[i] = Some(anchor);
        }
    }
    let root = if in_span(root) { anchor } else { root };
    for i in 0..n {
        if alive[i] && i < start && head[i] == Some(anchor) {
            prune(&head, i, &mut alive);
        }
    }

    let mut fronted = vec![None; n];
    let mut child = anchor;
    while let Some(parent) = head[child] {
        fronted[parent] = Some(child);
        child = parent;
    }

    let mut r = Reorder {
        tokens,
        head,
        alive,
        answer: anchor,
        mask,
        fronted,
        out: Vec::new(),
    };
    r.emit(root);
    Some(r.out)
}

fn prune(head: &[Option<usize>], node: usize, alive: &mut [bool]) {
    alive[node] = false;
    for c in 0..head.len() {
        if alive[c] && head[c] == Some(node) {
            prune(head, c, alive);
        }
    }
}

pub fn generate_depparse_questions(ctx: &AnnotatedContext) -> Vec<SyntheticQa> {
    let mut out = Vec::new();
    for (s, sent) in ctx.sentences.iter().enumerate() {
        let entities: Vec<_> = ctx
            .entities
            .iter()
            .filter(|e| sent.contains(e.start_tok) && e.end_tok <= sent.end_tok)
            .collect();
        if entities.is_empty() {
            continue;
        }
        let Some(tree) = ctx.dep_tree(s) else {
            log::warn!("context `{}`: no dependency tree for sentence {s}, skipping", ctx.id);
            continue;
        };
        let words: Vec<String> = ctx.tokens[sent.start_tok..sent.end_tok]
            .iter()
            .map(|t| t.text.clone())
            .collect();
        for e in entities {
            let local = (e.start_tok - sent.start_tok, e.end_tok - sent.start_tok);
            let Some(seq) = depparse_question(&words, tree, local, e.label.mask_token()) else {
                continue;
            };
            if seq.len() < 2 {
                continue;
            }
            let q: Vec<&str> = seq
                .iter()
                .map(|w| match EntityLabel::from_mask_token(w) {
                    Some(label) => label.wh_word(),
                    None => w.as_str(),
                })
                .collect();
            let question = join_tokens(&q) + "?";
            out.push(SyntheticQa::from_tokens(
                ctx,
                Method::DepParse,
                question,
                e.start_tok,
                e.end_tok,
            ));
        }
    }
    out
}
