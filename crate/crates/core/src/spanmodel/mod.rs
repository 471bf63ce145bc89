//! A bilinear span scorer trained with hand-derived gradients.
//!
//! Token representations are `h_i = E[c_i] + P[min(i, P_max - 1)]` and the
//! question is the mean of its token embeddings `q̄`. The start score of
//! position `i` is `h_iᵀ W_start q̄ + b_startᵀ h_i`, the stop score likewise.
//! Training minimizes the summed start and stop cross-entropy, averaged over
//! the batch, with Adam.

mod checkpoint;
mod optim;
mod pretrain;
mod vocab;
mod window;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotatedContext;
use crate::qgen::SyntheticQa;
use crate::util::digest_f64;
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optim::{Adam, DEFAULT_LR};
pub use pretrain::{pretrain, Batcher, PretrainConfig};
pub use vocab::{question_tokens, Vocabulary, UNK};
pub use window::{split_windows, Window, DOC_STRIDE, MAX_SEQ_LEN};

pub const DEFAULT_DIM: usize = 32;
/// Longest decoded answer, in tokens.
pub const MAX_ANSWER_LEN: usize = 30;

const EMBED_RANGE: f64 = 0.05;
const HEAD_STD: f64 = 0.02;

/// All trainable tensors. `e` is `V×d`, `p` is `P_max×d`, the `w_*`
/// matrices are `d×d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub e: Vec<f64>,
    pub p: Vec<f64>,
    pub w_start: Vec<f64>,
    pub w_stop: Vec<f64>,
    pub b_start: Vec<f64>,
    pub b_stop: Vec<f64>,
}

impl Params {
    pub fn zeros(vocab: usize, d: usize, pmax: usize) -> Self {
        Params {
            e: vec![0.0; vocab * d],
            p: vec![0.0; pmax * d],
            w_start: vec![0.0; d * d],
            w_stop: vec![0.0; d * d],
            b_start: vec![0.0; d],
            b_stop: vec![0.0; d],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            e: vec![0.0; self.e.len()],
            p: vec![0.0; self.p.len()],
            w_start: vec![0.0; self.w_start.len()],
            w_stop: vec![0.0; self.w_stop.len()],
            b_start: vec![0.0; self.b_start.len()],
            b_stop: vec![0.0; self.b_stop.len()],
        }
    }

    /// Declaration order: E, P, W_start, W_stop, b_start, b_stop.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.e,
            &self.p,
            &self.w_start,
            &self.w_stop,
            &self.b_start,
            &self.b_stop,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.e,
            &mut self.p,
            &mut self.w_start,
            &mut self.w_stop,
            &mut self.b_start,
            &mut self.b_stop,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub pmax: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: DEFAULT_DIM,
            pmax: MAX_SEQ_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanModel {
    pub vocab: Vocabulary,
    pub d: usize,
    pub pmax: usize,
    pub seed: u64,
    pub params: Params,
}

fn uniform_fill(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out {
        *x = rng.random_range(-EMBED_RANGE..EMBED_RANGE);
    }
}

fn normal_fill(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let normal = Normal::new(0.0, HEAD_STD).expect("valid std");
    for x in out {
        *x = normal.sample(rng);
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fresh model and optimizer: `E`, `P` uniform in ±0.05, the heads
/// normal with standard deviation 0.02, all drawn from `seed`.
pub fn init_model(vocab: Vocabulary, cfg: ModelConfig, seed: u64, lr: f64) -> Result<(SpanModel, Adam)> {
    if cfg.d < 2 {
        return Err(Error::Config(format!(
            "model dimension must be at least 2, got {}",
            cfg.d
        )));
    }
    if cfg.pmax == 0 {
        return Err(Error::Config("position table must have at least one row".into()));
    }
    if vocab.is_empty() {
        return Err(Error::Config("empty vocabulary".into()));
    }
    let mut params = Params::zeros(vocab.len(), cfg.d, cfg.pmax);
    let mut rng = stream(seed, 0);
    uniform_fill(&mut rng, &mut params.e);
    uniform_fill(&mut rng, &mut params.p);
    let mut model = SpanModel {
        vocab,
        d: cfg.d,
        pmax: cfg.pmax,
        seed,
        params,
    };
    model.reset_head(seed);
    let optim = Adam::new(&model.params, lr);
    Ok((model, optim))
}

impl SpanModel {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            pmax: self.pmax,
        }
    }

    /// Redraw the answering head from `seed`, leaving the features alone.
    pub fn reset_head(&mut self, seed: u64) {
        let mut rng = stream(seed, 1);
        normal_fill(&mut rng, &mut self.params.w_start);
        normal_fill(&mut rng, &mut self.params.w_stop);
        normal_fill(&mut rng, &mut self.params.b_start);
        normal_fill(&mut rng, &mut self.params.b_stop);
    }

    pub fn head(&self) -> [&[f64]; 4] {
        let p = &self.params;
        [&p.w_start, &p.w_stop, &p.b_start, &p.b_stop]
    }

    pub fn head_digest(&self) -> u64 {
        let flat: Vec<f64> = self.head().concat();
        digest_f64(&flat)
    }

    pub fn feature_digest(&self) -> u64 {
        let flat: Vec<f64> = [self.params.e.as_slice(), &self.params.p].concat();
        digest_f64(&flat)
    }

    /// Add rows for words the vocabulary lacks, drawn like a fresh
    /// embedding from `seed`. Optimizer moments for them start at zero.
    pub fn extend_vocab<I, S>(&mut self, words: I, seed: u64, optim: Option<&mut Adam>) -> usize
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let old = self.vocab.len();
        let added = self.vocab.extend(words);
        if added > 0 {
            let mut fresh = vec![0.0; added * self.d];
            uniform_fill(&mut stream(seed, 2), &mut fresh);
            self.params.e.extend(fresh);
            if let Some(opt) = optim {
                opt.grow_embeddings(self.d, old + added);
            }
        }
        added
    }

    pub fn encode_context(&self, ctx: &AnnotatedContext) -> Vec<usize> {
        ctx.tokens.iter().map(|t| self.vocab.id(&t.text)).collect()
    }

    pub fn encode_question(&self, question: &str) -> Vec<usize> {
        self.vocab.ids(&question_tokens(question))
    }

    fn row<'a>(table: &'a [f64], id: usize, d: usize) -> &'a [f64] {
        &table[id * d..(id + 1) * d]
    }

    fn position(&self, i: usize) -> usize {
        i.min(self.pmax - 1)
    }

    fn question_mean(&self, question: &[usize]) -> Vec<f64> {
        let d = self.d;
        let mut q = vec![0.0; d];
        for &id in question {
            for (a, x) in Self::row(&self.params.e, id, d).iter().enumerate() {
                q[a] += x;
            }
        }
        let m = question.len() as f64;
        q.iter_mut().for_each(|x| *x /= m);
        q
    }

    /// `W q̄ + b` for one head.
    fn head_vector(&self, w: &[f64], b: &[f64], q: &[f64]) -> Vec<f64> {
        let d = self.d;
        w.chunks_exact(d).zip(b).map(|(row, b)| b + dot(row, q)).collect()
    }

    fn hidden(&self, window: &[usize], i: usize) -> Vec<f64> {
        let d = self.d;
        let e = Self::row(&self.params.e, window[i], d);
        let p = Self::row(&self.params.p, self.position(i), d);
        e.iter().zip(p).map(|(a, b)| a + b).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Start and stop logits over one window of token ids.
pub fn forward(model: &SpanModel, window: &[usize], question: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if question.is_empty() {
        return Err(Error::EmptyQuestion);
    }
    let q = model.question_mean(question);
    let us = model.head_vector(&model.params.w_start, &model.params.b_start, &q);
    let ue = model.head_vector(&model.params.w_stop, &model.params.b_stop, &q);
    let mut start = Vec::with_capacity(window.len());
    let mut stop = Vec::with_capacity(window.len());
    for i in 0..window.len() {
        let h = model.hidden(window, i);
        start.push(dot(&h, &us));
        stop.push(dot(&h, &ue));
    }
    Ok((start, stop))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_lse(logits).0
}

/// Softmax and log-sum-exp from one pass of exponentials.
fn softmax_lse(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    (out, max + z.ln())
}

/// One training instance: a window of token ids, a question and the
/// window-local inclusive answer span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub window: Vec<usize>,
    pub question: Vec<usize>,
    pub start: usize,
    pub end: usize,
}

/// One example per window that fully contains the pair's answer. Pairs whose
/// span does not align with token boundaries yield nothing.
pub fn examples_for(model: &SpanModel, ctx: &AnnotatedContext, qa: &SyntheticQa) -> Vec<Example> {
    let Some((s, e)) = ctx.token_span(qa.start_char, qa.end_char) else {
        log::warn!(
            "context `{}`: answer `{}` does not align with tokens, skipping",
            ctx.id,
            qa.answer_text
        );
        return Vec::new();
    };
    let ids = model.encode_context(ctx);
    let question = model.encode_question(&qa.question);
    if question.is_empty() {
        return Vec::new();
    }
    split_windows(ids.len(), MAX_SEQ_LEN, DOC_STRIDE)
        .into_iter()
        .filter_map(|w| {
            w.localize(s, e).map(|(start, end)| Example {
                window: ids[w.start..w.end].to_vec(),
                question: question.clone(),
                start,
                end,
            })
        })
        .collect()
}

/// Mean batch loss and its gradient with respect to every parameter.
pub fn loss_and_grad(model: &SpanModel, batch: &[Example]) -> Result<(f64, Params)> {
    let d = model.d;
    let pr = &model.params;
    let mut grad = pr.zeros_like();
    let mut loss = 0.0;
    for ex in batch {
        let n = ex.window.len();
        if ex.start > ex.end || ex.end >= n {
            return Err(Error::SpanOutsideWindow {
                start: ex.start,
                end: ex.end,
                window_start: 0,
                window_end: n,
            });
        }
        if ex.question.is_empty() {
            return Err(Error::EmptyQuestion);
        }
        let q = model.question_mean(&ex.question);
        let us = model.head_vector(&pr.w_start, &pr.b_start, &q);
        let ue = model.head_vector(&pr.w_stop, &pr.b_stop, &q);
        let hs: Vec<Vec<f64>> = (0..n).map(|i| model.hidden(&ex.window, i)).collect();
        let start: Vec<f64> = hs.iter().map(|h| dot(h, &us)).collect();
        let stop: Vec<f64> = hs.iter().map(|h| dot(h, &ue)).collect();
        let (mut gs, lse_s) = softmax_lse(&start);
        let (mut ge, lse_e) = softmax_lse(&stop);
        loss += lse_s - start[ex.start] + lse_e - stop[ex.end];
        gs[ex.start] -= 1.0;
        ge[ex.end] -= 1.0;

        let mut rs = vec![0.0; d];
        let mut re = vec![0.0; d];
        for (i, h) in hs.iter().enumerate() {
            let (g_s, g_e) = (gs[i], ge[i]);
            let (e_off, p_off) = (ex.window[i] * d, model.position(i) * d);
            let ge_row = &mut grad.e[e_off..e_off + d];
            for a in 0..d {
                ge_row[a] += g_s * us[a] + g_e * ue[a];
            }
            let gp_row = &mut grad.p[p_off..p_off + d];
            for a in 0..d {
                gp_row[a] += g_s * us[a] + g_e * ue[a];
                rs[a] += g_s * h[a];
                re[a] += g_e * h[a];
            }
        }
        for a in 0..d {
            grad.b_start[a] += rs[a];
            grad.b_stop[a] += re[a];
            let ws = &mut grad.w_start[a * d..(a + 1) * d];
            for (w, qk) in ws.iter_mut().zip(&q) {
                *w += rs[a] * qk;
            }
            let we = &mut grad.w_stop[a * d..(a + 1) * d];
            for (w, qk) in we.iter_mut().zip(&q) {
                *w += re[a] * qk;
            }
        }
        let m = ex.question.len() as f64;
        let mut dq = vec![0.0; d];
        for a in 0..d {
            let ws = &pr.w_start[a * d..(a + 1) * d];
            let we = &pr.w_stop[a * d..(a + 1) * d];
            for k in 0..d {
                dq[k] += ws[k] * rs[a] + we[k] * re[a];
            }
        }
        for &id in &ex.question {
            let row = &mut grad.e[id * d..(id + 1) * d];
            for k in 0..d {
                row[k] += dq[k] / m;
            }
        }
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    for t in grad.tensors_mut() {
        t.iter_mut().for_each(|x| *x *= scale);
    }
    Ok((loss * scale, grad))
}

/// One Adam step on `batch`; returns the loss before the update.
pub fn train_step(model: &mut SpanModel, optim: &mut Adam, batch: &[Example]) -> Result<f64> {
    let (loss, grad) = loss_and_grad(model, batch)?;
    optim.update(&mut model.params, &grad);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub start_char: usize,
    pub end_char: usize,
    pub text: String,
    pub score: f64,
}

/// Best `(window, i, j, score)` with `i <= j < i + max_len`, maximizing
/// `start[i] + stop[j]`. Earlier windows, then smaller `i`, then smaller `j`
/// win ties.
pub fn decode(logits: &[(Vec<f64>, Vec<f64>)], max_len: usize) -> Option<(usize, usize, usize, f64)> {
    let mut best: Option<(usize, usize, usize, f64)> = None;
    for (w, (start, stop)) in logits.iter().enumerate() {
        let n = start.len().min(stop.len());
        for i in 0..n {
            for j in i..n.min(i + max_len) {
                let s = start[i] + stop[j];
                if best.is_none_or(|b| s > b.3) {
                    best = Some((w, i, j, s));
                }
            }
        }
    }
    best
}

/// Highest-scoring span of `ctx` for `question` over all windows.
pub fn predict_span(
    model: &SpanModel,
    ctx: &AnnotatedContext,
    question: &str,
    max_len: usize,
) -> Result<SpanPrediction> {
    let q = model.encode_question(question);
    if q.is_empty() {
        return Err(Error::EmptyQuestion);
    }
    let ids = model.encode_context(ctx);
    if ids.is_empty() {
        return Err(Error::EmptyText(ctx.id.clone()));
    }
    let windows = split_windows(ids.len(), MAX_SEQ_LEN, DOC_STRIDE);
    let logits = windows
        .iter()
        .map(|w| forward(model, &ids[w.start..w.end], &q))
        .collect::<Result<Vec<_>>>()?;
    let (w, i, j, score) = decode(&logits, max_len.max(1)).expect("non-empty window");
    let start_char = ctx.tokens[windows[w].start + i].start_char;
    let end_char = ctx.tokens[windows[w].start + j].end_char;
    Ok(SpanPrediction {
        start_char,
        end_char,
        text: ctx.slice_chars(start_char, end_char).to_string(),
        score,
    })
}

#[cfg(test)]
mod tests;
