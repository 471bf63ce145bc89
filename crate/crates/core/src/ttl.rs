//! Test-time learning runs: synthesize pairs for a passage, fit the span
//! model on them, answer the passage's questions.
//!
//! Non-online modes start every passage from the same feature parameters
//! and a head drawn from `seed ^ hash(passage id)`, so results do not depend
//! on passage order and passages train in parallel. Online modes carry the
//! whole model and the optimizer state from one passage to the next.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotatedContext, Corpus, Question};
use crate::qgen::{arrange, assemble_pooled, assemble_training_set, AssemblyConfig, Method, QaOrder, SyntheticQa};
use crate::retrieval::{build_index, expand_context, Index, DEFAULT_STOPWORDS, MAX_NEIGHBORS};
use crate::spanmodel::{
    examples_for, init_model, load_checkpoint, predict_span, question_tokens, train_step, Adam, Batcher, Example,
    ModelConfig, SpanModel, Vocabulary, DEFAULT_LR, MAX_ANSWER_LEN,
};
use crate::util::fnv1a;
use crate::{Error, Result};

pub const MAX_STEPS: usize = 1500;
pub const DEFAULT_STEPS: usize = 500;
pub const DEFAULT_ONLINE_STEPS: usize = 100;
pub const DEFAULT_BATCH: usize = 32;
pub const BATCH_RANGE: std::ops::RangeInclusive<usize> = 16..=64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Single,
    SingleOnline,
    KNeighbor,
    KNeighborOnline,
    /// K-neighbor online training over method blocks in a fixed order.
    Curriculum,
    /// One model trained on every passage's pairs at once.
    AllContexts,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Single,
        Mode::SingleOnline,
        Mode::KNeighbor,
        Mode::KNeighborOnline,
        Mode::Curriculum,
        Mode::AllContexts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::SingleOnline => "single_online",
            Mode::KNeighbor => "k_neighbor",
            Mode::KNeighborOnline => "k_neighbor_online",
            Mode::Curriculum => "curriculum",
            Mode::AllContexts => "all_contexts",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(self, Mode::SingleOnline | Mode::KNeighborOnline | Mode::Curriculum)
    }

    pub fn uses_neighbors(self) -> bool {
        matches!(self, Mode::KNeighbor | Mode::KNeighborOnline | Mode::Curriculum)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Where the feature parameters come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Init {
    #[default]
    Default,
    Checkpoint(PathBuf),
}

impl Serialize for Init {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Init::Default => s.serialize_str("default"),
            Init::Checkpoint(p) => s.collect_str(&p.display()),
        }
    }
}

impl<'de> Deserialize<'de> for Init {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(String::deserialize(d)?.parse().expect("infallible"))
    }
}

impl FromStr for Init {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("default") {
            Init::Default
        } else {
            Init::Checkpoint(PathBuf::from(s))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtlConfig {
    pub mode: Mode,
    /// Passages per training pool in neighbor modes, the passage included.
    pub k: usize,
    /// Training steps per passage; the mode default when unset.
    pub steps: Option<usize>,
    pub batch: usize,
    /// Permit batch sizes outside the usual range.
    pub allow_any_batch: bool,
    pub lr: f64,
    pub qa_cap: usize,
    pub per_method_quota: usize,
    pub methods: Vec<Method>,
    pub order: QaOrder,
    pub init: Init,
    /// With a checkpoint, also start from its answering head.
    pub load_head: bool,
    pub seed: u64,
    pub model: ModelConfig,
    pub stopwords: usize,
    pub max_answer_len: usize,
    /// Worker threads for non-online modes; all cores when unset.
    pub workers: Option<usize>,
}

impl Default for TtlConfig {
    fn default() -> Self {
        TtlConfig {
            mode: Mode::Single,
            k: 5,
            steps: None,
            batch: DEFAULT_BATCH,
            allow_any_batch: false,
            lr: DEFAULT_LR,
            qa_cap: 4000,
            per_method_quota: 1000,
            methods: Method::DEFAULT.to_vec(),
            order: QaOrder::Shuffled,
            init: Init::Default,
            load_head: false,
            seed: 0,
            model: ModelConfig::default(),
            stopwords: DEFAULT_STOPWORDS,
            max_answer_len: MAX_ANSWER_LEN,
            workers: None,
        }
    }
}

impl TtlConfig {
    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(if self.mode.is_online() {
            DEFAULT_ONLINE_STEPS
        } else {
            DEFAULT_STEPS
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.steps() > MAX_STEPS {
            return fail(format!("steps = {} exceeds the ceiling of {MAX_STEPS}", self.steps()));
        }
        if self.batch == 0 || (!self.allow_any_batch && !BATCH_RANGE.contains(&self.batch)) {
            return fail(format!(
                "batch = {} outside {}..={} (set allow_any_batch to override)",
                self.batch,
                BATCH_RANGE.start(),
                BATCH_RANGE.end()
            ));
        }
        if self.mode.uses_neighbors() && !(1..=MAX_NEIGHBORS).contains(&self.k) {
            return fail(format!("k = {} outside 1..={MAX_NEIGHBORS}", self.k));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr = {} must be positive", self.lr));
        }
        if self.qa_cap == 0 {
            return fail("qa_cap must be at least 1".into());
        }
        if self.methods.is_empty() {
            return fail("no generation methods selected".into());
        }
        if self.max_answer_len == 0 {
            return fail("max_answer_len must be at least 1".into());
        }
        if self.model.d < 2 || self.model.pmax == 0 {
            return fail(format!(
                "bad model dimensions d = {}, pmax = {}",
                self.model.d, self.model.pmax
            ));
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1".into());
        }
        if let QaOrder::Curriculum(_) = &self.order {
            let probe = AssemblyConfig {
                order: self.order.clone(),
                ..AssemblyConfig::default()
            };
            arrange(Vec::new(), &probe)?;
        }
        Ok(())
    }

    fn assembly(&self, seed: u64) -> AssemblyConfig {
        AssemblyConfig {
            methods: self.methods.clone(),
            cap: self.qa_cap,
            per_method_quota: self.per_method_quota,
            order: self.order.clone(),
            seed,
        }
    }

    fn sequential_batches(&self) -> bool {
        matches!(self.order, QaOrder::Curriculum(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionPrediction {
    pub question_id: String,
    pub text: String,
    pub start_char: usize,
    pub end_char: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub context_id: String,
    pub mode: Mode,
    /// Passages whose pairs formed the training pool, this one first.
    pub contexts_used: Vec<String>,
    pub pair_counts: BTreeMap<Method, usize>,
    pub pairs: usize,
    pub examples: usize,
    pub steps: usize,
    pub batch: usize,
    /// Loss before each step.
    pub losses: Vec<f64>,
    pub predictions: Vec<QuestionPrediction>,
    /// Digest of the answering head when training on this passage began
    /// and when it ended.
    pub head_start: u64,
    pub head_end: u64,
    /// False when the passage yielded no pairs and was answered untrained.
    pub trained: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PartialEq for RunRecord {
    fn eq(&self, o: &Self) -> bool {
        self.context_id == o.context_id
            && self.mode == o.mode
            && self.contexts_used == o.contexts_used
            && self.pair_counts == o.pair_counts
            && self.pairs == o.pairs
            && self.examples == o.examples
            && self.steps == o.steps
            && self.batch == o.batch
            && self.losses == o.losses
            && self.predictions == o.predictions
            && self.head_start == o.head_start
            && self.head_end == o.head_end
            && self.trained == o.trained
    }
}

impl RunRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// The step ceiling, the pool cap and the one-answer-per-question rule.
    pub fn check_limits(&self, cfg: &TtlConfig, questions: usize) -> Result<()> {
        let cap = if self.mode == Mode::AllContexts {
            usize::MAX
        } else {
            cfg.qa_cap
        };
        if self.steps > cfg.steps().min(MAX_STEPS) || self.pairs > cap || self.predictions.len() != questions {
            return Err(Error::Validation(format!(
                "context `{}`: {} steps, {} pairs, {} predictions for {questions} questions",
                self.context_id,
                self.steps,
                self.pairs,
                self.predictions.len()
            )));
        }
        Ok(())
    }
}

/// Question id → predicted answer text over a set of records.
pub fn predictions_map(records: &[RunRecord]) -> BTreeMap<String, String> {
    records
        .iter()
        .flat_map(|r| r.predictions.iter().map(|p| (p.question_id.clone(), p.text.clone())))
        .collect()
}

fn head_seed(seed: u64, context_id: &str) -> u64 {
    seed ^ fnv1a(context_id.as_bytes())
}

/// Shared starting point of every run over one corpus: the vocabulary and
/// feature parameters, the optimizer state a checkpoint brought along, and
/// the retrieval index for neighbor modes.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub corpus: &'a Corpus,
    pub cfg: TtlConfig,
    pub base: SpanModel,
    pub base_optim: Option<Adam>,
    pub index: Option<Index>,
}

fn corpus_words(corpus: &Corpus) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for ctx in &corpus.contexts {
        words.extend(ctx.tokens.iter().map(|t| t.text.clone()));
    }
    for q in &corpus.questions {
        words.extend(question_tokens(&q.question));
    }
    words
}

/// Validate `cfg`, build the vocabulary and the starting model, and index
/// the corpus if the mode retrieves neighbors.
pub fn prepare<'a>(corpus: &'a Corpus, cfg: &TtlConfig) -> Result<Prepared<'a>> {
    prepare_with_index(corpus, cfg, None)
}

pub fn prepare_with_index<'a>(corpus: &'a Corpus, cfg: &TtlConfig, index: Option<Index>) -> Result<Prepared<'a>> {
    cfg.validate()?;
    if corpus.contexts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let words = corpus_words(corpus);
    let (base, base_optim) = match &cfg.init {
        Init::Default => {
            let (model, _) = init_model(Vocabulary::new(&words), cfg.model, cfg.seed, cfg.lr)?;
            (model, None)
        }
        Init::Checkpoint(path) => {
            let ck = load_checkpoint(path)?;
            ck.check_config(cfg.model)?;
            let mut model = ck.model;
            let mut optim = ck.optim;
            let added = model.extend_vocab(&words, cfg.seed, optim.as_mut());
            log::info!("checkpoint vocabulary extended by {added} words");
            if let Some(opt) = &mut optim {
                opt.lr = cfg.lr;
            }
            (model, optim)
        }
    };
    let index = match index {
        Some(i) => Some(i),
        None if cfg.mode.uses_neighbors() => Some(build_index(&corpus.contexts, cfg.stopwords)?),
        None => None,
    };
    Ok(Prepared {
        corpus,
        cfg: cfg.clone(),
        base,
        base_optim,
        index,
    })
}

impl Prepared<'_> {
    fn fresh_optim(&self, model: &SpanModel) -> Adam {
        self.base_optim
            .clone()
            .unwrap_or_else(|| Adam::new(&model.params, self.cfg.lr))
    }

    /// Model and optimizer for a passage trained from scratch.
    fn start_for(&self, context_id: &str) -> (SpanModel, Adam) {
        let mut model = self.base.clone();
        let keep_head = self.cfg.load_head && matches!(self.cfg.init, Init::Checkpoint(_));
        if !keep_head {
            model.reset_head(head_seed(self.cfg.seed, context_id));
        }
        let optim = self.fresh_optim(&model);
        (model, optim)
    }

    fn pool<'c>(&'c self, ctx: &'c AnnotatedContext, neighbors: bool) -> Result<Vec<&'c AnnotatedContext>> {
        if !neighbors {
            return Ok(vec![ctx]);
        }
        let index = self
            .index
            .as_ref()
            .ok_or_else(|| Error::Config("neighbor mode without a retrieval index".into()))?;
        expand_context(index, ctx, self.cfg.k, &self.corpus.contexts)
    }

    /// Ordered training pairs for `ctx` and the passages they come from.
    pub fn training_pairs<'c>(
        &'c self,
        ctx: &'c AnnotatedContext,
        neighbors: bool,
    ) -> Result<(Vec<&'c AnnotatedContext>, Vec<SyntheticQa>)> {
        let pool = self.pool(ctx, neighbors)?;
        let assembly = self.cfg.assembly(head_seed(self.cfg.seed, &ctx.id));
        let pairs = if pool.len() == 1 {
            assemble_training_set(ctx, &assembly)?
        } else {
            assemble_pooled(&pool, &assembly)?
        };
        Ok((pool, pairs))
    }

    fn questions_for(&self, ctx: &AnnotatedContext) -> Vec<&Question> {
        self.corpus
            .questions
            .iter()
            .filter(|q| q.context_id == ctx.id)
            .collect()
    }
}

fn encode_examples(model: &SpanModel, pool: &[&AnnotatedContext], pairs: &[SyntheticQa]) -> Vec<Example> {
    let by_id: HashMap<&str, &AnnotatedContext> = pool.iter().map(|c| (c.id.as_str(), *c)).collect();
    pairs
        .iter()
        .flat_map(|qa| match by_id.get(qa.context_id.as_str()) {
            Some(ctx) => examples_for(model, ctx, qa),
            None => Vec::new(),
        })
        .collect()
}

struct Trained {
    steps: usize,
    batch: usize,
    losses: Vec<f64>,
    examples: usize,
}

fn fit(model: &mut SpanModel, optim: &mut Adam, examples: &[Example], cfg: &TtlConfig, seed: u64) -> Result<Trained> {
    let steps = cfg.steps();
    let batch = cfg.batch.min(examples.len());
    let mut batcher = Batcher::new(examples.len(), !cfg.sequential_batches(), seed);
    let mut losses = Vec::with_capacity(steps);
    if examples.is_empty() {
        return Ok(Trained {
            steps: 0,
            batch: 0,
            losses,
            examples: 0,
        });
    }
    for _ in 0..steps {
        let ids = batcher.next_batch(batch);
        let chunk: Vec<Example> = ids.into_iter().map(|i| examples[i].clone()).collect();
        losses.push(train_step(model, optim, &chunk)?);
    }
    Ok(Trained {
        steps,
        batch,
        losses,
        examples: examples.len(),
    })
}

fn answer(
    model: &SpanModel,
    ctx: &AnnotatedContext,
    questions: &[&Question],
    max_len: usize,
) -> Result<Vec<QuestionPrediction>> {
    questions
        .iter()
        .map(|q| {
            let p = predict_span(model, ctx, &q.question, max_len)?;
            Ok(QuestionPrediction {
                question_id: q.id.clone(),
                text: p.text,
                start_char: p.start_char,
                end_char: p.end_char,
                score: p.score,
            })
        })
        .collect()
}

fn count_methods(pairs: &[SyntheticQa]) -> BTreeMap<Method, usize> {
    let mut counts = BTreeMap::new();
    for qa in pairs {
        *counts.entry(qa.method).or_default() += 1;
    }
    counts
}

/// Train `model` on `ctx` (and its neighbors) and answer `questions`.
fn adapt(
    prep: &Prepared,
    model: &mut SpanModel,
    optim: &mut Adam,
    ctx: &AnnotatedContext,
    questions: &[&Question],
    neighbors: bool,
) -> Result<RunRecord> {
    let clock = Instant::now();
    let (pool, pairs) = prep.training_pairs(ctx, neighbors)?;
    let examples = encode_examples(model, &pool, &pairs);
    let head_start = model.head_digest();
    let trained = fit(model, optim, &examples, &prep.cfg, head_seed(prep.cfg.seed, &ctx.id))?;
    let predictions = answer(model, ctx, questions, prep.cfg.max_answer_len)?;
    Ok(RunRecord {
        context_id: ctx.id.clone(),
        mode: prep.cfg.mode,
        contexts_used: pool.iter().map(|c| c.id.clone()).collect(),
        pair_counts: count_methods(&pairs),
        pairs: pairs.len(),
        examples: trained.examples,
        steps: trained.steps,
        batch: trained.batch,
        losses: trained.losses,
        predictions,
        head_start,
        head_end: model.head_digest(),
        trained: trained.steps > 0,
        wall_time: clock.elapsed(),
    })
}

/// Record for a passage that produced no pairs: answered by the model as it
/// stands.
fn untrained(prep: &Prepared, model: &SpanModel, ctx: &AnnotatedContext, questions: &[&Question]) -> Result<RunRecord> {
    let clock = Instant::now();
    Ok(RunRecord {
        context_id: ctx.id.clone(),
        mode: prep.cfg.mode,
        contexts_used: vec![ctx.id.clone()],
        pair_counts: BTreeMap::new(),
        pairs: 0,
        examples: 0,
        steps: 0,
        batch: 0,
        losses: Vec::new(),
        predictions: answer(model, ctx, questions, prep.cfg.max_answer_len)?,
        head_start: model.head_digest(),
        head_end: model.head_digest(),
        trained: false,
        wall_time: clock.elapsed(),
    })
}

/// Fresh head, this passage's pairs only, nothing kept afterwards.
pub fn run_single_context(prep: &Prepared, ctx: &AnnotatedContext, questions: &[&Question]) -> Result<RunRecord> {
    let (mut model, mut optim) = prep.start_for(&ctx.id);
    adapt(prep, &mut model, &mut optim, ctx, questions, false)
}

/// Like [`run_single_context`] over the pooled pairs of `ctx` and its
/// `k - 1` nearest neighbors.
pub fn run_k_neighbor(prep: &Prepared, ctx: &AnnotatedContext, questions: &[&Question]) -> Result<RunRecord> {
    let (mut model, mut optim) = prep.start_for(&ctx.id);
    adapt(prep, &mut model, &mut optim, ctx, questions, true)
}

/// Model and optimizer carried across a stream of passages.
#[derive(Debug, Clone)]
pub struct OnlineSession<'p, 'a> {
    prep: &'p Prepared<'a>,
    state: Option<(SpanModel, Adam)>,
    neighbors: bool,
}

impl<'p, 'a> OnlineSession<'p, 'a> {
    pub fn new(prep: &'p Prepared<'a>) -> Self {
        let neighbors = prep.cfg.mode.uses_neighbors();
        OnlineSession {
            prep,
            state: None,
            neighbors,
        }
    }

    /// The model as left by the last passage, if any.
    pub fn model(&self) -> Option<&SpanModel> {
        self.state.as_ref().map(|(m, _)| m)
    }

    pub fn optimizer(&self) -> Option<&Adam> {
        self.state.as_ref().map(|(_, o)| o)
    }

    /// Adapt to the next passage. The first passage starts exactly as in
    /// the non-online mode; later ones continue from the previous state.
    pub fn step(&mut self, ctx: &AnnotatedContext, questions: &[&Question]) -> Result<RunRecord> {
        let (mut model, mut optim) = match self.state.take() {
            Some(s) => s,
            None => self.prep.start_for(&ctx.id),
        };
        let out = match adapt(self.prep, &mut model, &mut optim, ctx, questions, self.neighbors) {
            Err(Error::NoTrainablePairs(id)) => {
                log::warn!("no trainable pairs for `{id}`; answering with the carried model");
                untrained(self.prep, &model, ctx, questions)
            }
            other => other,
        };
        self.state = Some((model, optim));
        out
    }
}

/// Sequential adaptation over `stream` in the given order.
pub fn run_online(prep: &Prepared, stream: &[&AnnotatedContext]) -> Result<Vec<RunRecord>> {
    let mut session = OnlineSession::new(prep);
    stream
        .iter()
        .map(|ctx| session.step(ctx, &prep.questions_for(ctx)))
        .collect()
}

/// Online neighbor training with block-ordered pairs and sequential
/// batches; the order comes from the configuration.
pub fn run_curriculum(prep: &Prepared, stream: &[&AnnotatedContext]) -> Result<Vec<RunRecord>> {
    run_online(prep, stream)
}

/// One model trained on every passage's pairs together, then used to
/// answer every question without further adaptation.
pub fn run_all_contexts_baseline(prep: &Prepared) -> Result<Vec<RunRecord>> {
    let clock = Instant::now();
    let (mut model, mut optim) = prep.start_for("");
    let mut pairs = Vec::new();
    let mut per_context = BTreeMap::new();
    for ctx in &prep.corpus.contexts {
        match assemble_training_set(ctx, &prep.cfg.assembly(head_seed(prep.cfg.seed, &ctx.id))) {
            Ok(p) => {
                per_context.insert(ctx.id.clone(), p.clone());
                pairs.extend(p);
            }
            Err(Error::NoTrainablePairs(id)) => log::warn!("no trainable pairs for `{id}`"),
            Err(e) => return Err(e),
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoTrainablePairs("every context".into()));
    }
    let all: Vec<&AnnotatedContext> = prep.corpus.contexts.iter().collect();
    let examples = encode_examples(&model, &all, &pairs);
    let head_start = model.head_digest();
    let trained = fit(&mut model, &mut optim, &examples, &prep.cfg, prep.cfg.seed)?;
    let shared = clock.elapsed();
    prep.corpus
        .contexts
        .iter()
        .map(|ctx| {
            let mine = per_context.get(&ctx.id).map(Vec::as_slice).unwrap_or_default();
            Ok(RunRecord {
                context_id: ctx.id.clone(),
                mode: Mode::AllContexts,
                contexts_used: all.iter().map(|c| c.id.clone()).collect(),
                pair_counts: count_methods(mine),
                pairs: mine.len(),
                examples: trained.examples,
                steps: trained.steps,
                batch: trained.batch,
                losses: trained.losses.clone(),
                predictions: answer(&model, ctx, &prep.questions_for(ctx), prep.cfg.max_answer_len)?,
                head_start,
                head_end: model.head_digest(),
                trained: trained.steps > 0,
                wall_time: shared,
            })
        })
        .collect()
}

/// Run the configured mode over the whole corpus, in corpus order.
/// Non-online modes fan out over a worker pool; a passage without pairs is
/// answered by the untrained starting model.
pub fn run(prep: &Prepared) -> Result<Vec<RunRecord>> {
    let contexts: Vec<&AnnotatedContext> = prep.corpus.contexts.iter().collect();
    match prep.cfg.mode {
        Mode::Single | Mode::KNeighbor => {
            let neighbors = prep.cfg.mode == Mode::KNeighbor;
            let one = |ctx: &&AnnotatedContext| -> Result<RunRecord> {
                let qs = prep.questions_for(ctx);
                let (mut model, mut optim) = prep.start_for(&ctx.id);
                match adapt(prep, &mut model, &mut optim, ctx, &qs, neighbors) {
                    Err(Error::NoTrainablePairs(id)) => {
                        log::warn!("no trainable pairs for `{id}`; answering untrained");
                        untrained(prep, &model, ctx, &qs)
                    }
                    other => other,
                }
            };
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = prep.cfg.workers {
                builder = builder.num_threads(n);
            }
            let pool = builder
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| contexts.par_iter().map(one).collect())
        }
        Mode::SingleOnline | Mode::KNeighborOnline => run_online(prep, &contexts),
        Mode::Curriculum => run_curriculum(prep, &contexts),
        Mode::AllContexts => run_all_contexts_baseline(prep),
    }
}

#[cfg(test)]
mod tests;
