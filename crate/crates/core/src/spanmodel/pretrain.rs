use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{examples_for, init_model, train_step, Adam, Example, ModelConfig, SpanModel, Vocabulary, DEFAULT_LR};
use crate::annotation::AnnotatedContext;
use crate::qgen::{assemble_training_set, AssemblyConfig, SyntheticQa};
use crate::{Error, Result};

/// Index stream over a training set, `size` at a time. Shuffled samplers
/// draw without replacement and reshuffle at every epoch; sequential ones
/// walk the set in order. Both wrap around.
#[derive(Debug, Clone)]
pub struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: Option<ChaCha8Rng>,
}

impl Batcher {
    pub fn new(len: usize, shuffle: bool, seed: u64) -> Self {
        let mut b = Batcher {
            order: (0..len).collect(),
            pos: 0,
            rng: shuffle.then(|| ChaCha8Rng::seed_from_u64(seed)),
        };
        b.reshuffle();
        b
    }

    fn reshuffle(&mut self) {
        if let Some(rng) = &mut self.rng {
            self.order.shuffle(rng);
        }
    }

    /// The next `size` indices (fewer only if the set itself is smaller).
    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.pos = 0;
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Per-context cap on generated pairs.
    pub qa_cap: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            model: ModelConfig::default(),
            steps: 2000,
            batch: 32,
            lr: DEFAULT_LR,
            seed: 0,
            qa_cap: 4000,
        }
    }
}

/// Train features and head jointly on the pooled synthetic pairs of
/// `contexts`. `extra_words` joins the vocabulary so later runs share ids.
pub fn pretrain(
    contexts: &[AnnotatedContext],
    extra_words: &[String],
    cfg: &PretrainConfig,
) -> Result<(SpanModel, Adam, Vec<SyntheticQa>)> {
    if cfg.batch == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let assembly = AssemblyConfig {
        cap: cfg.qa_cap,
        seed: cfg.seed,
        ..AssemblyConfig::default()
    };
    let mut per_context = Vec::new();
    for ctx in contexts {
        match assemble_training_set(ctx, &assembly) {
            Ok(pairs) => per_context.push((ctx, pairs)),
            Err(Error::NoTrainablePairs(id)) => log::warn!("pretraining: no pairs from `{id}`"),
            Err(e) => return Err(e),
        }
    }
    let pairs: Vec<SyntheticQa> = per_context.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    if pairs.is_empty() {
        return Err(Error::NoTrainablePairs("pretraining corpus".into()));
    }
    let mut words: Vec<String> = extra_words.to_vec();
    for ctx in contexts {
        words.extend(ctx.tokens.iter().map(|t| t.text.clone()));
    }
    for qa in &pairs {
        words.extend(super::question_tokens(&qa.question));
    }
    let (mut model, mut optim) = init_model(Vocabulary::new(words), cfg.model, cfg.seed, cfg.lr)?;
    let examples: Vec<Example> = per_context
        .iter()
        .flat_map(|(ctx, ps)| ps.iter().flat_map(|qa| examples_for(&model, ctx, qa)))
        .collect();
    if examples.is_empty() {
        return Err(Error::NoTrainablePairs("pretraining corpus".into()));
    }
    let mut batcher = Batcher::new(examples.len(), true, cfg.seed);
    for step in 0..cfg.steps {
        let batch: Vec<Example> = batcher
            .next_batch(cfg.batch)
            .into_iter()
            .map(|i| examples[i].clone())
            .collect();
        let loss = train_step(&mut model, &mut optim, &batch)?;
        if step % 500 == 0 {
            log::debug!("pretrain step {step}: loss {loss:.4}");
        }
    }
    Ok((model, optim, pairs))
}
