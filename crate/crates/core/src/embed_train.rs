//! CBOW embedding training with negative sampling.
//!
//! The only departure from plain word2vec CBOW is that a center token carrying
//! a sense tag (`prep::sense`) is predicted from a narrower context window
//! than ordinary tokens, so a preposition sense is learned from its immediate
//! neighbors.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embeddings::EmbeddingTable;
use crate::linalg::dot;
use crate::{Error, Result, SENSE_DELIMITER};

/// Lower bound of the linearly decaying learning rate, relative to the initial one.
const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    /// Context window used when the center token is sense-tagged.
    pub prep_window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_count: u64,
    /// Frequent-word subsampling threshold; non-positive or infinite disables it.
    pub subsample_threshold: f64,
    pub seed: u64,
    /// Draw a random effective window in `1..=window` per position.
    pub dynamic_window: bool,
    /// Hogwild-style training over `workers` shards. Not reproducible.
    pub parallel: bool,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            window: 5,
            prep_window: 2,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            min_count: 5,
            subsample_threshold: 1e-3,
            seed: 42,
            dynamic_window: false,
            parallel: false,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim as u64),
            ("window", self.window as u64),
            ("prep_window", self.prep_window as u64),
            ("negatives", self.negatives as u64),
            ("epochs", self.epochs as u64),
            ("min_count", self.min_count),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if self.prep_window > self.window {
            return Err(Error::InvalidArgument("prep_window must not exceed window".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.subsample_threshold.is_nan() {
            return Err(Error::InvalidArgument("subsample threshold is NaN".into()));
        }
        Ok(())
    }

    fn subsampling(&self) -> bool {
        self.subsample_threshold > 0.0 && self.subsample_threshold.is_finite()
    }
}

/// Token inventory with counts and the negative-sampling distribution.
#[derive(Clone, Debug)]
pub struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    tagged: Vec<bool>,
    index: HashMap<String, usize>,
    total: u64,
    sampler: WeightedIndex<f64>,
}

/// Counts tokens and keeps those seen at least `min_count` times, ordered by
/// descending count and then by token. Negatives are drawn in proportion to
/// `count^0.75`.
pub fn build_vocab<S: AsRef<[String]>>(sentences: &[S], min_count: u64) -> Result<Vocab> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in s.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("corpus".into()));
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::Empty(format!("vocabulary after min_count {min_count}")));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let words: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let counts: Vec<u64> = kept.iter().map(|(_, c)| *c).collect();
    let sampler = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(Vocab {
        tagged: words.iter().map(|w| w.contains(SENSE_DELIMITER)).collect(),
        index: words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect(),
        total: counts.iter().sum(),
        words,
        counts,
        sampler,
    })
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_tagged(&self, idx: usize) -> bool {
        self.tagged[idx]
    }

    pub fn sample_negative<R: Rng>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    /// Token ids of a sentence, dropping out-of-vocabulary tokens.
    pub fn encode(&self, sentence: &[String]) -> Vec<usize> {
        sentence.iter().filter_map(|t| self.index_of(t)).collect()
    }
}

/// Randomly discards frequent tokens. With subsampling disabled the input is
/// returned unchanged and no random numbers are drawn.
pub fn subsample<R: Rng>(ids: &[usize], vocab: &Vocab, config: &TrainConfig, rng: &mut R) -> Vec<usize> {
    if !config.subsampling() {
        return ids.to_vec();
    }
    let scaled = config.subsample_threshold * vocab.total() as f64;
    ids.iter()
        .copied()
        .filter(|&id| {
            let c = vocab.count(id) as f64;
            let keep = ((c / scaled).sqrt() + 1.0) * scaled / c;
            keep >= rng.random::<f64>()
        })
        .collect()
}

/// A center token and the context tokens that predict it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub center: usize,
    pub context: Vec<usize>,
}

/// CBOW examples for one encoded sentence. Positions whose window holds no
/// other token produce no example.
pub fn sentence_examples<R: Rng>(
    ids: &[usize],
    vocab: &Vocab,
    config: &TrainConfig,
    mut rng: Option<&mut R>,
) -> Vec<Example> {
    let mut out = Vec::with_capacity(ids.len());
    for (pos, &center) in ids.iter().enumerate() {
        let mut window = if vocab.is_tagged(center) {
            config.prep_window
        } else {
            config.window
        };
        if config.dynamic_window {
            if let Some(r) = rng.as_deref_mut() {
                window = r.random_range(1..=window);
            }
        }
        let lo = pos.saturating_sub(window);
        let hi = (pos + window + 1).min(ids.len());
        let context: Vec<usize> = (lo..hi).filter(|&j| j != pos).map(|j| ids[j]).collect();
        if !context.is_empty() {
            out.push(Example { center, context });
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Loss and gradients of one negative-sampling example.
#[derive(Clone, Debug)]
pub struct ExampleGradient {
    pub loss: f64,
    /// Gradient with respect to the mean context vector.
    pub hidden: Vec<f64>,
    /// Gradient with respect to each target's output vector, in target order.
    pub targets: Vec<Vec<f64>>,
}

/// `-ln σ(h·u_pos) - Σ ln σ(-h·u_neg)` with `h` the mean of the context rows.
/// `targets[0]` is the positive target; the rest are negatives.
pub fn example_gradient(context: &[&[f64]], targets: &[&[f64]]) -> ExampleGradient {
    let dim = targets[0].len();
    let mut h = vec![0.0; dim];
    for c in context {
        for (hi, ci) in h.iter_mut().zip(*c) {
            *hi += ci;
        }
    }
    let n = context.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);

    let mut loss = 0.0;
    let mut hidden = vec![0.0; dim];
    let mut grads = Vec::with_capacity(targets.len());
    for (t, u) in targets.iter().enumerate() {
        let label = if t == 0 { 1.0 } else { 0.0 };
        let score = dot(&h, u);
        loss -= if t == 0 {
            log_sigmoid(score)
        } else {
            log_sigmoid(-score)
        };
        let g = sigmoid(score) - label;
        for (hg, ui) in hidden.iter_mut().zip(*u) {
            *hg += g * ui;
        }
        grads.push(h.iter().map(|hi| g * hi).collect());
    }
    ExampleGradient {
        loss,
        hidden,
        targets: grads,
    }
}

/// Row-major parameter matrix whose cells can be updated from several
/// threads. Concurrent updates may overwrite each other but never tear.
struct SharedMatrix {
    cells: Vec<AtomicU64>,
    dim: usize,
}

impl SharedMatrix {
    fn from_values(values: Vec<f64>, dim: usize) -> Self {
        SharedMatrix {
            cells: values.into_iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            dim,
        }
    }

    fn row(&self, i: usize) -> Vec<f64> {
        self.cells[i * self.dim..(i + 1) * self.dim]
            .iter()
            .map(|c| f64::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }

    fn add_scaled(&self, i: usize, alpha: f64, delta: &[f64]) {
        for (c, d) in self.cells[i * self.dim..(i + 1) * self.dim].iter().zip(delta) {
            let v = f64::from_bits(c.load(Ordering::Relaxed)) + alpha * d;
            if v.is_finite() {
                c.store(v.to_bits(), Ordering::Relaxed);
            }
        }
    }

    fn into_values(self) -> Vec<f64> {
        self.cells.into_iter().map(|c| f64::from_bits(c.into_inner())).collect()
    }
}

struct Model {
    input: SharedMatrix,
    output: SharedMatrix,
}

impl Model {
    /// One SGD step on `example` against `negatives`; returns the loss before
    /// the update.
    fn step(&self, example: &Example, negatives: &[usize], lr: f64) -> f64 {
        let context_rows: Vec<Vec<f64>> = example.context.iter().map(|&c| self.input.row(c)).collect();
        let target_ids: Vec<usize> = std::iter::once(example.center)
            .chain(negatives.iter().copied())
            .collect();
        let target_rows: Vec<Vec<f64>> = target_ids.iter().map(|&t| self.output.row(t)).collect();
        let ctx: Vec<&[f64]> = context_rows.iter().map(Vec::as_slice).collect();
        let tgt: Vec<&[f64]> = target_rows.iter().map(Vec::as_slice).collect();
        let grad = example_gradient(&ctx, &tgt);

        for (&t, g) in target_ids.iter().zip(&grad.targets) {
            self.output.add_scaled(t, -lr, g);
        }
        let per_context = -lr / example.context.len() as f64;
        for &c in &example.context {
            self.input.add_scaled(c, per_context, &grad.hidden);
        }
        grad.loss
    }
}

fn draw_negatives<R: Rng>(vocab: &Vocab, center: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        // Redraw a few times when the sample hits the center word.
        for _ in 0..10 {
            let n = vocab.sample_negative(rng);
            if n != center {
                out.push(n);
                break;
            }
        }
    }
    out
}

/// Trained vectors plus the mean per-example loss of every epoch.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub table: EmbeddingTable,
    pub epoch_losses: Vec<f64>,
    /// Loss of the very first training example, before any update.
    pub initial_loss: Option<f64>,
}

/// Trains CBOW input vectors on tokenized sentences.
///
/// Input vectors start uniform in `[-0.5/dim, 0.5/dim]` and output vectors at
/// zero. The learning rate decays linearly with the number of tokens
/// processed. In the default single-worker mode the result depends only on
/// the corpus and `config`.
pub fn train_cbow<S: AsRef<[String]> + Sync>(sentences: &[S], config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let vocab = build_vocab(sentences, config.min_count)?;
    let encoded: Vec<Vec<usize>> = sentences.iter().map(|s| vocab.encode(s.as_ref())).collect();
    let dim = config.dim;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = 0.5 / dim as f64;
    let init: Vec<f64> = (0..vocab.len() * dim).map(|_| rng.random_range(-half..half)).collect();
    let model = Model {
        input: SharedMatrix::from_values(init, dim),
        output: SharedMatrix::from_values(vec![0.0; vocab.len() * dim], dim),
    };

    let words_per_epoch: u64 = encoded.iter().map(|s| s.len() as u64).sum();
    let total_words = (words_per_epoch * config.epochs as u64).max(1);
    let processed = AtomicU64::new(0);
    let lr_at = |done: u64| {
        let progress = done as f64 / total_words as f64;
        config.initial_lr * (1.0 - progress).max(MIN_LR_FRACTION)
    };

    // Returns the summed loss, the example count and the first example's loss.
    let run_shard = |shard: &[Vec<usize>], rng: &mut ChaCha8Rng| -> (f64, u64, Option<f64>) {
        let mut loss = 0.0;
        let mut examples = 0u64;
        let mut first = None;
        for ids in shard {
            let kept = subsample(ids, &vocab, config, rng);
            let batch = sentence_examples(&kept, &vocab, config, Some(&mut *rng));
            let lr = lr_at(processed.load(Ordering::Relaxed));
            for ex in &batch {
                let negatives = draw_negatives(&vocab, ex.center, config.negatives, rng);
                let l = model.step(ex, &negatives, lr);
                first.get_or_insert(l);
                loss += l;
                examples += 1;
            }
            processed.fetch_add(ids.len() as u64, Ordering::Relaxed);
        }
        (loss, examples, first)
    };

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut initial_loss = None;
    let workers = if config.parallel { config.workers.max(1) } else { 1 };
    let mut shard_rngs: Vec<ChaCha8Rng> = (0..workers)
        .map(|w| {
            let mut r = rng.clone();
            r.set_stream(w as u64);
            r
        })
        .collect();
    let shard_len = encoded.len().div_ceil(workers).max(1);
    for _ in 0..config.epochs {
        let (loss, examples, first) = if workers == 1 {
            run_shard(&encoded, &mut shard_rngs[0])
        } else {
            encoded
                .par_chunks(shard_len)
                .zip(shard_rngs.par_iter_mut())
                .map(|(shard, r)| run_shard(shard, r))
                .reduce(|| (0.0, 0, None), |a, b| (a.0 + b.0, a.1 + b.1, a.2.or(b.2)))
        };
        if initial_loss.is_none() {
            initial_loss = first;
        }
        epoch_losses.push(if examples > 0 { loss / examples as f64 } else { 0.0 });
    }

    let values = model.input.into_values();
    let rows = vocab
        .words()
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), values[i * dim..(i + 1) * dim].to_vec()));
    let table = EmbeddingTable::from_rows(dim, rows)?.table;
    Ok(TrainOutput {
        table,
        epoch_losses,
        initial_loss,
    })
}

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
}

/// Checks [`example_gradient`] against central finite differences (step
/// `1e-5`) on a random example over a 10-word vocabulary. Uses `config.dim`
/// (at most 8), `config.negatives` and `config.seed`.
pub fn gradient_check(config: &TrainConfig) -> Result<GradientCheck> {
    const VOCAB: usize = 10;
    const STEP: f64 = 1e-5;
    if config.dim == 0 || config.dim > 8 {
        return Err(Error::InvalidArgument("gradient check needs 1 <= dim <= 8".into()));
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f64> = (0..VOCAB * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut output: Vec<f64> = (0..VOCAB * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let context: Vec<usize> = (0..4).map(|_| rng.random_range(0..VOCAB)).collect();
    let targets: Vec<usize> = (0..=config.negatives).map(|_| rng.random_range(0..VOCAB)).collect();

    let loss_of = |input: &[f64], output: &[f64]| -> ExampleGradient {
        let ctx: Vec<&[f64]> = context.iter().map(|&c| &input[c * dim..(c + 1) * dim]).collect();
        let tgt: Vec<&[f64]> = targets.iter().map(|&t| &output[t * dim..(t + 1) * dim]).collect();
        example_gradient(&ctx, &tgt)
    };

    // Scatter the per-slot gradients onto the parameter matrices.
    let grad = loss_of(&input, &output);
    let mut analytic_in = vec![0.0; VOCAB * dim];
    let mut analytic_out = vec![0.0; VOCAB * dim];
    for &c in &context {
        for k in 0..dim {
            analytic_in[c * dim + k] += grad.hidden[k] / context.len() as f64;
        }
    }
    for (&t, g) in targets.iter().zip(&grad.targets) {
        for k in 0..dim {
            analytic_out[t * dim + k] += g[k];
        }
    }

    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let mut worst: f64 = 0.0;
    for p in 0..VOCAB * dim {
        let orig = input[p];
        input[p] = orig + STEP;
        let plus = loss_of(&input, &output).loss;
        input[p] = orig - STEP;
        let minus = loss_of(&input, &output).loss;
        input[p] = orig;
        worst = worst.max(rel(analytic_in[p], (plus - minus) / (2.0 * STEP)));

        let orig = output[p];
        output[p] = orig + STEP;
        let plus = loss_of(&input, &output).loss;
        output[p] = orig - STEP;
        let minus = loss_of(&input, &output).loss;
        output[p] = orig;
        worst = worst.max(rel(analytic_out[p], (plus - minus) / (2.0 * STEP)));
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        parameters_checked: 2 * VOCAB * dim,
    })
}
