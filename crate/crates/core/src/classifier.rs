//! Binary relation classifier `g(x) = σ(w·f(x) + b)` over a frozen encoder,
//! N-way pre-training of that encoder, and negative-sampling fine-tuning of
//! the head for a new relation.
//!
//! Fine-tuning minimizes, per minibatch of positives `S_b` drawn from the
//! selected set and negatives `T_b` drawn from the labeled corpus of existing
//! relations,
//!
//! ```text
//! L = −[ Σ_{x∈S_b} ln g(x) + μ · Σ_{x∈T_b} ln(1 − g(x)) ]
//! ```
//!
//! i.e. the negated log-likelihood of the weighted objective, with `μ`
//! down-weighting the sampled negatives.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{sample_positions, Instance, LabeledCorpus, SeedSet};
use crate::encoder::{ConvEncoder, Encoder, Representation};
use crate::error::{Error, Result};
use crate::math;
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, Rng};
use crate::rsn::TrainReport;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierHead {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ClassifierHead {
    pub fn zeros(dim: usize) -> Self {
        ClassifierHead { w: vec![0.0; dim], b: 0.0 }
    }

    /// Uniform in ±0.01; the seeded alternative to zero initialization.
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        ClassifierHead { w: (0..dim).map(|_| rng.gen_range(-0.01..0.01)).collect(), b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.w.iter().all(|v| v.is_finite())
    }

    pub fn logit(&self, f: &[f64]) -> f64 {
        math::dot(&self.w, f) + self.b
    }

    /// `g` for an already-encoded instance.
    pub fn probability(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.w.len() {
            return Err(Error::DimensionMismatch { expected: self.w.len(), found: f.len() });
        }
        Ok(math::sigmoid(self.logit(f)))
    }

    /// Probability that `x` expresses the relation this head was tuned for.
    pub fn predict<E: Encoder + ?Sized>(&self, encoder: &E, x: &Instance) -> Result<f64> {
        if encoder.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: encoder.dim() });
        }
        self.probability(&encoder.encode(x)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub neg_coef: f64,
    /// Start from a small seeded random head instead of zeros.
    #[cfg_attr(feature = "serde", serde(default))]
    pub random_init: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig { epochs: 50, batch_size: 10, learning_rate: 0.05, neg_coef: 0.2, random_init: false, seed: 0 }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("fine-tuning batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.neg_coef >= 0.0) || !self.neg_coef.is_finite() {
            return Err(Error::InvalidConfig(format!("negative coefficient {} must be >= 0", self.neg_coef)));
        }
        Ok(())
    }

    /// The head a fresh fine-tune starts from.
    pub fn initial_head(&self, dim: usize) -> ClassifierHead {
        if self.random_init {
            ClassifierHead::random(dim, &mut rng::seeded(rng::derive_seed(self.seed, u64::MAX)))
        } else {
            ClassifierHead::zeros(dim)
        }
    }
}

/// The two terms of the fine-tuning loss; `total = positive + μ·negative`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub positive: f64,
    pub negative: f64,
    pub total: f64,
}

pub fn finetune_loss(head: &ClassifierHead, positives: &[&[f64]], negatives: &[&[f64]], neg_coef: f64) -> LossParts {
    let positive: f64 = positives.iter().map(|f| -math::log_sigmoid(head.logit(f))).sum();
    let negative: f64 = negatives.iter().map(|f| -math::log_sigmoid(-head.logit(f))).sum();
    LossParts { positive, negative, total: positive + neg_coef * negative }
}

/// Loss together with `∂L/∂w` and `∂L/∂b`.
pub fn finetune_gradient(
    head: &ClassifierHead,
    positives: &[&[f64]],
    negatives: &[&[f64]],
    neg_coef: f64,
) -> (LossParts, Vec<f64>, f64) {
    let mut gw = vec![0.0; head.dim()];
    let mut gb = 0.0;
    let (mut pos, mut neg) = (0.0, 0.0);
    for f in positives {
        let z = head.logit(f);
        pos -= math::log_sigmoid(z);
        // d/dz −ln σ(z) = σ(z) − 1
        let dz = math::sigmoid(z) - 1.0;
        gw.iter_mut().zip(f.iter()).for_each(|(g, v)| *g += dz * v);
        gb += dz;
    }
    for f in negatives {
        let z = head.logit(f);
        neg -= math::log_sigmoid(-z);
        let dz = neg_coef * math::sigmoid(z);
        gw.iter_mut().zip(f.iter()).for_each(|(g, v)| *g += dz * v);
        gb += dz;
    }
    (LossParts { positive: pos, negative: neg, total: pos + neg_coef * neg }, gw, gb)
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FinetuneReport {
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

impl FinetuneReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(0.0)
    }
}

/// Fine-tunes `(w, b)` on encoded positives against negatives sampled
/// uniformly with replacement from `negative_pool`. Each epoch shuffles the
/// positives and walks them in consecutive chunks of `batch_size` (the last
/// chunk may be short); every chunk gets a fresh negative batch of
/// `batch_size`.
pub fn finetune_representations(
    mut head: ClassifierHead,
    positives: &[&[f64]],
    negative_pool: &[&[f64]],
    cfg: &FinetuneConfig,
) -> Result<(ClassifierHead, FinetuneReport)> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    if negative_pool.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for f in positives.iter().chain(negative_pool) {
        if f.len() != head.dim() {
            return Err(Error::DimensionMismatch { expected: head.dim(), found: f.len() });
        }
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate), &[head.dim(), 1]);
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut report = FinetuneReport::default();
    let mut batch_pos: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_neg: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch_pos.clear();
            batch_pos.extend(chunk.iter().map(|&i| positives[i]));
            batch_neg.clear();
            batch_neg.extend(sample_positions(negative_pool.len(), cfg.batch_size, &mut rng)?.into_iter().map(|i| negative_pool[i]));
            let (loss, gw, gb) = finetune_gradient(&head, &batch_pos, &batch_neg, cfg.neg_coef);
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { stage: "fine-tuning", epoch, step });
            }
            epoch_loss += loss.total;
            batches += 1;
            let gb = [gb];
            adam.step(&mut [Some(&mut head.w[..]), Some(core::slice::from_mut(&mut head.b))], &[&gw, &gb]);
            report.steps += 1;
        }
        report.epoch_losses.push(epoch_loss / batches as f64);
    }
    if !head.is_finite() {
        return Err(Error::NonFiniteLoss { stage: "fine-tuning", epoch: cfg.epochs, step: 0 });
    }
    Ok((head, report))
}

/// Fine-tunes a head for `seeds.relation()` on top of a frozen encoder, with
/// negatives drawn from `existing`.
pub fn finetune<E: Encoder + ?Sized>(
    head: ClassifierHead,
    encoder: &E,
    seeds: &SeedSet,
    existing: &LabeledCorpus,
    cfg: &FinetuneConfig,
) -> Result<(ClassifierHead, FinetuneReport)> {
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let pos: Vec<Representation> = seeds.instances().iter().map(|x| encoder.encode(x)).collect::<Result<_>>()?;
    let neg: Vec<Representation> = existing.instances().iter().map(|x| encoder.encode(x)).collect::<Result<_>>()?;
    let pos: Vec<&[f64]> = pos.iter().map(|r| r.as_slice()).collect();
    let neg: Vec<&[f64]> = neg.iter().map(|r| r.as_slice()).collect();
    finetune_representations(head, &pos, &neg, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub freeze_word_embeddings: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { epochs: 10, batch_size: 64, adam: AdamConfig::default(), freeze_word_embeddings: false, seed: 0 }
    }
}

/// Softmax layer used only while pre-training the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLayer {
    /// `[classes × dim]`
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub dim: usize,
}

impl SoftmaxLayer {
    fn probabilities(&self, f: &[f64]) -> Vec<f64> {
        let mut logits: Vec<f64> = self.b.iter().enumerate().map(|(c, b)| b + math::dot(&self.w[c * self.dim..(c + 1) * self.dim], f)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logits {
            *l = math::exp(*l - max);
            total += *l;
        }
        logits.iter_mut().for_each(|p| *p /= total);
        logits
    }
}

/// Encoder plus the N-way softmax layer it was pre-trained with.
#[derive(Debug, Clone)]
pub struct NwayModel {
    pub encoder: ConvEncoder,
    pub layer: SoftmaxLayer,
    /// Class order of the softmax layer.
    pub relations: Vec<alloc::string::String>,
    pub report: TrainReport,
}

impl NwayModel {
    pub fn classify(&self, x: &Instance) -> usize {
        let probs = self.layer.probabilities(&self.encoder.forward(x).0);
        let mut best = 0;
        for (c, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = c;
            }
        }
        best
    }

    /// Fraction of labeled instances whose argmax class matches their label.
    pub fn accuracy(&self, instances: &[Instance]) -> f64 {
        if instances.is_empty() {
            return 0.0;
        }
        let hits = instances
            .iter()
            .filter(|x| x.relation.as_deref() == Some(self.relations[self.classify(x)].as_str()))
            .count();
        hits as f64 / instances.len() as f64
    }
}

fn nway_mean_loss(encoder: &ConvEncoder, layer: &SoftmaxLayer, corpus: &LabeledCorpus, labels: &[usize]) -> f64 {
    let total: f64 = corpus
        .instances()
        .iter()
        .zip(labels)
        .map(|(x, &y)| -math::ln(layer.probabilities(&encoder.forward(x).0)[y].max(1e-300)))
        .sum();
    total / corpus.len().max(1) as f64
}

/// Supervised N-way pre-training of `encoder` on the labeled corpus with a
/// temporary softmax layer and mean cross-entropy.
pub fn pretrain_nway(mut encoder: ConvEncoder, corpus: &LabeledCorpus, cfg: &PretrainConfig) -> Result<NwayModel> {
    let relations: Vec<_> = corpus.relations().to_vec();
    if relations.len() < 2 {
        return Err(Error::Infeasible("N-way pre-training needs at least two relations".into()));
    }
    if cfg.batch_size == 0 || !(cfg.adam.lr > 0.0) {
        return Err(Error::InvalidConfig("pre-training needs batch_size >= 1 and lr > 0".into()));
    }
    let labels: Vec<usize> = corpus
        .instances()
        .iter()
        .map(|x| relations.binary_search(x.relation.as_ref().expect("labeled")).expect("known relation"))
        .collect();
    let dim = encoder.dim();
    let classes = relations.len();
    let mut rng = rng::seeded(cfg.seed);
    let limit = math::sqrt(6.0 / (dim + classes) as f64);
    let mut layer = SoftmaxLayer { w: (0..classes * dim).map(|_| rng.gen_range(-limit..limit)).collect(), b: vec![0.0; classes], dim };

    let initial_loss = nway_mean_loss(&encoder, &layer, corpus, &labels);
    let mut report = TrainReport { initial_loss, epoch_losses: Vec::new(), final_loss: initial_loss };

    let mut sizes = vec![layer.w.len(), layer.b.len()];
    sizes.extend(encoder.params().tensors().iter().map(|t| t.len()));
    let mut adam = Adam::new(cfg.adam, &sizes);
    let mut grads = encoder.zero_grads();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            grads.fill_zero();
            let mut gw = vec![0.0; layer.w.len()];
            let mut gb = vec![0.0; classes];
            let mut batch_loss = 0.0;
            for &i in batch {
                let x = &corpus.instances()[i];
                let (f, trace) = encoder.forward(x);
                let mut probs = layer.probabilities(&f);
                batch_loss -= math::ln(probs[labels[i]].max(1e-300));
                probs[labels[i]] -= 1.0;
                let mut upstream = vec![0.0; dim];
                for (c, d) in probs.iter().enumerate() {
                    let d = d * scale;
                    gb[c] += d;
                    let row = &layer.w[c * dim..(c + 1) * dim];
                    for j in 0..dim {
                        gw[c * dim + j] += d * f[j];
                        upstream[j] += d * row[j];
                    }
                }
                encoder.backward_into(x, &f, &trace, &upstream, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { stage: "encoder pre-training", epoch, step });
            }
            epoch_loss += batch_loss;
            let [we, ph, pt, cf, cb] = encoder.params_mut().tensors_mut();
            let word = if cfg.freeze_word_embeddings { None } else { Some(we) };
            let mut params = [Some(&mut layer.w[..]), Some(&mut layer.b[..]), word, Some(ph), Some(pt), Some(cf), Some(cb)];
            let [gwe, gph, gpt, gcf, gcb] = grads.tensors();
            adam.step(&mut params, &[&gw, &gb, gwe, gph, gpt, gcf, gcb]);
        }
        report.epoch_losses.push(epoch_loss / corpus.len() as f64);
    }
    if cfg.epochs > 0 {
        report.final_loss = nway_mean_loss(&encoder, &layer, corpus, &labels);
        if !report.final_loss.is_finite() || !encoder.params().is_finite() {
            return Err(Error::NonFiniteLoss { stage: "encoder pre-training", epoch: cfg.epochs, step: 0 });
        }
    }
    Ok(NwayModel { encoder, layer, relations, report })
}

/// Pre-trains the encoder and discards the softmax layer.
pub fn pretrain_encoder(encoder: ConvEncoder, corpus: &LabeledCorpus, cfg: &PretrainConfig) -> Result<(ConvEncoder, TrainReport)> {
    let model = pretrain_nway(encoder, corpus, cfg)?;
    Ok((model.encoder, model.report))
}
