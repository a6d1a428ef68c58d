//! Relational siamese network: a shared encoder followed by a trainable
//! weighted squared-L2 head,
//! `s(x, y) = σ(Σᵢ w_s[i]·(f(x)[i] − f(y)[i])² + b_s)`.
//!
//! With negative weights, small representation gaps map to high same-relation
//! probabilities.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::corpus::{Instance, LabeledPair};
use crate::encoder::{ConvEncoder, Encoder, InstanceEncoder, PoolTrace, Representation};
use crate::error::{Error, Result};
use crate::math;
use crate::optim::{Adam, AdamConfig};
use crate::rng;

/// Weighted squared-L2 distance head.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistanceHead {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Loss and gradients of the binary cross-entropy for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl DistanceHead {
    /// `w = −1/d`, `b = 1`: identical inputs score σ(1) and the score falls
    /// as the squared gap grows.
    pub fn new(dim: usize) -> Self {
        DistanceHead { w: vec![-1.0 / dim.max(1) as f64; dim], b: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.w.iter().all(|v| v.is_finite())
    }

    pub fn logit(&self, fx: &[f64], fy: &[f64]) -> f64 {
        debug_assert_eq!(fx.len(), self.w.len());
        debug_assert_eq!(fy.len(), self.w.len());
        let mut z = self.b;
        for ((w, a), c) in self.w.iter().zip(fx).zip(fy) {
            let d = a - c;
            z += w * d * d;
        }
        z
    }

    pub fn similarity(&self, fx: &[f64], fy: &[f64]) -> f64 {
        math::sigmoid(self.logit(fx, fy))
    }

    /// `−[t·ln s + (1−t)·ln(1−s)]`.
    pub fn pair_loss(&self, fx: &[f64], fy: &[f64], same: bool) -> f64 {
        let z = self.logit(fx, fy);
        if same {
            -math::log_sigmoid(z)
        } else {
            -math::log_sigmoid(-z)
        }
    }

    pub fn pair_gradient(&self, fx: &[f64], fy: &[f64], same: bool) -> PairGradient {
        let z = self.logit(fx, fy);
        let s = math::sigmoid(z);
        let t = if same { 1.0 } else { 0.0 };
        let dz = s - t;
        let loss = if same { -math::log_sigmoid(z) } else { -math::log_sigmoid(-z) };
        let mut w = Vec::with_capacity(fx.len());
        let mut left = Vec::with_capacity(fx.len());
        for ((wi, a), c) in self.w.iter().zip(fx).zip(fy) {
            let d = a - c;
            w.push(dz * d * d);
            left.push(dz * 2.0 * wi * d);
        }
        let right = left.iter().map(|g| -g).collect();
        PairGradient { loss, w, b: dz, left, right }
    }
}

/// Mean head similarity of `fx` against each reference representation.
pub fn mean_similarity<'a>(head: &DistanceHead, fx: &[f64], refs: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in refs {
        sum += head.similarity(fx, r);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyReferences);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsnModel {
    pub encoder: InstanceEncoder,
    pub head: DistanceHead,
}

impl RsnModel {
    /// Model with a freshly initialized head.
    pub fn new(encoder: InstanceEncoder) -> Self {
        let head = DistanceHead::new(encoder.dim());
        RsnModel { encoder, head }
    }

    pub fn with_head(encoder: InstanceEncoder, head: DistanceHead) -> Result<Self> {
        if head.dim() != encoder.dim() {
            return Err(Error::DimensionMismatch { expected: encoder.dim(), found: head.dim() });
        }
        Ok(RsnModel { encoder, head })
    }

    pub fn encode(&self, x: &Instance) -> Result<Representation> {
        self.encoder.encode(x)
    }

    /// Probability that `x` and `y` express the same relation.
    pub fn similarity(&self, x: &Instance, y: &Instance) -> Result<f64> {
        let fx = self.encode(x)?;
        let fy = self.encode(y)?;
        Ok(self.head.similarity(&fx, &fy))
    }

    /// Mean similarity of `x` to every instance in `refs`.
    pub fn score_against_set(&self, x: &Instance, refs: &[Instance]) -> Result<f64> {
        if refs.is_empty() {
            return Err(Error::EmptyReferences);
        }
        let fx = self.encode(x)?;
        let reps = refs.iter().map(|r| self.encode(r)).collect::<Result<Vec<_>>>()?;
        mean_similarity(&self.head, &fx, reps.iter().map(|r| r.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RsnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Backpropagate into a convolutional encoder. Lookup encoders are
    /// always frozen.
    pub train_encoder: bool,
    pub freeze_word_embeddings: bool,
    pub seed: u64,
}

impl Default for RsnTrainConfig {
    fn default() -> Self {
        RsnTrainConfig {
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
            train_encoder: true,
            freeze_word_embeddings: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    /// Mean loss over the training stream before any update.
    pub initial_loss: f64,
    /// Running mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss over the training stream after the last update.
    pub final_loss: f64,
}

enum PairEncoding<'m> {
    Frozen(BTreeMap<&'m str, Representation>),
    Trainable,
}

fn mean_pair_loss(model: &RsnModel, pairs: &[LabeledPair<'_>]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for p in pairs {
        let fx = model.encode(p.left)?;
        let fy = model.encode(p.right)?;
        total += model.head.pair_loss(&fx, &fy, p.same_relation);
    }
    Ok(total / pairs.len() as f64)
}

/// Trains the head (and, if enabled, a convolutional encoder) on labeled
/// pairs by minimizing mean binary cross-entropy with Adam.
pub fn pretrain_rsn(
    mut model: RsnModel,
    pairs: &[LabeledPair<'_>],
    cfg: &RsnTrainConfig,
) -> Result<(RsnModel, TrainReport)> {
    if cfg.batch_size == 0 || !(cfg.adam.lr > 0.0) {
        return Err(Error::InvalidConfig("rsn training needs batch_size >= 1 and lr > 0".into()));
    }
    let initial_loss = mean_pair_loss(&model, pairs)?;
    let mut report = TrainReport { initial_loss, epoch_losses: Vec::new(), final_loss: initial_loss };
    if cfg.epochs == 0 || pairs.is_empty() {
        return Ok((model, report));
    }

    let train_conv = cfg.train_encoder && model.encoder.as_conv().is_some();
    let mut encoding = if train_conv {
        PairEncoding::Trainable
    } else {
        let mut cache = BTreeMap::new();
        for p in pairs {
            for x in [p.left, p.right] {
                if !cache.contains_key(x.id.as_str()) {
                    cache.insert(x.id.as_str(), model.encode(x)?);
                }
            }
        }
        PairEncoding::Frozen(cache)
    };

    let d = model.head.dim();
    let mut sizes = vec![d, 1];
    if let Some(conv) = model.encoder.as_conv() {
        sizes.extend(conv.params().tensors().iter().map(|t| t.len()));
    }
    let mut adam = Adam::new(cfg.adam, &sizes);
    let mut enc_grads = model.encoder.as_conv().map(ConvEncoder::zero_grads);
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            let mut batch_loss = 0.0;
            if let Some(g) = enc_grads.as_mut() {
                g.fill_zero();
            }
            for &i in batch {
                let p = &pairs[i];
                match &mut encoding {
                    PairEncoding::Frozen(cache) => {
                        let g = model.head.pair_gradient(&cache[p.left.id.as_str()], &cache[p.right.id.as_str()], p.same_relation);
                        batch_loss += g.loss;
                        gw.iter_mut().zip(&g.w).for_each(|(a, b)| *a += b * scale);
                        gb += g.b * scale;
                    }
                    PairEncoding::Trainable => {
                        let conv = model.encoder.as_conv().expect("trainable encoder is convolutional");
                        let (fx, tx): (Representation, PoolTrace) = conv.forward(p.left);
                        let (fy, ty) = conv.forward(p.right);
                        let g = model.head.pair_gradient(&fx, &fy, p.same_relation);
                        batch_loss += g.loss;
                        gw.iter_mut().zip(&g.w).for_each(|(a, b)| *a += b * scale);
                        gb += g.b * scale;
                        let up_left: Vec<f64> = g.left.iter().map(|v| v * scale).collect();
                        let up_right: Vec<f64> = g.right.iter().map(|v| v * scale).collect();
                        let grads = enc_grads.as_mut().expect("gradient buffer");
                        conv.backward_into(p.left, &fx, &tx, &up_left, grads)?;
                        conv.backward_into(p.right, &fy, &ty, &up_right, grads)?;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { stage: "rsn pre-training", epoch, step });
            }
            epoch_loss += batch_loss;

            let head = &mut model.head;
            let mut params: Vec<Option<&mut [f64]>> = vec![Some(&mut head.w[..]), Some(core::slice::from_mut(&mut head.b))];
            let gb_arr = [gb];
            let mut grads: Vec<&[f64]> = vec![&gw, &gb_arr];
            match (model.encoder.as_conv_mut(), enc_grads.as_ref()) {
                (Some(conv), Some(eg)) => {
                    let [we, ph, pt, cf, cb] = conv.params_mut().tensors_mut();
                    if train_conv {
                        let word = if cfg.freeze_word_embeddings { None } else { Some(we) };
                        params.extend([word, Some(ph), Some(pt), Some(cf), Some(cb)]);
                    } else {
                        params.extend([None, None, None, None, None]);
                    }
                    grads.extend(eg.tensors());
                }
                _ => {}
            }
            adam.step(&mut params, &grads);
        }
        report.epoch_losses.push(epoch_loss / pairs.len() as f64);
    }
    report.final_loss = mean_pair_loss(&model, pairs)?;
    if !report.final_loss.is_finite() || !model.head.is_finite() {
        return Err(Error::NonFiniteLoss { stage: "rsn pre-training", epoch: cfg.epochs, step: 0 });
    }
    Ok((model, report))
}

/// Fraction of pairs whose similarity lies on the correct side of 0.5.
pub fn pair_accuracy(model: &RsnModel, pairs: &[LabeledPair<'_>]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for p in pairs {
        let s = model.similarity(p.left, p.right)?;
        if (s > 0.5) == p.same_relation {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::instance;
    use crate::corpus::{sample_rsn_pairs, LabeledCorpus};
    use crate::encoder::EmbeddingStore;
    use alloc::format;
    use alloc::string::String;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn store_model(vectors: &[(&str, Vec<f32>)], head: DistanceHead) -> RsnModel {
        let mut store = EmbeddingStore::new(head.dim());
        for (id, v) in vectors {
            store.insert(*id, v.clone()).unwrap();
        }
        RsnModel::with_head(store.into(), head).unwrap()
    }

    #[test]
    fn identical_representations_score_sigmoid_of_bias() {
        let head = DistanceHead { w: vec![-1.0, -1.0], b: 0.0 };
        assert_eq!(head.similarity(&[0.3, 0.4], &[0.3, 0.4]), 0.5);
        let fresh = DistanceHead::new(4);
        assert!((fresh.similarity(&[1.0; 4], &[1.0; 4]) - math::sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_similarity() {
        let model = store_model(
            &[("x", vec![1.0, 0.0]), ("y", vec![0.0, 1.0])],
            DistanceHead { w: vec![-1.0, -1.0], b: 2.0 },
        );
        let x = instance("x", 3, "a", "b", None);
        let y = instance("y", 3, "a", "b", None);
        assert_eq!(model.similarity(&x, &y).unwrap(), 0.5);
    }

    #[test]
    fn score_against_set_is_mean() {
        // Similarities 0.2 and 0.8 from logits ln(1/4) and ln(4).
        let head = DistanceHead { w: vec![1.0], b: 0.0 };
        let l1 = libm::sqrt(libm::log(4.0));
        let model = store_model(&[("x", vec![0.0]), ("a", vec![0.0]), ("b", vec![l1 as f32])], head);
        let x = instance("x", 3, "h", "t", None);
        let a = instance("a", 3, "h", "t", None);
        let b = instance("b", 3, "h", "t", None);
        let s_a = model.similarity(&x, &a).unwrap();
        assert_eq!(model.score_against_set(&x, &[a.clone()]).unwrap(), s_a);
        let mean = model.score_against_set(&x, &[a.clone(), b.clone()]).unwrap();
        assert!((mean - (s_a + model.similarity(&x, &b).unwrap()) / 2.0).abs() < 1e-15);
        assert_eq!(model.score_against_set(&x, &[]).unwrap_err(), Error::EmptyReferences);
    }

    #[test]
    fn five_reference_mean_matches_per_pair_oracle() {
        let head = DistanceHead { w: vec![-0.7, -1.3, -0.2], b: 0.4 };
        let reps: Vec<(String, Vec<f32>)> = (0..6)
            .map(|i| (format!("r{i}"), vec![i as f32 * 0.3, 1.0 - i as f32 * 0.1, (i * i) as f32 * 0.05]))
            .collect();
        let borrowed: Vec<(&str, Vec<f32>)> = reps.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        let model = store_model(&borrowed, head.clone());
        let x = instance("r0", 3, "h", "t", None);
        let refs: Vec<Instance> = (1..6).map(|i| instance(&format!("r{i}"), 3, "h", "t", None)).collect();
        let mut oracle = 0.0;
        for (_, v) in &reps[1..] {
            let mut z = head.b;
            for k in 0..3 {
                let d = f64::from(reps[0].1[k]) - f64::from(v[k]);
                z += head.w[k] * d * d;
            }
            oracle += 1.0 / (1.0 + libm::exp(-z));
        }
        oracle /= 5.0;
        assert!((model.score_against_set(&x, &refs).unwrap() - oracle).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_and_in_range(
            a in prop::collection::vec(-5.0f64..5.0, 6),
            b in prop::collection::vec(-5.0f64..5.0, 6),
            w in prop::collection::vec(-3.0f64..3.0, 6),
            bias in -3.0f64..3.0,
        ) {
            let head = DistanceHead { w, b: bias };
            let s1 = head.similarity(&a, &b);
            let s2 = head.similarity(&b, &a);
            prop_assert_eq!(s1.to_bits(), s2.to_bits());
            prop_assert!(s1 > 0.0 && s1 < 1.0);
        }

        #[test]
        fn negative_weights_make_similarity_monotone(
            a in prop::collection::vec(-2.0f64..2.0, 4),
            b in prop::collection::vec(-2.0f64..2.0, 4),
            w in prop::collection::vec(-2.0f64..-0.01, 4),
            k in 0usize..4,
            bump in 0.0f64..1.0,
        ) {
            let head = DistanceHead { w, b: 0.5 };
            let mut wider = b.clone();
            // Push b[k] further from a[k]: the squared gap cannot shrink.
            wider[k] += if b[k] >= a[k] { bump } else { -bump };
            prop_assert!(head.similarity(&a, &wider) <= head.similarity(&a, &b));
        }
    }

    fn toy_corpus(n_rel: usize, per_rel: usize, dim: usize, seed: u64) -> (LabeledCorpus, EmbeddingStore) {
        // Each relation sits at its own one-hot direction, so positives are
        // identical and negatives orthogonal.
        let mut r = rng::seeded(seed);
        let mut out = Vec::new();
        let mut store = EmbeddingStore::new(dim);
        for rel in 0..n_rel {
            for i in 0..per_rel {
                let id = format!("r{rel}-{i}-{}", r.gen_range(0..1000));
                let id = format!("{id}-{}", out.len());
                out.push(instance(&id, 3, "h", "t", Some(&format!("r{rel}"))));
                let mut v = vec![0.0f32; dim];
                v[rel] = 1.0;
                store.insert(id, v).unwrap();
            }
        }
        (LabeledCorpus::new(out).unwrap(), store)
    }

    #[test]
    fn learns_separable_toy_metric() {
        let (corpus, store) = toy_corpus(6, 10, 8, 3);
        let train = sample_rsn_pairs(&corpus, 400, 0.5, 1).unwrap();
        let held_out = sample_rsn_pairs(&corpus, 200, 0.5, 2).unwrap();
        // Start from a bias that rejects every pair.
        let mut model = RsnModel::new(store.into());
        model.head.b = -2.0;
        let before = pair_accuracy(&model, &held_out).unwrap();
        let cfg = RsnTrainConfig { epochs: 30, adam: AdamConfig::with_lr(0.05), ..Default::default() };
        let (trained, report) = pretrain_rsn(model, &train, &cfg).unwrap();
        let after = pair_accuracy(&trained, &held_out).unwrap();
        assert!(before <= 0.6, "{before}");
        assert!(after > 0.95, "held-out accuracy {after}");
        assert!(report.final_loss < report.initial_loss);
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let (corpus, store) = toy_corpus(3, 4, 4, 1);
        let pairs = sample_rsn_pairs(&corpus, 20, 0.5, 1).unwrap();
        let model = RsnModel::new(store.into());
        let cfg = RsnTrainConfig { epochs: 0, ..Default::default() };
        let (same, report) = pretrain_rsn(model.clone(), &pairs, &cfg).unwrap();
        assert_eq!(same, model);
        assert_eq!(report.initial_loss, report.final_loss);
    }

    #[test]
    fn first_epoch_does_not_increase_loss() {
        let (corpus, store) = toy_corpus(4, 8, 6, 9);
        let pairs = sample_rsn_pairs(&corpus, 256, 0.5, 4).unwrap();
        let cfg = RsnTrainConfig { epochs: 1, adam: AdamConfig::with_lr(1e-3), ..Default::default() };
        let (_, report) = pretrain_rsn(RsnModel::new(store.into()), &pairs, &cfg).unwrap();
        assert!(report.final_loss <= report.initial_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let (corpus, store) = toy_corpus(4, 8, 6, 9);
        let pairs = sample_rsn_pairs(&corpus, 128, 0.5, 4).unwrap();
        let cfg = RsnTrainConfig { epochs: 3, seed: 42, ..Default::default() };
        let (a, _) = pretrain_rsn(RsnModel::new(store.clone().into()), &pairs, &cfg).unwrap();
        let (b, _) = pretrain_rsn(RsnModel::new(store.into()), &pairs, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
