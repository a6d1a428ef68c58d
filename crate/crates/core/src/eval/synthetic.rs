//! Synthetic relation corpora with ground truth.
//!
//! Every relation owns a small set of pattern tokens. A sentence is a run of
//! filler words with a head mention, a tail mention and a few pattern tokens
//! dropped at random positions. Each relation also owns a fact table of
//! entity pairs: a new instance either reuses one of its own facts, borrows a
//! fact from another relation (a sentence that would fool pair matching), or
//! mints a fresh pair that becomes a new fact.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{Instance, LabeledCorpus, Span, UnlabeledCorpus};
use crate::encoder::WordVectors;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSpec {
    pub n_relations: usize,
    /// Labeled instances per relation.
    pub instances_per_relation: usize,
    /// Unlabeled instances per relation (their gold labels are returned
    /// separately).
    pub unlabeled_per_relation: usize,
    /// Number of distinct filler words.
    pub vocab_size: usize,
    pub pattern_tokens_per_relation: usize,
    /// Pattern tokens placed in each sentence.
    pub patterns_per_sentence: usize,
    pub entity_pool: usize,
    /// Probability that an instance restates one of its relation's facts.
    pub pair_reuse_rate: f64,
    /// Probability that an instance borrows an entity pair from a different
    /// relation's facts.
    pub cross_pair_rate: f64,
    /// Probability that a pattern token is swapped for another relation's.
    pub noise_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_relations: 12,
            instances_per_relation: 60,
            unlabeled_per_relation: 80,
            vocab_size: 300,
            pattern_tokens_per_relation: 6,
            patterns_per_sentence: 2,
            entity_pool: 3000,
            pair_reuse_rate: 0.3,
            cross_pair_rate: 0.05,
            noise_rate: 0.15,
            min_len: 8,
            max_len: 16,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pair_reuse_rate", self.pair_reuse_rate),
            ("cross_pair_rate", self.cross_pair_rate),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.pair_reuse_rate + self.cross_pair_rate > 1.0 {
            return Err(Error::InvalidConfig(String::from("pair_reuse_rate + cross_pair_rate exceeds 1")));
        }
        if self.n_relations == 0 || self.pattern_tokens_per_relation == 0 || self.vocab_size == 0 {
            return Err(Error::InvalidConfig(String::from("relations, pattern tokens and vocabulary must be non-empty")));
        }
        if self.entity_pool < 2 {
            return Err(Error::InvalidConfig(String::from("entity_pool must hold at least two entities")));
        }
        if self.min_len < self.patterns_per_sentence + 2 || self.max_len < self.min_len {
            return Err(Error::InvalidConfig(format!(
                "sentence length {}..={} cannot hold two mentions and {} pattern tokens",
                self.min_len, self.max_len, self.patterns_per_sentence
            )));
        }
        Ok(())
    }
}

pub fn relation_name(k: usize) -> String {
    format!("R{k:02}")
}

pub fn pattern_token(relation: usize, j: usize) -> String {
    format!("p{relation:02}_{j}")
}

fn entity_id(e: usize) -> String {
    format!("Q{e}")
}

fn mention_token(e: usize) -> String {
    format!("ent{e}")
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub relations: Vec<String>,
    pub labeled: LabeledCorpus,
    pub unlabeled: UnlabeledCorpus,
    /// Relation of every unlabeled instance.
    pub gold: BTreeMap<String, String>,
    pub pattern_tokens: BTreeMap<String, Vec<String>>,
}

impl SyntheticCorpus {
    /// Unlabeled instances with their gold relation restored.
    pub fn unlabeled_with_gold(&self) -> Vec<Instance> {
        self.unlabeled
            .instances()
            .iter()
            .map(|x| Instance { relation: self.gold.get(&x.id).cloned(), ..x.clone() })
            .collect()
    }
}

struct Facts {
    tables: Vec<Vec<(usize, usize)>>,
    used: BTreeSet<(usize, usize)>,
}

impl Facts {
    fn fresh(&mut self, pool: usize, rng: &mut Rng) -> (usize, usize) {
        let mut pair = (0, 1);
        for _ in 0..1000 {
            let h = rng.gen_range(0..pool);
            let t = rng.gen_range(0..pool);
            if h != t {
                pair = (h, t);
                if !self.used.contains(&pair) {
                    break;
                }
            }
        }
        self.used.insert(pair);
        pair
    }

    fn pick(&mut self, k: usize, spec: &SyntheticSpec, rng: &mut Rng) -> (usize, usize) {
        let u: f64 = rng.gen();
        if u < spec.pair_reuse_rate && !self.tables[k].is_empty() {
            return *self.tables[k].choose(rng).expect("non-empty fact table");
        }
        if u >= spec.pair_reuse_rate && u < spec.pair_reuse_rate + spec.cross_pair_rate {
            let others: Vec<usize> = (0..self.tables.len()).filter(|&j| j != k && !self.tables[j].is_empty()).collect();
            if let Some(&j) = others.choose(rng) {
                return *self.tables[j].choose(rng).expect("non-empty fact table");
            }
        }
        let pair = self.fresh(spec.entity_pool, rng);
        self.tables[k].push(pair);
        pair
    }
}

fn sentence(k: usize, pair: (usize, usize), spec: &SyntheticSpec, rng: &mut Rng) -> (Vec<String>, Span, Span) {
    let len = rng.gen_range(spec.min_len..=spec.max_len);
    let mut tokens: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..spec.vocab_size))).collect();
    let mut slots: Vec<usize> = (0..len).collect();
    slots.shuffle(rng);
    let (h, t) = (slots[0], slots[1]);
    tokens[h] = mention_token(pair.0);
    tokens[t] = mention_token(pair.1);
    for &slot in &slots[2..2 + spec.patterns_per_sentence] {
        let mut rel = k;
        if spec.n_relations > 1 && rng.gen::<f64>() < spec.noise_rate {
            rel = rng.gen_range(0..spec.n_relations - 1);
            if rel >= k {
                rel += 1;
            }
        }
        tokens[slot] = pattern_token(rel, rng.gen_range(0..spec.pattern_tokens_per_relation));
    }
    (tokens, Span::new(h, h + 1, entity_id(pair.0)), Span::new(t, t + 1, entity_id(pair.1)))
}

/// Generates labeled and unlabeled corpora. Same spec, same bytes.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let per = spec.instances_per_relation + spec.unlabeled_per_relation;
    let mut facts = Facts { tables: vec![Vec::new(); spec.n_relations], used: BTreeSet::new() };
    let mut drafts: Vec<Vec<(Vec<String>, Span, Span)>> = vec![Vec::with_capacity(per); spec.n_relations];
    // Round-robin so that every relation's fact table grows at the same pace.
    for _ in 0..per {
        for (k, bucket) in drafts.iter_mut().enumerate() {
            let pair = facts.pick(k, spec, &mut rng);
            bucket.push(sentence(k, pair, spec, &mut rng));
        }
    }

    let mut labeled = Vec::with_capacity(spec.n_relations * spec.instances_per_relation);
    let mut unlabeled = Vec::with_capacity(spec.n_relations * spec.unlabeled_per_relation);
    for (k, mut bucket) in drafts.into_iter().enumerate() {
        bucket.shuffle(&mut rng);
        let rel = relation_name(k);
        for (i, draft) in bucket.into_iter().enumerate() {
            if i < spec.instances_per_relation {
                labeled.push((rel.clone(), draft));
            } else {
                unlabeled.push((rel.clone(), draft));
            }
        }
    }
    // Ids are assigned after shuffling so that they carry no label signal.
    labeled.shuffle(&mut rng);
    unlabeled.shuffle(&mut rng);

    let labeled = labeled
        .into_iter()
        .enumerate()
        .map(|(i, (rel, (tokens, head, tail)))| Instance::new(format!("l{i:05}"), tokens, head, tail, Some(rel)))
        .collect::<Result<Vec<_>>>()?;
    let mut gold = BTreeMap::new();
    let unlabeled = unlabeled
        .into_iter()
        .enumerate()
        .map(|(i, (rel, (tokens, head, tail)))| {
            let id = format!("u{i:05}");
            gold.insert(id.clone(), rel);
            Instance::new(id, tokens, head, tail, None)
        })
        .collect::<Result<Vec<_>>>()?;

    let relations: Vec<String> = (0..spec.n_relations).map(relation_name).collect();
    let pattern_tokens = (0..spec.n_relations)
        .map(|k| (relation_name(k), (0..spec.pattern_tokens_per_relation).map(|j| pattern_token(k, j)).collect()))
        .collect();
    Ok(SyntheticCorpus {
        relations,
        labeled: LabeledCorpus::new(labeled)?,
        unlabeled: UnlabeledCorpus::new(unlabeled)?,
        gold,
        pattern_tokens,
    })
}

/// Shape of the stand-in pre-trained word vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WordVectorSpec {
    pub dim: usize,
    /// Scale of each pattern token's offset from its relation centroid.
    pub spread: f64,
    /// Relation centroids are drawn from a random subspace of this
    /// dimension; 0 draws them independently in the full space.
    pub latent_dim: usize,
    pub seed: u64,
}

/// Stand-in for pre-trained word vectors: each relation's pattern tokens sit
/// near a shared centroid and every other token is an independent random
/// vector. Coordinates of all vectors have roughly the same scale.
pub fn synthetic_word_vectors(corpus: &SyntheticCorpus, spec: &WordVectorSpec) -> WordVectors {
    let dim = spec.dim;
    let mut rng = rng::seeded(spec.seed);
    let uniform = |rng: &mut Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect() };
    let basis: Vec<Vec<f64>> = (0..spec.latent_dim).map(|_| uniform(&mut rng, dim)).collect();
    // A sum of `latent_dim` products of two centered uniforms has variance
    // latent_dim / 36; rescale to the variance of one uniform (1 / 12).
    let scale = libm::sqrt(3.0 / spec.latent_dim.max(1) as f64) * 2.0;
    let mut vectors = BTreeMap::new();
    for tokens in corpus.pattern_tokens.values() {
        let centroid = if spec.latent_dim == 0 {
            uniform(&mut rng, dim)
        } else {
            let z = uniform(&mut rng, spec.latent_dim);
            (0..dim).map(|i| scale * basis.iter().zip(&z).map(|(b, zj)| b[i] * zj).sum::<f64>()).collect()
        };
        for t in tokens {
            let offset = uniform(&mut rng, dim);
            vectors.insert(t.clone(), centroid.iter().zip(&offset).map(|(c, o)| c + spec.spread * o).collect());
        }
    }
    let words: BTreeSet<&String> = corpus
        .labeled
        .instances()
        .iter()
        .chain(corpus.unlabeled.instances())
        .flat_map(|x| x.tokens.iter())
        .collect();
    for w in words {
        if !vectors.contains_key(w) {
            let v = uniform(&mut rng, dim);
            vectors.insert(w.clone(), v);
        }
    }
    WordVectors { dim, vectors }
}
