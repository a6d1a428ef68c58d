//! The two-phase bootstrapping loop.
//!
//! Every round runs:
//!
//! 1. **Entity-pair expansion.** Unlabeled instances that share an entity
//!    pair with some selected instance become candidates. A candidate's
//!    confidence is its mean siamese similarity to the selected instances
//!    with that same pair. Candidates are ranked (score descending, id
//!    ascending on ties); the top `k1` scoring at least `alpha` are accepted
//!    and the classifier head is fine-tuned on the grown set.
//! 2. **Classifier expansion.** Unlabeled instances with `g(x) > theta` become
//!    candidates, scored by mean similarity to the whole selected set. The
//!    top `k2` scoring above `beta` are accepted, followed by another
//!    fine-tune.
//!
//! Every fine-tune starts from a fresh head unless `warm_start` is set.
//! Instances already selected never re-enter either candidate pool. The
//! encoders are frozen for the whole run, so every unlabeled representation
//! is computed once up front.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::classifier::{finetune_representations, ClassifierHead, FinetuneConfig};
use crate::corpus::{EntityPair, Instance, LabeledCorpus, SeedSet, UnlabeledCorpus};
use crate::encoder::{Encoder, Representation};
use crate::error::{Error, Result};
use crate::exec::ScoreExecutor;
use crate::rng::derive_seed;
use crate::rsn::RsnModel;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnowballConfig {
    pub k1: usize,
    pub k2: usize,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub iterations: usize,
    pub finetune: FinetuneConfig,
    /// Continue each fine-tune from the previous head instead of zeros.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for SnowballConfig {
    fn default() -> Self {
        SnowballConfig {
            k1: 5,
            k2: 5,
            alpha: 0.5,
            beta: 0.5,
            theta: 0.9,
            iterations: 3,
            finetune: FinetuneConfig::default(),
            warm_start: false,
            seed: 0,
        }
    }
}

impl SnowballConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("theta", self.theta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(alloc::format!("{name} = {v} is outside [0, 1]")));
            }
        }
        self.finetune.validate()
    }
}

/// An accepted instance with the confidence it was accepted at.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoredInstance {
    pub id: String,
    /// Siamese confidence (phase-1 or phase-2 score).
    pub score: f64,
    /// Classifier probability at selection time (phase 2 only).
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub classifier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase1_candidates: usize,
    pub phase1_added: Vec<ScoredInstance>,
    pub phase2_candidates: usize,
    pub phase2_added: Vec<ScoredInstance>,
    /// Final-epoch loss of the last fine-tune in this iteration.
    pub classifier_loss: f64,
    pub selected_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct MemberReps {
    rsn: Representation,
    cls: Representation,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnowballState {
    pub relation: String,
    pub selected: SeedSet,
    pub head: ClassifierHead,
    /// Loss of the initial fine-tune on the seeds alone.
    pub initial_loss: f64,
    pub iteration_log: Vec<IterationRecord>,
    #[cfg_attr(feature = "serde", serde(skip))]
    members: Vec<MemberReps>,
    #[cfg_attr(feature = "serde", serde(skip))]
    finetune_calls: u64,
}

impl SnowballState {
    pub fn selected_ids(&self) -> impl Iterator<Item = &str> {
        self.selected.instances().iter().map(|x| x.id.as_str())
    }

    /// Ids added by the process (seeds excluded), in acceptance order.
    pub fn added_ids(&self) -> impl Iterator<Item = &str> {
        self.iteration_log
            .iter()
            .flat_map(|r| r.phase1_added.iter().chain(&r.phase2_added))
            .map(|s| s.id.as_str())
    }
}

/// A candidate by position in the unlabeled corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub position: usize,
    pub score: f64,
    pub classifier: Option<f64>,
}

/// Candidates of one phase: the pool size and the accepted prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidates: usize,
    pub accepted: Vec<Candidate>,
}

/// Error from [`Snowball::run`] with whatever state was reached.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Option<Box<SnowballState>>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(state) => write!(f, "{} (after {} completed iterations)", self.error, state.iteration_log.len()),
            None => write!(f, "{}", self.error),
        }
    }
}

impl core::error::Error for RunFailure {}

/// Frozen models, corpora and cached representations for bootstrapping one
/// or more relations.
pub struct Snowball<'a, E: ?Sized, X> {
    config: SnowballConfig,
    rsn: &'a RsnModel,
    encoder: &'a E,
    unlabeled: &'a UnlabeledCorpus,
    unlabeled_rsn: Vec<Representation>,
    unlabeled_cls: Vec<Representation>,
    negatives: Vec<Representation>,
    exec: X,
}

fn rank(a: &Candidate, b: &Candidate, ids: &UnlabeledCorpus) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| ids.instances()[a.position].id.cmp(&ids.instances()[b.position].id))
}

impl<'a, E, X> Snowball<'a, E, X>
where
    E: Encoder + Sync + ?Sized,
    X: ScoreExecutor,
{
    /// Encodes the unlabeled corpus under both encoders and the labeled
    /// corpus (the negative pool) under the classifier encoder.
    pub fn new(
        rsn: &'a RsnModel,
        encoder: &'a E,
        existing: &LabeledCorpus,
        unlabeled: &'a UnlabeledCorpus,
        config: SnowballConfig,
        exec: X,
    ) -> Result<Self> {
        config.validate()?;
        if existing.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let t = unlabeled.instances();
        let unlabeled_rsn = exec.map(t.len(), |i| rsn.encode(&t[i])).into_iter().collect::<Result<Vec<_>>>()?;
        let unlabeled_cls = exec.map(t.len(), |i| encoder.encode(&t[i])).into_iter().collect::<Result<Vec<_>>>()?;
        let sn = existing.instances();
        let negatives = exec.map(sn.len(), |i| encoder.encode(&sn[i])).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Snowball { config, rsn, encoder, unlabeled, unlabeled_rsn, unlabeled_cls, negatives, exec })
    }

    pub fn config(&self) -> &SnowballConfig {
        &self.config
    }

    fn finetune(&self, state: &mut SnowballState) -> Result<f64> {
        let cfg = FinetuneConfig { seed: derive_seed(self.config.seed, state.finetune_calls), ..self.config.finetune };
        state.finetune_calls += 1;
        let start = if self.config.warm_start && state.finetune_calls > 1 {
            state.head.clone()
        } else {
            cfg.initial_head(self.encoder.dim())
        };
        let pos: Vec<&[f64]> = state.members.iter().map(|m| m.cls.as_slice()).collect();
        let neg: Vec<&[f64]> = self.negatives.iter().map(|r| r.as_slice()).collect();
        let (head, report) = finetune_representations(start, &pos, &neg, &cfg)?;
        state.head = head;
        Ok(report.final_loss())
    }

    /// Encodes the seeds and fine-tunes a zero-initialized head on them.
    pub fn init(&self, seeds: SeedSet) -> Result<SnowballState> {
        let members = seeds
            .instances()
            .iter()
            .map(|x| Ok(MemberReps { rsn: self.rsn.encode(x)?, cls: self.encoder.encode(x)? }))
            .collect::<Result<Vec<_>>>()?;
        let mut state = SnowballState {
            relation: String::from(seeds.relation()),
            selected: seeds,
            head: ClassifierHead::zeros(self.encoder.dim()),
            initial_loss: 0.0,
            iteration_log: Vec::new(),
            members,
            finetune_calls: 0,
        };
        state.initial_loss = self.finetune(&mut state)?;
        Ok(state)
    }

    fn selected_set<'s>(&self, state: &'s SnowballState) -> BTreeSet<&'s str> {
        state.selected_ids().collect()
    }

    /// Phase-1 candidates (shared entity pairs) and the accepted top-`k1`
    /// with score ≥ `alpha`. Does not modify the state.
    pub fn select_phase1(&self, state: &SnowballState) -> Selection {
        let selected = self.selected_set(state);
        let pairs: BTreeSet<EntityPair> = state.selected.entity_pairs();
        let mut pool: Vec<usize> = Vec::new();
        for pair in &pairs {
            pool.extend(
                self.unlabeled
                    .positions_with_pair(pair)
                    .into_iter()
                    .filter(|&p| !selected.contains(self.unlabeled.instances()[p].id.as_str())),
            );
        }
        let members = state.selected.instances();
        let scores = self.exec.map(pool.len(), |i| {
            let p = pool[i];
            let x: &Instance = &self.unlabeled.instances()[p];
            let fx = &self.unlabeled_rsn[p];
            let (mut sum, mut n) = (0.0, 0usize);
            for (m, reps) in members.iter().zip(&state.members) {
                if m.head.entity == x.head.entity && m.tail.entity == x.tail.entity {
                    sum += self.rsn.head.similarity(fx, &reps.rsn);
                    n += 1;
                }
            }
            sum / n as f64
        });
        let mut scored: Vec<Candidate> =
            pool.iter().zip(scores).map(|(&position, score)| Candidate { position, score, classifier: None }).collect();
        scored.sort_by(|a, b| rank(a, b, self.unlabeled));
        let accepted = scored.iter().copied().take_while(|c| c.score >= self.config.alpha).take(self.config.k1).collect();
        Selection { candidates: scored.len(), accepted }
    }

    /// Phase-2 candidates (`g(x) > theta`) and the accepted top-`k2` with
    /// score > `beta`. Does not modify the state.
    pub fn select_phase2(&self, state: &SnowballState) -> Selection {
        let selected = self.selected_set(state);
        let t = self.unlabeled.instances();
        let head = &state.head;
        let probs = self.exec.map(t.len(), |p| head.probability(&self.unlabeled_cls[p]).unwrap_or(0.0));
        let pool: Vec<usize> = (0..t.len())
            .filter(|&p| probs[p] > self.config.theta && !selected.contains(t[p].id.as_str()))
            .collect();
        let scores = self.exec.map(pool.len(), |i| {
            let fx = &self.unlabeled_rsn[pool[i]];
            let sum: f64 = state.members.iter().map(|m| self.rsn.head.similarity(fx, &m.rsn)).sum();
            sum / state.members.len() as f64
        });
        let mut scored: Vec<Candidate> = pool
            .iter()
            .zip(scores)
            .map(|(&position, score)| Candidate { position, score, classifier: Some(probs[position]) })
            .collect();
        scored.sort_by(|a, b| rank(a, b, self.unlabeled));
        let accepted = scored.iter().copied().take_while(|c| c.score > self.config.beta).take(self.config.k2).collect();
        Selection { candidates: scored.len(), accepted }
    }

    fn accept(&self, state: &mut SnowballState, accepted: &[Candidate]) -> Result<Vec<ScoredInstance>> {
        let mut out = Vec::with_capacity(accepted.len());
        for c in accepted {
            let x = &self.unlabeled.instances()[c.position];
            state.selected.push(x.unlabeled())?;
            state.members.push(MemberReps {
                rsn: self.unlabeled_rsn[c.position].clone(),
                cls: self.unlabeled_cls[c.position].clone(),
            });
            out.push(ScoredInstance { id: x.id.clone(), score: c.score, classifier: c.classifier });
        }
        Ok(out)
    }

    /// Runs phase 1 and the fine-tune that follows it. Returns the pool size,
    /// the accepted instances and the fine-tuning loss.
    pub fn phase1(&self, state: &mut SnowballState) -> Result<(usize, Vec<ScoredInstance>, f64)> {
        let sel = self.select_phase1(state);
        let added = self.accept(state, &sel.accepted)?;
        let loss = self.finetune(state)?;
        Ok((sel.candidates, added, loss))
    }

    /// Runs phase 2 and the fine-tune that follows it.
    pub fn phase2(&self, state: &mut SnowballState) -> Result<(usize, Vec<ScoredInstance>, f64)> {
        let sel = self.select_phase2(state);
        let added = self.accept(state, &sel.accepted)?;
        let loss = self.finetune(state)?;
        Ok((sel.candidates, added, loss))
    }

    /// One full round, appended to the iteration log.
    pub fn iterate(&self, state: &mut SnowballState) -> Result<()> {
        let (phase1_candidates, phase1_added, _) = self.phase1(state)?;
        let (phase2_candidates, phase2_added, classifier_loss) = self.phase2(state)?;
        state.iteration_log.push(IterationRecord {
            iteration: state.iteration_log.len() + 1,
            phase1_candidates,
            phase1_added,
            phase2_candidates,
            phase2_added,
            classifier_loss,
            selected_size: state.selected.len(),
        });
        Ok(())
    }

    /// Initial fine-tune on the seeds followed by `iterations` rounds.
    pub fn run(&self, seeds: SeedSet) -> core::result::Result<SnowballState, RunFailure> {
        let mut state = self.init(seeds).map_err(|error| RunFailure { error, partial: None })?;
        for _ in 0..self.config.iterations {
            if let Err(error) = self.iterate(&mut state) {
                return Err(RunFailure { error, partial: Some(Box::new(state)) });
            }
        }
        Ok(state)
    }

    /// `g(x)` for every unlabeled instance under `head`.
    pub fn unlabeled_probabilities(&self, head: &ClassifierHead) -> Vec<f64> {
        self.exec.map(self.unlabeled_cls.len(), |p| head.probability(&self.unlabeled_cls[p]).unwrap_or(0.0))
    }

    pub fn unlabeled(&self) -> &UnlabeledCorpus {
        self.unlabeled
    }

    /// Cached classifier-encoder representations of the labeled corpus.
    pub fn negative_pool(&self) -> &[Representation] {
        &self.negatives
    }
}
