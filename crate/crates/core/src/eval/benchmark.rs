//! End-to-end few-shot benchmark on synthetic worlds. Every trial generates
//! its own world, pre-trains the encoder and the siamese metric on the
//! existing relations, and then for each new relation samples seeds and a
//! query set and scores plain fine-tuning, the siamese metric as a
//! classifier, distant supervision and the bootstrapper on the same queries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::baselines::{classifier_predictions, distant_supervision, finetune_baseline, rsn_predictions};
use super::synthetic::{generate_synthetic, synthetic_word_vectors, SyntheticCorpus, SyntheticSpec, WordVectorSpec};
use super::{build_query_set, precision_at_n_with, score_binary, Composition, EvalConfig, Metrics, QuerySources};
use crate::classifier::{pretrain_encoder, PretrainConfig};
use crate::corpus::{sample_rsn_pairs, Instance, LabeledCorpus, SeedSet};
use crate::encoder::{ConvConfig, ConvEncoder, InstanceEncoder, Vocab, WordVectors};
use crate::error::{Error, Result};
use crate::exec::ScoreExecutor;
use crate::rng::{self, derive_seed};
use crate::rsn::{pretrain_rsn, RsnModel, RsnTrainConfig, TrainReport};
use crate::snowball::{Snowball, SnowballConfig};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkConfig {
    pub synthetic: SyntheticSpec,
    /// The first this-many generated relations are used for pre-training.
    pub pretrain_relations: usize,
    /// The next this-many are the targets of every trial; any remaining
    /// relations only ever appear as unseen distractors.
    pub new_relations: usize,
    pub conv: ConvConfig,
    /// Stand-in pre-trained word vectors (their `dim` is taken from `conv`);
    /// `None` keeps the random embedding initialization.
    pub word_vectors: Option<WordVectorSpec>,
    pub pretrain: PretrainConfig,
    pub rsn: RsnTrainConfig,
    pub rsn_pairs: usize,
    pub rsn_positive_fraction: f64,
    pub snowball: SnowballConfig,
    pub composition: Composition,
    pub eval: EvalConfig,
    pub trials: usize,
    pub seed_counts: Vec<usize>,
    pub precision_ns: Vec<usize>,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            synthetic: SyntheticSpec::default(),
            pretrain_relations: 8,
            new_relations: 2,
            conv: ConvConfig::default(),
            word_vectors: Some(WordVectorSpec { dim: 50, spread: 0.2, latent_dim: 6, seed: 1 }),
            pretrain: PretrainConfig { epochs: 5, batch_size: 32, ..PretrainConfig::default() },
            rsn: RsnTrainConfig { epochs: 5, batch_size: 32, ..RsnTrainConfig::default() },
            rsn_pairs: 2000,
            rsn_positive_fraction: 0.5,
            snowball: SnowballConfig::default(),
            composition: Composition::default(),
            eval: EvalConfig::default(),
            trials: 10,
            seed_counts: vec![5, 15],
            precision_ns: vec![5, 10, 20, 50],
            seed: 0,
        }
    }
}

/// Generated corpora split into pre-training and held-out relations.
#[derive(Debug, Clone)]
pub struct World {
    pub corpus: SyntheticCorpus,
    pub existing: LabeledCorpus,
    pub held_out: LabeledCorpus,
    pub new_relations: Vec<String>,
    pub word_vectors: Option<WordVectors>,
}

/// Generates the world of one trial; `seed` replaces the generator seed.
pub fn build_world(cfg: &BenchmarkConfig, seed: u64) -> Result<World> {
    if cfg.pretrain_relations + cfg.new_relations > cfg.synthetic.n_relations || cfg.new_relations == 0 {
        return Err(Error::InvalidConfig(format!(
            "{} pre-training + {} new relations do not fit in {} generated relations",
            cfg.pretrain_relations, cfg.new_relations, cfg.synthetic.n_relations
        )));
    }
    let corpus = generate_synthetic(&SyntheticSpec { seed, ..cfg.synthetic })?;
    let pretrain: BTreeSet<&String> = corpus.relations[..cfg.pretrain_relations].iter().collect();
    let (existing, held_out): (Vec<Instance>, Vec<Instance>) = corpus
        .labeled
        .instances()
        .iter()
        .cloned()
        .partition(|x| x.relation.as_ref().is_some_and(|r| pretrain.contains(r)));
    let new_relations = corpus.relations[cfg.pretrain_relations..cfg.pretrain_relations + cfg.new_relations].to_vec();
    let word_vectors = cfg.word_vectors.map(|spec| {
        let spec = WordVectorSpec { dim: cfg.conv.word_dim, seed: derive_seed(seed, spec.seed), ..spec };
        synthetic_word_vectors(&corpus, &spec)
    });
    Ok(World {
        existing: LabeledCorpus::new(existing)?,
        held_out: LabeledCorpus::new(held_out)?,
        corpus,
        new_relations,
        word_vectors,
    })
}

/// Settings for pre-training the encoder and the siamese metric on the
/// existing relations.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PretrainPlan {
    pub conv: ConvConfig,
    pub pretrain: PretrainConfig,
    pub rsn: RsnTrainConfig,
    pub rsn_pairs: usize,
    pub rsn_positive_fraction: f64,
}

impl BenchmarkConfig {
    pub fn plan(&self) -> PretrainPlan {
        PretrainPlan {
            conv: self.conv,
            pretrain: self.pretrain,
            rsn: self.rsn,
            rsn_pairs: self.rsn_pairs,
            rsn_positive_fraction: self.rsn_positive_fraction,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainedModels {
    pub encoder: ConvEncoder,
    pub rsn: RsnModel,
    pub encoder_report: TrainReport,
    pub rsn_report: TrainReport,
}

/// N-way pre-training of the encoder, then siamese training of a copy of it.
/// The vocabulary is the word-vector keys when vectors are given, otherwise
/// every token of `existing`.
pub fn pretrain_pipeline(
    existing: &LabeledCorpus,
    word_vectors: Option<&WordVectors>,
    plan: &PretrainPlan,
    seed: u64,
) -> Result<PretrainedModels> {
    let vocab = match word_vectors {
        Some(wv) => Vocab::new(wv.vectors.keys()),
        None => Vocab::new(existing.instances().iter().flat_map(|x| x.tokens.iter())),
    };
    let mut rng = rng::seeded(derive_seed(seed, 2));
    let mut encoder = ConvEncoder::random(plan.conv, vocab, &mut rng)?;
    if let Some(wv) = word_vectors {
        encoder.load_word_vectors(wv)?;
    }
    let pretrain = PretrainConfig { seed: derive_seed(seed, 3), ..plan.pretrain };
    let (encoder, encoder_report) = pretrain_encoder(encoder, existing, &pretrain)?;
    let (rsn, rsn_report) = pretrain_metric(encoder.clone().into(), existing, plan, seed)?;
    Ok(PretrainedModels { encoder, rsn, encoder_report, rsn_report })
}

/// Siamese training over same/different-relation pairs drawn from
/// `existing`, starting from `encoder`.
pub fn pretrain_metric(
    encoder: InstanceEncoder,
    existing: &LabeledCorpus,
    plan: &PretrainPlan,
    seed: u64,
) -> Result<(RsnModel, TrainReport)> {
    let pairs = sample_rsn_pairs(existing, plan.rsn_pairs, plan.rsn_positive_fraction, derive_seed(seed, 4))?;
    let rsn_cfg = RsnTrainConfig { seed: derive_seed(seed, 5), ..plan.rsn };
    pretrain_rsn(RsnModel::new(encoder), &pairs, &rsn_cfg)
}

pub fn pretrain_models(world: &World, cfg: &BenchmarkConfig, seed: u64) -> Result<PretrainedModels> {
    pretrain_pipeline(&world.existing, world.word_vectors.as_ref(), &cfg.plan(), seed)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialOutcome {
    pub trial: usize,
    pub relation: String,
    pub seeds: usize,
    pub finetune: Metrics,
    pub rsn: Metrics,
    pub distant: Metrics,
    pub snowball: Metrics,
    /// Instances added by the bootstrapper and how many of them truly
    /// express the target relation.
    pub added: usize,
    pub added_correct: usize,
    pub distant_added: usize,
    pub distant_added_correct: usize,
    pub precision_at: Vec<(usize, f64)>,
}

/// Scores every system on one new relation at every configured seed count.
/// Smaller seed sets are prefixes of larger ones and all seed counts share
/// one query set.
pub fn evaluate_relation<X: ScoreExecutor>(
    world: &World,
    models: &PretrainedModels,
    cfg: &BenchmarkConfig,
    relation: &String,
    trial: usize,
    trial_seed: u64,
    exec: &X,
) -> Result<Vec<TrialOutcome>> {
    let max_k = cfg.seed_counts.iter().copied().max().unwrap_or(0);
    let mut pool: Vec<&Instance> = world.held_out.instances_of(relation).collect();
    if pool.len() < max_k {
        return Err(Error::Infeasible(format!("{relation} has {} labeled instances, {max_k} seeds requested", pool.len())));
    }
    pool.shuffle(&mut rng::seeded(trial_seed));
    let seed_pool: Vec<Instance> = pool[..max_k].iter().map(|x| x.unlabeled()).collect();
    let exclude: BTreeSet<String> = seed_pool.iter().map(|x| x.id.clone()).collect();
    let sources = QuerySources { existing: &world.existing, held_out: &world.held_out, exclude: &exclude };
    let query = build_query_set(sources, relation, cfg.composition, derive_seed(trial_seed, 1))?;
    let ranking_pool: Vec<Instance> = query
        .instances()
        .iter()
        .map(|x| Instance { relation: query.gold_relations().get(&x.id).cloned(), ..x.clone() })
        .collect();

    let snowball_cfg = SnowballConfig { seed: derive_seed(trial_seed, 2), ..cfg.snowball };
    let runner = Snowball::new(&models.rsn, &models.encoder, &world.existing, &world.corpus.unlabeled, snowball_cfg, exec)?;
    let finetune_cfg = crate::classifier::FinetuneConfig { seed: derive_seed(trial_seed, 3), ..cfg.snowball.finetune };
    let gold_relation = |id: &str| world.corpus.gold.get(id).is_some_and(|g| g == relation);

    let mut out = Vec::with_capacity(cfg.seed_counts.len());
    for &k in &cfg.seed_counts {
        let seeds = SeedSet::new(relation.clone(), seed_pool[..k].to_vec())?;
        let score = |preds: &BTreeMap<String, f64>, t: f64| score_binary(preds, query.gold(), t);

        let ft_head = finetune_baseline(&models.encoder, &seeds, &world.existing, &finetune_cfg)?;
        let finetune = score(&classifier_predictions(&ft_head, &models.encoder, query.instances())?, cfg.eval.finetune_threshold)?;
        let rsn = score(&rsn_predictions(&models.rsn, &seeds, query.instances())?, cfg.eval.rsn_threshold)?;
        let (ds_head, ds_set) = distant_supervision(&models.encoder, &seeds, &world.existing, &world.corpus.unlabeled, &finetune_cfg)?;
        let distant = score(&classifier_predictions(&ds_head, &models.encoder, query.instances())?, cfg.eval.finetune_threshold)?;
        let state = runner.run(seeds.clone()).map_err(|f| f.error)?;
        let snowball = score(&classifier_predictions(&state.head, &models.encoder, query.instances())?, cfg.eval.snowball_threshold)?;

        let added: Vec<&str> = state.added_ids().collect();
        let ds_added: Vec<&str> = ds_set.instances()[k..].iter().map(|x| x.id.as_str()).collect();
        let p_at = precision_at_n_with(exec, &models.rsn, &seeds, &ranking_pool, &cfg.precision_ns)?;
        out.push(TrialOutcome {
            trial,
            relation: relation.clone(),
            seeds: k,
            finetune,
            rsn,
            distant,
            snowball,
            added: added.len(),
            added_correct: added.iter().filter(|id| gold_relation(id)).count(),
            distant_added: ds_added.len(),
            distant_added_correct: ds_added.iter().filter(|id| gold_relation(id)).count(),
            precision_at: p_at.values,
        });
    }
    Ok(out)
}

/// Mean P/R/F1 of one system at one seed count.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryRow {
    pub system: String,
    pub seeds: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkReport {
    pub trials: Vec<TrialOutcome>,
    pub summary: Vec<SummaryRow>,
    /// Encoder and siamese training reports of every trial.
    pub training: Vec<(TrainReport, TrainReport)>,
}

pub const SYSTEMS: [&str; 4] = ["finetune", "rsn", "distant", "snowball"];

impl TrialOutcome {
    pub fn metrics(&self, system: &str) -> Option<&Metrics> {
        match system {
            "finetune" => Some(&self.finetune),
            "rsn" => Some(&self.rsn),
            "distant" => Some(&self.distant),
            "snowball" => Some(&self.snowball),
            _ => None,
        }
    }
}

impl BenchmarkReport {
    pub fn row(&self, system: &str, seeds: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.system == system && r.seeds == seeds)
    }

    /// Pooled fraction of correct bootstrapper additions at `seeds`.
    pub fn addition_precision(&self, seeds: usize) -> Option<f64> {
        let (mut added, mut correct) = (0, 0);
        for t in self.trials.iter().filter(|t| t.seeds == seeds) {
            added += t.added;
            correct += t.added_correct;
        }
        (added > 0).then(|| correct as f64 / added as f64)
    }

    /// Precision at each cutoff for one trial and seed count, averaged over
    /// the trial's new relations.
    pub fn trial_precision_at(&self, trial: usize, seeds: usize) -> Vec<(usize, f64)> {
        let rows: Vec<&TrialOutcome> = self.trials.iter().filter(|t| t.trial == trial && t.seeds == seeds).collect();
        let Some(first) = rows.first() else { return Vec::new() };
        (0..first.precision_at.len())
            .map(|i| (first.precision_at[i].0, rows.iter().map(|t| t.precision_at[i].1).sum::<f64>() / rows.len() as f64))
            .collect()
    }
}

pub fn summarize(trials: &[TrialOutcome], seed_counts: &[usize]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &k in seed_counts {
        for system in SYSTEMS {
            let ms: Vec<&Metrics> = trials.iter().filter(|t| t.seeds == k).filter_map(|t| t.metrics(system)).collect();
            if ms.is_empty() {
                continue;
            }
            let n = ms.len() as f64;
            rows.push(SummaryRow {
                system: String::from(system),
                seeds: k,
                precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
                recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
                f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
            });
        }
    }
    rows
}

/// Everything one trial produced.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialRun {
    pub outcomes: Vec<TrialOutcome>,
    pub encoder_report: TrainReport,
    pub rsn_report: TrainReport,
}

/// Generates, pre-trains and evaluates the world of trial `trial`.
pub fn run_trial<X: ScoreExecutor>(cfg: &BenchmarkConfig, trial: usize, exec: &X) -> Result<TrialRun> {
    let seed = derive_seed(cfg.seed, trial as u64);
    let world = build_world(cfg, seed)?;
    let models = pretrain_models(&world, cfg, seed)?;
    let mut outcomes = Vec::new();
    for (i, relation) in world.new_relations.iter().enumerate() {
        let relation_seed = derive_seed(seed, 1000 + i as u64);
        outcomes.extend(evaluate_relation(&world, &models, cfg, relation, trial, relation_seed, exec)?);
    }
    Ok(TrialRun { outcomes, encoder_report: models.encoder_report, rsn_report: models.rsn_report })
}

pub fn run_benchmark<X: ScoreExecutor>(cfg: &BenchmarkConfig, exec: &X) -> Result<BenchmarkReport> {
    let runs = exec.map(cfg.trials, |t| run_trial(cfg, t, exec)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut trials = Vec::new();
    let mut training = Vec::new();
    for run in runs {
        trials.extend(run.outcomes);
        training.push((run.encoder_report, run.rsn_report));
    }
    Ok(BenchmarkReport { summary: summarize(&trials, &cfg.seed_counts), trials, training })
}
