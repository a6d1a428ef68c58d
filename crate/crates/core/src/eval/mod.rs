//! Few-shot evaluation: binary P/R/F1 over a query set, precision at top-N
//! for the siamese ranker, query-set construction, and a synthetic corpus
//! generator with ground truth.

pub mod baselines;
pub mod benchmark;
pub mod synthetic;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;

use crate::corpus::{Instance, LabeledCorpus, SeedSet};
use crate::error::{Error, Result};
use crate::exec::{ScoreExecutor, Sequential};
use crate::rng;
use crate::rsn::RsnModel;

pub use synthetic::{generate_synthetic, synthetic_word_vectors, SyntheticCorpus, SyntheticSpec, WordVectorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
}

impl Metrics {
    /// Any ratio with a zero denominator is reported as 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Metrics { precision, recall, f1, tp, fp, fn_ }
    }
}

/// Binarizes `predictions` with `p > threshold` and scores them against
/// `gold`. Predictions for ids outside `gold` are ignored.
pub fn score_binary(predictions: &BTreeMap<String, f64>, gold: &BTreeMap<String, bool>, threshold: f64) -> Result<Metrics> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (id, &truth) in gold {
        let p = *predictions.get(id).ok_or_else(|| Error::MissingId(id.clone()))?;
        match (p > threshold, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

/// Decision thresholds applied when turning scores into binary labels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    pub finetune_threshold: f64,
    pub snowball_threshold: f64,
    pub rsn_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { finetune_threshold: 0.5, snowball_threshold: 0.5, rsn_threshold: 0.7 }
    }
}

/// How many query instances to draw from each source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Composition {
    pub existing_relations: usize,
    pub per_existing: usize,
    pub new: usize,
    pub unseen_relations: usize,
    pub per_unseen: usize,
}

impl Default for Composition {
    fn default() -> Self {
        Composition { existing_relations: 5, per_existing: 20, new: 20, unseen_relations: 2, per_unseen: 20 }
    }
}

impl Composition {
    pub fn total(&self) -> usize {
        self.existing_relations * self.per_existing + self.new + self.unseen_relations * self.per_unseen
    }
}

/// Realized per-source counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceCounts {
    pub existing: usize,
    pub new: usize,
    pub unseen: usize,
}

/// Query instances with their relation labels stripped. Gold labels are
/// kept apart so that systems under test only ever see `instances`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    relation: String,
    instances: Vec<Instance>,
    gold: BTreeMap<String, bool>,
    relations: BTreeMap<String, String>,
    counts: SourceCounts,
}

impl QuerySet {
    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn gold(&self) -> &BTreeMap<String, bool> {
        &self.gold
    }

    /// Original relation of every query instance.
    pub fn gold_relations(&self) -> &BTreeMap<String, String> {
        &self.relations
    }

    pub fn counts(&self) -> SourceCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Where query instances come from. `held_out` holds the new relation and
/// any unseen ones; `exclude` lists ids that must not be sampled (the seeds).
#[derive(Debug, Clone, Copy)]
pub struct QuerySources<'a> {
    pub existing: &'a LabeledCorpus,
    pub held_out: &'a LabeledCorpus,
    pub exclude: &'a BTreeSet<String>,
}

fn sample_relation<'a>(
    corpus: &'a LabeledCorpus,
    relation: &str,
    n: usize,
    exclude: &BTreeSet<String>,
    rng: &mut rng::Rng,
) -> Result<Vec<&'a Instance>> {
    let mut pool: Vec<&Instance> = corpus.instances_of(relation).filter(|x| !exclude.contains(&x.id)).collect();
    if pool.len() < n {
        return Err(Error::Infeasible(format!(
            "requested {n} query instances of {relation:?} but only {} are available",
            pool.len()
        )));
    }
    pool.shuffle(rng);
    pool.truncate(n);
    Ok(pool)
}

fn pick_relations<'a>(candidates: Vec<&'a String>, n: usize, what: &str, rng: &mut rng::Rng) -> Result<Vec<&'a String>> {
    if candidates.len() < n {
        return Err(Error::Infeasible(format!("requested {n} {what} relations but only {} exist", candidates.len())));
    }
    let mut c = candidates;
    c.shuffle(rng);
    c.truncate(n);
    c.sort();
    Ok(c)
}

/// Samples a query set for `relation`. Deterministic given `seed`.
pub fn build_query_set(sources: QuerySources<'_>, relation: &str, composition: Composition, seed: u64) -> Result<QuerySet> {
    if sources.existing.relations().iter().any(|r| r == relation) {
        return Err(Error::InvalidConfig(format!("relation {relation:?} is part of the pre-training relations")));
    }
    let mut rng = rng::seeded(seed);
    let existing = pick_relations(sources.existing.relations().iter().collect(), composition.existing_relations, "existing", &mut rng)?;
    let unseen = pick_relations(
        sources.held_out.relations().iter().filter(|r| *r != relation).collect(),
        composition.unseen_relations,
        "unseen",
        &mut rng,
    )?;
    let mut picked: Vec<&Instance> = Vec::with_capacity(composition.total());
    for r in &existing {
        picked.extend(sample_relation(sources.existing, r, composition.per_existing, sources.exclude, &mut rng)?);
    }
    picked.extend(sample_relation(sources.held_out, relation, composition.new, sources.exclude, &mut rng)?);
    for r in &unseen {
        picked.extend(sample_relation(sources.held_out, r, composition.per_unseen, sources.exclude, &mut rng)?);
    }
    picked.shuffle(&mut rng);

    let mut gold = BTreeMap::new();
    let mut relations = BTreeMap::new();
    let mut instances = Vec::with_capacity(picked.len());
    for x in picked {
        let rel = x.relation.clone().unwrap_or_default();
        if gold.insert(x.id.clone(), rel == relation).is_some() {
            return Err(Error::DuplicateId(x.id.clone()));
        }
        relations.insert(x.id.clone(), rel);
        instances.push(x.unlabeled());
    }
    Ok(QuerySet {
        relation: String::from(relation),
        instances,
        gold,
        relations,
        counts: SourceCounts {
            existing: composition.existing_relations * composition.per_existing,
            new: composition.new,
            unseen: composition.unseen_relations * composition.per_unseen,
        },
    })
}

/// One entry of a siamese ranking.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ranked {
    pub id: String,
    pub score: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrecisionAtN {
    pub ranked: Vec<Ranked>,
    /// `(N, precision among the top N)` in the order requested.
    pub values: Vec<(usize, f64)>,
}

/// Precision among the first `n` entries of `ranked`, for every `n`.
pub fn precision_from_ranking(ranked: &[Ranked], ns: &[usize]) -> Result<Vec<(usize, f64)>> {
    ns.iter()
        .map(|&n| {
            if n == 0 || n > ranked.len() {
                return Err(Error::InvalidConfig(format!("N = {n} is outside 1..={}", ranked.len())));
            }
            let hits = ranked[..n].iter().filter(|r| r.positive).count();
            Ok((n, hits as f64 / n as f64))
        })
        .collect()
}

/// Ranks `pool` by mean siamese similarity to the seeds and reports
/// precision at each cutoff. `pool` must carry relation labels; positives are
/// those labeled with the seeds' relation.
pub fn precision_at_n(model: &RsnModel, seeds: &SeedSet, pool: &[Instance], ns: &[usize]) -> Result<PrecisionAtN> {
    precision_at_n_with(&Sequential, model, seeds, pool, ns)
}

pub fn precision_at_n_with<X: ScoreExecutor>(
    exec: &X,
    model: &RsnModel,
    seeds: &SeedSet,
    pool: &[Instance],
    ns: &[usize],
) -> Result<PrecisionAtN> {
    if let Some(&n) = ns.iter().find(|&&n| n > pool.len()) {
        return Err(Error::Infeasible(format!("N = {n} exceeds the pool size {}", pool.len())));
    }
    let refs = seeds.instances().iter().map(|x| model.encode(x)).collect::<Result<Vec<_>>>()?;
    let scores = exec.map(pool.len(), |i| -> Result<f64> {
        let f = model.encode(&pool[i])?;
        crate::rsn::mean_similarity(&model.head, &f, refs.iter().map(|r| r.as_slice()))
    });
    let mut ranked = Vec::with_capacity(pool.len());
    for (x, score) in pool.iter().zip(scores) {
        let relation = x.relation.as_deref().ok_or_else(|| Error::InvalidInstance {
            id: x.id.clone(),
            reason: String::from("ranking pool instances need a gold relation"),
        })?;
        ranked.push(Ranked { id: x.id.clone(), score: score?, positive: relation == seeds.relation() });
    }
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.id.cmp(&b.id)));
    let values = precision_from_ranking(&ranked, ns)?;
    Ok(PrecisionAtN { ranked, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{instance, labeled};
    use crate::encoder::EmbeddingStore;
    use crate::rsn::DistanceHead;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn maps(rows: &[(&str, f64, bool)]) -> (BTreeMap<String, f64>, BTreeMap<String, bool>) {
        (
            rows.iter().map(|(id, p, _)| (id.to_string(), *p)).collect(),
            rows.iter().map(|(id, _, g)| (id.to_string(), *g)).collect(),
        )
    }

    #[test]
    fn perfect_predictions() {
        let (p, g) = maps(&[("a", 0.9, true), ("b", 0.1, false), ("c", 0.8, true)]);
        let m = score_binary(&p, &g, 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn confusion_arithmetic() {
        let (p, g) = maps(&[
            ("t1", 0.9, true),
            ("t2", 0.9, true),
            ("t3", 0.9, true),
            ("f1", 0.9, false),
            ("n1", 0.1, true),
            ("n2", 0.1, true),
            ("tn", 0.1, false),
        ]);
        let m = score_binary(&p, &g, 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (3, 1, 2));
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 * 0.45 / 1.35).abs() < 1e-12);
    }

    #[test]
    fn degenerate_counts_are_zero() {
        let (p, g) = maps(&[("a", 0.1, false)]);
        let m = score_binary(&p, &g, 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn threshold_one_rejects_everything() {
        let (p, g) = maps(&[("a", 1.0, true), ("b", 0.99, true)]);
        assert_eq!(score_binary(&p, &g, 1.0).unwrap().recall, 0.0);
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let (mut p, g) = maps(&[("a", 0.9, true), ("b", 0.1, false)]);
        p.remove("b");
        assert!(matches!(score_binary(&p, &g, 0.5), Err(Error::MissingId(id)) if id == "b"));
    }

    proptest! {
        #[test]
        fn matches_brute_force_confusion(rows in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 0..60), t in 0.0f64..1.0) {
            let p: BTreeMap<String, f64> = rows.iter().enumerate().map(|(i, r)| (format!("{i}"), r.0)).collect();
            let g: BTreeMap<String, bool> = rows.iter().enumerate().map(|(i, r)| (format!("{i}"), r.1)).collect();
            let m = score_binary(&p, &g, t).unwrap();
            let tp = rows.iter().filter(|r| r.0 > t && r.1).count();
            let fp = rows.iter().filter(|r| r.0 > t && !r.1).count();
            let fn_ = rows.iter().filter(|r| r.0 <= t && r.1).count();
            prop_assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, fn_));
            prop_assert!(m.f1 >= 0.0 && m.f1 <= 1.0);
            if m.precision + m.recall > 0.0 {
                prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
            }
        }
    }

    fn sources() -> (LabeledCorpus, LabeledCorpus) {
        let existing = labeled(&[("e1", 30), ("e2", 30), ("e3", 30)]);
        let held: Vec<Instance> = [("new", 25), ("u1", 25), ("u2", 25)]
            .iter()
            .flat_map(|(r, n)| (0..*n).map(move |i| instance(&format!("h-{r}-{i}"), 4, "h", "t", Some(r))))
            .collect();
        (existing, LabeledCorpus::new(held).unwrap())
    }

    #[test]
    fn all_new_composition_is_all_positive() {
        let (existing, held) = sources();
        let none = BTreeSet::new();
        let comp = Composition { existing_relations: 0, per_existing: 0, new: 10, unseen_relations: 0, per_unseen: 0 };
        let q = build_query_set(QuerySources { existing: &existing, held_out: &held, exclude: &none }, "new", comp, 1).unwrap();
        assert_eq!(q.len(), 10);
        assert!(q.gold().values().all(|&g| g));
        assert!(q.instances().iter().all(|x| x.relation.is_none()));
    }

    #[test]
    fn infeasible_counts_error() {
        let (existing, held) = sources();
        let none = BTreeSet::new();
        let comp = Composition { existing_relations: 0, per_existing: 0, new: 50, unseen_relations: 0, per_unseen: 0 };
        let r = build_query_set(QuerySources { existing: &existing, held_out: &held, exclude: &none }, "new", comp, 1);
        assert!(matches!(r, Err(Error::Infeasible(_))));
        let comp = Composition { existing_relations: 4, per_existing: 1, new: 1, unseen_relations: 0, per_unseen: 0 };
        let r = build_query_set(QuerySources { existing: &existing, held_out: &held, exclude: &none }, "new", comp, 1);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn mixed_composition_counts_match() {
        let (existing, held) = sources();
        let exclude: BTreeSet<String> = (0..5).map(|i| format!("h-new-{i}")).collect();
        let comp = Composition { existing_relations: 2, per_existing: 7, new: 20, unseen_relations: 2, per_unseen: 3 };
        let src = QuerySources { existing: &existing, held_out: &held, exclude: &exclude };
        let q = build_query_set(src, "new", comp, 9).unwrap();
        let mut per: BTreeMap<&str, usize> = BTreeMap::new();
        for r in q.gold_relations().values() {
            *per.entry(r.as_str()).or_default() += 1;
        }
        let existing_total: usize = per.iter().filter(|(r, _)| r.starts_with('e')).map(|(_, n)| n).sum();
        assert_eq!(existing_total, 14);
        assert_eq!(per.iter().filter(|(r, _)| r.starts_with('e')).count(), 2);
        assert!(per.iter().filter(|(r, _)| r.starts_with('e')).all(|(_, &n)| n == 7));
        assert_eq!(per["new"], 20);
        assert_eq!((per["u1"], per["u2"]), (3, 3));
        assert_eq!(q.len(), comp.total());
        assert_eq!(q.gold().values().filter(|&&g| g).count(), 20);
        assert!(q.gold().keys().all(|id| !exclude.contains(id)));
        assert_eq!(q, build_query_set(src, "new", comp, 9).unwrap());
    }

    #[test]
    fn pretraining_relation_is_rejected() {
        let (existing, held) = sources();
        let none = BTreeSet::new();
        let src = QuerySources { existing: &existing, held_out: &held, exclude: &none };
        assert!(build_query_set(src, "e1", Composition::default(), 0).is_err());
    }

    /// One-dimensional store: seeds at 0, pool instance i at value v_i, so the
    /// ranking follows |v_i| ascending.
    fn ranking_fixture(values: &[(f32, bool)]) -> (RsnModel, SeedSet, Vec<Instance>) {
        let mut store = EmbeddingStore::new(1);
        store.insert("s", vec![0.0]).unwrap();
        let mut pool = Vec::new();
        for (i, (v, pos)) in values.iter().enumerate() {
            let id = format!("p{i:02}");
            store.insert(id.as_str(), vec![*v]).unwrap();
            pool.push(instance(&id, 3, "h", "t", Some(if *pos { "r" } else { "other" })));
        }
        let rsn = RsnModel::with_head(store.into(), DistanceHead { w: vec![-1.0], b: 1.0 }).unwrap();
        let seeds = SeedSet::new("r", vec![instance("s", 3, "h", "t", None)]).unwrap();
        (rsn, seeds, pool)
    }

    #[test]
    fn separated_pool_has_perfect_precision() {
        let values: Vec<(f32, bool)> = (0..20).map(|i| if i < 8 { (0.01 * i as f32, true) } else { (1.0 + i as f32, false) }).collect();
        let (rsn, seeds, pool) = ranking_fixture(&values);
        let p = precision_at_n(&rsn, &seeds, &pool, &[1, 5, 8]).unwrap();
        assert!(p.values.iter().all(|&(_, v)| v == 1.0));
    }

    #[test]
    fn hand_scored_pool() {
        // Ranked order by distance: p00 (+), p01 (-), p02 (+), p03 (+), p04 (-), then the rest.
        let values = [
            (0.0, true),
            (0.1, false),
            (0.2, true),
            (0.3, true),
            (0.4, false),
            (0.5, true),
            (0.6, false),
            (0.7, false),
            (0.8, true),
            (0.9, false),
        ];
        let (rsn, seeds, pool) = ranking_fixture(&values);
        let p = precision_at_n(&rsn, &seeds, &pool, &[5, 10]).unwrap();
        assert_eq!(p.values, vec![(5, 0.6), (10, 0.5)]);
        let order: Vec<&str> = p.ranked.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(&order[..3], ["p00", "p01", "p02"]);
        assert_eq!(precision_from_ranking(&p.ranked, &[5, 10]).unwrap(), p.values);
    }

    #[test]
    fn n_larger_than_pool_errors() {
        let (rsn, seeds, pool) = ranking_fixture(&[(0.0, true), (1.0, false)]);
        assert!(matches!(precision_at_n(&rsn, &seeds, &pool, &[3]), Err(Error::Infeasible(_))));
    }
}
