//! Corpus data model: tagged instances, labeled and unlabeled corpora, the
//! entity-pair index and the seeded samplers used during training.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// A tagged entity mention: token range `[start, end)` plus the entity it
/// refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity: String,
}

impl Span {
    pub fn new(start: usize, end: usize, entity: impl Into<String>) -> Self {
        Span { start, end, entity: entity.into() }
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// One sentence with a head and a tail entity and, optionally, the relation
/// it expresses.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<String>,
    pub head: Span,
    pub tail: Span,
    pub relation: Option<String>,
}

impl Instance {
    /// Builds an instance and checks its invariants.
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        head: Span,
        tail: Span,
        relation: Option<String>,
    ) -> Result<Self> {
        let instance = Instance { id: id.into(), tokens, head, tail, relation };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidInstance { id: self.id.clone(), reason };
        if self.id.is_empty() {
            return Err(invalid("empty id".to_string()));
        }
        if self.tokens.is_empty() {
            return Err(invalid("no tokens".to_string()));
        }
        for (name, span) in [("head", &self.head), ("tail", &self.tail)] {
            if span.start >= span.end || span.end > self.tokens.len() {
                return Err(invalid(format!(
                    "{name} span [{}, {}) out of range for {} tokens",
                    span.start,
                    span.end,
                    self.tokens.len()
                )));
            }
            if span.entity.is_empty() {
                return Err(invalid(format!("{name} entity id is empty")));
            }
        }
        if self.head.overlaps(&self.tail) {
            return Err(invalid("head and tail spans overlap".to_string()));
        }
        Ok(())
    }

    pub fn entity_pair(&self) -> EntityPair {
        EntityPair { head: self.head.entity.clone(), tail: self.tail.entity.clone() }
    }

    pub fn has_pair(&self, pair: &EntityPair) -> bool {
        self.head.entity == pair.head && self.tail.entity == pair.tail
    }

    /// Copy of the instance with the relation label removed.
    pub fn unlabeled(&self) -> Instance {
        Instance { relation: None, ..self.clone() }
    }
}

/// Ordered (head entity, tail entity) identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntityPair {
    pub head: String,
    pub tail: String,
}

impl EntityPair {
    pub fn new(head: impl Into<String>, tail: impl Into<String>) -> Self {
        EntityPair { head: head.into(), tail: tail.into() }
    }
}

/// Entity pair to the ascending list of ids of instances carrying it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityPairIndex {
    entries: BTreeMap<EntityPair, Vec<String>>,
}

impl EntityPairIndex {
    pub fn build<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> Self {
        let mut entries: BTreeMap<EntityPair, Vec<String>> = BTreeMap::new();
        for x in instances {
            entries.entry(x.entity_pair()).or_default().push(x.id.clone());
        }
        for ids in entries.values_mut() {
            ids.sort_unstable();
        }
        EntityPairIndex { entries }
    }

    /// Ids for `pair`; empty when the pair never occurs.
    pub fn lookup(&self, pair: &EntityPair) -> &[String] {
        self.entries.get(pair).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityPair, &[String])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

fn index_ids(instances: &[Instance]) -> Result<BTreeMap<String, usize>> {
    let mut by_id = BTreeMap::new();
    for (i, x) in instances.iter().enumerate() {
        x.validate()?;
        if by_id.insert(x.id.clone(), i).is_some() {
            return Err(Error::DuplicateId(x.id.clone()));
        }
    }
    Ok(by_id)
}

/// Fully labeled corpus of existing relations.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    instances: Vec<Instance>,
    relations: Vec<String>,
    by_relation: BTreeMap<String, Vec<usize>>,
    by_id: BTreeMap<String, usize>,
}

impl LabeledCorpus {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let by_id = index_ids(&instances)?;
        let mut by_relation: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, x) in instances.iter().enumerate() {
            let rel = x.relation.as_ref().ok_or_else(|| Error::InvalidInstance {
                id: x.id.clone(),
                reason: "labeled corpus instance has no relation".to_string(),
            })?;
            by_relation.entry(rel.clone()).or_default().push(i);
        }
        let relations = by_relation.keys().cloned().collect();
        Ok(LabeledCorpus { instances, relations, by_relation, by_id })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    /// Sorted relation ids.
    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.by_id.get(id).map(|&i| &self.instances[i])
    }

    /// Positions (in file order) of the instances labeled `relation`.
    pub fn positions_of(&self, relation: &str) -> &[usize] {
        self.by_relation.get(relation).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn instances_of<'a>(&'a self, relation: &str) -> impl Iterator<Item = &'a Instance> + 'a {
        self.positions_of(relation).iter().map(move |&i| &self.instances[i])
    }

    pub fn ids_of(&self, relation: &str) -> Vec<&str> {
        self.instances_of(relation).map(|x| x.id.as_str()).collect()
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }
}

/// Unlabeled corpus with its entity-pair index. Labels, if present, are kept
/// for evaluation but never consulted by the bootstrapping process.
#[derive(Debug, Clone)]
pub struct UnlabeledCorpus {
    instances: Vec<Instance>,
    pair_index: EntityPairIndex,
    by_id: BTreeMap<String, usize>,
}

impl UnlabeledCorpus {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let by_id = index_ids(&instances)?;
        let pair_index = EntityPairIndex::build(&instances);
        Ok(UnlabeledCorpus { instances, pair_index, by_id })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn pair_index(&self) -> &EntityPairIndex {
        &self.pair_index
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.position(id).map(|i| &self.instances[i])
    }

    /// Positions of every instance carrying `pair`, in ascending id order.
    pub fn positions_with_pair(&self, pair: &EntityPair) -> Vec<usize> {
        self.pair_index.lookup(pair).iter().map(|id| self.by_id[id]).collect()
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }
}

/// Returns the entity-pair index for an unlabeled corpus.
pub fn build_pair_index(corpus: &UnlabeledCorpus) -> EntityPairIndex {
    EntityPairIndex::build(corpus.instances())
}

/// Instances of the new relation known so far.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedSet {
    relation: String,
    instances: Vec<Instance>,
}

impl SeedSet {
    pub fn new(relation: impl Into<String>, instances: Vec<Instance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::EmptySeedSet);
        }
        let mut seen = BTreeSet::new();
        for x in &instances {
            x.validate()?;
            if !seen.insert(x.id.as_str()) {
                return Err(Error::DuplicateId(x.id.clone()));
            }
        }
        Ok(SeedSet { relation: relation.into(), instances })
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.instances.iter().any(|x| x.id == id)
    }

    pub fn push(&mut self, instance: Instance) -> Result<()> {
        if self.contains(&instance.id) {
            return Err(Error::DuplicateId(instance.id));
        }
        self.instances.push(instance);
        Ok(())
    }

    pub fn entity_pairs(&self) -> BTreeSet<EntityPair> {
        self.instances.iter().map(Instance::entity_pair).collect()
    }
}

/// Two labeled instances and whether they share a relation.
#[derive(Debug, Clone, Copy)]
pub struct LabeledPair<'a> {
    pub left: &'a Instance,
    pub right: &'a Instance,
    pub same_relation: bool,
}

/// Draws `n` instance pairs of which `round(n * positive_fraction)` share a
/// relation. Order is shuffled; the result depends only on the inputs.
pub fn sample_rsn_pairs(
    corpus: &LabeledCorpus,
    n: usize,
    positive_fraction: f64,
    seed: u64,
) -> Result<Vec<LabeledPair<'_>>> {
    if !(0.0..=1.0).contains(&positive_fraction) {
        return Err(Error::InvalidConfig(format!(
            "positive_fraction {positive_fraction} outside [0, 1]"
        )));
    }
    let n_pos = libm::round(n as f64 * positive_fraction) as usize;
    let n_neg = n - n_pos;
    let rels = corpus.relations();
    let pos_rels: Vec<&String> =
        rels.iter().filter(|r| corpus.positions_of(r).len() >= 2).collect();
    if n_pos > 0 && pos_rels.is_empty() {
        return Err(Error::Infeasible(
            "positive pairs need a relation with at least two instances".to_string(),
        ));
    }
    if n_neg > 0 && rels.len() < 2 {
        return Err(Error::Infeasible("negative pairs need at least two relations".to_string()));
    }

    let mut rng = rng::seeded(seed);
    let mut pairs = Vec::with_capacity(n);
    let all = corpus.instances();
    for _ in 0..n_pos {
        let members = corpus.positions_of(pos_rels[rng.gen_range(0..pos_rels.len())]);
        let a = rng.gen_range(0..members.len());
        let mut b = rng.gen_range(0..members.len() - 1);
        if b >= a {
            b += 1;
        }
        pairs.push(LabeledPair { left: &all[members[a]], right: &all[members[b]], same_relation: true });
    }
    for _ in 0..n_neg {
        let ra = rng.gen_range(0..rels.len());
        let mut rb = rng.gen_range(0..rels.len() - 1);
        if rb >= ra {
            rb += 1;
        }
        let ma = corpus.positions_of(&rels[ra]);
        let mb = corpus.positions_of(&rels[rb]);
        pairs.push(LabeledPair {
            left: &all[ma[rng.gen_range(0..ma.len())]],
            right: &all[mb[rng.gen_range(0..mb.len())]],
            same_relation: false,
        });
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

/// `bs` positions drawn uniformly with replacement from `0..len`.
pub fn sample_positions(len: usize, bs: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok((0..bs).map(|_| rng.gen_range(0..len)).collect())
}

/// Negative batch for fine-tuning: `bs` instances drawn uniformly with
/// replacement from the whole labeled corpus.
pub fn sample_negative_batch(corpus: &LabeledCorpus, bs: usize, seed: u64) -> Result<Vec<&Instance>> {
    let mut rng = rng::seeded(seed);
    let picks = sample_positions(corpus.len(), bs, &mut rng)?;
    Ok(picks.into_iter().map(|i| &corpus.instances()[i]).collect())
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn span_invariants_are_enforced() {
        let toks = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let bad_end = Instance::new("x", toks.clone(), Span::new(0, 4, "h"), Span::new(2, 3, "t"), None);
        assert!(matches!(bad_end, Err(Error::InvalidInstance { .. })));
        let overlap = Instance::new("x", toks.clone(), Span::new(0, 2, "h"), Span::new(1, 3, "t"), None);
        assert!(overlap.is_err());
        let empty_entity = Instance::new("x", toks.clone(), Span::new(0, 1, ""), Span::new(2, 3, "t"), None);
        assert!(empty_entity.is_err());
        let empty_span = Instance::new("x", toks, Span::new(1, 1, "h"), Span::new(2, 3, "t"), None);
        assert!(empty_span.is_err());
    }

    #[test]
    fn empty_corpus_has_empty_index() {
        let t = UnlabeledCorpus::new(vec![]).unwrap();
        assert!(build_pair_index(&t).is_empty());
    }

    #[test]
    fn shared_pair_is_indexed_together() {
        let t = UnlabeledCorpus::new(vec![
            instance("c", 3, "Q1", "Q2", None),
            instance("a", 3, "Q1", "Q2", None),
            instance("b", 3, "Q2", "Q1", None),
        ])
        .unwrap();
        let index = build_pair_index(&t);
        assert_eq!(index.lookup(&EntityPair::new("Q1", "Q2")), ["a", "c"]);
        assert_eq!(index.lookup(&EntityPair::new("Q2", "Q1")), ["b"]);
        assert!(index.lookup(&EntityPair::new("Q9", "Q1")).is_empty());
        assert_eq!(t.positions_with_pair(&EntityPair::new("Q1", "Q2")), [1, 0]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dup = vec![instance("a", 3, "h", "t", None), instance("a", 3, "h", "t", None)];
        assert_eq!(UnlabeledCorpus::new(dup.clone()).unwrap_err(), Error::DuplicateId("a".into()));
        assert!(SeedSet::new("r", dup).is_err());
        assert_eq!(SeedSet::new("r", vec![]).unwrap_err(), Error::EmptySeedSet);
    }

    #[test]
    fn labeled_corpus_requires_relations() {
        let err = LabeledCorpus::new(vec![instance("a", 3, "h", "t", None)]).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance { .. }));
        let c = labeled(&[("r1", 2), ("r2", 3)]);
        assert_eq!(c.relations(), ["r1", "r2"]);
        assert_eq!(c.ids_of("r2"), ["r2-0", "r2-1", "r2-2"]);
    }

    #[test]
    fn rsn_pairs_respect_positive_fraction() {
        let c = labeled(&[("r1", 5), ("r2", 5), ("r3", 2)]);
        let pairs = sample_rsn_pairs(&c, 10, 0.5, 7).unwrap();
        assert_eq!(pairs.len(), 10);
        assert_eq!(pairs.iter().filter(|p| p.same_relation).count(), 5);
        for p in &pairs {
            assert_eq!(p.left.relation == p.right.relation, p.same_relation);
            if p.same_relation {
                assert_ne!(p.left.id, p.right.id);
            }
        }
        let again = sample_rsn_pairs(&c, 10, 0.5, 7).unwrap();
        let ids = |v: &[LabeledPair<'_>]| v.iter().map(|p| (p.left.id.clone(), p.right.id.clone())).collect::<Vec<_>>();
        assert_eq!(ids(&pairs), ids(&again));
    }

    #[test]
    fn rsn_pairs_need_two_relations_for_negatives() {
        let c = labeled(&[("r1", 5)]);
        assert!(matches!(sample_rsn_pairs(&c, 10, 0.5, 1), Err(Error::Infeasible(_))));
        assert_eq!(sample_rsn_pairs(&c, 4, 1.0, 1).unwrap().len(), 4);
        let singletons = labeled(&[("r1", 1), ("r2", 1)]);
        assert!(sample_rsn_pairs(&singletons, 4, 0.5, 1).is_err());
    }

    #[test]
    fn negative_batches_are_seeded() {
        let c = labeled(&[("r1", 3), ("r2", 3)]);
        let a = sample_negative_batch(&c, 10, 3).unwrap();
        let b = sample_negative_batch(&c, 10, 3).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
        let empty = LabeledCorpus::new(vec![]).unwrap();
        assert_eq!(sample_negative_batch(&empty, 10, 3).unwrap_err(), Error::EmptyCorpus);
    }

    #[test]
    fn negative_batches_are_uniform() {
        // 4 instances, 1e5 draws: each count ~ Binomial(1e5, 1/4).
        let c = labeled(&[("r1", 2), ("r2", 2)]);
        let draws = sample_negative_batch(&c, 100_000, 11).unwrap();
        let mut counts = BTreeMap::new();
        for x in draws {
            *counts.entry(x.id.clone()).or_insert(0usize) += 1;
        }
        let n = 100_000.0_f64;
        let sigma = libm::sqrt(n * 0.25 * 0.75);
        assert_eq!(counts.len(), 4);
        for (_, k) in counts {
            assert!((k as f64 - n / 4.0).abs() < 3.0 * sigma, "count {k}");
        }
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Instance>> {
        prop::collection::vec((0u8..6, 0u8..6, 3usize..8), 0..60).prop_map(|specs| {
            specs
                .into_iter()
                .enumerate()
                .map(|(i, (h, t, n))| instance(&format!("id{i:03}"), n, &format!("E{h}"), &format!("E{t}"), None))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn index_is_complete_and_sound(instances in arb_corpus()) {
            let t = UnlabeledCorpus::new(instances.clone()).unwrap();
            let index = build_pair_index(&t);
            for x in &instances {
                prop_assert!(index.lookup(&x.entity_pair()).contains(&x.id));
            }
            let mut total = 0;
            for (pair, ids) in index.iter() {
                prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
                for id in ids {
                    prop_assert!(t.get(id).unwrap().has_pair(pair));
                }
                total += ids.len();
            }
            prop_assert_eq!(total, instances.len());
        }
    }
}
