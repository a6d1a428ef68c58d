//! Comparison systems scored on the same query sets as the bootstrapper.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::classifier::{finetune, ClassifierHead, FinetuneConfig};
use crate::corpus::{Instance, LabeledCorpus, SeedSet, UnlabeledCorpus};
use crate::encoder::Encoder;
use crate::error::Result;
use crate::rsn::{mean_similarity, RsnModel};

/// `g(x)` for every instance, keyed by id.
pub fn classifier_predictions<E: Encoder + ?Sized>(
    head: &ClassifierHead,
    encoder: &E,
    instances: &[Instance],
) -> Result<BTreeMap<String, f64>> {
    instances.iter().map(|x| Ok((x.id.clone(), head.predict(encoder, x)?))).collect()
}

/// Plain fine-tuning of a fresh head on the seeds alone.
pub fn finetune_baseline<E: Encoder + ?Sized>(
    encoder: &E,
    seeds: &SeedSet,
    existing: &LabeledCorpus,
    cfg: &FinetuneConfig,
) -> Result<ClassifierHead> {
    Ok(finetune(cfg.initial_head(encoder.dim()), encoder, seeds, existing, cfg)?.0)
}

/// Mean siamese similarity of each instance to the seeds; thresholding it
/// turns the metric into a classifier.
pub fn rsn_predictions(model: &RsnModel, seeds: &SeedSet, instances: &[Instance]) -> Result<BTreeMap<String, f64>> {
    let refs = seeds.instances().iter().map(|x| model.encode(x)).collect::<Result<Vec<_>>>()?;
    instances
        .iter()
        .map(|x| {
            let f = model.encode(x)?;
            Ok((x.id.clone(), mean_similarity(&model.head, &f, refs.iter().map(|r| r.as_slice()))?))
        })
        .collect()
}

/// Trusts every unlabeled sentence that mentions a seed entity pair, then
/// fine-tunes on the enlarged set. Returns the head and the enlarged set.
pub fn distant_supervision<E: Encoder + ?Sized>(
    encoder: &E,
    seeds: &SeedSet,
    existing: &LabeledCorpus,
    unlabeled: &UnlabeledCorpus,
    cfg: &FinetuneConfig,
) -> Result<(ClassifierHead, SeedSet)> {
    let mut expanded = seeds.clone();
    for pair in seeds.entity_pairs() {
        for p in unlabeled.positions_with_pair(&pair) {
            let x = &unlabeled.instances()[p];
            if !expanded.contains(&x.id) {
                expanded.push(x.unlabeled())?;
            }
        }
    }
    let head = finetune_baseline(encoder, &expanded, existing, cfg)?;
    Ok((head, expanded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::instance;
    use crate::corpus::Span;
    use crate::encoder::EmbeddingStore;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn distant_supervision_pulls_in_every_pair_match() {
        let mk = |id: &str, h: &str, t: &str| {
            Instance::new(id, vec!["a".to_string(), "b".to_string()], Span::new(0, 1, h), Span::new(1, 2, t), None).unwrap()
        };
        let t = UnlabeledCorpus::new(vec![mk("u1", "A", "B"), mk("u2", "A", "B"), mk("u3", "B", "A"), mk("u4", "C", "D")]).unwrap();
        let seeds = SeedSet::new("r", vec![mk("s1", "A", "B")]).unwrap();
        let existing = LabeledCorpus::new(vec![instance("n1", 2, "x", "y", Some("p"))]).unwrap();
        let mut store = EmbeddingStore::new(1);
        for id in ["u1", "u2", "u3", "u4", "s1"] {
            store.insert(id, vec![1.0]).unwrap();
        }
        store.insert("n1", vec![-1.0]).unwrap();
        let cfg = FinetuneConfig { epochs: 5, ..Default::default() };
        let (head, expanded) = distant_supervision(&store, &seeds, &existing, &t, &cfg).unwrap();
        let ids: Vec<&str> = expanded.instances().iter().map(|x| x.id.as_str()).collect();
        assert_eq!(ids, ["s1", "u1", "u2"]);
        assert!(head.probability(&[1.0]).unwrap() > head.probability(&[-1.0]).unwrap());
    }
}
