use std::path::Path;

use proptest::collection::{btree_map, vec};
use proptest::prelude::*;
use snowball::checkpoint::ModelFile;
use snowball::core::encoder::Vocab;
use snowball::core::rng::seeded;
use snowball::core::{ClassifierHead, ConvConfig, ConvEncoder, DistanceHead, EmbeddingStore, Instance, RsnModel, Span};
use snowball::embstore::{decode_store, encode_store, load_embedding_store, save_embedding_store};
use snowball::jsonl::{parse_instances, to_line};

fn store() -> impl Strategy<Value = EmbeddingStore> {
    (1usize..6).prop_flat_map(|dim| {
        btree_map("[a-zA-Z0-9_:-]{1,12}", vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), dim), 0..20)
            .prop_map(move |rows| {
                let mut s = EmbeddingStore::new(dim);
                for (id, v) in rows {
                    s.insert(id, v).unwrap();
                }
                s
            })
    })
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..12).prop_flat_map(|len| {
        (
            "[a-z0-9]{1,8}",
            vec("[^\\s\"]{1,6}|\"|é|\\\\", len),
            (0..len - 1).prop_flat_map(move |h| (Just(h), h + 1..len)),
            "Q[0-9]{1,4}",
            "Q[0-9]{1,4}",
            proptest::option::of("P[0-9]{1,3}"),
        )
            .prop_map(|(id, tokens, (h, t), he, te, rel)| {
                Instance::new(id, tokens, Span::new(h, h + 1, he), Span::new(t, t + 1, te), rel).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn embedding_store_round_trips(s in store()) {
        let bytes = encode_store(&s).unwrap();
        let back = decode_store(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(encode_store(&back).unwrap(), bytes);
    }

    #[test]
    fn store_models_round_trip(s in store(), b in -5.0f64..5.0, heads in vec((-3.0f64..3.0, "[A-Z][0-9]{0,3}"), 0..4)) {
        let dim = s.dim();
        let mut m = ModelFile::from_rsn(RsnModel::with_head(s.into(), DistanceHead { w: vec![-b.abs(); dim], b }).unwrap());
        for (x, name) in heads {
            m.set_head(&name, ClassifierHead { w: vec![x; dim], b: -x });
        }
        let bytes = m.to_bytes().unwrap();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn conv_models_round_trip(seed in any::<u64>(), words in 1usize..5, pos in 1usize..4, window in 1usize..4, filters in 1usize..6) {
        let cfg = ConvConfig { word_dim: words, pos_dim: pos, window, filters, max_len: 7 };
        let enc = ConvEncoder::random(cfg, Vocab::new(["z", "y", "x"]), &mut seeded(seed)).unwrap();
        let m = ModelFile::from_rsn(RsnModel::new(enc.into()));
        let bytes = m.to_bytes().unwrap();
        prop_assert_eq!(ModelFile::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn truncated_models_are_rejected(s in store(), cut in 1usize..29) {
        // The trailing distance-head section is at least 29 bytes, so every cut lands inside it.
        let bytes = ModelFile::from_rsn(RsnModel::new(s.into())).to_bytes().unwrap();
        prop_assert!(ModelFile::from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn jsonl_round_trips(xs in vec(instance(), 1..8)) {
        let mut seen = std::collections::BTreeSet::new();
        let xs: Vec<Instance> = xs.into_iter().filter(|x| seen.insert(x.id.clone())).collect();
        let text: String = xs.iter().map(|x| to_line(x) + "\n").collect();
        let back = parse_instances(&text, Path::new("mem.jsonl")).unwrap();
        prop_assert_eq!(back, xs);
    }
}

/// Two records of dimension 3, written out byte by byte.
const GOLDEN: &[u8] = &[
    b'N', b'S', b'E', b'M', b'B', b'1', // magic
    2, 0, 0, 0, // count
    3, 0, 0, 0, // dim
    2, 0, b'i', b'1', // id "i1"
    0x00, 0x00, 0x80, 0x3f, // 1.0
    0x00, 0x00, 0x00, 0xc0, // -2.0
    0x00, 0x00, 0x00, 0x00, // 0.0
    3, 0, b'i', b'd', b'2', // id "id2"
    0x00, 0x00, 0x00, 0x3f, // 0.5
    0x00, 0x00, 0x40, 0x40, // 3.0
    0x00, 0x00, 0x80, 0xbf, // -1.0
];

#[test]
fn golden_store_loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("golden.nsemb");
    std::fs::write(&path, GOLDEN).unwrap();
    let s = load_embedding_store(&path).unwrap();
    assert_eq!((s.len(), s.dim()), (2, 3));
    assert_eq!(s.get("i1").unwrap(), &[1.0, -2.0, 0.0]);
    assert_eq!(s.get("id2").unwrap(), &[0.5, 3.0, -1.0]);

    let again = dir.path().join("again.nsemb");
    save_embedding_store(&again, &s).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), GOLDEN);

    std::fs::write(&path, &GOLDEN[..GOLDEN.len() - 1]).unwrap();
    assert!(load_embedding_store(&path).is_err());
}
