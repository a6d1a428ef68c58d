//! Model files.
//!
//! Layout, little-endian: `"NSCKPT"`, u16 format version, then sections of
//! u8 tag, u64 payload length, payload. The first section is the encoder
//! (convolutional, or an embedded NSEMB1 store); a distance head and any
//! number of named relation heads may follow. Serialization is a pure
//! function of the model, so equal models give equal bytes.

use std::fs;
use std::path::Path;

use snowball_core::encoder::{ConvParams, Vocab};
use snowball_core::{ClassifierHead, ConvConfig, ConvEncoder, DistanceHead, InstanceEncoder, RsnModel};

use crate::embstore::{decode_store, encode_store, Cursor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"NSCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

const TAG_CONV: u8 = 1;
const TAG_STORE: u8 = 2;
const TAG_DISTANCE: u8 = 3;
const TAG_RELATION: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub encoder: InstanceEncoder,
    pub distance_head: Option<DistanceHead>,
    /// Relation heads in insertion order, names unique.
    pub heads: Vec<(String, ClassifierHead)>,
}

impl ModelFile {
    pub fn encoder_only(encoder: InstanceEncoder) -> Self {
        ModelFile { encoder, distance_head: None, heads: Vec::new() }
    }

    pub fn from_rsn(model: RsnModel) -> Self {
        ModelFile { encoder: model.encoder, distance_head: Some(model.head), heads: Vec::new() }
    }

    pub fn into_rsn(self) -> std::result::Result<RsnModel, String> {
        let head = self.distance_head.ok_or("model file has no distance head")?;
        RsnModel::with_head(self.encoder, head).map_err(|e| e.to_string())
    }

    /// Adds a relation head, replacing any earlier head of the same name.
    pub fn set_head(&mut self, relation: &str, head: ClassifierHead) {
        match self.heads.iter_mut().find(|(r, _)| r == relation) {
            Some(slot) => slot.1 = head,
            None => self.heads.push((relation.to_string(), head)),
        }
    }

    pub fn head(&self, relation: &str) -> Option<&ClassifierHead> {
        self.heads.iter().find(|(r, _)| r == relation).map(|(_, h)| h)
    }

    pub fn to_bytes(&self) -> std::result::Result<Vec<u8>, String> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        match &self.encoder {
            InstanceEncoder::Conv(c) => section(&mut out, TAG_CONV, &conv_payload(c)?),
            InstanceEncoder::Lookup(s) => section(&mut out, TAG_STORE, &encode_store(s)?),
        }
        if let Some(h) = &self.distance_head {
            let mut p = Vec::new();
            put_vec(&mut p, &h.w)?;
            p.extend_from_slice(&h.b.to_le_bytes());
            section(&mut out, TAG_DISTANCE, &p);
        }
        for (name, h) in &self.heads {
            let mut p = Vec::new();
            put_str(&mut p, name)?;
            put_vec(&mut p, &h.w)?;
            p.extend_from_slice(&h.b.to_le_bytes());
            section(&mut out, TAG_RELATION, &p);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut c = Cursor::new(bytes);
        if c.take(CHECKPOINT_MAGIC.len()).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err("not an NSCKPT model file".into());
        }
        let version = c.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported model file version {version}"));
        }
        let mut encoder = None;
        let mut distance_head = None;
        let mut heads: Vec<(String, ClassifierHead)> = Vec::new();
        while !c.is_empty() {
            let tag = c.take(1)?[0];
            let len = usize::try_from(c.u64()?).map_err(|_| "section too large")?;
            let payload = c.take(len)?;
            let mut p = Cursor::new(payload);
            if encoder.is_none() && !matches!(tag, TAG_CONV | TAG_STORE) {
                return Err("model file does not start with an encoder section".into());
            }
            match tag {
                TAG_CONV | TAG_STORE if encoder.is_some() => return Err("more than one encoder section".into()),
                TAG_CONV => encoder = Some(InstanceEncoder::Conv(read_conv(&mut p)?)),
                TAG_STORE => {
                    encoder = Some(InstanceEncoder::Lookup(decode_store(payload)?));
                    continue;
                }
                TAG_DISTANCE if distance_head.is_some() => return Err("more than one distance head".into()),
                TAG_DISTANCE => {
                    let w = get_vec(&mut p)?;
                    distance_head = Some(DistanceHead { w, b: p.f64()? });
                }
                TAG_RELATION => {
                    let name = get_str(&mut p)?;
                    let w = get_vec(&mut p)?;
                    let b = p.f64()?;
                    if heads.iter().any(|(r, _)| *r == name) {
                        return Err(format!("two heads for relation `{name}`"));
                    }
                    heads.push((name, ClassifierHead { w, b }));
                }
                other => return Err(format!("unknown section tag {other}")),
            }
            if !p.is_empty() {
                return Err(format!("section {tag} has trailing bytes"));
            }
        }
        let encoder = encoder.ok_or("model file has no encoder")?;
        let dim = snowball_core::Encoder::dim(&encoder);
        let widths = distance_head.iter().map(|h| h.w.len()).chain(heads.iter().map(|(_, h)| h.w.len()));
        if let Some(w) = widths.into_iter().find(|&w| w != dim) {
            return Err(format!("head of width {w} on an encoder of width {dim}"));
        }
        Ok(ModelFile { encoder, distance_head, heads })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, None, m))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes().map_err(|m| Error::format(path, None, m))?;
        fs::write(path, bytes).map_err(|e| Error::write(path, e))
    }
}

fn section(out: &mut Vec<u8>, tag: u8, payload: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn put_u32(out: &mut Vec<u8>, n: usize) -> std::result::Result<(), String> {
    let n = u32::try_from(n).map_err(|_| format!("{n} does not fit in 32 bits"))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> std::result::Result<(), String> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) -> std::result::Result<(), String> {
    put_u32(out, v.len())?;
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

fn get_str(c: &mut Cursor<'_>) -> std::result::Result<String, String> {
    let n = c.u32()? as usize;
    String::from_utf8(c.take(n)?.to_vec()).map_err(|_| "string is not UTF-8".to_string())
}

fn get_vec(c: &mut Cursor<'_>) -> std::result::Result<Vec<f64>, String> {
    let n = c.u32()? as usize;
    (0..n).map(|_| c.f64()).collect()
}

fn conv_payload(enc: &ConvEncoder) -> std::result::Result<Vec<u8>, String> {
    let cfg = enc.config();
    let mut p = Vec::new();
    for n in [cfg.word_dim, cfg.pos_dim, cfg.window, cfg.filters, cfg.max_len] {
        put_u32(&mut p, n)?;
    }
    // Row 0 is the implicit unknown token.
    let tokens = &enc.vocab().tokens()[1..];
    put_u32(&mut p, tokens.len())?;
    for t in tokens {
        put_str(&mut p, t)?;
    }
    for t in enc.params().tensors() {
        put_vec(&mut p, t)?;
    }
    Ok(p)
}

fn read_conv(c: &mut Cursor<'_>) -> std::result::Result<ConvEncoder, String> {
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = c.u32()? as usize;
    }
    let [word_dim, pos_dim, window, filters, max_len] = dims;
    let config = ConvConfig { word_dim, pos_dim, window, filters, max_len };
    let n = c.u32()? as usize;
    let tokens = (0..n).map(|_| get_str(c)).collect::<std::result::Result<Vec<_>, _>>()?;
    let vocab = Vocab::from_ordered(tokens);
    if vocab.len() != n + 1 {
        return Err("vocabulary repeats the unknown token".into());
    }
    let params = ConvParams {
        word_emb: get_vec(c)?,
        pos_emb_head: get_vec(c)?,
        pos_emb_tail: get_vec(c)?,
        conv_filters: get_vec(c)?,
        conv_bias: get_vec(c)?,
    };
    ConvEncoder::new(config, vocab, params).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use snowball_core::rng;
    use snowball_core::EmbeddingStore;

    fn conv() -> ConvEncoder {
        let cfg = ConvConfig { word_dim: 3, pos_dim: 2, window: 3, filters: 4, max_len: 6 };
        ConvEncoder::random(cfg, Vocab::new(["b", "a", "c"]), &mut rng::seeded(9)).unwrap()
    }

    #[test]
    fn conv_model_round_trips_exactly() {
        let mut m = ModelFile::from_rsn(RsnModel::new(conv().into()));
        m.set_head("P1", ClassifierHead { w: vec![0.1, -0.2, 0.3, 1e-300], b: -0.5 });
        m.set_head("P2", ClassifierHead::zeros(4));
        let bytes = m.to_bytes().unwrap();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.heads[0].0, "P1");
    }

    #[test]
    fn store_model_round_trips() {
        let mut s = EmbeddingStore::new(2);
        s.insert("x", vec![0.25, -1.0]).unwrap();
        let m = ModelFile::from_rsn(RsnModel::new(s.into()));
        assert_eq!(ModelFile::from_bytes(&m.to_bytes().unwrap()).unwrap(), m);
    }

    #[test]
    fn setting_a_head_twice_replaces_it() {
        let mut m = ModelFile::encoder_only(conv().into());
        m.set_head("P1", ClassifierHead::zeros(4));
        m.set_head("P1", ClassifierHead { w: vec![1.0; 4], b: 2.0 });
        assert_eq!(m.heads.len(), 1);
        assert_eq!(m.head("P1").unwrap().b, 2.0);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = ModelFile::from_rsn(RsnModel::new(conv().into())).to_bytes().unwrap();
        assert!(ModelFile::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut v = bytes.clone();
        v[6] = 9;
        assert!(ModelFile::from_bytes(&v).unwrap_err().contains("version"));
        let mut wide = ModelFile::encoder_only(conv().into());
        wide.set_head("P", ClassifierHead::zeros(5));
        assert!(ModelFile::from_bytes(&wide.to_bytes().unwrap()).unwrap_err().contains("width"));
        assert!(ModelFile::from_bytes(b"NSCKPT\x01\x00").unwrap_err().contains("no encoder"));
    }
}
