//! Convolutional sentence encoder with hand-written backpropagation.
//!
//! Each token is represented by its word embedding concatenated with two
//! position embeddings (offset to the head span start and to the tail span
//! start, clipped to `±max_len`). A width-`window` convolution with tanh
//! activation runs over the sentence, zero-padded at both borders, and every
//! filter is max-pooled over positions. Pooling ties go to the lowest
//! position, which fixes where gradients are routed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Encoder, Representation, Vocab, WordVectors};
use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub window: usize,
    pub filters: usize,
    pub max_len: usize,
}

impl Default for ConvConfig {
    fn default() -> Self {
        ConvConfig { word_dim: 50, pos_dim: 5, window: 3, filters: 230, max_len: 120 }
    }
}

impl ConvConfig {
    /// Width of one token feature vector.
    pub fn input_dim(&self) -> usize {
        self.word_dim + 2 * self.pos_dim
    }

    /// Rows in each position-embedding table.
    pub fn pos_rows(&self) -> usize {
        2 * self.max_len + 1
    }

    fn left_pad(&self) -> usize {
        (self.window - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || self.window == 0 || self.filters == 0 || self.max_len == 0 {
            return Err(Error::InvalidConfig(format!("degenerate encoder shape {self:?}")));
        }
        Ok(())
    }
}

/// Trainable tensors of the encoder, stored row-major. The same struct is
/// used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `[vocab × word_dim]`
    pub word_emb: Vec<f64>,
    /// `[(2·max_len+1) × pos_dim]`
    pub pos_emb_head: Vec<f64>,
    /// `[(2·max_len+1) × pos_dim]`
    pub pos_emb_tail: Vec<f64>,
    /// `[filters × window × input_dim]`
    pub conv_filters: Vec<f64>,
    /// `[filters]`
    pub conv_bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(config: &ConvConfig, vocab_len: usize) -> Self {
        ConvParams {
            word_emb: vec![0.0; vocab_len * config.word_dim],
            pos_emb_head: vec![0.0; config.pos_rows() * config.pos_dim],
            pos_emb_tail: vec![0.0; config.pos_rows() * config.pos_dim],
            conv_filters: vec![0.0; config.filters * config.window * config.input_dim()],
            conv_bias: vec![0.0; config.filters],
        }
    }

    pub fn same_shape(&self, other: &ConvParams) -> bool {
        self.tensors().iter().zip(other.tensors().iter()).all(|(a, b)| a.len() == b.len())
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.word_emb, &self.pos_emb_head, &self.pos_emb_tail, &self.conv_filters, &self.conv_bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.word_emb,
            &mut self.pos_emb_head,
            &mut self.pos_emb_tail,
            &mut self.conv_filters,
            &mut self.conv_bias,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Winning position of every filter from a forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolTrace {
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    config: ConvConfig,
    vocab: Vocab,
    params: ConvParams,
}

/// Embedding rows touched by one sentence.
struct Rows {
    word: Vec<usize>,
    head: Vec<usize>,
    tail: Vec<usize>,
}

impl ConvEncoder {
    pub fn new(config: ConvConfig, vocab: Vocab, params: ConvParams) -> Result<Self> {
        config.validate()?;
        let expected = ConvParams::zeros(&config, vocab.len());
        if !params.same_shape(&expected) {
            let found = params.num_params();
            return Err(Error::DimensionMismatch { expected: expected.num_params(), found });
        }
        Ok(ConvEncoder { config, vocab, params })
    }

    /// Word and position embeddings uniform in ±0.1, filters uniform in the
    /// Glorot range, zero bias.
    pub fn random(config: ConvConfig, vocab: Vocab, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ConvParams::zeros(&config, vocab.len());
        for v in params.word_emb.iter_mut().chain(&mut params.pos_emb_head).chain(&mut params.pos_emb_tail) {
            *v = rng.gen_range(-0.1..0.1);
        }
        let fan_in = (config.window * config.input_dim()) as f64;
        let limit = math::sqrt(6.0 / (fan_in + config.filters as f64));
        for v in &mut params.conv_filters {
            *v = rng.gen_range(-limit..limit);
        }
        Ok(ConvEncoder { config, vocab, params })
    }

    /// Overwrites the rows of known tokens with pretrained vectors. Returns
    /// how many rows were replaced.
    pub fn load_word_vectors(&mut self, vectors: &WordVectors) -> Result<usize> {
        if vectors.dim != self.config.word_dim {
            return Err(Error::DimensionMismatch { expected: self.config.word_dim, found: vectors.dim });
        }
        let d = self.config.word_dim;
        let mut replaced = 0;
        for (token, v) in &vectors.vectors {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
            if self.vocab.contains(token) {
                let row = self.vocab.id(token);
                self.params.word_emb[row * d..(row + 1) * d].copy_from_slice(v);
                replaced += 1;
            }
        }
        Ok(replaced)
    }

    pub fn config(&self) -> &ConvConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ConvParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ConvParams {
        &mut self.params
    }

    /// Gradient buffer with the encoder's shapes.
    pub fn zero_grads(&self) -> ConvParams {
        ConvParams::zeros(&self.config, self.vocab.len())
    }

    fn rows(&self, x: &Instance) -> Rows {
        let len = x.tokens.len().min(self.config.max_len);
        let m = self.config.max_len as isize;
        let offset = |i: usize, anchor: usize| ((i as isize - anchor as isize).clamp(-m, m) + m) as usize;
        Rows {
            word: x.tokens[..len].iter().map(|t| self.vocab.id(t)).collect(),
            head: (0..len).map(|i| offset(i, x.head.start)).collect(),
            tail: (0..len).map(|i| offset(i, x.tail.start)).collect(),
        }
    }

    /// Token feature matrix `[len × input_dim]`.
    fn features(&self, rows: &Rows) -> Vec<f64> {
        let c = &self.config;
        let (dw, dp) = (c.word_dim, c.pos_dim);
        let width = c.input_dim();
        let mut feats = vec![0.0; rows.word.len() * width];
        for (i, row) in feats.chunks_exact_mut(width).enumerate() {
            row[..dw].copy_from_slice(&self.params.word_emb[rows.word[i] * dw..(rows.word[i] + 1) * dw]);
            row[dw..dw + dp].copy_from_slice(&self.params.pos_emb_head[rows.head[i] * dp..(rows.head[i] + 1) * dp]);
            row[dw + dp..].copy_from_slice(&self.params.pos_emb_tail[rows.tail[i] * dp..(rows.tail[i] + 1) * dp]);
        }
        feats
    }

    /// Window slots `(k, q)` that fall inside a sentence of `len` tokens for
    /// output position `p`.
    fn window_slots(&self, p: usize, len: usize) -> impl Iterator<Item = (usize, usize)> {
        let left = self.config.left_pad();
        (0..self.config.window).filter_map(move |k| {
            let q = (p + k).checked_sub(left)?;
            (q < len).then_some((k, q))
        })
    }

    fn preactivation(&self, feats: &[f64], len: usize, f: usize, p: usize) -> f64 {
        let width = self.config.input_dim();
        let filter = &self.params.conv_filters[f * self.config.window * width..(f + 1) * self.config.window * width];
        let mut z = self.params.conv_bias[f];
        for (k, q) in self.window_slots(p, len) {
            z += math::dot(&filter[k * width..(k + 1) * width], &feats[q * width..(q + 1) * width]);
        }
        z
    }

    /// Forward pass that also reports the pooling winners.
    pub fn forward(&self, x: &Instance) -> (Representation, PoolTrace) {
        let rows = self.rows(x);
        let len = rows.word.len();
        let feats = self.features(&rows);
        let mut out = Vec::with_capacity(self.config.filters);
        let mut argmax = Vec::with_capacity(self.config.filters);
        // tanh is increasing, so pooling pre-activations picks the same winner.
        for f in 0..self.config.filters {
            let mut best = self.preactivation(&feats, len, f, 0);
            let mut best_p = 0;
            for p in 1..len {
                let z = self.preactivation(&feats, len, f, p);
                if z > best {
                    best = z;
                    best_p = p;
                }
            }
            out.push(math::tanh(best));
            argmax.push(best_p);
        }
        (Representation::new(out), PoolTrace { argmax })
    }

    /// Accumulates `∂(upstream · encode(x)) / ∂params` into `grads`, using the
    /// pooling winners and outputs of a matching forward pass.
    pub fn backward_into(
        &self,
        x: &Instance,
        output: &[f64],
        trace: &PoolTrace,
        upstream: &[f64],
        grads: &mut ConvParams,
    ) -> Result<()> {
        let c = &self.config;
        if upstream.len() != c.filters || output.len() != c.filters || trace.argmax.len() != c.filters {
            return Err(Error::DimensionMismatch { expected: c.filters, found: upstream.len() });
        }
        if !grads.same_shape(&self.params) {
            return Err(Error::DimensionMismatch { expected: self.params.num_params(), found: grads.num_params() });
        }
        let rows = self.rows(x);
        let len = rows.word.len();
        let feats = self.features(&rows);
        let width = c.input_dim();
        let (dw, dp) = (c.word_dim, c.pos_dim);
        let fsize = c.window * width;
        let mut dfeats = vec![0.0; len * width];
        for f in 0..c.filters {
            let g = upstream[f];
            if g == 0.0 {
                continue;
            }
            let dz = g * (1.0 - output[f] * output[f]);
            grads.conv_bias[f] += dz;
            let p = trace.argmax[f];
            for (k, q) in self.window_slots(p, len) {
                let base = f * fsize + k * width;
                let feat = &feats[q * width..(q + 1) * width];
                let gfilter = &mut grads.conv_filters[base..base + width];
                for (gw, &v) in gfilter.iter_mut().zip(feat) {
                    *gw += dz * v;
                }
                let filter = &self.params.conv_filters[base..base + width];
                for (d, &w) in dfeats[q * width..(q + 1) * width].iter_mut().zip(filter) {
                    *d += dz * w;
                }
            }
        }
        for (i, d) in dfeats.chunks_exact(width).enumerate() {
            let add = |dst: &mut [f64], src: &[f64]| dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
            add(&mut grads.word_emb[rows.word[i] * dw..(rows.word[i] + 1) * dw], &d[..dw]);
            add(&mut grads.pos_emb_head[rows.head[i] * dp..(rows.head[i] + 1) * dp], &d[dw..dw + dp]);
            add(&mut grads.pos_emb_tail[rows.tail[i] * dp..(rows.tail[i] + 1) * dp], &d[dw + dp..]);
        }
        Ok(())
    }

    /// Gradients of `upstream · encode(x)` with respect to every parameter.
    pub fn encode_backward(&self, x: &Instance, upstream: &[f64]) -> Result<ConvParams> {
        let (out, trace) = self.forward(x);
        let mut grads = self.zero_grads();
        self.backward_into(x, &out, &trace, upstream, &mut grads)?;
        Ok(grads)
    }
}

impl Encoder for ConvEncoder {
    fn dim(&self) -> usize {
        self.config.filters
    }

    fn encode(&self, x: &Instance) -> Result<Representation> {
        Ok(self.forward(x).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;
    use crate::rng;
    use alloc::string::{String, ToString};

    fn sentence(tokens: &[&str], head: (usize, usize), tail: (usize, usize)) -> Instance {
        Instance::new(
            "s",
            tokens.iter().map(|t| t.to_string()).collect(),
            Span::new(head.0, head.1, "H"),
            Span::new(tail.0, tail.1, "T"),
            None,
        )
        .unwrap()
    }

    fn small_config() -> ConvConfig {
        ConvConfig { word_dim: 3, pos_dim: 2, window: 3, filters: 4, max_len: 6 }
    }

    #[test]
    fn zero_parameters_give_zero_vector() {
        let cfg = small_config();
        let vocab = Vocab::new(["a", "b"]);
        let enc = ConvEncoder::new(cfg, vocab.clone(), ConvParams::zeros(&cfg, vocab.len())).unwrap();
        let x = sentence(&["a", "b", "zzz"], (0, 1), (2, 3));
        assert_eq!(enc.encode(&x).unwrap().as_slice(), [0.0; 4]);
    }

    #[test]
    fn single_token_window_one_is_tanh_of_affine() {
        let cfg = ConvConfig { word_dim: 2, pos_dim: 1, window: 1, filters: 2, max_len: 3 };
        let vocab = Vocab::new(["a"]);
        let mut params = ConvParams::zeros(&cfg, vocab.len());
        params.word_emb.copy_from_slice(&[0.0, 0.0, 0.5, -1.0]);
        params.pos_emb_head[3] = 0.2; // offset 0 row
        params.pos_emb_tail[3] = -0.3;
        params.conv_filters.copy_from_slice(&[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.25, 1.0]);
        params.conv_bias.copy_from_slice(&[0.1, -0.2]);
        let enc = ConvEncoder::new(cfg, vocab, params).unwrap();
        // Head and tail would overlap on one token, so build the instance directly.
        let x = Instance {
            id: "s".into(),
            tokens: alloc::vec!["a".to_string()],
            head: Span::new(0, 1, "H"),
            tail: Span::new(0, 1, "T"),
            relation: None,
        };
        let expect0 = libm::tanh(0.5 - 2.0 + 0.6 - 1.2 + 0.1);
        let expect1 = libm::tanh(-0.5 - 0.5 + 0.05 - 0.3 - 0.2);
        let got = enc.encode(&x).unwrap();
        assert!((got[0] - expect0).abs() < 1e-15 && (got[1] - expect1).abs() < 1e-15);
    }

    /// Naive forward pass: builds the padded feature matrix explicitly and
    /// loops over every (filter, position, slot, channel).
    fn oracle_forward(enc: &ConvEncoder, x: &Instance) -> Vec<f64> {
        let c = enc.config();
        let p = enc.params();
        let len = x.tokens.len().min(c.max_len);
        let width = c.input_dim();
        let pad = (c.window - 1) / 2;
        let mut padded = vec![vec![0.0; width]; len + c.window];
        for i in 0..len {
            let w = enc.vocab().id(&x.tokens[i]);
            let ho = (i as i64 - x.head.start as i64).clamp(-(c.max_len as i64), c.max_len as i64) + c.max_len as i64;
            let to = (i as i64 - x.tail.start as i64).clamp(-(c.max_len as i64), c.max_len as i64) + c.max_len as i64;
            let mut row = Vec::new();
            for j in 0..c.word_dim {
                row.push(p.word_emb[w * c.word_dim + j]);
            }
            for j in 0..c.pos_dim {
                row.push(p.pos_emb_head[ho as usize * c.pos_dim + j]);
            }
            for j in 0..c.pos_dim {
                row.push(p.pos_emb_tail[to as usize * c.pos_dim + j]);
            }
            padded[i + pad] = row;
        }
        (0..c.filters)
            .map(|f| {
                let mut best = f64::NEG_INFINITY;
                for pos in 0..len {
                    let mut z = p.conv_bias[f];
                    for k in 0..c.window {
                        for ch in 0..width {
                            z += p.conv_filters[(f * c.window + k) * width + ch] * padded[pos + k][ch];
                        }
                    }
                    best = best.max(libm::tanh(z));
                }
                best
            })
            .collect()
    }

    #[test]
    fn matches_dense_oracle_on_three_tokens() {
        let cfg = ConvConfig { word_dim: 2, pos_dim: 1, window: 2, filters: 2, max_len: 4 };
        let vocab = Vocab::new(["x", "y", "z"]);
        let mut params = ConvParams::zeros(&cfg, vocab.len());
        for (i, v) in params.word_emb.iter_mut().enumerate() {
            *v = 0.1 * i as f64 - 0.3;
        }
        for (i, v) in params.pos_emb_head.iter_mut().enumerate() {
            *v = 0.05 * i as f64;
        }
        for (i, v) in params.pos_emb_tail.iter_mut().enumerate() {
            *v = -0.04 * i as f64;
        }
        params.conv_filters.copy_from_slice(&[0.3, -0.2, 0.5, 0.1, -0.4, 0.6, 0.2, 0.7, -0.1, -0.5, 0.9, 0.05, 0.3, -0.6, 0.4, 0.8]);
        params.conv_bias.copy_from_slice(&[0.05, -0.1]);
        let enc = ConvEncoder::new(cfg, vocab, params).unwrap();
        let x = sentence(&["x", "z", "y"], (0, 1), (2, 3));
        let got = enc.encode(&x).unwrap();
        let want = oracle_forward(&enc, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn random_encoders_match_oracle() {
        let mut r = rng::seeded(5);
        for trial in 0..20 {
            let cfg = ConvConfig { word_dim: 3, pos_dim: 2, window: 1 + trial % 4, filters: 5, max_len: 5 };
            let vocab = Vocab::new(["a", "b", "c", "d"]);
            let enc = ConvEncoder::random(cfg, vocab, &mut r).unwrap();
            let toks = ["a", "q", "c", "b", "d", "a", "c"];
            let x = sentence(&toks, (1, 2), (4, 6));
            let got = enc.encode(&x).unwrap();
            for (g, w) in got.iter().zip(oracle_forward(&enc, &x)) {
                assert!((g - w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut r = rng::seeded(1);
        let enc = ConvEncoder::random(small_config(), Vocab::new(["a", "b"]), &mut r).unwrap();
        let x = sentence(&["a", "b", "a", "c"], (0, 1), (2, 3));
        let g = enc.encode_backward(&x, &[0.0; 4]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(matches!(enc.encode_backward(&x, &[1.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pooling_tie_routes_to_lowest_position() {
        // One filter that only sees the word channel; tokens 1 and 3 are the
        // same word with identical position rows, so positions 1 and 3 tie.
        let cfg = ConvConfig { word_dim: 1, pos_dim: 1, window: 1, filters: 1, max_len: 4 };
        let vocab = Vocab::new(["hi", "lo"]);
        let mut params = ConvParams::zeros(&cfg, vocab.len());
        params.word_emb[vocab.id("hi")] = 1.0;
        params.word_emb[vocab.id("lo")] = -1.0;
        params.conv_filters.copy_from_slice(&[1.0, 0.0, 0.0]);
        let enc = ConvEncoder::new(cfg, vocab.clone(), params).unwrap();
        let x = sentence(&["lo", "hi", "lo", "hi"], (0, 1), (2, 3));
        let (out, trace) = enc.forward(&x);
        assert_eq!(trace.argmax, [1]);
        let g = enc.encode_backward(&x, &[1.0]).unwrap();
        // Only the head-offset row of position 1 (offset +1) receives gradient.
        let head_rows: Vec<usize> =
            g.pos_emb_head.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        assert!(head_rows.is_empty());
        let dz = 1.0 - out[0] * out[0];
        assert_eq!(g.conv_filters[1], dz * 0.0);
        assert_eq!(g.word_emb[vocab.id("hi")], dz);
        assert_eq!(g.conv_filters[0], dz * 1.0);
    }

    #[test]
    fn load_word_vectors_replaces_known_rows() {
        let mut r = rng::seeded(2);
        let cfg = ConvConfig { word_dim: 2, ..small_config() };
        let mut enc = ConvEncoder::random(cfg, Vocab::new(["a", "b"]), &mut r).unwrap();
        let mut wv = WordVectors { dim: 2, ..Default::default() };
        wv.vectors.insert(String::from("b"), alloc::vec![7.0, 8.0]);
        wv.vectors.insert(String::from("nope"), alloc::vec![1.0, 1.0]);
        assert_eq!(enc.load_word_vectors(&wv).unwrap(), 1);
        let row = enc.vocab().id("b");
        assert_eq!(&enc.params().word_emb[row * 2..row * 2 + 2], &[7.0, 8.0]);
        let bad = WordVectors { dim: 3, ..Default::default() };
        assert!(enc.load_word_vectors(&bad).is_err());
    }
}
