//! Post-norm transformer encoder (BERT/RoBERTa layout) over DLT weights.
//!
//! Linear weights are stored `[in, out]` so a layer is `x · W + b`.
//! Shapes expected per canonical name, for hidden size `d`:
//!
//! | name                          | shape                               |
//! |-------------------------------|-------------------------------------|
//! | `embed.word`                  | `[vocab_size, d]`                   |
//! | `embed.pos`                   | `[max_positions + position_offset, d]` |
//! | `embed.type`                  | `[type_vocab >= 1, d]` (row 0 used) |
//! | `embed.ln.{gamma,beta}`       | `[d]`                               |
//! | `layer.i.attn.{q,k,v,o}.w`    | `[d, d]`                            |
//! | `layer.i.attn.{q,k,v,o}.b`    | `[d]`                               |
//! | `layer.i.ffn.w1` / `b1`       | `[d, ffn]` / `[ffn]`                |
//! | `layer.i.ffn.w2` / `b2`       | `[ffn, d]` / `[d]`                  |
//! | `layer.i.{attn,ffn}.ln.*`     | `[d]`                               |

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::{gelu_scalar, layer_norm_row, matmul_into, softmax_row};
use crate::tokenizers::Encoding;
use crate::weights::{canonical_encoder_names, load_bundle, TensorBundle};
use crate::{Error, Result, Tensor};

/// Additive attention bias on padded keys.
const MASK_BIAS: f32 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Cls,
    Mean,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Cls => "cls",
            Pooling::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(Pooling::Cls),
            "mean" => Ok(Pooling::Mean),
            other => Err(Error::invalid(format!("unknown pooling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
    pub layer_norm_eps: f32,
    pub position_offset: usize,
    pub pooling: Pooling,
}

impl EncoderConfig {
    /// Desk-scale preset: d=64, 2 layers, 4 heads, ffn 256, 1000-token vocab.
    pub fn tiny() -> Self {
        Self {
            vocab_size: 1000,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 256,
            max_positions: 512,
            layer_norm_eps: 1e-5,
            position_offset: 0,
            pooling: Pooling::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(m));
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.vocab_size == 0 || self.ffn == 0 || self.max_positions == 0 {
            return bad("vocab_size, ffn and max_positions must be positive".into());
        }
        if self.position_offset != 0 && self.position_offset != 2 {
            return bad(format!("position_offset must be 0 or 2, got {}", self.position_offset));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return bad("layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn write_metadata(&self, b: &mut TensorBundle) {
        b.set_meta("kind", "encoder");
        b.set_meta("vocab_size", self.vocab_size);
        b.set_meta("hidden", self.hidden);
        b.set_meta("layers", self.layers);
        b.set_meta("heads", self.heads);
        b.set_meta("ffn", self.ffn);
        b.set_meta("max_positions", self.max_positions);
        b.set_meta("layer_norm_eps", self.layer_norm_eps);
        b.set_meta("position_offset", self.position_offset);
        b.set_meta("pooling", self.pooling.as_str());
    }

    pub fn from_metadata(b: &TensorBundle) -> Result<Self> {
        let cfg = Self {
            vocab_size: b.meta_parse("vocab_size")?,
            hidden: b.meta_parse("hidden")?,
            layers: b.meta_parse("layers")?,
            heads: b.meta_parse("heads")?,
            ffn: b.meta_parse("ffn")?,
            max_positions: b.meta_parse("max_positions")?,
            layer_norm_eps: b.meta_parse("layer_norm_eps")?,
            position_offset: b.meta_parse("position_offset")?,
            pooling: b.meta_parse("pooling")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expected shape of a canonical parameter (type table rows excepted).
    fn shape_of(&self, name: &str) -> Vec<usize> {
        let d = self.hidden;
        match name {
            "embed.word" => vec![self.vocab_size, d],
            "embed.pos" => vec![self.max_positions + self.position_offset, d],
            _ if name.ends_with("ffn.w1") => vec![d, self.ffn],
            _ if name.ends_with("ffn.b1") => vec![self.ffn],
            _ if name.ends_with("ffn.w2") => vec![self.ffn, d],
            _ if name.ends_with(".w") => vec![d, d],
            _ => vec![d],
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderModel {
    config: EncoderConfig,
    params: TensorBundle,
}

impl EncoderModel {
    /// Checks that every canonical parameter is present with its exact shape.
    pub fn new(config: EncoderConfig, params: TensorBundle) -> Result<Self> {
        config.validate()?;
        for name in canonical_encoder_names(config.layers) {
            if name == "embed.type" {
                let t = params
                    .get(&name)
                    .ok_or_else(|| Error::Schema("missing parameter embed.type".into()))?;
                if t.rank() != 2 || t.shape()[1] != config.hidden {
                    return Err(Error::Schema(format!(
                        "parameter embed.type has shape {:?}, expected [n, {}]",
                        t.shape(),
                        config.hidden
                    )));
                }
                continue;
            }
            params.expect(&name, &config.shape_of(&name))?;
        }
        Ok(Self { config, params })
    }

    pub fn from_bundle(bundle: TensorBundle) -> Result<Self> {
        let config = EncoderConfig::from_metadata(&bundle)?;
        Self::new(config, bundle)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bundle(load_bundle(path)?)
    }

    /// Random weights: N(0, std) for matrices and embeddings, zero biases,
    /// unit layer-norm gains.
    pub fn random(config: EncoderConfig, seed: u64, std: f32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, std).map_err(|e| Error::invalid(e.to_string()))?;
        Self::build(config, |name, shape| {
            if name.ends_with(".gamma") {
                Tensor::full(shape, 1.0)
            } else if name.ends_with(".beta") || name.ends_with(".b") || name.ends_with("ffn.b1") || name.ends_with("ffn.b2") {
                Tensor::zeros(shape)
            } else {
                Tensor::from_fn(shape, |_| normal.sample(&mut rng))
            }
        })
    }

    /// Every parameter zero, layer-norm gains included.
    pub fn zeros(config: EncoderConfig) -> Result<Self> {
        Self::build(config, |_, shape| Tensor::zeros(shape))
    }

    fn build(config: EncoderConfig, mut init: impl FnMut(&str, &[usize]) -> Tensor) -> Result<Self> {
        config.validate()?;
        let mut params = TensorBundle::new();
        for name in canonical_encoder_names(config.layers) {
            let shape = if name == "embed.type" {
                vec![1, config.hidden]
            } else {
                config.shape_of(&name)
            };
            params.insert(name.clone(), init(&name, &shape))?;
        }
        config.write_metadata(&mut params);
        Self::new(config, params)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &TensorBundle {
        &self.params
    }

    pub fn into_bundle(self) -> TensorBundle {
        self.params
    }

    fn p(&self, name: &str) -> &Tensor {
        self.params.get(name).expect("validated at construction")
    }

    fn check_input(&self, enc: &Encoding) -> Result<()> {
        if enc.ids.len() != enc.attention_mask.len() {
            return Err(Error::invalid("ids and attention mask differ in length"));
        }
        if enc.ids.len() > self.config.max_positions {
            return Err(Error::TooLong {
                len: enc.ids.len(),
                max: self.config.max_positions,
            });
        }
        if let Some(&id) = enc.ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::TokenRange {
                id,
                size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Hidden states `[seq, d]` for one input.
    pub fn forward(&self, enc: &Encoding) -> Result<Tensor> {
        let out = self.forward_batch(std::slice::from_ref(enc))?;
        let d = self.config.hidden;
        out.reshape(vec![enc.len(), d])
    }

    /// Hidden states `[batch, len, d]`, shorter inputs padded (masked) to the
    /// longest. Rows of real tokens are bitwise identical to [`forward`].
    ///
    /// [`forward`]: EncoderModel::forward
    pub fn forward_batch(&self, encs: &[Encoding]) -> Result<Tensor> {
        self.run(encs, None)
    }

    /// Attention probabilities `[heads, len, len]` of `layer` for one input.
    pub fn attention_probs(&self, enc: &Encoding, layer: usize) -> Result<Tensor> {
        if layer >= self.config.layers {
            return Err(Error::invalid(format!("layer {layer} out of range")));
        }
        self.run(std::slice::from_ref(enc), Some(layer))
    }

    fn run(&self, encs: &[Encoding], capture: Option<usize>) -> Result<Tensor> {
        if encs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for e in encs {
            self.check_input(e)?;
        }
        let cfg = &self.config;
        let (d, heads, dh) = (cfg.hidden, cfg.heads, cfg.head_dim());
        let bsz = encs.len();
        let len = encs.iter().map(Encoding::len).max().unwrap_or(0);
        if len == 0 {
            return Err(Error::invalid("empty input sequence"));
        }
        let rows = bsz * len;
        let mask: Vec<bool> = encs
            .iter()
            .flat_map(|e| (0..len).map(move |t| e.attention_mask.get(t).is_some_and(|&m| m != 0)))
            .collect();

        // embeddings
        let word = self.p("embed.word");
        let pos = self.p("embed.pos");
        let typ = self.p("embed.type").row(0);
        let mut x = Tensor::zeros(&[rows, d]);
        for (b, e) in encs.iter().enumerate() {
            for t in 0..len {
                let id = e.ids.get(t).copied().unwrap_or(0) as usize;
                let w = word.row(id);
                let p = pos.row(cfg.position_offset + t);
                for (((o, &a), &b2), &c) in x.row_mut(b * len + t).iter_mut().zip(w).zip(p).zip(typ) {
                    *o = a + b2 + c;
                }
            }
        }
        let mut x = self.norm(&x, "embed.ln");

        let scale = 1.0 / (dh as f32).sqrt();
        for layer in 0..cfg.layers {
            let pre = format!("layer.{layer}");
            let q = self.linear(&x, &format!("{pre}.attn.q"));
            let k = self.linear(&x, &format!("{pre}.attn.k"));
            let v = self.linear(&x, &format!("{pre}.attn.v"));
            let mut ctx = Tensor::zeros(&[rows, d]);
            let mut probs = Tensor::zeros(&[len, len]);
            let mut captured = (capture == Some(layer)).then(|| Tensor::zeros(&[heads, len, len]));
            for b in 0..bsz {
                let base = b * len;
                for h in 0..heads {
                    let cols = h * dh..(h + 1) * dh;
                    for i in 0..len {
                        let qi = &q.row(base + i)[cols.clone()];
                        let srow = probs.row_mut(i);
                        for (j, s) in srow.iter_mut().enumerate() {
                            let kj = &k.row(base + j)[cols.clone()];
                            let dot: f32 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                            *s = dot * scale + if mask[base + j] { 0.0 } else { MASK_BIAS };
                        }
                        softmax_row(srow);
                        let out = &mut ctx.row_mut(base + i)[cols.clone()];
                        for (j, &pj) in probs.row(i).iter().enumerate() {
                            let vj = &v.row(base + j)[cols.clone()];
                            for (o, &vv) in out.iter_mut().zip(vj) {
                                *o += pj * vv;
                            }
                        }
                    }
                    if let Some(c) = captured.as_mut() {
                        if b == 0 {
                            c.data_mut()[h * len * len..(h + 1) * len * len].copy_from_slice(probs.data());
                        }
                    }
                }
            }
            if let Some(c) = captured {
                return Ok(c);
            }
            drop((q, k, v, probs));
            let attn = self.linear(&ctx, &format!("{pre}.attn.o"));
            drop(ctx);
            add_in_place(&mut x, &attn);
            drop(attn);
            x = self.norm(&x, &format!("{pre}.attn.ln"));

            let mut hidden = self.linear(&x, &format!("{pre}.ffn.w1|{pre}.ffn.b1"));
            hidden.data_mut().iter_mut().for_each(|v| *v = gelu_scalar(*v));
            let ff = self.linear(&hidden, &format!("{pre}.ffn.w2|{pre}.ffn.b2"));
            drop(hidden);
            add_in_place(&mut x, &ff);
            drop(ff);
            x = self.norm(&x, &format!("{pre}.ffn.ln"));
        }
        x.reshape(vec![bsz, len, d])
    }

    /// `x · W + b`. `name` is either a prefix with `.w`/`.b` children or an
    /// explicit `weight|bias` pair.
    fn linear(&self, x: &Tensor, name: &str) -> Tensor {
        let (w, b) = match name.split_once('|') {
            Some((w, b)) => (self.p(w), self.p(b)),
            None => (self.p(&format!("{name}.w")), self.p(&format!("{name}.b"))),
        };
        let (k, n) = (w.shape()[0], w.shape()[1]);
        let m = x.rows();
        let mut out = Tensor::from_fn(&[m, n], |i| b.data()[i % n]);
        matmul_into(x.data(), w.data(), out.data_mut(), m, k, n);
        out
    }

    fn norm(&self, x: &Tensor, prefix: &str) -> Tensor {
        let g = self.p(&format!("{prefix}.gamma"));
        let b = self.p(&format!("{prefix}.beta"));
        let d = x.cols();
        let mut out = Tensor::zeros(x.shape());
        for (row, o) in x.data().chunks_exact(d).zip(out.data_mut().chunks_exact_mut(d)) {
            layer_norm_row(row, g.data(), b.data(), self.config.layer_norm_eps, o);
        }
        out
    }
}

fn add_in_place(x: &mut Tensor, y: &Tensor) {
    for (a, &b) in x.data_mut().iter_mut().zip(y.data()) {
        *a += b;
    }
}

/// Pools `[seq, d]` hidden states into one `[d]` vector.
pub fn pool(hidden: &Tensor, mask: &[u8], mode: Pooling) -> Result<Tensor> {
    if hidden.rank() != 2 || hidden.shape()[0] != mask.len() {
        return Err(Error::Shape {
            op: "pool",
            left: hidden.shape().to_vec(),
            right: vec![mask.len()],
        });
    }
    let count = mask.iter().filter(|&&m| m != 0).count();
    if count == 0 {
        return Err(Error::invalid("cannot pool an empty input (all-zero mask)"));
    }
    let d = hidden.cols();
    match mode {
        Pooling::Cls => Ok(Tensor::vector(hidden.row(0).to_vec())),
        Pooling::Mean => {
            let mut acc = vec![0.0f64; d];
            for (row, _) in hidden.data().chunks_exact(d).zip(mask).filter(|(_, &m)| m != 0) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v as f64;
                }
            }
            Ok(Tensor::vector(acc.into_iter().map(|a| (a / count as f64) as f32).collect()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_random(seed: u64) -> EncoderModel {
        EncoderModel::random(EncoderConfig::tiny(), seed, 0.1).unwrap()
    }

    #[test]
    fn zero_model_gives_constant_rows() {
        let m = EncoderModel::zeros(EncoderConfig::tiny()).unwrap();
        let h = m.forward(&Encoding::from_ids(vec![5, 17, 999, 3])).unwrap();
        assert_eq!(h.shape(), &[4, 64]);
        for r in 1..4 {
            assert_eq!(h.row(r), h.row(0));
        }
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = tiny_random(1);
        let enc = Encoding::from_ids(vec![1, 2, 3, 400, 999]);
        assert!(m.forward(&enc).unwrap().bit_eq(&m.forward(&enc).unwrap()));
    }

    #[test]
    fn rejects_overlong_and_out_of_vocab() {
        let m = tiny_random(2);
        let long = Encoding::from_ids(vec![1; 513]);
        assert!(matches!(m.forward(&long), Err(Error::TooLong { len: 513, max: 512 })));
        let bad = Encoding::from_ids(vec![1000]);
        assert!(matches!(m.forward(&bad), Err(Error::TokenRange { id: 1000, .. })));
    }

    #[test]
    fn missing_parameter_is_schema_error() {
        let m = tiny_random(3);
        let mut b = TensorBundle::new();
        for (name, t) in m.params().iter().filter(|(n, _)| *n != "layer.1.ffn.w2") {
            b.insert(name, t.clone()).unwrap();
        }
        b.metadata = m.params().metadata.clone();
        let err = EncoderModel::from_bundle(b).unwrap_err();
        assert!(err.to_string().contains("layer.1.ffn.w2"), "{err}");
    }

    #[test]
    fn wrong_shape_is_schema_error() {
        let m = tiny_random(3);
        let mut b = TensorBundle::new();
        for (name, t) in m.params().iter() {
            let t = if name == "layer.0.attn.q.w" { Tensor::zeros(&[64, 32]) } else { t.clone() };
            b.insert(name, t).unwrap();
        }
        b.metadata = m.params().metadata.clone();
        assert!(matches!(EncoderModel::from_bundle(b), Err(Error::Schema(_))));
    }

    #[test]
    fn batch_rows_match_single() {
        let m = tiny_random(4);
        let a = Encoding::from_ids(vec![10, 20, 30]);
        let b = Encoding::from_ids(vec![40, 50, 60, 70, 80, 90]);
        let batch = m.forward_batch(&[a.clone(), b.clone()]).unwrap();
        let single_a = m.forward(&a).unwrap();
        let d = 64;
        assert_eq!(&batch.data()[..3 * d], single_a.data());
        let single_b = m.forward(&b).unwrap();
        assert_eq!(&batch.data()[6 * d..12 * d], single_b.data());
    }

    #[test]
    fn pool_modes() {
        let h = Tensor::new(vec![4, 2], vec![1., 2., 3., 4., 100., 100., -7., 9.]).unwrap();
        let mean = pool(&h, &[1, 1, 0, 0], Pooling::Mean).unwrap();
        assert_eq!(mean.data(), &[2.0, 3.0]);
        let cls = pool(&h, &[1, 1, 0, 0], Pooling::Cls).unwrap();
        assert_eq!(cls.data(), &[1.0, 2.0]);
        let one = Tensor::new(vec![1, 2], vec![5., 6.]).unwrap();
        assert_eq!(pool(&one, &[1], Pooling::Mean).unwrap().data(), &[5., 6.]);
        assert_eq!(pool(&one, &[1], Pooling::Cls).unwrap().data(), &[5., 6.]);
        assert!(pool(&h, &[0, 0, 0, 0], Pooling::Mean).is_err());
    }

    #[test]
    fn metadata_round_trip() {
        let mut cfg = EncoderConfig::tiny();
        cfg.pooling = Pooling::Cls;
        cfg.position_offset = 2;
        let mut b = TensorBundle::new();
        cfg.write_metadata(&mut b);
        assert_eq!(EncoderConfig::from_metadata(&b).unwrap(), cfg);
        cfg.position_offset = 1;
        assert!(cfg.validate().is_err());
    }
}
