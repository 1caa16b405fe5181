//! Compact transformer-style contextual encoder: token + position
//! embeddings followed by a stack of post-norm self-attention blocks.
//! One encoder with one weight set serves title, instance, and knowledge
//! sequences alike.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init, ops, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub feed_forward: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            hidden: 64,
            heads: 4,
            feed_forward: 256,
            max_len: 128,
            dropout: 0.0,
            vocab_size: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.hidden == 0 || self.heads == 0 || self.feed_forward == 0 {
            return fail(format!(
                "hidden {}, heads {}, feed_forward {} must all be positive",
                self.hidden, self.heads, self.feed_forward
            ));
        }
        if self.hidden % self.heads != 0 {
            return fail(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            ));
        }
        if self.max_len == 0 {
            return fail("max_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive".into());
        }
        Ok(())
    }
}

/// Per-token representations plus the whole-sequence vector taken from the
/// leading delimiter position.
pub struct EncodedSequence {
    /// `[N, d]`; rows at masked positions are meaningless filler.
    pub token_reps: Tensor,
    /// `[d]`, always equal to `token_reps` row 0.
    pub seq_rep: Tensor,
    pub attention_mask: Vec<bool>,
}

struct Block {
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    attn_gain: Tensor,
    attn_shift: Tensor,
    ff_w1: Tensor,
    ff_b1: Tensor,
    ff_w2: Tensor,
    ff_b2: Tensor,
    ff_gain: Tensor,
    ff_shift: Tensor,
}

pub struct Encoder {
    cfg: EncoderConfig,
    token_embedding: Tensor,
    position_embedding: Tensor,
    blocks: Vec<Block>,
}

const LN_EPS: f64 = 1e-8;

impl Encoder {
    pub fn new<R: Rng>(cfg: EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden;
        let ff = cfg.feed_forward;
        let token_embedding = Tensor::param(
            &[cfg.vocab_size, d],
            init::embedding(cfg.vocab_size * d, rng),
        )?;
        let position_embedding =
            Tensor::param(&[cfg.max_len, d], init::embedding(cfg.max_len * d, rng))?;
        let mut blocks = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let mut proj = |fan_in: usize, fan_out: usize| {
                Tensor::param(&[fan_in, fan_out], init::projection(fan_in, fan_out, rng))
            };
            let (wq, wk, wv, wo) = (proj(d, d)?, proj(d, d)?, proj(d, d)?, proj(d, d)?);
            let (ff_w1, ff_w2) = (proj(d, ff)?, proj(ff, d)?);
            blocks.push(Block {
                wq,
                bq: Tensor::param(&[d], init::zeros(d))?,
                wk,
                bk: Tensor::param(&[d], init::zeros(d))?,
                wv,
                bv: Tensor::param(&[d], init::zeros(d))?,
                wo,
                bo: Tensor::param(&[d], init::zeros(d))?,
                attn_gain: Tensor::param(&[d], init::ones(d))?,
                attn_shift: Tensor::param(&[d], init::zeros(d))?,
                ff_w1,
                ff_b1: Tensor::param(&[ff], init::zeros(ff))?,
                ff_w2,
                ff_b2: Tensor::param(&[d], init::zeros(d))?,
                ff_gain: Tensor::param(&[d], init::ones(d))?,
                ff_shift: Tensor::param(&[d], init::zeros(d))?,
            });
        }
        Ok(Encoder {
            cfg,
            token_embedding,
            position_embedding,
            blocks,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Named parameter handles, stable order, for the optimizer, gradient
    /// checks, and checkpoints.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("encoder.token_embedding".to_string(), self.token_embedding.clone()),
            ("encoder.position_embedding".to_string(), self.position_embedding.clone()),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            let named: [(&str, &Tensor); 16] = [
                ("attn.wq", &b.wq),
                ("attn.bq", &b.bq),
                ("attn.wk", &b.wk),
                ("attn.bk", &b.bk),
                ("attn.wv", &b.wv),
                ("attn.bv", &b.bv),
                ("attn.wo", &b.wo),
                ("attn.bo", &b.bo),
                ("attn.gain", &b.attn_gain),
                ("attn.shift", &b.attn_shift),
                ("ff.w1", &b.ff_w1),
                ("ff.b1", &b.ff_b1),
                ("ff.w2", &b.ff_w2),
                ("ff.b2", &b.ff_b2),
                ("ff.gain", &b.ff_gain),
                ("ff.shift", &b.ff_shift),
            ];
            for (name, t) in named {
                out.push((format!("encoder.block{l}.{name}"), (*t).clone()));
            }
        }
        out
    }

    /// Token embedding plus learned position embedding.
    pub fn embed(&self, ids: &[usize], positions: &[usize]) -> Result<Tensor> {
        if ids.len() != positions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids but {} positions",
                ids.len(),
                positions.len()
            )));
        }
        self.check_len(ids.len())?;
        let tok = ops::embedding(&self.token_embedding, ids)?;
        let pos = ops::embedding(&self.position_embedding, positions)?;
        ops::add(&tok, &pos)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        if n > self.cfg.max_len {
            return Err(Error::InvalidArgument(format!(
                "sequence length {n} exceeds max_len {}",
                self.cfg.max_len
            )));
        }
        Ok(())
    }

    /// Deterministic encoding with dropout disabled.
    pub fn encode(&self, ids: &[usize], mask: &[bool]) -> Result<EncodedSequence> {
        self.encode_impl(ids, mask, &mut NoDropout, &mut None)
    }

    /// Training-mode encoding; dropout draws from `rng`.
    pub fn encode_train<R: Rng>(
        &self,
        ids: &[usize],
        mask: &[bool],
        rng: &mut R,
    ) -> Result<EncodedSequence> {
        let rate = self.cfg.dropout;
        self.encode_impl(ids, mask, &mut TrainDropout { rate, rng }, &mut None)
    }

    /// Eval-mode encoding that also returns every post-softmax attention
    /// matrix, one `[N, N]` tensor per (layer, head), for inspection.
    pub fn encode_traced(&self, ids: &[usize], mask: &[bool]) -> Result<(EncodedSequence, Vec<Tensor>)> {
        let mut trace = Some(Vec::new());
        let encoded = self.encode_impl(ids, mask, &mut NoDropout, &mut trace)?;
        Ok((encoded, trace.unwrap()))
    }

    fn encode_impl(
        &self,
        ids: &[usize],
        mask: &[bool],
        dropout: &mut dyn Dropout,
        trace: &mut Option<Vec<Tensor>>,
    ) -> Result<EncodedSequence> {
        self.check_len(ids.len())?;
        if mask.len() != ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids but {} mask entries",
                ids.len(),
                mask.len()
            )));
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::InvalidArgument(
                "cannot encode a fully masked sequence".into(),
            ));
        }
        let n = ids.len();
        let positions: Vec<usize> = (0..n).collect();
        let mut x = self.embed(ids, &positions)?;
        for block in &self.blocks {
            x = self.block_forward(block, &x, mask, dropout, trace)?;
        }
        let seq_rep = ops::reshape(&ops::narrow(&x, 0, 0, 1)?, &[self.cfg.hidden])?;
        Ok(EncodedSequence {
            token_reps: x,
            seq_rep,
            attention_mask: mask.to_vec(),
        })
    }

    fn block_forward(
        &self,
        block: &Block,
        x: &Tensor,
        mask: &[bool],
        dropout: &mut dyn Dropout,
        trace: &mut Option<Vec<Tensor>>,
    ) -> Result<Tensor> {
        let d = self.cfg.hidden;
        let dh = d / self.cfg.heads;
        let q = ops::add_bias(&ops::matmul(x, &block.wq)?, &block.bq)?;
        let k = ops::add_bias(&ops::matmul(x, &block.wk)?, &block.bk)?;
        let v = ops::add_bias(&ops::matmul(x, &block.wv)?, &block.bv)?;

        let mut heads = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let qh = ops::narrow(&q, 1, h * dh, dh)?;
            let kh = ops::narrow(&k, 1, h * dh, dh)?;
            let vh = ops::narrow(&v, 1, h * dh, dh)?;
            let scores = ops::scale(&ops::matmul(&qh, &ops::transpose(&kh)?)?, 1.0 / (dh as f64).sqrt())?;
            let attn = ops::masked_softmax_rows(&scores, mask)?;
            if let Some(t) = trace.as_mut() {
                t.push(attn.clone());
            }
            heads.push(ops::matmul(&attn, &vh)?);
        }
        let merged = ops::concat(&heads, 1)?;
        let attn_out = ops::add_bias(&ops::matmul(&merged, &block.wo)?, &block.bo)?;
        let attn_out = dropout.apply(&attn_out)?;
        let x = ops::layer_norm(
            &ops::add(x, &attn_out)?,
            &block.attn_gain,
            &block.attn_shift,
            LN_EPS,
        )?;

        let h1 = ops::gelu(&ops::add_bias(&ops::matmul(&x, &block.ff_w1)?, &block.ff_b1)?)?;
        let h2 = ops::add_bias(&ops::matmul(&h1, &block.ff_w2)?, &block.ff_b2)?;
        let h2 = dropout.apply(&h2)?;
        ops::layer_norm(&ops::add(&x, &h2)?, &block.ff_gain, &block.ff_shift, LN_EPS)
    }
}

trait Dropout {
    fn apply(&mut self, x: &Tensor) -> Result<Tensor>;
}

struct NoDropout;

impl Dropout for NoDropout {
    fn apply(&mut self, x: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }
}

struct TrainDropout<'a, R: Rng> {
    rate: f64,
    rng: &'a mut R,
}

impl<R: Rng> Dropout for TrainDropout<'_, R> {
    fn apply(&mut self, x: &Tensor) -> Result<Tensor> {
        ops::dropout(x, self.rate, self.rng)
    }
}
