//! Pre-LayerNorm decoder-only transformer.
//!
//! Parameter schema for `n_layers = L` (shapes use `d = d_model`, `f = d_ff`,
//! `V = vocab_size`, `S = max_seq_len`):
//!
//! | name                       | shape    |
//! |----------------------------|----------|
//! | `blocks.{i}.attn.b_out`    | `[d]`    |
//! | `blocks.{i}.attn.w_out`    | `[d, d]` |
//! | `blocks.{i}.attn.w_qkv`    | `[d, 3d]`|
//! | `blocks.{i}.ln1.bias/gain` | `[d]`    |
//! | `blocks.{i}.ln2.bias/gain` | `[d]`    |
//! | `blocks.{i}.mlp.b_in`      | `[f]`    |
//! | `blocks.{i}.mlp.b_out`     | `[d]`    |
//! | `blocks.{i}.mlp.w_in`      | `[d, f]` |
//! | `blocks.{i}.mlp.w_out`     | `[f, d]` |
//! | `head.bias`                | `[V]`    |
//! | `head.weight`              | `[d, V]` |
//! | `ln_f.bias/gain`           | `[d]`    |
//! | `pos_emb`                  | `[S, d]` |
//! | `tok_emb`                  | `[V, d]` |
//!
//! Total: `V·d + S·d + L·(4d² + 2d·f + 6d + f) + 2d + d·V + V`.
//!
//! The query/key/value projection carries no bias: a key bias shifts every
//! score in a row equally and so has no effect after the softmax.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LanguageModel, LmConfig, LmError};
use crate::params::NamedParamMap;
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub const INIT_STD: f32 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct LmModel {
    pub config: LmConfig,
    pub params: NamedParamMap,
}

/// Names and shapes of every parameter, in sorted order.
pub fn param_schema(cfg: &LmConfig) -> BTreeMap<String, Vec<usize>> {
    let (d, f, v, s) = (cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.max_seq_len);
    let mut schema = BTreeMap::new();
    for i in 0..cfg.n_layers {
        let p = |n: &str| format!("blocks.{i}.{n}");
        schema.insert(p("ln1.gain"), vec![d]);
        schema.insert(p("ln1.bias"), vec![d]);
        schema.insert(p("attn.w_qkv"), vec![d, 3 * d]);
        schema.insert(p("attn.w_out"), vec![d, d]);
        schema.insert(p("attn.b_out"), vec![d]);
        schema.insert(p("ln2.gain"), vec![d]);
        schema.insert(p("ln2.bias"), vec![d]);
        schema.insert(p("mlp.w_in"), vec![d, f]);
        schema.insert(p("mlp.b_in"), vec![f]);
        schema.insert(p("mlp.w_out"), vec![f, d]);
        schema.insert(p("mlp.b_out"), vec![d]);
    }
    schema.insert("ln_f.gain".into(), vec![d]);
    schema.insert("ln_f.bias".into(), vec![d]);
    schema.insert("tok_emb".into(), vec![v, d]);
    schema.insert("pos_emb".into(), vec![s, d]);
    schema.insert("head.weight".into(), vec![d, v]);
    schema.insert("head.bias".into(), vec![v]);
    schema
}

/// Closed-form parameter count.
pub fn param_count(cfg: &LmConfig) -> usize {
    let (d, f, v, s, l) = (cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.max_seq_len, cfg.n_layers);
    v * d + s * d + l * (4 * d * d + 2 * d * f + 6 * d + f) + 2 * d + d * v + v
}

fn is_gain(name: &str) -> bool {
    name.ends_with(".gain")
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".bias") || name.rsplit('.').next().is_some_and(|leaf| leaf.starts_with("b_"))
}

/// Seeded initialization: normal(0, 0.02) weights, unit gains, zero biases.
/// Draws happen in sorted-name order from one stream.
pub fn build_model(config: &LmConfig) -> Result<LmModel, LmError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
    let mut params = NamedParamMap::new();
    for (name, shape) in param_schema(config) {
        let n: usize = shape.iter().product();
        let data = if is_gain(&name) {
            vec![1.0; n]
        } else if is_bias(&name) {
            vec![0.0; n]
        } else {
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        };
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok(LmModel { config: config.clone(), params })
}

/// Records the forward pass on `tape` and returns logits `[len, V]`.
///
/// `vars` maps every schema name to a tape variable; they may be trainable
/// parameters or constants.
pub fn forward_on_tape<T: Scalar>(
    cfg: &LmConfig,
    tape: &mut Tape<T>,
    vars: &BTreeMap<String, Var>,
    ids: &[u32],
) -> Result<Var, LmError> {
    let len = ids.len();
    if len == 0 || len > cfg.max_seq_len {
        return Err(LmError::Length { len, max: cfg.max_seq_len });
    }
    let get = |name: &str| -> Result<Var, LmError> {
        vars.get(name).copied().ok_or_else(|| LmError::MissingParam(name.to_string()))
    };
    let tok: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let pos: Vec<usize> = (0..len).collect();

    let te = tape.embedding(get("tok_emb")?, &tok)?;
    let pe = tape.embedding(get("pos_emb")?, &pos)?;
    let mut x = tape.add(te, pe)?;
    for i in 0..cfg.n_layers {
        let p = |n: &str| get(&format!("blocks.{i}.{n}"));

        let h = tape.layer_norm(x, p("ln1.gain")?, p("ln1.bias")?)?;
        let qkv = tape.matmul(h, p("attn.w_qkv")?)?;
        let a = tape.causal_attention(qkv, cfg.n_heads)?;
        let a = tape.matmul(a, p("attn.w_out")?)?;
        let a = tape.add_bias(a, p("attn.b_out")?)?;
        x = tape.add(x, a)?;

        let h = tape.layer_norm(x, p("ln2.gain")?, p("ln2.bias")?)?;
        let m = tape.matmul(h, p("mlp.w_in")?)?;
        let m = tape.add_bias(m, p("mlp.b_in")?)?;
        let m = tape.gelu(m)?;
        let m = tape.matmul(m, p("mlp.w_out")?)?;
        let m = tape.add_bias(m, p("mlp.b_out")?)?;
        x = tape.add(x, m)?;
    }
    let x = tape.layer_norm(x, get("ln_f.gain")?, get("ln_f.bias")?)?;
    let logits = tape.matmul(x, get("head.weight")?)?;
    Ok(tape.add_bias(logits, get("head.bias")?)?)
}

/// Mean next-token NLL of `ids[1..]` over positions where `mask` is set.
/// `mask[t]` governs the prediction of `ids[t + 1]`.
pub fn sequence_loss<T: Scalar>(
    cfg: &LmConfig,
    tape: &mut Tape<T>,
    vars: &BTreeMap<String, Var>,
    ids: &[u32],
    mask: &[bool],
) -> Result<Var, LmError> {
    if ids.len() < 2 {
        return Err(LmError::TooShort(ids.len()));
    }
    let logits = forward_on_tape(cfg, tape, vars, &ids[..ids.len() - 1])?;
    let targets: Vec<usize> = ids[1..].iter().map(|&i| i as usize).collect();
    Ok(tape.cross_entropy(logits, &targets, mask)?)
}

/// A generic 64-bit parameter point for gradient verification.
///
/// Fresh initialization is nearly degenerate (uniform attention, gradients
/// of order 1e-8 on the projections) which puts many coordinates under the
/// round-off floor of any finite-difference step. Here matrices are drawn
/// with std `1/sqrt(fan_in)`, embeddings with unit std, gains around 1 and
/// vectors around 0 with std 0.1.
pub fn verification_point(params: &NamedParamMap, seed: u64) -> BTreeMap<String, Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0f64, 1.0).expect("valid std");
    params
        .iter()
        .map(|(name, t)| {
            let shape = t.shape().to_vec();
            let scale = if name.ends_with("_emb") {
                1.0
            } else if shape.len() == 2 {
                1.0 / (shape[0] as f64).sqrt()
            } else {
                0.1
            };
            let offset = if is_gain(name) { 1.0 } else { 0.0 };
            let data = (0..t.numel()).map(|_| offset + scale * unit.sample(&mut rng)).collect();
            (name.clone(), Tensor::new(shape, data).expect("same shape"))
        })
        .collect()
}

impl LmModel {
    /// Registers every parameter on `tape` as a trainable leaf.
    pub fn register_params(&self, tape: &mut Tape<f32>) -> BTreeMap<String, Var> {
        self.params.iter().map(|(n, t)| (n.clone(), tape.param(n, t.clone()))).collect()
    }

    fn register_constants(&self, tape: &mut Tape<f32>) -> BTreeMap<String, Var> {
        self.params.iter().map(|(n, t)| (n.clone(), tape.constant(t.clone()))).collect()
    }

    /// Logits `[len, V]` for `ids`; row `t` scores the token after position `t`.
    pub fn forward(&self, ids: &[u32]) -> Result<Tensor<f32>, LmError> {
        if let Some(&id) = ids.iter().find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(LmError::TokenOutOfRange { id, vocab: self.config.vocab_size });
        }
        let mut tape = Tape::new();
        let vars = self.register_constants(&mut tape);
        let out = forward_on_tape(&self.config, &mut tape, &vars, ids)?;
        Ok(tape.value(out).clone())
    }
}

impl LanguageModel for LmModel {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn max_len(&self) -> Option<usize> {
        Some(self.config.max_seq_len)
    }

    fn logits(&self, ids: &[u32]) -> Result<Tensor<f32>, LmError> {
        self.forward(ids)
    }
}
