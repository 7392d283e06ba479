//! Deterministic AdamW training: seeded per-epoch shuffles, linear warmup,
//! global-norm clipping and checkpoints every N tokens.

mod adamw;
mod manifest;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ckpt::{CheckpointMeta, CheckpointRecord, CkptError};
use crate::lm::{encode, encode_document, sequence_loss, LmConfig, LmError};
use crate::params::{NamedParamMap, SchemaMismatch};
use crate::tensor::{Tape, TensorError, Var};

pub use adamw::{adamw_step, AdamWState, ADAM_EPS, BETA1, BETA2};
pub use manifest::{examples_hash, sha256_hex, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at step {step}")]
    Divergence { step: u64 },
    #[error("dataset: {0}")]
    Data(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Schema(#[from] SchemaMismatch),
    #[error(transparent)]
    Ckpt(#[from] CkptError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl TrainError {
    fn is_non_finite(&self) -> bool {
        matches!(
            self,
            TrainError::Tensor(TensorError::NonFinite { .. }) | TrainError::Lm(LmError::Tensor(TensorError::NonFinite { .. }))
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epochs of linear warmup from 0 to `learning_rate`; constant after.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Emit a checkpoint each time this many further tokens have been
    /// consumed; 0 emits only the final state.
    pub checkpoint_every_tokens: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            epochs: 5,
            warmup_epochs: 1,
            batch_size: 8,
            seed: 0,
            checkpoint_every_tokens: 0,
            grad_clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive and finite");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.grad_clip_norm.is_some_and(|c| !(c > 0.0)) {
            return fail("grad_clip_norm must be positive");
        }
        Ok(())
    }
}

/// A token sequence and which next-token predictions are supervised;
/// `mask[t]` covers the prediction of `ids[t + 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl Example {
    /// A full document, every token supervised, terminated by `EOT`.
    pub fn document(text: &str) -> Self {
        let ids = encode_document(text);
        let mask = vec![true; ids.len() - 1];
        Self { ids, mask }
    }

    /// `prompt` followed by `completion` and `EOT`; only the completion and
    /// `EOT` are supervised.
    pub fn completion(prompt: &str, completion: &str) -> Self {
        let prompt_len = encode(prompt).len();
        let ids = encode_document(format!("{prompt}{completion}"));
        let mask = (0..ids.len() - 1).map(|t| t + 1 >= prompt_len).collect();
        Self { ids, mask }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn supervised(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Token-weighted mean NLL over a batch: `Σ_e n_e·CE_e / Σ_e n_e` where `n_e`
/// counts supervised positions.
pub fn batch_nll(
    lm: &LmConfig,
    tape: &mut Tape<f32>,
    vars: &BTreeMap<String, Var>,
    batch: &[&Example],
) -> Result<Var, TrainError> {
    let total: usize = batch.iter().map(|e| e.supervised()).sum();
    if total == 0 {
        return Err(TrainError::Tensor(TensorError::DegenerateBatch));
    }
    let mut acc: Option<Var> = None;
    for e in batch.iter().filter(|e| e.supervised() > 0) {
        let ce = sequence_loss(lm, tape, vars, &e.ids, &e.mask)?;
        let w = tape.scale(ce, e.supervised() as f64 / total as f64)?;
        acc = Some(match acc {
            None => w,
            Some(a) => tape.add(a, w)?,
        });
    }
    Ok(acc.expect("non-empty batch"))
}

/// Where a training stage sits in its run, for checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageInfo {
    pub run_id: String,
    pub stage_tag: String,
    pub tokens_offset: u64,
    pub step_offset: u64,
    pub created_at: u64,
}

impl StageInfo {
    pub fn new(run_id: impl Into<String>, stage_tag: impl Into<String>) -> Self {
        Self { run_id: run_id.into(), stage_tag: stage_tag.into(), tokens_offset: 0, step_offset: 0, created_at: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: NamedParamMap,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Mean batch loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
    /// Cumulative count including `tokens_offset`.
    pub tokens_seen: u64,
    pub steps: u64,
}

/// The shared training loop. `batch_loss` records the loss of the items whose
/// indices it receives; `item_tokens` gives the tokens each item consumes.
pub fn train_loop<L, N>(
    start: &NamedParamMap,
    n_items: usize,
    item_tokens: N,
    cfg: &TrainConfig,
    stage: &StageInfo,
    batch_loss: L,
) -> Result<TrainOutput, TrainError>
where
    L: Fn(&mut Tape<f32>, &BTreeMap<String, Var>, &[usize]) -> Result<Var, TrainError>,
    N: Fn(usize) -> u64,
{
    cfg.validate()?;
    if n_items == 0 {
        return Err(TrainError::Data("empty dataset".into()));
    }
    let steps_per_epoch = n_items.div_ceil(cfg.batch_size);
    let warmup_steps = (cfg.warmup_epochs * steps_per_epoch) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = start.clone();
    let mut opt = AdamWState::new();
    let mut tokens = stage.tokens_offset;
    let mut next_ckpt = tokens.saturating_add(cfg.checkpoint_every_tokens);
    let mut checkpoints = Vec::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    let snapshot = |params: &NamedParamMap, tokens: u64, step: u64| CheckpointRecord {
        params: params.clone(),
        meta: CheckpointMeta {
            tokens_seen: tokens,
            step: stage.step_offset + step,
            run_id: stage.run_id.clone(),
            stage_tag: stage.stage_tag.clone(),
            created_at: stage.created_at,
        },
    };

    let mut order: Vec<usize> = (0..n_items).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let diverged = |e: TrainError| if e.is_non_finite() { TrainError::Divergence { step } } else { e };
            let mut tape = Tape::new();
            let vars: BTreeMap<String, Var> =
                params.iter().map(|(n, t)| (n.clone(), tape.param(n, t.clone()))).collect();
            let loss = batch_loss(&mut tape, &vars, batch).map_err(diverged)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::Divergence { step });
            }
            loss_sum += value as f64;
            let mut grads = tape.backward(loss)?.into_named();
            if let Some(clip) = cfg.grad_clip_norm {
                clip_global_norm(&mut grads, clip);
            }
            let lr = if warmup_steps > 0 && step <= warmup_steps {
                cfg.learning_rate * step as f64 / warmup_steps as f64
            } else {
                cfg.learning_rate
            };
            adamw_step(&mut params, &grads, &mut opt, lr, cfg.weight_decay)
                .map_err(|e| if let TrainError::Divergence { .. } = e { TrainError::Divergence { step } } else { e })?;
            tokens += batch.iter().map(|&i| item_tokens(i)).sum::<u64>();
            if cfg.checkpoint_every_tokens > 0 && tokens >= next_ckpt {
                checkpoints.push(snapshot(&params, tokens, step));
                while next_ckpt <= tokens {
                    next_ckpt += cfg.checkpoint_every_tokens;
                }
            }
        }
        epoch_losses.push(loss_sum / steps_per_epoch as f64);
    }
    if checkpoints.last().is_none_or(|c| c.meta.tokens_seen != tokens) {
        checkpoints.push(snapshot(&params, tokens, step));
    }
    Ok(TrainOutput { params, checkpoints, epoch_losses, tokens_seen: tokens, steps: step })
}

/// Scales all gradients by `clip / ‖g‖` when the global norm exceeds `clip`.
pub fn clip_global_norm(grads: &mut BTreeMap<String, crate::tensor::Tensor<f32>>, clip: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data().iter())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm > clip {
        let s = (clip / norm) as f32;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

/// Next-token training on `data` starting from `start`.
pub fn finetune(
    lm: &LmConfig,
    start: &NamedParamMap,
    data: &[Example],
    cfg: &TrainConfig,
    stage: &StageInfo,
) -> Result<TrainOutput, TrainError> {
    if let Some(e) = data.iter().find(|e| e.mask.len() + 1 != e.ids.len()) {
        return Err(TrainError::Data(format!("mask length {} for {} ids", e.mask.len(), e.ids.len())));
    }
    train_loop(start, data.len(), |i| data[i].len() as u64, cfg, stage, |tape, vars, idx| {
        let batch: Vec<&Example> = idx.iter().map(|&i| &data[i]).collect();
        batch_nll(lm, tape, vars, &batch)
    })
}
