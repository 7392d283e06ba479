//! Unlearning by model state arithmetic, plus task-vector, gradient
//! difference and NPO baselines and checkpoint lifting.
//!
//! With `θ_0` a checkpoint taken before the forget data was seen:
//!
//! ```text
//! θ_f = finetune(θ_0, D_f) − θ_0
//! θ_r = finetune(θ_0, D_r') − θ_0          D_r' ⊂ D_r, |D_r'| = |D_f|
//! θ_unlearn = (θ_D − α·θ_f) + β·θ_r
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ckpt::{apply, delta, ledger_query, load, CheckpointRecord, CkptError, Ledger, StateDelta};
use crate::lm::{sequence_loss, LmConfig};
use crate::params::NamedParamMap;
use crate::tensor::{Tape, Var};
use crate::train::{batch_nll, finetune, train_loop, Example, StageInfo, TrainConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum UnlearnError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Ckpt(#[from] CkptError),
    #[error("retain set has {available} examples, {needed} requested")]
    Size { available: usize, needed: usize },
    #[error("invalid unlearning config: {0}")]
    Config(String),
}

/// Selects the pre-exposure checkpoint from a ledger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointRef {
    /// Latest checkpoint with `tokens_seen` at most this value.
    TokensAtMost(u64),
    /// Explicit checkpoint file.
    Path(PathBuf),
}

impl CheckpointRef {
    pub fn resolve(&self, ledger: &Ledger, base_dir: &Path) -> Result<CheckpointRecord, CkptError> {
        match self {
            CheckpointRef::TokensAtMost(t) => ledger_query(ledger, base_dir, *t),
            CheckpointRef::Path(p) => load(&if p.is_absolute() { p.clone() } else { base_dir.join(p) }),
        }
    }
}

/// Where the retain finetune starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetainStart {
    /// From `θ_0`, so `θ_r` does not depend on `θ_f`.
    #[default]
    Checkpoint,
    /// From `θ_1`, continuing after the forget finetune; `θ_r = θ_2 − θ_1`.
    ForgetModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsaConfig {
    pub alpha: f64,
    pub beta: f64,
    pub checkpoint_ref: CheckpointRef,
    /// Finetuning used to extract `θ_f`.
    pub ft: TrainConfig,
    /// Finetuning used to extract `θ_r`; `ft` when absent.
    pub retain_ft: Option<TrainConfig>,
    pub retain_start: RetainStart,
    /// Seed for drawing `D_r'`.
    pub retain_seed: u64,
}

impl Default for MsaConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            checkpoint_ref: CheckpointRef::TokensAtMost(u64::MAX),
            ft: TrainConfig::default(),
            retain_ft: None,
            retain_start: RetainStart::Checkpoint,
            retain_seed: 0,
        }
    }
}

impl MsaConfig {
    pub fn validate(&self) -> Result<(), UnlearnError> {
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(UnlearnError::Config("alpha and beta must be finite".into()));
        }
        self.ft.validate()?;
        if let Some(r) = &self.retain_ft {
            r.validate()?;
        }
        Ok(())
    }
}

/// `n` examples drawn uniformly without replacement, deterministic per seed.
pub fn sample_retain_subset<T: Clone>(d_r: &[T], n: usize, seed: u64) -> Result<Vec<T>, UnlearnError> {
    if d_r.len() < n {
        return Err(UnlearnError::Size { available: d_r.len(), needed: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(d_r.choose_multiple(&mut rng, n).cloned().collect())
}

/// Forget and (optional) retain vectors extracted from one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct MsaVectors {
    pub forget: StateDelta,
    pub retain: Option<StateDelta>,
}

fn stage(tag: &str) -> StageInfo {
    StageInfo::new("msa", tag)
}

pub fn msa_vectors(
    lm: &LmConfig,
    theta_0: &NamedParamMap,
    d_f: &[Example],
    d_r: Option<&[Example]>,
    cfg: &MsaConfig,
) -> Result<MsaVectors, UnlearnError> {
    cfg.validate()?;
    let theta_1 = finetune(lm, theta_0, d_f, &cfg.ft, &stage("forget"))?.params;
    let forget = delta(theta_0, &theta_1)?;
    let retain = match d_r {
        None => None,
        Some(d_r) => {
            let subset = sample_retain_subset(d_r, d_f.len(), cfg.retain_seed)?;
            let rcfg = cfg.retain_ft.as_ref().unwrap_or(&cfg.ft);
            let start = match cfg.retain_start {
                RetainStart::Checkpoint => theta_0,
                RetainStart::ForgetModel => &theta_1,
            };
            let theta_2 = finetune(lm, start, &subset, rcfg, &stage("retain"))?.params;
            Some(delta(start, &theta_2)?)
        }
    };
    Ok(MsaVectors { forget, retain })
}

/// `(θ_D − α·θ_f) + β·θ_r`, each step rounded once per element.
pub fn msa_apply(theta_d: &NamedParamMap, v: &MsaVectors, alpha: f64, beta: f64) -> Result<NamedParamMap, UnlearnError> {
    let out = apply(theta_d, &v.forget, -alpha)?;
    Ok(match &v.retain {
        Some(r) if beta != 0.0 => apply(&out, r, beta)?,
        _ => out,
    })
}

/// Full MSA given the resolved checkpoint. `theta_d` is not modified.
pub fn msa_unlearn(
    lm: &LmConfig,
    theta_d: &NamedParamMap,
    checkpoint: &NamedParamMap,
    d_f: &[Example],
    d_r: Option<&[Example]>,
    cfg: &MsaConfig,
) -> Result<NamedParamMap, UnlearnError> {
    theta_d.check_same_schema(checkpoint).map_err(CkptError::from)?;
    let v = msa_vectors(lm, checkpoint, d_f, d_r, cfg)?;
    msa_apply(theta_d, &v, cfg.alpha, cfg.beta)
}

/// MSA with the checkpoint looked up through `cfg.checkpoint_ref`.
pub fn msa_unlearn_from_ledger(
    lm: &LmConfig,
    theta_d: &NamedParamMap,
    ledger: &Ledger,
    base_dir: &Path,
    d_f: &[Example],
    d_r: Option<&[Example]>,
    cfg: &MsaConfig,
) -> Result<NamedParamMap, UnlearnError> {
    let c = cfg.checkpoint_ref.resolve(ledger, base_dir)?;
    msa_unlearn(lm, theta_d, &c.params, d_f, d_r, cfg)
}

/// `θ_D − α·(finetune(θ_D, D_f) − θ_D)`: MSA with the target as checkpoint.
pub fn task_vector_unlearn(
    lm: &LmConfig,
    theta_d: &NamedParamMap,
    d_f: &[Example],
    alpha: f64,
    ft: &TrainConfig,
) -> Result<NamedParamMap, UnlearnError> {
    let cfg = MsaConfig { alpha, beta: 0.0, ft: ft.clone(), ..Default::default() };
    msa_unlearn(lm, theta_d, theta_d, d_f, None, &cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    TaskVector,
    GradDiff,
    Npo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub algorithm: Baseline,
    pub lambda_retain: f64,
    pub npo_beta: f64,
    /// Run the baseline from this earlier checkpoint and lift its update.
    pub lifted_from: Option<CheckpointRef>,
    pub lift_alpha: f64,
    /// Task-vector scale.
    pub alpha: f64,
    pub train: TrainConfig,
    pub retain_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            algorithm: Baseline::GradDiff,
            lambda_retain: 1.0,
            npo_beta: 0.1,
            lifted_from: None,
            lift_alpha: 1.0,
            alpha: 1.0,
            train: TrainConfig { epochs: 5, ..TrainConfig::default() },
            retain_seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), UnlearnError> {
        if !(self.lambda_retain >= 0.0 && self.lambda_retain.is_finite()) {
            return Err(UnlearnError::Config("lambda_retain must be non-negative".into()));
        }
        if self.algorithm == Baseline::Npo && !(self.npo_beta > 0.0 && self.npo_beta.is_finite()) {
            return Err(UnlearnError::Config("npo_beta must be positive".into()));
        }
        if !(self.alpha.is_finite() && self.lift_alpha.is_finite()) {
            return Err(UnlearnError::Config("alpha must be finite".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Pairs forget example `i` with retain example `i` of a subset sized like
/// `D_f`, and runs the shared loop with `forget_term + λ·NLL_r`.
fn paired_unlearn<F>(
    theta_d: &NamedParamMap,
    lm: &LmConfig,
    d_f: &[Example],
    d_r: &[Example],
    lambda: f64,
    cfg: &TrainConfig,
    retain_seed: u64,
    tag: &str,
    forget_term: F,
) -> Result<NamedParamMap, UnlearnError>
where
    F: Fn(&mut Tape<f32>, &BTreeMap<String, Var>, &[usize]) -> Result<Option<Var>, TrainError>,
{
    if d_f.is_empty() || d_r.is_empty() {
        return Err(UnlearnError::Config("forget and retain sets must be non-empty".into()));
    }
    let retain = sample_retain_subset(d_r, d_f.len(), retain_seed)?;
    let tokens = |i: usize| (d_f[i].len() + retain[i].len()) as u64;
    let out = train_loop(theta_d, d_f.len(), tokens, cfg, &StageInfo::new("unlearn", tag), |tape, vars, idx| {
        let f = forget_term(tape, vars, idx)?;
        let r = if lambda == 0.0 {
            None
        } else {
            let batch: Vec<&Example> = idx.iter().map(|&i| &retain[i]).collect();
            let nll = batch_nll(lm, tape, vars, &batch)?;
            Some(if lambda == 1.0 { nll } else { tape.scale(nll, lambda)? })
        };
        match (f, r) {
            (Some(f), Some(r)) => Ok(tape.add(f, r)?),
            (Some(v), None) | (None, Some(v)) => Ok(v),
            (None, None) => Err(TrainError::Config("both loss terms have zero weight".into())),
        }
    })?;
    Ok(out.params)
}

/// Minimizes `−w_f·NLL(D_f) + λ·NLL(D_r')`.
pub fn grad_diff_weighted(
    lm: &LmConfig,
    theta_d: &NamedParamMap,
    d_f: &[Example],
    d_r: &[Example],
    forget_weight: f64,
    lambda: f64,
    cfg: &TrainConfig,
    retain_seed: u64,
) -> Result<NamedParamMap, UnlearnError> {
    paired_unlearn(theta_d, lm, d_f, d_r, lambda, cfg, retain_seed, "grad_diff", |tape, vars, idx| {
        if forget_weight == 0.0 {
            return Ok(None);
        }
        let batch: Vec<&Example> = idx.iter().map(|&i| &d_f[i]).collect();
        let nll = batch_nll(lm, tape, vars, &batch)?;
        Ok(Some(tape.scale(nll, -forget_weight)?))
    })
}

/// Gradient difference: ascent on the forget set, descent on the retain set.
pub fn grad_diff_unlearn(
    lm: &LmConfig,
    theta_d: &NamedParamMap,
    d_f: &[Example],
    d_r: &[Example],
    lambda: f64,
    cfg: &TrainConfig,
    retain_seed: u64,
) -> Result<NamedParamMap, UnlearnError> {
    grad_diff_weighted(lm, theta_d, d_f, d_r, 1.0, lambda, cfg, retain_seed)
}

/// Sequence log-probability `Σ_t log p(x_t | x_<t)` over supervised positions.
pub fn sequence_logprob(lm: &LmConfig, tape: &mut Tape<f32>, vars: &BTreeMap<String, Var>, e: &Example) -> Result<Var, TrainError> {
    let ce = sequence_loss(lm, tape, vars, &e.ids, &e.mask)?;
    Ok(tape.scale(ce, -(e.supervised() as f64))?)
}

/// Reference log-probabilities of each example under frozen `theta`.
pub fn reference_logprobs(lm: &LmConfig, theta: &NamedParamMap, data: &[Example]) -> Result<Vec<f32>, TrainError> {
    data.iter()
        .map(|e| {
            let mut tape = Tape::new();
            let vars = theta.iter().map(|(n, t)| (n.clone(), tape.constant(t.clone()))).collect();
            let lp = sequence_logprob(lm, &mut tape, &vars, e)?;
            Ok(tape.value(lp).item())
        })
        .collect()
}

/// `(2/β)·mean_e softplus(β·(lp_θ(e) − lp_ref(e)))` over the batch.
pub fn npo_loss(
    lm: &LmConfig,
    tape: &mut Tape<f32>,
    vars: &BTreeMap<String, Var>,
    batch: &[&Example],
    ref_lp: &[f32],
    beta: f64,
) -> Result<Var, TrainError> {
    let mut acc: Option<Var> = None;
    for (e, &r) in batch.iter().zip(ref_lp) {
        let lp = sequence_logprob(lm, tape, vars, e)?;
        let diff = tape.add_scalar(lp, -(r as f64))?;
        let z = tape.scale(diff, beta)?;
        let sp = tape.softplus(z)?;
        acc = Some(match acc {
            None => sp,
            Some(a) => tape.add(a, sp)?,
        });
    }
    let sum = acc.ok_or_else(|| TrainError::Data("empty batch".into()))?;
    Ok(tape.scale(sum, 2.0 / (beta * batch.len() as f64))?)
}

/// Negative preference optimization on the forget set plus `λ·NLL(D_r')`,
/// with the reference frozen at `theta_d`.
pub fn npo_unlearn(
    lm: &LmConfig,
    theta_d: &NamedParamMap,
    d_f: &[Example],
    d_r: &[Example],
    npo_beta: f64,
    lambda: f64,
    cfg: &TrainConfig,
    retain_seed: u64,
) -> Result<NamedParamMap, UnlearnError> {
    if !(npo_beta > 0.0 && npo_beta.is_finite()) {
        return Err(UnlearnError::Config("npo_beta must be positive".into()));
    }
    let ref_lp = reference_logprobs(lm, theta_d, d_f)?;
    paired_unlearn(theta_d, lm, d_f, d_r, lambda, cfg, retain_seed, "npo", |tape, vars, idx| {
        let batch: Vec<&Example> = idx.iter().map(|&i| &d_f[i]).collect();
        let refs: Vec<f32> = idx.iter().map(|&i| ref_lp[i]).collect();
        Ok(Some(npo_loss(lm, tape, vars, &batch, &refs, npo_beta)?))
    })
}

/// Runs the configured baseline from `theta`.
pub fn run_baseline(
    lm: &LmConfig,
    theta: &NamedParamMap,
    d_f: &[Example],
    d_r: &[Example],
    cfg: &BaselineConfig,
) -> Result<NamedParamMap, UnlearnError> {
    cfg.validate()?;
    match cfg.algorithm {
        Baseline::TaskVector => task_vector_unlearn(lm, theta, d_f, cfg.alpha, &cfg.train),
        Baseline::GradDiff => grad_diff_unlearn(lm, theta, d_f, d_r, cfg.lambda_retain, &cfg.train, cfg.retain_seed),
        Baseline::Npo => npo_unlearn(lm, theta, d_f, d_r, cfg.npo_beta, cfg.lambda_retain, &cfg.train, cfg.retain_seed),
    }
}

/// `θ_D + α·(θ_1 − θ_0)`: transplants an update computed at `θ_0`.
pub fn lift_update(
    theta_d: &NamedParamMap,
    theta_0: &NamedParamMap,
    theta_1: &NamedParamMap,
    alpha: f64,
) -> Result<NamedParamMap, UnlearnError> {
    Ok(apply(theta_d, &delta(theta_0, theta_1)?, alpha)?)
}

/// A baseline run at checkpoint `theta_0`, lifted onto `theta_d`.
pub fn lifted_baseline(
    lm: &LmConfig,
    theta_d: &NamedParamMap,
    theta_0: &NamedParamMap,
    d_f: &[Example],
    d_r: &[Example],
    cfg: &BaselineConfig,
) -> Result<NamedParamMap, UnlearnError> {
    let theta_1 = run_baseline(lm, theta_0, d_f, d_r, cfg)?;
    lift_update(theta_d, theta_0, &theta_1, cfg.lift_alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::build_model;
    use crate::tensor::Tensor;

    fn scalar(v: f32) -> NamedParamMap {
        [("w".to_string(), Tensor::scalar(v))].into_iter().collect()
    }

    fn vec2(a: f32, b: f32) -> NamedParamMap {
        [("w".to_string(), Tensor::new(vec![2], vec![a, b]).unwrap())].into_iter().collect()
    }

    fn lm() -> LmConfig {
        LmConfig { d_model: 16, n_heads: 2, n_layers: 1, d_ff: 32, max_seq_len: 48, ..Default::default() }
    }

    fn forget() -> Vec<Example> {
        ["Q: Where was Ivo born? A: Porto", "Q: Which award did Ivo win? A: Gold Quill"].iter().map(|t| Example::document(t)).collect()
    }

    fn retain() -> Vec<Example> {
        ["Q: Where was Ana born? A: Kyoto", "Q: Which award did Ana win? A: Onyx Sigil", "Q: Where was Bo born? A: Lima"]
            .iter()
            .map(|t| Example::document(t))
            .collect()
    }

    fn ft() -> TrainConfig {
        TrainConfig { learning_rate: 3e-3, epochs: 3, batch_size: 1, ..Default::default() }
    }

    #[test]
    fn scalar_fixture_by_hand() {
        // θ_D = 2, θ_0 = 1, θ_1 = 1.5, α = 2: 2 − 2·0.5 = 1
        let v = MsaVectors { forget: delta(&scalar(1.0), &scalar(1.5)).unwrap(), retain: None };
        assert_eq!(msa_apply(&scalar(2.0), &v, 2.0, 0.0).unwrap().get("w").unwrap().item(), 1.0);
        // Task vector with θ_D = 1, θ_1 = 1.4, α = 1: 1 − 0.4 = 0.6
        let v = MsaVectors { forget: delta(&scalar(1.0), &scalar(1.4)).unwrap(), retain: None };
        assert_eq!(msa_apply(&scalar(1.0), &v, 1.0, 0.0).unwrap().get("w").unwrap().item(), 0.6);
    }

    #[test]
    fn lift_by_hand() {
        let out = lift_update(&vec2(1.0, 1.0), &vec2(0.0, 0.0), &vec2(0.5, -0.5), 2.0).unwrap();
        assert_eq!(out.get("w").unwrap().data(), &[2.0, 0.0]);
        assert!(lift_update(&vec2(1.0, 3.0), &vec2(0.0, 0.0), &vec2(0.5, -0.5), 0.0).unwrap().bit_eq(&vec2(1.0, 3.0)));
    }

    #[test]
    fn zero_scales_return_target() {
        let c = build_model(&lm()).unwrap().params;
        let theta_d = finetune(&lm(), &c, &retain(), &ft(), &StageInfo::new("t", "s")).unwrap().params;
        let cfg = MsaConfig { alpha: 0.0, beta: 0.0, ft: ft(), ..Default::default() };
        let out = msa_unlearn(&lm(), &theta_d, &c, &forget(), Some(&retain()), &cfg).unwrap();
        assert!(out.bit_eq(&theta_d));
    }

    #[test]
    fn exact_recovery_of_the_checkpoint() {
        let c = build_model(&lm()).unwrap().params;
        let theta_d = finetune(&lm(), &c, &forget(), &ft(), &StageInfo::new("t", "forget")).unwrap().params;
        let before = theta_d.clone();
        let cfg = MsaConfig { alpha: 1.0, beta: 0.0, ft: ft(), ..Default::default() };
        let out = msa_unlearn(&lm(), &theta_d, &c, &forget(), Some(&retain()), &cfg).unwrap();
        assert!(out.bit_eq(&c));
        assert!(theta_d.bit_eq(&before));
    }

    #[test]
    fn task_vector_is_msa_from_the_target() {
        let c = build_model(&lm()).unwrap().params;
        let theta_d = finetune(&lm(), &c, &retain(), &ft(), &StageInfo::new("t", "s")).unwrap().params;
        let tv = task_vector_unlearn(&lm(), &theta_d, &forget(), 1.25, &ft()).unwrap();
        let cfg = MsaConfig { alpha: 1.25, ft: ft(), ..Default::default() };
        let msa = msa_unlearn(&lm(), &theta_d, &theta_d, &forget(), None, &cfg).unwrap();
        assert!(tv.bit_eq(&msa));
    }

    #[test]
    fn retain_start_flag_changes_the_vector() {
        let c = build_model(&lm()).unwrap().params;
        let a = msa_vectors(&lm(), &c, &forget(), Some(&retain()), &MsaConfig { ft: ft(), ..Default::default() }).unwrap();
        let b_cfg = MsaConfig { ft: ft(), retain_start: RetainStart::ForgetModel, ..Default::default() };
        let b = msa_vectors(&lm(), &c, &forget(), Some(&retain()), &b_cfg).unwrap();
        assert_eq!(a.forget, b.forget);
        assert_ne!(a.retain, b.retain);
    }

    #[test]
    fn retain_subset_sampling() {
        let d: Vec<u32> = (0..9).collect();
        let s = sample_retain_subset(&d, 4, 3).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s, sample_retain_subset(&d, 4, 3).unwrap());
        let mut all = sample_retain_subset(&d, 9, 3).unwrap();
        all.sort_unstable();
        assert_eq!(all, d);
        assert!(matches!(sample_retain_subset(&d, 10, 3), Err(UnlearnError::Size { .. })));
    }

    #[test]
    fn grad_diff_without_forget_term_is_retain_finetune() {
        let c = build_model(&lm()).unwrap().params;
        let gd = grad_diff_weighted(&lm(), &c, &forget(), &retain(), 0.0, 1.0, &ft(), 7).unwrap();
        let subset = sample_retain_subset(&retain(), forget().len(), 7).unwrap();
        let plain = finetune(&lm(), &c, &subset, &ft(), &StageInfo::new("x", "y")).unwrap().params;
        assert!(gd.bit_eq(&plain));
    }

    fn mean_nll(theta: &NamedParamMap, data: &[Example]) -> f64 {
        let lp = reference_logprobs(&lm(), theta, data).unwrap();
        -lp.iter().map(|&v| v as f64).sum::<f64>() / data.len() as f64
    }

    #[test]
    fn grad_diff_raises_forget_nll_and_is_deterministic() {
        let c = build_model(&lm()).unwrap().params;
        let mut all = forget();
        all.extend(retain());
        let theta_d = finetune(&lm(), &c, &all, &ft(), &StageInfo::new("t", "s")).unwrap().params;
        let a = grad_diff_unlearn(&lm(), &theta_d, &forget(), &retain(), 1.0, &ft(), 0).unwrap();
        let b = grad_diff_unlearn(&lm(), &theta_d, &forget(), &retain(), 1.0, &ft(), 0).unwrap();
        assert!(a.bit_eq(&b));
        assert!(mean_nll(&a, &forget()) > mean_nll(&theta_d, &forget()));
    }

    #[test]
    fn npo_loss_at_reference_is_two_over_beta_log_two() {
        let theta = build_model(&lm()).unwrap().params;
        let data = forget();
        let refs = reference_logprobs(&lm(), &theta, &data).unwrap();
        for beta in [0.1, 1.0, 2.5] {
            let mut tape = Tape::new();
            let vars = theta.iter().map(|(n, t)| (n.clone(), tape.param(n, t.clone()))).collect();
            let batch: Vec<&Example> = data.iter().collect();
            let loss = npo_loss(&lm(), &mut tape, &vars, &batch, &refs, beta).unwrap();
            let expect = 2.0 / beta * std::f64::consts::LN_2;
            assert!((tape.value(loss).item() as f64 - expect).abs() < 1e-5 * expect);
        }
    }

    #[test]
    fn npo_loss_rises_with_forget_logprob() {
        // Per example: (2/β)·softplus(β·(lp − ref)); d/d lp = 2·σ(β·(lp − ref)) > 0,
        // so a descent step lowers the forget log-probability.
        let beta = 0.5;
        let f = |lp: f64| 2.0 / beta * (1.0 + (beta * lp).exp()).ln();
        let grad = |lp: f64| 2.0 / (1.0 + (-beta * lp).exp());
        for lp in [-3.0, -1.0, 0.0, 2.0] {
            assert!(f(lp + 0.1) > f(lp));
            assert!(grad(lp) > 0.0);
        }
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(0.7), true);
        let z = tape.scale(x, beta).unwrap();
        let sp = tape.softplus(z).unwrap();
        let loss = tape.scale(sp, 2.0 / beta).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!((g.wrt(x).unwrap().item() - grad(0.7)).abs() < 1e-12);
    }

    #[test]
    fn npo_lowers_forget_logprob() {
        let c = build_model(&lm()).unwrap().params;
        let mut all = forget();
        all.extend(retain());
        let theta_d = finetune(&lm(), &c, &all, &ft(), &StageInfo::new("t", "s")).unwrap().params;
        let a = npo_unlearn(&lm(), &theta_d, &forget(), &retain(), 0.5, 1.0, &ft(), 0).unwrap();
        assert!(a.bit_eq(&npo_unlearn(&lm(), &theta_d, &forget(), &retain(), 0.5, 1.0, &ft(), 0).unwrap()));
        assert!(mean_nll(&a, &forget()) > mean_nll(&theta_d, &forget()));
    }

    #[test]
    fn lifted_baseline_matches_direct_lift() {
        let c = build_model(&lm()).unwrap().params;
        let theta_d = finetune(&lm(), &c, &forget(), &ft(), &StageInfo::new("t", "s")).unwrap().params;
        let cfg = BaselineConfig { algorithm: Baseline::Npo, train: ft(), lift_alpha: 1.0, ..Default::default() };
        let lifted = lifted_baseline(&lm(), &theta_d, &theta_d, &forget(), &retain(), &cfg).unwrap();
        let direct = run_baseline(&lm(), &theta_d, &forget(), &retain(), &cfg).unwrap();
        assert!(lifted.bit_eq(&direct));
    }

    #[test]
    fn checkpoint_ref_resolves_through_ledger() {
        use crate::ckpt::{save, CheckpointMeta, LedgerEntry};
        let dir = tempfile::tempdir().unwrap();
        let mut ledger = Ledger::new();
        for t in [10u64, 20] {
            let rec = CheckpointRecord {
                params: scalar(t as f32),
                meta: CheckpointMeta { tokens_seen: t, step: 1, run_id: "r".into(), stage_tag: "s".into(), created_at: 0 },
            };
            let name = format!("c{t}.msck");
            save(&rec, &dir.path().join(&name)).unwrap();
            ledger.push(LedgerEntry { path: name, tokens_seen: t, step: 1, stage_tag: "s".into(), run_id: "r".into() }).unwrap();
        }
        let got = CheckpointRef::TokensAtMost(15).resolve(&ledger, dir.path()).unwrap();
        assert_eq!(got.params.get("w").unwrap().item(), 10.0);
        let got = CheckpointRef::Path("c20.msck".into()).resolve(&ledger, dir.path()).unwrap();
        assert_eq!(got.meta.tokens_seen, 20);
        assert!(matches!(CheckpointRef::TokensAtMost(5).resolve(&ledger, dir.path()), Err(CkptError::NotFound(5))));
    }
}
