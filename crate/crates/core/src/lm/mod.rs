//! Tiny decoder-only language model, byte tokenizer, greedy decoding and
//! per-token log-probabilities.

mod model;
mod tokenizer;

use serde::{Deserialize, Serialize};

use crate::tensor::{Tensor, TensorError};

pub use model::{
    build_model, forward_on_tape, param_count, param_schema, sequence_loss, verification_point, LmModel, INIT_STD,
};
pub use tokenizer::{decode, decode_lossy, encode, encode_document, BOS, EOT, VOCAB_SIZE};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LmError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence length {len} outside 1..={max}")]
    Length { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("sequence of length {0} is too short")]
    TooShort(usize),
    #[error("greedy decoding needs a non-empty prefix")]
    EmptyPrefix,
    #[error("parameter `{0}` missing")]
    MissingParam(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { vocab_size: VOCAB_SIZE, d_model: 128, n_layers: 2, n_heads: 4, d_ff: 512, max_seq_len: 256, seed: 0 }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        let fail = |m: String| Err(LmError::Config(m));
        if self.vocab_size < VOCAB_SIZE {
            return fail(format!("vocab_size {} < {VOCAB_SIZE}", self.vocab_size));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.n_layers == 0 {
            return fail("dimensions must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.max_seq_len < 2 {
            return fail(format!("max_seq_len {} < 2", self.max_seq_len));
        }
        Ok(())
    }
}

/// Anything that scores next tokens. Fixture models used by metric tests
/// implement this directly.
pub trait LanguageModel: Sync {
    fn vocab_size(&self) -> usize;

    /// Longest sequence accepted by [`LanguageModel::logits`].
    fn max_len(&self) -> Option<usize> {
        None
    }

    /// Logits `[len, vocab]`; row `t` scores the token following `ids[..=t]`.
    fn logits(&self, ids: &[u32]) -> Result<Tensor<f32>, LmError>;
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy continuation of `prefix` by up to `n_new` tokens. Stops early at
/// `EOT` (not included in the output) or when the context is full.
pub fn greedy_decode<M: LanguageModel + ?Sized>(model: &M, prefix: &[u32], n_new: usize) -> Result<Vec<u32>, LmError> {
    if prefix.is_empty() {
        return Err(LmError::EmptyPrefix);
    }
    let mut ctx = prefix.to_vec();
    let mut out = Vec::new();
    while out.len() < n_new {
        if model.max_len().is_some_and(|m| ctx.len() > m) {
            break;
        }
        let logits = model.logits(&ctx)?;
        let v = logits.cols();
        let last = &logits.data()[(ctx.len() - 1) * v..ctx.len() * v];
        let next = argmax(last) as u32;
        if next == EOT {
            break;
        }
        out.push(next);
        ctx.push(next);
    }
    Ok(out)
}

/// Per-step log-probabilities of observed tokens plus the mean and standard
/// deviation of the log-probability under the model's own distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenStats {
    pub logprobs: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Log-softmax of one logits row in `f64`, with
/// `μ = Σ p·log p` and `σ = sqrt(Σ p·(log p − μ)²)`.
pub fn logprob_moments(row: &[f32]) -> (Vec<f64>, f64, f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let z: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
    let lse = max + z.ln();
    let lp: Vec<f64> = row.iter().map(|&v| v as f64 - lse).collect();
    let mu: f64 = lp.iter().map(|&l| l.exp() * l).sum();
    let var: f64 = lp.iter().map(|&l| l.exp() * (l - mu) * (l - mu)).sum();
    (lp, mu, var.max(0.0).sqrt())
}

/// `log p(x_t | x_<t)` for `t = 1..len`, with vocabulary moments per step.
pub fn token_logprobs<M: LanguageModel + ?Sized>(model: &M, tokens: &[u32]) -> Result<TokenStats, LmError> {
    if tokens.len() < 2 {
        return Err(LmError::TooShort(tokens.len()));
    }
    let logits = model.logits(&tokens[..tokens.len() - 1])?;
    let v = logits.cols();
    let mut stats = TokenStats { logprobs: Vec::new(), mu: Vec::new(), sigma: Vec::new() };
    for (t, row) in logits.data().chunks(v).enumerate() {
        let (lp, mu, sigma) = logprob_moments(row);
        stats.logprobs.push(lp[tokens[t + 1] as usize]);
        stats.mu.push(mu);
        stats.sigma.push(sigma);
    }
    Ok(stats)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Emits a one-hot on `seq[t + 1]` whenever the context is a prefix of
    /// `seq`, otherwise uniform logits.
    pub struct Lookup {
        pub seq: Vec<u32>,
        pub vocab: usize,
    }

    impl LanguageModel for Lookup {
        fn vocab_size(&self) -> usize {
            self.vocab
        }

        fn logits(&self, ids: &[u32]) -> Result<Tensor<f32>, LmError> {
            let mut data = vec![0.0f32; ids.len() * self.vocab];
            for t in 0..ids.len() {
                let on_path = t + 1 < self.seq.len() && ids[..=t] == self.seq[..=t];
                if on_path {
                    data[t * self.vocab + self.seq[t + 1] as usize] = 10.0;
                }
            }
            Ok(Tensor::new(vec![ids.len(), self.vocab], data)?)
        }
    }

    pub struct Uniform {
        pub vocab: usize,
    }

    impl LanguageModel for Uniform {
        fn vocab_size(&self) -> usize {
            self.vocab
        }

        fn logits(&self, ids: &[u32]) -> Result<Tensor<f32>, LmError> {
            Ok(Tensor::zeros(&[ids.len(), self.vocab]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::{Lookup, Uniform};
    use super::*;

    #[test]
    fn config_validation() {
        assert!(LmConfig::default().validate().is_ok());
        assert!(LmConfig { n_heads: 3, ..Default::default() }.validate().is_err());
        assert!(LmConfig { max_seq_len: 1, ..Default::default() }.validate().is_err());
        assert!(build_model(&LmConfig { d_model: 30, n_heads: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn greedy_decode_replays_memorized_sequence() {
        let seq: Vec<u32> = vec![BOS, 5, 9, 2, 7, 7, 1];
        let m = Lookup { seq: seq.clone(), vocab: VOCAB_SIZE };
        assert_eq!(greedy_decode(&m, &seq[..1], seq.len() - 1).unwrap(), seq[1..]);
        assert!(greedy_decode(&m, &seq[..1], 0).unwrap().is_empty());
        assert_eq!(greedy_decode(&m, &seq[..1], 3).unwrap(), greedy_decode(&m, &seq[..1], 3).unwrap());
        assert_eq!(greedy_decode(&m, &[], 3), Err(LmError::EmptyPrefix));
    }

    #[test]
    fn greedy_ties_pick_lowest_id_and_eot_stops() {
        let u = Uniform { vocab: VOCAB_SIZE };
        assert_eq!(greedy_decode(&u, &[BOS], 3).unwrap(), vec![0, 0, 0]);
        let m = Lookup { seq: vec![BOS, 4, EOT, 6], vocab: VOCAB_SIZE };
        assert_eq!(greedy_decode(&m, &[BOS], 5).unwrap(), vec![4]);
    }

    #[test]
    fn uniform_model_logprobs() {
        let u = Uniform { vocab: VOCAB_SIZE };
        let s = token_logprobs(&u, &[BOS, 1, 2, 3]).unwrap();
        let expect = -(VOCAB_SIZE as f64).ln();
        for t in 0..3 {
            assert!((s.logprobs[t] - expect).abs() < 1e-12);
            assert!((s.mu[t] - expect).abs() < 1e-12);
            assert!(s.sigma[t] < 1e-6);
        }
        assert_eq!(token_logprobs(&u, &[BOS]), Err(LmError::TooShort(1)));
    }

    #[test]
    fn vocab_probabilities_sum_to_one() {
        let row: Vec<f32> = (0..VOCAB_SIZE).map(|i| ((i * 37) % 11) as f32 * 0.7 - 3.0).collect();
        let (lp, _, _) = logprob_moments(&row);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-5);
    }

    #[test]
    fn three_symbol_moments_by_hand() {
        // logits ln(1), ln(2), ln(1) give p = (1/4, 1/2, 1/4).
        let row = [0.0f32, std::f32::consts::LN_2, 0.0];
        let (lp, mu, sigma) = logprob_moments(&row);
        let (a, b) = ((0.25f64).ln(), (0.5f64).ln());
        let mu_hand = 0.25 * a + 0.5 * b + 0.25 * a; // -1.5 ln 2
        let var_hand = 0.5 * (a - mu_hand).powi(2) + 0.5 * (b - mu_hand).powi(2); // (ln 2 / 2)^2
        assert!((lp[0] - a).abs() < 1e-7 && (lp[1] - b).abs() < 1e-7);
        assert!((mu - mu_hand).abs() < 1e-7);
        assert!((mu_hand + 1.5 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((sigma - var_hand.sqrt()).abs() < 1e-7);
        assert!((sigma - std::f64::consts::LN_2 / 2.0).abs() < 1e-7);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0; 4]), 0);
    }
}
