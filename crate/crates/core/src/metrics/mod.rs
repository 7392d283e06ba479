//! Evaluation metrics: text overlap, a deterministic candidate judge,
//! memorization, membership inference and utility.

mod judge;
mod report;

use serde::{Deserialize, Serialize};

use crate::lm::{argmax, decode_lossy, encode, greedy_decode, token_logprobs, LanguageModel, LmError, TokenStats};
use crate::synthbench::QaItem;

pub use judge::{
    acc_forget, acc_recover, acc_retain, judge_outcomes, judge_select, CandidateRole, JudgeCandidateSet, JudgeOutcome,
    Judge, TokenF1Judge, DEFAULT_JUDGE_THRESHOLD,
};
pub use report::EvalReport;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("reference text is empty")]
    EmptyReference,
    #[error("k_percent {0} outside (0, 100]")]
    KPercent(f64),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("{outputs} outputs for {sets} candidate sets")]
    Mismatch { outputs: usize, sets: usize },
    #[error("auc_ideal is 0")]
    ZeroIdealAuc,
    #[error("every sequence was too short to score")]
    AllSkipped,
    #[error("metric {name} = {value} is not finite")]
    NonFinite { name: String, value: f64 },
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default lowest-probability fraction for Min-K% and Min-K%++.
pub const DEFAULT_K_PERCENT: f64 = 20.0;
pub const DEFAULT_PREFIX_FRACTION: f64 = 0.5;
/// Floor on per-question scores inside the harmonic mean.
pub const UTILITY_FLOOR: f64 = 1e-6;
/// Floor on the vocabulary standard deviation in Min-K%++.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Lowercases, replaces ASCII punctuation with spaces and splits on
/// whitespace.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F1 over token sequences; 0 when either side is empty.
pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-L F1 between normalized words of `candidate` and `reference`.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    let r = normalize_words(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(rouge_l_tokens(&normalize_words(candidate), &r))
}

/// Bag-of-words F1 with multiset overlap.
pub fn token_f1(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut rest: Vec<&String> = b.iter().collect();
    let mut common = 0usize;
    for w in a {
        if let Some(pos) = rest.iter().position(|x| *x == w) {
            rest.swap_remove(pos);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / a.len() as f64;
    let r = common as f64 / b.len() as f64;
    2.0 * p * r / (p + r)
}

/// Greedy answer text for a QA item.
pub fn answer<M: LanguageModel + ?Sized>(model: &M, item: &QaItem, max_new: usize) -> Result<String, MetricError> {
    let out = greedy_decode(model, &encode(item.prompt()), max_new)?;
    Ok(decode_lossy(&out)?)
}

/// Token budget for a generated answer.
pub const MAX_ANSWER_TOKENS: usize = 32;

/// Shortest `k ≥ 1` such that greedy decoding from `context ++ s[..k]`
/// reproduces `s[k..]`, found with one forward pass: the continuation matches
/// exactly when every teacher-forced argmax from position `k` on matches.
fn shortest_prefix<M: LanguageModel + ?Sized>(model: &M, context: &[u32], s: &[u32]) -> Result<Option<usize>, MetricError> {
    let mut ids = context.to_vec();
    ids.extend_from_slice(s);
    let logits = model.logits(&ids[..ids.len() - 1])?;
    let v = logits.cols();
    let off = context.len();
    // pred[t] is the argmax for s[t], t ≥ 1 (or t ≥ 0 with a context).
    let mut k = s.len();
    for t in (1..s.len()).rev() {
        let row = &logits.data()[(off + t - 1) * v..(off + t) * v];
        if argmax(row) as u32 != s[t] || s[t] == crate::lm::EOT {
            break;
        }
        k = t;
    }
    Ok((k < s.len()).then_some(k))
}

/// `1 − k*/|s|` where `k*` is the shortest prefix from which greedy decoding
/// regenerates the rest of `s`; 0 when no prefix shorter than `s` works.
pub fn extraction_strength_one<M: LanguageModel + ?Sized>(model: &M, context: &[u32], s: &[u32]) -> Result<f64, MetricError> {
    if s.len() < 2 {
        return Err(LmError::TooShort(s.len()).into());
    }
    Ok(match shortest_prefix(model, context, s)? {
        Some(k) => 1.0 - k as f64 / s.len() as f64,
        None => 0.0,
    })
}

/// Mean extraction strength over whole sequences.
pub fn extraction_strength<M: LanguageModel + ?Sized>(model: &M, sequences: &[Vec<u32>]) -> Result<f64, MetricError> {
    mean(sequences.iter().map(|s| extraction_strength_one(model, &[], s)), "sequences")
}

/// Answer bytes of a QA item, as the sequence scored by extraction strength.
pub fn answer_ids(item: &QaItem) -> Vec<u32> {
    item.answer.bytes().map(u32::from).collect()
}

/// Mean extraction strength of answers with their question as context.
pub fn extraction_strength_qa<M: LanguageModel + ?Sized>(model: &M, items: &[&QaItem]) -> Result<f64, MetricError> {
    mean(
        items.iter().map(|q| {
            let s = answer_ids(q);
            if s.len() < 2 {
                return Ok(0.0);
            }
            extraction_strength_one(model, &encode(q.prompt()), &s)
        }),
        "qa items",
    )
}

fn mean<I: Iterator<Item = Result<f64, MetricError>>>(it: I, what: &'static str) -> Result<f64, MetricError> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in it {
        sum += v?;
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::Empty(what));
    }
    Ok(sum / n as f64)
}

fn prefix_len(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).floor() as usize).max(1)
}

/// Teacher-forced fraction of suffix tokens predicted exactly, averaged over
/// sequences. The prefix is `max(1, floor(fraction·len))` tokens.
pub fn exact_memorization<M: LanguageModel + ?Sized>(
    model: &M,
    sequences: &[Vec<u32>],
    prefix_fraction: f64,
) -> Result<f64, MetricError> {
    let mut scores = Vec::new();
    for s in sequences {
        let p = prefix_len(s.len(), prefix_fraction);
        if p >= s.len() {
            continue;
        }
        let logits = model.logits(&s[..s.len() - 1])?;
        let v = logits.cols();
        let hits = (p..s.len()).filter(|&t| argmax(&logits.data()[(t - 1) * v..t * v]) as u32 == s[t]).count();
        scores.push(hits as f64 / (s.len() - p) as f64);
    }
    if scores.is_empty() {
        return Err(MetricError::AllSkipped);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// ROUGE-L between the greedy continuation of the prefix and the true
/// suffix, both decoded to text, averaged over sequences.
pub fn verbatim_memorization<M: LanguageModel + ?Sized>(
    model: &M,
    sequences: &[Vec<u32>],
    prefix_fraction: f64,
) -> Result<f64, MetricError> {
    let mut scores = Vec::new();
    for s in sequences {
        let p = prefix_len(s.len(), prefix_fraction);
        if p >= s.len() {
            continue;
        }
        let reference = decode_lossy(&s[p..])?;
        if normalize_words(&reference).is_empty() {
            continue;
        }
        let out = greedy_decode(model, &s[..p], s.len() - p)?;
        scores.push(rouge_l(&decode_lossy(&out)?, &reference)?);
    }
    if scores.is_empty() {
        return Err(MetricError::AllSkipped);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean ROUGE-L of greedy answers against gold answers.
pub fn knowledge_memorization<M: LanguageModel + ?Sized>(model: &M, qa: &[&QaItem]) -> Result<f64, MetricError> {
    mean(qa.iter().map(|q| rouge_l(&answer(model, q, MAX_ANSWER_TOKENS)?, &q.answer)), "qa set")
}

fn check_k(k_percent: f64) -> Result<(), MetricError> {
    if k_percent > 0.0 && k_percent <= 100.0 {
        Ok(())
    } else {
        Err(MetricError::KPercent(k_percent))
    }
}

/// Mean of the lowest `ceil(k%·n)` values.
pub fn min_k_of(values: &[f64], k_percent: f64) -> Result<f64, MetricError> {
    check_k(k_percent)?;
    if values.is_empty() {
        return Err(MetricError::Empty("log-probabilities"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = ((k_percent * v.len() as f64 / 100.0).ceil() as usize).clamp(1, v.len());
    Ok(v[..n].iter().sum::<f64>() / n as f64)
}

/// Min-K%: mean of the lowest k% token log-probabilities. Higher means more
/// member-like.
pub fn min_k<M: LanguageModel + ?Sized>(model: &M, sequence: &[u32], k_percent: f64) -> Result<f64, MetricError> {
    check_k(k_percent)?;
    min_k_of(&token_logprobs(model, sequence)?.logprobs, k_percent)
}

/// Per-token `(log p − μ)/σ`, taken as 0 where `σ` is below the floor: a
/// flat distribution leaves only rounding noise in `log p − μ`.
pub fn z_scores(stats: &TokenStats) -> Vec<f64> {
    stats
        .logprobs
        .iter()
        .zip(&stats.mu)
        .zip(&stats.sigma)
        .map(|((&lp, &mu), &s)| if s < SIGMA_FLOOR { 0.0 } else { (lp - mu) / s })
        .collect()
}

/// Min-K%++: Min-K% over vocabulary-normalized log-probabilities.
pub fn min_k_pp<M: LanguageModel + ?Sized>(model: &M, sequence: &[u32], k_percent: f64) -> Result<f64, MetricError> {
    check_k(k_percent)?;
    min_k_of(&z_scores(&token_logprobs(model, sequence)?), k_percent)
}

/// Mann–Whitney AUC: `P(member > nonmember) + 0.5·P(equal)`.
pub fn mia_auc(members: &[f64], nonmembers: &[f64]) -> Result<f64, MetricError> {
    if members.is_empty() {
        return Err(MetricError::Empty("member scores"));
    }
    if nonmembers.is_empty() {
        return Err(MetricError::Empty("nonmember scores"));
    }
    let mut wins = 0.0;
    for &m in members {
        for &n in nonmembers {
            if m > n {
                wins += 1.0;
            } else if m == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (members.len() * nonmembers.len()) as f64)
}

/// `100·(auc_ideal − auc_unlearn)/auc_ideal`. Negative values mean residual
/// membership signal, positive values over-unlearning.
pub fn priv_leak(auc_unlearn: f64, auc_ideal: f64) -> Result<f64, MetricError> {
    if auc_ideal == 0.0 {
        return Err(MetricError::ZeroIdealAuc);
    }
    Ok(100.0 * (auc_ideal - auc_unlearn) / auc_ideal)
}

/// Harmonic mean with each score floored at `1e-6`.
pub fn harmonic_utility(scores: &[f64]) -> Result<f64, MetricError> {
    if scores.is_empty() {
        return Err(MetricError::Empty("utility scores"));
    }
    Ok(scores.len() as f64 / scores.iter().map(|&s| 1.0 / s.max(UTILITY_FLOOR)).sum::<f64>())
}

/// Harmonic mean of per-question ROUGE-L on the utility pool.
pub fn model_utility<M: LanguageModel + ?Sized>(model: &M, utility_qa: &[&QaItem]) -> Result<f64, MetricError> {
    let scores = utility_qa
        .iter()
        .map(|q| rouge_l(&answer(model, q, MAX_ANSWER_TOKENS)?, &q.answer))
        .collect::<Result<Vec<_>, _>>()?;
    harmonic_utility(&scores)
}

/// Which membership score feeds the AUC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiaScore {
    MinK,
    MinKPlusPlus,
}

pub fn mia_scores<M: LanguageModel + ?Sized>(
    model: &M,
    sequences: &[Vec<u32>],
    score: MiaScore,
    k_percent: f64,
) -> Result<Vec<f64>, MetricError> {
    sequences
        .iter()
        .map(|s| match score {
            MiaScore::MinK => min_k(model, s, k_percent),
            MiaScore::MinKPlusPlus => min_k_pp(model, s, k_percent),
        })
        .collect()
}

/// Membership scores over answer tokens only, conditioned on the question.
pub fn mia_scores_qa<M: LanguageModel + ?Sized>(
    model: &M,
    items: &[&QaItem],
    score: MiaScore,
    k_percent: f64,
) -> Result<Vec<f64>, MetricError> {
    check_k(k_percent)?;
    items
        .iter()
        .map(|q| {
            let mut s = encode(q.prompt());
            let start = s.len() - 1;
            s.extend(answer_ids(q));
            let stats = token_logprobs(model, &s)?;
            match score {
                MiaScore::MinK => min_k_of(&stats.logprobs[start..], k_percent),
                MiaScore::MinKPlusPlus => min_k_of(&z_scores(&stats)[start..], k_percent),
            }
        })
        .collect()
}
