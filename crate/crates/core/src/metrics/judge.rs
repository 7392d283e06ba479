use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_words, token_f1, MetricError};

/// Best-candidate F1 below this selects nothing.
pub const DEFAULT_JUDGE_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRole {
    GroundTruth,
    Ideal,
    Perturbed(usize),
}

/// Ground truth, ideal-model output and perturbed answers in a seeded
/// shuffled order. `order[i]` is the role of `candidates[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeCandidateSet {
    pub ground_truth: String,
    pub ideal_output: String,
    pub perturbed: Vec<String>,
    pub seed: u64,
    pub order: Vec<CandidateRole>,
}

impl JudgeCandidateSet {
    pub fn new(ground_truth: &str, ideal_output: &str, perturbed: &[String], seed: u64) -> Self {
        let mut order = vec![CandidateRole::GroundTruth, CandidateRole::Ideal];
        order.extend((0..perturbed.len()).map(CandidateRole::Perturbed));
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        JudgeCandidateSet {
            ground_truth: ground_truth.to_string(),
            ideal_output: ideal_output.to_string(),
            perturbed: perturbed.to_vec(),
            seed,
            order,
        }
    }

    pub fn text(&self, role: CandidateRole) -> &str {
        match role {
            CandidateRole::GroundTruth => &self.ground_truth,
            CandidateRole::Ideal => &self.ideal_output,
            CandidateRole::Perturbed(i) => &self.perturbed[i],
        }
    }

    /// Candidate texts in presentation order.
    pub fn candidates(&self) -> Vec<&str> {
        self.order.iter().map(|&r| self.text(r)).collect()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Picks the candidate most similar to a model output, or `None`.
pub trait Judge {
    fn select(&self, output: &str, candidates: &[&str]) -> Option<usize>;
}

/// Token-level F1 on normalized words; the earliest index wins ties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TokenF1Judge {
    pub threshold: f64,
}

impl Default for TokenF1Judge {
    fn default() -> Self {
        TokenF1Judge { threshold: DEFAULT_JUDGE_THRESHOLD }
    }
}

impl Judge for TokenF1Judge {
    fn select(&self, output: &str, candidates: &[&str]) -> Option<usize> {
        let out = normalize_words(output);
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let f = token_f1(&out, &normalize_words(c));
            if best.is_none_or(|(_, b)| f > b) {
                best = Some((i, f));
            }
        }
        best.filter(|&(_, f)| f >= self.threshold).map(|(i, _)| i)
    }
}

pub fn judge_select<J: Judge + ?Sized>(judge: &J, output: &str, set: &JudgeCandidateSet) -> Option<usize> {
    judge.select(output, &set.candidates())
}

/// What the selected candidate says. Compared by normalized text, so a
/// candidate counts as both ground truth and ideal when the two agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub selected: Option<usize>,
    pub ground_truth: bool,
    pub ideal: bool,
}

pub fn judge_outcomes<J: Judge + ?Sized>(
    judge: &J,
    outputs: &[String],
    sets: &[JudgeCandidateSet],
) -> Result<Vec<JudgeOutcome>, MetricError> {
    if outputs.len() != sets.len() {
        return Err(MetricError::Mismatch { outputs: outputs.len(), sets: sets.len() });
    }
    if outputs.is_empty() {
        return Err(MetricError::Empty("judge questions"));
    }
    Ok(outputs
        .iter()
        .zip(sets)
        .map(|(o, set)| {
            let selected = judge_select(judge, o, set);
            let words = selected.map(|i| normalize_words(set.text(set.order[i])));
            JudgeOutcome {
                selected,
                ground_truth: words.as_ref().is_some_and(|w| *w == normalize_words(&set.ground_truth)),
                ideal: words.as_ref().is_some_and(|w| *w == normalize_words(&set.ideal_output)),
            }
        })
        .collect())
}

fn frac(outcomes: &[JudgeOutcome], f: impl Fn(&JudgeOutcome) -> bool) -> f64 {
    outcomes.iter().filter(|o| f(o)).count() as f64 / outcomes.len() as f64
}

/// Fraction of forget questions where the ground truth is not selected.
pub fn acc_forget<J: Judge + ?Sized>(judge: &J, outputs: &[String], sets: &[JudgeCandidateSet]) -> Result<f64, MetricError> {
    Ok(frac(&judge_outcomes(judge, outputs, sets)?, |o| !o.ground_truth))
}

/// Fraction of forget questions where the ideal model's output is selected.
pub fn acc_recover<J: Judge + ?Sized>(judge: &J, outputs: &[String], sets: &[JudgeCandidateSet]) -> Result<f64, MetricError> {
    Ok(frac(&judge_outcomes(judge, outputs, sets)?, |o| o.ideal))
}

/// Fraction of retain questions where the ground truth or the ideal output is
/// selected.
pub fn acc_retain<J: Judge + ?Sized>(judge: &J, outputs: &[String], sets: &[JudgeCandidateSet]) -> Result<f64, MetricError> {
    Ok(frac(&judge_outcomes(judge, outputs, sets)?, |o| o.ground_truth || o.ideal))
}
