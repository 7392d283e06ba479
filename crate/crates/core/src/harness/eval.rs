use std::collections::BTreeSet;

use super::config::EvalConfig;
use super::split::QaSplit;
use super::HarnessError;
use crate::lm::{encode, LmModel};
use crate::metrics::{
    acc_forget, acc_recover, acc_retain, answer, exact_memorization, extraction_strength_qa, mia_auc, mia_scores_qa,
    model_utility, normalize_words, priv_leak, rouge_l, verbatim_memorization, EvalReport, JudgeCandidateSet, MiaScore,
    TokenF1Judge, MAX_ANSWER_TOKENS,
};
use crate::synthbench::{Bench, QaItem, SplitTag};

/// Forget, retain and holdout QA items to split for evaluation. In
/// restoration runs the corruption targets' true facts are the forget
/// questions and the other retain entities are the retain questions.
pub fn eval_items(bench: &Bench, restore: bool) -> Vec<QaItem> {
    let targets: BTreeSet<usize> = if restore { bench.corruption_targets().into_iter().collect() } else { BTreeSet::new() };
    bench
        .qa
        .iter()
        .filter(|q| matches!(q.split_tag, SplitTag::Forget | SplitTag::Retain | SplitTag::Holdout))
        .map(|q| {
            let mut q = q.clone();
            if q.entity_id.is_some_and(|id| targets.contains(&id)) {
                q.split_tag = SplitTag::Forget;
            }
            q
        })
        .collect()
}

/// Greedy answers to `items`.
pub fn answers(model: &LmModel, items: &[&QaItem]) -> Result<Vec<String>, HarnessError> {
    Ok(items.iter().map(|q| answer(model, q, MAX_ANSWER_TOKENS)).collect::<Result<_, _>>()?)
}

/// Everything about one split that does not depend on the evaluated model:
/// the items, judge candidates built from the ideal model's answers, and the
/// ideal model's membership AUC.
pub struct EvalContext<S> {
    pub cfg: EvalConfig,
    pub forget: Vec<QaItem>,
    pub retain: Vec<QaItem>,
    pub holdout: Vec<QaItem>,
    pub utility: Vec<QaItem>,
    forget_sets: Vec<JudgeCandidateSet>,
    retain_sets: Vec<JudgeCandidateSet>,
    ideal_auc: f64,
    _split: std::marker::PhantomData<S>,
}

fn candidate_sets(ideal: &LmModel, items: &[&QaItem], seed: u64) -> Result<Vec<JudgeCandidateSet>, HarnessError> {
    let outs = answers(ideal, items)?;
    Ok(items
        .iter()
        .zip(&outs)
        .enumerate()
        .map(|(i, (q, o))| JudgeCandidateSet::new(&q.answer, o, &q.perturbed_answers, seed.wrapping_add(i as u64)))
        .collect())
}

impl<S> EvalContext<S> {
    pub fn new(split: &QaSplit<S>, bench: &Bench, ideal: &LmModel, cfg: &EvalConfig, seed: u64) -> Result<Self, HarnessError> {
        let own = |t| split.tagged(t).into_iter().cloned().collect::<Vec<_>>();
        let (forget, retain, holdout) = (own(SplitTag::Forget), own(SplitTag::Retain), own(SplitTag::Holdout));
        if forget.is_empty() || retain.is_empty() || holdout.is_empty() {
            return Err(HarnessError::Metric("evaluation split lacks forget, retain or holdout items".into()));
        }
        let utility = bench.qa_tagged(SplitTag::Utility).into_iter().cloned().collect();
        let forget_sets = candidate_sets(ideal, &forget.iter().collect::<Vec<_>>(), seed)?;
        let retain_sets = candidate_sets(ideal, &retain.iter().collect::<Vec<_>>(), seed)?;
        let mut ctx = EvalContext {
            cfg: cfg.clone(),
            forget,
            retain,
            holdout,
            utility,
            forget_sets,
            retain_sets,
            ideal_auc: 0.0,
            _split: std::marker::PhantomData,
        };
        ctx.ideal_auc = ctx.auc(ideal, MiaScore::MinK)?;
        Ok(ctx)
    }

    fn auc(&self, model: &LmModel, score: MiaScore) -> Result<f64, HarnessError> {
        let f = mia_scores_qa(model, &self.forget.iter().collect::<Vec<_>>(), score, self.cfg.k_percent)?;
        let h = mia_scores_qa(model, &self.holdout.iter().collect::<Vec<_>>(), score, self.cfg.k_percent)?;
        Ok(mia_auc(&f, &h)?)
    }

    pub fn ideal_auc(&self) -> f64 {
        self.ideal_auc
    }

    /// All metrics of one model on this split.
    pub fn evaluate(&self, model: &LmModel) -> Result<EvalReport, HarnessError> {
        let judge = TokenF1Judge { threshold: self.cfg.judge_threshold };
        let f_refs: Vec<&QaItem> = self.forget.iter().collect();
        let r_refs: Vec<&QaItem> = self.retain.iter().collect();
        let f_out = answers(model, &f_refs)?;
        let r_out = answers(model, &r_refs)?;
        let rouge_mean = |outs: &[String], items: &[QaItem]| -> Result<f64, HarnessError> {
            let s: f64 = outs.iter().zip(items).map(|(o, q)| rouge_l(o, &q.answer)).sum::<Result<f64, _>>()?;
            Ok(s / items.len() as f64)
        };
        let exact = f_out.iter().zip(&self.forget).filter(|(o, q)| normalize_words(o) == normalize_words(&q.answer)).count();
        let seqs: Vec<Vec<u32>> = self.forget.iter().map(|q| encode(q.text())).collect();

        let mut r = EvalReport::default();
        r.insert("acc_forget", acc_forget(&judge, &f_out, &self.forget_sets)?)?;
        r.insert("acc_recover", acc_recover(&judge, &f_out, &self.forget_sets)?)?;
        r.insert("acc_retain", acc_retain(&judge, &r_out, &self.retain_sets)?)?;
        r.insert("truth_acc", exact as f64 / self.forget.len() as f64)?;
        r.insert("knowmem_forget", rouge_mean(&f_out, &self.forget)?)?;
        r.insert("knowmem_retain", rouge_mean(&r_out, &self.retain)?)?;
        r.insert("model_utility", model_utility(model, &self.utility.iter().collect::<Vec<_>>())?)?;
        r.insert("es_forget", extraction_strength_qa(model, &f_refs)?)?;
        r.insert("verbmem_forget", verbatim_memorization(model, &seqs, self.cfg.prefix_fraction)?)?;
        r.insert("exact_mem_forget", exact_memorization(model, &seqs, self.cfg.prefix_fraction)?)?;
        let auc = self.auc(model, MiaScore::MinK)?;
        r.insert("mia_auc", auc)?;
        r.insert("mia_auc_pp", self.auc(model, MiaScore::MinKPlusPlus)?)?;
        if self.ideal_auc > 0.0 {
            r.insert("priv_leak", priv_leak(auc, self.ideal_auc)?)?;
        }
        r.split_sizes.insert("forget".into(), self.forget.len());
        r.split_sizes.insert("retain".into(), self.retain.len());
        r.split_sizes.insert("holdout".into(), self.holdout.len());
        r.split_sizes.insert("utility".into(), self.utility.len());
        Ok(r)
    }
}
