use std::collections::BTreeSet;

use super::config::{DataRef, Source, StageConfig};
use crate::synthbench::{corrupt, render_corpus, Bench, QaItem, SplitTag};
use crate::train::Example;

/// QA items of the corruption targets carrying corrupted answers.
pub fn corrupted_qa(bench: &Bench) -> Vec<QaItem> {
    let targets: Vec<_> = bench.corruption_targets().into_iter().map(|id| bench.entity(id).clone()).collect();
    let (bad, _) = corrupt(&targets, bench.spec.corruption_seed);
    render_corpus(&bad, bench.spec.facts_per_entity, bench.spec.n_perturbed, bench.spec.corruption_seed, |_| SplitTag::Retain).1
}

pub fn examples(bench: &Bench, r: &DataRef) -> Vec<Example> {
    let tagged = |t: Option<SplitTag>, tag: SplitTag| t.is_none_or(|t| t == tag);
    let once: Vec<Example> = match r.source {
        Source::Filler => bench.filler.iter().map(|d| d.example()).collect(),
        Source::Documents => bench.documents.iter().filter(|d| tagged(r.tag, d.split_tag)).map(|d| d.example()).collect(),
        Source::Qa => bench.qa.iter().filter(|q| tagged(r.tag, q.split_tag)).map(|q| q.example()).collect(),
        Source::CorruptedQa => corrupted_qa(bench).iter().map(|q| q.example()).collect(),
    };
    let mut out = Vec::with_capacity(once.len() * r.repeat);
    for _ in 0..r.repeat {
        out.extend(once.iter().cloned());
    }
    out
}

/// The examples of a stage; `drop_forget` removes forget references.
pub fn stage_examples(bench: &Bench, stage: &StageConfig, drop_forget: bool) -> Vec<Example> {
    stage.data.iter().filter(|r| !(drop_forget && r.is_forget())).flat_map(|r| examples(bench, r)).collect()
}

/// Distinct examples of the forget references across `stages`, in first-seen
/// order.
pub fn forget_examples<'a>(bench: &Bench, stages: impl IntoIterator<Item = &'a StageConfig>) -> Vec<Example> {
    dedup(stages.into_iter().flat_map(|s| &s.data).filter(|r| r.is_forget()).flat_map(|r| examples(bench, &DataRef { repeat: 1, ..r.clone() })))
}

/// Retain QA examples, without the corruption targets when `restore` is set.
pub fn retain_examples(bench: &Bench, restore: bool) -> Vec<Example> {
    let skip: BTreeSet<usize> = if restore { bench.corruption_targets().into_iter().collect() } else { BTreeSet::new() };
    bench
        .qa_tagged(SplitTag::Retain)
        .into_iter()
        .filter(|q| q.entity_id.is_none_or(|id| !skip.contains(&id)))
        .map(|q| q.example())
        .collect()
}

fn dedup(it: impl Iterator<Item = Example>) -> Vec<Example> {
    let mut seen = BTreeSet::new();
    it.filter(|e| seen.insert((e.ids.clone(), e.mask.clone()))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::BenchSpec;
    use crate::train::TrainConfig;

    fn bench() -> Bench {
        Bench::generate(&BenchSpec { n_entities: 20, filler_tokens: 300, background_entities: 3, ..BenchSpec::default() }).unwrap()
    }

    #[test]
    fn references_select_tagged_items() {
        let b = bench();
        let f = examples(&b, &DataRef::qa(SplitTag::Forget));
        assert_eq!(f.len(), b.qa_tagged(SplitTag::Forget).len());
        assert_eq!(f.len(), 2 * b.spec.facts_per_entity);
        let r = examples(&b, &DataRef::new(Source::Documents, Some(SplitTag::Utility), 3));
        assert_eq!(r.len(), 3 * b.spec.utility_facts);
        assert_eq!(examples(&b, &DataRef::new(Source::Filler, None, 1)).len(), b.filler.len());
    }

    #[test]
    fn dropping_forget_refs() {
        let b = bench();
        let stage = StageConfig {
            stage_tag: "s".into(),
            data: vec![DataRef::qa(SplitTag::Forget), DataRef::qa(SplitTag::Retain)],
            train: TrainConfig::default(),
        };
        let all = stage_examples(&b, &stage, false);
        let kept = stage_examples(&b, &stage, true);
        let f = forget_examples(&b, [&stage, &stage]);
        assert_eq!(all.len(), kept.len() + f.len());
        assert!(kept.iter().all(|e| !f.contains(e)));
    }

    #[test]
    fn corrupted_answers_differ() {
        let b = bench();
        let bad = corrupted_qa(&b);
        let targets = b.corruption_targets();
        assert_eq!(bad.len(), targets.len() * b.spec.facts_per_entity);
        for q in &bad {
            let truth = b.qa.iter().find(|t| t.question == q.question).unwrap();
            assert_ne!(truth.answer, q.answer);
        }
        let clean = retain_examples(&b, true);
        assert_eq!(clean.len() + bad.len(), b.qa_tagged(SplitTag::Retain).len());
    }
}
