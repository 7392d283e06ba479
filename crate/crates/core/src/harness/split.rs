use std::collections::BTreeMap;
use std::marker::PhantomData;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::synthbench::{QaItem, SplitTag};

/// Marker for the split used to pick hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct Validation;

/// Marker for the split reported after selection.
#[derive(Clone, Copy, Debug)]
pub struct Test;

/// QA items of one evaluation split. The marker keeps sweep code from
/// receiving test items.
#[derive(Clone, Debug)]
pub struct QaSplit<S> {
    pub items: Vec<QaItem>,
    _split: PhantomData<S>,
}

impl<S> QaSplit<S> {
    fn new(items: Vec<QaItem>) -> Self {
        QaSplit { items, _split: PhantomData }
    }

    pub fn tagged(&self, tag: SplitTag) -> Vec<&QaItem> {
        self.items.iter().filter(|q| q.split_tag == tag).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Validation count for a stratum of `n`: `round(fraction·n)`, kept within
/// `1..n` so both sides are non-empty when `n ≥ 2`.
pub fn validation_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Stratified by `split_tag`: each tag's items are shuffled with `seed` and
/// the first [`validation_count`] go to validation. Both outputs keep input
/// order.
pub fn split_eval(qa: &[QaItem], fraction: f64, seed: u64) -> Result<(QaSplit<Validation>, QaSplit<Test>), HarnessError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HarnessError::Config(format!("validation fraction {fraction} outside (0, 1)")));
    }
    let mut strata: BTreeMap<SplitTag, Vec<usize>> = BTreeMap::new();
    for (i, q) in qa.iter().enumerate() {
        strata.entry(q.split_tag).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_val = vec![false; qa.len()];
    for idx in strata.values_mut() {
        idx.shuffle(&mut rng);
        for &i in &idx[..validation_count(idx.len(), fraction)] {
            in_val[i] = true;
        }
    }
    let pick = |want: bool| qa.iter().zip(&in_val).filter(|(_, &v)| v == want).map(|(q, _)| q.clone()).collect();
    Ok((QaSplit::new(pick(true)), QaSplit::new(pick(false))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn items(tags: &[SplitTag]) -> Vec<QaItem> {
        tags.iter()
            .enumerate()
            .map(|(i, &t)| QaItem {
                question: format!("Q: {i}? A:"),
                answer: format!("a{i}"),
                perturbed_answers: vec![],
                split_tag: t,
                entity_id: Some(i),
            })
            .collect()
    }

    #[test]
    fn fifteen_of_a_hundred() {
        let qa = items(&[SplitTag::Retain; 100]);
        let (v, t) = split_eval(&qa, 0.15, 0).unwrap();
        assert_eq!((v.len(), t.len()), (15, 85));
    }

    #[test]
    fn bad_fraction() {
        assert!(split_eval(&[], 0.0, 0).is_err());
        assert!(split_eval(&[], 1.0, 0).is_err());
    }

    #[test]
    fn strata_counts() {
        assert_eq!(validation_count(30, 0.15), 5);
        assert_eq!(validation_count(1, 0.15), 0);
        assert_eq!(validation_count(2, 0.15), 1);
        assert_eq!(validation_count(2, 0.9), 1);
    }

    proptest! {
        #[test]
        fn disjoint_stratified_stable(tags in proptest::collection::vec(0u8..3, 0..60), seed in 0u64..50) {
            let all = [SplitTag::Forget, SplitTag::Retain, SplitTag::Holdout];
            let qa = items(&tags.iter().map(|&t| all[t as usize]).collect::<Vec<_>>());
            let (v, t) = split_eval(&qa, 0.15, seed).unwrap();
            prop_assert_eq!(v.len() + t.len(), qa.len());
            let mut union: Vec<String> = v.items.iter().chain(&t.items).map(|q| q.question.clone()).collect();
            union.sort();
            let mut orig: Vec<String> = qa.iter().map(|q| q.question.clone()).collect();
            orig.sort();
            prop_assert_eq!(union, orig);
            for tag in all {
                let n = qa.iter().filter(|q| q.split_tag == tag).count();
                prop_assert_eq!(v.tagged(tag).len(), validation_count(n, 0.15));
            }
            let (v2, _) = split_eval(&qa, 0.15, seed).unwrap();
            prop_assert_eq!(v.items, v2.items);
        }
    }
}
