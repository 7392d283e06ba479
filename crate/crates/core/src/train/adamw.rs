use std::collections::BTreeMap;

use super::TrainError;
use crate::params::NamedParamMap;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter, plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamWState {
    pub t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamWState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One AdamW step with decoupled weight decay, visiting parameters in sorted
/// name order:
///
/// ```text
/// t += 1
/// m = β1·m + (1−β1)·g,   v = β2·v + (1−β2)·g²
/// m̂ = m / (1−β1^t),      v̂ = v / (1−β2^t)
/// θ = θ·(1 − lr·wd) − lr·m̂ / (sqrt(v̂) + ε)
/// ```
///
/// Arithmetic runs in `f64`; each parameter is rounded to `f32` once.
pub fn adamw_step(
    params: &mut NamedParamMap,
    grads: &BTreeMap<String, Tensor<f32>>,
    state: &mut AdamWState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), TrainError> {
    params.check_schema(grads)?;
    if grads.values().any(|g| !g.all_finite()) {
        return Err(TrainError::Divergence { step: state.t + 1 });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let decay = 1.0 - lr * weight_decay;
    for (name, p) in params.iter_mut() {
        let g = grads[name].data();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let gi = gi as f64;
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x = (*x as f64 * decay - lr * m_hat / (v_hat.sqrt() + ADAM_EPS)) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f32) -> NamedParamMap {
        let mut m = NamedParamMap::new();
        m.insert(name, Tensor::scalar(v));
        m
    }

    fn grad(v: f32) -> BTreeMap<String, Tensor<f32>> {
        [("w".to_string(), Tensor::scalar(v))].into_iter().collect()
    }

    #[test]
    fn first_step_by_hand() {
        // m̂ = 1, v̂ = 1, update = 0.1 / (1 + 1e-8)
        let mut p = one("w", 0.0);
        let mut s = AdamWState::new();
        adamw_step(&mut p, &grad(1.0), &mut s, 0.1, 0.0).unwrap();
        let expect = -0.1 / (1.0 + 1e-8);
        assert_eq!(p.get("w").unwrap().item(), expect as f32);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = one("w", 1.25);
        let mut s = AdamWState::new();
        for _ in 0..3 {
            adamw_step(&mut p, &grad(0.0), &mut s, 0.1, 0.0).unwrap();
        }
        assert_eq!(p.get("w").unwrap().item(), 1.25);
    }

    #[test]
    fn zero_gradient_with_decay_shrinks() {
        let mut p = one("w", 2.0);
        let mut s = AdamWState::new();
        adamw_step(&mut p, &grad(0.0), &mut s, 0.1, 0.5).unwrap();
        assert_eq!(p.get("w").unwrap().item(), (2.0f64 * (1.0 - 0.1 * 0.5)) as f32);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = one("w", 0.0);
        let mut s = AdamWState::new();
        let err = adamw_step(&mut p, &grad(f32::NAN), &mut s, 0.1, 0.0).unwrap_err();
        assert!(matches!(err, TrainError::Divergence { step: 1 }));
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let mut p = one("other", 0.0);
        let mut s = AdamWState::new();
        assert!(matches!(adamw_step(&mut p, &grad(1.0), &mut s, 0.1, 0.0), Err(TrainError::Schema(_))));
    }
}
