use serde::{Deserialize, Serialize};

use super::config::Objective;
use super::HarnessError;
use crate::metrics::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TofuScoreInputs {
    pub model_utility: f64,
    pub acc_forget: f64,
    pub acc_recover: f64,
    pub acc_retain: f64,
    pub extraction_strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuseScoreInputs {
    /// Min-K% membership AUC.
    pub min_k: f64,
    /// Min-K%++ membership AUC.
    pub min_k_pp: f64,
    pub verbmem_forget: f64,
    pub knowmem_retain: f64,
    pub extraction_strength: f64,
    pub exact_mem: f64,
}

fn unit(name: &str, v: f64) -> Result<f64, HarnessError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(HarnessError::Metric(format!("{name} = {v} outside [0, 1]")))
    }
}

/// `exp(MU²·Acc_f·Acc_rec²·Acc_ret·(1−ES)²/8)`, in `[1, e^{1/8}]`.
pub fn validation_score_tofu(m: &TofuScoreInputs) -> Result<f64, HarnessError> {
    let mu = unit("model_utility", m.model_utility)?;
    let f = unit("acc_forget", m.acc_forget)?;
    let rec = unit("acc_recover", m.acc_recover)?;
    let ret = unit("acc_retain", m.acc_retain)?;
    let es = unit("extraction_strength", m.extraction_strength)?;
    Ok((mu * mu * f * rec * rec * ret * (1.0 - es) * (1.0 - es) / 8.0).exp())
}

/// `exp((1−MinK)(1−MinK++)(1−VerbMem_f)(1−KnowMem_r)²(1−ES)²(1−ExactMem)/8)`.
pub fn validation_score_muse(m: &MuseScoreInputs) -> Result<f64, HarnessError> {
    let a = 1.0 - unit("min_k", m.min_k)?;
    let b = 1.0 - unit("min_k_pp", m.min_k_pp)?;
    let v = 1.0 - unit("verbmem_forget", m.verbmem_forget)?;
    let k = 1.0 - unit("knowmem_retain", m.knowmem_retain)?;
    let es = 1.0 - unit("extraction_strength", m.extraction_strength)?;
    let x = 1.0 - unit("exact_mem", m.exact_mem)?;
    Ok((a * b * v * k * k * es * es * x / 8.0).exp())
}

fn need(r: &EvalReport, name: &str) -> Result<f64, HarnessError> {
    r.get(name).ok_or_else(|| HarnessError::Metric(format!("report lacks {name}")))
}

/// The sweep objective of a report.
pub fn objective_score(objective: Objective, r: &EvalReport) -> Result<f64, HarnessError> {
    match objective {
        Objective::Tofu => validation_score_tofu(&TofuScoreInputs {
            model_utility: need(r, "model_utility")?,
            acc_forget: need(r, "acc_forget")?,
            acc_recover: need(r, "acc_recover")?,
            acc_retain: need(r, "acc_retain")?,
            extraction_strength: need(r, "es_forget")?,
        }),
        Objective::Muse => validation_score_muse(&MuseScoreInputs {
            min_k: need(r, "mia_auc")?,
            min_k_pp: need(r, "mia_auc_pp")?,
            verbmem_forget: need(r, "verbmem_forget")?,
            knowmem_retain: need(r, "knowmem_retain")?,
            extraction_strength: need(r, "es_forget")?,
            exact_mem: need(r, "exact_mem_forget")?,
        }),
        Objective::Restore => need(r, "truth_acc"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tofu(x: [f64; 5]) -> TofuScoreInputs {
        TofuScoreInputs { model_utility: x[0], acc_forget: x[1], acc_recover: x[2], acc_retain: x[3], extraction_strength: x[4] }
    }

    fn muse(x: [f64; 6]) -> MuseScoreInputs {
        MuseScoreInputs { min_k: x[0], min_k_pp: x[1], verbmem_forget: x[2], knowmem_retain: x[3], extraction_strength: x[4], exact_mem: x[5] }
    }

    // e^{1/8} and e^{2^-11} to 30 digits.
    const E_EIGHTH: f64 = 1.133_148_453_066_826_3;
    const E_HALVES: f64 = 1.000_488_400_478_694_5;

    #[test]
    fn tofu_golden_values() {
        assert!((validation_score_tofu(&tofu([1.0, 1.0, 1.0, 1.0, 0.0])).unwrap() - E_EIGHTH).abs() < 1e-12);
        assert_eq!(validation_score_tofu(&tofu([0.0, 1.0, 1.0, 1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(validation_score_tofu(&tofu([1.0, 1.0, 1.0, 1.0, 1.0])).unwrap(), 1.0);
        assert!((validation_score_tofu(&tofu([0.5; 5])).unwrap() - E_HALVES).abs() < 1e-15);
    }

    #[test]
    fn muse_golden_values() {
        assert!((validation_score_muse(&muse([0.0; 6])).unwrap() - E_EIGHTH).abs() < 1e-12);
        assert_eq!(validation_score_muse(&muse([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap(), 1.0);
        assert!((validation_score_muse(&muse([0.5; 6])).unwrap() - E_HALVES).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_inputs() {
        assert!(validation_score_tofu(&tofu([1.1, 1.0, 1.0, 1.0, 0.0])).is_err());
        assert!(validation_score_tofu(&tofu([1.0, 1.0, 1.0, 1.0, -0.1])).is_err());
        assert!(validation_score_tofu(&tofu([f64::NAN, 1.0, 1.0, 1.0, 0.0])).is_err());
        assert!(validation_score_muse(&muse([0.0, 0.0, 0.0, 2.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn objective_reads_report() {
        let mut r = EvalReport::default();
        for (k, v) in [("model_utility", 1.0), ("acc_forget", 1.0), ("acc_recover", 1.0), ("acc_retain", 1.0), ("es_forget", 0.0)] {
            r.insert(k, v).unwrap();
        }
        assert!((objective_score(Objective::Tofu, &r).unwrap() - E_EIGHTH).abs() < 1e-12);
        assert!(objective_score(Objective::Muse, &r).is_err());
        r.insert("truth_acc", 0.25).unwrap();
        assert_eq!(objective_score(Objective::Restore, &r).unwrap(), 0.25);
    }

    proptest! {
        #[test]
        fn tofu_monotone(x in proptest::array::uniform5(0.0f64..=1.0), i in 0usize..5, d in 0.0f64..0.5) {
            let base = validation_score_tofu(&tofu(x)).unwrap();
            prop_assert!((1.0..=E_EIGHTH + 1e-12).contains(&base));
            let mut y = x;
            // ES improves downward, the rest upward
            y[i] = if i == 4 { (x[i] - d).max(0.0) } else { (x[i] + d).min(1.0) };
            prop_assert!(validation_score_tofu(&tofu(y)).unwrap() >= base);
        }

        #[test]
        fn muse_monotone(x in proptest::array::uniform6(0.0f64..=1.0), i in 0usize..6, d in 0.0f64..0.5) {
            let base = validation_score_muse(&muse(x)).unwrap();
            prop_assert!((1.0..=E_EIGHTH + 1e-12).contains(&base));
            let mut y = x;
            y[i] = (x[i] - d).max(0.0);
            prop_assert!(validation_score_muse(&muse(y)).unwrap() >= base);
        }
    }
}
