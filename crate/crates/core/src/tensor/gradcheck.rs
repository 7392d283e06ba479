use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tape, Tensor, TensorError, Var};

/// Central-difference stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, truncation error O(h²).
    ThreePoint,
    /// `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h`, truncation error O(h⁴).
    FivePoint,
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    pub stencil: Stencil,
    /// Coordinates to probe; all of them when this exceeds the parameter count.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-5, stencil: Stencil::FivePoint, samples: 200, seed: 0 }
    }
}

/// Worst probed coordinate of a gradient check.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub probed: usize,
}

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` records a scalar objective from the named parameter leaves it is
/// handed. Returns the largest `|g_ad − g_fd| / (|g_ad| + |g_fd| + 1e-12)`
/// over the probed coordinates.
pub fn finite_diff_check<F>(build: F, params: &BTreeMap<String, Tensor<f64>>, cfg: &GradCheckConfig) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &BTreeMap<String, Var>) -> Result<Var>,
{
    finite_diff_report(build, params, cfg).map(|r| r.max_rel_error)
}

/// [`finite_diff_check`] with the location of the worst coordinate.
pub fn finite_diff_report<F>(
    build: F,
    params: &BTreeMap<String, Tensor<f64>>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &BTreeMap<String, Var>) -> Result<Var>,
{
    let eval = |p: &BTreeMap<String, Tensor<f64>>| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = register(&mut tape, p);
        let loss = build(&mut tape, &vars).map_err(non_finite_as_eval)?;
        let v = tape.value(loss).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::Evaluation)
        }
    };

    let mut tape = Tape::new();
    let vars = register(&mut tape, params);
    let loss = build(&mut tape, &vars).map_err(non_finite_as_eval)?;
    if !tape.value(loss).item().is_finite() {
        return Err(TensorError::Evaluation);
    }
    let ad = tape.backward(loss)?.into_named();

    let coords: Vec<(&String, usize)> =
        params.iter().flat_map(|(name, t)| (0..t.numel()).map(move |i| (name, i))).collect();
    let picked: Vec<usize> = if cfg.samples >= coords.len() {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = rand::seq::index::sample(&mut rng, coords.len(), cfg.samples).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut worst = GradCheckReport { probed: picked.len(), ..Default::default() };
    let mut probe = params.clone();
    for ci in picked {
        let (name, i) = coords[ci];
        let orig = params[name].data()[i];
        let mut at = |h: f64| -> Result<f64> {
            probe.get_mut(name).expect("same keys").data_mut()[i] = orig + h;
            let v = eval(&probe);
            probe.get_mut(name).expect("same keys").data_mut()[i] = orig;
            v
        };
        let h = cfg.eps;
        // Differences of equal evaluations cancel exactly in this grouping.
        let fd = match cfg.stencil {
            Stencil::ThreePoint => (at(h)? - at(-h)?) / (2.0 * h),
            Stencil::FivePoint => {
                let near = at(h)? - at(-h)?;
                let far = at(2.0 * h)? - at(-2.0 * h)?;
                (8.0 * near - far) / (12.0 * h)
            }
        };
        let g = ad[name].data()[i];
        let rel = (g - fd).abs() / (g.abs() + fd.abs() + 1e-12);
        if rel > worst.max_rel_error {
            worst.max_rel_error = rel;
            worst.name = name.clone();
            worst.index = i;
            worst.analytic = g;
            worst.numeric = fd;
        }
    }
    Ok(worst)
}

fn register(tape: &mut Tape<f64>, params: &BTreeMap<String, Tensor<f64>>) -> BTreeMap<String, Var> {
    params.iter().map(|(name, t)| (name.clone(), tape.param(name, t.clone()))).collect()
}

fn non_finite_as_eval(e: TensorError) -> TensorError {
    match e {
        TensorError::NonFinite { .. } => TensorError::Evaluation,
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> BTreeMap<String, Tensor<f64>> {
        entries
            .iter()
            .map(|(n, s, d)| (n.to_string(), Tensor::new(s.clone(), d.clone()).unwrap()))
            .collect()
    }

    #[test]
    fn quadratic_objective() {
        let p = params(&[("x", vec![3], vec![0.3, -1.2, 2.0])]);
        let err = finite_diff_check(
            |t, v| {
                let sq = t.mul(v["x"], v["x"])?;
                t.sum(sq)
            },
            &p,
            &GradCheckConfig { eps: 1e-5, ..Default::default() },
        )
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn linear_objective_is_exact_to_round_off() {
        let p = params(&[("x", vec![4], vec![0.5, 1.5, -2.5, 3.0])]);
        let err = finite_diff_check(
            |t, v| {
                let s = t.scale(v["x"], 3.0)?;
                t.sum(s)
            },
            &p,
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    // One check per recorded op, each composed into a scalar via a fixed
    // random projection so every output coordinate contributes.
    fn project(t: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
        let shape = t.value(y).shape().to_vec();
        let n = t.value(y).numel();
        let w: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * (seed as f64 + 0.7)).sin()).collect();
        let w = t.constant(Tensor::new(shape, w)?);
        let prod = t.mul(y, w)?;
        t.sum(prod)
    }

    fn check(p: &BTreeMap<String, Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &BTreeMap<String, Var>) -> Result<Var>) {
        let err = finite_diff_check(
            |t, v| {
                let y = f(t, v)?;
                project(t, y, 3)
            },
            p,
            &GradCheckConfig { eps: 1e-5, samples: 10_000, seed: 1, ..Default::default() },
        )
        .unwrap();
        assert!(err <= 1e-6, "max relative error {err}");
    }

    fn mat(rows: usize, cols: usize, phase: f64) -> (Vec<usize>, Vec<f64>) {
        (vec![rows, cols], (0..rows * cols).map(|i| ((i as f64) * 0.731 + phase).sin()).collect())
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let (sa, a) = mat(3, 4, 0.1);
        let (sb, b) = mat(4, 5, 0.9);
        let (sc, c) = mat(3, 4, 1.7);
        let p = params(&[("a", sa, a), ("b", sb, b), ("c", sc, c), ("bias", vec![4], vec![0.1, -0.2, 0.3, 0.05])]);
        check(&p, |t, v| t.matmul(v["a"], v["b"]));
        check(&p, |t, v| t.add(v["a"], v["c"]));
        check(&p, |t, v| t.add_bias(v["a"], v["bias"]));
        check(&p, |t, v| t.mul(v["a"], v["c"]));
        check(&p, |t, v| t.scale(v["a"], -1.5));
        check(&p, |t, v| t.add_scalar(v["a"], 2.0));
        check(&p, |t, v| t.gelu(v["a"]));
        check(&p, |t, v| t.softplus(v["a"]));
        check(&p, |t, v| t.softmax(v["a"]));
        check(&p, |t, v| {
            let g = t.add_scalar(v["bias"], 1.0)?;
            t.layer_norm(v["a"], g, v["bias"])
        });
        check(&p, |t, v| t.embedding(v["b"], &[3, 0, 3, 1]));
        check(&p, |t, v| t.cross_entropy(v["a"], &[0, 3, 2], &[true, false, true]));
    }

    #[test]
    fn attention_matches_finite_differences() {
        let (s, x) = mat(5, 12, 0.3);
        let p = params(&[("qkv", s, x)]);
        check(&p, |t, v| t.causal_attention(v["qkv"], 2));
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let p = params(&[("x", vec![1], vec![800.0])]);
        let r = finite_diff_check(
            |t, v| {
                let e = t.scale(v["x"], 1e308)?;
                t.sum(e)
            },
            &p,
            &GradCheckConfig::default(),
        );
        assert_eq!(r.err(), Some(TensorError::Evaluation));
    }
}
