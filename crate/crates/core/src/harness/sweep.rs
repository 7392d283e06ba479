use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Objective, SweepGrid};
use super::eval::EvalContext;
use super::scores::objective_score;
use super::split::Validation;
use super::HarnessError;
use crate::lm::{LmConfig, LmModel};
use crate::metrics::EvalReport;
use crate::params::NamedParamMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// `alphas × betas` in order, or one point per λ when `by_lambda` is set.
pub fn grid_points(grid: &SweepGrid, by_lambda: bool) -> Result<Vec<SweepPoint>, HarnessError> {
    let points: Vec<SweepPoint> = if by_lambda {
        grid.lambdas.iter().map(|&l| SweepPoint { alpha: 1.0, beta: 0.0, lambda: Some(l) }).collect()
    } else {
        grid.alphas.iter().flat_map(|&alpha| grid.betas.iter().map(move |&beta| SweepPoint { alpha, beta, lambda: None })).collect()
    };
    if points.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()));
    }
    if points.iter().any(|p| !(p.alpha.is_finite() && p.beta.is_finite() && p.lambda.is_none_or(f64::is_finite))) {
        return Err(HarnessError::Config("sweep grid values must be finite".into()));
    }
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub point: SweepPoint,
    pub score: f64,
    pub report: EvalReport,
}

/// Index of the highest score; ties go to the smaller α, then β, then λ.
pub fn select_best(rows: &[LeaderboardRow]) -> Result<usize, HarnessError> {
    let key = |r: &LeaderboardRow| (r.point.alpha, r.point.beta, r.point.lambda.unwrap_or(0.0));
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if r.score.is_nan() {
            return Err(HarnessError::Metric(format!("score of row {i} is NaN")));
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let (rb, kb, ki) = (&rows[b], key(&rows[b]), key(r));
                let better = r.score > rb.score || (r.score == rb.score && ki.partial_cmp(&kb) == Some(std::cmp::Ordering::Less));
                Some(if better { i } else { b })
            }
        };
    }
    best.ok_or_else(|| HarnessError::Config("sweep grid is empty".into()))
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<LeaderboardRow>,
    pub best: usize,
    pub params: NamedParamMap,
}

impl SweepOutcome {
    pub fn best_point(&self) -> SweepPoint {
        self.rows[self.best].point
    }

    /// `alpha,beta,lambda,score,<metrics…>` with metric columns in name order.
    pub fn leaderboard_csv(&self) -> Result<String, HarnessError> {
        let names: Vec<&String> = self.rows[0].report.metrics.keys().collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["alpha".to_string(), "beta".into(), "lambda".into(), "score".into(), "selected".into()];
        header.extend(names.iter().map(|n| n.to_string()));
        w.write_record(&header)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![
                r.point.alpha.to_string(),
                r.point.beta.to_string(),
                r.point.lambda.map(|l| l.to_string()).unwrap_or_default(),
                r.score.to_string(),
                (i == self.best).to_string(),
            ];
            rec.extend(names.iter().map(|n| r.report.get(n).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?).expect("csv is utf-8"))
    }
}

/// Builds and scores every point on the validation split, in parallel, and
/// keeps the parameters of the selected point. The leaderboard keeps grid
/// order.
pub fn sweep<F>(
    lm: &LmConfig,
    points: &[SweepPoint],
    make: F,
    validation: &EvalContext<Validation>,
    objective: Objective,
) -> Result<SweepOutcome, HarnessError>
where
    F: Fn(&SweepPoint) -> Result<NamedParamMap, HarnessError> + Sync,
{
    if points.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()));
    }
    let rows: Vec<LeaderboardRow> = points
        .par_iter()
        .map(|p| {
            let model = LmModel { config: lm.clone(), params: make(p)? };
            let report = validation.evaluate(&model)?;
            Ok(LeaderboardRow { point: *p, score: objective_score(objective, &report)?, report })
        })
        .collect::<Result<_, HarnessError>>()?;
    let best = select_best(&rows)?;
    let params = make(&rows[best].point)?;
    Ok(SweepOutcome { rows, best, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alpha: f64, beta: f64, score: f64) -> LeaderboardRow {
        LeaderboardRow { point: SweepPoint { alpha, beta, lambda: None }, score, report: EvalReport::default() }
    }

    #[test]
    fn paper_grid_has_eighteen_points() {
        let pts = grid_points(&SweepGrid::default(), false).unwrap();
        assert_eq!(pts.len(), 18);
        assert_eq!(pts[0], SweepPoint { alpha: 0.5, beta: 0.5, lambda: None });
        assert_eq!(grid_points(&SweepGrid::default(), true).unwrap().len(), 1);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let g = SweepGrid { alphas: vec![], ..SweepGrid::default() };
        assert!(matches!(grid_points(&g, false), Err(HarnessError::Config(_))));
        assert!(select_best(&[]).is_err());
    }

    #[test]
    fn single_point_selected() {
        assert_eq!(select_best(&[row(3.0, 1.5, 1.0)]).unwrap(), 0);
    }

    #[test]
    fn dominant_point_selected() {
        let rows = vec![row(0.5, 0.5, 1.01), row(1.0, 0.5, 1.12), row(1.5, 1.0, 1.05)];
        assert_eq!(select_best(&rows).unwrap(), 1);
    }

    #[test]
    fn ties_prefer_smaller_alpha_then_beta() {
        let rows = vec![row(1.0, 0.5, 1.1), row(0.75, 1.5, 1.1), row(0.75, 1.0, 1.1), row(0.5, 0.5, 1.0)];
        assert_eq!(select_best(&rows).unwrap(), 2);
        assert!(select_best(&[row(1.0, 1.0, f64::NAN)]).is_err());
    }
}
