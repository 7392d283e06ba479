//! Experiment orchestration: pipelines, evaluation splits, sweeps and
//! ratio-to-ideal reports.

mod config;
mod data;
mod eval;
mod pipeline;
mod scores;
mod split;
mod sweep;
mod table;

pub use config::{
    DataRef, EvalConfig, ExperimentConfig, Objective, Preset, Source, SplitConfig, StageConfig, SweepGrid, UnlearnConfig,
};
pub use data::{corrupted_qa, examples, forget_examples, retain_examples, stage_examples};
pub use eval::{answers, eval_items, EvalContext};
pub use pipeline::{
    bench_sha256, created_at, forget_stage, params_sha256, run_finetune, run_pipeline, run_pretrain, PipelineManifest,
    PipelineRun, StageCache, StageChain,
};
pub use scores::{objective_score, validation_score_muse, validation_score_tofu, MuseScoreInputs, TofuScoreInputs};
pub use split::{split_eval, validation_count, QaSplit, Test, Validation};
pub use sweep::{grid_points, select_best, sweep, LeaderboardRow, SweepOutcome, SweepPoint};
pub use table::{direction, format_ratio, ratio, ratio_table, Direction, RatioTable, ReportRow, RowKind};

use std::path::Path;

use crate::ckpt::CkptError;
use crate::metrics::{EvalReport, MetricError};
use crate::params::NamedParamMap;
use crate::train::{Example, TrainConfig, TrainError};
use crate::unlearn::{
    lift_update, msa_apply, msa_vectors, run_baseline, Baseline, BaselineConfig, MsaConfig, MsaVectors, UnlearnError,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage_tag} failed: {source}")]
    Stage { stage_tag: String, source: Box<TrainError> },
    #[error("{0}")]
    Runtime(String),
    #[error("metric: {0}")]
    Metric(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Unlearn(#[from] UnlearnError),
    #[error(transparent)]
    Ckpt(#[from] CkptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

impl From<MetricError> for HarnessError {
    fn from(e: MetricError) -> Self {
        HarnessError::Metric(e.to_string())
    }
}

/// A finished pipeline with its evaluation splits and unlearning data.
pub struct Experiment<'a> {
    pub run: &'a PipelineRun,
    pub validation: EvalContext<Validation>,
    pub test: EvalContext<Test>,
    pub d_f: Vec<Example>,
    pub d_r: Vec<Example>,
}

impl<'a> Experiment<'a> {
    pub fn new(run: &'a PipelineRun) -> Result<Self, HarnessError> {
        let cfg = &run.config;
        let restore = cfg.eval.objective == Objective::Restore;
        let (v, t) = split_eval(&eval_items(&run.bench, restore), cfg.split.validation_fraction, cfg.seed)?;
        let ideal = run.ideal_model();
        let d_f = forget_examples(&run.bench, &cfg.finetune);
        if d_f.is_empty() {
            return Err(HarnessError::Config("no forget data in the finetune stages".into()));
        }
        Ok(Experiment {
            run,
            validation: EvalContext::new(&v, &run.bench, &ideal, &cfg.eval, cfg.seed)?,
            test: EvalContext::new(&t, &run.bench, &ideal, &cfg.eval, cfg.seed)?,
            d_f,
            d_r: retain_examples(&run.bench, restore),
        })
    }

    fn lm(&self) -> &crate::lm::LmConfig {
        &self.run.config.model
    }

    /// Forget and retain vectors from the checkpoint `cfg` refers to.
    pub fn msa_vectors(&self, cfg: &MsaConfig, base_dir: &Path) -> Result<MsaVectors, HarnessError> {
        let c = self.run.checkpoint(&cfg.checkpoint_ref, base_dir)?;
        Ok(msa_vectors(self.lm(), &c.params, &self.d_f, Some(&self.d_r), cfg)?)
    }

    /// `finetune(θ_D, D_f) − θ_D`, for task-vector negation.
    pub fn task_vector(&self, ft: &TrainConfig) -> Result<MsaVectors, HarnessError> {
        let cfg = MsaConfig { ft: ft.clone(), ..MsaConfig::default() };
        Ok(msa_vectors(self.lm(), &self.run.target.params, &self.d_f, None, &cfg)?)
    }

    pub fn apply(&self, v: &MsaVectors, alpha: f64, beta: f64) -> Result<NamedParamMap, HarnessError> {
        Ok(msa_apply(&self.run.target.params, v, alpha, beta)?)
    }

    /// Sweeps `θ_D − α·θ_f + β·θ_r` over `alphas × betas`.
    pub fn sweep_vectors(&self, v: &MsaVectors, grid: &SweepGrid) -> Result<SweepOutcome, HarnessError> {
        let points = grid_points(grid, false)?;
        sweep(self.lm(), &points, |p| self.apply(v, p.alpha, p.beta), &self.validation, self.run.config.eval.objective)
    }

    /// Gradient baselines swept over λ; lifted when `lifted_from` is set.
    pub fn sweep_baseline(&self, cfg: &BaselineConfig, grid: &SweepGrid, base_dir: &Path) -> Result<SweepOutcome, HarnessError> {
        if cfg.algorithm == Baseline::TaskVector {
            return self.sweep_vectors(&self.task_vector(&cfg.train)?, &SweepGrid { betas: vec![0.0], ..grid.clone() });
        }
        let lifted = cfg.lifted_from.as_ref().map(|r| self.run.checkpoint(r, base_dir)).transpose()?;
        let points = grid_points(grid, true)?;
        let make = |p: &SweepPoint| -> Result<NamedParamMap, HarnessError> {
            let c = BaselineConfig { lambda_retain: p.lambda.unwrap_or(cfg.lambda_retain), ..cfg.clone() };
            Ok(match &lifted {
                None => run_baseline(self.lm(), &self.run.target.params, &self.d_f, &self.d_r, &c)?,
                Some(theta_0) => {
                    let theta_1 = run_baseline(self.lm(), &theta_0.params, &self.d_f, &self.d_r, &c)?;
                    lift_update(&self.run.target.params, &theta_0.params, &theta_1, c.lift_alpha)?
                }
            })
        };
        sweep(self.lm(), &points, make, &self.validation, self.run.config.eval.objective)
    }

    /// The configured unlearning method, swept on validation.
    pub fn sweep_configured(&self, base_dir: &Path) -> Result<SweepOutcome, HarnessError> {
        let grid = &self.run.config.sweep;
        match &self.run.config.unlearn {
            UnlearnConfig::Msa(m) => self.sweep_vectors(&self.msa_vectors(m, base_dir)?, grid),
            UnlearnConfig::Baseline(b) => self.sweep_baseline(b, grid, base_dir),
        }
    }

    /// The configured method at its own hyperparameters.
    pub fn unlearn_configured(&self, base_dir: &Path) -> Result<NamedParamMap, HarnessError> {
        match &self.run.config.unlearn {
            UnlearnConfig::Msa(m) => self.apply(&self.msa_vectors(m, base_dir)?, m.alpha, m.beta),
            UnlearnConfig::Baseline(b) if b.algorithm == Baseline::TaskVector => self.apply(&self.task_vector(&b.train)?, b.alpha, 0.0),
            UnlearnConfig::Baseline(b) => {
                let grid = SweepGrid { lambdas: vec![b.lambda_retain], ..SweepGrid::default() };
                Ok(self.sweep_baseline(b, &grid, base_dir)?.params)
            }
        }
    }

    pub fn test_report(&self, params: &NamedParamMap) -> Result<EvalReport, HarnessError> {
        let model = crate::lm::LmModel { config: self.lm().clone(), params: params.clone() };
        let mut r = self.test.evaluate(&model)?;
        r.seeds.push(self.run.config.seed);
        r.models.insert("params_sha256".into(), params_sha256(params));
        Ok(r)
    }
}
