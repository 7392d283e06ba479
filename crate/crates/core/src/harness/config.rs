use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::lm::LmConfig;
use crate::metrics::{DEFAULT_JUDGE_THRESHOLD, DEFAULT_K_PERCENT, DEFAULT_PREFIX_FRACTION};
use crate::synthbench::{BenchSpec, SplitTag};
use crate::train::TrainConfig;
use crate::unlearn::{BaselineConfig, MsaConfig};

/// Where the examples of a stage come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Filler,
    /// Fact documents, trained on every token.
    Documents,
    /// QA items, trained on the answer only.
    Qa,
    /// QA items of the corruption targets with corrupted answers.
    CorruptedQa,
}

/// One slice of the benchmark, repeated `repeat` times within an epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRef {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<SplitTag>,
    #[serde(default = "one")]
    pub repeat: usize,
}

fn one() -> usize {
    1
}

impl DataRef {
    pub fn new(source: Source, tag: Option<SplitTag>, repeat: usize) -> Self {
        DataRef { source, tag, repeat }
    }

    pub fn qa(tag: SplitTag) -> Self {
        DataRef::new(Source::Qa, Some(tag), 1)
    }

    /// Data the ideal model never sees.
    pub fn is_forget(&self) -> bool {
        self.source == Source::CorruptedQa || self.tag == Some(SplitTag::Forget)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage_tag: String,
    pub data: Vec<DataRef>,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum UnlearnConfig {
    Msa(MsaConfig),
    Baseline(BaselineConfig),
}

/// What the sweep maximizes on the validation split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Tofu,
    Muse,
    /// Truth accuracy on corrupted entities.
    Restore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_percent: f64,
    pub prefix_fraction: f64,
    pub judge_threshold: f64,
    pub objective: Objective,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_percent: DEFAULT_K_PERCENT,
            prefix_fraction: DEFAULT_PREFIX_FRACTION,
            judge_threshold: DEFAULT_JUDGE_THRESHOLD,
            objective: Objective::Tofu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub validation_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { validation_fraction: 0.15 }
    }
}

/// MSA and task-vector sweeps use `alphas × betas`; gradient baselines
/// sweep `lambdas`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { alphas: vec![0.5, 0.75, 1.0, 1.25, 1.5, 3.0], betas: vec![0.5, 1.0, 1.5], lambdas: vec![1.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub bench: BenchSpec,
    pub model: LmConfig,
    /// Stages before any exposure to the forget data.
    pub pretrain: Vec<StageConfig>,
    /// Stages producing the target; the ideal model runs them without the
    /// forget data.
    pub finetune: Vec<StageConfig>,
    pub unlearn: UnlearnConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub sweep: SweepGrid,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn stages(&self) -> impl Iterator<Item = &StageConfig> {
        self.pretrain.iter().chain(&self.finetune)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        let mut tags = BTreeSet::new();
        for s in self.stages() {
            if s.stage_tag.is_empty() || !tags.insert(s.stage_tag.as_str()) {
                return fail(format!("stage tag {:?} is empty or repeated", s.stage_tag));
            }
            if s.data.is_empty() || s.data.iter().any(|d| d.repeat == 0) {
                return fail(format!("stage {} has no data", s.stage_tag));
            }
            s.train.validate().map_err(|e| HarnessError::Config(format!("stage {}: {e}", s.stage_tag)))?;
        }
        if self.finetune.is_empty() {
            return fail("at least one finetune stage is required".into());
        }
        if self.pretrain.iter().flat_map(|s| &s.data).any(DataRef::is_forget) {
            return fail("pretrain stages may not contain forget data".into());
        }
        let f = self.split.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return fail(format!("validation_fraction {f} outside (0, 1)"));
        }
        let e = &self.eval;
        if !(e.k_percent > 0.0 && e.k_percent <= 100.0) || !(e.prefix_fraction > 0.0 && e.prefix_fraction < 1.0) {
            return fail("eval k_percent or prefix_fraction out of range".into());
        }
        self.bench.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.unlearn {
            UnlearnConfig::Msa(m) => m.validate(),
            UnlearnConfig::Baseline(b) => b.validate(),
        }
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Sets the run seed and every seed derived from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.bench.seed = seed;
        self.model.seed = seed;
        for s in self.pretrain.iter_mut().chain(self.finetune.iter_mut()) {
            s.train.seed = seed;
        }
        match &mut self.unlearn {
            UnlearnConfig::Msa(m) => {
                m.ft.seed = seed;
                if let Some(r) = &mut m.retain_ft {
                    r.seed = seed;
                }
                m.retain_seed = seed;
            }
            UnlearnConfig::Baseline(b) => {
                b.train.seed = seed;
                b.retain_seed = seed;
            }
        }
    }
}

/// Named pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Tofu,
    TofuC4,
    TofuC4Tofu,
    Restor,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Tofu, Preset::TofuC4, Preset::TofuC4Tofu, Preset::Restor];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tofu => "tofu",
            Preset::TofuC4 => "tofu_c4",
            Preset::TofuC4Tofu => "tofu_c4_tofu",
            Preset::Restor => "restor",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn config(self, seed: u64) -> ExperimentConfig {
        let fact_train = TrainConfig {
            learning_rate: 3e-4,
            weight_decay: 0.01,
            epochs: 20,
            warmup_epochs: 1,
            batch_size: 1,
            seed,
            checkpoint_every_tokens: 0,
            grad_clip_norm: Some(1.0),
        };
        let tofu = StageConfig {
            stage_tag: "tofu".into(),
            data: vec![DataRef::qa(SplitTag::Forget), DataRef::qa(SplitTag::Retain), DataRef::qa(SplitTag::Utility)],
            train: fact_train.clone(),
        };
        let c4 = StageConfig {
            stage_tag: "c4".into(),
            data: vec![DataRef::new(Source::Filler, None, 1), DataRef::qa(SplitTag::Utility)],
            train: TrainConfig { epochs: 1, ..fact_train.clone() },
        };
        let mut bench = BenchSpec {
            seed,
            n_entities: 64,
            forget_fraction: 0.10,
            filler_tokens: 20_000,
            background_entities: 40,
            values_per_kind: 32,
            ..BenchSpec::default()
        };
        let finetune = match self {
            Preset::Tofu => vec![tofu],
            Preset::TofuC4 => vec![tofu, c4],
            Preset::TofuC4Tofu => {
                let again = StageConfig { stage_tag: "tofu_again".into(), train: TrainConfig { epochs: 5, ..fact_train.clone() }, ..tofu.clone() };
                vec![tofu, c4, again]
            }
            Preset::Restor => {
                bench.forget_fraction = 0.0;
                let facts = StageConfig {
                    stage_tag: "facts".into(),
                    data: vec![DataRef::qa(SplitTag::Retain), DataRef::qa(SplitTag::Utility)],
                    train: fact_train.clone(),
                };
                let corrupt = StageConfig {
                    stage_tag: "corrupt".into(),
                    data: vec![DataRef::new(Source::CorruptedQa, None, 1), DataRef::qa(SplitTag::Utility)],
                    train: TrainConfig { epochs: 10, ..fact_train.clone() },
                };
                vec![facts, corrupt]
            }
        };
        let msa = MsaConfig {
            ft: TrainConfig { learning_rate: 3e-4, epochs: 5, warmup_epochs: 1, batch_size: 1, seed, ..TrainConfig::default() },
            retain_seed: seed,
            ..MsaConfig::default()
        };
        ExperimentConfig {
            name: self.name().into(),
            seed,
            bench,
            model: LmConfig { d_model: 128, n_heads: 4, d_ff: 512, n_layers: 1, max_seq_len: 128, seed, ..LmConfig::default() },
            pretrain: vec![
                StageConfig {
                    stage_tag: "pretrain".into(),
                    data: vec![
                        DataRef::new(Source::Filler, None, 1),
                        DataRef::new(Source::Documents, Some(SplitTag::Utility), 40),
                        DataRef::new(Source::Documents, Some(SplitTag::Background), 4),
                    ],
                    train: TrainConfig { learning_rate: 1e-3, epochs: 2, warmup_epochs: 0, ..fact_train.clone() },
                },
                StageConfig {
                    stage_tag: "background".into(),
                    data: vec![DataRef::qa(SplitTag::Background), DataRef::qa(SplitTag::Utility)],
                    train: TrainConfig { epochs: 40, checkpoint_every_tokens: 100_000, ..fact_train.clone() },
                },
            ],
            finetune,
            unlearn: UnlearnConfig::Msa(msa),
            eval: EvalConfig { objective: if self == Preset::Restor { Objective::Restore } else { Objective::Tofu }, ..EvalConfig::default() },
            split: SplitConfig::default(),
            sweep: SweepGrid::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in Preset::ALL {
            let cfg = p.config(3);
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
            assert_eq!(Preset::from_name(p.name()), Some(p));
        }
        assert_eq!(Preset::TofuC4Tofu.config(0).finetune.len(), 3);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = Preset::Tofu.config(0);
        c.finetune[0].stage_tag = "pretrain".into();
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let mut c = Preset::Tofu.config(0);
        c.split.validation_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = Preset::Tofu.config(0);
        c.pretrain[0].data.push(DataRef::qa(SplitTag::Forget));
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
    }

    #[test]
    fn reseed_reaches_every_stage() {
        let mut c = Preset::Tofu.config(0);
        c.reseed(7);
        assert_eq!(c.bench.seed, 7);
        assert!(c.stages().all(|s| s.train.seed == 7));
        assert_eq!(c, Preset::Tofu.config(7));
    }
}
