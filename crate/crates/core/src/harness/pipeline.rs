use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, StageConfig};
use super::data::stage_examples;
use super::HarnessError;
use crate::ckpt::{load, save, CheckpointRecord, Ledger, LedgerEntry};
use crate::lm::{build_model, LmModel};
use crate::params::NamedParamMap;
use crate::synthbench::Bench;
use crate::train::{examples_hash, finetune, sha256_hex, RunManifest, StageInfo, TrainOutput};
use crate::unlearn::CheckpointRef;

/// `SOURCE_DATE_EPOCH` when set, else 0, so artifacts do not depend on the
/// wall clock.
pub fn created_at() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

/// Hash of parameter names, shapes and little-endian values.
pub fn params_sha256(p: &NamedParamMap) -> String {
    let mut h = Sha256::new();
    for (name, t) in p.iter() {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((t.shape().len() as u64).to_le_bytes());
        for d in t.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Finished stages keyed by a fingerprint of everything that determines
/// them, so runs sharing a prefix train it once.
#[derive(Default)]
pub struct StageCache {
    done: Mutex<BTreeMap<String, Arc<TrainOutput>>>,
}

impl StageCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.done.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The state after a sequence of stages.
#[derive(Clone, Debug)]
pub struct StageChain {
    pub run_id: String,
    pub params: NamedParamMap,
    /// Every checkpoint in order, each paired with its stage index.
    pub checkpoints: Vec<(usize, CheckpointRecord)>,
    pub manifests: Vec<RunManifest>,
    pub tokens_seen: u64,
    pub steps: u64,
    pub fingerprint: String,
}

impl StageChain {
    pub fn start(cfg: &ExperimentConfig, run_id: &str) -> Result<Self, HarnessError> {
        let model = build_model(&cfg.model).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(StageChain {
            run_id: run_id.into(),
            params: model.params,
            checkpoints: Vec::new(),
            manifests: Vec::new(),
            tokens_seen: 0,
            steps: 0,
            fingerprint: sha256_hex(serde_json::to_string(&cfg.model).expect("config serializes").as_bytes()),
        })
    }

    /// Runs one stage; `drop_forget` trains the ideal variant.
    pub fn run_stage(
        &mut self,
        cfg: &ExperimentConfig,
        bench: &Bench,
        index: usize,
        stage: &StageConfig,
        drop_forget: bool,
        cache: &StageCache,
    ) -> Result<(), HarnessError> {
        let data = stage_examples(bench, stage, drop_forget);
        let data_sha256 = examples_hash(&data);
        let key = sha256_hex(
            format!("{}|{}|{}|{data_sha256}", self.fingerprint, stage.stage_tag, serde_json::to_string(&stage.train).expect("config serializes"))
                .as_bytes(),
        );
        let cached = cache.done.lock().expect("cache lock").get(&key).cloned();
        let out = match cached {
            Some(out) => out,
            None => {
                let info = StageInfo {
                    run_id: String::new(),
                    stage_tag: stage.stage_tag.clone(),
                    tokens_offset: self.tokens_seen,
                    step_offset: self.steps,
                    created_at: created_at(),
                };
                let out = finetune(&cfg.model, &self.params, &data, &stage.train, &info)
                    .map_err(|e| HarnessError::Stage { stage_tag: stage.stage_tag.clone(), source: Box::new(e) })?;
                let out = Arc::new(out);
                cache.done.lock().expect("cache lock").insert(key.clone(), out.clone());
                out
            }
        };
        self.manifests.push(RunManifest {
            run_id: self.run_id.clone(),
            stage_tag: stage.stage_tag.clone(),
            model: cfg.model.clone(),
            train: stage.train.clone(),
            data_sha256,
            start_sha256: params_sha256(&self.params),
            final_sha256: params_sha256(&out.params),
            tokens_seen: out.tokens_seen,
            steps: self.steps + out.steps,
        });
        for c in &out.checkpoints {
            let mut c = c.clone();
            c.meta.run_id = self.run_id.clone();
            self.checkpoints.push((index, c));
        }
        self.params = out.params.clone();
        self.tokens_seen = out.tokens_seen;
        self.steps += out.steps;
        self.fingerprint = key;
        Ok(())
    }

    /// Continues under a new run id, keeping the history.
    pub fn fork(&self, run_id: &str) -> Self {
        let mut c = self.clone();
        c.run_id = run_id.into();
        for (_, r) in &mut c.checkpoints {
            r.meta.run_id = run_id.into();
        }
        for m in &mut c.manifests {
            m.run_id = run_id.into();
        }
        c
    }

    pub fn model(&self, cfg: &ExperimentConfig) -> LmModel {
        LmModel { config: cfg.model.clone(), params: self.params.clone() }
    }

    /// Ledger over all checkpoints with stage index below `before_stage`.
    pub fn ledger_before(&self, before_stage: usize) -> Ledger {
        let mut l = Ledger::new();
        for (i, c) in &self.checkpoints {
            if *i < before_stage {
                l.push(ledger_entry(c)).expect("checkpoints are in token order");
            }
        }
        l
    }

    /// Writes checkpoints, `ledger.jsonl` and `chain.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut ledger = Ledger::new();
        for (_, c) in &self.checkpoints {
            let e = ledger_entry(c);
            save(c, &dir.join(&e.path))?;
            ledger.push(e)?;
        }
        ledger.write(&dir.join("ledger.jsonl"))?;
        let state = ChainState {
            run_id: self.run_id.clone(),
            stages: self.checkpoints.iter().map(|(i, _)| *i).collect(),
            manifests: self.manifests.clone(),
            tokens_seen: self.tokens_seen,
            steps: self.steps,
            fingerprint: self.fingerprint.clone(),
        };
        std::fs::write(dir.join("chain.json"), serde_json::to_string_pretty(&state)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let state: ChainState = serde_json::from_str(&std::fs::read_to_string(dir.join("chain.json"))?)?;
        let ledger = Ledger::read(&dir.join("ledger.jsonl"))?;
        if ledger.len() != state.stages.len() || ledger.is_empty() {
            return Err(HarnessError::Runtime(format!("{}: ledger and chain disagree", dir.display())));
        }
        let mut checkpoints = Vec::new();
        for (e, &i) in ledger.entries().iter().zip(&state.stages) {
            checkpoints.push((i, load(&crate::ckpt::resolve(dir, e))?));
        }
        let params = checkpoints.last().expect("non-empty").1.params.clone();
        Ok(StageChain {
            run_id: state.run_id,
            params,
            checkpoints,
            manifests: state.manifests,
            tokens_seen: state.tokens_seen,
            steps: state.steps,
            fingerprint: state.fingerprint,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ChainState {
    run_id: String,
    stages: Vec<usize>,
    manifests: Vec<RunManifest>,
    tokens_seen: u64,
    steps: u64,
    fingerprint: String,
}

fn ledger_entry(c: &CheckpointRecord) -> LedgerEntry {
    LedgerEntry {
        path: format!("ckpt-{}-{:012}.msck", c.meta.stage_tag, c.meta.tokens_seen),
        tokens_seen: c.meta.tokens_seen,
        step: c.meta.step,
        stage_tag: c.meta.stage_tag.clone(),
        run_id: c.meta.run_id.clone(),
    }
}

pub fn run_pretrain(cfg: &ExperimentConfig, bench: &Bench, cache: &StageCache) -> Result<StageChain, HarnessError> {
    let mut chain = StageChain::start(cfg, "pretrain")?;
    for (i, s) in cfg.pretrain.iter().enumerate() {
        chain.run_stage(cfg, bench, i, s, false, cache)?;
    }
    Ok(chain)
}

/// Target and ideal chains continuing from the pretrained chain.
pub fn run_finetune(
    cfg: &ExperimentConfig,
    bench: &Bench,
    pretrained: &StageChain,
    cache: &StageCache,
) -> Result<(StageChain, StageChain), HarnessError> {
    let mut target = pretrained.fork("target");
    let mut ideal = pretrained.fork("ideal");
    let offset = cfg.pretrain.len();
    for (i, s) in cfg.finetune.iter().enumerate() {
        target.run_stage(cfg, bench, offset + i, s, false, cache)?;
        ideal.run_stage(cfg, bench, offset + i, s, true, cache)?;
    }
    Ok((target, ideal))
}

/// Index (over all stages) of the first stage containing forget data.
pub fn forget_stage(cfg: &ExperimentConfig) -> Option<usize> {
    cfg.stages().position(|s| s.data.iter().any(|d| d.is_forget()))
}

/// Per-run summary written as `pipeline.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub name: String,
    pub seed: u64,
    pub config_sha256: String,
    pub bench_sha256: String,
    pub forget_stage: Option<String>,
    pub target: Vec<RunManifest>,
    pub ideal: Vec<RunManifest>,
    pub target_final: String,
    pub ideal_final: String,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub config: ExperimentConfig,
    pub bench: Bench,
    pub target: StageChain,
    pub ideal: StageChain,
}

pub fn bench_sha256(bench: &Bench) -> String {
    sha256_hex(serde_json::to_string(bench).expect("bench serializes").as_bytes())
}

pub fn run_pipeline(cfg: &ExperimentConfig, cache: &StageCache) -> Result<PipelineRun, HarnessError> {
    cfg.validate()?;
    let bench = Bench::generate(&cfg.bench).map_err(|e| HarnessError::Config(e.to_string()))?;
    let pre = run_pretrain(cfg, &bench, cache)?;
    let (target, ideal) = run_finetune(cfg, &bench, &pre, cache)?;
    Ok(PipelineRun { config: cfg.clone(), bench, target, ideal })
}

impl PipelineRun {
    pub fn forget_stage(&self) -> usize {
        forget_stage(&self.config).unwrap_or(self.config.pretrain.len())
    }

    /// Checkpoints taken strictly before the first forget stage.
    pub fn pre_forget_ledger(&self) -> Ledger {
        self.target.ledger_before(self.forget_stage())
    }

    /// Resolves a checkpoint reference among the pre-forget checkpoints.
    /// Paths are read relative to `base_dir`.
    pub fn checkpoint(&self, r: &CheckpointRef, base_dir: &Path) -> Result<CheckpointRecord, HarnessError> {
        match r {
            CheckpointRef::TokensAtMost(t) => {
                let entry = self.pre_forget_ledger().query(*t)?.clone();
                let (_, rec) = self
                    .target
                    .checkpoints
                    .iter()
                    .find(|(_, c)| c.meta.tokens_seen == entry.tokens_seen && c.meta.stage_tag == entry.stage_tag)
                    .expect("ledger built from these checkpoints");
                Ok(rec.clone())
            }
            CheckpointRef::Path(_) => Ok(r.resolve(&Ledger::new(), base_dir)?),
        }
    }

    pub fn target_model(&self) -> LmModel {
        self.target.model(&self.config)
    }

    pub fn ideal_model(&self) -> LmModel {
        self.ideal.model(&self.config)
    }

    pub fn manifest(&self) -> PipelineManifest {
        let last = |c: &StageChain| ledger_entry(&c.checkpoints.last().expect("at least one stage").1).path;
        PipelineManifest {
            name: self.config.name.clone(),
            seed: self.config.seed,
            config_sha256: sha256_hex(self.config.to_json().as_bytes()),
            bench_sha256: bench_sha256(&self.bench),
            forget_stage: forget_stage(&self.config).map(|i| self.config.stages().nth(i).expect("index in range").stage_tag.clone()),
            target: self.target.manifests.clone(),
            ideal: self.ideal.manifests.clone(),
            target_final: format!("target/{}", last(&self.target)),
            ideal_final: format!("ideal/{}", last(&self.ideal)),
        }
    }

    /// Writes `target/`, `ideal/` and `pipeline.json` under `out`.
    pub fn write(&self, out: &Path) -> Result<PathBuf, HarnessError> {
        self.target.write(&out.join("target"))?;
        self.ideal.write(&out.join("ideal"))?;
        let p = out.join("pipeline.json");
        std::fs::write(&p, serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(p)
    }

    /// Reads a run written by [`PipelineRun::write`]; the benchmark is
    /// regenerated from `cfg` and must match the recorded hash.
    pub fn read(cfg: &ExperimentConfig, out: &Path) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let bench = Bench::generate(&cfg.bench).map_err(|e| HarnessError::Config(e.to_string()))?;
        let manifest: PipelineManifest = serde_json::from_str(&std::fs::read_to_string(out.join("pipeline.json"))?)?;
        if manifest.bench_sha256 != bench_sha256(&bench) || manifest.config_sha256 != sha256_hex(cfg.to_json().as_bytes()) {
            return Err(HarnessError::Runtime(format!("{}: written by a different config", out.display())));
        }
        let target = StageChain::read(&out.join("target"))?;
        let ideal = StageChain::read(&out.join("ideal"))?;
        Ok(PipelineRun { config: cfg.clone(), bench, target, ideal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Preset;
    use crate::synthbench::BenchSpec;
    use crate::train::TrainError;

    pub(crate) fn tiny(forget_fraction: f64) -> ExperimentConfig {
        let mut c = Preset::Tofu.config(0);
        c.bench = BenchSpec { n_entities: 10, forget_fraction, filler_tokens: 200, background_entities: 2, utility_facts: 2, ..BenchSpec::default() };
        c.model = crate::lm::LmConfig { d_model: 8, n_heads: 2, d_ff: 16, n_layers: 1, max_seq_len: 128, ..Default::default() };
        for s in c.pretrain.iter_mut().chain(c.finetune.iter_mut()) {
            s.train.epochs = 1;
            s.train.checkpoint_every_tokens = 0;
            for d in &mut s.data {
                d.repeat = 1;
            }
        }
        c.pretrain[1].train.epochs = 2;
        c.pretrain[1].train.checkpoint_every_tokens = 300;
        c
    }

    #[test]
    fn zero_forget_fraction_gives_identical_models() {
        let cache = StageCache::new();
        let run = run_pipeline(&tiny(0.0), &cache).unwrap();
        assert!(run.target.params.bit_eq(&run.ideal.params));
    }

    #[test]
    fn checkpoints_precede_forget_stage() {
        let cache = StageCache::new();
        let run = run_pipeline(&tiny(0.1), &cache).unwrap();
        assert!(!run.target.params.bit_eq(&run.ideal.params));
        let pre = run.pre_forget_ledger();
        assert!(pre.len() >= 2);
        assert!(pre.entries().iter().all(|e| e.stage_tag != "tofu"));
        let c = run.checkpoint(&CheckpointRef::TokensAtMost(u64::MAX), Path::new(".")).unwrap();
        assert_eq!(c.meta.stage_tag, "background");
        // the ideal run shares the pretrain stages through the cache
        assert_eq!(cache.len(), 4);
        assert_eq!(run.target.manifests[..2], run.ideal.fork("target").manifests[..2]);
    }

    #[test]
    fn repeated_exposure_records_three_finetune_tags() {
        let mut c = tiny(0.1);
        let p = Preset::TofuC4Tofu.config(0);
        c.finetune = p.finetune;
        for s in &mut c.finetune {
            s.train.epochs = 1;
        }
        let run = run_pipeline(&c, &StageCache::new()).unwrap();
        let tags: Vec<&str> = run.target.manifests[c.pretrain.len()..].iter().map(|m| m.stage_tag.as_str()).collect();
        assert_eq!(tags, ["tofu", "c4", "tofu_again"]);
        assert_eq!(run.manifest().forget_stage.as_deref(), Some("tofu"));
    }

    #[test]
    fn stage_failure_names_the_stage() {
        // filler documents do not fit in 30 positions
        let mut c = tiny(0.1);
        c.model.max_seq_len = 30;
        match run_pipeline(&c, &StageCache::new()) {
            Err(HarnessError::Stage { stage_tag, source }) => {
                assert_eq!(stage_tag, "pretrain");
                assert!(matches!(*source, TrainError::Lm(_)));
            }
            other => panic!("expected a stage error, got {other:?}"),
        }
    }

    #[test]
    fn chains_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_pipeline(&tiny(0.1), &StageCache::new()).unwrap();
        run.write(dir.path()).unwrap();
        let back = StageChain::read(&dir.path().join("target")).unwrap();
        assert!(back.params.bit_eq(&run.target.params));
        assert_eq!(back.manifests, run.target.manifests);
        assert_eq!(back.checkpoints.len(), run.target.checkpoints.len());
        let m: PipelineManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("pipeline.json")).unwrap()).unwrap();
        assert!(dir.path().join(&m.target_final).exists());
        let again = PipelineRun::read(&run.config, dir.path()).unwrap();
        assert!(again.ideal.params.bit_eq(&run.ideal.params));
        let mut other = run.config.clone();
        other.name = "other".into();
        assert!(matches!(PipelineRun::read(&other, dir.path()), Err(HarnessError::Runtime(_))));
    }
}
