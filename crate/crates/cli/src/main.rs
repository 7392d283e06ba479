use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msalab_core::ckpt::{load, save, CheckpointMeta, CheckpointRecord};
use msalab_core::harness::{
    corrupted_qa, created_at, params_sha256, ratio_table, run_finetune, run_pretrain, Experiment, ExperimentConfig,
    HarnessError, PipelineRun, ReportRow, RowKind, StageCache, StageChain, UnlearnConfig,
};
use msalab_core::metrics::EvalReport;
use msalab_core::params::NamedParamMap;
use msalab_core::synthbench::{write_jsonl, Bench};

#[derive(Parser)]
#[command(name = "msalab", version, about = "Unlearning experiments on tiny language models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the benchmark as JSONL under <out>/bench.
    Gen(Args),
    /// Run the pretraining stages into <out>/pretrain.
    Pretrain(Args),
    /// Run the finetuning stages for the target and ideal models.
    Finetune(Args),
    /// Apply the configured unlearning method at its own hyperparameters.
    Unlearn(Args),
    /// Evaluate target, ideal and unlearned models on the test split.
    Eval(Args),
    /// Sweep the configured method on the validation split.
    Sweep(Args),
    /// Build the ratio-to-ideal table from earlier reports.
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config and every seed derived from it.
    #[arg(long)]
    seed: Option<u64>,
}

impl Args {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::read(&self.config)?;
        if let Some(s) = self.seed {
            cfg.reseed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bench(cfg: &ExperimentConfig) -> Result<Bench, HarnessError> {
    Bench::generate(&cfg.bench).map_err(|e| HarnessError::Config(e.to_string()))
}

fn runtime<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

fn method_name(cfg: &ExperimentConfig) -> String {
    match &cfg.unlearn {
        UnlearnConfig::Msa(_) => "msa".into(),
        UnlearnConfig::Baseline(b) => serde_json::to_value(b.algorithm).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_else(|| "baseline".into()),
    }
}

fn save_model(run: &PipelineRun, params: &NamedParamMap, tag: &str, path: &Path) -> Result<(), HarnessError> {
    let rec = CheckpointRecord {
        params: params.clone(),
        meta: CheckpointMeta {
            tokens_seen: run.target.tokens_seen,
            step: run.target.steps,
            run_id: run.config.name.clone(),
            stage_tag: tag.into(),
            created_at: created_at(),
        },
    };
    std::fs::create_dir_all(path.parent().expect("file path has a parent"))?;
    Ok(save(&rec, path)?)
}

fn write_report(r: &EvalReport, dir: &Path) -> Result<(), HarnessError> {
    r.write(dir)?;
    std::fs::write(dir.join("report.md"), r.to_markdown())?;
    Ok(())
}

fn read_report(path: &Path) -> Result<Option<EvalReport>, HarnessError> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(EvalReport::from_json(&std::fs::read_to_string(path)?)?))
}

fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let b = bench(cfg)?;
    let dir = out.join("bench");
    b.write_jsonl(&dir).map_err(runtime)?;
    write_jsonl(&dir.join("corrupted_qa.jsonl"), &corrupted_qa(&b)).map_err(runtime)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn pretrain(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let chain = run_pretrain(cfg, &bench(cfg)?, &StageCache::new())?;
    chain.write(&out.join("pretrain"))
}

fn finetune(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let b = bench(cfg)?;
    let pre = StageChain::read(&out.join("pretrain"))
        .map_err(|e| HarnessError::Runtime(format!("reading pretrain chain (run `msalab pretrain` first): {e}")))?;
    let (target, ideal) = run_finetune(cfg, &b, &pre, &StageCache::new())?;
    PipelineRun { config: cfg.clone(), bench: b, target, ideal }.write(out)?;
    Ok(())
}

fn unlearn(run: &PipelineRun, out: &Path) -> Result<(), HarnessError> {
    let exp = Experiment::new(run)?;
    let params = exp.unlearn_configured(out)?;
    let dir = out.join("unlearn");
    save_model(run, &params, "unlearn", &dir.join("model.msck"))?;
    let manifest = serde_json::json!({
        "method": method_name(&run.config),
        "unlearn": run.config.unlearn,
        "target_sha256": params_sha256(&run.target.params),
        "params_sha256": params_sha256(&params),
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn eval(run: &PipelineRun, out: &Path) -> Result<(), HarnessError> {
    let exp = Experiment::new(run)?;
    let mut models = vec![("target", run.target.params.clone()), ("ideal", run.ideal.params.clone())];
    let unlearned = out.join("unlearn").join("model.msck");
    if unlearned.exists() {
        models.push(("unlearn", load(&unlearned)?.params));
    }
    for (name, params) in models {
        write_report(&exp.test_report(&params)?, &out.join("eval").join(name))?;
    }
    Ok(())
}

fn sweep(run: &PipelineRun, out: &Path) -> Result<(), HarnessError> {
    let exp = Experiment::new(run)?;
    let outcome = exp.sweep_configured(out)?;
    let dir = out.join("sweep");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("leaderboard.csv"), outcome.leaderboard_csv()?)?;
    save_model(run, &outcome.params, "sweep", &dir.join("best.msck"))?;
    std::fs::write(dir.join("best.json"), serde_json::to_string_pretty(&outcome.best_point())?)?;
    write_report(&exp.test_report(&outcome.params)?, &dir)
}

fn report(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    let method = method_name(cfg);
    let sources = [
        ("ideal".to_string(), RowKind::Ideal, out.join("eval/ideal/report.json")),
        ("target".to_string(), RowKind::Target, out.join("eval/target/report.json")),
        (method.clone(), RowKind::Method, out.join("eval/unlearn/report.json")),
        (format!("{method} (swept)"), RowKind::Method, out.join("sweep/report.json")),
    ];
    let mut rows = Vec::new();
    for (label, kind, path) in sources {
        if let Some(report) = read_report(&path)? {
            rows.push(ReportRow { label, kind, report });
        }
    }
    let table = ratio_table(&rows)?;
    let dir = out.join("report");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("table.csv"), table.to_csv()?)?;
    std::fs::write(dir.join("table.md"), table.to_markdown())?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let (args, verb): (&Args, &str) = match &cli.cmd {
        Cmd::Gen(a) => (a, "gen"),
        Cmd::Pretrain(a) => (a, "pretrain"),
        Cmd::Finetune(a) => (a, "finetune"),
        Cmd::Unlearn(a) => (a, "unlearn"),
        Cmd::Eval(a) => (a, "eval"),
        Cmd::Sweep(a) => (a, "sweep"),
        Cmd::Report(a) => (a, "report"),
    };
    let cfg = args.load()?;
    let out = args.out.as_path();
    std::fs::create_dir_all(out)?;
    match verb {
        "gen" => gen(&cfg, out),
        "pretrain" => pretrain(&cfg, out),
        "finetune" => finetune(&cfg, out),
        "report" => report(&cfg, out),
        _ => {
            let run = PipelineRun::read(&cfg, out)
                .map_err(|e| HarnessError::Runtime(format!("reading pipeline (run `msalab finetune` first): {e}")))?;
            match verb {
                "unlearn" => unlearn(&run, out),
                "eval" => eval(&run, out),
                _ => sweep(&run, out),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
