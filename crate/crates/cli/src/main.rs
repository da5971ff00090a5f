use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use medmam_core::diffcore::{Checkpoint, GradCheck};
use medmam_core::runner::{
    ablate, evaluate, geometry_audit, gradient_suite, train, Arm, GradCase, Metrics, RunConfig, GRAD_TOL,
};
use medmam_core::synth::{generate, load_jsonl, save_jsonl, split, write_jsonl, SynthConfig, SynthSample};
use medmam_core::{Error, Result};
use serde::Serialize;

/// Med-MAM temporal feature alignment on synthetic longitudinal data.
///
/// Exit codes: 0 success, 1 contract or input error (including a failed
/// gradient check), 2 training divergence.
#[derive(Parser)]
#[command(name = "medmam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate data, train, and write the run report.
    Train(TrainArgs),
    /// Score a saved checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train several arms over several seeds and tabulate them.
    Ablate(AblateArgs),
    /// Central finite-difference check of every gradient family.
    Gradcheck(GradcheckArgs),
    /// Compare paper-mode and gyrovector transport on random trials.
    Geomaudit(GeomauditArgs),
    /// Write a synthetic dataset as JSON lines.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the report; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to write the best-validation checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// JSON-lines dataset. When omitted, the checkpoint's own config
    /// regenerates its data and `--split` picks the part to score.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    /// Loss-flag arms: w/o ITC, w/ ITC, w/ ITM, w/ ITC&ITM.
    Objectives,
    /// Fusion arms: x1-x2, concat, medmam-no-manifold, medmam.
    Fusion,
    All,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated arm names; overrides `--suite`.
    #[arg(long, value_delimiter = ',')]
    arms: Vec<String>,
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    /// Comma-separated seeds; each replaces both the data and run seed.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// CSV table path; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write every run report as one JSON document.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Base finite-difference step, scaled by max(1, |x|).
    #[arg(long, default_value_t = medmam_core::diffcore::DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = GRAD_TOL)]
    tolerance: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GeomauditArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Comma-separated curvatures.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1.0")]
    curvatures: Vec<f64>,
    /// Where to write the audit; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Synthetic-data configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Contract(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    emit(path, &serde_json::to_string_pretty(value)?)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg: RunConfig = read_config(a.config.as_deref())?;
    cfg.validate()?;
    let out = train(&cfg)?;
    if let Some(p) = &a.checkpoint {
        out.checkpoint.save(p)?;
    }
    let r = &out.report;
    eprintln!(
        "epochs {} (best {}), test accuracy {:.4}, weighted F1 {:.4}, {:.1}s",
        r.epochs_run, r.best_epoch, r.test.accuracy, r.test.weighted_f1, r.wall_time_secs
    );
    emit_json(a.report.as_deref(), r)
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    data: String,
    samples: usize,
    metrics: Metrics,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let (data, source): (Vec<SynthSample>, String) = match &a.data {
        Some(p) => (load_jsonl(p)?, p.display().to_string()),
        None => {
            let cfg: RunConfig = serde_json::from_value(ck.meta["config"].clone())
                .map_err(|e| Error::Checkpoint(format!("checkpoint carries no usable config: {e}")))?;
            let all = generate(&cfg.synth)?;
            let s = split(&all, cfg.split, cfg.seed)?;
            match a.split {
                SplitName::Train => (s.train, "regenerated train split".into()),
                SplitName::Val => (s.val, "regenerated val split".into()),
                SplitName::Test => (s.test, "regenerated test split".into()),
                SplitName::All => (all, "regenerated dataset".into()),
            }
        }
    };
    let metrics = evaluate(&ck, &data)?;
    eprintln!("accuracy {:.4}, weighted F1 {:.4}", metrics.accuracy, metrics.weighted_f1);
    emit_json(
        a.report.as_deref(),
        &EvalReport {
            checkpoint: a.checkpoint,
            data: source,
            samples: data.len(),
            metrics,
        },
    )
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let base: RunConfig = read_config(a.config.as_deref())?;
    base.validate()?;
    let arms: Vec<Arm> = if a.arms.is_empty() {
        match a.suite {
            Suite::Objectives => Arm::OBJECTIVES.to_vec(),
            Suite::Fusion => Arm::FUSIONS.to_vec(),
            Suite::All => Arm::OBJECTIVES.iter().chain(&Arm::FUSIONS).copied().collect(),
        }
    } else {
        a.arms.iter().map(|s| s.trim().parse()).collect::<Result<_>>()?
    };
    let table = ablate(&base, &arms, &a.seeds)?;
    for arm in &arms {
        if let Some(m) = table.mean_weighted_f1(*arm) {
            eprintln!("{:20} mean weighted F1 {:.4}", arm.label(), m);
        }
    }
    if let Some(p) = &a.reports {
        emit_json(Some(p), &table)?;
    }
    emit(a.csv.as_deref(), &table.to_csv())
}

#[derive(Serialize)]
struct GradcheckReport {
    seeds: u64,
    step: f64,
    tolerance: f64,
    families: Vec<GradCase>,
    passed: bool,
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    if !(a.step > 0.0) || a.seeds == 0 {
        return Err(Error::Contract("gradcheck needs a positive step and at least one seed".into()));
    }
    let gc = GradCheck {
        step: a.step,
        ..GradCheck::default()
    };
    let families = gradient_suite(gc, 0..a.seeds)?;
    for f in &families {
        let mark = if f.max_rel_error < a.tolerance { "ok  " } else { "FAIL" };
        eprintln!("{mark} {:24} {:.3e}", f.name, f.max_rel_error);
    }
    let over: Vec<&str> = families
        .iter()
        .filter(|f| f.max_rel_error >= a.tolerance)
        .map(|f| f.name)
        .collect();
    let report = GradcheckReport {
        seeds: a.seeds,
        step: a.step,
        tolerance: a.tolerance,
        passed: over.is_empty(),
        families,
    };
    emit_json(a.report.as_deref(), &report)?;
    if over.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("gradient families over {:e}: {over:?}", a.tolerance)))
    }
}

fn cmd_geomaudit(a: GeomauditArgs) -> Result<()> {
    let audit = geometry_audit(&a.curvatures, a.trials, a.dim, a.seed)?;
    for c in &audit.per_curvature {
        eprintln!(
            "c = {:<6} paper |Γw|/|w| deviation max {:.3e} mean {:.3e}; gyro isometry max {:.1e}; singular {}",
            c.c, c.paper_norm_deviation.max, c.paper_norm_deviation.mean, c.gyro_isometry_error.max, c.singular
        );
    }
    emit_json(a.out.as_deref(), &audit)
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg: SynthConfig = read_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let data = generate(&cfg)?;
    match &a.out {
        Some(p) => save_jsonl(p, &data)?,
        None => write_jsonl(std::io::stdout().lock(), &data)?,
    }
    eprintln!("{} samples", data.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors are contract errors here; 2 is reserved for divergence.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Geomaudit(a) => cmd_geomaudit(a),
        Command::GenData(a) => cmd_gen_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
