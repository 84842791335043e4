//! `lf2i`: run likelihood-free frequentist inference experiments from TOML configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lf2i::experiment::{run_baselines, run_selection, Experiment, ExperimentConfig, Stage};
use lf2i::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "lf2i", version, about = "Likelihood-free frequentist inference experiments")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Target {
    /// Experiment config (TOML).
    config: PathBuf,

    /// Output directory; overrides `output_dir` and $LF2I_OUTPUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the observed data and the labeled training sample.
    Simulate(Target),
    /// Fit the odds classifier and report held-out losses.
    TrainOdds(Target),
    /// Estimate critical values.
    Calibrate(Target),
    /// Estimate the p-value surface for the observed data.
    Pvalues(Target),
    /// Invert the test into a confidence set.
    Invert(Target),
    /// Estimate conditional coverage across the parameter space.
    Diagnose(Target),
    /// Run every stage in order.
    Pipeline {
        #[command(flatten)]
        target: Target,
        /// Evaluate the config's [check] thresholds; exit 4 on failure.
        #[arg(long)]
        check: bool,
        /// Shrink every simulation budget to its minimum.
        #[arg(long)]
        dry_run: bool,
    },
    /// Compare classifiers and training budgets by held-out cross-entropy.
    SelectModel(Target),
    /// Coverage of Monte Carlo, chi-square and quantile-regression cutoffs.
    CompareBaselines(Target),
    /// Parse and validate a config without running anything.
    Validate { config: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn load(target: &Target, dry_run: bool) -> lf2i::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_path(&target.config)?;
    if dry_run {
        cfg = cfg.dry_run();
    }
    let dir = target.out.clone().unwrap_or_else(|| cfg.resolve_output_dir());
    Ok((cfg, dir))
}

fn stage(target: &Target, stage: Stage) -> lf2i::Result<()> {
    let (cfg, dir) = load(target, false)?;
    let mut exp = Experiment::open(cfg, dir.clone())?;
    exp.run_stage(stage)?;
    report_stage(&exp, stage, &dir);
    Ok(())
}

fn report_stage(exp: &Experiment, stage: Stage, dir: &Path) {
    if let Some(rec) = exp.manifest().stages.get(&stage) {
        for (file, hash) in &rec.outputs {
            println!("{:<12} {}  {}", stage.name(), &hash[..12], dir.join(file).display());
        }
    }
}

fn run(cli: Cli) -> Result<(), u8> {
    let fail = |e: Error| {
        eprintln!("error: {e}");
        exit_code(&e)
    };
    match cli.command {
        Command::Simulate(t) => stage(&t, Stage::Simulate).map_err(fail),
        Command::TrainOdds(t) => stage(&t, Stage::TrainOdds).map_err(fail),
        Command::Calibrate(t) => stage(&t, Stage::Calibrate).map_err(fail),
        Command::Pvalues(t) => stage(&t, Stage::Pvalues).map_err(fail),
        Command::Invert(t) => stage(&t, Stage::Invert).map_err(fail),
        Command::Diagnose(t) => stage(&t, Stage::Diagnose).map_err(fail),
        Command::Pipeline { target, check, dry_run } => {
            let (cfg, dir) = load(&target, dry_run).map_err(fail)?;
            let mut exp = Experiment::open(cfg, dir.clone()).map_err(fail)?;
            exp.run_pipeline().map_err(fail)?;
            for s in Stage::ALL {
                report_stage(&exp, s, &dir);
            }
            if check {
                let outcomes = exp.check().map_err(fail)?;
                let mut ok = true;
                for o in &outcomes {
                    println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                    ok &= o.passed;
                }
                if !ok {
                    return Err(EXIT_CHECK);
                }
            }
            Ok(())
        }
        Command::SelectModel(t) => {
            let (cfg, dir) = load(&t, false).map_err(fail)?;
            let r = run_selection(&cfg, &dir).map_err(fail)?;
            println!("{:<20} {:>8} {:>12} {:>10}", "classifier", "B", "ce_loss", "se");
            for row in &r.rows {
                println!("{:<20} {:>8} {:>12.6} {:>10.6}", row.classifier, row.b, row.ce_loss, row.ce_se);
            }
            println!("chosen: {} (plateau at B={})", r.chosen_label, r.plateau_b);
            Ok(())
        }
        Command::CompareBaselines(t) => {
            let (cfg, dir) = load(&t, false).map_err(fail)?;
            let rows = run_baselines(&cfg, &dir).map_err(fail)?;
            for r in &rows {
                println!("{:?} {:<20} {:.3} ± {:.3}", r.theta, r.method, r.coverage, r.se);
            }
            println!("wrote {}", dir.join("baselines.csv").display());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config).map_err(fail)?;
            println!("ok: {} (output {})", cfg.name, cfg.resolve_output_dir().display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("error: cannot size worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
