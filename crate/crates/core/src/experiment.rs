//! Declarative experiments: a TOML config drives the simulate → train-odds →
//! calibrate → (p-values) → invert → diagnose stages, each of which records
//! its seed and output hashes in `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{
    chi2_cutoff, estimate_critical_values, estimate_pvalues, mc_critical_values, mc_statistics, write_cutoff_csv,
    CalibrationModel, Chi2Cutoff, Cutoff, GridCutoffs, PValueModel, MIN_CALIBRATION_SIZE,
};
use crate::diagnostics::{estimate_coverage, CoverageReport};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inference::{
    hybrid_critical_values, hybrid_pvalues, invert, invert_pvalues, marginal_critical_values, marginal_pvalues,
    profile_grid, ConfidenceSet,
};
use crate::learners::{fit_classifier, model_io, ClassifierSpec, FeatureMatrix, MeanSpec, QuantileSpec};
use crate::numeric::{mean_se, softplus};
use crate::odds::{integrated_odds_loss, FittedOdds, LossReport, OddsModel, OracleOdds};
use crate::rng::SeedStream;
use crate::simulators::{
    generate_labeled_sample, sample_forward, Dataset, LabeledSample, Proposal, Reference, Simulator, SimulatorSpec,
};
use crate::space::Grid;
use crate::statistics::{
    Acore, Bff, ExactBfMvg, ExactLrtMvg, MarginalizedBff, ProfiledAcore, StatisticKind, TestStatistic,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the default output root.
pub const OUTPUT_ROOT_ENV: &str = "LF2I_OUTPUT_ROOT";

pub const MANIFEST_FILE: &str = "manifest.json";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Observations per dataset.
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub execution: Execution,
    pub simulator: SimulatorSpec,
    pub statistic: StatisticConfig,
    #[serde(default)]
    pub odds: OddsConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub pvalues: Option<PValueConfig>,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub selection: Option<SelectionConfig>,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

fn default_alpha() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticChoice {
    Acore,
    Bff,
    ExactLrt,
    ExactBf,
    ProfiledAcore,
    MarginalizedBff,
}

impl StatisticChoice {
    fn uses_odds(self) -> bool {
        !matches!(self, StatisticChoice::ExactLrt | StatisticChoice::ExactBf)
    }

    fn is_nuisance(self) -> bool {
        matches!(self, StatisticChoice::ProfiledAcore | StatisticChoice::MarginalizedBff)
    }

    /// Statistics on the log likelihood-ratio scale, for which χ² cutoffs apply.
    fn is_lr_scale(self) -> bool {
        matches!(self, StatisticChoice::Acore | StatisticChoice::ExactLrt | StatisticChoice::ProfiledAcore)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OddsSource {
    #[default]
    Fitted,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticConfig {
    pub kind: StatisticChoice,
    #[serde(default)]
    pub odds: OddsSource,
    /// Points per dimension of the maximisation / averaging grid over Θ.
    #[serde(default = "default_theta_points")]
    pub theta_points: usize,
    /// Points per nuisance dimension for profiling or marginalising.
    #[serde(default = "default_psi_points")]
    pub psi_points: usize,
}

fn default_theta_points() -> usize {
    101
}

fn default_psi_points() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddsConfig {
    #[serde(default)]
    pub classifier: ClassifierSpec,
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_heldout")]
    pub heldout: usize,
}

fn default_b() -> usize {
    10_000
}

fn default_p() -> f64 {
    0.5
}

fn default_heldout() -> usize {
    2000
}

impl Default for OddsConfig {
    fn default() -> Self {
        Self { classifier: ClassifierSpec::default(), b: default_b(), p: default_p(), heldout: default_heldout() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    /// Quantile regression of λ on θ; for nuisance statistics θ is drawn over
    /// all of Θ and λ is regressed on φ.
    #[default]
    QuantileRegression,
    /// Quantile regression with ψ fixed at the profiled value for the
    /// observed data. Not amortised.
    Hybrid,
    /// Per-grid-point Monte Carlo quantiles.
    MonteCarlo,
    /// Asymptotic χ² cutoffs.
    Chi2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default)]
    pub method: CalibrationMethod,
    #[serde(default)]
    pub quantile: QuantileSpec,
    #[serde(default = "default_b_prime")]
    pub b_prime: usize,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
}

fn default_b_prime() -> usize {
    5000
}

fn default_mc_draws() -> usize {
    1000
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            method: CalibrationMethod::default(),
            quantile: QuantileSpec::default(),
            b_prime: default_b_prime(),
            mc_draws: default_mc_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PValueConfig {
    #[serde(default = "MeanSpec::pvalue_default")]
    pub regressor: MeanSpec,
    #[serde(default = "default_b_prime")]
    pub b_prime: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    /// Points per interest dimension of the inversion grid.
    #[serde(default = "default_theta_points")]
    pub grid_points: usize,
    /// Parameter the observed data are simulated from; defaults to the
    /// centre of the space.
    #[serde(default)]
    pub true_theta: Option<Vec<f64>>,
    /// CSV file with observed data; overrides `true_theta` simulation.
    #[serde(default)]
    pub observed: Option<PathBuf>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { grid_points: default_theta_points(), true_theta: None, observed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_b_double_prime")]
    pub b_double_prime: usize,
    #[serde(default)]
    pub regressor: MeanSpec,
    /// Points per dimension of the report grid over Θ.
    #[serde(default = "default_report_points")]
    pub report_points: usize,
}

fn default_b_double_prime() -> usize {
    1000
}

fn default_report_points() -> usize {
    51
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            b_double_prime: default_b_double_prime(),
            regressor: MeanSpec::default(),
            report_points: default_report_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub candidates: Vec<ClassifierSpec>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_selection_heldout")]
    pub heldout: usize,
}

fn default_selection_heldout() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Points per dimension of the grid the baselines are compared on.
    #[serde(default = "default_baseline_points")]
    pub points: usize,
    /// Datasets simulated per point when measuring coverage.
    #[serde(default = "default_baseline_reps")]
    pub reps: usize,
}

fn default_baseline_points() -> usize {
    11
}

fn default_baseline_reps() -> usize {
    500
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { points: default_baseline_points(), reps: default_baseline_reps() }
    }
}

/// Thresholds evaluated by `pipeline --check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Minimum share (percent) of the report grid labelled CC.
    #[serde(default = "default_min_cc")]
    pub min_cc_pct: f64,
    /// Require the confidence set to contain the data-generating parameter.
    #[serde(default = "default_true")]
    pub covers_true_theta: bool,
    /// Largest acceptable interval length, in percent of the interest range
    /// (one-dimensional interest parameters only).
    #[serde(default)]
    pub max_length_pct: Option<f64>,
}

fn default_min_cc() -> f64 {
    80.0
}

fn default_true() -> bool {
    true
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { min_cc_pct: default_min_cc(), covers_true_theta: true, max_length_pct: None }
    }
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    /// Parse and validate. Syntax and type errors carry the TOML line and
    /// column; semantic errors carry the dotted key path.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(config_err(
                "schema_version",
                format!("unsupported version {} (expected {CONFIG_SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_err("name", "must be a nonempty plain file name"));
        }
        if self.n == 0 {
            return Err(config_err("n", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err("alpha", format!("{} is outside (0, 1)", self.alpha)));
        }
        let sim = self.simulator.build().map_err(|e| config_err("simulator", e))?;
        let space = sim.space();
        let st = &self.statistic;
        if st.theta_points < 2 {
            return Err(config_err("statistic.theta_points", "must be at least 2"));
        }
        if st.psi_points == 0 {
            return Err(config_err("statistic.psi_points", "must be positive"));
        }
        let is_mvg = matches!(self.simulator, SimulatorSpec::Mvg { .. });
        if matches!(st.kind, StatisticChoice::ExactLrt | StatisticChoice::ExactBf) && !is_mvg {
            return Err(config_err("statistic.kind", "exact statistics are only available for the mvg simulator"));
        }
        if st.kind.is_nuisance() != space.has_nuisance() {
            return Err(config_err(
                "statistic.kind",
                if space.has_nuisance() {
                    "simulator has nuisance parameters; use profiled-acore or marginalized-bff"
                } else {
                    "simulator has no nuisance parameters; use acore or bff"
                },
            ));
        }
        if st.kind.uses_odds() && st.odds == OddsSource::Fitted {
            if self.odds.b < 4 {
                return Err(config_err("odds.b", "must be at least 4"));
            }
            if self.odds.heldout == 0 {
                return Err(config_err("odds.heldout", "must be positive"));
            }
        }
        if !(self.odds.p > 0.0 && self.odds.p < 1.0) {
            return Err(config_err("odds.p", format!("{} is outside (0, 1)", self.odds.p)));
        }
        let cal = &self.calibration;
        if cal.b_prime < MIN_CALIBRATION_SIZE {
            return Err(config_err("calibration.b_prime", format!("must be at least {MIN_CALIBRATION_SIZE}")));
        }
        match cal.method {
            CalibrationMethod::MonteCarlo if space.has_nuisance() => {
                return Err(config_err("calibration.method", "monte-carlo cutoffs need a space without nuisance"));
            }
            CalibrationMethod::MonteCarlo if cal.mc_draws < MIN_CALIBRATION_SIZE => {
                return Err(config_err("calibration.mc_draws", format!("must be at least {MIN_CALIBRATION_SIZE}")));
            }
            CalibrationMethod::Chi2 if !st.kind.is_lr_scale() => {
                return Err(config_err("calibration.method", "chi2 cutoffs need a likelihood-ratio scale statistic"));
            }
            CalibrationMethod::Hybrid if !space.has_nuisance() => {
                return Err(config_err("calibration.method", "hybrid calibration needs nuisance parameters"));
            }
            CalibrationMethod::Hybrid if st.kind != StatisticChoice::ProfiledAcore => {
                return Err(config_err("calibration.method", "hybrid calibration applies to profiled-acore"));
            }
            _ => {}
        }
        if let Some(pv) = &self.pvalues {
            if pv.b_prime < MIN_CALIBRATION_SIZE {
                return Err(config_err("pvalues.b_prime", format!("must be at least {MIN_CALIBRATION_SIZE}")));
            }
        }
        if self.inference.grid_points < 2 {
            return Err(config_err("inference.grid_points", "must be at least 2"));
        }
        if let Some(t) = &self.inference.true_theta {
            if t.len() != space.dims() {
                return Err(config_err("inference.true_theta", format!("expected {} values", space.dims())));
            }
            space.check(t).map_err(|e| config_err("inference.true_theta", e))?;
        }
        if self.diagnostics.b_double_prime < MIN_CALIBRATION_SIZE {
            return Err(config_err("diagnostics.b_double_prime", format!("must be at least {MIN_CALIBRATION_SIZE}")));
        }
        if self.diagnostics.report_points < 2 {
            return Err(config_err("diagnostics.report_points", "must be at least 2"));
        }
        if let Some(sel) = &self.selection {
            if sel.candidates.is_empty() {
                return Err(config_err("selection.candidates", "needs at least one classifier"));
            }
            if sel.budgets.is_empty() || sel.budgets.iter().any(|b| *b < 4) {
                return Err(config_err("selection.budgets", "needs budgets of at least 4"));
            }
            if sel.heldout == 0 {
                return Err(config_err("selection.heldout", "must be positive"));
            }
        }
        if self.baselines.points < 1 || self.baselines.reps < 1 {
            return Err(config_err("baselines", "points and reps must be positive"));
        }
        if !(0.0..=100.0).contains(&self.check.min_cc_pct) {
            return Err(config_err("check.min_cc_pct", "must be a percentage"));
        }
        Ok(())
    }

    /// Smoke-test variant: every simulation budget at its minimum and coarse grids.
    pub fn dry_run(&self) -> Self {
        let mut c = self.clone();
        c.odds.b = c.odds.b.min(MIN_CALIBRATION_SIZE);
        c.odds.heldout = c.odds.heldout.min(MIN_CALIBRATION_SIZE);
        c.calibration.b_prime = MIN_CALIBRATION_SIZE;
        c.calibration.mc_draws = MIN_CALIBRATION_SIZE;
        if let Some(pv) = &mut c.pvalues {
            pv.b_prime = MIN_CALIBRATION_SIZE;
        }
        c.diagnostics.b_double_prime = MIN_CALIBRATION_SIZE;
        c.statistic.theta_points = c.statistic.theta_points.min(11);
        c.statistic.psi_points = c.statistic.psi_points.min(5);
        c.inference.grid_points = c.inference.grid_points.min(21);
        c.diagnostics.report_points = c.diagnostics.report_points.min(5);
        if let Some(sel) = &mut c.selection {
            sel.budgets = sel.budgets.iter().map(|b| (*b).min(MIN_CALIBRATION_SIZE)).collect();
            sel.heldout = sel.heldout.min(MIN_CALIBRATION_SIZE);
        }
        c.baselines.points = c.baselines.points.min(3);
        c.baselines.reps = c.baselines.reps.min(20);
        c
    }

    /// Output directory: explicit `output_dir`, else `$LF2I_OUTPUT_ROOT/name`,
    /// else `runs/name`.
    pub fn resolve_output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        root.join(&self.name)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    fn master(&self) -> SeedStream {
        SeedStream::new(self.seed)
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Simulate,
    TrainOdds,
    Calibrate,
    Pvalues,
    Invert,
    Diagnose,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Simulate, Stage::TrainOdds, Stage::Calibrate, Stage::Pvalues, Stage::Invert, Stage::Diagnose];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::TrainOdds => "train-odds",
            Stage::Calibrate => "calibrate",
            Stage::Pvalues => "pvalues",
            Stage::Invert => "invert",
            Stage::Diagnose => "diagnose",
        }
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Simulate => &[],
            Stage::TrainOdds => &[Stage::Simulate],
            Stage::Calibrate => &[Stage::TrainOdds],
            Stage::Pvalues => &[Stage::TrainOdds],
            Stage::Invert => &[Stage::Calibrate],
            Stage::Diagnose => &[Stage::Calibrate],
        }
    }

    fn seed(self, cfg: &ExperimentConfig) -> SeedStream {
        cfg.master().child(self as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: SeedStream,
    /// Output file name → sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Manifest {
    fn fresh(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            name: cfg.name.clone(),
            config_sha256: cfg.sha256()?,
            master_seed: cfg.seed,
            stages: BTreeMap::new(),
        })
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// An experiment bound to its output directory.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    manifest: Manifest,
}

impl Experiment {
    /// Open (or start) the run directory. A manifest written for a different
    /// config is discarded.
    pub fn open(config: ExperimentConfig, dir: PathBuf) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(&dir)?;
        let path = dir.join(MANIFEST_FILE);
        let fresh = Manifest::fresh(&config)?;
        let manifest = match fs::read(&path) {
            Ok(bytes) => {
                let m: Manifest = serde_json::from_slice(&bytes)?;
                if m.config_sha256 == fresh.config_sha256 {
                    m
                } else {
                    fresh
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => fresh,
            Err(e) => return Err(e.into()),
        };
        Ok(Self { config, dir, manifest })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Stages that `stage` depends on and that are absent or whose recorded
    /// outputs no longer match the files on disk.
    pub fn missing_prerequisites(&self, stage: Stage) -> Vec<Stage> {
        let mut out = Vec::new();
        for req in stage.requires() {
            for r in self.missing_prerequisites(*req) {
                if !out.contains(&r) {
                    out.push(r);
                }
            }
            if !self.stage_is_intact(*req) && !out.contains(req) {
                out.push(*req);
            }
        }
        out
    }

    pub fn stage_is_intact(&self, stage: Stage) -> bool {
        let Some(rec) = self.manifest.stages.get(&stage) else {
            return false;
        };
        rec.outputs.iter().all(|(f, h)| file_sha256(&self.path(f)).map(|got| &got == h).unwrap_or(false))
    }

    fn record(&mut self, stage: Stage, files: &[&str]) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for f in files {
            outputs.insert((*f).to_string(), file_sha256(&self.path(f))?);
        }
        self.manifest.stages.insert(stage, StageRecord { seed: stage.seed(&self.config), outputs });
        let stale: Vec<Stage> = self
            .manifest
            .stages
            .keys()
            .copied()
            .filter(|s| *s != stage && depends_on(*s, stage))
            .collect();
        for s in stale {
            self.manifest.stages.remove(&s);
        }
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        fs::write(self.path(MANIFEST_FILE), bytes)?;
        Ok(())
    }

    /// Run one stage after checking its prerequisites.
    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let missing = self.missing_prerequisites(stage);
        if !missing.is_empty() {
            let names: Vec<&str> = missing.iter().map(|s| s.name()).collect();
            return Err(Error::Config(format!(
                "stage `{}` needs {} to be run first (missing or modified outputs)",
                stage.name(),
                names.join(", ")
            ))
            .in_stage(stage.name()));
        }
        self.execute(stage).map_err(|e| e.in_stage(stage.name()))
    }

    fn execute(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Simulate => self.simulate(),
            Stage::TrainOdds => self.train_odds(),
            Stage::Calibrate => self.calibrate(),
            Stage::Pvalues => self.pvalues(),
            Stage::Invert => self.invert(),
            Stage::Diagnose => self.diagnose(),
        }
    }

    /// Every stage in order; p-values only when configured.
    pub fn run_pipeline(&mut self) -> Result<()> {
        for stage in Stage::ALL {
            if stage == Stage::Pvalues && self.config.pvalues.is_none() {
                continue;
            }
            if stage == Stage::Diagnose && self.config.calibration.method == CalibrationMethod::Hybrid {
                continue;
            }
            self.run_stage(stage)?;
        }
        Ok(())
    }

    // -- stages -------------------------------------------------------------

    fn simulate(&mut self) -> Result<()> {
        let cfg = &self.config;
        let seed = Stage::Simulate.seed(cfg);
        let sim = cfg.simulator.build()?;
        let observed = match &cfg.inference.observed {
            Some(p) => Dataset::read_csv(fs::File::open(p)?)?,
            None => sample_forward(sim.as_ref(), &true_theta(cfg, sim.as_ref()), cfg.n, seed.child(0))?,
        };
        if observed.dim() != sim.obs_dim() {
            return Err(Error::Config(format!("inference.observed: expected {} columns", sim.obs_dim())));
        }
        observed.write_csv(fs::File::create(self.path("observed.csv"))?)?;
        let mut files = vec!["observed.csv"];
        if uses_fitted_odds(cfg) {
            let prop = Proposal::uniform(sim.space());
            let train = generate_labeled_sample(
                sim.as_ref(),
                &prop,
                &Reference::Marginal,
                cfg.odds.b,
                cfg.odds.p,
                seed.child(1),
                cfg.execution,
            )?;
            train.write_csv(fs::File::create(self.path("training_sample.csv"))?)?;
            files.push("training_sample.csv");
        }
        self.record(Stage::Simulate, &files)
    }

    fn train_odds(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        if !uses_fitted_odds(&cfg) {
            return self.record(Stage::TrainOdds, &[]);
        }
        let seed = Stage::TrainOdds.seed(&cfg);
        let sim: Arc<dyn Simulator> = Arc::from(cfg.simulator.build()?);
        let train = LabeledSample::read_csv(fs::File::open(self.path("training_sample.csv"))?, sim.space().dims())?;
        let odds = fit_odds(&cfg.odds.classifier, &train, sim.as_ref(), cfg.odds.p, seed.child(0))?;
        let prop = Proposal::uniform(sim.space());
        let heldout = generate_labeled_sample(
            sim.as_ref(),
            &prop,
            &Reference::Marginal,
            cfg.odds.heldout,
            cfg.odds.p,
            seed.child(1),
            cfg.execution,
        )?;
        let (ce, _) = cross_entropy_se(&odds, &heldout)?;
        let (odds_loss, se) = match OracleOdds::new(sim.clone(), prop.clone(), Reference::Marginal, cfg.odds.p) {
            Ok(oracle) => {
                let l = integrated_odds_loss(&odds, &oracle, sim.as_ref(), &Reference::Marginal, &prop, 2000, seed.child(2))?;
                (Some(l.estimate), Some(l.se))
            }
            Err(_) => (None, None),
        };
        let report = LossReport { classifier: cfg.odds.classifier.label(), b: cfg.odds.b, ce_loss: ce, odds_loss, se };
        let header = model_io::ModelHeader {
            kind: "fitted-odds".into(),
            hyperparameters: serde_json::to_value(&cfg.odds.classifier)?,
            metadata: serde_json::json!({ "B": cfg.odds.b, "p": cfg.odds.p }),
        };
        model_io::save(&self.path("odds.lf2m"), &header, &odds)?;
        write_json(&self.path("odds_report.json"), &report)?;
        self.record(Stage::TrainOdds, &["odds.lf2m", "odds_report.json"])
    }

    fn context(&self) -> Result<Context> {
        Context::load(&self.config, &self.dir)
    }

    fn calibrate(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let seed = Stage::Calibrate.seed(&cfg);
        let ctx = self.context()?;
        let stored = ctx.calibrate(&cfg, seed)?;
        let header = model_io::ModelHeader {
            kind: "cutoffs".into(),
            hyperparameters: serde_json::to_value(&cfg.calibration)?,
            metadata: serde_json::json!({ "alpha": cfg.alpha, "statistic": ctx.stat.kind().to_string() }),
        };
        model_io::save(&self.path("calibration.lf2m"), &header, &stored)?;
        write_cutoff_csv(fs::File::create(self.path("cutoffs.csv"))?, &ctx.interest_grid, &stored)?;
        self.record(Stage::Calibrate, &["calibration.lf2m", "cutoffs.csv"])
    }

    fn pvalues(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let Some(pc) = cfg.pvalues.clone() else {
            return Err(Error::Config("pvalues: section missing from config".into()));
        };
        let seed = Stage::Pvalues.seed(&cfg);
        let ctx = self.context()?;
        let sim = ctx.sim.as_ref();
        let model = if !sim.space().has_nuisance() {
            estimate_pvalues(&ctx.observed, sim, &ctx.prop, ctx.stat.as_ref(), pc.b_prime, cfg.n, &pc.regressor, seed, cfg.execution)?
        } else if cfg.calibration.method == CalibrationMethod::Hybrid {
            let profiles = ctx.profiles(&cfg)?;
            let interest_prop = ctx.interest_prop();
            hybrid_pvalues(&ctx.observed, sim, &interest_prop, &profiles, ctx.stat.as_ref(), pc.b_prime, cfg.n, &pc.regressor, seed, cfg.execution)?
        } else {
            marginal_pvalues(&ctx.observed, sim, &ctx.prop, ctx.stat.as_ref(), pc.b_prime, cfg.n, &pc.regressor, seed, cfg.execution)?
        };
        let header = model_io::ModelHeader {
            kind: "pvalues".into(),
            hyperparameters: serde_json::to_value(&pc)?,
            metadata: serde_json::json!({ "statistic": ctx.stat.kind().to_string() }),
        };
        model_io::save(&self.path("pvalues.lf2m"), &header, &model)?;
        let mut wtr = csv::Writer::from_writer(fs::File::create(self.path("pvalues.csv"))?);
        let mut head: Vec<String> = (0..ctx.interest_grid.dim()).map(|j| format!("theta_{j}")).collect();
        head.push("p_hat".into());
        wtr.write_record(&head)?;
        for t in ctx.interest_grid.points() {
            let mut row: Vec<String> = t.iter().map(|v| v.to_string()).collect();
            row.push(model.pvalue(t).to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        self.record(Stage::Pvalues, &["pvalues.lf2m", "pvalues.csv"])
    }

    fn invert(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let ctx = self.context()?;
        let (_, stored): (_, StoredCutoff) = model_io::load(&self.path("calibration.lf2m"))?;
        let set = invert(ctx.stat.as_ref(), &stored, &ctx.observed, &ctx.interest_grid, cfg.alpha)?;
        set.write_csv(fs::File::create(self.path("confidence_set.csv"))?)?;
        let mut files = vec!["confidence_set.csv"];
        if ctx.interest_grid.dim() == 1 {
            write_json(&self.path("interval.json"), &interval_of(&set, &ctx))?;
            files.push("interval.json");
        }
        if self.stage_is_intact(Stage::Pvalues) {
            let (_, pv): (_, PValueModel) = model_io::load(&self.path("pvalues.lf2m"))?;
            let pset = invert_pvalues(ctx.stat.as_ref(), &pv, &ctx.interest_grid, cfg.alpha)?;
            pset.write_csv(fs::File::create(self.path("confidence_set_pvalues.csv"))?)?;
            files.push("confidence_set_pvalues.csv");
            if ctx.interest_grid.dim() == 1 {
                write_json(&self.path("interval_pvalues.json"), &interval_of(&pset, &ctx))?;
                files.push("interval_pvalues.json");
            }
        }
        self.record(Stage::Invert, &files)
    }

    fn diagnose(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        if cfg.calibration.method == CalibrationMethod::Hybrid {
            return Err(Error::Config(
                "calibration.method: hybrid cutoffs are tied to one observed dataset and cannot be diagnosed".into(),
            ));
        }
        let seed = Stage::Diagnose.seed(&cfg);
        let ctx = self.context()?;
        let (_, stored): (_, StoredCutoff) = model_io::load(&self.path("calibration.lf2m"))?;
        let space = ctx.sim.space();
        let grid = Grid::lattice(space.lower(), space.upper(), cfg.diagnostics.report_points);
        let report = estimate_coverage(
            ctx.sim.as_ref(),
            &ctx.prop,
            ctx.stat.as_ref(),
            &stored,
            cfg.diagnostics.b_double_prime,
            cfg.n,
            1.0 - cfg.alpha,
            &cfg.diagnostics.regressor,
            &grid,
            seed,
            cfg.execution,
        )?;
        report.write_csv(fs::File::create(self.path("coverage.csv"))?)?;
        write_json(&self.path("coverage_summary.json"), &report.summary())?;
        self.record(Stage::Diagnose, &["coverage.csv", "coverage_summary.json"])
    }

    /// Evaluate the `[check]` thresholds against the artifacts of a finished run.
    pub fn check(&self) -> Result<Vec<CheckOutcome>> {
        let cfg = &self.config;
        let mut out = Vec::new();
        if self.stage_is_intact(Stage::Diagnose) {
            let summary: serde_json::Value = serde_json::from_slice(&fs::read(self.path("coverage_summary.json"))?)?;
            let cc = summary["cc_pct"].as_f64().unwrap_or(0.0);
            out.push(CheckOutcome {
                name: "correct-coverage share".into(),
                passed: cc >= cfg.check.min_cc_pct,
                detail: format!("CC {cc:.1}% (need ≥ {:.1}%)", cfg.check.min_cc_pct),
            });
        }
        if cfg.check.covers_true_theta && cfg.inference.observed.is_none() && self.stage_is_intact(Stage::Invert) {
            let sim = cfg.simulator.build()?;
            let theta = true_theta(cfg, sim.as_ref());
            let phi = sim.space().interest_of(&theta);
            let set = read_accepted(&self.path("confidence_set.csv"), phi.len())?;
            let covered = nearest_accepted(&set, &phi);
            out.push(CheckOutcome {
                name: "set covers true parameter".into(),
                passed: covered,
                detail: format!("true interest parameter {phi:?}"),
            });
        }
        if let Some(max) = cfg.check.max_length_pct {
            let path = self.path("interval.json");
            if self.stage_is_intact(Stage::Invert) && path.exists() {
                let summary: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
                let len = summary["length_pct"].as_f64().unwrap_or(f64::INFINITY);
                out.push(CheckOutcome {
                    name: "interval length".into(),
                    passed: len <= max,
                    detail: format!("{len:.1}% of the range (need ≤ {max:.1}%)"),
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn depends_on(stage: Stage, on: Stage) -> bool {
    stage.requires().iter().any(|r| *r == on || depends_on(*r, on))
}

fn uses_fitted_odds(cfg: &ExperimentConfig) -> bool {
    cfg.statistic.kind.uses_odds() && cfg.statistic.odds == OddsSource::Fitted
}

fn true_theta(cfg: &ExperimentConfig, sim: &dyn Simulator) -> Vec<f64> {
    cfg.inference.true_theta.clone().unwrap_or_else(|| {
        let s = sim.space();
        s.lower().iter().zip(s.upper()).map(|(a, b)| 0.5 * (a + b)).collect()
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn interval_of(set: &ConfidenceSet, ctx: &Context) -> crate::inference::IntervalSummary {
    let (lo, hi) = ctx.sim.space().bounds_of(ctx.sim.space().interest_dims());
    set.interval_summary(lo[0], hi[0])
}

fn read_accepted(path: &Path, dim: usize) -> Result<Vec<(Vec<f64>, bool)>> {
    let mut rdr = csv::Reader::from_reader(fs::File::open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Numeric(format!("{}: {e}", path.display())));
        let theta = (0..dim).map(|j| parse(&rec[j])).collect::<Result<Vec<f64>>>()?;
        out.push((theta, matches!(&rec[dim], "1" | "true")));
    }
    Ok(out)
}

fn nearest_accepted(set: &[(Vec<f64>, bool)], theta: &[f64]) -> bool {
    let mut best = (f64::INFINITY, false);
    for (t, a) in set {
        let d: f64 = t.iter().zip(theta).map(|(x, y)| (x - y).powi(2)).sum();
        if d < best.0 {
            best = (d, *a);
        }
    }
    best.1
}

/// Cutoffs as persisted by the calibrate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum StoredCutoff {
    Regression(CalibrationModel),
    MonteCarlo(GridCutoffs),
    Chi2(Chi2Cutoff),
}

impl Cutoff for StoredCutoff {
    fn cutoff(&self, null: &[f64]) -> f64 {
        match self {
            StoredCutoff::Regression(m) => m.cutoff(null),
            StoredCutoff::MonteCarlo(g) => g.cutoff(null),
            StoredCutoff::Chi2(c) => c.cutoff(null),
        }
    }

    fn statistic_kind(&self) -> Option<StatisticKind> {
        match self {
            StoredCutoff::Regression(m) => m.statistic_kind(),
            _ => None,
        }
    }
}

/// Fit a classifier on `(θ, x)` features and wrap it as odds.
pub fn fit_odds(
    spec: &ClassifierSpec,
    train: &LabeledSample,
    sim: &dyn Simulator,
    p: f64,
    seed: SeedStream,
) -> Result<FittedOdds> {
    let (features, _) = train.feature_matrix();
    let x = FeatureMatrix::new(train.theta_dim() + train.x_dim(), features)?;
    let clf = fit_classifier(spec, &x, train.labels(), seed)?;
    FittedOdds::new(clf, sim.space().clone(), p, &Reference::Marginal)
}

/// Held-out cross-entropy and its standard error.
pub fn cross_entropy_se(model: &dyn OddsModel, heldout: &LabeledSample) -> Result<(f64, f64)> {
    if heldout.is_empty() {
        return Err(Error::Argument("held-out sample is empty".into()));
    }
    let losses: Vec<f64> = heldout
        .iter()
        .map(|ex| {
            let l = model.log_odds(ex.x, ex.theta);
            if ex.y {
                softplus(-l)
            } else {
                softplus(l)
            }
        })
        .collect();
    let (m, se) = mean_se(&losses);
    if !m.is_finite() {
        return Err(Error::Numeric("held-out cross-entropy is not finite".into()));
    }
    Ok((m, se))
}

/// Everything a post-training stage needs: simulator, proposal, observed
/// data, the statistic and the interest grid.
pub struct Context {
    pub sim: Arc<dyn Simulator>,
    pub prop: Proposal,
    pub observed: Dataset,
    pub odds: Option<Arc<dyn OddsModel>>,
    pub stat: Box<dyn TestStatistic>,
    pub interest_grid: Grid,
}

impl Context {
    pub fn load(cfg: &ExperimentConfig, dir: &Path) -> Result<Self> {
        let sim: Arc<dyn Simulator> = Arc::from(cfg.simulator.build()?);
        let observed = Dataset::read_csv(fs::File::open(dir.join("observed.csv"))?)?;
        let odds: Option<Arc<dyn OddsModel>> = if !cfg.statistic.kind.uses_odds() {
            None
        } else if cfg.statistic.odds == OddsSource::Oracle {
            None
        } else {
            let (_, fitted): (_, FittedOdds) = model_io::load(&dir.join("odds.lf2m"))?;
            Some(Arc::new(fitted))
        };
        Self::build(cfg, sim, observed, odds)
    }

    /// Assemble from in-memory parts. With `odds = None` and an odds-based
    /// statistic, oracle odds are used.
    pub fn build(
        cfg: &ExperimentConfig,
        sim: Arc<dyn Simulator>,
        observed: Dataset,
        odds: Option<Arc<dyn OddsModel>>,
    ) -> Result<Self> {
        let space = sim.space().clone();
        let prop = Proposal::uniform(&space);
        let odds = match (cfg.statistic.kind.uses_odds(), odds) {
            (false, _) => None,
            (true, Some(o)) => Some(o),
            (true, None) => {
                Some(Arc::new(OracleOdds::new(sim.clone(), prop.clone(), Reference::Marginal, cfg.odds.p)?) as Arc<dyn OddsModel>)
            }
        };
        let st = &cfg.statistic;
        let theta_grid = Grid::lattice(space.lower(), space.upper(), st.theta_points);
        let (nlo, nhi) = space.bounds_of(space.nuisance_dims());
        let psi_grid = if space.has_nuisance() { Grid::lattice(&nlo, &nhi, st.psi_points) } else { Grid::unit() };
        let stat: Box<dyn TestStatistic> = match st.kind {
            StatisticChoice::Acore => Box::new(Acore::new(odds.clone().expect("odds"), theta_grid)?),
            StatisticChoice::Bff => Box::new(Bff::riemann(odds.clone().expect("odds"), &prop, st.theta_points)?),
            StatisticChoice::ExactLrt => Box::new(ExactLrtMvg::new(space.dims())),
            StatisticChoice::ExactBf => Box::new(ExactBfMvg::new(space.dims(), space.lower()[0], space.upper()[0])?),
            StatisticChoice::ProfiledAcore => {
                Box::new(ProfiledAcore::new(odds.clone().expect("odds"), psi_grid, theta_grid)?)
            }
            StatisticChoice::MarginalizedBff => Box::new(MarginalizedBff::riemann(
                odds.clone().expect("odds"),
                &prop,
                st.psi_points,
                st.theta_points,
            )?),
        };
        let (ilo, ihi) = space.bounds_of(space.interest_dims());
        let interest_grid = Grid::lattice(&ilo, &ihi, cfg.inference.grid_points);
        Ok(Self { sim, prop, observed, odds, stat, interest_grid })
    }

    fn interest_prop(&self) -> Proposal {
        self.prop.marginal(self.sim.space().interest_dims())
    }

    fn profiles(&self, cfg: &ExperimentConfig) -> Result<Vec<crate::inference::NuisanceProfile>> {
        let space = self.sim.space();
        let (nlo, nhi) = space.bounds_of(space.nuisance_dims());
        let psi_grid = Grid::lattice(&nlo, &nhi, cfg.statistic.psi_points);
        let odds = self.odds.as_ref().ok_or_else(|| Error::Config("hybrid calibration needs odds".into()))?;
        profile_grid(odds.as_ref(), &self.observed, &self.interest_grid, &psi_grid, cfg.execution)
    }

    /// Calibrate per the config's method.
    pub fn calibrate(&self, cfg: &ExperimentConfig, seed: SeedStream) -> Result<StoredCutoff> {
        let cal = &cfg.calibration;
        let sim = self.sim.as_ref();
        let space = sim.space();
        Ok(match cal.method {
            CalibrationMethod::QuantileRegression if space.has_nuisance() => StoredCutoff::Regression(
                marginal_critical_values(sim, &self.prop, self.stat.as_ref(), cal.b_prime, cfg.n, cfg.alpha, &cal.quantile, seed, cfg.execution)?,
            ),
            CalibrationMethod::QuantileRegression => StoredCutoff::Regression(estimate_critical_values(
                sim,
                &self.prop,
                self.stat.as_ref(),
                cal.b_prime,
                cfg.n,
                cfg.alpha,
                &cal.quantile,
                seed,
                cfg.execution,
            )?),
            CalibrationMethod::Hybrid => {
                let profiles = self.profiles(cfg)?;
                StoredCutoff::Regression(hybrid_critical_values(
                    sim,
                    &self.interest_prop(),
                    &profiles,
                    self.stat.as_ref(),
                    cal.b_prime,
                    cfg.n,
                    cfg.alpha,
                    &cal.quantile,
                    seed,
                    cfg.execution,
                )?)
            }
            CalibrationMethod::MonteCarlo => StoredCutoff::MonteCarlo(mc_critical_values(
                sim,
                &self.interest_grid,
                self.stat.as_ref(),
                cfg.alpha,
                cal.mc_draws,
                cfg.n,
                seed,
                cfg.execution,
            )?),
            CalibrationMethod::Chi2 => StoredCutoff::Chi2(chi2_cutoff(cfg.alpha, self.stat.null_dim())?),
        })
    }
}

// ---------------------------------------------------------------------------
// Model selection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub candidate: usize,
    pub classifier: String,
    #[serde(rename = "B")]
    pub b: usize,
    pub ce_loss: f64,
    pub ce_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    /// Index into the candidate list of the chosen classifier.
    pub chosen: usize,
    pub chosen_label: String,
    /// Smallest budget whose loss is within two standard errors of the
    /// chosen classifier's loss at the largest budget.
    pub plateau_b: usize,
}

/// Held-out cross-entropy for every (classifier, B) pair. All candidates at a
/// given B see the same training sample; every fit is scored on one shared
/// held-out sample. The winner has the lowest loss at the largest budget;
/// ties go to the earlier candidate.
pub fn select_model(
    sim: &dyn Simulator,
    candidates: &[ClassifierSpec],
    budgets: &[usize],
    heldout: usize,
    p: f64,
    seed: SeedStream,
    exec: Execution,
) -> Result<SelectionReport> {
    if candidates.is_empty() || budgets.is_empty() {
        return Err(Error::Argument("model selection needs candidates and budgets".into()));
    }
    let prop = Proposal::uniform(sim.space());
    let held = generate_labeled_sample(sim, &prop, &Reference::Marginal, heldout, p, seed.child(0), exec)?;
    let mut rows = Vec::new();
    for (bi, &b) in budgets.iter().enumerate() {
        let train = generate_labeled_sample(sim, &prop, &Reference::Marginal, b, p, seed.child(1).child(bi as u64), exec)?;
        for (ci, spec) in candidates.iter().enumerate() {
            let odds = fit_odds(spec, &train, sim, p, seed.child(2).child(ci as u64))?;
            let (ce, se) = cross_entropy_se(&odds, &held)?;
            rows.push(SelectionRow { candidate: ci, classifier: spec.label(), b, ce_loss: ce, ce_se: se });
        }
    }
    let b_max = *budgets.iter().max().expect("nonempty");
    let mut chosen: Option<&SelectionRow> = None;
    for r in rows.iter().filter(|r| r.b == b_max) {
        if chosen.is_none_or(|c| r.ce_loss < c.ce_loss) {
            chosen = Some(r);
        }
    }
    let best = chosen.expect("at least one row").clone();
    let plateau_b = rows
        .iter()
        .filter(|r| r.candidate == best.candidate && r.ce_loss <= best.ce_loss + 2.0 * best.ce_se)
        .map(|r| r.b)
        .min()
        .unwrap_or(b_max);
    Ok(SelectionReport { chosen: best.candidate, chosen_label: best.classifier, plateau_b, rows })
}

pub fn write_selection_csv<W: std::io::Write>(w: W, report: &SelectionReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["candidate", "classifier", "B", "ce_loss", "ce_se"])?;
    for r in &report.rows {
        wtr.write_record([
            r.candidate.to_string(),
            r.classifier.clone(),
            r.b.to_string(),
            r.ce_loss.to_string(),
            r.ce_se.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Run model selection from the config's `[selection]` section and write
/// `selection.csv` / `selection.json` into `dir`.
pub fn run_selection(cfg: &ExperimentConfig, dir: &Path) -> Result<SelectionReport> {
    let sel = cfg.selection.as_ref().ok_or_else(|| Error::Config("selection: section missing from config".into()))?;
    let sim = cfg.simulator.build()?;
    let report = select_model(
        sim.as_ref(),
        &sel.candidates,
        &sel.budgets,
        sel.heldout,
        cfg.odds.p,
        cfg.master().child(101),
        cfg.execution,
    )?;
    fs::create_dir_all(dir)?;
    write_selection_csv(fs::File::create(dir.join("selection.csv"))?, &report)?;
    write_json(&dir.join("selection.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Baseline comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub theta: Vec<f64>,
    pub method: String,
    pub coverage: f64,
    pub se: f64,
}

/// Coverage at each grid point of the sets built from Monte Carlo, χ² (for
/// likelihood-ratio scale statistics) and quantile-regression cutoffs,
/// measured by direct simulation of `reps` datasets per point.
#[allow(clippy::too_many_arguments)]
pub fn compare_baselines(
    sim: &dyn Simulator,
    stat: &dyn TestStatistic,
    lr_scale: bool,
    alpha: f64,
    n: usize,
    calibration: &CalibrationConfig,
    grid: &Grid,
    reps: usize,
    seed: SeedStream,
    exec: Execution,
) -> Result<Vec<BaselineRow>> {
    if sim.space().has_nuisance() {
        return Err(Error::Argument("baseline comparison needs a space without nuisance parameters".into()));
    }
    let prop = Proposal::uniform(sim.space());
    let mut methods: Vec<(&str, Box<dyn Cutoff>)> = vec![
        ("monte-carlo", Box::new(mc_critical_values(sim, grid, stat, alpha, calibration.mc_draws, n, seed.child(0), exec)?)),
        (
            "quantile-regression",
            Box::new(estimate_critical_values(sim, &prop, stat, calibration.b_prime, n, alpha, &calibration.quantile, seed.child(1), exec)?),
        ),
    ];
    if lr_scale {
        methods.insert(1, ("chi2", Box::new(chi2_cutoff(alpha, stat.null_dim())?)));
    }
    let lambdas = mc_statistics(sim, grid, stat, reps, n, seed.child(2), exec)?;
    let mut rows = Vec::new();
    for (t, l) in grid.points().zip(&lambdas) {
        for (name, cut) in &methods {
            let c = cut.cutoff(t);
            let hits: Vec<f64> = l.iter().map(|v| f64::from(u8::from(*v >= c))).collect();
            let (coverage, se) = mean_se(&hits);
            rows.push(BaselineRow { theta: t.to_vec(), method: (*name).to_string(), coverage, se });
        }
    }
    Ok(rows)
}

pub fn write_baselines_csv<W: std::io::Write>(w: W, rows: &[BaselineRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let dim = rows.first().map_or(0, |r| r.theta.len());
    let mut head: Vec<String> = (0..dim).map(|j| format!("theta_{j}")).collect();
    head.extend(["method", "coverage", "se"].map(String::from));
    wtr.write_record(&head)?;
    for r in rows {
        let mut rec: Vec<String> = r.theta.iter().map(|v| v.to_string()).collect();
        rec.push(r.method.clone());
        rec.push(r.coverage.to_string());
        rec.push(r.se.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Run the baseline comparison for a config (training odds first when the
/// statistic needs fitted odds) and write `baselines.csv` into `dir`.
pub fn run_baselines(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<BaselineRow>> {
    let sim: Arc<dyn Simulator> = Arc::from(cfg.simulator.build()?);
    let seed = cfg.master().child(102);
    let odds: Option<Arc<dyn OddsModel>> = if uses_fitted_odds(cfg) {
        let prop = Proposal::uniform(sim.space());
        let train = generate_labeled_sample(sim.as_ref(), &prop, &Reference::Marginal, cfg.odds.b, cfg.odds.p, seed.child(0), cfg.execution)?;
        Some(Arc::new(fit_odds(&cfg.odds.classifier, &train, sim.as_ref(), cfg.odds.p, seed.child(1))?))
    } else {
        None
    };
    let placeholder = Dataset::new(sim.obs_dim(), vec![0.0; sim.obs_dim()])?;
    let ctx = Context::build(cfg, sim.clone(), placeholder, odds)?;
    let space = sim.space();
    let grid = Grid::lattice(space.lower(), space.upper(), cfg.baselines.points);
    let rows = compare_baselines(
        sim.as_ref(),
        ctx.stat.as_ref(),
        cfg.statistic.kind.is_lr_scale(),
        cfg.alpha,
        cfg.n,
        &cfg.calibration,
        &grid,
        cfg.baselines.reps,
        seed.child(2),
        cfg.execution,
    )?;
    fs::create_dir_all(dir)?;
    write_baselines_csv(fs::File::create(dir.join("baselines.csv"))?, &rows)?;
    Ok(rows)
}

/// Build the coverage report for arbitrary cutoffs under a config, without
/// touching any run directory.
pub fn coverage_for(
    cfg: &ExperimentConfig,
    ctx: &Context,
    cutoff: &dyn Cutoff,
    seed: SeedStream,
) -> Result<CoverageReport> {
    let space = ctx.sim.space();
    let grid = Grid::lattice(space.lower(), space.upper(), cfg.diagnostics.report_points);
    estimate_coverage(
        ctx.sim.as_ref(),
        &ctx.prop,
        ctx.stat.as_ref(),
        cutoff,
        cfg.diagnostics.b_double_prime,
        cfg.n,
        1.0 - cfg.alpha,
        &cfg.diagnostics.regressor,
        &grid,
        seed,
        cfg.execution,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mvg_toml(dir: &Path) -> String {
        format!(
            r#"
schema_version = 1
name = "mvg-exact"
seed = 7
n = 10
alpha = 0.1
output_dir = "{}"

[simulator]
kind = "mvg"
dim = 1

[statistic]
kind = "exact-lrt"

[calibration]
b_prime = 500

[inference]
grid_points = 41
true_theta = [0.5]

[diagnostics]
b_double_prime = 300
report_points = 11
"#,
            dir.display()
        )
    }

    #[test]
    fn config_errors_name_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let base = mvg_toml(dir.path());
        let bad = base.replace("alpha = 0.1", "alpha = 1.5");
        let e = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(e.contains("alpha"), "{e}");
        let bad = base.replace("b_prime = 500", "b_prime = 50");
        let e = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(e.contains("calibration.b_prime"), "{e}");
        let bad = base.replace("n = 10", "n = \"ten\"");
        let e = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(e.contains("line"), "{e}");
        let bad = base.replace("seed = 7", "seed = 7\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = base.replace("schema_version = 1", "schema_version = 9");
        let e = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(e.contains("schema_version"), "{e}");
        let bad = base.replace("kind = \"mvg\"\ndim = 1", "kind = \"gmm\"");
        let e = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(e.contains("statistic.kind"), "{e}");
    }

    #[test]
    fn config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(&mvg_toml(dir.path())).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.sha256().unwrap(), again.sha256().unwrap());
    }

    #[test]
    fn stages_refuse_to_run_out_of_order() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(&mvg_toml(dir.path())).unwrap();
        let mut exp = Experiment::open(cfg, dir.path().to_path_buf()).unwrap();
        let err = exp.run_stage(Stage::Invert).unwrap_err();
        assert!(err.to_string().contains("simulate"), "{err}");
        exp.run_stage(Stage::Simulate).unwrap();
        exp.run_stage(Stage::TrainOdds).unwrap();
        exp.run_stage(Stage::Calibrate).unwrap();
        exp.run_stage(Stage::Invert).unwrap();
        // Tampering with an upstream output invalidates everything after it.
        fs::write(dir.path().join("observed.csv"), "x_0\n1\n").unwrap();
        let missing = exp.missing_prerequisites(Stage::Invert);
        assert_eq!(missing.first(), Some(&Stage::Simulate));
    }

    #[test]
    fn pipeline_reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            let mut cfg = ExperimentConfig::from_toml_str(&mvg_toml(d.path())).unwrap();
            cfg.output_dir = None;
            let mut exp = Experiment::open(cfg, d.path().to_path_buf()).unwrap();
            exp.run_pipeline().unwrap();
        }
        for f in ["observed.csv", "cutoffs.csv", "confidence_set.csv", "coverage.csv", "interval.json", MANIFEST_FILE] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let exp = Experiment::open(
            ExperimentConfig { output_dir: None, ..ExperimentConfig::from_toml_str(&mvg_toml(a.path())).unwrap() },
            a.path().to_path_buf(),
        )
        .unwrap();
        for s in [Stage::Simulate, Stage::TrainOdds, Stage::Calibrate, Stage::Invert, Stage::Diagnose] {
            assert!(exp.stage_is_intact(s), "{s:?}");
        }
        let checks = exp.check().unwrap();
        assert_eq!(checks.len(), 2);
    }

    #[test]
    fn dry_run_shrinks_budgets() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(&mvg_toml(dir.path())).unwrap().dry_run();
        cfg.validate().unwrap();
        assert_eq!(cfg.calibration.b_prime, MIN_CALIBRATION_SIZE);
        assert_eq!(cfg.diagnostics.b_double_prime, MIN_CALIBRATION_SIZE);
    }

    #[test]
    fn identical_candidates_resolve_to_the_first() {
        let sim = crate::simulators::IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let qda = ClassifierSpec::default();
        let r = select_model(&sim, &[qda.clone(), qda], &[400], 500, 0.5, SeedStream::new(3), Execution::Parallel).unwrap();
        assert_eq!(r.rows[0].ce_loss, r.rows[1].ce_loss);
        assert_eq!(r.chosen, 0);
    }

    #[test]
    fn qda_beats_misspecified_logistic_on_mvg() {
        let sim = crate::simulators::IsotropicGaussian::new(2, -5.0, 5.0).unwrap();
        let cands = [ClassifierSpec::Logistic { degree: 1, ridge: 1e-6 }, ClassifierSpec::default()];
        let r = select_model(&sim, &cands, &[500, 2000, 8000], 4000, 0.5, SeedStream::new(4), Execution::Parallel).unwrap();
        assert_eq!(r.chosen, 1, "{:?}", r.rows);
        let qda: Vec<f64> = r.rows.iter().filter(|x| x.candidate == 1).map(|x| x.ce_loss).collect();
        // Monotone in B within two standard errors.
        for w in r.rows.iter().filter(|x| x.candidate == 1).collect::<Vec<_>>().windows(2) {
            assert!(w[1].ce_loss <= w[0].ce_loss + 2.0 * w[1].ce_se, "{qda:?}");
        }
    }

    #[test]
    fn exact_statistic_baselines() {
        let sim = crate::simulators::IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let stat = ExactLrtMvg::new(1);
        let cal = CalibrationConfig { b_prime: 2000, mc_draws: 500, ..CalibrationConfig::default() };
        let grid = Grid::lattice(&[-4.0], &[4.0], 3);
        let rows = compare_baselines(&sim, &stat, true, 0.1, 10, &cal, &grid, 400, SeedStream::new(5), Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 9);
        for r in &rows {
            assert!((r.coverage - 0.9).abs() < 4.0 * 0.015 + 0.03, "{r:?}");
        }
        let mut buf = Vec::new();
        write_baselines_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("theta_0,method,coverage,se\n-4,monte-carlo,"));
    }
}
