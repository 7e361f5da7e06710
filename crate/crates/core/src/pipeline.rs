//! End-to-end experiment driver: train a black box, fit local explainers,
//! sweep the aggregation over budgets and fidelity floors, and emit
//! plot-ready series. Every stage reads and writes files in a run directory
//! whose name is derived from the configuration, so stages can be re-run
//! independently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    build_ip, build_pool, export_lp, solve_exact, solve_greedy, verify_solution, AggregateSolution, SolveStatus,
    SolverOptions,
};
use crate::blackbox::{train_bagged_forest, BlackBoxModel, DEFAULT_TREES};
use crate::data::{load_dataset, standardize, Dataset, FeatureSchema, SynthSpec, LABEL_COLUMN};
use crate::error::{Error, Result};
use crate::explainer::{explainers_to_rules, train_local_explainer, ExplainerParams, LocalExplainer, TreeParams};
use crate::fffs::{FffsConfig, DEFAULT_BINS, DEFAULT_EPS_MI};
use crate::io::{read_json, read_to_string, sha256_hex, write_atomic, write_json};
use crate::rng::{derive_seed, stream};
use crate::sampler::DEFAULT_SAMPLES;

/// Environment variable that replaces the configured root seed.
pub const SEED_ENV: &str = "AGGREX_SEED";

pub const MODEL_FILE: &str = "model.txt";
pub const DATASET_FILE: &str = "dataset.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const EXPLAINERS_FILE: &str = "explainers.json";
pub const EXPLAINER_SUMMARY_FILE: &str = "explainers.csv";
pub const RULES_FILE: &str = "rules.txt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_DIR: &str = "report";
pub const SOLUTIONS_DIR: &str = "solutions";
pub const LP_DIR: &str = "lp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub m_cont: usize,
    pub m_bin: usize,
    pub classes: usize,
    pub relevant: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Names of binary columns when loading from `path`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub binary: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackBoxConfig {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
}

fn default_trees() -> usize {
    DEFAULT_TREES
}

impl Default for BlackBoxConfig {
    fn default() -> Self {
        Self { n_trees: DEFAULT_TREES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub radii: Vec<f64>,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerMode {
    Filtered,
    Unfiltered,
}

impl ExplainerMode {
    pub fn name(self) -> &'static str {
        match self {
            ExplainerMode::Filtered => "filtered",
            ExplainerMode::Unfiltered => "unfiltered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FffsSettings {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_eps")]
    pub eps_mi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<ExplainerMode>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_eps() -> f64 {
    DEFAULT_EPS_MI
}
fn default_modes() -> Vec<ExplainerMode> {
    vec![ExplainerMode::Filtered]
}

impl Default for FffsSettings {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            eps_mi: DEFAULT_EPS_MI,
            max_features: None,
            modes: default_modes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainerConfig {
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    /// Dataset indices to center explainers at; all points when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<usize>>,
}

fn default_depth() -> usize {
    TreeParams::default().max_depth
}
fn default_min_leaf() -> usize {
    TreeParams::default().min_leaf
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            max_depth: default_depth(),
            min_leaf: default_min_leaf(),
            centers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Exact,
    Greedy,
    Both,
}

impl SolverChoice {
    fn names(self) -> &'static [&'static str] {
        match self {
            SolverChoice::Exact => &["exact"],
            SolverChoice::Greedy => &["greedy"],
            SolverChoice::Both => &["exact", "greedy"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateConfig {
    pub budgets: Vec<usize>,
    pub phis: Vec<f64>,
    #[serde(default = "default_solver")]
    pub solver: SolverChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_limit: Option<u64>,
    /// Which explainer set forms the candidate pool.
    #[serde(default = "default_pool_mode")]
    pub mode: ExplainerMode,
    #[serde(default)]
    pub export_lp: bool,
}

fn default_solver() -> SolverChoice {
    SolverChoice::Both
}
fn default_pool_mode() -> ExplainerMode {
    ExplainerMode::Filtered
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub blackbox: BlackBoxConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub fffs: FffsSettings,
    #[serde(default)]
    pub explainer: ExplainerConfig,
    pub aggregate: AggregateConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative data and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = cfg.data.path.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.data.path, &self.data.synth) {
            (Some(_), Some(_)) => return bad("data.path and data.synth are mutually exclusive".into()),
            (None, None) => return bad("one of data.path or data.synth is required".into()),
            _ => {}
        }
        if self.blackbox.n_trees == 0 {
            return bad("blackbox.n_trees must be at least 1".into());
        }
        if self.sampler.samples < 2 {
            return bad("sampler.samples must be at least 2".into());
        }
        if self.sampler.radii.is_empty() {
            return bad("sampler.radii must not be empty".into());
        }
        if let Some(r) = self.sampler.radii.iter().find(|r| **r < 0.0 || !r.is_finite()) {
            return bad(format!("radius {r} must be finite and >= 0"));
        }
        if self.fffs.bins < 2 {
            return bad("fffs.bins must be at least 2".into());
        }
        if self.fffs.modes.is_empty() {
            return bad("fffs.modes must not be empty".into());
        }
        if self.explainer.max_depth == 0 || self.explainer.min_leaf == 0 {
            return bad("explainer.max_depth and explainer.min_leaf must be at least 1".into());
        }
        if self.aggregate.budgets.is_empty() {
            return bad("aggregate.budgets must not be empty".into());
        }
        if self.aggregate.phis.is_empty() {
            return bad("aggregate.phis must not be empty".into());
        }
        if let Some(p) = self.aggregate.phis.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("fidelity floor {p} outside [0, 1]"));
        }
        if !self.fffs.modes.contains(&self.aggregate.mode) {
            return bad(format!(
                "aggregate.mode `{}` is not among fffs.modes",
                self.aggregate.mode.name()
            ));
        }
        Ok(())
    }

    /// Stable identifier of the run: a prefix of the config's hash.
    pub fn run_id(&self) -> Result<String> {
        Ok(format!("run-{}", &sha256_hex(self.to_toml()?.as_bytes())[..12]))
    }

    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.output_dir.join(self.run_id()?))
    }

    fn explainer_params(&self) -> ExplainerParams {
        ExplainerParams {
            samples: self.sampler.samples,
            fffs: FffsConfig {
                bins: self.fffs.bins,
                eps_mi: self.fffs.eps_mi,
                max_features: self.fffs.max_features,
            },
            tree: TreeParams {
                max_depth: self.explainer.max_depth,
                min_leaf: self.explainer.min_leaf,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub config: ExperimentConfig,
    /// sha256 of every deterministic output, keyed by path relative to the
    /// run directory.
    pub files: BTreeMap<String, String>,
}

/// Handle on one run directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
}

impl Run {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dir = config.run_dir()?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let run = Self { config, dir };
        run.write_file("config.toml", run.config.to_toml()?.as_bytes())?;
        Ok(run)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(rel), bytes)
    }

    fn require(&self, rels: &[&str]) -> Result<()> {
        let missing: Vec<String> = rels
            .iter()
            .map(|r| self.path(r))
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingInputs(missing))
        }
    }

    /// Rewrites the manifest with hashes of all deterministic outputs present.
    pub fn update_manifest(&self) -> Result<()> {
        let mut files = BTreeMap::new();
        collect_hashes(&self.dir, &self.dir, &mut files)?;
        let manifest = Manifest {
            run_id: self.config.run_id()?,
            config: self.config.clone(),
            files,
        };
        write_json(&self.path(MANIFEST_FILE), &manifest)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        self.require(&[DATASET_FILE, SCHEMA_FILE])?;
        let schema: FeatureSchema = read_json(&self.path(SCHEMA_FILE))?;
        load_dataset(&self.path(DATASET_FILE), &schema)
    }

    pub fn load_model(&self) -> Result<BlackBoxModel> {
        self.require(&[MODEL_FILE])?;
        BlackBoxModel::load(&self.path(MODEL_FILE))
    }

    pub fn load_bundle(&self) -> Result<ExplainerBundle> {
        self.require(&[EXPLAINERS_FILE])?;
        read_json(&self.path(EXPLAINERS_FILE))
    }
}

fn collect_hashes(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        let name = e.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || name == MANIFEST_FILE || name == TIMINGS_FILE {
            continue;
        }
        if p.is_dir() {
            collect_hashes(root, &p, out)?;
        } else {
            let bytes = std::fs::read(&p).map_err(|err| Error::io(&p, err))?;
            let rel = p
                .strip_prefix(root)
                .expect("under root")
                .to_string_lossy()
                .replace('\\', "/");
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(())
}

fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                row: 0,
                message: format!("{other:?}"),
            },
        })?;
    let header = reader.headers().map_err(|e| Error::Parse {
        row: 0,
        message: e.to_string(),
    })?;
    Ok(header
        .iter()
        .filter(|h| *h != LABEL_COLUMN)
        .map(str::to_string)
        .collect())
}

/// Loads or generates the dataset described by the config.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = match (&cfg.data.path, &cfg.data.synth) {
        (Some(path), None) => {
            let schema = FeatureSchema::with_binary(csv_header(path)?, &cfg.data.binary)?;
            load_dataset(path, &schema)?
        }
        (None, Some(s)) => SynthSpec {
            seed: cfg.seed,
            n: s.n,
            m_cont: s.m_cont,
            m_bin: s.m_bin,
            classes: s.classes,
            relevant: s.relevant.clone(),
        }
        .generate()?,
        _ => return Err(Error::Config("one of data.path or data.synth is required".into())),
    };
    if cfg.data.standardize {
        let s = standardize(&d)?;
        for w in s.warnings() {
            log::warn!("{w}");
        }
        Ok(s)
    } else {
        Ok(d)
    }
}

/// Trains the black box and stores it with the (possibly standardized)
/// dataset it was trained on.
pub fn cmd_train(run: &Run) -> Result<PathBuf> {
    let d = prepare_dataset(&run.config)?;
    log::info!("training {} trees on {} rows", run.config.blackbox.n_trees, d.n());
    let model = train_bagged_forest(&d, run.config.blackbox.n_trees, run.config.seed)?;
    d.write_csv(&run.path(DATASET_FILE))?;
    write_json(&run.path(SCHEMA_FILE), d.schema())?;
    if let Some(scaler) = d.scaler() {
        write_json(&run.path("scaler.json"), scaler)?;
    }
    let path = run.path(MODEL_FILE);
    model.save(&path)?;
    run.update_manifest()?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerRecord {
    pub mode: ExplainerMode,
    pub leaf_count: usize,
    pub explainer: LocalExplainer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerBundle {
    pub schema: FeatureSchema,
    pub records: Vec<ExplainerRecord>,
}

impl ExplainerBundle {
    pub fn of_mode(&self, mode: ExplainerMode) -> Vec<LocalExplainer> {
        self.records
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.explainer.clone())
            .collect()
    }
}

/// Fits one explainer per (center, radius, mode). Filtered and unfiltered
/// explainers at the same center and radius share their sample seed.
pub fn cmd_explain(run: &Run) -> Result<PathBuf> {
    let d = run.load_dataset()?;
    let f = run.load_model()?;
    let cfg = &run.config;
    let centers: Vec<usize> = match &cfg.explainer.centers {
        Some(c) => {
            if let Some(&bad) = c.iter().find(|&&i| i >= d.n()) {
                return Err(Error::Config(format!("explainer center {bad} out of range")));
            }
            c.clone()
        }
        None => (0..d.n()).collect(),
    };
    let params = cfg.explainer_params();
    let mut modes = cfg.fffs.modes.clone();
    modes.sort();
    modes.dedup();
    let n_radii = cfg.sampler.radii.len();
    let mut jobs: Vec<(usize, usize, ExplainerMode)> = Vec::new();
    for &c in &centers {
        for ri in 0..n_radii {
            jobs.extend(modes.iter().map(|&m| (c, ri, m)));
        }
    }
    log::info!("fitting {} explainers", jobs.len());
    let records: Vec<ExplainerRecord> = jobs
        .par_iter()
        .map(|&(c, ri, mode)| {
            let seed = derive_seed(cfg.seed, stream::SAMPLER, (c * n_radii + ri) as u64);
            let e = train_local_explainer(
                &f,
                d.schema(),
                c,
                d.row(c),
                cfg.sampler.radii[ri],
                mode == ExplainerMode::Filtered,
                &params,
                seed,
            )?;
            Ok(ExplainerRecord {
                mode,
                leaf_count: e.leaf_count(),
                explainer: e,
            })
        })
        .collect::<Result<_>>()?;
    let bundle = ExplainerBundle {
        schema: d.schema().clone(),
        records,
    };
    let path = run.path(EXPLAINERS_FILE);
    write_json(&path, &bundle)?;

    let mut summary = String::from("center,radius,mode,n_selected,selected,leaf_count,train_fidelity\n");
    for r in &bundle.records {
        let e = &r.explainer;
        let sel: Vec<String> = e.selected_features.iter().map(|f| f.to_string()).collect();
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            e.center_index,
            e.radius,
            r.mode.name(),
            e.selected_features.len(),
            sel.join(" "),
            r.leaf_count,
            e.train_fidelity
        );
    }
    run.write_file(EXPLAINER_SUMMARY_FILE, summary.as_bytes())?;
    let explainers: Vec<LocalExplainer> = bundle.records.iter().map(|r| r.explainer.clone()).collect();
    run.write_file(RULES_FILE, explainers_to_rules(&explainers, d.schema()).as_bytes())?;
    run.update_manifest()?;
    Ok(path)
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub phi: f64,
    pub solver: String,
    pub ip_coverage: usize,
    pub ball_coverage: usize,
    /// Minimum agreement rate over the claimed sets.
    pub min_fidelity: Option<f64>,
    pub ball_min_fidelity: Option<f64>,
    pub status: SolveStatus,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    pub rows: Vec<SweepRow>,
    pub sweep_path: PathBuf,
}

impl AggregateSummary {
    /// True when every cell with a positive budget found nothing feasible.
    pub fn all_infeasible(&self) -> bool {
        let active: Vec<&SweepRow> = self.rows.iter().filter(|r| r.k > 0).collect();
        !active.is_empty() && active.iter().all(|r| r.status == SolveStatus::Infeasible)
    }
}

fn solution_name(k: usize, phi: f64, solver: &str) -> String {
    format!("{SOLUTIONS_DIR}/K{k}_phi{phi}_{solver}.json")
}

/// Solves every (K, φ, solver) cell, verifies each solution, and writes
/// solution files, the sweep table, and wall-clock timings.
pub fn cmd_aggregate(run: &Run) -> Result<AggregateSummary> {
    let d = run.load_dataset()?;
    let f = run.load_model()?;
    let bundle = run.load_bundle()?;
    if bundle.schema != *d.schema() {
        return Err(Error::invalid(
            "explainer bundle schema differs from the dataset schema",
        ));
    }
    let cfg = &run.config.aggregate;
    let explainers = bundle.of_mode(cfg.mode);
    if explainers.is_empty() {
        return Err(Error::Config(format!("bundle has no `{}` explainers", cfg.mode.name())));
    }
    let pool = build_pool(&d, &explainers, &f)?;
    let opts = SolverOptions {
        node_limit: cfg.node_limit.or(SolverOptions::default().node_limit),
    };
    let mut cells = Vec::new();
    for &phi in &cfg.phis {
        for &k in &cfg.budgets {
            for &solver in cfg.solver.names() {
                cells.push((k, phi, solver));
            }
        }
    }
    if cfg.export_lp {
        for &phi in &cfg.phis {
            for &k in &cfg.budgets {
                let m = build_ip(&pool, k, phi)?;
                export_lp(&m, run.path(&format!("{LP_DIR}/K{k}_phi{phi}.lp")))?;
            }
        }
    }
    log::info!("solving {} cells over {} candidates", cells.len(), pool.n_candidates());
    let solved: Vec<AggregateSolution> = cells
        .par_iter()
        .map(|&(k, phi, solver)| {
            let sol = match solver {
                "exact" => solve_exact(&build_ip(&pool, k, phi)?, &pool, &opts)?,
                _ => solve_greedy(&pool, k, phi)?,
            };
            let violations = verify_solution(&sol, &pool, k, phi);
            if !violations.is_empty() {
                return Err(Error::Verification(format!(
                    "K={k} phi={phi} {solver}: {}",
                    violations.join("; ")
                )));
            }
            Ok(sol)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cells.len());
    let mut timings = String::from("K,phi,solver,wall_ms\n");
    for (&(k, phi, solver), sol) in cells.iter().zip(&solved) {
        let mut stored = sol.clone();
        stored.wall_time_ms = 0.0;
        write_json(&run.path(&solution_name(k, phi, solver)), &SolutionRecord::new(&stored))?;
        let _ = writeln!(timings, "{k},{phi},{solver},{:.3}", sol.wall_time_ms);
        rows.push(SweepRow {
            k,
            phi,
            solver: solver.to_string(),
            ip_coverage: sol.ip_coverage,
            ball_coverage: sol.ball_coverage,
            min_fidelity: sol.claimed_min_fidelity,
            ball_min_fidelity: sol.ball_min_fidelity,
            status: sol.status,
            nodes: sol.nodes_explored,
        });
    }
    let sweep_path = run.path(SWEEP_FILE);
    write_atomic(&sweep_path, &sweep_csv(&rows)?)?;
    run.write_file(TIMINGS_FILE, timings.as_bytes())?;
    run.update_manifest()?;
    Ok(AggregateSummary { rows, sweep_path })
}

/// Solution file contents; wall time lives in the timings table so that
/// solution files stay reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub selected: Vec<usize>,
    pub z_assignment: Vec<crate::aggregate::Claim>,
    pub ip_coverage: usize,
    pub ball_coverage: usize,
    pub claimed_min_fidelity: Option<f64>,
    pub ball_min_fidelity: Option<f64>,
    pub status: SolveStatus,
    pub nodes_explored: u64,
}

impl SolutionRecord {
    fn new(s: &AggregateSolution) -> Self {
        Self {
            selected: s.selected.clone(),
            z_assignment: s.z_assignment.clone(),
            ip_coverage: s.ip_coverage,
            ball_coverage: s.ball_coverage,
            claimed_min_fidelity: s.claimed_min_fidelity,
            ball_min_fidelity: s.ball_min_fidelity,
            status: s.status,
            nodes_explored: s.nodes_explored,
        }
    }
}

fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Serde(e.to_string()))
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Runs train, explain and aggregate in order.
pub fn cmd_sweep(run: &Run) -> Result<AggregateSummary> {
    cmd_train(run)?;
    cmd_explain(run)?;
    let summary = cmd_aggregate(run)?;
    cmd_report(&run.dir)?;
    run.update_manifest()?;
    Ok(summary)
}

/// Plot-data files derived from the sweep table: one long-format CSV per
/// metric with columns `series,x,y`, one series per (solver, φ).
pub fn cmd_report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let sweep = run_dir.join(SWEEP_FILE);
    if !sweep.exists() {
        return Err(Error::MissingInputs(vec![sweep.display().to_string()]));
    }
    let rows = read_sweep(&sweep)?;
    type Metric = fn(&SweepRow) -> Option<f64>;
    let metrics: [(&str, Metric); 4] = [
        ("coverage", |r| Some(r.ip_coverage as f64)),
        ("ball_coverage", |r| Some(r.ball_coverage as f64)),
        ("fidelity", |r| r.min_fidelity),
        ("ball_fidelity", |r| r.ball_min_fidelity),
    ];
    let mut written = Vec::new();
    for (name, metric) in metrics {
        let mut series: BTreeMap<(String, u64), BTreeMap<usize, f64>> = BTreeMap::new();
        let mut phis: BTreeMap<u64, f64> = BTreeMap::new();
        for r in &rows {
            // order φ numerically via its bit pattern (all values are >= 0)
            let key = (r.solver.clone(), r.phi.to_bits());
            phis.insert(r.phi.to_bits(), r.phi);
            let entry = series.entry(key).or_default();
            if let Some(y) = metric(r) {
                entry.insert(r.k, y);
            }
        }
        let mut out = String::from("series,x,y\n");
        for ((solver, phi_bits), points) in &series {
            for (x, y) in points {
                let _ = writeln!(out, "{solver}_phi{},{x},{y}", phis[phi_bits]);
            }
        }
        let path = run_dir.join(REPORT_DIR).join(format!("{name}.csv"));
        write_atomic(&path, out.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
