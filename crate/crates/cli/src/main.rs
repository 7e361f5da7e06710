use std::path::PathBuf;
use std::process::ExitCode;

use aggrex::error::Error;
use aggrex::pipeline::{
    cmd_aggregate, cmd_explain, cmd_report, cmd_sweep, cmd_train, AggregateSummary, ExperimentConfig, ExplainerMode,
    Run, SolverChoice, SEED_ENV,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Local surrogate explainers and their budgeted aggregation.
#[derive(Parser, Debug)]
#[command(name = "aggrex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train and serialize the black-box model.
    Train(Overrides),
    /// Fit one local explainer per center and radius.
    Explain(Overrides),
    /// Solve every (K, phi, solver) cell and write the sweep table.
    Aggregate(Overrides),
    /// Run train, explain, aggregate and report in order.
    Sweep(Overrides),
    /// Write plot-data series from a run directory's sweep table.
    Report {
        /// Run directory holding sweep.csv.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        run_dir: Option<PathBuf>,
        /// Config whose run directory to use.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Exact,
    Greedy,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Filtered,
    Unfiltered,
}

impl From<Mode> for ExplainerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Filtered => ExplainerMode::Filtered,
            Mode::Unfiltered => ExplainerMode::Unfiltered,
        }
    }
}

/// Every flag mirrors a config key and wins over it.
#[derive(Args, Debug)]
struct Overrides {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Root seed.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// blackbox.n_trees
    #[arg(long)]
    n_trees: Option<usize>,
    /// sampler.samples
    #[arg(long)]
    samples: Option<usize>,
    /// sampler.radii
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// fffs.bins
    #[arg(long)]
    bins: Option<usize>,
    /// fffs.eps_mi
    #[arg(long)]
    eps_mi: Option<f64>,
    /// fffs.max_features
    #[arg(long)]
    max_features: Option<usize>,
    /// fffs.modes
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<Mode>>,
    /// explainer.max_depth
    #[arg(long)]
    max_depth: Option<usize>,
    /// explainer.min_leaf
    #[arg(long)]
    min_leaf: Option<usize>,
    /// aggregate.budgets
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    /// aggregate.phis
    #[arg(long, value_delimiter = ',')]
    phis: Option<Vec<f64>>,
    /// aggregate.solver
    #[arg(long)]
    solver: Option<Solver>,
    /// aggregate.node_limit
    #[arg(long)]
    node_limit: Option<u64>,
    /// aggregate.mode
    #[arg(long)]
    pool_mode: Option<Mode>,
    /// aggregate.export_lp
    #[arg(long)]
    export_lp: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut c = ExperimentConfig::load(&self.config)?;
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.n_trees {
            c.blackbox.n_trees = v;
        }
        if let Some(v) = self.samples {
            c.sampler.samples = v;
        }
        if let Some(v) = &self.radii {
            c.sampler.radii = v.clone();
        }
        if let Some(v) = self.bins {
            c.fffs.bins = v;
        }
        if let Some(v) = self.eps_mi {
            c.fffs.eps_mi = v;
        }
        if self.max_features.is_some() {
            c.fffs.max_features = self.max_features;
        }
        if let Some(v) = &self.modes {
            c.fffs.modes = v.iter().map(|&m| m.into()).collect();
        }
        if let Some(v) = self.max_depth {
            c.explainer.max_depth = v;
        }
        if let Some(v) = self.min_leaf {
            c.explainer.min_leaf = v;
        }
        if let Some(v) = &self.budgets {
            c.aggregate.budgets = v.clone();
        }
        if let Some(v) = &self.phis {
            c.aggregate.phis = v.clone();
        }
        if let Some(v) = self.solver {
            c.aggregate.solver = match v {
                Solver::Exact => SolverChoice::Exact,
                Solver::Greedy => SolverChoice::Greedy,
                Solver::Both => SolverChoice::Both,
            };
        }
        if self.node_limit.is_some() {
            c.aggregate.node_limit = self.node_limit;
        }
        if let Some(v) = self.pool_mode {
            c.aggregate.mode = v.into();
        }
        if self.export_lp {
            c.aggregate.export_lp = true;
        }
        c.validate()?;
        Ok(c)
    }

    fn run(&self) -> Result<Run, Error> {
        Run::new(self.resolve()?)
    }
}

fn print_summary(s: &AggregateSummary) {
    println!("K\tphi\tsolver\tip_cov\tball_cov\tmin_fid\tstatus");
    for r in &s.rows {
        let fid = r.min_fidelity.map_or("-".to_string(), |f| format!("{f:.4}"));
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.k, r.phi, r.solver, r.ip_coverage, r.ball_coverage, fid, r.status
        );
    }
    println!("sweep table: {}", s.sweep_path.display());
}

fn aggregate_exit(s: &AggregateSummary) -> u8 {
    print_summary(s);
    if s.all_infeasible() {
        eprintln!("error: no cell admits a feasible nonempty aggregate");
        EXIT_INFEASIBLE
    } else {
        0
    }
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train(o) => {
            let run = o.run()?;
            println!("{}", cmd_train(&run)?.display());
            Ok(0)
        }
        Command::Explain(o) => {
            let run = o.run()?;
            println!("{}", cmd_explain(&run)?.display());
            Ok(0)
        }
        Command::Aggregate(o) => Ok(aggregate_exit(&cmd_aggregate(&o.run()?)?)),
        Command::Sweep(o) => {
            let run = o.run()?;
            let code = aggregate_exit(&cmd_sweep(&run)?);
            println!("run directory: {}", run.dir.display());
            Ok(code)
        }
        Command::Report { run_dir, config } => {
            let dir = match (run_dir, config) {
                (Some(d), _) => d,
                (None, Some(c)) => {
                    let mut cfg = ExperimentConfig::load(&c)?;
                    cfg.apply_env()?;
                    cfg.run_dir()?
                }
                (None, None) => unreachable!("clap requires one of the two"),
            };
            for p in cmd_report(&dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}
