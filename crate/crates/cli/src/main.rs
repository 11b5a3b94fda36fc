//! `spde`: bound evaluation, simulation and bound-vs-simulation comparison.
//!
//! Exit codes: 0 success, 1 comparison or verification failure, 2 spec error,
//! 3 numeric or hypothesis error.

mod spec;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spde_bounds::bounds::{scenario_preset, InitialCondition, PRESET_NAMES};
use spde_bounds::sim::{
    compare_to_bound, simulate, simulate_with_threads, summary_rows, write_csv, write_manifest, write_sspd, Manifest,
    PathEnsemble, SimConfig, Site,
};
use spde_bounds::verify::{run_suite, Check};

use spec::{grid, parse_list, BoundTarget, ExperimentSpec};

#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent input: exit 2.
    Spec(String),
    /// Hypothesis violations and numerical breakdowns: exit 3.
    Numeric(String),
    /// A comparison or verification that ran but did not pass: exit 1.
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Spec(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Spec(m) | CliError::Numeric(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<spde_bounds::Error> for CliError {
    fn from(e: spde_bounds::Error) -> Self {
        use spde_bounds::Error as E;
        match e {
            E::Config(_) | E::Domain(_) | E::Unsupported(_) | E::Io(_) => CliError::Spec(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Spec(format!("i/o error: {e}"))
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "spde", version, about = "Moment bounds and Monte Carlo checks for SPDEs with sublinear diffusion")]
struct Cli {
    /// Experiment file (TOML); command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the moment bound on a (t, x, p) grid.
    Bound {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated x grid.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Simulate the preset (or the configured problem) and write statistics.
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        paths: Option<usize>,
        /// Comma-separated tail thresholds z.
        #[arg(long)]
        z: Option<String>,
        /// Number of paths whose snapshot fields go to raw.sspd.
        #[arg(long, default_value_t = 0)]
        dump: usize,
    },
    /// Compare simulated moments with the fitted bound; exits 1 on any FAIL.
    Compare {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Run the oracle suites.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// List the presets.
    Presets,
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    ell: Option<f64>,
    /// Comma-separated time grid.
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    /// Comma-separated moment orders.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Envelope,
    Gmm,
    Kernels,
    Noise,
    All,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Envelope => "envelope",
            Suite::Gmm => "gmm",
            Suite::Kernels => "kernels",
            Suite::Noise => "noise",
            Suite::All => "all",
        }
    }
}

fn list(flag: &str, s: &str) -> Result<Vec<f64>> {
    parse_list(s).map_err(|e| CliError::Spec(format!("--{flag}: {e}")))
}

/// Merges the experiment file with the command-line flags.
fn load_spec(cli: &Cli, problem: &ProblemArgs) -> Result<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(p) = &problem.preset {
        spec.preset = Some(p.clone());
    }
    let ov = &mut spec.overrides;
    for (slot, v) in [
        (&mut ov.alpha, problem.alpha),
        (&mut ov.beta, problem.beta),
        (&mut ov.kappa, problem.kappa),
        (&mut ov.b, problem.b),
        (&mut ov.ell, problem.ell),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    if let Some(t) = &problem.t {
        spec.t = Some(list("t", t)?);
    }
    if let Some(p) = &problem.p {
        spec.p = Some(list("p", p)?);
    }
    if let Some(s) = cli.seed {
        spec.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        spec.out = Some(o.clone());
    }
    // A single --p also sets the preset's own order.
    if let Some([p]) = spec.p.as_deref() {
        spec.overrides.p.get_or_insert(*p);
    }
    Ok(spec)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Spec(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_bound(cli: &Cli, problem: &ProblemArgs, x: Option<&str>, format: Format) -> Result<()> {
    let spec = load_spec(cli, problem)?;
    let target = BoundTarget::new(&spec)?;
    let ts = grid("t", &spec.t.clone().unwrap_or_else(|| target.default_times()))?;
    let xs = match x {
        Some(s) => grid("x", &list("x", s)?)?,
        None => grid("x", &spec.x.clone().unwrap_or_else(|| vec![target.default_x()]))?,
    };
    let ps = grid("p", &spec.p.clone().unwrap_or_else(|| vec![target.default_p()]))?;
    let mut reports = Vec::with_capacity(ts.len() * xs.len() * ps.len());
    for &t in &ts {
        for &x in &xs {
            for &p in &ps {
                reports.push(target.evaluate(t, x, p, &spec.constants)?);
            }
        }
    }
    let mut text = Vec::new();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut text);
            for r in &reports {
                w.serialize(r).map_err(|e| CliError::Spec(e.to_string()))?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut text, &reports).map_err(|e| CliError::Spec(e.to_string()))?;
            text.push(b'\n');
        }
    }
    if let Some(dir) = &spec.out {
        create_out(dir)?;
        let name = match format {
            Format::Csv => "bound.csv",
            Format::Json => "bound.json",
        };
        std::fs::write(dir.join(name), &text)?;
    }
    std::io::stdout().write_all(&text)?;
    Ok(())
}

/// The simulation configuration: the file's `[simulation]` table, or the desk
/// configuration of the preset.
fn sim_config(spec: &ExperimentSpec, paths: Option<usize>, default_paths: usize) -> Result<SimConfig> {
    let seed = spec.seed.unwrap_or(0);
    let mut cfg = match &spec.simulation {
        Some(c) => c.clone(),
        None => SimConfig::desk(&spec.scenario()?, spec.paths.unwrap_or(default_paths), seed)?,
    };
    if let Some(p) = paths {
        cfg.paths = p;
    }
    if spec.seed.is_some() {
        cfg.seed = seed;
    }
    if let Some(ts) = &spec.t {
        cfg.snapshots = grid("t", ts)?;
        cfg.horizon = *cfg.snapshots.last().expect("non-empty grid");
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &SimConfig, threads: Option<usize>) -> Result<PathEnsemble> {
    let ens = match threads {
        Some(k) => simulate_with_threads(cfg, k)?,
        None => simulate(cfg)?,
    };
    if !ens.aborted.is_empty() {
        eprintln!("warning: {} of {} paths blew up and were dropped", ens.aborted.len(), cfg.paths);
    }
    Ok(ens)
}

fn flat_init(cfg: &SimConfig) -> bool {
    cfg.init.build().map(|i| matches!(i, InitialCondition::Constant { .. })).unwrap_or(false)
}

fn cmd_simulate(cli: &Cli, problem: &ProblemArgs, paths: Option<usize>, z: Option<&str>, dump: usize) -> Result<()> {
    let spec = load_spec(cli, problem)?;
    let mut cfg = sim_config(&spec, paths, 1000)?;
    cfg.dump_paths = dump;
    let ps = match &spec.p {
        Some(p) => grid("p", p)?,
        None => cfg.moment_orders.clone(),
    };
    let zs = match z.map(|s| list("z", s)).transpose()?.or_else(|| spec.z.clone()) {
        Some(z) => grid("z", &z)?,
        None => vec![1.0, 2.0, 3.0, 4.0],
    };
    let out = spec.out.clone().unwrap_or_else(|| PathBuf::from("spde-out"));
    create_out(&out)?;
    let ens = run(&cfg, cli.threads)?;
    let pooled = flat_init(&cfg) && cfg.moment_orders.contains(&2.0) && ps.iter().all(|p| cfg.moment_orders.contains(p));
    let rows = summary_rows(&ens, &ps, &zs, if pooled { Site::Pooled } else { Site::Center })?;
    let mut files = vec!["stats.csv".to_string()];
    write_csv(&out.join("stats.csv"), &rows)?;
    if dump > 0 {
        write_sspd(&out.join("raw.sspd"), &ens)?;
        files.push("raw.sspd".into());
    }
    write_manifest(&out.join("manifest.json"), &Manifest::new(&ens, files))?;
    println!("{} live paths, {} rows -> {}", ens.live_paths(), rows.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct VerdictRow {
    t: f64,
    p: f64,
    empirical: f64,
    se: f64,
    bound: Option<f64>,
    fitted: Option<f64>,
    saturated: bool,
    verdict: &'static str,
}

fn cmd_compare(cli: &Cli, problem: &ProblemArgs, paths: Option<usize>) -> Result<()> {
    let spec = load_spec(cli, problem)?;
    if spec.problem.is_some() {
        return Err(CliError::Spec("compare needs a preset".into()));
    }
    let scenario = spec.scenario()?;
    let cfg = sim_config(&spec, paths, 10_000)?;
    let ps = grid("p", &spec.p.clone().unwrap_or_else(|| vec![scenario.p]))?;
    let ens = run(&cfg, cli.threads)?;
    let mut rows = Vec::new();
    for &p in &ps {
        for r in compare_to_bound(&ens, &scenario, p, &spec.constants)? {
            let verdict = match (r.fitted, r.pass) {
                (None, _) => "N/A",
                (Some(_), true) => "PASS",
                (Some(_), false) => "FAIL",
            };
            rows.push(VerdictRow { t: r.t, p, empirical: r.empirical, se: r.se, bound: r.bound, fitted: r.fitted, saturated: r.saturated, verdict });
        }
    }
    let mut text = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut text);
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Spec(e.to_string()))?;
        }
        w.flush()?;
    }
    if let Some(dir) = &spec.out {
        create_out(dir)?;
        std::fs::write(dir.join("compare.csv"), &text)?;
        write_manifest(&dir.join("manifest.json"), &Manifest::new(&ens, vec!["compare.csv".into()]))?;
    }
    std::io::stdout().write_all(&text)?;
    let failed = rows.iter().filter(|r| r.verdict == "FAIL").count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} grid points FAIL", rows.len())));
    }
    Ok(())
}

fn cmd_verify(cli: &Cli, suite: Suite) -> Result<()> {
    let checks: Vec<Check> = run_suite(suite.name(), cli.seed.unwrap_or(0))?;
    for c in &checks {
        println!("{} [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failures", checks.len());
    if let Some(dir) = &cli.out {
        create_out(dir)?;
        let s = serde_json::to_string_pretty(&checks).map_err(|e| CliError::Spec(e.to_string()))?;
        std::fs::write(dir.join("verify.json"), s + "\n")?;
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} checks failed")));
    }
    Ok(())
}

fn cmd_presets() -> Result<()> {
    for name in PRESET_NAMES {
        let s = scenario_preset(name, &Default::default())?;
        println!("{name:<22} {:<11} {}", s.equation.tag(), s.predicted);
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Bound { problem, x, format } => cmd_bound(cli, problem, x.as_deref(), *format),
        Command::Simulate { problem, paths, z, dump } => cmd_simulate(cli, problem, *paths, z.as_deref(), *dump),
        Command::Compare { problem, paths } => cmd_compare(cli, problem, *paths),
        Command::Verify { suite } => cmd_verify(cli, *suite),
        Command::Presets => cmd_presets(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
