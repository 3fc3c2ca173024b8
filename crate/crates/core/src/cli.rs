//! Command-line front end: `fit`, `simulate` and `report`.

use crate::error::{Error, Result};
use crate::fit::{fit_ls, fit_multiclass, fit_singleclass, Estimator, FitOptions};
use crate::io::{export_fit, load_fit, load_panel_csv, Config, CsvOptions};
use crate::jgl::LogDetWeight;
use crate::report::{cluster_report, network_export, similarity_matrix, CoefficientSubset, DEFAULT_TAU};
use crate::simulation::{run_study, DesignVariant, SimulationDesign, StudyOptions, StudyResult};
use crate::tuning::{GridAxis, RegularizationGrid};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mcvar", version, about = "Sparse multi-class vector autoregression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a panel CSV file.
    Fit(FitArgs),
    /// Run the Monte Carlo study for one design.
    Simulate(SimulateArgs),
    /// Diagnostics of a saved fit.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Ls,
    SingleClass,
    MultiClass,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Ls => Estimator::LeastSquares,
            EstimatorArg::SingleClass => Estimator::SingleClass,
            EstimatorArg::MultiClass => Estimator::MultiClass,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightArg {
    SeriesCount,
    Likelihood,
}

impl From<WeightArg> for LogDetWeight {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::SeriesCount => LogDetWeight::SeriesCount,
            WeightArg::Likelihood => LogDetWeight::Likelihood,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DesignArg {
    VaryingBeta,
    VaryingSigma,
    VaryingBoth,
}

impl From<DesignArg> for DesignVariant {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::VaryingBeta => DesignVariant::VaryingBeta,
            DesignArg::VaryingSigma => DesignVariant::VaryingSigma,
            DesignArg::VaryingBoth => DesignVariant::VaryingBoth,
        }
    }
}

/// Settings shared by `fit` and `simulate`; each may also come from a config
/// file under the same name.
#[derive(Debug, Args)]
struct TuningArgs {
    /// Points per automatic penalty grid.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Explicit lambda1 values, comma separated.
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    gamma1: Option<String>,
    #[arg(long)]
    gamma2: Option<String>,
    /// Multiplier of log|Omega| in the criterion.
    #[arg(long, value_enum)]
    log_det_weight: Option<WeightArg>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    outer_tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// VAR order (default 1).
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Scale every series to unit variance before fitting.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    design: DesignArg,
    #[arg(long)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    /// Classes, series and time points, e.g. `15,10,100`.
    #[arg(long, value_parser = parse_scale)]
    scale: Option<(usize, usize, usize)>,
    /// Output directory for `study.json` and `runs.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Estimators to compare, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorArg>>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Subcommand)]
enum ReportKind {
    /// Groups of classes sharing an estimate, per coefficient.
    Clusters(ReportArgs),
    /// Directed effect network, Graphviz DOT or edge CSV.
    Network(ReportArgs),
    /// Shared-support proportions between classes.
    Similarity(ReportArgs),
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Merge tolerance for clusters.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// `lag=1;targets=a,b;sources=c,d`; each part optional, `*` for all.
    #[arg(long)]
    subset: Option<String>,
    /// `dot` or `csv` (network only).
    #[arg(long, default_value = "dot")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_scale(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("{e}"))?;
    match parts[..] {
        [k, j, t] => Ok((k, j, t)),
        _ => Err("expected K,J,T".into()),
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("{what}: `{v}` is not a number")))
        })
        .collect()
}

fn merged<V: std::str::FromStr + Clone>(flag: &Option<V>, config: &Config, key: &str) -> Result<Option<V>> {
    match flag {
        Some(v) => Ok(Some(v.clone())),
        None => config.get_parsed(key),
    }
}

fn build_grid(t: &TuningArgs, config: &Config) -> Result<RegularizationGrid<f64>> {
    let points = merged(&t.grid_points, config, "grid-points")?.unwrap_or(10);
    let axis = |flag: &Option<String>, key: &str| -> Result<GridAxis<f64>> {
        match flag.clone().or_else(|| config.get(key).map(str::to_string)) {
            Some(s) => Ok(GridAxis::Fixed(parse_list(&s, key)?)),
            None => Ok(GridAxis::Auto { points }),
        }
    };
    Ok(RegularizationGrid {
        lambda1: axis(&t.lambda1, "lambda1")?,
        lambda2: axis(&t.lambda2, "lambda2")?,
        gamma1: axis(&t.gamma1, "gamma1")?,
        gamma2: axis(&t.gamma2, "gamma2")?,
    })
}

fn log_det_weight(t: &TuningArgs, config: &Config, default: LogDetWeight) -> Result<LogDetWeight> {
    if let Some(w) = t.log_det_weight {
        return Ok(w.into());
    }
    match config.get("log-det-weight") {
        None => Ok(default),
        Some("series-count") => Ok(LogDetWeight::SeriesCount),
        Some("likelihood") => Ok(LogDetWeight::Likelihood),
        Some(other) => Err(Error::InvalidParameter(format!("log-det-weight: unknown value `{other}`"))),
    }
}

fn apply_tuning(opts: &mut FitOptions<f64>, t: &TuningArgs, config: &Config) -> Result<()> {
    if let Some(m) = merged(&t.max_outer, config, "max-outer")? {
        opts.max_outer = m;
    }
    if let Some(tol) = merged(&t.outer_tol, config, "outer-tol")? {
        opts.outer_tol = tol;
    }
    opts.admm.log_det_weight = log_det_weight(t, config, opts.admm.log_det_weight)?;
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    path.as_deref().map_or_else(|| Ok(Config::default()), Config::load)
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let panel = load_panel_csv(&a.input, &CsvOptions::default())?;
    let mut opts = FitOptions::<f64> {
        order: merged(&a.order, &config, "order")?.unwrap_or(1),
        standardize: a.standardize || config.get_parsed::<bool>("standardize")?.unwrap_or(false),
        ..Default::default()
    };
    apply_tuning(&mut opts, &a.tuning, &config)?;
    let grid = build_grid(&a.tuning, &config)?;
    let estimator = match a.estimator {
        Some(e) => e.into(),
        None => match config.get("estimator") {
            None | Some("multi-class") => Estimator::MultiClass,
            Some("single-class") => Estimator::SingleClass,
            Some("ls") => Estimator::LeastSquares,
            Some(other) => return Err(Error::InvalidParameter(format!("estimator: unknown value `{other}`"))),
        },
    };
    let threads = merged(&a.tuning.threads, &config, "threads")?;
    let fit = with_threads(threads, || match estimator {
        Estimator::LeastSquares => fit_ls(&panel, opts.order),
        Estimator::SingleClass => fit_singleclass(&panel, &grid, &opts),
        Estimator::MultiClass => fit_multiclass(&panel, &grid, &opts),
    })??;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    export_fit(&fit, &a.out)
}

/// Per-run records as CSV.
pub fn runs_csv(study: &StudyResult) -> String {
    let mut s = String::from("run,seed,estimator,maee,lambda1,lambda2,gamma1,gamma2,outer_iterations,converged,error\n");
    for r in &study.records {
        let num = |v: f64| if v.is_nan() { String::new() } else { format!("{v:e}") };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.run,
            r.seed,
            r.estimator.name(),
            r.maee.map_or(String::new(), |m| format!("{m:e}")),
            num(r.lambda1),
            num(r.lambda2),
            num(r.gamma1),
            num(r.gamma2),
            r.outer_iterations,
            r.converged,
            r.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
        );
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let design = match a.scale {
        Some((k, j, t)) => SimulationDesign::with_scale(a.design.into(), k, j, t)?,
        None => SimulationDesign::standard_scale(a.design.into()),
    };
    let mut options = StudyOptions::default();
    apply_tuning(&mut options.fit, &a.tuning, &config)?;
    options.grid = build_grid(&a.tuning, &config)?;
    if let Some(e) = &a.estimators {
        options.estimators = e.iter().map(|&x| x.into()).collect();
    }
    let threads = merged(&a.tuning.threads, &config, "threads")?;
    let study = with_threads(threads, || run_study(&design, a.runs, a.seed, &options))??;
    std::fs::create_dir_all(&a.out).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    let json = serde_json::to_string_pretty(&study).map_err(|e| Error::parse("study", e.to_string()))?;
    write(&a.out.join("study.json"), &(json + "\n"))?;
    write(&a.out.join("runs.csv"), &runs_csv(&study))?;
    for s in &study.summaries {
        println!("{:<13} MAEE {:.4}", s.estimator.name(), s.maee);
    }
    if !study.excluded_runs.is_empty() {
        eprintln!("warning: runs {:?} excluded after estimator failures", study.excluded_runs);
    }
    Ok(())
}

fn resolve_series(spec: &str, names: &[String]) -> Result<Vec<usize>> {
    if spec.trim() == "*" {
        return Ok((0..names.len()).collect());
    }
    spec.split(',')
        .map(|s| {
            let s = s.trim();
            names
                .iter()
                .position(|n| n == s)
                .or_else(|| s.parse::<usize>().ok().filter(|&i| i >= 1 && i <= names.len()).map(|i| i - 1))
                .ok_or_else(|| Error::InvalidParameter(format!("subset: unknown series `{s}`")))
        })
        .collect()
}

/// Parses `lag=1;targets=a,b;sources=c,d`. Without a lag, every lag is used
/// unless `default_lag` is given.
fn parse_subset(spec: Option<&str>, names: &[String], order: usize, default_lag: Option<usize>) -> Result<CoefficientSubset> {
    let mut lag = default_lag;
    let mut targets: Vec<usize> = (0..names.len()).collect();
    let mut sources = targets.clone();
    for part in spec.unwrap_or("").split(';').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("subset: expected key=value, got `{part}`")))?;
        match k.trim() {
            "lag" => {
                let p: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("subset: bad lag `{v}`")))?;
                if p == 0 || p > order {
                    return Err(Error::InvalidParameter(format!("subset: lag {p} outside 1..={order}")));
                }
                lag = Some(p - 1);
            }
            "targets" => targets = resolve_series(v, names)?,
            "sources" => sources = resolve_series(v, names)?,
            other => return Err(Error::InvalidParameter(format!("subset: unknown key `{other}`"))),
        }
    }
    let lags: Vec<usize> = match lag {
        Some(l) => vec![l],
        None => (0..order).collect(),
    };
    let mut positions = Vec::new();
    for l in lags {
        positions.extend_from_slice(CoefficientSubset::block(l, &targets, &sources).positions());
    }
    Ok(CoefficientSubset::from_positions(positions))
}

fn run_report(kind: &ReportKind) -> Result<()> {
    let (ReportKind::Clusters(a) | ReportKind::Network(a) | ReportKind::Similarity(a)) = kind;
    let fit = load_fit(&a.fit)?;
    let order = fit.beta.order();
    let text = match kind {
        ReportKind::Clusters(_) => {
            let r = cluster_report(&fit.beta, a.tau)?;
            let mut s = String::from("lag,target,source,group,value,classes\n");
            for p in &r.positions {
                for (g, grp) in p.groups.iter().enumerate() {
                    let members: Vec<&str> = grp.classes.iter().map(|&c| fit.class_names[c].as_str()).collect();
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{:e},{}",
                        p.lag + 1,
                        fit.series_names[p.target],
                        fit.series_names[p.source],
                        g + 1,
                        grp.value,
                        members.join(";")
                    );
                }
            }
            s
        }
        ReportKind::Network(_) => {
            let subset = parse_subset(a.subset.as_deref(), &fit.series_names, order, Some(0))?;
            let net = network_export(&fit.beta, &subset, &fit.class_names, &fit.series_names)?;
            match a.format.as_str() {
                "dot" => net.to_dot(),
                "csv" => net.to_csv(),
                other => return Err(Error::InvalidParameter(format!("format: expected dot or csv, got `{other}`"))),
            }
        }
        ReportKind::Similarity(_) => {
            let subset = parse_subset(a.subset.as_deref(), &fit.series_names, order, None)?;
            let m = similarity_matrix(&fit.beta, &subset, &fit.class_names)?;
            for &r in &m.empty_rows {
                eprintln!("warning: class `{}` has no nonzero effect in the subset", fit.class_names[r]);
            }
            m.to_csv()
        }
    };
    write(&a.out, &text)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn cli_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Report { kind } => run_report(kind),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
