//! Monte Carlo study: the three multi-class VAR(1) designs, estimation error
//! and paired comparisons between estimators.

use crate::error::{Error, Result};
use crate::fit::{fit_ls, fit_multiclass, fit_singleclass, Estimator, FitOptions, FitResult, Penalties};
use crate::jgl::LogDetWeight;
use crate::panel::{CoefficientSet, MultiClassPanel, PanelSpec};
use crate::tuning::RegularizationGrid;
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Steps simulated and discarded before recording.
pub const BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignVariant {
    /// Class-specific cross effects, common `Sigma = I/2`.
    VaryingBeta,
    /// Common coefficients, class-specific AR(1)-correlated errors.
    VaryingSigma,
    /// Coefficients of the first, errors of the second.
    VaryingBoth,
}

impl DesignVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "varying-beta" => Some(DesignVariant::VaryingBeta),
            "varying-sigma" => Some(DesignVariant::VaryingSigma),
            "varying-both" => Some(DesignVariant::VaryingBoth),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DesignVariant::VaryingBeta => "varying-beta",
            DesignVariant::VaryingSigma => "varying-sigma",
            DesignVariant::VaryingBoth => "varying-both",
        }
    }

    fn varying_beta(self) -> bool {
        !matches!(self, DesignVariant::VaryingSigma)
    }

    fn varying_sigma(self) -> bool {
        !matches!(self, DesignVariant::VaryingBeta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub variant: DesignVariant,
    pub spec: PanelSpec,
}

impl SimulationDesign {
    /// K = 15, J = 10, T = 100, P = 1.
    pub fn standard_scale(variant: DesignVariant) -> Self {
        SimulationDesign {
            variant,
            spec: PanelSpec {
                classes: 15,
                series: 10,
                time_len: 100,
                order: 1,
            },
        }
    }

    pub fn with_scale(variant: DesignVariant, classes: usize, series: usize, time_len: usize) -> Result<Self> {
        Ok(SimulationDesign {
            variant,
            spec: PanelSpec::new(classes, series, time_len, 1)?,
        })
    }
}

/// Which third of the classes `k` (zero-based) falls into.
fn tier(k: usize, classes: usize) -> usize {
    (k * 3 / classes).min(2)
}

/// Cross-effect size of class `k` in the varying-coefficient design.
pub fn eta(k: usize, classes: usize) -> f64 {
    [0.20, 0.25, 0.30][tier(k, classes)]
}

/// Error autocorrelation of class `k` in the varying-covariance design.
pub fn rho(k: usize, classes: usize) -> f64 {
    [0.05, 0.10, 0.15][tier(k, classes)]
}

/// True lag-1 matrices. Series split into a leading block of `ceil(J/2)` and
/// a trailing block; the first series of each block is led by the later
/// series, all own effects are 0.5.
pub fn true_coefficients(design: &SimulationDesign) -> CoefficientSet<f64> {
    let PanelSpec { classes, series: j, .. } = design.spec;
    let m = j.div_ceil(2);
    let lags = (0..classes)
        .map(|k| {
            let mut b = DMatrix::from_diagonal_element(j, j, 0.5);
            if design.variant.varying_beta() {
                let e = eta(k, classes);
                for c in 1..j {
                    b[(0, c)] = e;
                }
                for c in m + 1..j {
                    b[(m, c)] = e;
                }
            } else {
                for c in 1..j {
                    b[(0, c)] = 0.25;
                }
            }
            vec![b]
        })
        .collect();
    CoefficientSet::from_lags(lags).expect("well-formed design")
}

/// True error covariances.
pub fn true_covariances(design: &SimulationDesign) -> Vec<DMatrix<f64>> {
    let PanelSpec { classes, series: j, .. } = design.spec;
    (0..classes)
        .map(|k| {
            if design.variant.varying_sigma() {
                let r = rho(k, classes);
                DMatrix::from_fn(j, j, |a, b| 0.5 * r.powi(a.abs_diff(b) as i32))
            } else {
                DMatrix::from_diagonal_element(j, j, 0.5)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub panel: MultiClassPanel<f64>,
    pub beta: CoefficientSet<f64>,
    pub covariances: Vec<DMatrix<f64>>,
}

/// Simulates one panel: Gaussian VAR(1) started at zero, `BURN_IN` steps
/// dropped, then `T` observations kept per class.
pub fn gen_design(design: &SimulationDesign, seed: u64) -> SimulatedData {
    let beta = true_coefficients(design);
    let covariances = true_covariances(design);
    let PanelSpec {
        classes,
        series: j,
        time_len,
        ..
    } = design.spec;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..classes)
        .map(|k| {
            let chol = nalgebra::Cholesky::new(covariances[k].clone())
                .expect("design covariance is positive definite")
                .unpack();
            let b = beta.lag_matrix(k, 0);
            let mut y = DVector::zeros(j);
            let mut out = DMatrix::zeros(time_len, j);
            for step in 0..BURN_IN + time_len {
                let z = DVector::from_fn(j, |_, _| StandardNormal.sample(&mut rng));
                y = &b * &y + &chol * z;
                if step >= BURN_IN {
                    out.row_mut(step - BURN_IN).copy_from(&y.transpose());
                }
            }
            out
        })
        .collect();
    SimulatedData {
        panel: MultiClassPanel::unlabeled(data).expect("finite simulated data"),
        beta,
        covariances,
    }
}

/// Seed of run `run`, derived from the master seed by stream selection so it
/// depends on nothing else.
pub fn run_seed(master_seed: u64, run: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(run as u64);
    rng.next_u64()
}

/// Mean absolute estimation error over runs, classes, lags and entries.
pub fn maee(estimates: &[CoefficientSet<f64>], truths: &[CoefficientSet<f64>]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truths) {
        if e.classes() != t.classes() || e.series() != t.series() || e.order() != t.order() {
            return Err(Error::DimensionMismatch("estimate and truth shapes differ".into()));
        }
        for k in 0..e.classes() {
            total += e
                .class_values(k)
                .iter()
                .zip(t.class_values(k))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        }
        count += e.len();
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch("paired samples differ in length".into()));
    }
    let r = a.len();
    if r < 2 {
        return Err(Error::Degenerate(format!("need at least 2 pairs, got {r}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / r as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let t = mean / (var / r as f64).sqrt();
    let df = (r - 1) as f64;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest { t, df, p_value })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub estimators: Vec<Estimator>,
    pub grid: RegularizationGrid<f64>,
    pub fit: FitOptions<f64>,
}

impl Default for StudyOptions {
    /// All three estimators, default grids, likelihood log-det weight.
    fn default() -> Self {
        let mut fit = FitOptions::default();
        fit.admm.log_det_weight = LogDetWeight::Likelihood;
        StudyOptions {
            estimators: vec![Estimator::LeastSquares, Estimator::SingleClass, Estimator::MultiClass],
            grid: RegularizationGrid::default(),
            fit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub maee: Option<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// Mean over included runs.
    pub maee: f64,
    /// Per included run, in run order.
    pub per_run: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: Estimator,
    pub second: Estimator,
    pub test: Option<TTest>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub design: SimulationDesign,
    pub runs: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub summaries: Vec<EstimatorSummary>,
    pub comparisons: Vec<PairComparison>,
    /// Runs left out of the aggregates because some estimator failed.
    pub excluded_runs: Vec<usize>,
    /// Every (run, estimator) outcome; written separately as CSV.
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

impl StudyResult {
    pub fn mean_maee(&self, estimator: Estimator) -> Option<f64> {
        self.summaries.iter().find(|s| s.estimator == estimator).map(|s| s.maee)
    }

    pub fn per_run(&self, estimator: Estimator) -> Option<&[f64]> {
        self.summaries
            .iter()
            .find(|s| s.estimator == estimator)
            .map(|s| s.per_run.as_slice())
    }

    pub fn comparison(&self, first: Estimator, second: Estimator) -> Option<&PairComparison> {
        self.comparisons
            .iter()
            .find(|c| c.first == first && c.second == second)
    }
}

fn run_estimator(
    estimator: Estimator,
    panel: &MultiClassPanel<f64>,
    options: &StudyOptions,
) -> Result<FitResult<f64>> {
    match estimator {
        Estimator::LeastSquares => fit_ls(panel, options.fit.order),
        Estimator::SingleClass => fit_singleclass(panel, &options.grid, &options.fit),
        Estimator::MultiClass => fit_multiclass(panel, &options.grid, &options.fit),
    }
}

/// One simulated panel through every requested estimator.
pub fn run_once(design: &SimulationDesign, run: usize, master_seed: u64, options: &StudyOptions) -> Vec<RunRecord> {
    let seed = run_seed(master_seed, run);
    let data = gen_design(design, seed);
    options
        .estimators
        .iter()
        .map(|&estimator| {
            let outcome = run_estimator(estimator, &data.panel, options)
                .and_then(|fit| Ok((maee(std::slice::from_ref(&fit.beta), std::slice::from_ref(&data.beta))?, fit)));
            match outcome {
                Ok((err, fit)) => {
                    let Penalties {
                        lambda1,
                        lambda2,
                        gamma1,
                        gamma2,
                    } = fit.penalties;
                    RunRecord {
                        run,
                        seed,
                        estimator,
                        maee: Some(err),
                        lambda1,
                        lambda2,
                        gamma1,
                        gamma2,
                        outer_iterations: fit.outer_iterations,
                        converged: fit.converged,
                        error: None,
                    }
                }
                Err(e) => RunRecord {
                    run,
                    seed,
                    estimator,
                    maee: None,
                    lambda1: f64::NAN,
                    lambda2: f64::NAN,
                    gamma1: f64::NAN,
                    gamma2: f64::NAN,
                    outer_iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Runs `runs` independent replicates in parallel on the current rayon pool.
/// The result does not depend on the number of threads.
pub fn run_study(design: &SimulationDesign, runs: usize, master_seed: u64, options: &StudyOptions) -> Result<StudyResult> {
    if runs == 0 {
        return Err(Error::InvalidParameter("a study needs at least one run".into()));
    }
    if options.estimators.is_empty() {
        return Err(Error::InvalidParameter("no estimators requested".into()));
    }
    let per_run: Vec<Vec<RunRecord>> = (0..runs)
        .into_par_iter()
        .map(|r| run_once(design, r, master_seed, options))
        .collect();
    Ok(aggregate(design, runs, master_seed, &options.estimators, per_run))
}

fn aggregate(
    design: &SimulationDesign,
    runs: usize,
    master_seed: u64,
    estimators: &[Estimator],
    per_run: Vec<Vec<RunRecord>>,
) -> StudyResult {
    let seeds = per_run.iter().map(|r| r[0].seed).collect();
    let excluded_runs: Vec<usize> = per_run
        .iter()
        .filter(|recs| recs.iter().any(|r| r.maee.is_none()))
        .map(|recs| recs[0].run)
        .collect();
    let included: Vec<&Vec<RunRecord>> = per_run
        .iter()
        .filter(|recs| recs.iter().all(|r| r.maee.is_some()))
        .collect();
    let summaries: Vec<EstimatorSummary> = estimators
        .iter()
        .enumerate()
        .map(|(idx, &estimator)| {
            let per_run: Vec<f64> = included.iter().filter_map(|recs| recs[idx].maee).collect();
            let maee = if per_run.is_empty() {
                f64::NAN
            } else {
                per_run.iter().sum::<f64>() / per_run.len() as f64
            };
            EstimatorSummary {
                estimator,
                maee,
                per_run,
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for a in 0..summaries.len() {
        for b in 0..summaries.len() {
            if a == b {
                continue;
            }
            let (test, note) = match paired_ttest(&summaries[a].per_run, &summaries[b].per_run) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            };
            comparisons.push(PairComparison {
                first: summaries[a].estimator,
                second: summaries[b].estimator,
                test,
                note,
            });
        }
    }
    StudyResult {
        design: *design,
        runs,
        master_seed,
        seeds,
        summaries,
        comparisons,
        excluded_runs,
        records: per_run.into_iter().flatten().collect(),
    }
}
