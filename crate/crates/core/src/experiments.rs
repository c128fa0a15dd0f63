//! Monte Carlo harness: seeded trials over an `n` grid, rate fits and
//! coverage tables.
//!
//! Trial `(n, t)` draws from the stream `(n << 32) | t` of the base seed, so
//! results depend only on the configuration and never on the schedule. Rate
//! fits regress on the predicted functional form
//!
//! ```text
//! ln S(n) = a + s · ln(n / ln n),      predicted s = -1 / (2(k_max + 1))
//! ```
//!
//! and a second fit pins `s` to the predicted value to read off
//! `C = exp(a)`.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{dkw_tail, lower_bound_envelope, rate_shape};
use crate::catalog;
use crate::density::{CdfEvaluator, DensityModel};
use crate::error::{Error, Result};
use crate::sampling::{draw_samples, ks_statistic, SeedSpec};
use crate::transport::distance_report;

/// Schema tag of experiment configuration files.
pub const CONFIG_SCHEMA: &str = "winf-experiment/1";
/// Schema tag written in the first column of every record row.
pub const RECORD_SCHEMA: &str = "winf-records/1";
/// Fixed header of record files.
pub const RECORD_HEADER: &str = "schema,model_id,n,trial,seed,w_inf,w_one,ks,violations";
/// Largest slope difference between the median and p90 fits that is not
/// flagged as a disagreement.
pub const FIT_AGREEMENT: f64 = 0.08;
/// Smallest grid length accepted by rate experiments.
pub const MIN_FIT_POINTS: usize = 4;

// Relative slack for the deterministic inequalities (floating-point noise).
const INEQUALITY_SLACK: f64 = 1e-12;

/// Per-`n` summary statistic of the trial distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Statistic {
    Median,
    Mean,
    /// Empirical quantile with linear interpolation, `q ∈ (0, 1)`.
    Quantile(f64),
}

impl Statistic {
    /// Evaluates the statistic on values sorted ascending.
    pub fn evaluate(&self, sorted: &[f64]) -> f64 {
        match *self {
            Statistic::Median => quantile_sorted(sorted, 0.5),
            Statistic::Mean => sorted.iter().sum::<f64>() / sorted.len() as f64,
            Statistic::Quantile(q) => quantile_sorted(sorted, q),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Median => write!(f, "median"),
            Statistic::Mean => write!(f, "mean"),
            Statistic::Quantile(q) => write!(f, "quantile({q})"),
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "median" => Ok(Statistic::Median),
            "mean" => Ok(Statistic::Mean),
            other => {
                let q = other
                    .strip_prefix("quantile(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "statistic `{other}` is not one of median, mean, quantile(q)"
                        ))
                    })?;
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::Config(format!(
                        "quantile level {q} must lie in (0, 1)"
                    )));
                }
                Ok(Statistic::Quantile(q))
            }
        }
    }
}

impl TryFrom<String> for Statistic {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Statistic> for String {
    fn from(s: Statistic) -> String {
        s.to_string()
    }
}

/// Linear-interpolation quantile of ascending values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Envelope checks evaluated on every trial.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeChecks {
    /// Confidence parameters `M` of the lower-bounded envelope
    /// `(1/λ)·sqrt(ln(2M)/(2n))`.
    #[serde(default)]
    pub confidence: Vec<f64>,
    /// Deviations `t` of the uniform CDF band `sup |Fₙ - F| > t`.
    #[serde(default)]
    pub dkw: Vec<f64>,
}

impl EnvelopeChecks {
    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty() && self.dkw.is_empty()
    }
}

/// Output locations, relative to the configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub records: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Versioned experiment description.
///
/// ```toml
/// schema = "winf-experiment/1"
/// model = "tent"                 # catalog name or path to a density file
/// n_grid = [128, 256, 512, 1024]
/// trials = 200
/// base_seed = 2024
/// statistic = "median"           # median | mean | quantile(q)
///
/// [envelopes]
/// confidence = [10.0]
/// dkw = [0.05]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub model: String,
    #[serde(default)]
    pub force_accept: bool,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_statistic")]
    pub statistic: Statistic,
    /// Constant of the theoretical rate when none is fitted.
    #[serde(default = "default_rate_constant")]
    pub rate_constant: f64,
    #[serde(default)]
    pub envelopes: EnvelopeChecks,
    #[serde(default)]
    pub output: OutputPaths,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_statistic() -> Statistic {
    Statistic::Median
}

fn default_rate_constant() -> f64 {
    1.0
}

/// Which harness a configuration is checked for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Rate,
    Coverage,
}

impl ExperimentConfig {
    /// A configuration with defaults for everything but the essentials.
    pub fn new(model: &str, n_grid: Vec<usize>, trials: usize, base_seed: u64) -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.to_string(),
            model: model.to_string(),
            force_accept: false,
            n_grid,
            trials,
            base_seed,
            statistic: Statistic::Median,
            rate_constant: 1.0,
            envelopes: EnvelopeChecks::default(),
            output: OutputPaths::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(Error::Schema {
                path: origin.to_path_buf(),
                expected: CONFIG_SCHEMA.to_string(),
                found: cfg.schema,
            });
        }
        cfg.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks the preconditions of the given harness.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid is empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.n_grid[0] < 2 {
            return Err(Error::Config("n_grid entries must be at least 2".into()));
        }
        if self
            .n_grid
            .last()
            .is_some_and(|n| *n as u64 > u32::MAX as u64)
        {
            return Err(Error::Config("n_grid entries must fit in 32 bits".into()));
        }
        if self.trials as u64 > u32::MAX as u64 {
            return Err(Error::Config("trials must fit in 32 bits".into()));
        }
        if !(self.rate_constant > 0.0 && self.rate_constant.is_finite()) {
            return Err(Error::Config("rate_constant must be positive".into()));
        }
        for &m in &self.envelopes.confidence {
            if !(m > 1.0 && m.is_finite()) {
                return Err(Error::Config(format!("confidence M = {m} must exceed 1")));
            }
        }
        for &t in &self.envelopes.dkw {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("deviation t = {t} must be positive")));
            }
        }
        match kind {
            ExperimentKind::Rate if self.n_grid.len() < MIN_FIT_POINTS => {
                Err(Error::Config(format!(
                    "a rate fit needs at least {MIN_FIT_POINTS} grid points, got {}",
                    self.n_grid.len()
                )))
            }
            ExperimentKind::Coverage if self.envelopes.is_empty() => Err(Error::Config(
                "coverage experiment requests no envelope checks".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Resolves a path from the configuration against its directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Loads the model: a catalog name, or a density file path.
    pub fn load_model(&self) -> Result<CdfEvaluator> {
        let model = if catalog::NAMES.contains(&self.model.as_str()) {
            catalog::model(&self.model)?
        } else {
            DensityModel::load(&self.resolve(Path::new(&self.model)))?
        };
        if self.force_accept {
            Ok(CdfEvaluator::force_accept(model))
        } else {
            CdfEvaluator::new(model)
        }
    }
}

/// One trial of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_id: String,
    pub n: usize,
    pub trial: usize,
    /// Derived seed of the trial's generator.
    pub seed: u64,
    pub w_inf: f64,
    pub w_one: f64,
    pub ks: f64,
    /// Names of the envelope checks and inequalities this trial violated.
    pub violations: Vec<String>,
}

/// Flag for a failed `W∞ ≤ 1`.
pub const FLAG_WINF_ABOVE_ONE: &str = "winf_above_one";
/// Flag for a failed `W₁ ≤ W∞`.
pub const FLAG_W1_ABOVE_WINF: &str = "w1_above_winf";
/// Flag for a failed `W∞ ≤ ks/λ`.
pub const FLAG_WINF_ABOVE_KS: &str = "winf_above_ks_over_lambda";

fn confidence_flag(m: f64) -> String {
    format!("envelope_m={m}")
}

fn dkw_flag(t: f64) -> String {
    format!("dkw_t={t}")
}

impl RunRecord {
    /// Inequality flags among the violations (envelope flags excluded).
    pub fn inequality_violations(&self) -> impl Iterator<Item = &str> {
        self.violations
            .iter()
            .map(String::as_str)
            .filter(|f| [FLAG_WINF_ABOVE_ONE, FLAG_W1_ABOVE_WINF, FLAG_WINF_ABOVE_KS].contains(f))
    }
}

/// The deterministic inequalities every trial must satisfy.
pub fn inequality_suite(w_inf: f64, w_one: f64, ks: f64, lambda: f64) -> Vec<String> {
    let mut out = Vec::new();
    let slack = |v: f64| v * (1.0 + INEQUALITY_SLACK) + INEQUALITY_SLACK;
    if w_inf > slack(1.0) {
        out.push(FLAG_WINF_ABOVE_ONE.to_string());
    }
    if w_one > slack(w_inf) {
        out.push(FLAG_W1_ABOVE_WINF.to_string());
    }
    if lambda > 0.0 && w_inf > slack(ks / lambda) {
        out.push(FLAG_WINF_ABOVE_KS.to_string());
    }
    out
}

/// Stream index of trial `trial` at sample size `n`.
pub fn trial_stream(n: usize, trial: usize) -> u64 {
    ((n as u64) << 32) | trial as u64
}

/// Runs every `(n, trial)` of the configuration, in key order.
///
/// `workers = None` uses the available parallelism; the result does not
/// depend on the worker count.
pub fn run_trials(
    config: &ExperimentConfig,
    cdf: &CdfEvaluator,
    workers: Option<usize>,
) -> Result<Vec<RunRecord>> {
    let lambda = cdf.model().infimum();
    if !config.envelopes.confidence.is_empty() && lambda <= 0.0 {
        return Err(Error::Config(format!(
            "envelope check requested for model `{}` whose density is not bounded below",
            cdf.model().id()
        )));
    }
    let keys: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let run = |&(n, trial): &(usize, usize)| -> Result<RunRecord> {
        let seed = SeedSpec::new(config.base_seed, trial_stream(n, trial));
        let em = draw_samples(cdf, n, seed)?;
        let report = distance_report(cdf, &em)?;
        let w_one = report.w_one.unwrap_or(f64::NAN);
        let ks = ks_statistic(&em, cdf);
        let mut violations = inequality_suite(report.w_infinity, w_one, ks, lambda);
        for &m in &config.envelopes.confidence {
            if report.w_infinity > lower_bound_envelope(lambda, n as u64, m)? {
                violations.push(confidence_flag(m));
            }
        }
        for &t in &config.envelopes.dkw {
            if ks > t {
                violations.push(dkw_flag(t));
            }
        }
        Ok(RunRecord {
            model_id: cdf.model().id().to_string(),
            n,
            trial,
            seed: seed.derived_seed(),
            w_inf: report.w_infinity,
            w_one,
            ks,
            violations,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| keys.par_iter().map(run).collect())
}

/// Least-squares fit of `ln S` against `ln(n / ln n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_std_error: f64,
    /// `-1/(2(k_max+1))`.
    pub predicted_slope: f64,
    pub k_max: u32,
    /// Intercept with the slope pinned to the prediction.
    pub pinned_intercept: f64,
    /// `exp(pinned_intercept)`.
    pub fitted_constant: f64,
    /// `(n, statistic)` pairs the fit used.
    pub points: Vec<(f64, f64)>,
}

/// Fits `ln S = a + s·ln(n / ln n)` by ordinary least squares.
pub fn fit_rate(points: &[(f64, f64)], k_max: u32) -> Result<RateFit> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::domain(format!(
            "a rate fit needs at least {MIN_FIT_POINTS} points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(n, s) in points {
        if !(n >= 2.0 && n.is_finite()) {
            return Err(Error::domain(format!("sample size {n} must be at least 2")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::domain(format!(
                "statistic {s} at n = {n} must be positive"
            )));
        }
        xs.push((n / n.ln()).ln());
        ys.push(s.ln());
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::domain("sample sizes must not all coincide"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let predicted_slope = -1.0 / (2.0 * (k_max as f64 + 1.0));
    let pinned_intercept = my - predicted_slope * mx;
    Ok(RateFit {
        slope,
        intercept,
        residual_std_error: (rss / (m - 2.0)).sqrt(),
        predicted_slope,
        k_max,
        pinned_intercept,
        fitted_constant: pinned_intercept.exp(),
        points: points.to_vec(),
    })
}

/// Summary of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub p90: f64,
    pub statistic: f64,
    /// Fraction of trials above `C₉₀·(ln n / n)^{1/(2(k_max+1))}`.
    pub exceedance: f64,
}

/// Result of a rate experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub model_id: String,
    pub trials: usize,
    pub statistic: Statistic,
    /// Fit of the configured statistic.
    pub fit: RateFit,
    pub median_fit: RateFit,
    pub p90_fit: RateFit,
    /// `|median slope - p90 slope| > FIT_AGREEMENT`.
    pub fits_disagree: bool,
    pub grid: Vec<GridSummary>,
    /// Exceedance fractions are non-increasing in `n` up to binomial noise.
    pub exceedance_trend_ok: bool,
    pub inequality_violations: usize,
}

fn group_by_n(config: &ExperimentConfig, records: &[RunRecord]) -> Vec<(usize, Vec<f64>)> {
    config
        .n_grid
        .iter()
        .map(|&n| {
            let mut v: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.w_inf)
                .collect();
            v.sort_by(f64::total_cmp);
            (n, v)
        })
        .collect()
}

/// Whether `fractions` (over `trials` each) are non-increasing up to a
/// three-sigma binomial allowance between consecutive points.
pub fn non_increasing_within_noise(fractions: &[f64], trials: usize) -> bool {
    let t = trials as f64;
    fractions.windows(2).all(|w| {
        let p = (0.5 * (w[0] + w[1])).clamp(1.0 / t, 1.0 - 1.0 / t);
        w[1] <= w[0] + 3.0 * (2.0 * p * (1.0 - p) / t).sqrt() + 1.0 / t
    })
}

/// Runs the trials and fits the convergence rate.
pub fn run_rate_experiment(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<(Vec<RunRecord>, RateReport)> {
    config.validate(ExperimentKind::Rate)?;
    let cdf = config.load_model()?;
    let records = run_trials(config, &cdf, workers)?;
    let report = rate_report(config, &cdf, &records)?;
    Ok((records, report))
}

/// Aggregates existing records into a rate report.
pub fn rate_report(
    config: &ExperimentConfig,
    cdf: &CdfEvaluator,
    records: &[RunRecord],
) -> Result<RateReport> {
    let k_max = cdf.model().max_zero_order();
    let groups = group_by_n(config, records);
    if let Some((n, _)) = groups.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::Config(format!("no records for n = {n}")));
    }
    let points = |stat: Statistic| -> Vec<(f64, f64)> {
        groups
            .iter()
            .map(|(n, v)| (*n as f64, stat.evaluate(v)))
            .collect()
    };
    let fit = fit_rate(&points(config.statistic), k_max)?;
    let median_fit = fit_rate(&points(Statistic::Median), k_max)?;
    let p90_fit = fit_rate(&points(Statistic::Quantile(0.9)), k_max)?;
    let grid: Vec<GridSummary> = groups
        .iter()
        .map(|(n, v)| {
            let envelope = p90_fit.fitted_constant * rate_shape(*n as f64, k_max);
            GridSummary {
                n: *n,
                median: Statistic::Median.evaluate(v),
                mean: Statistic::Mean.evaluate(v),
                p90: Statistic::Quantile(0.9).evaluate(v),
                statistic: config.statistic.evaluate(v),
                exceedance: v.iter().filter(|w| **w > envelope).count() as f64 / v.len() as f64,
            }
        })
        .collect();
    let fractions: Vec<f64> = grid.iter().map(|g| g.exceedance).collect();
    Ok(RateReport {
        model_id: cdf.model().id().to_string(),
        trials: config.trials,
        statistic: config.statistic,
        fits_disagree: (median_fit.slope - p90_fit.slope).abs() > FIT_AGREEMENT,
        fit,
        median_fit,
        p90_fit,
        exceedance_trend_ok: non_increasing_within_noise(&fractions, config.trials),
        grid,
        inequality_violations: records
            .iter()
            .map(|r| r.inequality_violations().count())
            .sum(),
    })
}

/// Which envelope a coverage row refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageCheck {
    /// `W∞ > (1/λ)·sqrt(ln(2M)/(2n))`, capped at `1/M`.
    Envelope,
    /// `sup |Fₙ - F| > t`, capped at `2·exp(-2nt²)`.
    Dkw,
}

/// Violation frequency against its theoretical cap.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageRow {
    pub n: usize,
    pub check: CoverageCheck,
    /// `M` or `t`.
    pub parameter: f64,
    /// Threshold the statistic was compared with.
    pub threshold: f64,
    pub violations: usize,
    pub frequency: f64,
    pub cap: f64,
    /// `3·sqrt(cap(1 - cap)/T)`.
    pub slack: f64,
    pub pass: bool,
}

/// Result of a coverage experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub model_id: String,
    pub trials: usize,
    pub rows: Vec<CoverageRow>,
    pub all_pass: bool,
    pub inequality_violations: usize,
}

/// Runs the trials and tabulates envelope violation frequencies.
pub fn run_coverage_experiment(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<(Vec<RunRecord>, CoverageReport)> {
    config.validate(ExperimentKind::Coverage)?;
    let cdf = config.load_model()?;
    let records = run_trials(config, &cdf, workers)?;
    let report = coverage_report(config, &cdf, &records)?;
    Ok((records, report))
}

/// Aggregates existing records into a coverage table.
pub fn coverage_report(
    config: &ExperimentConfig,
    cdf: &CdfEvaluator,
    records: &[RunRecord],
) -> Result<CoverageReport> {
    let lambda = cdf.model().infimum();
    let t = config.trials as f64;
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let at_n: Vec<&RunRecord> = records.iter().filter(|r| r.n == n).collect();
        let count = |flag: &str| {
            at_n.iter()
                .filter(|r| r.violations.iter().any(|v| v == flag))
                .count()
        };
        let mut push = |check, parameter, threshold, flag: String, cap: f64| {
            let violations = count(&flag);
            let frequency = violations as f64 / t;
            let slack = 3.0 * (cap * (1.0 - cap) / t).sqrt();
            rows.push(CoverageRow {
                n,
                check,
                parameter,
                threshold,
                violations,
                frequency,
                cap,
                slack,
                pass: frequency <= cap + slack,
            });
        };
        for &m in &config.envelopes.confidence {
            let threshold = lower_bound_envelope(lambda, n as u64, m)?;
            push(
                CoverageCheck::Envelope,
                m,
                threshold,
                confidence_flag(m),
                1.0 / m,
            );
        }
        for &dt in &config.envelopes.dkw {
            push(
                CoverageCheck::Dkw,
                dt,
                dt,
                dkw_flag(dt),
                dkw_tail(n as u64, dt)?,
            );
        }
    }
    Ok(CoverageReport {
        model_id: cdf.model().id().to_string(),
        trials: config.trials,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
        inequality_violations: records
            .iter()
            .map(|r| r.inequality_violations().count())
            .sum(),
    })
}

/// Writes records as CSV with the fixed header; floats keep 17 significant
/// digits so the round trip is exact.
pub fn persist_records(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_records(&mut out, records)?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes records to any sink.
pub fn write_records(out: &mut impl Write, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(RECORD_HEADER.split(','))?;
    for r in records {
        w.write_record([
            RECORD_SCHEMA.to_string(),
            r.model_id.clone(),
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            format!("{:.16e}", r.w_inf),
            format!("{:.16e}", r.w_one),
            format!("{:.16e}", r.ks),
            r.violations.join(";"),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads records written by [`persist_records`].
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file, path)
}

/// Reads records from any source; `origin` names it in errors.
pub fn read_records(input: impl Read, origin: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut rows = r.records();
    let schema_error = |found: String| Error::Schema {
        path: origin.to_path_buf(),
        expected: format!("{RECORD_SCHEMA} with header `{RECORD_HEADER}`"),
        found,
    };
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(schema_error("an empty file".into())),
    };
    let header: Vec<&str> = header.iter().collect();
    if header.join(",") != RECORD_HEADER {
        return Err(schema_error(header.join(",")));
    }
    let parse_error = |line: usize, what: &str| Error::Parse {
        path: origin.to_path_buf(),
        message: format!("record {line}: bad {what}"),
    };
    let mut out = Vec::new();
    for (i, row) in rows.enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != 9 {
            return Err(parse_error(line, "field count"));
        }
        if &row[0] != RECORD_SCHEMA {
            return Err(schema_error(row[0].to_string()));
        }
        let num =
            |idx: usize, what: &str| row[idx].parse::<f64>().map_err(|_| parse_error(line, what));
        out.push(RunRecord {
            model_id: row[1].to_string(),
            n: row[2].parse().map_err(|_| parse_error(line, "n"))?,
            trial: row[3].parse().map_err(|_| parse_error(line, "trial"))?,
            seed: row[4].parse().map_err(|_| parse_error(line, "seed"))?,
            w_inf: num(5, "w_inf")?,
            w_one: num(6, "w_one")?,
            ks: num(7, "ks")?,
            violations: if row[8].is_empty() {
                Vec::new()
            } else {
                row[8].split(';').map(str::to_string).collect()
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(exponent: f64, c: f64) -> Vec<(f64, f64)> {
        (7..=17)
            .map(|e| {
                let n = 2f64.powi(e);
                (n, c * (n.ln() / n).powf(exponent))
            })
            .collect()
    }

    #[test]
    fn fit_recovers_exact_slopes() {
        let f = fit_rate(&synthetic(0.25, 0.7), 1).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-12);
        assert!((f.fitted_constant - 0.7).abs() < 1e-12);
        assert!(f.residual_std_error < 1e-12);
        let f = fit_rate(&synthetic(0.5, 2.0), 0).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert_eq!(f.predicted_slope, -0.5);
    }

    #[test]
    fn fit_preconditions() {
        let pts = synthetic(0.5, 1.0);
        assert_eq!(fit_rate(&pts[..3], 0).unwrap_err().kind(), "domain");
        let mut bad = pts.clone();
        bad[2].1 = 0.0;
        assert_eq!(fit_rate(&bad, 0).unwrap_err().kind(), "domain");
    }

    #[test]
    fn statistic_parsing() {
        assert_eq!("median".parse::<Statistic>().unwrap(), Statistic::Median);
        assert_eq!(
            "quantile(0.9)".parse::<Statistic>().unwrap(),
            Statistic::Quantile(0.9)
        );
        assert!("quantile(1.5)".parse::<Statistic>().is_err());
        assert!("mode".parse::<Statistic>().is_err());
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(Statistic::Median.evaluate(&v), 2.5);
        assert_eq!(Statistic::Mean.evaluate(&v), 2.5);
        assert!((Statistic::Quantile(0.9).evaluate(&v) - 3.7).abs() < 1e-15);
    }

    #[test]
    fn config_preconditions() {
        let cfg = ExperimentConfig::new("uniform", vec![100, 200, 400, 800], 0, 1);
        assert_eq!(
            cfg.validate(ExperimentKind::Rate).unwrap_err().kind(),
            "config"
        );
        let cfg = ExperimentConfig::new("uniform", vec![100, 200, 400], 5, 1);
        assert_eq!(
            cfg.validate(ExperimentKind::Rate).unwrap_err().kind(),
            "config"
        );
        let cfg = ExperimentConfig::new("uniform", vec![100, 100, 400, 800], 5, 1);
        assert_eq!(
            cfg.validate(ExperimentKind::Rate).unwrap_err().kind(),
            "config"
        );
        let mut cfg = ExperimentConfig::new("uniform", vec![500], 5, 1);
        cfg.envelopes.dkw = vec![0.0];
        assert_eq!(
            cfg.validate(ExperimentKind::Coverage).unwrap_err().kind(),
            "config"
        );
        cfg.envelopes.dkw = vec![0.05];
        cfg.validate(ExperimentKind::Coverage).unwrap();
    }

    #[test]
    fn envelope_needs_lower_bound() {
        let mut cfg = ExperimentConfig::new("tent", vec![100], 3, 1);
        cfg.envelopes.confidence = vec![10.0];
        let err = run_coverage_experiment(&cfg, Some(1)).unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn config_toml_round_trip() {
        let mut cfg = ExperimentConfig::new("tent", vec![128, 256, 512, 1024], 20, 7);
        cfg.statistic = Statistic::Quantile(0.9);
        cfg.envelopes.dkw = vec![0.05];
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back.statistic, cfg.statistic);
        assert_eq!(back.n_grid, cfg.n_grid);
        let bad = text.replace(CONFIG_SCHEMA, "winf-experiment/0");
        let err = ExperimentConfig::from_toml_str(&bad, Path::new("x.toml")).unwrap_err();
        assert_eq!(err.kind(), "schema");
    }

    #[test]
    fn records_round_trip() {
        let records: Vec<RunRecord> = (0..50)
            .map(|i| RunRecord {
                model_id: "tent".into(),
                n: 100 + i,
                trial: i,
                seed: 0xdead_beef_u64.wrapping_mul(i as u64 + 1),
                w_inf: 1.0 / (i as f64 + 3.0),
                w_one: std::f64::consts::PI / (i as f64 + 7.0),
                ks: (i as f64).sqrt() / 97.0,
                violations: if i % 3 == 0 {
                    vec!["dkw_t=0.05".into(), "envelope_m=10".into()]
                } else {
                    vec![]
                },
            })
            .collect();
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let back = read_records(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, records);

        let mut empty = Vec::new();
        write_records(&mut empty, &[]).unwrap();
        assert!(read_records(empty.as_slice(), Path::new("mem"))
            .unwrap()
            .is_empty());

        let corrupt = "schema,model,n\n";
        let err = read_records(corrupt.as_bytes(), Path::new("mem")).unwrap_err();
        assert_eq!(err.kind(), "schema");
        assert!(err.to_string().contains(RECORD_SCHEMA));
    }

    #[test]
    fn schedule_independence() {
        let mut cfg = ExperimentConfig::new("tent", vec![50, 100, 200, 400], 6, 99);
        cfg.envelopes.dkw = vec![0.1];
        let cdf = cfg.load_model().unwrap();
        let one = run_trials(&cfg, &cdf, Some(1)).unwrap();
        let four = run_trials(&cfg, &cdf, Some(4)).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.len(), 24);
        assert!(one.iter().all(|r| r.inequality_violations().count() == 0));
    }

    #[test]
    fn trend_check() {
        assert!(non_increasing_within_noise(&[0.3, 0.2, 0.21, 0.1], 200));
        assert!(!non_increasing_within_noise(&[0.1, 0.4], 200));
    }
}
