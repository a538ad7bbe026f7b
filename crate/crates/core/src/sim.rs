//! Monte Carlo harness: scenarios, design schemes, aggregation and emission.
//!
//! A scenario sweeps one parameter (IRS element count, SNR, or estimation
//! error variance) over a list of values and runs `trials` independent
//! channel realizations per value. Each trial draws its randomness from a
//! stream derived from `(master_seed, sweep_value, trial_index)`, so results
//! are identical for any thread count and execution order.
//!
//! Three design schemes share each trial's channel draw and initial phases:
//!
//! - `robust` — solves on the estimated channels with the aggregated error
//!   variance σ_g²;
//! - `non_robust` — solves on the estimated channels pretending σ_g² = 0,
//!   but is scored under the true error statistics;
//! - `perfect_csi` — solves on the true channels with zero error.
//!
//! Scores are the weighted sum of the robust achievable rates evaluated with
//! each scheme's design-time channels; a genie rate against the true
//! channels is kept alongside as a diagnostic.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    random_phases, sample_channel_pair, ChannelEstimate, ConfigError, PowerSpec, SystemConfig,
};
use crate::rate::weighted_sum_rate;
use crate::rng::{labeled_rng, trial_rng};
use crate::solver::{solve, SolverInit, SolverOptions, SolverProblem, SolverState};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{failed} of {total} trials failed for scheme {scheme} at sweep value {sweep_value} (limit is 20%)")]
    TooManyFailures {
        sweep_value: f64,
        scheme: Scheme,
        failed: usize,
        total: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Design scheme identifiers; the ordering fixes row order in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Robust,
    NonRobust,
    PerfectCsi,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Robust => "robust",
            Scheme::NonRobust => "non_robust",
            Scheme::PerfectCsi => "perfect_csi",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "M")]
    Elements,
    #[serde(rename = "snr_db")]
    SnrDb,
    #[serde(rename = "err_var")]
    ErrVar,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Elements => "M",
            SweepParam::SnrDb => "snr_db",
            SweepParam::ErrVar => "err_var",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Full experiment description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemConfig,
    pub sweep: Sweep,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub solver_options: SolverOptions,
}

impl Scenario {
    pub fn from_json_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Scheme set in canonical order with duplicates removed.
    pub fn canonical_schemes(&self) -> Vec<Scheme> {
        let mut s = self.schemes.clone();
        s.sort();
        s.dedup();
        s
    }

    /// System config at one sweep value.
    pub fn config_at(&self, value: f64) -> Result<SystemConfig, ScenarioError> {
        let mut config = self.system.clone();
        match self.sweep.param {
            SweepParam::Elements => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(ScenarioError::Invalid(format!(
                        "sweep over M needs positive integers, got {value}"
                    )));
                }
                config.n_elements = value as usize;
            }
            SweepParam::SnrDb => config.power = PowerSpec::SnrDb(value),
            SweepParam::ErrVar => {
                if value < 0.0 {
                    return Err(ScenarioError::Invalid(format!(
                        "sweep over err_var needs nonnegative values, got {value}"
                    )));
                }
                config.err_var_bu = value;
                config.err_var_iu = value;
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.trials == 0 {
            return Err(ScenarioError::Invalid("trials must be >= 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(ScenarioError::Invalid("sweep values are empty".into()));
        }
        if self.sweep.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScenarioError::Invalid(
                "sweep values must be strictly increasing".into(),
            ));
        }
        self.solver_options
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        for &value in &self.sweep.values {
            let config = self.config_at(value)?;
            config.validate()?;
        }
        Ok(())
    }
}

/// One successful scheme run within a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Weighted sum rate under the scheme's design-time channel knowledge.
    pub sum_rate_bps_hz: f64,
    /// Weighted sum rate evaluated on the true channels (diagnostic).
    pub genie_sum_rate_bps_hz: f64,
    pub outer_iters: usize,
    pub inner_sweeps_total: usize,
    pub final_violation: f64,
    pub wall_time_ms: f64,
}

/// Aggregates for one (sweep value, scheme) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub trials: Vec<TrialRecord>,
    pub failed_trials: Vec<usize>,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub ci95_half_width: f64,
    pub mean_outer_iters: f64,
    pub mean_inner_sweeps: f64,
    pub mean_final_violation: f64,
    pub mean_wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPointResult {
    pub sweep_value: f64,
    pub schemes: Vec<SchemeResult>,
}

/// Complete result of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub sweep_param: SweepParam,
    pub trials_requested: usize,
    pub master_seed: u64,
    pub points: Vec<SweepPointResult>,
}

/// z-quantile for a two-sided 95% normal interval.
const Z_95: f64 = 1.959963984540054;

fn mean_of(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Runs all requested schemes on one channel realization. Returns one entry
/// per scheme; solver failures carry the error message.
pub fn run_trial(
    config: &SystemConfig,
    options: &SolverOptions,
    schemes: &[Scheme],
    master_seed: u64,
    sweep_value: f64,
    trial: usize,
) -> Result<Vec<(Scheme, Result<TrialRecord, String>)>, ScenarioError> {
    let mut rng = trial_rng(master_seed, sweep_value, trial as u64);
    let (truth, estimate) = sample_channel_pair(config, &mut rng)?;
    let init_phases = random_phases(config.n_elements, &mut rng);
    let perfect = ChannelEstimate::exact(&truth);
    let weights = config.weights_vec();
    let power = config.power_budget();
    let noise = config.noise_var;

    let mut out = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let (design, sigma_design) = match scheme {
            Scheme::Robust => (&estimate, estimate.sigma_g_sq),
            Scheme::NonRobust => (&estimate, 0.0),
            Scheme::PerfectCsi => (&perfect, 0.0),
        };
        let problem = SolverProblem {
            g_bu: &design.g_bu_hat,
            cascaded: &design.cascaded_hat,
            sigma_g_sq: sigma_design,
            noise_var: noise,
            power_budget: power,
            weights: &weights,
        };
        let init = SolverInit::matched_filter(&problem, Some(init_phases.clone()), &mut rng);
        let solved = solve(&problem, options, &init);
        let record = match solved {
            Ok((solution, report)) => {
                // The design metric: estimated channels under the true error
                // statistics for both imperfect-CSI schemes, the truth with
                // zero error for perfect CSI.
                let (eval, sigma_eval) = match scheme {
                    Scheme::Robust | Scheme::NonRobust => (&estimate, estimate.sigma_g_sq),
                    Scheme::PerfectCsi => (&perfect, 0.0),
                };
                let g_eval = crate::channel::effective_matrix(
                    &eval.g_bu_hat,
                    &eval.cascaded_hat,
                    &solution.phases,
                );
                let sum_rate =
                    weighted_sum_rate(&weights, &g_eval, &solution.precoder, sigma_eval, noise);
                let g_genie = crate::channel::effective_matrix(
                    &perfect.g_bu_hat,
                    &perfect.cascaded_hat,
                    &solution.phases,
                );
                let genie = weighted_sum_rate(&weights, &g_genie, &solution.precoder, 0.0, noise);
                Ok(TrialRecord {
                    trial,
                    sum_rate_bps_hz: sum_rate,
                    genie_sum_rate_bps_hz: genie,
                    outer_iters: report.outer_iters,
                    inner_sweeps_total: report.inner_sweeps_total,
                    final_violation: report.final_violation,
                    wall_time_ms: report.wall_time_ms,
                })
            }
            Err(e) => Err(e.to_string()),
        };
        out.push((scheme, record));
    }
    Ok(out)
}

/// Executes the whole sweep, trials in parallel on the current rayon pool.
pub fn run_scenario(scenario: &Scenario) -> Result<MonteCarloResult, ScenarioError> {
    scenario.validate()?;
    let schemes = scenario.canonical_schemes();
    let values = &scenario.sweep.values;

    if schemes.is_empty() {
        return Ok(MonteCarloResult {
            sweep_param: scenario.sweep.param,
            trials_requested: scenario.trials,
            master_seed: scenario.master_seed,
            points: values
                .iter()
                .map(|&v| SweepPointResult {
                    sweep_value: v,
                    schemes: Vec::new(),
                })
                .collect(),
        });
    }

    let configs: Vec<SystemConfig> = values
        .iter()
        .map(|&v| scenario.config_at(v))
        .collect::<Result<_, _>>()?;

    let tasks: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|pi| (0..scenario.trials).map(move |t| (pi, t)))
        .collect();

    type TaskOutcome = (usize, usize, Vec<(Scheme, Result<TrialRecord, String>)>);
    let outcomes: Vec<Result<TaskOutcome, ScenarioError>> = tasks
        .par_iter()
        .map(|&(pi, t)| {
            run_trial(
                &configs[pi],
                &scenario.solver_options,
                &schemes,
                scenario.master_seed,
                values[pi],
                t,
            )
            .map(|records| (pi, t, records))
        })
        .collect();

    // Deterministic aggregation: bucket by (point, scheme), sort by trial.
    let mut buckets: Vec<Vec<Vec<(usize, Result<TrialRecord, String>)>>> =
        vec![vec![Vec::new(); schemes.len()]; values.len()];
    for outcome in outcomes {
        let (pi, t, records) = outcome?;
        for (si, (_, record)) in records.into_iter().enumerate() {
            buckets[pi][si].push((t, record));
        }
    }

    let mut points = Vec::with_capacity(values.len());
    for (pi, &sweep_value) in values.iter().enumerate() {
        let mut scheme_results = Vec::with_capacity(schemes.len());
        for (si, &scheme) in schemes.iter().enumerate() {
            let mut cell = std::mem::take(&mut buckets[pi][si]);
            cell.sort_by_key(|(t, _)| *t);
            let mut trials = Vec::new();
            let mut failed = Vec::new();
            for (t, record) in cell {
                match record {
                    Ok(r) => trials.push(r),
                    Err(_) => failed.push(t),
                }
            }
            if failed.len() * 5 > scenario.trials {
                return Err(ScenarioError::TooManyFailures {
                    sweep_value,
                    scheme,
                    failed: failed.len(),
                    total: scenario.trials,
                });
            }
            let n = trials.len();
            let rates: Vec<f64> = trials.iter().map(|r| r.sum_rate_bps_hz).collect();
            let mean = mean_of(rates.iter().copied(), n);
            let std = sample_std(&rates, mean);
            let ci = if n > 0 {
                Z_95 * std / (n as f64).sqrt()
            } else {
                0.0
            };
            scheme_results.push(SchemeResult {
                scheme,
                mean_sum_rate: mean,
                std_sum_rate: std,
                ci95_half_width: ci,
                mean_outer_iters: mean_of(trials.iter().map(|r| r.outer_iters as f64), n),
                mean_inner_sweeps: mean_of(trials.iter().map(|r| r.inner_sweeps_total as f64), n),
                mean_final_violation: mean_of(trials.iter().map(|r| r.final_violation), n),
                mean_wall_time_ms: mean_of(trials.iter().map(|r| r.wall_time_ms), n),
                trials,
                failed_trials: failed,
            });
        }
        points.push(SweepPointResult {
            sweep_value,
            schemes: scheme_results,
        });
    }

    Ok(MonteCarloResult {
        sweep_param: scenario.sweep.param,
        trials_requested: scenario.trials,
        master_seed: scenario.master_seed,
        points,
    })
}

/// Output format for [`emit_results`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?}, expected csv or json")),
        }
    }
}

/// Formats a float with 12 significant digits; integral values print as
/// plain integers.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_finite() && x == x.trunc() && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    format!("{:.11e}", x)
}

pub const CSV_HEADER: &str =
    "sweep_param,sweep_value,scheme,trial,sum_rate_bps_hz,outer_iters,final_violation";

/// Renders the CSV report: the exact header, one row per (value, scheme,
/// trial), then mean/std/ci95 summary rows per (value, scheme).
pub fn results_to_csv(result: &MonteCarloResult) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    let param = result.sweep_param.as_str();
    for point in &result.points {
        for sr in &point.schemes {
            for r in &sr.trials {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    param,
                    format_sig12(point.sweep_value),
                    sr.scheme.as_str(),
                    r.trial,
                    format_sig12(r.sum_rate_bps_hz),
                    r.outer_iters,
                    format_sig12(r.final_violation),
                ));
            }
        }
    }
    for point in &result.points {
        for sr in &point.schemes {
            let n = sr.trials.len();
            let outers: Vec<f64> = sr.trials.iter().map(|r| r.outer_iters as f64).collect();
            let viols: Vec<f64> = sr.trials.iter().map(|r| r.final_violation).collect();
            let mean_outer = mean_of(outers.iter().copied(), n);
            let mean_viol = mean_of(viols.iter().copied(), n);
            let std_outer = sample_std(&outers, mean_outer);
            let std_viol = sample_std(&viols, mean_viol);
            let sqrt_n = (n.max(1) as f64).sqrt();
            let rows = [
                ("mean", sr.mean_sum_rate, mean_outer, mean_viol),
                ("std", sr.std_sum_rate, std_outer, std_viol),
                (
                    "ci95",
                    sr.ci95_half_width,
                    Z_95 * std_outer / sqrt_n,
                    Z_95 * std_viol / sqrt_n,
                ),
            ];
            for (label, rate, outer, viol) in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    param,
                    format_sig12(point.sweep_value),
                    sr.scheme.as_str(),
                    label,
                    format_sig12(rate),
                    format_sig12(outer),
                    format_sig12(viol),
                ));
            }
        }
    }
    out
}

/// Writes the result to `path` in the requested format.
pub fn emit_results(
    result: &MonteCarloResult,
    format: OutputFormat,
    path: &Path,
) -> Result<(), ScenarioError> {
    let payload = match format {
        OutputFormat::Csv => results_to_csv(result),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(result).expect("result serializes");
            s.push('\n');
            s
        }
    };
    std::fs::write(path, payload).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Benchmark configuration: per-sweep timing across an (N_T, M) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub n_users: usize,
    pub n_tx_values: Vec<usize>,
    pub m_values: Vec<usize>,
    /// Timed BSUM sweeps per point (at least 20).
    #[serde(default = "default_bench_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_bench_warmup")]
    pub warmup: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bench_snr")]
    pub snr_db: f64,
    #[serde(default = "default_bench_err")]
    pub err_var: f64,
}

fn default_bench_sweeps() -> usize {
    30
}
fn default_bench_warmup() -> usize {
    5
}
fn default_bench_snr() -> f64 {
    10.0
}
fn default_bench_err() -> f64 {
    0.1
}

impl BenchConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub n_tx: usize,
    pub m: usize,
    pub mean_sweep_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_users: usize,
    pub sweeps_per_point: usize,
    pub points: Vec<BenchPoint>,
}

/// Times BSUM sweeps per (N_T, M) grid point on a fixed random instance.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, ScenarioError> {
    if config.sweeps < 20 {
        return Err(ScenarioError::Invalid(
            "bench needs at least 20 timed sweeps per point".into(),
        ));
    }
    if config.n_users == 0 || config.n_tx_values.is_empty() || config.m_values.is_empty() {
        return Err(ScenarioError::Invalid(
            "bench needs users and nonempty n_tx/m grids".into(),
        ));
    }
    let mut points = Vec::new();
    for (pi, &n_tx) in config.n_tx_values.iter().enumerate() {
        for (pj, &m) in config.m_values.iter().enumerate() {
            let mut sys = SystemConfig::normalized_unit(n_tx, config.n_users, m);
            sys.power = PowerSpec::SnrDb(config.snr_db);
            sys.err_var_bu = config.err_var;
            sys.err_var_iu = config.err_var;
            let mut rng = labeled_rng(config.seed, (pi * 1000 + pj) as u64);
            let (_, estimate) = sample_channel_pair(&sys, &mut rng)?;
            let weights = sys.weights_vec();
            let problem = SolverProblem::from_estimate(
                &estimate,
                None,
                sys.noise_var,
                sys.power_budget(),
                &weights,
            );
            let init = SolverInit::matched_filter(&problem, None, &mut rng);
            let rho = crate::solver::default_penalty(config.n_users, m, n_tx);
            let mut state = SolverState::new(&problem, &init, rho);
            for _ in 0..config.warmup {
                state
                    .bsum_sweep(&problem, 3)
                    .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
            let t0 = std::time::Instant::now();
            for _ in 0..config.sweeps {
                state
                    .bsum_sweep(&problem, 3)
                    .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
            let mean_ms = t0.elapsed().as_secs_f64() * 1e3 / config.sweeps as f64;
            points.push(BenchPoint {
                n_tx,
                m,
                mean_sweep_ms: mean_ms,
            });
        }
    }
    Ok(BenchReport {
        n_users: config.n_users,
        sweeps_per_point: config.sweeps,
        points,
    })
}
