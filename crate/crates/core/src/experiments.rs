//! Command-line experiments: argument and config handling, the runners behind
//! each subcommand, and CSV/JSON output.
//!
//! Every flag can also come from a TOML config file (`--config`), in a table
//! named after the subcommand (`[risk]`, `[certify.dfe]`, `[probe.hs-fidelity]`).
//! Keys use the flag spelling. Flags win over the file; a top-level `seed` or
//! `workers` key applies to every subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adversary::{
    adversarial_risk, hs_for_infidelity, min_perturbation_survey, random_perturbation_risk, threshold_adversarial_risk,
    threshold_median_cost,
};
use crate::bounds::{self, BoundQuery, Variant};
use crate::certification::{
    channel_fidelity_estimate, exact_average_channel_fidelity, state_at_fidelity, DfeTarget, ShotSchedule,
};
use crate::classifier::{analytic_risk_threshold, estimate_risk, tuned_threshold_pair, ClassifierPair};
use crate::concentration::{default_grid, levy_tail_estimate, parse_grid, ConcentrationCurve, Statistic};
use crate::error::QvError;
use crate::quantum::{
    apply_channel, c, expectation, hs_fidelity_gap, planar_rotation, CVector, DensityMatrix, HsConvention, PureState,
    QuantumChannel, UnitaryOperator,
};
use crate::sampling::{
    par_trials, sample_haar_state, sample_haar_unitary, sample_orthogonal_partner, sample_perturbation_unitary,
    sample_psd_observable, sample_random_channel, PerturbationMode, PerturbationSpec, RngStream,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum AppError {
    Config(String),
    Numerical(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "config error: {m}"),
            AppError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<QvError> for AppError {
    fn from(e: QvError) -> Self {
        match e {
            QvError::InvalidArgument(_)
            | QvError::DimensionOutOfRange(..)
            | QvError::DimensionMismatch { .. }
            | QvError::MismatchedReferences
            | QvError::UnsupportedClassifier(_) => AppError::Config(e.to_string()),
            _ => AppError::Numerical(e.to_string()),
        }
    }
}

type AppResult<T> = std::result::Result<T, AppError>;

fn config_err(msg: impl Into<String>) -> AppError {
    AppError::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "qvuln", version, about = "Adversarial vulnerability experiments for quantum classifiers")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the closed-form bounds.
    Bounds(BoundsArgs),
    /// Monte Carlo misclassification risk of a threshold pair.
    Risk(RiskArgs),
    /// Adversarial risk at the critical budget and attack-cost medians across dimensions.
    AttackSweep(SweepArgs),
    /// Tail of a Lipschitz statistic on SU(d) against the Levy bound.
    Concentration(ConcentrationArgs),
    /// Simulated certification of a state or a channel.
    #[command(subcommand)]
    Certify(CertifyCommand),
    /// Numerical probes of inequalities between distance measures.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Output stability of a channel/observable classifier under small state perturbations.
    UhlmannCheck(UhlmannArgs),
}

#[derive(Debug, Subcommand)]
pub enum CertifyCommand {
    /// Direct fidelity estimation by Pauli sampling.
    Dfe(DfeArgs),
    /// Average channel fidelity estimation.
    Channel(ChannelArgs),
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Compare H² with 2(1−F) and 2d(1−F).
    HsFidelity(ProbeArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BoundsArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub risk: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// paper | validated
    #[arg(long)]
    pub variant: Option<String>,
    /// Tr(O) for the output-stability bound.
    #[arg(long)]
    pub trace_o: Option<f64>,
    /// Infidelity budget for the output-stability bound.
    #[arg(long)]
    pub chi: Option<f64>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RiskArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub tc: Option<f64>,
    #[arg(long)]
    pub th: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub risk: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// States in the minimal-cost survey (default: trials).
    #[arg(long)]
    pub survey_trials: Option<usize>,
    /// paper | validated
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConcentrationArgs {
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// START:STOP:STEP
    #[arg(long)]
    pub eps: Option<String>,
    /// unnorm | norm
    #[arg(long)]
    pub metric: Option<String>,
    /// re-overlap | re-trace
    #[arg(long)]
    pub statistic: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct DfeArgs {
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// haar (default) | ghz
    #[arg(long)]
    pub target: Option<String>,
    /// single (default) | per-setting:M | flammia-liu
    #[arg(long)]
    pub schedule: Option<String>,
    /// Depolarizing weight p in ρ = (1−p)σ + p·I/d.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ChannelArgs {
    #[arg(long)]
    pub qubits: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub delta_prec: Option<f64>,
    #[arg(long)]
    pub fail_prob: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Device calls per run (default: ceil(1/(Δ′δ²))).
    #[arg(long)]
    pub calls: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ProbeArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct UhlmannArgs {
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub chi: Option<Vec<f64>>,
    /// Trials per (d, χ) cell.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// What a subcommand produced.
#[derive(Debug)]
pub struct Outcome {
    pub config: Value,
    pub results: Value,
    pub errors: Vec<String>,
    pub csv: Option<Vec<u8>>,
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

fn need<T>(v: Option<T>, name: &str) -> AppResult<T> {
    v.ok_or_else(|| config_err(format!("missing required parameter --{name}")))
}

fn to_csv<T: Serialize>(rows: &[T]) -> AppResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AppError::Numerical(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::Numerical(e.to_string()))
}

fn parse_variant(v: Option<&str>) -> AppResult<Variant> {
    Ok(v.map(str::parse).transpose()?.unwrap_or_default())
}

/// Overlays set fields of `cli` onto the config-file table `section`.
fn resolve<T: Serialize + DeserializeOwned>(
    cli: &T,
    section: Option<&toml::Value>,
    global_seed: Option<u64>,
) -> AppResult<T> {
    let mut base = match section {
        Some(v) => serde_json::to_value(v).map_err(|e| config_err(e.to_string()))?,
        None => json!({}),
    };
    if !base.is_object() {
        return Err(config_err("config section must be a table"));
    }
    let over = serde_json::to_value(cli).map_err(|e| config_err(e.to_string()))?;
    for (k, v) in over.as_object().into_iter().flatten() {
        if !v.is_null() {
            base[k] = v.clone();
        }
    }
    if let Some(seed) = global_seed {
        if over.get("seed").is_some() && base.get("seed").is_none_or(Value::is_null) {
            base["seed"] = json!(seed);
        }
    }
    serde_json::from_value(base).map_err(|e| config_err(format!("bad config value: {e}")))
}

fn section<'a>(cfg: &'a toml::Table, path: &[&str]) -> Option<&'a toml::Value> {
    let (first, rest) = path.split_first()?;
    rest.iter().try_fold(cfg.get(*first)?, |v, k| v.get(*k))
}

fn check_unit_open(x: f64, name: &str) -> AppResult<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(config_err(format!("--{name} = {x} must lie in (0, 1)")))
    }
}

fn check_positive(n: usize, name: &str) -> AppResult<()> {
    if n > 0 {
        Ok(())
    } else {
        Err(config_err(format!("--{name} must be positive")))
    }
}

// ---------------------------------------------------------------- bounds

pub fn run_bounds(a: &BoundsArgs) -> AppResult<Outcome> {
    let variant = parse_variant(a.variant.as_deref())?;
    let q = BoundQuery::new(need(a.d, "d")?, need(a.mu, "mu")?, need(a.risk, "risk")?, need(a.delta, "delta")?)?;
    let report = bounds::evaluate(&q, variant)?;
    let mut results = serde_json::to_value(report).map_err(|e| AppError::Numerical(e.to_string()))?;
    match (a.trace_o, a.chi) {
        (Some(t), Some(chi)) => {
            if !(t > 0.0) || !(0.0..=1.0).contains(&chi) {
                return Err(config_err("--trace-o must be positive and --chi in [0, 1]"));
            }
            results["uhlmann_output_bound"] = json!(bounds::uhlmann_output_bound(t, chi));
        }
        (None, None) => {}
        _ => return Err(config_err("--trace-o and --chi must be given together")),
    }
    let mut config = serde_json::to_value(a).unwrap_or_default();
    config["variant"] = json!(variant.tag());
    Ok(Outcome { config, results, errors: vec![], csv: None, out: None, json: a.json.clone() })
}

// ---------------------------------------------------------------- risk

#[derive(Debug, Serialize)]
pub struct RiskRow {
    pub d: usize,
    pub t_c: f64,
    pub t_h: f64,
    pub mu_analytic: f64,
    pub mu_hat: f64,
    pub std_err: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn run_risk(a: &RiskArgs) -> AppResult<Outcome> {
    let (d, t_c, t_h) = (need(a.d, "d")?, need(a.tc, "tc")?, need(a.th, "th")?);
    let (trials, seed) = (need(a.trials, "trials")?, need(a.seed, "seed")?);
    check_unit_open(t_c, "tc")?;
    check_unit_open(t_h, "th")?;
    let pair = ClassifierPair::thresholds(PureState::basis(d, 0)?, t_h, t_c)?;
    let est = estimate_risk(&pair, d, trials, &RngStream::named(seed, "risk"))?;
    let row = RiskRow {
        d,
        t_c,
        t_h,
        mu_analytic: analytic_risk_threshold(d, t_c, t_h)?,
        mu_hat: est.mean,
        std_err: est.std_error,
        trials,
        seed,
    };
    let z = (row.mu_hat - row.mu_analytic) / row.std_err.max(f64::MIN_POSITIVE);
    let results = json!({ "rows": [&row], "z_score": if row.std_err > 0.0 { json!(z) } else { Value::Null } });
    Ok(Outcome {
        config: serde_json::to_value(a).unwrap_or_default(),
        results,
        errors: vec![],
        csv: Some(to_csv(&[row])?),
        out: a.out.clone(),
        json: a.json.clone(),
    })
}

// ---------------------------------------------------------------- attack-sweep

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub t_c: f64,
    pub t_h: f64,
    pub budget_chi: f64,
    pub budget_hs: f64,
    pub adv_risk_hat: f64,
    pub std_err: f64,
    pub median_min_chi: f64,
    pub trials: usize,
    pub seed: u64,
    pub variant: String,
}

#[derive(Debug, Serialize)]
pub struct SweepDetail {
    pub d: usize,
    pub epsilon_sq_max: f64,
    pub adv_risk_analytic: f64,
    pub median_min_chi_analytic: f64,
    pub median_min_chi_std_err: f64,
    pub p90_min_chi: f64,
    pub median_min_hs: f64,
    pub random_perturbation_risk: f64,
    pub random_perturbation_std_err: f64,
    pub survey_trials: usize,
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub details: Vec<SweepDetail>,
}

pub fn attack_sweep(
    dims: &[usize],
    mu: f64,
    risk_cap: f64,
    trials: usize,
    survey_trials: usize,
    variant: Variant,
    seed: u64,
) -> AppResult<SweepOutput> {
    let base = RngStream::named(seed, "attack-sweep");
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for &d in dims {
        let q = BoundQuery::new(d, mu, risk_cap, 0.5)?;
        let eps_sq = bounds::epsilon_sq_max(&q)?;
        let budget_chi = (eps_sq / 4.0).min(1.0);
        let (t_c, t_h) = tuned_threshold_pair(d, mu)?;
        let pair = ClassifierPair::thresholds(PureState::basis(d, 0)?, t_h, t_c)?;
        let s = base.substream(d as u64);
        let adv = adversarial_risk(&pair, d, budget_chi, trials, &s.substream(0))?;
        let survey = min_perturbation_survey(&pair, d, survey_trials, &s.substream(1))?;
        let rnd = random_perturbation_risk(&pair, d, budget_chi, trials, &s.substream(2))?;
        rows.push(SweepRow {
            d,
            t_c,
            t_h,
            budget_chi,
            budget_hs: hs_for_infidelity(budget_chi),
            adv_risk_hat: adv.mean,
            std_err: adv.std_error,
            median_min_chi: survey.median_infidelity,
            trials,
            seed,
            variant: variant.tag().into(),
        });
        details.push(SweepDetail {
            d,
            epsilon_sq_max: eps_sq,
            adv_risk_analytic: threshold_adversarial_risk(d, t_c, t_h, budget_chi),
            median_min_chi_analytic: threshold_median_cost(d, t_c, t_h),
            median_min_chi_std_err: survey.median_std_error,
            p90_min_chi: survey.p90_infidelity,
            median_min_hs: survey.median_hs,
            random_perturbation_risk: rnd.mean,
            random_perturbation_std_err: rnd.std_error,
            survey_trials,
        });
    }
    Ok(SweepOutput { rows, details })
}

pub fn run_attack_sweep(a: &SweepArgs) -> AppResult<Outcome> {
    let dims = a.dims.clone().unwrap_or_else(|| vec![2, 4, 8, 16, 32]);
    let (mu, risk) = (need(a.mu, "mu")?, need(a.risk, "risk")?);
    let (trials, seed) = (need(a.trials, "trials")?, need(a.seed, "seed")?);
    let survey_trials = a.survey_trials.unwrap_or(trials);
    check_positive(survey_trials, "survey-trials")?;
    if dims.is_empty() {
        return Err(config_err("--dims must not be empty"));
    }
    let variant = parse_variant(a.variant.as_deref())?;
    let out = attack_sweep(&dims, mu, risk, trials, survey_trials, variant, seed)?;
    let medians: Vec<f64> = out.rows.iter().map(|r| r.median_min_chi).collect();
    let results = json!({
        "rows": &out.rows,
        "details": &out.details,
        "median_strictly_decreasing": medians.windows(2).all(|w| w[1] < w[0]),
        "risk_at_budget_at_least_half": out.rows.iter().all(|r| r.adv_risk_hat >= 0.5 - 3.0 * r.std_err),
    });
    Ok(Outcome {
        config: serde_json::to_value(a).unwrap_or_default(),
        results,
        errors: vec![],
        csv: Some(to_csv(&out.rows)?),
        out: a.out.clone(),
        json: a.json.clone(),
    })
}

// ---------------------------------------------------------------- concentration

#[derive(Debug, Serialize)]
pub struct ConcentrationRow {
    pub d: usize,
    pub eps: f64,
    pub tail_hat: f64,
    pub std_err: f64,
    pub levy_bound: f64,
    pub metric: String,
    pub samples: usize,
    pub seed: u64,
}

fn parse_metric(s: Option<&str>) -> AppResult<HsConvention> {
    match s.unwrap_or("unnorm") {
        "unnorm" | "unnormalized" => Ok(HsConvention::Unnormalized),
        "norm" | "normalized" => Ok(HsConvention::Normalized),
        other => Err(config_err(format!("unknown metric {other:?} (expected unnorm or norm)"))),
    }
}

fn parse_statistic(s: Option<&str>) -> AppResult<Statistic> {
    match s.unwrap_or("re-overlap") {
        "re-overlap" => Ok(Statistic::ReOverlap),
        "re-trace" => Ok(Statistic::ReTrace),
        other => Err(config_err(format!("unknown statistic {other:?} (expected re-overlap or re-trace)"))),
    }
}

pub fn concentration_curves(
    dims: &[usize],
    statistic: Statistic,
    metric: HsConvention,
    grid: &[f64],
    samples: usize,
    seed: u64,
) -> AppResult<Vec<ConcentrationCurve>> {
    let base = RngStream::named(seed, "concentration");
    dims.iter()
        .map(|&d| Ok(levy_tail_estimate(d, statistic, metric, grid, samples, &base.substream(d as u64))?))
        .collect()
}

pub fn run_concentration(a: &ConcentrationArgs) -> AppResult<Outcome> {
    let dims = need(a.d.clone(), "d")?;
    let (samples, seed) = (need(a.samples, "samples")?, need(a.seed, "seed")?);
    let grid = match &a.eps {
        Some(g) => parse_grid(g)?,
        None => default_grid(),
    };
    let metric = parse_metric(a.metric.as_deref())?;
    let statistic = parse_statistic(a.statistic.as_deref())?;
    let curves = concentration_curves(&dims, statistic, metric, &grid, samples, seed)?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for cv in &curves {
        for p in &cv.points {
            if p.violates() {
                errors.push(format!(
                    "tail exceeds Levy bound: d={} eps={} tail={} bound={} metric={} statistic={}",
                    cv.d,
                    p.eps,
                    p.tail,
                    p.bound,
                    metric.tag(),
                    statistic.tag()
                ));
            }
            rows.push(ConcentrationRow {
                d: cv.d,
                eps: p.eps,
                tail_hat: p.tail,
                std_err: p.std_error,
                levy_bound: p.bound,
                metric: metric.tag().into(),
                samples,
                seed,
            });
        }
    }
    let summary: Vec<Value> = curves
        .iter()
        .map(|cv| {
            json!({
                "d": cv.d,
                "median": cv.median,
                "median_std_err": cv.median_std_error,
                "violations": cv.violations().len(),
            })
        })
        .collect();
    let results = json!({
        "statistic": statistic.tag(),
        "metric": metric.tag(),
        "curves": summary,
        "rows": rows.len(),
        "note": "tails of a 1-Lipschitz statistic above its median; these are implied by, not equal to, the concentration function",
    });
    Ok(Outcome {
        config: serde_json::to_value(a).unwrap_or_default(),
        results,
        errors,
        csv: Some(to_csv(&rows)?),
        out: a.out.clone(),
        json: a.json.clone(),
    })
}

// ---------------------------------------------------------------- certify dfe

#[derive(Debug, Serialize)]
pub struct DfeRow {
    pub n_qubits: usize,
    pub eta: f64,
    pub delta: f64,
    pub run: usize,
    pub estimate: f64,
    pub true_fid: f64,
    pub settings_used: u64,
    pub shots_used: u64,
    pub seed: u64,
}

fn ghz(n: usize) -> AppResult<PureState> {
    let d = 1usize << n;
    let mut v = CVector::zeros(d);
    v[0] = c(1.0, 0.0);
    v[d - 1] = c(1.0, 0.0);
    Ok(PureState::normalized(v)?)
}

/// `(1−p)σ + p·I/d`.
pub fn depolarized(sigma: &PureState, p: f64) -> AppResult<DensityMatrix> {
    let d = sigma.dim();
    let m = sigma.to_density().matrix().scale(1.0 - p) + DensityMatrix::maximally_mixed(d).matrix().scale(p);
    Ok(DensityMatrix::new(m)?)
}

#[allow(clippy::too_many_arguments)]
pub fn dfe_rows(
    qubits: usize,
    eta: f64,
    delta: f64,
    runs: usize,
    target: &str,
    schedule: ShotSchedule,
    noise: f64,
    seed: u64,
) -> AppResult<Vec<DfeRow>> {
    if !(1..=10).contains(&qubits) {
        return Err(config_err("--qubits must be in 1..=10"));
    }
    check_unit_open(eta, "eta")?;
    check_unit_open(delta, "delta")?;
    check_positive(runs, "runs")?;
    if !(0.0..=1.0).contains(&noise) {
        return Err(config_err("--noise must lie in [0, 1]"));
    }
    let base = RngStream::named(seed, "certify-dfe");
    let d = 1usize << qubits;
    let sigma = match target {
        "haar" => sample_haar_state(d, &mut base.substream(0).rng())?,
        "ghz" => ghz(qubits)?,
        other => return Err(config_err(format!("unknown target {other:?} (expected haar or ghz)"))),
    };
    let rho = depolarized(&sigma, noise)?;
    let truth = (1.0 - noise) + noise / d as f64;
    let plan = DfeTarget::new(&sigma)?;
    let runs_out = par_trials(runs, &base.substream(1), |_, rng| plan.estimate(&rho, eta, delta, schedule, rng));
    runs_out
        .into_iter()
        .enumerate()
        .map(|(run, r)| {
            let r = r?;
            Ok(DfeRow {
                n_qubits: qubits,
                eta,
                delta,
                run,
                estimate: r.estimate,
                true_fid: truth,
                settings_used: r.settings_used,
                shots_used: r.shots_used,
                seed,
            })
        })
        .collect()
}

pub fn run_dfe(a: &DfeArgs) -> AppResult<Outcome> {
    let schedule: ShotSchedule = a.schedule.as_deref().unwrap_or("single").parse()?;
    let target = a.target.clone().unwrap_or_else(|| "haar".into());
    let (eta, delta) = (need(a.eta, "eta")?, need(a.delta, "delta")?);
    let rows = dfe_rows(
        need(a.qubits, "qubits")?,
        eta,
        delta,
        need(a.runs, "runs")?,
        &target,
        schedule,
        a.noise.unwrap_or(0.1),
        need(a.seed, "seed")?,
    )?;
    let misses = rows.iter().filter(|r| (r.estimate - r.true_fid).abs() > eta).count();
    let rate = misses as f64 / rows.len() as f64;
    let se = crate::classifier::binomial_std_error(rate, rows.len());
    let results = json!({
        "target": target,
        "schedule": schedule.tag(),
        "true_fid_convention": "squared (Tr(sigma rho))",
        "miss_rate": rate,
        "miss_rate_std_err": se,
        "calibrated": rate <= delta + 3.0 * se,
        "settings_used": rows[0].settings_used,
        "mean_shots": rows.iter().map(|r| r.shots_used as f64).sum::<f64>() / rows.len() as f64,
    });
    Ok(Outcome {
        config: serde_json::to_value(a).unwrap_or_default(),
        results,
        errors: vec![],
        csv: Some(to_csv(&rows)?),
        out: a.out.clone(),
        json: a.json.clone(),
    })
}

// ---------------------------------------------------------------- certify channel

#[derive(Debug, Serialize)]
pub struct ChannelRow {
    pub n_qubits: usize,
    pub theta: f64,
    pub delta_prec: f64,
    pub fail_prob: f64,
    pub run: usize,
    pub estimate: f64,
    pub true_avg_fid: f64,
    pub calls: u64,
    pub seed: u64,
}

/// Target `U` (Haar) and the device `U·V`, with `V` a rotation by `theta` in the `|0⟩,|1⟩` plane.
pub fn rotated_device(d: usize, theta: f64, seed: u64) -> AppResult<(UnitaryOperator, QuantumChannel)> {
    let u = sample_haar_unitary(d, true, &mut RngStream::named(seed, "certify-channel").substream(0).rng())?;
    let e0 = PureState::basis(d, 0)?;
    let e1 = PureState::basis(d, 1)?;
    let v = UnitaryOperator::new(planar_rotation(e0.amplitudes(), e1.amplitudes(), theta), true)?;
    let device = QuantumChannel::from_unitary(&u.compose(&v)?);
    Ok((u, device))
}

#[allow(clippy::too_many_arguments)]
pub fn channel_rows(
    qubits: usize,
    theta: f64,
    delta_prec: f64,
    fail_prob: f64,
    runs: usize,
    calls: Option<u64>,
    seed: u64,
) -> AppResult<Vec<ChannelRow>> {
    if !(1..=10).contains(&qubits) {
        return Err(config_err("--qubits must be in 1..=10"));
    }
    check_unit_open(delta_prec, "delta-prec")?;
    check_unit_open(fail_prob, "fail-prob")?;
    check_positive(runs, "runs")?;
    let d = 1usize << qubits;
    let (u, device) = rotated_device(d, theta, seed)?;
    let truth = exact_average_channel_fidelity(&u, &device)?;
    let base = RngStream::named(seed, "certify-channel").substream(1);
    let out: Vec<_> = (0..runs)
        .into_par_iter()
        .map(|i| channel_fidelity_estimate(&u, &device, delta_prec, fail_prob, calls, &base.substream(i as u64)))
        .collect();
    out.into_iter()
        .enumerate()
        .map(|(run, r)| {
            let r = r?;
            Ok(ChannelRow {
                n_qubits: qubits,
                theta,
                delta_prec,
                fail_prob,
                run,
                estimate: r.estimate,
                true_avg_fid: truth,
                calls: r.shots_used,
                seed,
            })
        })
        .collect()
}

pub fn run_channel(a: &ChannelArgs) -> AppResult<Outcome> {
    let rows = channel_rows(
        need(a.qubits, "qubits")?,
        need(a.theta, "theta")?,
        need(a.delta_prec, "delta-prec")?,
        need(a.fail_prob, "fail-prob")?,
        need(a.runs, "runs")?,
        a.calls,
        need(a.seed, "seed")?,
    )?;
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.estimate).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let results = json!({
        "true_avg_fid": rows[0].true_avg_fid,
        "mean_estimate": mean,
        "mean_std_err": (var / n).sqrt(),
        "calls": rows[0].calls,
    });
    Ok(Outcome {
        config: serde_json::to_value(a).unwrap_or_default(),
        results,
        errors: vec![],
        csv: Some(to_csv(&rows)?),
        out: a.out.clone(),
        json: a.json.clone(),
    })
}

// ---------------------------------------------------------------- probe hs-fidelity

#[derive(Debug, Serialize)]
pub struct ProbeRow {
    pub d: usize,
    pub sample: String,
    pub h_sq: f64,
    pub two_one_minus_f: f64,
    pub two_d_one_minus_f: f64,
    pub paper_ineq_holds: bool,
}

/// Planar rotations appended to every probe, as `(label, angle)`.
pub const PLANAR_FAMILY: [(&str, f64); 4] = [
    ("planar-pi/8", std::f64::consts::FRAC_PI_8),
    ("planar-pi/4", std::f64::consts::FRAC_PI_4),
    ("planar-pi/2", std::f64::consts::FRAC_PI_2),
    ("planar-3pi/4", 3.0 * std::f64::consts::FRAC_PI_4),
];

/// Random rows alternate between a Haar `u₁` with `u₂ = u₁V` for a random
/// small perturbation `V`, and independent Haar pairs; the planar family
/// follows with `u₁ = I` and `|b⟩ = |0⟩`.
pub fn probe_rows(d: usize, samples: usize, seed: u64) -> AppResult<Vec<ProbeRow>> {
    if d < 2 {
        return Err(config_err("--d must be at least 2"));
    }
    let stream = RngStream::named(seed, "probe-hs-fidelity");
    let random = par_trials(samples, &stream, |i, rng| -> AppResult<ProbeRow> {
        let b = sample_haar_state(d, rng)?;
        let u1 = sample_haar_unitary(d, true, rng)?;
        let u2 = if i % 2 == 0 {
            let eps = rng.random_range(0.01..2.0);
            let v = sample_perturbation_unitary(d, &PerturbationSpec::new(eps, PerturbationMode::HaarDirection), None, rng)?;
            u1.compose(&v)?
        } else {
            sample_haar_unitary(d, true, rng)?
        };
        let g = hs_fidelity_gap(&u1, &u2, &b)?;
        Ok(ProbeRow {
            d,
            sample: i.to_string(),
            h_sq: g.h_sq,
            two_one_minus_f: g.two_one_minus_f,
            two_d_one_minus_f: g.two_d_one_minus_f,
            paper_ineq_holds: g.dimension_scaled_holds(),
        })
    });
    let mut rows = random.into_iter().collect::<AppResult<Vec<_>>>()?;
    let e0 = PureState::basis(d, 0)?;
    let e1 = PureState::basis(d, 1)?;
    let id = UnitaryOperator::identity(d);
    for (label, theta) in PLANAR_FAMILY {
        let r = UnitaryOperator::new(planar_rotation(e0.amplitudes(), e1.amplitudes(), theta), true)?;
        let g = hs_fidelity_gap(&id, &r, &e0)?;
        rows.push(ProbeRow {
            d,
            sample: label.into(),
            h_sq: g.h_sq,
            two_one_minus_f: g.two_one_minus_f,
            two_d_one_minus_f: g.two_d_one_minus_f,
            paper_ineq_holds: g.dimension_scaled_holds(),
        });
    }
    Ok(rows)
}

pub fn run_probe(a: &ProbeArgs) -> AppResult<Outcome> {
    let (d, samples, seed) = (need(a.d, "d")?, need(a.samples, "samples")?, need(a.seed, "seed")?);
    let rows = probe_rows(d, samples, seed)?;
    let random = &rows[..samples];
    let provable = random.iter().filter(|r| r.h_sq >= r.two_one_minus_f - 1e-9).count();
    let scaled = random.iter().filter(|r| r.paper_ineq_holds).count();
    let planar_fails: Vec<&str> =
        rows[samples..].iter().filter(|r| !r.paper_ineq_holds).map(|r| r.sample.as_str()).collect();
    let results = json!({
        "random_samples": samples,
        "provable_holds": provable,
        "dimension_scaled_holds": scaled,
        "planar_counterexamples": planar_fails,
    });
    Ok(Outcome {
        config: serde_json::to_value(a).unwrap_or_default(),
        results,
        errors: vec![],
        csv: Some(to_csv(&rows)?),
        out: a.out.clone(),
        json: a.json.clone(),
    })
}

// ---------------------------------------------------------------- uhlmann-check

#[derive(Debug, Serialize)]
pub struct UhlmannRow {
    pub d: usize,
    pub chi: f64,
    pub trial: usize,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Random channel, PSD observable and pure `σ`; `ρ` pure with fidelity drawn
/// uniformly from `[1−χ, 1]`.
pub fn uhlmann_rows(dims: &[usize], chis: &[f64], trials: usize, seed: u64) -> AppResult<Vec<UhlmannRow>> {
    check_positive(trials, "trials")?;
    if chis.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(config_err("--chi values must lie in [0, 1]"));
    }
    let base = RngStream::named(seed, "uhlmann-check");
    let mut rows = Vec::new();
    for &d in dims {
        if d < 2 {
            return Err(config_err("--d values must be at least 2"));
        }
        for (ci, &chi) in chis.iter().enumerate() {
            let s = base.substream(((d as u64) << 16) | ci as u64);
            let cell = par_trials(trials, &s, |trial, rng| -> AppResult<UhlmannRow> {
                let rank = rng.random_range(1..=d);
                let ch = sample_random_channel(d, rank, rng)?;
                let obs = sample_psd_observable(d, rng);
                let sigma = sample_haar_state(d, rng)?;
                let partner = sample_orthogonal_partner(sigma.amplitudes(), rng);
                let f = 1.0 - chi * rng.random::<f64>();
                let rho = state_at_fidelity(&sigma, &partner, f)?;
                let out_s = apply_channel(&ch, &sigma.to_density())?;
                let out_r = apply_channel(&ch, &rho.to_density())?;
                let lhs = (expectation(&obs, &out_s)? - expectation(&obs, &out_r)?).abs();
                let bound = bounds::uhlmann_output_bound(obs.trace_value(), chi);
                Ok(UhlmannRow { d, chi, trial, lhs, bound, holds: lhs <= bound + 1e-9 })
            });
            for r in cell {
                rows.push(r?);
            }
        }
    }
    Ok(rows)
}

pub fn run_uhlmann(a: &UhlmannArgs) -> AppResult<Outcome> {
    let dims = need(a.d.clone(), "d")?;
    let chis = need(a.chi.clone(), "chi")?;
    let rows = uhlmann_rows(&dims, &chis, need(a.trials, "trials")?, need(a.seed, "seed")?)?;
    let violations = rows.iter().filter(|r| !r.holds).count();
    let max_ratio = rows.iter().filter(|r| r.bound > 0.0).map(|r| r.lhs / r.bound).fold(0.0, f64::max);
    let errors = rows
        .iter()
        .filter(|r| !r.holds)
        .map(|r| format!("bound violated: d={} chi={} trial={} lhs={} bound={}", r.d, r.chi, r.trial, r.lhs, r.bound))
        .collect();
    let results = json!({ "draws": rows.len(), "violations": violations, "max_lhs_over_bound": max_ratio });
    Ok(Outcome {
        config: serde_json::to_value(a).unwrap_or_default(),
        results,
        errors,
        csv: Some(to_csv(&rows)?),
        out: a.out.clone(),
        json: a.json.clone(),
    })
}

// ---------------------------------------------------------------- driver

fn load_config(path: Option<&Path>) -> AppResult<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>().map_err(|e| config_err(format!("cannot parse {}: {e}", path.display())))
}

fn dispatch(command: &Command, cfg: &toml::Table) -> AppResult<Outcome> {
    let seed = match cfg.get("seed") {
        None => None,
        Some(v) => Some(
            v.as_integer()
                .and_then(|s| u64::try_from(s).ok())
                .ok_or_else(|| config_err("top-level seed must be a nonnegative integer"))?,
        ),
    };
    match command {
        Command::Bounds(a) => run_bounds(&resolve(a, section(cfg, &["bounds"]), None)?),
        Command::Risk(a) => run_risk(&resolve(a, section(cfg, &["risk"]), seed)?),
        Command::AttackSweep(a) => run_attack_sweep(&resolve(a, section(cfg, &["attack-sweep"]), seed)?),
        Command::Concentration(a) => run_concentration(&resolve(a, section(cfg, &["concentration"]), seed)?),
        Command::Certify(CertifyCommand::Dfe(a)) => run_dfe(&resolve(a, section(cfg, &["certify", "dfe"]), seed)?),
        Command::Certify(CertifyCommand::Channel(a)) => {
            run_channel(&resolve(a, section(cfg, &["certify", "channel"]), seed)?)
        }
        Command::Probe(ProbeCommand::HsFidelity(a)) => {
            run_probe(&resolve(a, section(cfg, &["probe", "hs-fidelity"]), seed)?)
        }
        Command::UhlmannCheck(a) => run_uhlmann(&resolve(a, section(cfg, &["uhlmann-check"]), seed)?),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    std::fs::write(path, bytes).map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("qvuln: {e}");
            e.exit_code()
        }
    }
}

fn run_parsed(cli: &Cli) -> AppResult<()> {
    let start = Instant::now();
    let cfg = load_config(cli.config.as_deref())?;
    let workers = match (cli.workers, cfg.get("workers")) {
        (Some(w), _) => Some(w),
        (None, Some(v)) => Some(
            v.as_integer()
                .and_then(|w| usize::try_from(w).ok())
                .ok_or_else(|| config_err("workers must be a positive integer"))?,
        ),
        (None, None) => None,
    };
    if workers == Some(0) {
        return Err(config_err("--workers must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| config_err(e.to_string()))?;
    let outcome = pool.install(|| dispatch(&cli.command, &cfg))?;

    let summary = json!({
        "config": outcome.config,
        "results": outcome.results,
        "errors": outcome.errors,
        "version": VERSION,
        "wallclock_s": start.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| AppError::Numerical(e.to_string()))? + "\n";

    let mut stdout = std::io::stdout().lock();
    match (&outcome.csv, &outcome.out) {
        (Some(csv), Some(path)) => write_file(path, csv)?,
        (Some(csv), None) => stdout.write_all(csv).map_err(|e| AppError::Numerical(e.to_string()))?,
        (None, _) => {}
    }
    match &outcome.json {
        Some(path) => write_file(path, text.as_bytes())?,
        None if outcome.csv.is_none() || outcome.out.is_some() => {
            stdout.write_all(text.as_bytes()).map_err(|e| AppError::Numerical(e.to_string()))?
        }
        None => eprint!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cfg: toml::Table = "seed = 5\n[risk]\nd = 3\ntrials = 200\nseed = 9\n".parse().unwrap();
        let cli = RiskArgs { trials: Some(400), ..Default::default() };
        let r = resolve(&cli, section(&cfg, &["risk"]), Some(5)).unwrap();
        assert_eq!(r.d, Some(3));
        assert_eq!(r.trials, Some(400));
        assert_eq!(r.seed, Some(9));

        let cfg: toml::Table = "seed = 5\n".parse().unwrap();
        let r = resolve(&RiskArgs::default(), section(&cfg, &["risk"]), Some(5)).unwrap();
        assert_eq!(r.seed, Some(5));

        let bad: toml::Table = "[risk]\nbogus = 1\n".parse().unwrap();
        assert!(resolve(&RiskArgs::default(), section(&bad, &["risk"]), None).is_err());
    }

    #[test]
    fn error_classes() {
        assert_eq!(AppError::from(QvError::InvalidArgument("x".into())).exit_code(), EXIT_CONFIG);
        assert_eq!(AppError::from(QvError::Numerical("x".into())).exit_code(), EXIT_NUMERICAL);
        let a = BoundsArgs { d: Some(16), mu: Some(0.0), risk: Some(0.5), delta: Some(0.05), ..Default::default() };
        let e = run_bounds(&a).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        assert!(e.to_string().contains("mu(M) > 0"));
    }

    #[test]
    fn probe_planar_rows_flag_the_counterexample() {
        let rows = probe_rows(4, 10, 1).unwrap();
        let half = rows.iter().find(|r| r.sample == "planar-pi/2").unwrap();
        assert!(!half.paper_ineq_holds);
        assert!((half.h_sq - 4.0).abs() < 1e-12);
        assert!((half.two_d_one_minus_f - 8.0).abs() < 1e-12);
    }
}
