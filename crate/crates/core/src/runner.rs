//! Monte Carlo experiments: the sample → ECF → contrast minimization → inversion chain,
//! replicated over sample sizes and `κ`, with median aggregates and rate fits.
//!
//! Replicate `r` at the `i`-th sample size draws from stream `(i << 32) | r` of the master
//! seed, so every cell is reproducible on its own.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{calibrate_c_sigma, select_from, sigma, KappaGrid, Selection};
use crate::contrast::OracleModel;
use crate::ecf::{ecf_on_grid, SampleSet};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::minimize::{minimize_contrast, Centering, Method, MinimizeConfig, StepRule};
use crate::quadrature::{QuadRule, QuadratureGrid};
use crate::reconstruct::{invert, l2_distance, l2_distance_to, DensityGrid, Lattice, RuleSource, TuningRules};
use crate::scenarios::{translation_align, Scenario, ScenarioSpec};
use crate::taylor::{Block, TaylorPoly, UpsilonParams};

/// Source of the truncation degree and frequency cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TuningMode {
    #[default]
    Theoretical,
    Override {
        m: u32,
        #[serde(default)]
        omega: Option<f64>,
    },
}

fn default_nu() -> f64 {
    1.0
}
fn default_nodes() -> usize {
    24
}
fn default_m_opt() -> u32 {
    4
}
fn default_restarts() -> usize {
    4
}
fn default_max_iters() -> usize {
    300
}
fn default_half_width() -> f64 {
    4.0
}
fn default_points() -> usize {
    401
}
fn yes() -> bool {
    true
}

/// Knobs of one estimation run shared by the command line and experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSettings {
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub rule: QuadRule,
    /// Degree of the polynomials the contrast is minimized over.
    #[serde(default = "default_m_opt")]
    pub m_opt: u32,
    #[serde(default)]
    pub tuning: TuningMode,
    #[serde(default)]
    pub c_kappa: Option<f64>,
    /// `ν` entering the `c_κ` cap; defaults to the grid `ν`.
    #[serde(default)]
    pub nu_est: Option<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub step_rule: StepRule,
    /// Pin first-order coefficients to the sample mean.
    #[serde(default = "yes")]
    pub centered: bool,
    #[serde(default = "default_half_width")]
    pub lattice_half_width: f64,
    #[serde(default = "default_points")]
    pub lattice_points: usize,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl EstimateSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::config("nu", "must be positive"));
        }
        if self.nodes < 2 {
            return Err(Error::config("nodes", "must be at least 2"));
        }
        if self.m_opt < 1 {
            return Err(Error::config("m_opt", "must be at least 1"));
        }
        if let TuningMode::Override { omega: Some(w), .. } = self.tuning {
            if !(w > 0.0) {
                return Err(Error::config("omega", "must be positive"));
            }
        }
        if !(self.lattice_half_width > 0.0) {
            return Err(Error::config("lattice_half_width", "must be positive"));
        }
        if self.lattice_points < 2 {
            return Err(Error::config("lattice_points", "must be at least 2"));
        }
        Ok(())
    }

    pub fn grid(&self, dims: (usize, usize)) -> Result<QuadratureGrid> {
        QuadratureGrid::new(self.nu, self.nodes, self.rule, dims)
    }
}

/// Output of [`estimate`].
#[derive(Debug, Clone)]
pub struct Estimate {
    pub rules: TuningRules,
    /// Minimizer over degree `m_opt`.
    pub fitted: TaylorPoly,
    /// `T_m` of the minimizer, the CF estimate.
    pub truncated: TaylorPoly,
    pub contrast: f64,
    pub density: DensityGrid,
}

/// Minimizes the empirical contrast over `Υ_{κ,S}`, truncates at the tuned degree and
/// inverts. With `first_block` the inversion uses the first-block slice, i.e. the CF of
/// `X⁽¹⁾`, otherwise the full estimate.
pub fn estimate(
    samples: &SampleSet,
    params: UpsilonParams,
    settings: &EstimateSettings,
    first_block: bool,
    seed: u64,
    deadline: Option<(Instant, f64)>,
) -> Result<Estimate> {
    settings.validate()?;
    params.validate()?;
    let dims = samples.dims();
    let grid = settings.grid(dims)?;
    let (m_override, omega_override) = match settings.tuning {
        TuningMode::Theoretical => (None, None),
        TuningMode::Override { m, omega } => (Some(m), omega),
    };
    let target_dim = if first_block { dims.0 } else { dims.0 + dims.1 };
    let rules = TuningRules::resolve(
        params.kappa,
        samples.n(),
        params.s,
        target_dim,
        settings.nu_est.unwrap_or(settings.nu),
        settings.c_kappa,
        m_override,
        omega_override,
    )?;
    let table = ecf_on_grid(samples, &grid)?;
    let mut cfg = MinimizeConfig::new(params, settings.m_opt);
    cfg.restarts = settings.restarts;
    cfg.max_iters = settings.max_iters;
    cfg.method = settings.method;
    cfg.step_rule = settings.step_rule;
    cfg.seed = seed;
    cfg.deadline = deadline;
    if settings.centered {
        cfg.centering = Centering::Pinned(samples.mean());
    }
    let fit = minimize_contrast(&table, &grid, &cfg)?;
    let truncated = if rules.m <= settings.m_opt {
        fit.estimate.truncate(rules.m)
    } else {
        fit.estimate.extend(rules.m)
    };
    let source = if first_block {
        truncated.slice(Block::First)?
    } else {
        truncated.clone()
    };
    let lattice = Lattice::cube(target_dim, settings.lattice_half_width, settings.lattice_points)?;
    let mut density = invert(&source, rules.omega, &lattice)?;
    density.meta.kappa = Some(params.kappa);
    density.meta.n = Some(samples.n());
    density.meta.seed = Some(seed);
    Ok(Estimate {
        rules,
        fitted: fit.estimate,
        truncated,
        contrast: fit.value,
        density,
    })
}

/// `(∫_{box} |φ − Φ_R|²)^{1/2}` by the grid rule.
pub fn cf_error(poly: &TaylorPoly, truth: &OracleModel, grid: &QuadratureGrid) -> Result<f64> {
    let mut err = None;
    let v = grid.integrate(|t| match poly.evaluate(t) {
        Ok(z) => (z - truth.phi_r.value(t)).norm_sqr(),
        Err(e) => {
            err = Some(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v.sqrt()),
    }
}

fn default_replicates() -> usize {
    1
}
fn default_window() -> f64 {
    0.5
}
fn default_shift_step() -> f64 {
    0.05
}
fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioSpec,
    pub n_list: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub kappa_grid: Vec<f64>,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimate: EstimateSettings,
    /// Run the adaptive selection over the `κ` grid for every replicate.
    #[serde(default)]
    pub adaptive: bool,
    /// Fixed `c_σ`; `None` calibrates it by a split-sample pilot.
    #[serde(default)]
    pub c_sigma: Option<f64>,
    #[serde(default = "default_window")]
    pub shift_window: f64,
    #[serde(default = "default_shift_step")]
    pub shift_step: f64,
    /// Wall-clock budget per (n, replicate) unit in seconds.
    #[serde(default)]
    pub cell_budget_secs: Option<f64>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::config("n_list", "must not be empty"));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("n_list", "must be strictly increasing"));
        }
        if self.n_list[0] < 2 {
            return Err(Error::config("n_list", "sample sizes must be at least 2"));
        }
        if self.replicates < 1 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        KappaGrid::new(self.kappa_grid.clone()).or_else(|e| {
            if self.adaptive {
                Err(e)
            } else if self.kappa_grid.is_empty() {
                Err(Error::config("kappa_grid", "must not be empty"))
            } else {
                Ok(KappaGrid::default_grid())
            }
        })?;
        for k in &self.kappa_grid {
            UpsilonParams::new(*k, self.s)?;
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("beta", "must be positive"));
        }
        if let Some(c) = self.c_sigma {
            if !(c > 0.0) {
                return Err(Error::config("c_sigma", "must be positive"));
            }
        }
        if let Some(b) = self.cell_budget_secs {
            if !(b > 0.0) {
                return Err(Error::config("cell_budget_secs", "must be positive"));
            }
        }
        self.estimate.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
    Timeout,
}

/// One `(n, κ, replicate)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub n: usize,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub kappa: f64,
    pub replicate: usize,
    pub status: CellStatus,
    pub m: u32,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub omega: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub contrast: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub cf_error: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub l2_raw: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub l2_aligned: f64,
    pub message: String,
}

/// One adaptive selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptRow {
    pub n: usize,
    pub replicate: usize,
    pub status: CellStatus,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub c_sigma: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub kappa_hat: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub l2_raw: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub l2_aligned: f64,
    pub selection: Option<Selection>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub kappa: f64,
    pub quantity: String,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub median: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub q1: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub q3: f64,
    pub count: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub kappa: f64,
    pub quantity: String,
    pub fit: Option<RateFit>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub cells: Vec<CellRow>,
    pub adaptive: Vec<AdaptRow>,
    pub aggregates: Vec<Aggregate>,
    pub slopes: Vec<SlopeRow>,
}

pub const QUANTITIES: [&str; 4] = ["contrast", "cf_error", "l2_raw", "l2_aligned"];

fn stream(n_index: usize, replicate: usize) -> u64 {
    ((n_index as u64) << 32) | replicate as u64
}

fn status_of(e: &Error) -> CellStatus {
    if matches!(e, Error::Timeout(_)) {
        CellStatus::Timeout
    } else {
        CellStatus::Failed
    }
}

fn failed_cell(n: usize, kappa: f64, replicate: usize, e: &Error) -> CellRow {
    CellRow {
        n,
        kappa,
        replicate,
        status: status_of(e),
        m: 0,
        omega: f64::NAN,
        contrast: f64::NAN,
        cf_error: f64::NAN,
        l2_raw: f64::NAN,
        l2_aligned: f64::NAN,
        message: e.to_string(),
    }
}

struct Unit<'a> {
    plan: &'a ExperimentPlan,
    scenario: &'a Scenario,
    truth: &'a OracleModel,
}

impl Unit<'_> {
    fn density_errors(&self, density: &DensityGrid) -> (f64, f64) {
        match self.scenario.target_density() {
            Ok((_, f)) => {
                let f = move |x: &[f64]| f(x);
                match translation_align(density, &f, self.plan.shift_window, self.plan.shift_step) {
                    Ok(a) => (a.raw, a.aligned),
                    Err(_) => {
                        let raw = l2_distance_to(density, &f);
                        (raw, raw)
                    }
                }
            }
            Err(_) => (f64::NAN, f64::NAN),
        }
    }

    fn run(&self, n_index: usize, replicate: usize) -> (Vec<CellRow>, Option<AdaptRow>) {
        let plan = self.plan;
        let n = plan.n_list[n_index];
        let seed = plan.seed.wrapping_add(stream(n_index, replicate));
        let deadline = plan.cell_budget_secs.map(|b| (Instant::now(), b));
        let first_block = self.scenario.target_is_first_block();
        let samples = match self.scenario.sample(n, plan.seed, stream(n_index, replicate)) {
            Ok(s) => s,
            Err(e) => {
                let rows = plan.kappa_grid.iter().map(|k| failed_cell(n, *k, replicate, &e)).collect();
                return (rows, None);
            }
        };
        let grid = match plan.estimate.grid(samples.dims()) {
            Ok(g) => g,
            Err(e) => {
                let rows = plan.kappa_grid.iter().map(|k| failed_cell(n, *k, replicate, &e)).collect();
                return (rows, None);
            }
        };
        let mut rows = Vec::new();
        let mut estimates = Vec::new();
        for &kappa in &plan.kappa_grid {
            let result = UpsilonParams::new(kappa, plan.s)
                .and_then(|p| estimate(&samples, p, &plan.estimate, first_block, seed, deadline))
                .and_then(|e| {
                    let err = cf_error(&e.truncated, self.truth, &grid)?;
                    Ok((e, err))
                });
            match result {
                Ok((e, err)) => {
                    let (raw, aligned) = self.density_errors(&e.density);
                    rows.push(CellRow {
                        n,
                        kappa,
                        replicate,
                        status: CellStatus::Ok,
                        m: e.rules.m,
                        omega: e.rules.omega,
                        contrast: e.contrast,
                        cf_error: err,
                        l2_raw: raw,
                        l2_aligned: aligned,
                        message: String::new(),
                    });
                    estimates.push(Some(e.density));
                }
                Err(e) => {
                    rows.push(failed_cell(n, kappa, replicate, &e));
                    estimates.push(None);
                }
            }
        }
        let adapt = plan
            .adaptive
            .then(|| self.adapt(n, replicate, seed, &samples, &estimates, deadline, first_block));
        (rows, adapt)
    }

    #[allow(clippy::too_many_arguments)]
    fn adapt(
        &self,
        n: usize,
        replicate: usize,
        seed: u64,
        samples: &SampleSet,
        estimates: &[Option<DensityGrid>],
        deadline: Option<(Instant, f64)>,
        first_block: bool,
    ) -> AdaptRow {
        let plan = self.plan;
        let run = || -> Result<AdaptRow> {
            let grid = KappaGrid::new(plan.kappa_grid.clone())?;
            let ests: Vec<DensityGrid> = estimates
                .iter()
                .map(|e| e.clone().ok_or_else(|| Error::numerical("an estimate on the grid failed")))
                .collect::<Result<_>>()?;
            let c_sigma = match plan.c_sigma {
                Some(c) => c,
                None => pilot_c_sigma(samples, &grid, plan.s, plan.beta, &plan.estimate, first_block, seed, deadline)?,
            };
            let selection = select_estimates(&grid, &ests, n, c_sigma, plan.beta)?;
            let (raw, aligned) = self.density_errors(&ests[selection.index]);
            Ok(AdaptRow {
                n,
                replicate,
                status: CellStatus::Ok,
                c_sigma,
                kappa_hat: selection.kappa,
                l2_raw: raw,
                l2_aligned: aligned,
                selection: Some(selection),
                message: String::new(),
            })
        };
        run().unwrap_or_else(|e| AdaptRow {
            n,
            replicate,
            status: status_of(&e),
            c_sigma: f64::NAN,
            kappa_hat: f64::NAN,
            l2_raw: f64::NAN,
            l2_aligned: f64::NAN,
            selection: None,
            message: e.to_string(),
        })
    }
}

/// Split-sample pilot for `c_σ`: estimates on the two halves of the sample at every
/// grid point, combined by [`calibrate_c_sigma`].
#[allow(clippy::too_many_arguments)]
pub fn pilot_c_sigma(
    samples: &SampleSet,
    grid: &KappaGrid,
    s: f64,
    beta: f64,
    settings: &EstimateSettings,
    first_block: bool,
    seed: u64,
    deadline: Option<(Instant, f64)>,
) -> Result<f64> {
    let n = samples.n();
    let half = n / 2;
    let a = samples.subset(0..half)?;
    let b = samples.subset(half..2 * half)?;
    let mut split = Vec::new();
    for &kappa in grid.values() {
        let p = UpsilonParams::new(kappa, s)?;
        let ea = estimate(&a, p, settings, first_block, seed ^ 0xa5a5, deadline)?;
        let eb = estimate(&b, p, settings, first_block, seed ^ 0x5a5a, deadline)?;
        split.push(l2_distance(&ea.density, &eb.density)?);
    }
    calibrate_c_sigma(&split, grid, n as f64, beta)
}

/// Goldenshluger–Lepski selection among density estimates, one per grid point.
pub fn select_estimates(grid: &KappaGrid, estimates: &[DensityGrid], n: usize, c_sigma: f64, beta: f64) -> Result<Selection> {
    if estimates.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: estimates.len(),
        });
    }
    let sigmas = grid
        .values()
        .iter()
        .map(|k| sigma(*k, n as f64, c_sigma, beta))
        .collect::<Result<Vec<_>>>()?;
    let mut d = vec![vec![0.0; grid.len()]; grid.len()];
    for i in 0..grid.len() {
        for j in 0..i {
            let v = l2_distance(&estimates[i], &estimates[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    select_from(grid, &d, &sigmas)
}

/// Quantiles by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile(&v, 0.5)
}

fn quantity(row: &CellRow, name: &str) -> f64 {
    match name {
        "contrast" => row.contrast,
        "cf_error" => row.cf_error,
        "l2_raw" => row.l2_raw,
        "l2_aligned" => row.l2_aligned,
        _ => f64::NAN,
    }
}

/// Median and quartiles per `(n, κ, quantity)`; failed and timed-out cells are excluded
/// and counted.
pub fn aggregate(plan: &ExperimentPlan, cells: &[CellRow]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &n in &plan.n_list {
        for &kappa in &plan.kappa_grid {
            let group: Vec<&CellRow> = cells.iter().filter(|c| c.n == n && c.kappa == kappa).collect();
            for q in QUANTITIES {
                let mut v: Vec<f64> = group
                    .iter()
                    .filter(|c| c.status == CellStatus::Ok)
                    .map(|c| quantity(c, q))
                    .filter(|x| x.is_finite())
                    .collect();
                v.sort_by(|a, b| a.total_cmp(b));
                let (median, q1, q3) = if v.is_empty() {
                    (f64::NAN, f64::NAN, f64::NAN)
                } else {
                    (quantile(&v, 0.5), quantile(&v, 0.25), quantile(&v, 0.75))
                };
                out.push(Aggregate {
                    n,
                    kappa,
                    quantity: q.to_string(),
                    median,
                    q1,
                    q3,
                    count: v.len(),
                    excluded: group.len() - v.len(),
                });
            }
        }
    }
    out
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub const BOOTSTRAP_DRAWS: usize = 400;

/// Least-squares slope of `log median` against `log n`, with a percentile bootstrap
/// interval from resampling replicates within each sample size.
pub fn fit_rate_values(ns: &[f64], values: &[Vec<f64>], seed: u64) -> Result<RateFit> {
    if ns.len() < 3 || ns.len() != values.len() {
        return Err(Error::invalid("a rate fit needs at least three sample sizes"));
    }
    let log_median = |v: &[f64]| -> Result<f64> {
        if v.is_empty() {
            return Err(Error::invalid("a sample size has no successful replicate"));
        }
        let m = median(v);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::numerical("degenerate errors: median is not positive"));
        }
        Ok(m.ln())
    };
    let lx: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ly = values.iter().map(|v| log_median(v)).collect::<Result<Vec<_>>>()?;
    let slope = ls_slope(&lx, &ly);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boots = Vec::with_capacity(BOOTSTRAP_DRAWS);
    for _ in 0..BOOTSTRAP_DRAWS {
        let ys: Vec<f64> = values
            .iter()
            .map(|v| {
                let r: Vec<f64> = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect();
                log_median(&r)
            })
            .collect::<Result<_>>()?;
        boots.push(ls_slope(&lx, &ys));
    }
    boots.sort_by(|a, b| a.total_cmp(b));
    Ok(RateFit {
        slope,
        ci_low: quantile(&boots, 0.025),
        ci_high: quantile(&boots, 0.975),
    })
}

/// Rate fit of one quantity at one `κ` from a report.
pub fn fit_rate(report: &ExperimentReport, quantity_name: &str, kappa: f64) -> Result<RateFit> {
    if !QUANTITIES.contains(&quantity_name) {
        return Err(Error::config("quantity", format!("unknown quantity '{quantity_name}'")));
    }
    let ns: Vec<f64> = report.plan.n_list.iter().map(|n| *n as f64).collect();
    let values: Vec<Vec<f64>> = report
        .plan
        .n_list
        .iter()
        .map(|&n| {
            report
                .cells
                .iter()
                .filter(|c| c.n == n && c.kappa == kappa && c.status == CellStatus::Ok)
                .map(|c| quantity(c, quantity_name))
                .filter(|x| x.is_finite())
                .collect()
        })
        .collect();
    fit_rate_values(&ns, &values, report.plan.seed)
}

/// Executes every `(n, replicate)` unit; failures are recorded per cell.
pub fn run(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let scenario = Scenario::new(plan.scenario.clone())?;
    let truth = scenario.true_cf();
    let unit = Unit {
        plan,
        scenario: &scenario,
        truth: &truth,
    };
    let jobs: Vec<(usize, usize)> = (0..plan.n_list.len())
        .flat_map(|i| (0..plan.replicates).map(move |r| (i, r)))
        .collect();
    let results: Vec<(Vec<CellRow>, Option<AdaptRow>)> = jobs.par_iter().map(|&(i, r)| unit.run(i, r)).collect();
    let mut cells = Vec::new();
    let mut adaptive = Vec::new();
    for (c, a) in results {
        cells.extend(c);
        adaptive.extend(a);
    }
    let aggregates = aggregate(plan, &cells);
    let mut report = ExperimentReport {
        plan: plan.clone(),
        cells,
        adaptive,
        aggregates,
        slopes: Vec::new(),
    };
    if plan.n_list.len() >= 3 {
        for &kappa in &plan.kappa_grid {
            for q in QUANTITIES {
                let (fit, message) = match fit_rate(&report, q, kappa) {
                    Ok(f) => (Some(f), String::new()),
                    Err(e) => (None, e.to_string()),
                };
                report.slopes.push(SlopeRow {
                    kappa,
                    quantity: q.to_string(),
                    fit,
                    message,
                });
            }
        }
    }
    Ok(report)
}

impl ExperimentReport {
    /// `cells.csv`, `adaptive.csv`, `aggregates.csv` and `summary.json` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
        w.write_record([
            "n", "kappa", "replicate", "status", "m", "omega", "contrast", "cf_error", "l2_raw", "l2_aligned", "message",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.n.to_string(),
                fmt_f64(c.kappa),
                c.replicate.to_string(),
                status_name(c.status).to_string(),
                c.m.to_string(),
                fmt_f64(c.omega),
                fmt_f64(c.contrast),
                fmt_f64(c.cf_error),
                fmt_f64(c.l2_raw),
                fmt_f64(c.l2_aligned),
                c.message.clone(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("aggregates.csv"))?;
        w.write_record(["n", "kappa", "quantity", "median", "q1", "q3", "count", "excluded"])?;
        for a in &self.aggregates {
            w.write_record([
                a.n.to_string(),
                fmt_f64(a.kappa),
                a.quantity.clone(),
                fmt_f64(a.median),
                fmt_f64(a.q1),
                fmt_f64(a.q3),
                a.count.to_string(),
                a.excluded.to_string(),
            ])?;
        }
        w.flush()?;
        if self.plan.adaptive {
            let mut w = csv::Writer::from_path(dir.join("adaptive.csv"))?;
            w.write_record(["n", "replicate", "status", "c_sigma", "kappa_hat", "l2_raw", "l2_aligned", "message"])?;
            for a in &self.adaptive {
                w.write_record([
                    a.n.to_string(),
                    a.replicate.to_string(),
                    status_name(a.status).to_string(),
                    fmt_f64(a.c_sigma),
                    fmt_f64(a.kappa_hat),
                    fmt_f64(a.l2_raw),
                    fmt_f64(a.l2_aligned),
                    a.message.clone(),
                ])?;
            }
            w.flush()?;
        }
        std::fs::write(dir.join("summary.json"), self.to_json()?)?;
        Ok(())
    }

    /// Full report as JSON; non-finite numbers become `null`.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn from_json(s: &str) -> Result<ExperimentReport> {
        Ok(serde_json::from_str(s)?)
    }

    /// Text table of the aggregates.
    pub fn table(&self) -> String {
        let mut out = format!("{:>8} {:>6} {:>11} {:>12} {:>12} {:>12} {:>5}\n", "n", "kappa", "quantity", "median", "q1", "q3", "ok");
        for a in &self.aggregates {
            out.push_str(&format!(
                "{:>8} {:>6.3} {:>11} {:>12.4e} {:>12.4e} {:>12.4e} {:>5}\n",
                a.n, a.kappa, a.quantity, a.median, a.q1, a.q3, a.count
            ));
        }
        for s in &self.slopes {
            if let Some(f) = s.fit {
                out.push_str(&format!(
                    "slope kappa={:.3} {}: {:.4} [{:.4}, {:.4}]\n",
                    s.kappa, s.quantity, f.slope, f.ci_low, f.ci_high
                ));
            }
        }
        out
    }
}

fn status_name(s: CellStatus) -> &'static str {
    match s {
        CellStatus::Ok => "ok",
        CellStatus::Failed => "failed",
        CellStatus::Timeout => "timeout",
    }
}

/// JSON writes non-finite floats as `null`; read them back as NaN where a number is expected.
/// Whether a tuning value came from the theoretical rule, for reports.
pub fn is_theoretical(source: RuleSource) -> bool {
    source == RuleSource::Theoretical
}
