//! Approximate minimization of the empirical contrast over `Υ_{κ,S}`.
//!
//! Multi-start local search, either projected Levenberg–Marquardt on the weighted
//! residuals or projected gradient descent. The first start is a least-squares fit of
//! the truncated Taylor coefficients to the empirical CF, projected onto the class;
//! the others are uniform draws from the coefficient box.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::ContrastEvaluator;
use crate::ecf::EcfTable;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::multiindex::MultiIndexSet;
use crate::quadrature::QuadratureGrid;
use crate::taylor::{TaylorPoly, UpsilonParams};

/// Final coefficients, value and trace of one local search.
type Run = (Vec<f64>, f64, Vec<TraceRow>);

/// Extra closed constraint on candidates; `None` means no constraint beyond `Υ_{κ,S}`.
pub type Constraint = Arc<dyn Fn(&TaylorPoly) -> bool + Send + Sync>;

/// How the first-order coefficients are handled.
///
/// The contrast is invariant under `φ(t) ↦ φ(t)e^{i mᵀt}`, so its minimizers are only
/// defined up to translation. Pinning `c_{e_a} = i·μ_a` to the sample mean fixes the
/// translation under the convention that the noise is centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "mean")]
pub enum Centering {
    #[default]
    Free,
    Pinned(Vec<f64>),
}

/// Step-size rule of the projected gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Backtracking from a unit step.
    #[default]
    Halving,
    /// Backtracking from the Barzilai–Borwein step of the previous iteration.
    Spectral,
}

/// Local search used from each start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Damped Gauss–Newton on the residual vector, projected onto the box.
    #[default]
    LevenbergMarquardt,
    ProjectedGradient,
}

#[derive(Clone)]
pub struct MinimizeConfig {
    pub method: Method,
    pub params: UpsilonParams,
    pub m_opt: u32,
    pub restarts: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    pub armijo: f64,
    pub step_rule: StepRule,
    /// Projected gradient: improvement threshold over `stall_window` iterations;
    /// `None` means `1/n`. Levenberg–Marquardt stops on relative improvement instead.
    pub tol: Option<f64>,
    pub stall_window: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub centering: Centering,
    pub constraint: Option<Constraint>,
    pub deadline: Option<(Instant, f64)>,
}

impl std::fmt::Debug for MinimizeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MinimizeConfig")
            .field("params", &self.params)
            .field("method", &self.method)
            .field("m_opt", &self.m_opt)
            .field("restarts", &self.restarts)
            .field("max_iters", &self.max_iters)
            .field("step_rule", &self.step_rule)
            .field("tol", &self.tol)
            .field("centering", &self.centering)
            .field("constraint", &self.constraint.is_some())
            .finish()
    }
}

impl MinimizeConfig {
    pub fn new(params: UpsilonParams, m_opt: u32) -> Self {
        MinimizeConfig {
            method: Method::LevenbergMarquardt,
            params,
            m_opt,
            restarts: 4,
            max_iters: 500,
            initial_step: 1.0,
            armijo: 1e-4,
            step_rule: StepRule::Halving,
            tol: None,
            stall_window: 25,
            grad_tol: 1e-9,
            seed: 0,
            centering: Centering::Free,
            constraint: None,
            deadline: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.m_opt < 1 {
            return Err(Error::config("m_opt", "must be at least 1"));
        }
        if self.restarts < 1 {
            return Err(Error::config("restarts", "must be at least 1"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::config("tol", "must be positive"));
            }
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::config("initial_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub estimate: TaylorPoly,
    pub value: f64,
    /// Iterations of the winning restart.
    pub trace: Vec<TraceRow>,
    pub restarts_used: usize,
    pub winning_restart: usize,
    /// Final value of every restart, in restart order.
    pub restart_values: Vec<f64>,
}

impl MinimizeResult {
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iter,value,grad_norm")?;
        for r in &self.trace {
            writeln!(f, "{},{},{}", r.iter, fmt_f64(r.value), fmt_f64(r.grad_norm))?;
        }
        Ok(())
    }
}

/// Gradient of the empirical contrast with respect to the parity-reduced real coefficients.
pub fn contrast_gradient(poly: &TaylorPoly, ecf: &EcfTable, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let ev = ContrastEvaluator::new(grid, poly.index_set().clone(), poly.dims(), ecf)?;
    Ok(ev.value_and_gradient(poly.reals())?.1)
}

struct Problem<'a> {
    ev: ContrastEvaluator,
    set: Arc<MultiIndexSet>,
    dims: (usize, usize),
    bounds: Vec<f64>,
    pinned: Vec<Option<f64>>,
    config: &'a MinimizeConfig,
    tol: f64,
}

impl Problem<'_> {
    fn project(&self, x: &mut [f64]) {
        x[0] = 1.0;
        for j in 1..x.len() {
            x[j] = match self.pinned[j] {
                Some(v) => v.clamp(-self.bounds[j], self.bounds[j]),
                None => x[j].clamp(-self.bounds[j], self.bounds[j]),
            };
        }
    }

    fn free_gradient(&self, g: &mut [f64]) {
        g[0] = 0.0;
        for j in 1..g.len() {
            if self.pinned[j].is_some() {
                g[j] = 0.0;
            }
        }
    }

    fn poly(&self, x: &[f64]) -> TaylorPoly {
        TaylorPoly::with_set(self.dims.0, self.dims.1, self.set.clone(), x.to_vec(), true)
            .expect("projected coefficients are well formed")
    }

    fn admissible(&self, x: &[f64]) -> bool {
        match &self.config.constraint {
            None => true,
            Some(c) => c(&self.poly(x)),
        }
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, mut g) = self.ev.value_and_gradient(x)?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!("non-finite contrast at coefficients {x:?}")));
        }
        self.free_gradient(&mut g);
        Ok((v, g))
    }

    fn check_deadline(&self) -> Result<()> {
        if let Some((start, budget)) = self.config.deadline {
            if start.elapsed().as_secs_f64() > budget {
                return Err(Error::Timeout(budget));
            }
        }
        Ok(())
    }

    /// Projected gradient descent from `x`.
    fn descend(&self, mut x: Vec<f64>) -> Result<Run> {
        let cfg = self.config;
        self.project(&mut x);
        let (mut f, mut g) = self.evaluate(&x)?;
        let mut trace = vec![TraceRow {
            iter: 0,
            value: f,
            grad_norm: norm(&g),
        }];
        let mut history = vec![f];
        let mut step = cfg.initial_step;
        for iter in 1..=cfg.max_iters {
            self.check_deadline()?;
            let gn = norm(&g);
            if gn < cfg.grad_tol {
                break;
            }
            let mut alpha = match cfg.step_rule {
                StepRule::Halving => cfg.initial_step,
                StepRule::Spectral => step,
            };
            let mut accepted = None;
            for _ in 0..80 {
                let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
                self.project(&mut y);
                let decrease: f64 = g.iter().zip(x.iter().zip(&y)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if decrease <= 0.0 {
                    break;
                }
                if self.admissible(&y) {
                    let (fy, gy) = self.evaluate(&y)?;
                    if fy <= f - cfg.armijo * decrease {
                        accepted = Some((y, fy, gy));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((y, fy, gy)) = accepted else { break };
            if cfg.step_rule == StepRule::Spectral {
                let s: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                let r: Vec<f64> = gy.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sr: f64 = s.iter().zip(&r).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum();
                step = if sr > 0.0 { (ss / sr).clamp(1e-6, 1e6) } else { cfg.initial_step };
            }
            x = y;
            f = fy;
            g = gy;
            trace.push(TraceRow {
                iter,
                value: f,
                grad_norm: norm(&g),
            });
            history.push(f);
            if history.len() > cfg.stall_window {
                let old = history[history.len() - 1 - cfg.stall_window];
                if old - f < self.tol {
                    break;
                }
            }
        }
        Ok((x, f, trace))
    }

    /// Projected Levenberg–Marquardt from `x`.
    ///
    /// Coefficients at a bound whose descent direction points outward are frozen for the
    /// step; the trial point is projected back onto the box.
    fn levenberg(&self, mut x: Vec<f64>) -> Result<Run> {
        let cfg = self.config;
        self.project(&mut x);
        let free: Vec<usize> = (1..x.len()).filter(|&j| self.pinned[j].is_none()).collect();
        let mut f = self.ev.value(&x)?;
        if !f.is_finite() {
            return Err(Error::numerical(format!("non-finite contrast at coefficients {x:?}")));
        }
        let mut trace = Vec::new();
        let mut lambda = 1e-3;
        let mut stalls = 0;
        for iter in 0..=cfg.max_iters {
            self.check_deadline()?;
            let (res, jac) = self.ev.residuals_and_jacobian(&x, &free)?;
            let g = jac.tr_mul(&res);
            let grad_norm = 2.0 * g.norm();
            trace.push(TraceRow {
                iter,
                value: f,
                grad_norm,
            });
            if iter == cfg.max_iters || grad_norm < cfg.grad_tol || free.is_empty() {
                break;
            }
            let active: Vec<usize> = (0..free.len())
                .filter(|&c| {
                    let j = free[c];
                    let b = self.bounds[j];
                    !((x[j] >= b && g[c] < 0.0) || (x[j] <= -b && g[c] > 0.0))
                })
                .collect();
            if active.is_empty() {
                break;
            }
            let ja = jac.select_columns(&active);
            let ga = DVector::from_iterator(active.len(), active.iter().map(|&c| g[c]));
            let h = ja.tr_mul(&ja);
            let mut accepted = None;
            while lambda <= 1e12 {
                let mut m = h.clone();
                for c in 0..active.len() {
                    m[(c, c)] += lambda * (h[(c, c)] + 1e-12);
                }
                let Some(step) = m.cholesky().map(|ch| ch.solve(&ga)) else {
                    lambda *= 4.0;
                    continue;
                };
                let mut y = x.clone();
                for (c, &a) in active.iter().enumerate() {
                    y[free[a]] -= step[c];
                }
                self.project(&mut y);
                if self.admissible(&y) {
                    let fy = self.ev.value(&y)?;
                    if fy.is_finite() && fy < f {
                        accepted = Some((y, fy));
                        lambda = (lambda / 3.0).max(1e-12);
                        break;
                    }
                }
                lambda *= 4.0;
            }
            let Some((y, fy)) = accepted else { break };
            stalls = if f - fy <= 1e-9 * f { stalls + 1 } else { 0 };
            x = y;
            f = fy;
            if stalls >= 3 {
                let (_, g) = self.evaluate(&x)?;
                trace.push(TraceRow {
                    iter: iter + 1,
                    value: f,
                    grad_norm: norm(&g),
                });
                break;
            }
        }
        Ok((x, f, trace))
    }

    fn search(&self, x: Vec<f64>) -> Result<Run> {
        match self.config.method {
            Method::LevenbergMarquardt => self.levenberg(x),
            Method::ProjectedGradient => self.descend(x),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Weighted least-squares fit of the truncated Taylor coefficients to a CF table.
pub fn least_squares_fit(set: &MultiIndexSet, ecf: &EcfTable, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let d = grid.dim();
    let rows = grid.len();
    let mut fit = vec![0.0; set.len()];
    for parity in [0u32, 1] {
        let cols: Vec<usize> = (0..set.len()).filter(|&j| set.get(j).order() % 2 == parity).collect();
        if cols.is_empty() {
            continue;
        }
        let mut a = DMatrix::<f64>::zeros(rows, cols.len());
        let mut b = DVector::<f64>::zeros(rows);
        let mut t = vec![0.0; d];
        for k in 0..rows {
            let w = grid.node(k, &mut t).sqrt();
            for (c, &j) in cols.iter().enumerate() {
                let mono: f64 = set
                    .get(j)
                    .entries()
                    .iter()
                    .zip(&t)
                    .map(|(&e, &x)| x.powi(e as i32))
                    .product();
                a[(k, c)] = w * mono;
            }
            b[k] = w * if parity == 0 { ecf.full[k].re } else { ecf.full[k].im };
        }
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::numerical(format!("least-squares initializer failed: {e}")))?;
        for (c, &j) in cols.iter().enumerate() {
            fit[j] = sol[c];
        }
    }
    Ok(fit)
}

/// Minimizes the empirical contrast over `Υ_{κ,S}` truncated at degree `m_opt`.
pub fn minimize_contrast(ecf: &EcfTable, grid: &QuadratureGrid, config: &MinimizeConfig) -> Result<MinimizeResult> {
    config.validate()?;
    let dims = grid.dims();
    let d = grid.dim();
    let set = Arc::new(MultiIndexSet::new(d, config.m_opt));
    let ev = ContrastEvaluator::new(grid, set.clone(), dims, ecf)?;
    let bounds: Vec<f64> = (0..set.len())
        .map(|j| if j == 0 { 1.0 } else { config.params.bound_for_order(set.get(j).order()) })
        .collect();
    let mut pinned = vec![None; set.len()];
    if let Centering::Pinned(mean) = &config.centering {
        if mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: mean.len(),
            });
        }
        for (j, index) in set.indices().iter().enumerate() {
            if index.order() == 1 {
                let a = index.entries().iter().position(|&e| e == 1).expect("order-one index");
                pinned[j] = Some(mean[a]);
            }
        }
    }
    let tol = config.tol.unwrap_or(1.0 / ecf.n.max(1) as f64);
    let problem = Problem {
        ev,
        set: set.clone(),
        dims,
        bounds,
        pinned,
        config,
        tol,
    };
    let init = least_squares_fit(&set, ecf, grid)?;
    let starts: Vec<Vec<f64>> = (0..config.restarts)
        .map(|r| {
            if r == 0 {
                init.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(r as u64);
                (0..set.len())
                    .map(|j| {
                        let b = problem.bounds[j];
                        rng.random_range(-b..=b)
                    })
                    .collect()
            }
        })
        .collect();
    let runs: Vec<Result<Run>> =
        starts.into_par_iter().map(|x| problem.search(x)).collect();
    let mut best: Option<(usize, Vec<f64>, f64, Vec<TraceRow>)> = None;
    let mut restart_values = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let (x, f, trace) = run?;
        restart_values.push(f);
        if !problem.admissible(&x) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, _, bf, _)) => f < *bf,
        };
        if better {
            best = Some((r, x, f, trace));
        }
    }
    let (winning_restart, x, value, trace) =
        best.ok_or_else(|| Error::numerical("no restart produced an admissible candidate"))?;
    Ok(MinimizeResult {
        estimate: problem.poly(&x),
        value,
        trace,
        restarts_used: config.restarts,
        winning_restart,
        restart_values,
    })
}
