//! Weighted orthonormal polynomials for `h_κ²`, their scaled profiles and norm chains, and
//! the two-point lower-bound construction with its Le Cam value.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnoise::GNoise;
use crate::io::fmt_f64;
use crate::quadrature::{composite_gauss, gauss_on_breaks};

/// `h_κ(x) = c_h exp(−((1 + (x/x₀)²)/2)^{1/(2(1−κ))})`; at `κ = 1` the uniform density on `[−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kappa: f64,
    pub x0: f64,
    pub c_h: f64,
}

impl WeightSpec {
    pub fn new(kappa: f64, x0: f64) -> Result<WeightSpec> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::config("kappa", format!("must lie in (0, 1], got {kappa}")));
        }
        if !(x0 > 0.0) {
            return Err(Error::config("x0", format!("must be positive, got {x0}")));
        }
        let mut w = WeightSpec { kappa, x0, c_h: 1.0 };
        if w.is_indicator() {
            w.c_h = 0.5;
            return Ok(w);
        }
        let r = w.radius(1e-40, 0);
        let (x, q) = composite_gauss(-r, r, 400, 20);
        let mass: f64 = x.iter().zip(&q).map(|(x, q)| w.raw(*x) * q).sum();
        w.c_h = 1.0 / mass;
        Ok(w)
    }

    pub fn is_indicator(&self) -> bool {
        self.kappa == 1.0
    }

    fn raw(&self, x: f64) -> f64 {
        if self.is_indicator() {
            return if x.abs() <= 1.0 { 1.0 } else { 0.0 };
        }
        let y = x / self.x0;
        (-((1.0 + y * y) / 2.0).powf(0.5 / (1.0 - self.kappa))).exp()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c_h * self.raw(x)
    }

    /// Smallest `r` with `(1 + x²)^{pad} h(x)²/h(0)² < tol` for all `|x| ≥ r`.
    pub fn radius(&self, tol: f64, pad: u32) -> f64 {
        if self.is_indicator() {
            return 1.0;
        }
        let h0 = self.raw(0.0);
        let small = |x: f64| (1.0 + x * x).powi(pad as i32) * (self.raw(x) / h0).powi(2) < tol;
        let mut hi = self.x0;
        while !small(hi) {
            hi *= 1.5;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if small(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

pub fn h_kappa_eval(spec: &WeightSpec, x: f64) -> f64 {
    spec.eval(x)
}

/// Quadrature used to build a weighted basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisQuadrature {
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for BasisQuadrature {
    fn default() -> Self {
        BasisQuadrature {
            panels: 400,
            nodes_per_panel: 20,
        }
    }
}

/// Orthonormal polynomials for `⟨f, g⟩ = ∫ f g h_κ²`, stored as recurrence and monomial coefficients.
#[derive(Debug, Clone)]
pub struct WeightedBasis {
    pub weight: WeightSpec,
    pub k_max: u32,
    /// `x P_k = b_{k+1} P_{k+1} + b_k P_{k−1}` (the weight is even, so no diagonal term).
    pub b: Vec<f64>,
    pub p0: f64,
    pub monomial: Vec<Vec<f64>>,
    pub support: f64,
    pub quadrature: BasisQuadrature,
    /// `max |G − I|` of the Gram matrix under an independent finer rule.
    pub certificate: f64,
}

fn weighted_rule(weight: &WeightSpec, support: f64, quad: BasisQuadrature) -> (Vec<f64>, Vec<f64>) {
    let breaks: Vec<f64> = (0..=quad.panels)
        .map(|k| -support + 2.0 * support * k as f64 / quad.panels as f64)
        .collect();
    let (x, w) = gauss_on_breaks(&breaks, quad.nodes_per_panel);
    let ww = x.iter().zip(&w).map(|(x, w)| w * weight.eval(*x).powi(2)).collect();
    (x, ww)
}

/// Stieltjes procedure on a discretized weight; `K_max ≤ 16`.
pub fn build_weighted_basis(weight: WeightSpec, k_max: u32, quad: BasisQuadrature) -> Result<WeightedBasis> {
    if k_max > 16 {
        return Err(Error::config("k_max", format!("must be at most 16, got {k_max}")));
    }
    if quad.panels < 1 || quad.nodes_per_panel < 2 {
        return Err(Error::config("nodes", "quadrature needs at least one panel and 2 nodes"));
    }
    let support = weight.radius(1e-30, k_max + 1);
    let (x, w) = weighted_rule(&weight, support, quad);
    let mass: f64 = w.iter().sum();
    let p0 = 1.0 / mass.sqrt();
    let mut prev = vec![0.0; x.len()];
    let mut cur = vec![p0; x.len()];
    let mut b = vec![0.0];
    for _ in 0..k_max {
        let bk = *b.last().unwrap();
        let q: Vec<f64> = (0..x.len()).map(|i| x[i] * cur[i] - bk * prev[i]).collect();
        let norm = q.iter().zip(&w).map(|(q, w)| q * q * w).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::numerical(format!("degenerate recurrence at K = {}", b.len())));
        }
        b.push(norm);
        prev = cur;
        cur = q.into_iter().map(|v| v / norm).collect();
    }
    // monomial coefficients from the recurrence
    let mut monomial: Vec<Vec<f64>> = vec![vec![p0]];
    for k in 0..k_max as usize {
        let mut next = vec![0.0; k + 2];
        for (j, c) in monomial[k].iter().enumerate() {
            next[j + 1] += c;
        }
        if k > 0 {
            for (j, c) in monomial[k - 1].iter().enumerate() {
                next[j] -= b[k] * c;
            }
        }
        next.iter_mut().for_each(|v| *v /= b[k + 1]);
        monomial.push(next);
    }
    let mut basis = WeightedBasis {
        weight,
        k_max,
        b,
        p0,
        monomial,
        support,
        quadrature: quad,
        certificate: 0.0,
    };
    let fine = BasisQuadrature {
        panels: quad.panels * 2 + 1,
        nodes_per_panel: quad.nodes_per_panel + 4,
    };
    let gram = basis.gram(fine);
    let mut worst: f64 = 0.0;
    let mut failing = None;
    for i in 0..=k_max as usize {
        for j in 0..=k_max as usize {
            let e = (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs();
            if e > 1e-6 && failing.is_none() {
                failing = Some(i.max(j));
            }
            worst = worst.max(e);
        }
    }
    if let Some(k) = failing {
        return Err(Error::numerical(format!("orthogonality lost at K = {k} (error {worst:e})")));
    }
    basis.certificate = worst;
    Ok(basis)
}

impl WeightedBasis {
    /// `P_0(x), …, P_{K_max}(x)` by the recurrence.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k_max as usize + 1);
        out.push(self.p0);
        let mut prev = 0.0;
        let mut cur = self.p0;
        for k in 0..self.k_max as usize {
            let next = (x * cur - self.b[k] * prev) / self.b[k + 1];
            out.push(next);
            prev = cur;
            cur = next;
        }
        out
    }

    pub fn eval(&self, k: u32, x: f64) -> f64 {
        let mut prev = 0.0;
        let mut cur = self.p0;
        for j in 0..k as usize {
            let next = (x * cur - self.b[j] * prev) / self.b[j + 1];
            prev = cur;
            cur = next;
        }
        cur
    }

    /// `P_K h_κ`.
    pub fn ph(&self, k: u32, x: f64) -> f64 {
        let h = self.weight.eval(x);
        if h == 0.0 {
            0.0
        } else {
            self.eval(k, x) * h
        }
    }

    /// `P_K h_κ²`.
    pub fn ph2(&self, k: u32, x: f64) -> f64 {
        let h = self.weight.eval(x);
        if h == 0.0 {
            0.0
        } else {
            self.eval(k, x) * h * h
        }
    }

    /// Gram matrix under the given rule.
    pub fn gram(&self, quad: BasisQuadrature) -> DMatrix<f64> {
        let (x, w) = weighted_rule(&self.weight, self.support, quad);
        let n = self.k_max as usize + 1;
        let mut g = DMatrix::zeros(n, n);
        for (xi, wi) in x.iter().zip(&w) {
            let p = self.eval_all(*xi);
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += wi * p[i] * p[j];
                }
            }
        }
        g
    }

    /// `sup_x |P_K h_κ|` on a dense grid over the support.
    pub fn sup_ph(&self, k: u32) -> f64 {
        let r = self.support;
        (0..=20_000)
            .map(|i| self.ph(k, -r + 2.0 * r * i as f64 / 20_000.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Normalized Hermite functions `ψ_0..ψ_k` at `x`.
pub fn hermite_functions(k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let p0 = PI.powf(-0.25) * (-x * x / 2.0).exp();
    out.push(p0);
    if k >= 1 {
        out.push(2f64.sqrt() * x * p0);
    }
    for j in 1..k {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * out[j] - (jf / (jf + 1.0)).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// Rescaling of the argument for profile plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `K^{(1−κ)/2} P_K h_κ (K^{1−κ} x)`.
    Stretch,
    /// `K^{(1−κ)/2} P_K h_κ (K^{−κ} x)`.
    Squeeze,
}

impl Scaling {
    pub fn name(self) -> &'static str {
        match self {
            Scaling::Stretch => "stretch",
            Scaling::Squeeze => "squeeze",
        }
    }

    pub fn default_half_width(self) -> f64 {
        match self {
            Scaling::Stretch => 2.0,
            Scaling::Squeeze => 10.0,
        }
    }
}

pub fn scaled_profile(basis: &WeightedBasis, k: u32, scaling: Scaling, x_grid: &[f64]) -> Result<Vec<f64>> {
    if k > basis.k_max {
        return Err(Error::invalid(format!("K = {k} exceeds K_max = {}", basis.k_max)));
    }
    let kappa = basis.weight.kappa;
    let kf = f64::from(k.max(1));
    let amp = kf.powf((1.0 - kappa) / 2.0);
    let arg = match scaling {
        Scaling::Stretch => kf.powf(1.0 - kappa),
        Scaling::Squeeze => kf.powf(-kappa),
    };
    Ok(x_grid.iter().map(|x| amp * basis.ph(k, arg * x)).collect())
}

pub fn uniform_grid(half_width: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64)
        .collect()
}

/// Maximal runs in `[−1, 1]` where `|P_K h_κ| ≥ c₂ K^{(κ−1)/2}`, kept when at least `c₁ K^{−κ}` long.
#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    pub count: usize,
    pub intervals: Vec<(f64, f64)>,
}

pub fn interval_census(basis: &WeightedBasis, k: u32, c1: f64, c2: f64) -> Census {
    let kappa = basis.weight.kappa;
    let kf = f64::from(k.max(1));
    let min_len = c1 * kf.powf(-kappa);
    let threshold = c2 * kf.powf((kappa - 1.0) / 2.0);
    let step = min_len / 20.0;
    let n = (2.0 / step).ceil() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| (-1.0 + step * i as f64).min(1.0)).collect();
    let mut intervals = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for &x in &xs {
        if basis.ph(k, x).abs() >= threshold {
            if start.is_none() {
                start = Some(x);
            }
            last = x;
        } else if let Some(s) = start.take() {
            if last - s >= min_len {
                intervals.push((s, last));
            }
        }
    }
    if let Some(s) = start {
        if last - s >= min_len {
            intervals.push((s, last));
        }
    }
    Census {
        count: intervals.len(),
        intervals,
    }
}

/// Fit-then-holdout check of the interval count: `c₀` is the largest constant with
/// `count ≥ c₀K^κ` on `fit`, and the holdout degrees must reach `⌈c₀K^κ⌉`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusFit {
    pub c0: f64,
    pub fit: Vec<(u32, usize)>,
    pub holdout: Vec<(u32, usize, usize)>,
    pub holds: bool,
}

pub fn census_holdout(
    basis: &WeightedBasis,
    c1: f64,
    c2: f64,
    fit: std::ops::RangeInclusive<u32>,
    holdout: std::ops::RangeInclusive<u32>,
) -> Result<CensusFit> {
    if fit.is_empty() || holdout.is_empty() || *fit.start() == 0 || *holdout.end() > basis.k_max {
        return Err(Error::invalid("census degrees must lie in 1..=K_max and be non-empty"));
    }
    let kappa = basis.weight.kappa;
    let fit: Vec<(u32, usize)> = fit.map(|k| (k, interval_census(basis, k, c1, c2).count)).collect();
    let c0 = fit
        .iter()
        .map(|&(k, c)| c as f64 / f64::from(k).powf(kappa))
        .fold(f64::INFINITY, f64::min);
    let holdout: Vec<(u32, usize, usize)> = holdout
        .map(|k| {
            let need = (c0 * f64::from(k).powf(kappa)).ceil() as usize;
            (k, interval_census(basis, k, c1, c2).count, need)
        })
        .collect();
    let holds = holdout.iter().all(|&(_, c, need)| c >= need);
    Ok(CensusFit { c0, fit, holdout, holds })
}

pub(crate) fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// `c_u = 1 / ∫ exp(−1/(1−x²)) dx`.
pub fn mollifier_constant() -> f64 {
    let (x, w) = composite_gauss(-1.0, 1.0, 64, 20);
    1.0 / x.iter().zip(&w).map(|(x, w)| bump(*x) * w).sum::<f64>()
}

/// `u_b(x) = b c_u exp(−1/(1−(bx)²)) 1_{|bx| < 1}`.
pub fn mollifier_eval(b: f64, x: f64) -> f64 {
    b * mollifier_constant() * bump(b * x)
}

/// `f ∗ u_b` by a Gauss rule on `[−1/b, 1/b]` normalized to unit mass.
pub fn mollify(f: impl Fn(f64) -> f64, b: f64) -> impl Fn(f64) -> f64 {
    let (y, w) = composite_gauss(-1.0 / b, 1.0 / b, 16, 16);
    let mut k: Vec<f64> = y.iter().zip(&w).map(|(y, w)| bump(b * y) * w).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    move |x| y.iter().zip(&k).map(|(y, k)| f(x - y) * k).sum()
}

/// Samples on the uniform lattice `start + i·step`, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFn {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl LatticeFn {
    pub fn sample(start: f64, step: f64, n: usize, f: impl Fn(f64) -> f64) -> LatticeFn {
        LatticeFn {
            start,
            step,
            values: (0..n).map(|i| f(start + step * i as f64)).collect(),
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    /// Linear interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.start) / self.step;
        if u < 0.0 || u > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (u.floor() as usize).min(self.values.len() - 2);
        let w = u - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.step
    }

    pub fn scaled(&self, s: f64) -> LatticeFn {
        LatticeFn {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// `self + s·other` on a shared lattice.
    pub fn axpy(&self, s: f64, other: &LatticeFn) -> LatticeFn {
        assert_eq!(self.values.len(), other.values.len());
        LatticeFn {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
            ..self.clone()
        }
    }

    /// `Σ_x f(x) e^{itx} step`.
    pub fn fourier(&self, t: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let rot = Complex64::cis(t * self.step);
        let mut z = Complex64::cis(t * self.start);
        for v in &self.values {
            acc += z * *v;
            z *= rot;
        }
        acc * self.step
    }

    /// Discrete convolution with `u_b` sampled on the same step and normalized to unit sum,
    /// so that total mass is preserved exactly; the lattice grows by the kernel half-width.
    pub fn mollify(&self, b: f64) -> Result<LatticeFn> {
        let half = (1.0 / (b * self.step)).floor() as usize;
        if half < 4 {
            return Err(Error::numerical(format!(
                "lattice step {} too coarse for mollifier width {}",
                self.step,
                1.0 / b
            )));
        }
        let mut kernel: Vec<f64> = (0..=2 * half)
            .map(|j| bump(b * self.step * (j as f64 - half as f64)))
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|v| *v /= total);
        let n = self.values.len();
        let mut out = vec![0.0; n + 2 * half];
        for (i, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            for (j, k) in kernel.iter().enumerate() {
                out[i + j] += v * k;
            }
        }
        Ok(LatticeFn {
            start: self.start - half as f64 * self.step,
            step: self.step,
            values: out,
        })
    }
}

/// `(‖P_K h_κ²‖², ‖(P_K h_κ²) ∗ u_b‖²)` on a lattice fine enough for the mollifier.
pub fn norm_chain(basis: &WeightedBasis, k: u32, b: f64) -> Result<(f64, f64)> {
    if k > basis.k_max {
        return Err(Error::invalid(format!("K = {k} exceeds K_max = {}", basis.k_max)));
    }
    let r = basis.support;
    let step = (r / 4000.0).min(1.0 / (20.0 * b));
    let n = (2.0 * r / step).ceil() as usize + 1;
    let phi = LatticeFn::sample(-r, step, n, |x| basis.ph2(k, x));
    let smooth = phi.mollify(b)?;
    Ok((phi.norm_sq(), smooth.norm_sq()))
}

/// Parameters of the two-point construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundInstance {
    pub d1: usize,
    pub d2: usize,
    pub a: f64,
    pub c: f64,
    pub kappa: f64,
    pub beta: f64,
    pub n: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    /// Constant in `K_n = (c_k/κ) log n / log log n`.
    #[serde(default = "one")]
    pub c_k: f64,
    /// `b_n = c_b K_n^κ`.
    #[serde(default = "default_cb")]
    pub c_b: f64,
    /// Constant in `α_n² ‖P_{K_n} h_κ²‖² ≤ c_alpha b_n^{−2β}`.
    #[serde(default = "one")]
    pub c_alpha: f64,
    /// Fraction of the largest admissible `α_n` actually used.
    #[serde(default = "default_alpha_scale")]
    pub alpha_scale: f64,
    /// Half-width of the running max that smooths the empirical envelope.
    #[serde(default = "default_window")]
    pub envelope_window: f64,
    #[serde(default = "default_kmax")]
    pub k_max: u32,
}

fn default_x0() -> f64 {
    1.0
}
fn one() -> f64 {
    1.0
}
fn default_cb() -> f64 {
    4.0
}
fn default_alpha_scale() -> f64 {
    0.5
}
fn default_window() -> f64 {
    0.05
}
fn default_kmax() -> u32 {
    16
}

impl LowerBoundInstance {
    pub fn new(kappa: f64, a: f64, c: f64, beta: f64, n: f64) -> LowerBoundInstance {
        LowerBoundInstance {
            d1: 1,
            d2: 1,
            a,
            c,
            kappa,
            beta,
            n,
            x0: 1.0,
            c_k: 1.0,
            c_b: 4.0,
            c_alpha: 1.0,
            alpha_scale: 0.5,
            envelope_window: 0.05,
            k_max: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::config("kappa", "must lie in (0, 1) for the lower bound"));
        }
        if !(self.a >= 0.0 && self.a < 1.0) {
            return Err(Error::config("a", "must lie in [0, 1)"));
        }
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::config("d1", "both blocks need positive dimension"));
        }
        for (k, v) in [("c", self.c), ("beta", self.beta), ("c_k", self.c_k), ("c_b", self.c_b), ("c_alpha", self.c_alpha)] {
            if !(v > 0.0) {
                return Err(Error::config(k, "must be positive"));
            }
        }
        if !(self.alpha_scale >= 0.0) {
            return Err(Error::config("alpha_scale", "must be nonnegative"));
        }
        if !(self.n >= 16.0) {
            return Err(Error::config("n", "must be at least 16"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    /// Mixing matrix: identity plus `a` on the first row of the upper-right block and the
    /// first row of the lower-left block.
    pub fn mixing_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::identity(d, d);
        for j in self.d1..d {
            m[(0, j)] = self.a;
        }
        for j in 0..self.d1 {
            m[(self.d1, j)] = self.a;
        }
        m
    }
}

/// `K_n = max(1, round((c_k/κ) log n / log log n))`.
pub fn k_n_rule(n: f64, kappa: f64, c_k: f64) -> u32 {
    let v = c_k / kappa * n.ln() / n.ln().ln();
    v.round().max(1.0) as u32
}

/// Caps on `α_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaCaps {
    /// `‖P_{K_n} h_κ‖_∞^{−1}`.
    pub sup: f64,
    /// Largest `α` keeping `F̂_env h_κ + α P_{K_n} h_κ²` nonnegative.
    pub nonneg: f64,
    /// `(c_alpha b_n^{−2β} / ‖P_{K_n} h_κ²‖²)^{1/2}`.
    pub smooth: f64,
}

/// The two perturbed source densities on a shared lattice.
#[derive(Debug, Clone)]
pub struct TwoPoint {
    pub instance: LowerBoundInstance,
    pub k_n: u32,
    pub b_n: f64,
    pub alpha_n: f64,
    pub caps: AlphaCaps,
    pub zeta0: LatticeFn,
    /// `(P_{K_n} h_κ²) ∗ u_{b_n}`.
    pub perturbation: LatticeFn,
    pub zeta_n: LatticeFn,
    mixing: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det: f64,
}

/// Builds `ζ₀ = (F̂_env h_κ) ∗ u_b` and `ζ_n = ζ₀ + α_n (P_{K_n} h_κ²) ∗ u_b`, with
/// `α_n = alpha_scale · min(caps)` unless `alpha_override` is given.
pub fn build_two_point(instance: &LowerBoundInstance, basis: &WeightedBasis, alpha_override: Option<f64>) -> Result<TwoPoint> {
    instance.validate()?;
    let kappa = basis.weight.kappa;
    let k_n = k_n_rule(instance.n, kappa, instance.c_k);
    if k_n > basis.k_max {
        return Err(Error::config(
            "n",
            format!("K_n = {k_n} exceeds the basis K_max = {}", basis.k_max),
        ));
    }
    let b_n = instance.c_b * f64::from(k_n).powf(kappa);
    let r = basis.support + instance.envelope_window;
    let step = (r / 4000.0).min(1.0 / (20.0 * b_n));
    let n = (2.0 * r / step).ceil() as usize + 1;

    // empirical envelope, smoothed by a running max
    let raw = LatticeFn::sample(-r, step, n, |x| {
        let h = basis.weight.eval(x);
        basis
            .eval_all(x)
            .iter()
            .enumerate()
            .map(|(k, p)| (k.max(1) as f64).powf((1.0 - kappa) / 2.0) * (p * h).abs())
            .fold(0.0, f64::max)
    });
    let w = (instance.envelope_window / step).round() as usize;
    let env: Vec<f64> = (0..n)
        .map(|i| raw.values[i.saturating_sub(w)..(i + w + 1).min(n)].iter().cloned().fold(0.0, f64::max))
        .collect();
    let env_h = LatticeFn {
        start: -r,
        step,
        values: env.iter().enumerate().map(|(i, e)| e * basis.weight.eval(raw.x(i))).collect(),
    };
    let z = env_h.integral();
    let base = env_h.scaled(1.0 / z);
    let ph2 = LatticeFn::sample(-r, step, n, |x| basis.ph2(k_n, x));

    let sup = 1.0 / (0..n).map(|i| basis.ph(k_n, raw.x(i)).abs()).fold(0.0, f64::max);
    let nonneg = (0..n)
        .filter(|&i| ph2.values[i] < 0.0)
        .map(|i| base.values[i] / -ph2.values[i])
        .fold(f64::INFINITY, f64::min);
    let smooth = (instance.c_alpha * b_n.powf(-2.0 * instance.beta) / ph2.norm_sq()).sqrt();
    let caps = AlphaCaps { sup, nonneg, smooth };
    let alpha_n = match alpha_override {
        Some(a) => a,
        None => instance.alpha_scale * sup.min(nonneg).min(smooth),
    };
    let zeta0 = base.mollify(b_n)?;
    let perturbation = ph2.mollify(b_n)?;
    let zeta_n = zeta0.axpy(alpha_n, &perturbation);
    if zeta_n.values.iter().any(|v| *v < -1e-12) {
        return Err(Error::numerical(format!("ζ_n is negative with α_n = {alpha_n}")));
    }
    let mixing = instance.mixing_matrix();
    let det = mixing.determinant();
    let inverse = mixing
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("mixing matrix is singular"))?;
    Ok(TwoPoint {
        instance: instance.clone(),
        k_n,
        b_n,
        alpha_n,
        caps,
        zeta0,
        perturbation,
        zeta_n,
        mixing,
        inverse,
        det,
    })
}

impl TwoPoint {
    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    fn density(&self, u: &[f64], perturbed: bool) -> f64 {
        let d = self.mixing.nrows();
        let mut prod = 1.0 / self.det.abs();
        for j in 0..d {
            let s: f64 = (0..d).map(|k| self.inverse[(j, k)] * u[k]).sum();
            prod *= if j == 0 && perturbed {
                self.zeta_n.eval(s)
            } else {
                self.zeta0.eval(s)
            };
        }
        prod
    }

    /// Density of `A S` with every source distributed as `ζ₀`.
    pub fn f0(&self, u: &[f64]) -> f64 {
        self.density(u, false)
    }

    /// Density of `A S` with the first source perturbed.
    pub fn fn_(&self, u: &[f64]) -> f64 {
        self.density(u, true)
    }

    /// `‖f₀ − f_n‖² = |det A|^{−1} ‖ζ₀ − ζ_n‖² ‖ζ₀‖^{2(d−1)}`.
    pub fn l2_sq(&self) -> f64 {
        let d = self.mixing.nrows() as i32;
        let diff = self.perturbation.norm_sq() * self.alpha_n * self.alpha_n;
        diff * self.zeta0.norm_sq().powi(d - 1) / self.det.abs()
    }
}

/// Settings of the single-copy `L¹` computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeCamSettings {
    pub nodes_per_half_axis: usize,
    pub points_per_axis: usize,
}

impl Default for LeCamSettings {
    fn default() -> Self {
        LeCamSettings {
            nodes_per_half_axis: 32,
            points_per_axis: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeCamValue {
    pub l2_sq: f64,
    pub l1: f64,
    pub n: f64,
    pub value: f64,
}

/// `(1/4) ‖f₀ − f_n‖² (1 − L¹/2)_+^n` with `L¹ = ‖(f₀ − f_n) ∗ Q‖_{L¹}` and `Q` the product
/// of `g` noises; two dimensions only.
///
/// The noise CF vanishes outside `[−c, c]²`, so `(f₀ − f_n) ∗ Q` is band-limited: it is
/// recovered on a lattice by Fourier inversion over that square and integrated there.
pub fn lecam_value(tp: &TwoPoint, noise: &GNoise, n: f64, settings: LeCamSettings) -> Result<LeCamValue> {
    let d = tp.mixing.nrows();
    if d != 2 {
        return Err(Error::invalid("Le Cam L1 distance is implemented for d = 2"));
    }
    let c = noise.c();
    let l2_sq = tp.l2_sq();
    let l1 = if tp.alpha_n == 0.0 {
        0.0
    } else {
        let (t, w) = gauss_on_breaks(&[-c, 0.0, c], settings.nodes_per_half_axis);
        let q = t.len();
        // F[f0 − fn](t) = −α F[pert]((Aᵀt)_1) F[ζ0]((Aᵀt)_2)
        let mut m = DMatrix::<Complex64>::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                let v1 = tp.mixing[(0, 0)] * t[i] + tp.mixing[(1, 0)] * t[j];
                let v2 = tp.mixing[(0, 1)] * t[i] + tp.mixing[(1, 1)] * t[j];
                let phi = tp.perturbation.fourier(v1) * tp.zeta0.fourier(v2) * (-tp.alpha_n);
                m[(i, j)] = phi * (w[i] * w[j] * noise.cf(t[i]) * noise.cf(t[j]));
            }
        }
        let extent = (0..2)
            .map(|r| (0..2).map(|k| tp.mixing[(r, k)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
            * tp.zeta0.end().abs().max(tp.zeta0.start.abs());
        let half = extent + 60.0 / c;
        let npts = settings.points_per_axis;
        let dx = 2.0 * half / npts as f64;
        let xs: Vec<f64> = (0..npts).map(|k| -half + dx * (k as f64 + 0.5)).collect();
        let e = DMatrix::<Complex64>::from_fn(npts, q, |k, i| Complex64::cis(-t[i] * xs[k]));
        let vals = &e * m * e.transpose();
        let scale = 1.0 / (2.0 * PI).powi(2);
        vals.iter().map(|z| (z.re * scale).abs()).sum::<f64>() * dx * dx
    };
    let bracket = (1.0 - l1 / 2.0).max(0.0);
    Ok(LeCamValue {
        l2_sq,
        l1,
        n,
        value: 0.25 * l2_sq * bracket.powf(n),
    })
}

/// One figure panel: every `K` for one `(κ, scaling)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePanel {
    pub kappa: f64,
    pub scaling: Scaling,
    pub x: Vec<f64>,
    /// `values[K−1]` holds the profile of degree `K`.
    pub values: Vec<Vec<f64>>,
}

impl ProfilePanel {
    pub fn name(&self) -> String {
        format!("{}_kappa_{}", self.scaling.name(), fmt_f64(self.kappa))
    }

    /// Columns `x, value, kappa, K`, rows grouped by `K`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "value", "kappa", "K"])?;
        for (k, vals) in self.values.iter().enumerate() {
            for (x, v) in self.x.iter().zip(vals) {
                w.write_record([fmt_f64(*x), fmt_f64(*v), fmt_f64(self.kappa), (k + 1).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fixed settings behind the figure panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureSettings {
    pub k_max: u32,
    pub points: usize,
    pub x0: f64,
    pub quadrature: BasisQuadrature,
}

impl Default for FigureSettings {
    fn default() -> Self {
        FigureSettings {
            k_max: 16,
            points: 401,
            x0: 1.0,
            quadrature: BasisQuadrature::default(),
        }
    }
}

pub const FIGURE_KAPPAS: [f64; 6] = [0.55, 0.6, 0.7, 0.8, 0.9, 0.95];

pub fn profile_panel(basis: &WeightedBasis, scaling: Scaling, points: usize) -> Result<ProfilePanel> {
    let x = uniform_grid(scaling.default_half_width(), points);
    let values = (1..=basis.k_max)
        .map(|k| scaled_profile(basis, k, scaling, &x))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfilePanel {
        kappa: basis.weight.kappa,
        scaling,
        x,
        values,
    })
}

/// Both panels for every `κ` in `kappas`.
pub fn figure_panels(kappas: &[f64], settings: &FigureSettings) -> Result<Vec<ProfilePanel>> {
    let mut out = Vec::new();
    for &kappa in kappas {
        let basis = build_weighted_basis(WeightSpec::new(kappa, settings.x0)?, settings.k_max, settings.quadrature)?;
        for scaling in [Scaling::Stretch, Scaling::Squeeze] {
            out.push(profile_panel(&basis, scaling, settings.points)?);
        }
    }
    Ok(out)
}

/// Per-degree statistics for the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kappa: f64,
    #[serde(rename = "K")]
    pub k: u32,
    pub sup_profile_stretch: f64,
    pub sup_profile_squeeze: f64,
    pub interval_count: usize,
    pub norm_sq: f64,
    pub smoothed_norm_sq: f64,
}

pub fn conjecture_summary(basis: &WeightedBasis, c1: f64, c2: f64, c_b: f64, points: usize) -> Result<Vec<SummaryRow>> {
    let kappa = basis.weight.kappa;
    (1..=basis.k_max)
        .map(|k| {
            let sup = |s: Scaling| -> Result<f64> {
                let x = uniform_grid(s.default_half_width(), points);
                Ok(scaled_profile(basis, k, s, &x)?.iter().map(|v| v.abs()).fold(0.0, f64::max))
            };
            let b = c_b * f64::from(k).powf(kappa);
            let (n1, n2) = norm_chain(basis, k, b)?;
            Ok(SummaryRow {
                kappa,
                k,
                sup_profile_stretch: sup(Scaling::Stretch)?,
                sup_profile_squeeze: sup(Scaling::Squeeze)?,
                interval_count: interval_census(basis, k, c1, c2).count,
                norm_sq: n1,
                smoothed_norm_sq: n2,
            })
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kappa", "K", "sup_profile_stretch", "sup_profile_squeeze", "interval_count", "norm_sq", "smoothed_norm_sq"])?;
    for r in rows {
        w.write_record([
            fmt_f64(r.kappa),
            r.k.to_string(),
            fmt_f64(r.sup_profile_stretch),
            fmt_f64(r.sup_profile_squeeze),
            r.interval_count.to_string(),
            fmt_f64(r.norm_sq),
            fmt_f64(r.smoothed_norm_sq),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::legendre_eval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn weight_examples() {
        let w = WeightSpec::new(0.5, 1.0).unwrap();
        assert!((w.eval(1.0) / w.eval(0.0) - (-0.5f64).exp()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &kappa in &[0.55, 0.7, 0.95] {
            let w = WeightSpec::new(kappa, 1.0).unwrap();
            for _ in 0..10 {
                let x: f64 = rng.random_range(-3.0..3.0);
                assert_eq!(w.eval(x), w.eval(-x));
            }
            let r = w.radius(1e-40, 0);
            let total = simpson(&|x| w.eval(x), -r, r, 200_000);
            assert!((total - 1.0).abs() < 1e-10, "kappa={kappa}: {total}");
        }
        let ind = WeightSpec::new(1.0, 1.0).unwrap();
        assert_eq!(ind.eval(0.3), 0.5);
        assert_eq!(ind.eval(1.2), 0.0);
    }

    #[test]
    fn low_degree_closed_forms() {
        let w = WeightSpec::new(0.7, 1.0).unwrap();
        let basis = build_weighted_basis(w, 6, BasisQuadrature::default()).unwrap();
        let r = basis.support;
        let m0 = simpson(&|x| w.eval(x).powi(2), -r, r, 100_000);
        let m2 = simpson(&|x| x * x * w.eval(x).powi(2), -r, r, 100_000);
        assert!((basis.eval(0, 0.4) - m0.powf(-0.5)).abs() < 1e-9);
        assert!((basis.eval(1, 0.4) - 0.4 / m2.sqrt()).abs() < 1e-9);
        for k in 0..=6 {
            assert!(basis.monomial[k][k] > 0.0);
            let x = 0.37;
            let horner = basis.monomial[k].iter().rev().fold(0.0, |a, c| a * x + c);
            assert!((horner - basis.eval(k as u32, x)).abs() < 1e-9);
        }
        assert!(basis.certificate < 1e-6);
    }

    #[test]
    fn indicator_limit_is_legendre() {
        let basis = build_weighted_basis(WeightSpec::new(1.0, 1.0).unwrap(), 16, BasisQuadrature::default()).unwrap();
        for k in 0..=16 {
            for &x in &[-0.95, -0.3, 0.0, 0.55, 1.0] {
                let l = 2.0 * legendre_eval(k, 1.0, x).0;
                assert!((basis.eval(k, x) - l).abs() < 1e-8, "K={k} x={x}");
            }
        }
    }

    #[test]
    fn gaussian_limit_is_hermite() {
        let basis = build_weighted_basis(WeightSpec::new(0.5, 1.0).unwrap(), 10, BasisQuadrature::default()).unwrap();
        let xs = uniform_grid(6.0, 601);
        for k in 0..=10u32 {
            let a: Vec<f64> = xs.iter().map(|x| basis.ph(k, *x)).collect();
            let b: Vec<f64> = xs.iter().map(|x| hermite_functions(k as usize, *x)[k as usize]).collect();
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let corr = dot / (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!(corr.abs() > 0.999_999, "K={k}: {corr}");
        }
    }

    #[test]
    fn profiles_scale_and_parity() {
        let basis = build_weighted_basis(WeightSpec::new(0.6, 1.0).unwrap(), 16, BasisQuadrature::default()).unwrap();
        let xs = uniform_grid(2.0, 101);
        let p1 = scaled_profile(&basis, 1, Scaling::Stretch, &xs).unwrap();
        for (x, v) in xs.iter().zip(&p1) {
            assert_eq!(*v, basis.ph(1, *x));
        }
        for k in [3u32, 4] {
            let p = scaled_profile(&basis, k, Scaling::Squeeze, &xs).unwrap();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..xs.len() {
                assert!((p[i] - sign * p[xs.len() - 1 - i]).abs() < 1e-12);
            }
        }
        let sups: Vec<f64> = [4u32, 8, 12, 16]
            .iter()
            .map(|&k| {
                scaled_profile(&basis, k, Scaling::Stretch, &uniform_grid(2.0, 801))
                    .unwrap()
                    .iter()
                    .map(|v| v.abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let hi = sups.iter().cloned().fold(0.0, f64::max);
        let lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi / lo < 3.0, "{sups:?}");
    }

    #[test]
    fn census_fit_then_holdout() {
        let b = build_weighted_basis(WeightSpec::new(0.7, 1.0).unwrap(), 16, BasisQuadrature::default()).unwrap();
        let fit = census_holdout(&b, 0.5, 0.5, 4..=10, 11..=16).unwrap();
        assert!(fit.c0 > 0.0);
        assert!(fit.holds, "{fit:?}");
        assert!(census_holdout(&b, 0.5, 0.5, 4..=10, 11..=17).is_err());
    }

    #[test]
    fn census_limits() {
        let basis = build_weighted_basis(WeightSpec::new(0.7, 1.0).unwrap(), 12, BasisQuadrature::default()).unwrap();
        assert_eq!(interval_census(&basis, 12, 0.5, 1e9).count, 0);
        assert!(interval_census(&basis, 12, 1e-3, 1e-6).count >= 1);
    }

    #[test]
    fn mollifier_properties() {
        assert!((mollifier_constant() - 2.252_283_621_043_581).abs() < 1e-12);
        assert_eq!(mollifier_eval(3.0, 1.0 / 3.0), 0.0);
        assert_eq!(mollifier_eval(3.0, -1.0 / 3.0), 0.0);
        let one = mollify(|_| 1.0, 7.0);
        assert!((one(0.3) - 1.0).abs() < 1e-14);
        let total = simpson(&|x| mollifier_eval(5.0, x), -0.2, 0.2, 20_000);
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn norm_chain_properties() {
        let basis = build_weighted_basis(WeightSpec::new(0.7, 1.0).unwrap(), 8, BasisQuadrature::default()).unwrap();
        for k in [2u32, 8] {
            for cb in [4.0, 16.0] {
                let (a, b) = norm_chain(&basis, k, cb * f64::from(k).powf(0.7)).unwrap();
                assert!(b <= a);
            }
        }
        let (a, b) = norm_chain(&basis, 6, 1e4).unwrap();
        assert!((b / a - 1.0).abs() < 0.02);
    }

    #[test]
    fn two_point_properties() {
        let basis = build_weighted_basis(WeightSpec::new(0.7, 1.0).unwrap(), 16, BasisQuadrature::default()).unwrap();
        let inst = LowerBoundInstance::new(0.7, 0.3, 1.0, 1.0, 1e4);
        let tp = build_two_point(&inst, &basis, None).unwrap();
        assert!(tp.alpha_n > 0.0);
        assert!((tp.zeta_n.integral() - 1.0).abs() < 1e-8);
        assert!(tp.perturbation.integral().abs() < 1e-10);
        let zero = build_two_point(&inst, &basis, Some(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let u = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert_eq!(zero.f0(&u), zero.fn_(&u));
        }
        let mut ident = inst.clone();
        ident.a = 0.0;
        let tp0 = build_two_point(&ident, &basis, None).unwrap();
        for _ in 0..20 {
            let u = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert_eq!(tp0.f0(&u), tp0.zeta0.eval(u[0]) * tp0.zeta0.eval(u[1]));
        }
    }

    #[test]
    fn l2_reduction_matches_direct_integral() {
        let basis = build_weighted_basis(WeightSpec::new(0.7, 1.0).unwrap(), 16, BasisQuadrature::default()).unwrap();
        let inst = LowerBoundInstance::new(0.7, 0.3, 1.0, 1.0, 1e4);
        let tp = build_two_point(&inst, &basis, None).unwrap();
        let r = 4.0;
        let (x, w) = composite_gauss(-r, r, 400, 8);
        let mut direct = 0.0;
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                let u = [*a, *b];
                direct += wa * wb * (tp.f0(&u) - tp.fn_(&u)).powi(2);
            }
        }
        assert!((direct - tp.l2_sq()).abs() < 0.02 * tp.l2_sq(), "{direct} vs {}", tp.l2_sq());
    }

    #[test]
    fn lecam_examples() {
        let basis = build_weighted_basis(WeightSpec::new(0.7, 1.0).unwrap(), 16, BasisQuadrature::default()).unwrap();
        let inst = LowerBoundInstance::new(0.7, 0.3, 1.0, 1.0, 1e4);
        let g = GNoise::new(1.0).unwrap();
        let zero = build_two_point(&inst, &basis, Some(0.0)).unwrap();
        assert_eq!(lecam_value(&zero, &g, 1e4, LeCamSettings::default()).unwrap().value, 0.0);
        let tp = build_two_point(&inst, &basis, None).unwrap();
        let v = lecam_value(&tp, &g, 0.0, LeCamSettings::default()).unwrap();
        assert_eq!(v.value, 0.25 * v.l2_sq);
        let full = lecam_value(&tp, &g, 1e4, LeCamSettings::default()).unwrap();
        let half = build_two_point(&inst, &basis, Some(tp.alpha_n / 2.0)).unwrap();
        let hv = lecam_value(&half, &g, 1e4, LeCamSettings::default()).unwrap();
        assert!(full.value > 0.0);
        assert!((hv.l2_sq / full.l2_sq - 0.25).abs() < 1e-12);
        assert!((hv.value / full.value - 0.25).abs() < 0.05 * 0.25, "{} {}", full.l1, hv.value / full.value);
    }

    #[test]
    fn slope_helper() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.3)).collect();
        assert!((loglog_slope(&x, &y) + 0.3).abs() < 1e-12);
    }
}
