//! Quantitative bounds on Taylor-class members as executable checks.
//!
//! Right-hand sides mix very large and very small factors, so they are evaluated in the
//! log domain and compared as logarithms.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::legendre::{change_of_basis, sigma_max_power};
use crate::multiindex::binomial;
use crate::taylor::{TaylorPoly, UpsilonParams};

const LN_TAIL_EPS: f64 = -34.538_776_394_910_684; // ln 1e-15

/// Partial sum of a positive series with a certified bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub ln_value: f64,
    pub remainder: f64,
    pub terms: usize,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Sums `exp(ln_term(k))` for `k = start..`, where `ratio(k)` bounds every later term ratio
/// from index `k` on; stops when the tail is below `1e−15` relative to the sum.
fn log_series(
    start: usize,
    max_terms: usize,
    ln_term: impl Fn(usize) -> f64,
    ratio: impl Fn(usize) -> f64,
) -> Result<SeriesValue> {
    let mut ln_sum = f64::NEG_INFINITY;
    for k in start..start + max_terms {
        let lt = ln_term(k);
        ln_sum = log_add(ln_sum, lt);
        let q = ratio(k);
        if q < 1.0 {
            let ln_tail = lt + q.ln() - (1.0 - q).ln();
            if ln_tail - ln_sum < LN_TAIL_EPS || ln_tail == f64::NEG_INFINITY {
                return Ok(SeriesValue {
                    value: ln_sum.exp(),
                    ln_value: ln_sum,
                    remainder: ln_tail.exp(),
                    terms: k - start + 1,
                });
            }
        }
    }
    Err(Error::numerical(format!(
        "series not convergent within {max_terms} terms"
    )))
}

/// `f_κ(u) = Σ_{m≥1} (m + d/κ)^{−κm} u^m` with at most `terms` terms.
pub fn f_kappa(u: f64, kappa: f64, d: usize, terms: usize) -> Result<SeriesValue> {
    if !(u >= 0.0) || !(kappa > 0.0) {
        return Err(Error::invalid("f_kappa needs u >= 0 and kappa > 0"));
    }
    if u == 0.0 {
        return Ok(SeriesValue {
            value: 0.0,
            ln_value: f64::NEG_INFINITY,
            remainder: 0.0,
            terms: 0,
        });
    }
    let c = d as f64 / kappa;
    log_series(
        1,
        terms,
        |m| {
            let m = m as f64;
            m * u.ln() - kappa * m * (m + c).ln()
        },
        // later terms are at most q^k with q = u (m+1+c)^{−κ}
        |m| u * (m as f64 + 1.0 + c).powf(-kappa),
    )
}

/// Log of `6 (u ∨ u₀)^{1/κ} exp(κ (u ∨ u₀)^{1/κ})`, `u₀ = (4/(3κ))^κ`.
pub fn f_kappa_bound_ln(u: f64, kappa: f64) -> f64 {
    let v = u.max((4.0 / (3.0 * kappa)).powf(kappa));
    6f64.ln() + v.ln() / kappa + kappa * v.powf(1.0 / kappa)
}

/// `Σ_{m≥1} m^d x^m m^{−κm}`.
pub fn psi_sum(x: f64, d: usize, kappa: f64) -> Result<SeriesValue> {
    if !(x > 0.0) || !(kappa > 0.0) {
        return Err(Error::invalid("psi_sum needs x > 0 and kappa > 0"));
    }
    let df = d as f64;
    log_series(
        1,
        1_000_000,
        |m| {
            let m = m as f64;
            df * m.ln() + m * x.ln() - kappa * m * m.ln()
        },
        |m| {
            let m = m as f64;
            (1.0 + 1.0 / m).powf(df) * x * (m + 1.0).powf(-kappa)
        },
    )
}

/// Log of `6 (x ∨ x₀)^{(d+1)/κ} exp(κ (x ∨ x₀)^{1/κ})`, `x₀ = ((d+4/3)/κ)^κ`.
pub fn psi_bound_ln(x: f64, d: usize, kappa: f64) -> f64 {
    let v = x.max(((d as f64 + 4.0 / 3.0) / kappa).powf(kappa));
    6f64.ln() + (d as f64 + 1.0) / kappa * v.ln() + kappa * v.powf(1.0 / kappa)
}

/// `x₀ = 1 ∨ ((d+4/3)/κ)^κ`.
pub fn x0(d: usize, kappa: f64) -> f64 {
    ((d as f64 + 4.0 / 3.0) / kappa).powf(kappa).max(1.0)
}

/// Log of `7 (Sν ∨ x₀)^{(d+1)/κ} exp(κ (Sν ∨ x₀)^{1/κ})`.
pub fn c_upsilon_bound_ln(kappa: f64, s: f64, nu: f64, d: usize) -> f64 {
    let v = (s * nu).max(x0(d, kappa));
    7f64.ln() + (d as f64 + 1.0) / kappa * v.ln() + kappa * v.powf(1.0 / kappa)
}

/// `1 + Σ_{k≥1} #{‖i‖₁ = k} (Sν)^k k^{−κk}`, which dominates `sup |φ|` over the class on the box.
pub fn c_upsilon_majorant(kappa: f64, s: f64, nu: f64, d: usize) -> Result<SeriesValue> {
    let x = s * nu;
    let dd = d as u32;
    let tail = log_series(
        1,
        1_000_000,
        |k| {
            let kf = k as f64;
            binomial(k as u32 + dd - 1, dd - 1).ln() + kf * x.ln() - kappa * kf * kf.ln()
        },
        |k| {
            let kf = k as f64;
            (kf + d as f64) / (kf + 1.0) * x * (kf + 1.0).powf(-kappa)
        },
    )?;
    let ln_value = log_add(0.0, tail.ln_value);
    Ok(SeriesValue {
        value: ln_value.exp(),
        ln_value,
        ..tail
    })
}

/// Log of `2^d (Sν)^m m^{−κm+d} f_κ(Sν)`.
pub fn truncation_bound_ln(kappa: f64, s: f64, nu: f64, d: usize, m: u32) -> Result<f64> {
    let mf = f64::from(m);
    let f = f_kappa(s * nu, kappa, d, 100_000)?;
    Ok(d as f64 * 2f64.ln() + mf * (s * nu).ln() + (-kappa * mf + d as f64) * mf.ln() + f.ln_value)
}

/// Log of `ν^{−d/2} m^d 4^m (ν^{−1} ∨ 1)^m`.
pub fn sigma1_bound_ln(nu: f64, d: usize, m: u32) -> f64 {
    let mf = f64::from(m);
    let df = d as f64;
    -df / 2.0 * nu.ln() + df * mf.ln() + mf * 4f64.ln() + mf * (1.0 / nu).max(1.0).ln()
}

/// Log of `g(κ,S) = sup_{x≥1} β^x x^{−κx+1}` with `β = (S∨1) e^{d+2} 2^κ`.
pub fn g_ln(kappa: f64, s: f64, d: usize) -> f64 {
    let ln_beta = s.max(1.0).ln() + d as f64 + 2.0 + kappa * 2f64.ln();
    let obj = |x: f64| x * ln_beta - (kappa * x - 1.0) * x.ln();
    let deriv = |x: f64| ln_beta - kappa * x.ln() - kappa + 1.0 / x;
    let (mut lo, mut hi) = (1.0, 2.0);
    while deriv(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    obj(lo).max(obj(hi))
}

/// Log of `2 e^{(d+2)/κ} (S∨1)^{1/κ} exp(2κ e^{(d+2)/κ} (S∨1)^{1/κ})`.
pub fn g_bound_ln(kappa: f64, s: f64, d: usize) -> f64 {
    let a = (d as f64 + 2.0) / kappa + s.max(1.0).ln() / kappa;
    2f64.ln() + a + 2.0 * kappa * a.exp()
}

/// One bound check: the right-hand side against a measured or computed left-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub kappa: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub nu: f64,
    pub d: usize,
    pub m: u32,
    pub applicable: bool,
    pub bound: f64,
    pub measured: f64,
    pub slack: f64,
    pub ln_bound: f64,
    pub ln_measured: f64,
    pub holds: bool,
}

impl BoundReport {
    #[allow(clippy::too_many_arguments)]
    fn new(name: &str, kappa: f64, s: f64, nu: f64, d: usize, m: u32, ln_bound: f64, ln_measured: f64) -> Self {
        let bound = ln_bound.exp();
        let measured = ln_measured.exp();
        BoundReport {
            name: name.into(),
            kappa,
            s,
            nu,
            d,
            m,
            applicable: true,
            bound,
            measured,
            slack: bound - measured,
            ln_bound,
            ln_measured,
            holds: ln_measured <= ln_bound,
        }
    }

    fn not_applicable(name: &str, kappa: f64, s: f64, nu: f64, d: usize, m: u32) -> Self {
        BoundReport {
            name: name.into(),
            kappa,
            s,
            nu,
            d,
            m,
            applicable: false,
            bound: f64::NAN,
            measured: f64::NAN,
            slack: f64::NAN,
            ln_bound: f64::NAN,
            ln_measured: f64::NAN,
            holds: true,
        }
    }
}

/// Settings for the sampled checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSettings {
    pub members: usize,
    /// Degree of the random class members beyond `m`.
    pub extra_degree: u32,
    pub points_1d: usize,
    pub points_2d: usize,
    pub seed: u64,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            members: 25,
            extra_degree: 24,
            points_1d: 201,
            points_2d: 31,
            seed: 0,
        }
    }
}

fn box_points(d: usize, nu: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..per_axis)
        .map(|k| -nu + 2.0 * nu * k as f64 / (per_axis - 1) as f64)
        .collect();
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut k| {
            let mut t = vec![0.0; d];
            for a in (0..d).rev() {
                t[a] = axis[k % per_axis];
                k /= per_axis;
            }
            t
        })
        .collect()
}

/// Runs every bound for one parameter cell.
pub fn bound_suite(kappa: f64, s: f64, nu: f64, d: usize, m: u32, settings: &SuiteSettings) -> Result<Vec<BoundReport>> {
    let params = UpsilonParams::new(kappa, s)?;
    if !(nu > 0.0) {
        return Err(Error::config("nu", format!("must be positive, got {nu}")));
    }
    if d == 0 || d > 2 {
        return Err(Error::config("d", "bound_suite supports d in {1, 2}"));
    }
    if m < 1 {
        return Err(Error::config("m", "must be at least 1"));
    }
    let mut out = Vec::new();

    // sampled members: truncation error and sup-norm
    let per_axis = if d == 1 { settings.points_1d } else { settings.points_2d };
    let pts = box_points(d, nu, per_axis);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let hi = m + settings.extra_degree;
    let keep = crate::multiindex::MultiIndexSet::new(d, m).len();
    let mut sup_tail: f64 = 0.0;
    let mut sup_phi: f64 = 0.0;
    for _ in 0..settings.members {
        let phi = TaylorPoly::random_member(d, 0, hi, &params, &mut rng);
        let mut reals = phi.reals().to_vec();
        reals[..keep].iter_mut().for_each(|r| *r = 0.0);
        let tail = TaylorPoly::from_reals(d, 0, hi, reals, false)?;
        for t in &pts {
            sup_tail = sup_tail.max(tail.eval_unchecked(t).norm());
            sup_phi = sup_phi.max(phi.eval_unchecked(t).norm());
        }
    }
    if kappa * f64::from(m) >= d as f64 {
        let lb = truncation_bound_ln(kappa, s, nu, d, m)?;
        out.push(BoundReport::new("truncation", kappa, s, nu, d, m, lb, sup_tail.ln()));
    } else {
        out.push(BoundReport::not_applicable("truncation", kappa, s, nu, d, m));
    }
    let lc = c_upsilon_bound_ln(kappa, s, nu, d);
    out.push(BoundReport::new("c_upsilon_sampled", kappa, s, nu, d, m, lc, sup_phi.ln()));
    let maj = c_upsilon_majorant(kappa, s, nu, d)?;
    out.push(BoundReport::new("c_upsilon_majorant", kappa, s, nu, d, m, lc, maj.ln_value));

    let x = s * nu;
    let ps = psi_sum(x, d, kappa)?;
    out.push(BoundReport::new("psi_sum", kappa, s, nu, d, m, psi_bound_ln(x, d, kappa), ps.ln_value));

    let fk = f_kappa(x, kappa, d, 100_000)?;
    out.push(BoundReport::new("f_kappa", kappa, s, nu, d, m, f_kappa_bound_ln(x, kappa), fk.ln_value));

    out.push(BoundReport::new("g", kappa, s, nu, d, m, g_bound_ln(kappa, s, d), g_ln(kappa, s, d)));

    let b = change_of_basis(m, nu, d)?;
    let sigma = sigma_max_power(&b.matrix, 20_000, 1e-15);
    out.push(BoundReport::new("sigma1", kappa, s, nu, d, m, sigma1_bound_ln(nu, d, m), sigma.ln()));
    Ok(out)
}

/// Parameter lattice for [`run_bound_lattice`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundLattice {
    pub kappas: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    pub nus: Vec<f64>,
    pub ms: Vec<u32>,
    pub ds: Vec<usize>,
}

impl Default for BoundLattice {
    fn default() -> Self {
        BoundLattice {
            kappas: vec![0.55, 0.75, 1.0],
            s: vec![0.5, 1.0, 2.0],
            nus: vec![0.5, 1.0],
            ms: (2..=6).collect(),
            ds: vec![1, 2],
        }
    }
}

impl BoundLattice {
    pub fn cells(&self) -> Vec<(f64, f64, f64, usize, u32)> {
        let mut out = Vec::new();
        for &d in &self.ds {
            for &kappa in &self.kappas {
                for &s in &self.s {
                    for &nu in &self.nus {
                        for &m in &self.ms {
                            out.push((kappa, s, nu, d, m));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs [`bound_suite`] on every lattice cell; cell `k` uses seed `seed + k`.
pub fn run_bound_lattice(lattice: &BoundLattice, members: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let cells = lattice.cells();
    let per_cell: Vec<Result<Vec<BoundReport>>> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &(kappa, s, nu, d, m))| {
            let settings = SuiteSettings {
                members,
                seed: seed.wrapping_add(k as u64),
                ..SuiteSettings::default()
            };
            bound_suite(kappa, s, nu, d, m, &settings)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_cell {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_bound_reports(path: &Path, reports: &[BoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "name", "kappa", "S", "nu", "d", "m", "applicable", "bound", "measured", "slack", "ln_bound", "ln_measured",
        "holds",
    ])?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            fmt_f64(r.kappa),
            fmt_f64(r.s),
            fmt_f64(r.nu),
            r.d.to_string(),
            r.m.to_string(),
            r.applicable.to_string(),
            fmt_f64(r.bound),
            fmt_f64(r.measured),
            fmt_f64(r.slack),
            fmt_f64(r.ln_bound),
            fmt_f64(r.ln_measured),
            r.holds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bound_reports(path: &Path) -> Result<Vec<BoundReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad bound report field {k}")))
        };
        let b = |k: usize| -> Result<bool> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad bound report field {k}")))
        };
        out.push(BoundReport {
            name: rec.get(0).unwrap_or_default().to_string(),
            kappa: f(1)?,
            s: f(2)?,
            nu: f(3)?,
            d: f(4)? as usize,
            m: f(5)? as u32,
            applicable: b(6)?,
            bound: f(7)?,
            measured: f(8)?,
            slack: f(9)?,
            ln_bound: f(10)?,
            ln_measured: f(11)?,
            holds: b(12)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_kappa_values() {
        assert_eq!(f_kappa(0.0, 1.0, 2, 10).unwrap().value, 0.0);
        let v = f_kappa(1.0, 1.0, 2, 200).unwrap();
        assert!((v.value - 0.404_668_471_503_119_2).abs() < 1e-14);
        assert!(v.remainder < 1e-12);
        let first20: f64 = (1..=20).map(|m| (m as f64 + 2.0).powi(-m)).sum();
        assert!((first20 - v.value).abs() < 1e-12);
        assert!(f_kappa(50.0, 0.55, 2, 3).is_err());
        for k in 0..40 {
            let u = 0.1 * k as f64;
            for &kappa in &[0.55, 0.75, 1.0] {
                let f = f_kappa(u, kappa, 2, 100_000).unwrap();
                assert!(f.ln_value <= f_kappa_bound_ln(u, kappa));
            }
        }
    }

    #[test]
    fn psi_sum_value() {
        let v = psi_sum(1.0, 1, 1.0).unwrap();
        assert!((v.value - 1.628_473_712_901_584_4).abs() < 1e-13);
        assert!(v.ln_value <= psi_bound_ln(1.0, 1, 1.0));
    }

    #[test]
    fn majorant_dominates_samples() {
        let r = bound_suite(0.75, 1.0, 1.0, 2, 4, &SuiteSettings::default()).unwrap();
        let sampled = r.iter().find(|b| b.name == "c_upsilon_sampled").unwrap();
        let maj = r.iter().find(|b| b.name == "c_upsilon_majorant").unwrap();
        assert!(sampled.measured <= maj.measured);
    }

    #[test]
    fn polynomial_within_degree_has_no_truncation_error() {
        let params = UpsilonParams::new(1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = TaylorPoly::random_member(1, 0, 3, &params, &mut rng);
        let diff = phi.extend(5);
        let t = diff.truncate(4);
        assert_eq!(t.extend(5).reals(), diff.reals());
        assert!(truncation_bound_ln(1.0, 1.0, 1.0, 1, 4).unwrap().is_finite());
    }

    #[test]
    fn g_is_a_maximum() {
        for &(kappa, s, d) in &[(0.55, 2.0, 2), (1.0, 0.5, 1)] {
            let v = g_ln(kappa, s, d);
            let ln_beta = s.max(1.0f64).ln() + d as f64 + 2.0 + kappa * 2f64.ln();
            for k in 0..2000 {
                let x = 1.0 + 0.05 * k as f64;
                assert!(x * ln_beta - (kappa * x - 1.0) * x.ln() <= v + 1e-9);
            }
            assert!(v <= g_bound_ln(kappa, s, d));
        }
    }

    #[test]
    fn sigma1_example() {
        let r = bound_suite(1.0, 1.0, 1.0, 1, 2, &SuiteSettings::default()).unwrap();
        let s = r.iter().find(|b| b.name == "sigma1").unwrap();
        assert!((s.bound - 32.0).abs() < 1e-12);
        assert!(s.holds);
    }

    #[test]
    fn truncation_skipped_below_threshold() {
        let r = bound_suite(0.55, 1.0, 1.0, 2, 3, &SuiteSettings::default()).unwrap();
        assert!(!r[0].applicable);
    }

    #[test]
    fn reports_round_trip() {
        let r = bound_suite(1.0, 2.0, 0.5, 2, 3, &SuiteSettings { members: 3, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        write_bound_reports(&p, &r).unwrap();
        let back = read_bound_reports(&p).unwrap();
        assert_eq!(back.len(), r.len());
        for (a, b) in back.iter().zip(&r) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.ln_bound.to_bits(), b.ln_bound.to_bits());
        }
    }
}
