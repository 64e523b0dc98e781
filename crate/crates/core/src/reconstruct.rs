//! Tuning rules, Fourier inversion of truncated estimates and `L²` distances.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::quadrature::gauss_on_breaks;
use crate::spectral::Spectral;
use crate::taylor::TaylorPoly;

/// Truncation degree `⌊(1/(8κ))·ln n / ln ln(n/4)⌋`; `n` may be non-integral for synthetic checks.
pub fn m_rule(n: f64, kappa: f64) -> Result<u32> {
    if !(n >= 12.0) {
        return Err(Error::invalid(format!("m_rule needs n >= 12, got {n}")));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::config("kappa", format!("must lie in (0, 1], got {kappa}")));
    }
    let v = n.ln() / (8.0 * kappa * (n / 4.0).ln().ln());
    Ok(v.floor() as u32)
}

/// Largest admissible `c_κ`: `ν_est ∧ 2κ·exp(−(3d+5)/2)`.
pub fn c_kappa_cap(kappa: f64, d: usize, nu_est: f64) -> f64 {
    nu_est.min(2.0 * kappa * (-(3.0 * d as f64 + 5.0) / 2.0).exp())
}

/// Frequency cutoff `c_κ·m^κ/S`.
pub fn omega_rule(m: u32, kappa: f64, s: f64, c_kappa: f64, nu_est: f64, d: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::invalid("omega_rule needs m >= 1"));
    }
    let cap = c_kappa_cap(kappa, d, nu_est);
    if !(c_kappa > 0.0) || c_kappa > cap {
        return Err(Error::config("c_kappa", format!("must lie in (0, {cap}], got {c_kappa}")));
    }
    Ok(c_kappa * f64::from(m).powf(kappa) / s)
}

/// Which rule produced a tuning value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSource {
    Theoretical,
    Override,
}

/// Resolved truncation degree and frequency cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRules {
    pub kappa: f64,
    pub n: usize,
    #[serde(rename = "S")]
    pub s: f64,
    pub c_kappa: f64,
    pub m: u32,
    pub omega: f64,
    pub m_source: RuleSource,
    pub omega_source: RuleSource,
}

impl TuningRules {
    /// Applies the theoretical rules unless overrides are given. `c_kappa = None` uses its cap.
    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        kappa: f64,
        n: usize,
        s: f64,
        d: usize,
        nu_est: f64,
        c_kappa: Option<f64>,
        m_override: Option<u32>,
        omega_override: Option<f64>,
    ) -> Result<TuningRules> {
        let c_kappa = c_kappa.unwrap_or_else(|| c_kappa_cap(kappa, d, nu_est));
        let (m, m_source) = match m_override {
            Some(m) => (m, RuleSource::Override),
            None => (m_rule(n as f64, kappa)?, RuleSource::Theoretical),
        };
        let (omega, omega_source) = match omega_override {
            Some(w) if w > 0.0 => (w, RuleSource::Override),
            Some(w) => return Err(Error::config("omega_override", format!("must be positive, got {w}"))),
            None => (omega_rule(m.max(1), kappa, s, c_kappa, nu_est, d)?, RuleSource::Theoretical),
        };
        Ok(TuningRules {
            kappa,
            n,
            s,
            c_kappa,
            m,
            omega,
            m_source,
            omega_source,
        })
    }
}

/// One lattice axis: `points` equally spaced values from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Axis> {
        let a = Axis { min, max, points };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || !(self.max > self.min) {
            return Err(Error::config(
                "lattice",
                format!("axis needs max > min and at least 2 points, got {:?}", self),
            ));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.points {
            self.max
        } else {
            self.min + self.step() * k as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.value(k)).collect()
    }
}

/// Product lattice in `x`-space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub axes: Vec<Axis>,
}

impl Lattice {
    pub fn cube(d: usize, half_width: f64, points: usize) -> Result<Lattice> {
        let axis = Axis::new(-half_width, half_width, points)?;
        Ok(Lattice { axes: vec![axis; d] })
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::config("lattice", "needs at least one axis"));
        }
        self.axes.iter().try_for_each(Axis::validate)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    /// Coordinates of point `k` (row-major, last axis fastest).
    pub fn point(&self, mut k: usize, out: &mut [f64]) {
        for a in (0..self.axes.len()).rev() {
            let ax = &self.axes[a];
            out[a] = ax.value(k % ax.points);
            k /= ax.points;
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len())
            .map(|k| {
                self.point(k, &mut x);
                x.clone()
            })
            .collect()
    }
}

/// Metadata carried by an inverted estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DensityMeta {
    pub omega: Option<f64>,
    pub m: Option<u32>,
    pub kappa: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

/// Density values on a lattice, optionally with the spectral form they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub meta: DensityMeta,
    /// Truncated CF estimate and cutoff `ω` when the grid was produced by [`invert`].
    pub spectral: Option<(TaylorPoly, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensitySidecar {
    lattice: Lattice,
    meta: DensityMeta,
    clipped: bool,
}

impl DensityGrid {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        lattice.validate()?;
        if values.len() != lattice.len() {
            return Err(Error::DimensionMismatch {
                expected: lattice.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite density value"));
        }
        Ok(DensityGrid {
            lattice,
            values,
            meta: DensityMeta::default(),
            spectral: None,
        })
    }

    /// Samples an evaluator on the lattice.
    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let values = lattice.points().par_iter().map(|x| f(x)).collect();
        DensityGrid::new(lattice, values)
    }

    /// Negative values set to zero; for presentation only, distances use raw values.
    pub fn clip_nonneg(&self) -> DensityGrid {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.max(0.0));
        out.spectral = None;
        out
    }

    /// Riemann sum of the values.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.lattice.cell_volume()
    }

    /// Writes `<stem>.csv` (coordinates and value) and `<stem>.json` (geometry and metadata).
    pub fn write(&self, csv_path: &Path, clipped: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let d = self.lattice.dim();
        let mut header: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        let mut x = vec![0.0; d];
        for (k, v) in self.values.iter().enumerate() {
            self.lattice.point(k, &mut x);
            let mut row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            row.push(fmt_f64(*v));
            w.write_record(&row)?;
        }
        w.flush()?;
        let side = DensitySidecar {
            lattice: self.lattice.clone(),
            meta: self.meta.clone(),
            clipped,
        };
        std::fs::write(csv_path.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<DensityGrid> {
        let side: DensitySidecar = serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
        let mut r = csv::Reader::from_path(csv_path)?;
        let d = side.lattice.dim();
        let mut values = Vec::with_capacity(side.lattice.len());
        for rec in r.records() {
            let rec = rec?;
            let field = rec
                .get(d)
                .ok_or_else(|| Error::invalid("density CSV row missing value column"))?;
            values.push(
                field
                    .parse()
                    .map_err(|_| Error::invalid(format!("unparseable density value `{field}`")))?,
            );
        }
        let mut g = DensityGrid::new(side.lattice, values)?;
        g.meta = side.meta;
        Ok(g)
    }
}

/// `∫_{−1}^{1} s^k e^{−isz} ds` for `k = 0..=kmax`.
pub fn unit_moments(kmax: usize, z: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); kmax + 1];
    if z.abs() <= (kmax as f64).max(2.0) {
        // power series in z, terms with k + j even only
        let miz = Complex64::new(0.0, -z);
        for (k, slot) in out.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..400usize {
                if j > 0 {
                    term = term * miz / j as f64;
                }
                if (k + j) % 2 == 0 {
                    let add = term * (2.0 / (k + j + 1) as f64);
                    acc += add;
                    if j > 2 * (z.abs() as usize + 2) && add.norm() < 1e-18 * acc.norm().max(1e-300) {
                        break;
                    }
                }
            }
            *slot = acc;
        }
    } else {
        // integration by parts, stable upward for |z| > k
        let e_minus = Complex64::cis(-z);
        let e_plus = Complex64::cis(z);
        let iz = Complex64::new(0.0, z);
        out[0] = Complex64::new(2.0 * z.sin() / z, 0.0);
        for k in 1..=kmax {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            out[k] = (e_minus - e_plus * sign) / (-iz) + out[k - 1] * (k as f64) / iz;
        }
    }
    out
}

/// `∫_{−ω}^{ω} t^k e^{−itx} dt` for `k = 0..=kmax`.
pub fn box_moments(kmax: usize, omega: f64, x: f64) -> Vec<Complex64> {
    let mut m = unit_moments(kmax, omega * x);
    let mut scale = omega;
    for v in m.iter_mut() {
        *v *= scale;
        scale *= omega;
    }
    m
}

/// `f̂(x) = (2π)^{−d} ∫_{[−ω,ω]^d} e^{−itᵀx} p(t) dt` on a lattice, by closed-form moments.
pub fn invert(poly: &TaylorPoly, omega: f64, lattice: &Lattice) -> Result<DensityGrid> {
    if !(omega > 0.0) {
        return Err(Error::invalid(format!("omega must be positive, got {omega}")));
    }
    let d = poly.dim();
    if lattice.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: lattice.dim(),
        });
    }
    lattice.validate()?;
    let m = poly.max_degree() as usize;
    // per-axis moment tables: moments[a][point][k]
    let moments: Vec<Vec<Vec<Complex64>>> = lattice
        .axes
        .iter()
        .map(|ax| ax.values().iter().map(|&x| box_moments(m, omega, x)).collect())
        .collect();
    let set = poly.index_set().clone();
    let coeffs: Vec<(usize, Complex64)> = (0..poly.len())
        .filter(|&k| poly.reals()[k] != 0.0)
        .map(|k| (k, poly.coeff(k)))
        .collect();
    let norm = (2.0 * PI).powi(d as i32);
    let n = lattice.len();
    let raw: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut idx = vec![0usize; d];
            let mut q = p;
            for a in (0..d).rev() {
                idx[a] = q % lattice.axes[a].points;
                q /= lattice.axes[a].points;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for &(k, c) in &coeffs {
                let mut term = c;
                for (a, &e) in set.get(k).entries().iter().enumerate() {
                    term *= moments[a][idx[a]][e as usize];
                }
                acc += term;
            }
            acc / norm
        })
        .collect();
    let scale = raw.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
    let worst = raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if worst > 1e-9 * scale {
        return Err(Error::numerical(format!(
            "inverted estimate has imaginary residue {worst:e}; coefficient parity is broken"
        )));
    }
    let mut grid = DensityGrid::new(lattice.clone(), raw.iter().map(|z| z.re).collect())?;
    grid.meta.omega = Some(omega);
    grid.meta.m = Some(poly.max_degree());
    grid.spectral = Some((poly.clone(), omega));
    Ok(grid)
}

/// `∫_{[−ω,ω]^d} p(t) conj(q(t)) dt` for two polynomials in the same variables.
fn box_inner(p: &TaylorPoly, q: &TaylorPoly, omega: f64) -> Complex64 {
    let moment = |s: u32| -> f64 {
        if s % 2 == 1 {
            0.0
        } else {
            2.0 * omega.powi(s as i32 + 1) / (s as f64 + 1.0)
        }
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..p.len() {
        if p.reals()[i] == 0.0 {
            continue;
        }
        let ei = p.index_set().get(i).entries();
        for j in 0..q.len() {
            if q.reals()[j] == 0.0 {
                continue;
            }
            let ej = q.index_set().get(j).entries();
            let w: f64 = ei.iter().zip(ej).map(|(&a, &b)| moment(a + b)).product();
            if w != 0.0 {
                acc += p.coeff(i) * q.coeff(j).conj() * w;
            }
        }
    }
    acc
}

fn poly_difference(p: &TaylorPoly, q: &TaylorPoly) -> TaylorPoly {
    let m = p.max_degree().max(q.max_degree());
    let p = p.extend(m);
    let q = q.extend(m);
    let reals = p.reals().iter().zip(q.reals()).map(|(a, b)| a - b).collect();
    TaylorPoly::from_reals(p.dims().0, p.dims().1, m, reals, false).expect("same index set")
}

/// Squared `L²` distance of two inverted estimates by Plancherel.
pub fn spectral_l2_distance_sq(a: (&TaylorPoly, f64), b: (&TaylorPoly, f64)) -> Result<f64> {
    let (pa, wa) = a;
    let (pb, wb) = b;
    if pa.dims() != pb.dims() {
        return Err(Error::DimensionMismatch {
            expected: pa.dim(),
            got: pb.dim(),
        });
    }
    let d = pa.dim() as i32;
    let ((small, ws), (large, wl)) = if wa <= wb { ((pa, wa), (pb, wb)) } else { ((pb, wb), (pa, wa)) };
    let diff = poly_difference(small, large);
    let inner = box_inner(&diff, &diff, ws).re;
    let band = if wl > ws {
        box_inner(large, large, wl).re - box_inner(large, large, ws).re
    } else {
        0.0
    };
    Ok(((inner + band) / (2.0 * PI).powi(d)).max(0.0))
}

/// Squared `L²` distance: spectral when both grids carry their spectral form, else a
/// lattice Riemann sum with the lattice cell volume as the step.
pub fn l2_distance_sq(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    if let (Some((pa, wa)), Some((pb, wb))) = (&a.spectral, &b.spectral) {
        return spectral_l2_distance_sq((pa, *wa), (pb, *wb));
    }
    if a.lattice != b.lattice {
        return Err(Error::invalid("incompatible lattices without a spectral form"));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        * a.lattice.cell_volume())
}

pub fn l2_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    Ok(l2_distance_sq(a, b)?.sqrt())
}

/// Riemann-sum `L²` distance between a lattice estimate and a reference density.
pub fn l2_distance_to(estimate: &DensityGrid, truth: &(dyn Fn(&[f64]) -> f64 + Sync)) -> f64 {
    let pts = estimate.lattice.points();
    let s: f64 = pts
        .par_iter()
        .zip(estimate.values.par_iter())
        .map(|(x, v)| {
            let e = v - truth(x);
            e * e
        })
        .sum();
    (s * estimate.lattice.cell_volume()).sqrt()
}

/// Composite Gauss rule description for [`smoothness_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelRule {
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for PanelRule {
    fn default() -> Self {
        PanelRule {
            panels: 20,
            nodes_per_panel: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessReport {
    pub value: f64,
    /// Share of the value coming from the shell `0.9·radius ≤ ‖t‖∞ ≤ radius`.
    pub shell_fraction: f64,
    pub tail_flag: bool,
}

fn tensor_integral(d: usize, nodes: &[f64], weights: &[f64], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let q = nodes.len();
    let total = q.pow(d as u32);
    let mut t = vec![0.0; d];
    let mut acc = 0.0;
    for k in 0..total {
        let mut r = k;
        let mut w = 1.0;
        for a in (0..d).rev() {
            let j = r % q;
            r /= q;
            t[a] = nodes[j];
            w *= weights[j];
        }
        acc += w * f(&t);
    }
    acc
}

/// `∫_{‖t‖∞ ≤ radius} |φ(t)|² (1 + ‖t‖²)^β dt` with a flag when the outer shell carries over 1%.
pub fn smoothness_integral(phi: &dyn Spectral, beta: f64, radius: f64, rule: PanelRule) -> Result<SmoothnessReport> {
    if !(beta > 0.0) || !(radius > 0.0) {
        return Err(Error::invalid("smoothness_integral needs beta > 0 and radius > 0"));
    }
    let d = phi.dim();
    let integrand = |t: &[f64]| -> f64 {
        let r2: f64 = t.iter().map(|v| v * v).sum();
        phi.value(t).norm_sqr() * (1.0 + r2).powf(beta)
    };
    let breaks = |r: f64| -> Vec<f64> {
        let h = 2.0 * r / rule.panels as f64;
        (0..=rule.panels).map(|k| -r + h * k as f64).collect()
    };
    let (xo, wo) = gauss_on_breaks(&breaks(radius), rule.nodes_per_panel);
    let (xi, wi) = gauss_on_breaks(&breaks(0.9 * radius), rule.nodes_per_panel);
    let total = tensor_integral(d, &xo, &wo, &integrand);
    let inner = tensor_integral(d, &xi, &wi, &integrand);
    let shell_fraction = if total > 0.0 { ((total - inner) / total).max(0.0) } else { 0.0 };
    Ok(SmoothnessReport {
        value: total,
        shell_fraction,
        tail_flag: shell_fraction > 0.01,
    })
}
