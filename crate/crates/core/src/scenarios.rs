//! Synthetic data for the two-block model and its three submodels, with the true
//! characteristic functions needed by oracle checks.
//!
//! Random streams: replicate `r` of master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` with `set_stream(r)`. Each observation consumes the
//! signal draws first, then the first noise block, then the second.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conjecture::{bump, mollifier_constant, WeightSpec};
use crate::contrast::OracleModel;
use crate::ecf::SampleSet;
use crate::error::{Error, Result};
use crate::gnoise::GNoise;
use crate::quadrature::composite_gauss;
use crate::reconstruct::{l2_distance_to, DensityGrid};
use crate::spectral::FnSpectral;
use crate::taylor::UpsilonParams;

fn one() -> f64 {
    1.0
}

/// One-dimensional laws used for signal coordinates, sources and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Uniform {
        #[serde(default = "one")]
        half_width: f64,
    },
    /// Uniform on `[−w, w]` smoothed by the mollifier `u_b`.
    CompactBump {
        #[serde(default = "one")]
        half_width: f64,
        b: f64,
    },
    HKappa {
        kappa: f64,
        #[serde(default = "one")]
        x0: f64,
    },
    PointMass {
        #[serde(default)]
        at: f64,
    },
    /// Piecewise-linear density through `values` at `start + k·step`, renormalized.
    Custom {
        start: f64,
        step: f64,
        values: Vec<f64>,
    },
    G {
        c: f64,
    },
    Laplace {
        scale: f64,
    },
    Gaussian {
        sd: f64,
    },
}

/// Piecewise-linear density on a uniform lattice.
#[derive(Debug, Clone)]
struct Tabulated {
    start: f64,
    step: f64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Tabulated {
    fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Tabulated> {
        if values.len() < 2 || !(step > 0.0) {
            return Err(Error::config("values", "a tabulated density needs at least two points and a positive step"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("values", "density values must be finite and nonnegative"));
        }
        let mut cumulative = vec![0.0];
        for w in values.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + step * (w[0] + w[1]) / 2.0);
        }
        let total = *cumulative.last().unwrap();
        if !(total > 0.0) {
            return Err(Error::config("values", "density has zero mass"));
        }
        Ok(Tabulated {
            start,
            step,
            values: values.iter().map(|v| v / total).collect(),
            cumulative: cumulative.iter().map(|v| v / total).collect(),
        })
    }

    fn density(&self, x: f64) -> f64 {
        let u = (x - self.start) / self.step;
        if u < 0.0 || u > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let k = (u.floor() as usize).min(self.values.len() - 2);
        let w = u - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Exact inversion of the piecewise-quadratic CDF.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c <= u).clamp(1, self.cumulative.len() - 1) - 1;
        let target = u - self.cumulative[k];
        let (f0, f1, h) = (self.values[k], self.values[k + 1], self.step);
        let slope = (f1 - f0) / h;
        let s = if slope.abs() < 1e-12 * (f0 + f1).max(1e-300) / h {
            if f0 > 0.0 {
                target / f0
            } else {
                0.5 * h
            }
        } else {
            // f0 s + slope s²/2 = target
            let disc = (f0 * f0 + 2.0 * slope * target).max(0.0);
            2.0 * target / (f0 + disc.sqrt())
        };
        self.start + self.step * k as f64 + s.clamp(0.0, h)
    }

    /// Gauss nodes in every cell weighted by the interpolated density.
    fn rule(&self) -> (Vec<f64>, Vec<f64>) {
        let (gx, gw) = composite_gauss(0.0, 1.0, 1, 6);
        let mut x = Vec::with_capacity(gx.len() * self.values.len());
        let mut w = Vec::with_capacity(gx.len() * self.values.len());
        for k in 0..self.values.len() - 1 {
            for (u, q) in gx.iter().zip(&gw) {
                x.push(self.start + self.step * (k as f64 + u));
                w.push(q * self.step * (self.values[k] * (1.0 - u) + self.values[k + 1] * u));
            }
        }
        (x, w)
    }
}

#[derive(Debug, Clone)]
enum LawImpl {
    Uniform(f64),
    Bump {
        w: f64,
        b: f64,
        /// Unit-mass rule for the `u_1` profile on `[−1, 1]`.
        nodes: Vec<f64>,
        weights: Vec<f64>,
        /// CDF of `u_1` on a uniform lattice over `[−1, 1]`.
        cdf: Vec<f64>,
    },
    HKappa {
        weight: WeightSpec,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        table: Tabulated,
    },
    Point(f64),
    Custom(Tabulated),
    G(Arc<GNoise>),
    Laplace(f64),
    Gaussian(f64),
}

/// A built one-dimensional law: CF, density, sampler and (for compactly supported laws)
/// a discrete rule for expectations.
#[derive(Debug, Clone)]
pub struct Law {
    pub spec: LawSpec,
    imp: LawImpl,
}

const BUMP_CDF_POINTS: usize = 4001;

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

impl Law {
    pub fn new(spec: LawSpec) -> Result<Law> {
        let imp = match &spec {
            LawSpec::Uniform { half_width } => LawImpl::Uniform(positive("half_width", *half_width)?),
            LawSpec::CompactBump { half_width, b } => {
                let w = positive("half_width", *half_width)?;
                let b = positive("b", *b)?;
                let (nodes, mut weights) = composite_gauss(-1.0, 1.0, 8, 16);
                for (x, q) in nodes.iter().zip(weights.iter_mut()) {
                    *q *= bump(*x);
                }
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|q| *q /= total);
                let c_u = mollifier_constant();
                let h = 2.0 / (BUMP_CDF_POINTS - 1) as f64;
                let mut cdf = vec![0.0];
                let (gx, gw) = composite_gauss(0.0, h, 1, 8);
                for k in 0..BUMP_CDF_POINTS - 1 {
                    let a = -1.0 + h * k as f64;
                    let cell: f64 = gx.iter().zip(&gw).map(|(x, q)| q * c_u * bump(a + x)).sum();
                    cdf.push(cdf[k] + cell);
                }
                let last = *cdf.last().unwrap();
                cdf.iter_mut().for_each(|v| *v /= last);
                LawImpl::Bump {
                    w,
                    b,
                    nodes,
                    weights,
                    cdf,
                }
            }
            LawSpec::HKappa { kappa, x0 } => {
                let weight = WeightSpec::new(*kappa, *x0)?;
                if weight.is_indicator() {
                    return Err(Error::config("kappa", "use the uniform law for kappa = 1"));
                }
                let r = weight.radius(1e-40, 0);
                let (nodes, mut weights) = composite_gauss(-r, r, 200, 16);
                for (x, q) in nodes.iter().zip(weights.iter_mut()) {
                    *q *= weight.eval(*x);
                }
                let points = (1 << 14) + 1;
                let step = 2.0 * r / (points - 1) as f64;
                let table = Tabulated::new(-r, step, (0..points).map(|k| weight.eval(-r + step * k as f64)).collect())?;
                LawImpl::HKappa {
                    weight,
                    nodes,
                    weights,
                    table,
                }
            }
            LawSpec::PointMass { at } => LawImpl::Point(*at),
            LawSpec::Custom { start, step, values } => LawImpl::Custom(Tabulated::new(*start, *step, values.clone())?),
            LawSpec::G { c } => LawImpl::G(Arc::new(GNoise::new(*c)?)),
            LawSpec::Laplace { scale } => LawImpl::Laplace(positive("scale", *scale)?),
            LawSpec::Gaussian { sd } => LawImpl::Gaussian(positive("sd", *sd)?),
        };
        Ok(Law { spec, imp })
    }

    pub fn cf(&self, t: f64) -> Complex64 {
        let real = |v: f64| Complex64::new(v, 0.0);
        match &self.imp {
            LawImpl::Uniform(w) => real(sinc(w * t)),
            LawImpl::Bump { w, b, nodes, weights, .. } => {
                let s = t / b;
                real(sinc(w * t) * nodes.iter().zip(weights).map(|(x, q)| q * (s * x).cos()).sum::<f64>())
            }
            LawImpl::HKappa { nodes, weights, .. } => {
                real(nodes.iter().zip(weights).map(|(x, q)| q * (t * x).cos()).sum())
            }
            LawImpl::Point(a) => Complex64::cis(t * a),
            LawImpl::Custom(tab) => {
                let (x, w) = tab.rule();
                x.iter().zip(&w).map(|(x, q)| Complex64::cis(t * x) * q).sum()
            }
            LawImpl::G(g) => real(g.cf(t)),
            LawImpl::Laplace(s) => real(1.0 / (1.0 + s * s * t * t)),
            LawImpl::Gaussian(sd) => real((-0.5 * sd * sd * t * t).exp()),
        }
    }

    /// Lebesgue density, `None` for a point mass.
    pub fn density(&self, x: f64) -> Option<f64> {
        Some(match &self.imp {
            LawImpl::Uniform(w) => {
                if x.abs() <= *w {
                    0.5 / w
                } else {
                    0.0
                }
            }
            LawImpl::Bump { w, b, cdf, .. } => {
                let unit_cdf = |y: f64| {
                    let u = ((y * b).clamp(-1.0, 1.0) + 1.0) / 2.0 * (BUMP_CDF_POINTS - 1) as f64;
                    let k = (u.floor() as usize).min(BUMP_CDF_POINTS - 2);
                    let f = u - k as f64;
                    cdf[k] * (1.0 - f) + cdf[k + 1] * f
                };
                (unit_cdf(x + w) - unit_cdf(x - w)) / (2.0 * w)
            }
            LawImpl::HKappa { weight, .. } => weight.eval(x),
            LawImpl::Point(_) => return None,
            LawImpl::Custom(tab) => tab.density(x),
            LawImpl::G(g) => g.density(x),
            LawImpl::Laplace(s) => (-x.abs() / s).exp() / (2.0 * s),
            LawImpl::Gaussian(sd) => (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt()),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.imp {
            LawImpl::Uniform(w) => rng.random_range(-*w..=*w),
            LawImpl::Bump { w, b, .. } => {
                let u = rng.random_range(-*w..=*w);
                // rejection from the uniform proposal; the profile peaks at e^{-1}
                loop {
                    let y: f64 = rng.random_range(-1.0..1.0);
                    let a: f64 = rng.random();
                    if a * (-1.0f64).exp() <= bump(y) {
                        return u + y / b;
                    }
                }
            }
            LawImpl::HKappa { table, .. } => table.sample(rng),
            LawImpl::Point(a) => *a,
            LawImpl::Custom(tab) => tab.sample(rng),
            LawImpl::G(g) => g.sample(rng),
            LawImpl::Laplace(s) => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -s * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            LawImpl::Gaussian(sd) => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.imp {
            LawImpl::Point(a) => *a,
            LawImpl::Custom(tab) => {
                let (x, w) = tab.rule();
                x.iter().zip(&w).map(|(x, q)| x * q).sum()
            }
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.imp {
            LawImpl::Uniform(w) => w * w / 3.0,
            LawImpl::Bump { w, b, nodes, weights, .. } => {
                w * w / 3.0 + nodes.iter().zip(weights).map(|(x, q)| q * x * x).sum::<f64>() / (b * b)
            }
            LawImpl::HKappa { nodes, weights, .. } => nodes.iter().zip(weights).map(|(x, q)| q * x * x).sum(),
            LawImpl::Point(_) => 0.0,
            LawImpl::Custom(tab) => {
                let m = self.mean();
                let (x, w) = tab.rule();
                x.iter().zip(&w).map(|(x, q)| q * (x - m).powi(2)).sum()
            }
            LawImpl::G(g) => g.variance(),
            LawImpl::Laplace(s) => 2.0 * s * s,
            LawImpl::Gaussian(sd) => sd * sd,
        }
    }

    /// Discrete rule `(x_k, w_k)` with `Σ w_k φ(x_k) ≈ E φ(X)`; only for compactly supported laws.
    pub fn rule(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.imp {
            LawImpl::Uniform(w) => {
                let (x, q) = composite_gauss(-*w, *w, 8, 16);
                let s = 0.5 / w;
                Some((x, q.iter().map(|v| v * s).collect()))
            }
            LawImpl::Bump { w, b, nodes, weights, .. } => {
                let (ux, uw) = composite_gauss(-*w, *w, 8, 16);
                let mut x = Vec::with_capacity(ux.len() * nodes.len());
                let mut q = Vec::with_capacity(ux.len() * nodes.len());
                for (a, wa) in ux.iter().zip(&uw) {
                    for (v, wv) in nodes.iter().zip(weights) {
                        x.push(a + v / b);
                        q.push(wa * 0.5 / w * wv);
                    }
                }
                Some((x, q))
            }
            LawImpl::HKappa { nodes, weights, .. } => Some((nodes.clone(), weights.clone())),
            LawImpl::Point(a) => Some((vec![*a], vec![1.0])),
            LawImpl::Custom(tab) => Some(tab.rule()),
            _ => None,
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// Law of the latent signal `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Uniform {
        dim: usize,
        #[serde(default = "one")]
        half_width: f64,
    },
    CompactBump {
        dim: usize,
        #[serde(default = "one")]
        half_width: f64,
        b: f64,
    },
    HKappaFamily {
        dim: usize,
        kappa: f64,
        #[serde(default = "one")]
        x0: f64,
    },
    /// `X = ±points` with probability one half each: perfectly dependent coordinates.
    TwoPointDependent { points: Vec<f64> },
    PointMass { at: Vec<f64> },
    /// Independent coordinates with a common tabulated density.
    Custom {
        dim: usize,
        start: f64,
        step: f64,
        values: Vec<f64>,
    },
}

impl SignalSpec {
    pub fn dim(&self) -> usize {
        match self {
            SignalSpec::Uniform { dim, .. }
            | SignalSpec::CompactBump { dim, .. }
            | SignalSpec::HKappaFamily { dim, .. }
            | SignalSpec::Custom { dim, .. } => *dim,
            SignalSpec::TwoPointDependent { points } => points.len(),
            SignalSpec::PointMass { at } => at.len(),
        }
    }

    fn coordinate_law(&self) -> Option<LawSpec> {
        match self {
            SignalSpec::Uniform { half_width, .. } => Some(LawSpec::Uniform { half_width: *half_width }),
            SignalSpec::CompactBump { half_width, b, .. } => Some(LawSpec::CompactBump {
                half_width: *half_width,
                b: *b,
            }),
            SignalSpec::HKappaFamily { kappa, x0, .. } => Some(LawSpec::HKappa { kappa: *kappa, x0: *x0 }),
            SignalSpec::Custom { start, step, values, .. } => Some(LawSpec::Custom {
                start: *start,
                step: *step,
                values: values.clone(),
            }),
            _ => None,
        }
    }
}

/// Coordinatewise link of the errors-in-variables model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EivMap {
    /// `x³ + x`.
    #[default]
    CubicPlusLinear,
    Identity,
}

impl EivMap {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            EivMap::CubicPlusLinear => x * x * x + x,
            EivMap::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `Y⁽¹⁾ = X + ε⁽¹⁾`, `Y⁽²⁾ = X + ε⁽²⁾`.
    Repeated { signal: SignalSpec },
    /// `Y⁽¹⁾ = X + ε⁽¹⁾`, `Y⁽²⁾ = g(X) + ε⁽²⁾`.
    Eiv {
        signal: SignalSpec,
        #[serde(default)]
        map: EivMap,
    },
    /// `Y = A S + ε` with independent sources; the first `d1` rows form the first block.
    Ica {
        mixing: Vec<Vec<f64>>,
        d1: usize,
        sources: Vec<LawSpec>,
    },
}

/// Per-block noise laws, applied independently to every coordinate of the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub first: LawSpec,
    pub second: LawSpec,
    /// Subtract each law's mean so that both blocks are centered.
    #[serde(default)]
    pub centered: bool,
}

/// Shared density evaluator.
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub model: ModelSpec,
    pub noise: NoiseSpec,
    /// Class `Υ_{κ,S}` the truth is declared to lie in, recorded with results.
    #[serde(default)]
    pub declared: Option<UpsilonParams>,
}

#[derive(Debug, Clone)]
enum Signal {
    Product { dim: usize, law: Law },
    TwoPoint(Vec<f64>),
    Point(Vec<f64>),
}

impl Signal {
    fn build(spec: &SignalSpec) -> Result<Signal> {
        if spec.dim() == 0 {
            return Err(Error::config("dim", "signal dimension must be positive"));
        }
        Ok(match (spec, spec.coordinate_law()) {
            (_, Some(law)) => Signal::Product {
                dim: spec.dim(),
                law: Law::new(law)?,
            },
            (SignalSpec::TwoPointDependent { points }, None) => Signal::TwoPoint(points.clone()),
            (SignalSpec::PointMass { at }, None) => Signal::Point(at.clone()),
            _ => unreachable!("every signal has a coordinate law or is handled above"),
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match self {
            Signal::Product { dim, law } => out.extend((0..*dim).map(|_| law.sample(rng))),
            Signal::TwoPoint(p) => {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                out.extend(p.iter().map(|v| s * v));
            }
            Signal::Point(a) => out.extend_from_slice(a),
        }
    }

    fn cf(&self, t: &[f64]) -> Complex64 {
        match self {
            Signal::Product { law, .. } => t.iter().map(|v| law.cf(*v)).product(),
            Signal::TwoPoint(p) => Complex64::new(p.iter().zip(t).map(|(a, t)| a * t).sum::<f64>().cos(), 0.0),
            Signal::Point(a) => Complex64::cis(a.iter().zip(t).map(|(a, t)| a * t).sum()),
        }
    }

    /// `E exp(i z₁ᵀX + i z₂ᵀ g(X))`.
    fn eiv_cf(&self, map: EivMap, z1: &[f64], z2: &[f64], rule: Option<&(Vec<f64>, Vec<f64>)>) -> Complex64 {
        let phase = |x: &[f64]| -> f64 { x.iter().zip(z1.iter().zip(z2)).map(|(x, (a, b))| a * x + b * map.apply(*x)).sum() };
        match self {
            Signal::Product { .. } => {
                let (x, w) = rule.expect("product signals carry a rule");
                z1.iter()
                    .zip(z2)
                    .map(|(a, b)| {
                        x.iter()
                            .zip(w)
                            .map(|(x, q)| Complex64::cis(a * x + b * map.apply(*x)) * q)
                            .sum::<Complex64>()
                    })
                    .product()
            }
            Signal::TwoPoint(p) => {
                let minus: Vec<f64> = p.iter().map(|v| -v).collect();
                (Complex64::cis(phase(p)) + Complex64::cis(phase(&minus))) * 0.5
            }
            Signal::Point(a) => Complex64::cis(phase(a)),
        }
    }

    fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            Signal::Product { law, .. } => x.iter().map(|v| law.density(*v)).product(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Repeated(Signal),
    Eiv {
        signal: Signal,
        map: EivMap,
        rule: Option<(Vec<f64>, Vec<f64>)>,
    },
    Ica {
        mixing: DMatrix<f64>,
        sources: Vec<Law>,
    },
}

/// Probe box half-width and points per axis of the slice check.
pub const H2_PROBE_HALF_WIDTH: f64 = 2.0;
pub const H2_PROBE_POINTS: usize = 9;

/// A validated scenario ready for sampling.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    model: Model,
    noise1: Law,
    noise2: Law,
    d1: usize,
    d2: usize,
    /// `min_{z₁} max_{z₂} |Φ_R(z₁, z₂)|` over the probe grid.
    pub h2_probe: f64,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Scenario> {
        let (model, d1, d2) = match &spec.model {
            ModelSpec::Repeated { signal } => (Model::Repeated(Signal::build(signal)?), signal.dim(), signal.dim()),
            ModelSpec::Eiv { signal, map } => {
                let signal_b = Signal::build(signal)?;
                let rule = match &signal_b {
                    Signal::Product { law, .. } => Some(law.rule().ok_or_else(|| {
                        Error::config("signal", "errors-in-variables needs a compactly supported signal")
                    })?),
                    _ => None,
                };
                (
                    Model::Eiv {
                        signal: signal_b,
                        map: *map,
                        rule,
                    },
                    signal.dim(),
                    signal.dim(),
                )
            }
            ModelSpec::Ica { mixing, d1, sources } => {
                let rows = mixing.len();
                let cols = sources.len();
                if rows == 0 || cols == 0 {
                    return Err(Error::config("mixing", "needs at least one row and one source"));
                }
                if *d1 == 0 || *d1 >= rows {
                    return Err(Error::config("d1", format!("must lie in 1..{rows}")));
                }
                if mixing.iter().any(|r| r.len() != cols) {
                    return Err(Error::config("mixing", format!("every row needs {cols} entries")));
                }
                let a = DMatrix::from_fn(rows, cols, |i, j| mixing[i][j]);
                for j in 0..cols {
                    if (0..*d1).all(|i| a[(i, j)] == 0.0) {
                        return Err(Error::config("mixing", format!("column {j} vanishes on the first block")));
                    }
                    if (*d1..rows).all(|i| a[(i, j)] == 0.0) {
                        return Err(Error::config("mixing", format!("column {j} vanishes on the second block")));
                    }
                }
                let laws = sources.iter().cloned().map(Law::new).collect::<Result<Vec<_>>>()?;
                (Model::Ica { mixing: a, sources: laws }, *d1, rows - d1)
            }
        };
        if d1 + d2 > 4 {
            return Err(Error::config("dim", format!("total dimension {} exceeds 4", d1 + d2)));
        }
        let noise1 = Law::new(spec.noise.first.clone())?;
        let noise2 = Law::new(spec.noise.second.clone())?;
        let mut sc = Scenario {
            spec,
            model,
            noise1,
            noise2,
            d1,
            d2,
            h2_probe: 0.0,
        };
        sc.h2_probe = sc.slice_check(H2_PROBE_HALF_WIDTH, H2_PROBE_POINTS);
        if !(sc.h2_probe > 1e-12) {
            return Err(Error::config(
                "signal",
                format!("signal CF fails the slice check (min-max modulus {:e})", sc.h2_probe),
            ));
        }
        Ok(sc)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    fn noise_shift(&self, first: bool) -> f64 {
        if !self.spec.noise.centered {
            return 0.0;
        }
        if first {
            self.noise1.mean()
        } else {
            self.noise2.mean()
        }
    }

    /// `n` observations of replicate `replicate` under master seed `seed`.
    pub fn sample(&self, n: usize, seed: u64, replicate: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        let (d1, d2) = (self.d1, self.d2);
        let (m1, m2) = (self.noise_shift(true), self.noise_shift(false));
        let mut data = Vec::with_capacity(n * (d1 + d2));
        let mut x = Vec::new();
        for _ in 0..n {
            let start = data.len();
            match &self.model {
                Model::Repeated(signal) => {
                    signal.draw(&mut rng, &mut x);
                    data.extend_from_slice(&x);
                    data.extend_from_slice(&x);
                }
                Model::Eiv { signal, map, .. } => {
                    signal.draw(&mut rng, &mut x);
                    data.extend_from_slice(&x);
                    data.extend(x.iter().map(|v| map.apply(*v)));
                }
                Model::Ica { mixing, sources } => {
                    x.clear();
                    x.extend(sources.iter().map(|s| s.sample(&mut rng)));
                    for i in 0..d1 + d2 {
                        data.push((0..x.len()).map(|j| mixing[(i, j)] * x[j]).sum());
                    }
                }
            }
            for a in 0..d1 {
                data[start + a] += self.noise1.sample(&mut rng) - m1;
            }
            for a in 0..d2 {
                data[start + d1 + a] += self.noise2.sample(&mut rng) - m2;
            }
        }
        SampleSet::new(d1, d2, data)
    }

    /// `Φ_R(z₁, z₂)`.
    pub fn signal_cf(&self, t: &[f64]) -> Complex64 {
        let d1 = self.d1;
        match &self.model {
            Model::Repeated(signal) => {
                let s: Vec<f64> = (0..d1).map(|a| t[a] + t[d1 + a]).collect();
                signal.cf(&s)
            }
            Model::Eiv { signal, map, rule } => signal.eiv_cf(*map, &t[..d1], &t[d1..], rule.as_ref()),
            Model::Ica { mixing, sources } => sources
                .iter()
                .enumerate()
                .map(|(j, law)| law.cf((0..t.len()).map(|i| mixing[(i, j)] * t[i]).sum()))
                .product(),
        }
    }

    fn noise_cf(&self, first: bool, t: &[f64]) -> Complex64 {
        let law = if first { &self.noise1 } else { &self.noise2 };
        let m = self.noise_shift(first);
        t.iter().map(|v| law.cf(*v) * Complex64::cis(-m * v)).product()
    }

    /// True signal and noise characteristic functions.
    pub fn true_cf(&self) -> OracleModel {
        let me = Arc::new(self.clone());
        let (a, b, c) = (me.clone(), me.clone(), me);
        OracleModel {
            phi_r: Arc::new(FnSpectral::new(self.d1 + self.d2, move |t| a.signal_cf(t))),
            phi_q1: Arc::new(FnSpectral::new(self.d1, move |t| b.noise_cf(true, t))),
            phi_q2: Arc::new(FnSpectral::new(self.d2, move |t| c.noise_cf(false, t))),
        }
    }

    /// `min_{z₁} max_{z₂} |Φ_R(z₁, z₂)|` on a uniform probe grid of `[−h, h]^d`.
    pub fn slice_check(&self, half_width: f64, points: usize) -> f64 {
        let axis: Vec<f64> = (0..points)
            .map(|k| -half_width + 2.0 * half_width * k as f64 / (points - 1) as f64)
            .collect();
        let probe = |dim: usize| -> Vec<Vec<f64>> {
            let mut out = vec![vec![]];
            for _ in 0..dim {
                out = out
                    .into_iter()
                    .flat_map(|p| {
                        axis.iter().map(move |v| {
                            let mut q = p.clone();
                            q.push(*v);
                            q
                        })
                    })
                    .collect();
            }
            out
        };
        let (z1s, z2s) = (probe(self.d1), probe(self.d2));
        z1s.iter()
            .map(|z1| {
                z2s.iter()
                    .map(|z2| {
                        let t: Vec<f64> = z1.iter().chain(z2).cloned().collect();
                        self.signal_cf(&t).norm()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `min |Φ_{Q⁽ⁱ⁾}|` over `[−ν, ν]` for each block (coordinates share a law).
    pub fn noise_min_modulus(&self, nu: f64, points: usize) -> (f64, f64) {
        let m = |law: &Law, dim: usize| {
            (0..points)
                .map(|k| law.cf(-nu + 2.0 * nu * k as f64 / (points - 1) as f64).norm())
                .fold(f64::INFINITY, f64::min)
                .powi(dim as i32)
        };
        (m(&self.noise1, self.d1), m(&self.noise2, self.d2))
    }

    /// Density the reconstruction targets: that of `X` for the repeated and
    /// errors-in-variables models, that of `A S` for a square mixing.
    pub fn target_density(&self) -> Result<(usize, DensityFn)> {
        match &self.model {
            Model::Repeated(signal) | Model::Eiv { signal, .. } => {
                if let Signal::Product { dim, .. } = signal {
                    let s = signal.clone();
                    Ok((*dim, Arc::new(move |x: &[f64]| s.density(x).unwrap_or(0.0))))
                } else {
                    Err(Error::invalid("the signal has no Lebesgue density"))
                }
            }
            Model::Ica { mixing, sources } => {
                let inv = mixing
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::invalid("the mixing matrix is not invertible"))?;
                if sources.iter().any(|s| s.density(0.0).is_none()) {
                    return Err(Error::invalid("a point-mass source has no density"));
                }
                let det = mixing.determinant().abs();
                let sources = sources.clone();
                let d = mixing.nrows();
                Ok((
                    d,
                    Arc::new(move |u: &[f64]| {
                        (0..d)
                            .map(|j| {
                                let s: f64 = (0..d).map(|k| inv[(j, k)] * u[k]).sum();
                                sources[j].density(s).unwrap_or(0.0)
                            })
                            .product::<f64>()
                            / det
                    }),
                ))
            }
        }
    }

    /// Whether reconstruction uses the first-block slice of the estimated CF.
    pub fn target_is_first_block(&self) -> bool {
        !matches!(self.model, Model::Ica { .. })
    }
}

/// Result of the translation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub shift: Vec<f64>,
    pub aligned: f64,
    pub raw: f64,
}

/// Coordinatewise grid search for the shift `s` minimizing `‖f̂ − f⋆(· − s)‖`, two sweeps.
pub fn translation_align(
    estimate: &DensityGrid,
    truth: &(dyn Fn(&[f64]) -> f64 + Sync),
    shift_window: f64,
    step: f64,
) -> Result<Alignment> {
    if !(step > 0.0) {
        return Err(Error::config("shift_step", "must be positive"));
    }
    if !(shift_window >= step) {
        return Err(Error::config("shift_window", "must be at least the step"));
    }
    let d = estimate.lattice.dim();
    let err = |s: &[f64]| {
        let shifted = |x: &[f64]| {
            let y: Vec<f64> = x.iter().zip(s).map(|(x, s)| x - s).collect();
            truth(&y)
        };
        l2_distance_to(estimate, &shifted)
    };
    let raw = err(&vec![0.0; d]);
    let k = (shift_window / step).floor() as i64;
    let mut best = vec![0.0; d];
    let mut best_err = raw;
    for _ in 0..2 {
        for a in 0..d {
            let mut cand = best.clone();
            for j in -k..=k {
                cand[a] = j as f64 * step;
                let e = err(&cand);
                if e < best_err {
                    best_err = e;
                    best[a] = cand[a];
                }
            }
        }
    }
    Ok(Alignment {
        shift: best,
        aligned: best_err,
        raw,
    })
}

/// Named scenarios shipped with the command line.
pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let g = LawSpec::G { c: 3.0 };
    let spec = match name {
        "uniform_repeated_g" => ScenarioSpec {
            model: ModelSpec::Repeated {
                signal: SignalSpec::Uniform { dim: 1, half_width: 1.0 },
            },
            noise: NoiseSpec {
                first: g.clone(),
                second: g,
                centered: true,
            },
            declared: Some(UpsilonParams { kappa: 0.75, s: 2.0 }),
        },
        "point_mass_repeated" => ScenarioSpec {
            model: ModelSpec::Repeated {
                signal: SignalSpec::PointMass { at: vec![0.0] },
            },
            noise: NoiseSpec {
                first: LawSpec::PointMass { at: 0.0 },
                second: LawSpec::PointMass { at: 0.0 },
                centered: false,
            },
            declared: None,
        },
        "two_point_repeated_laplace" => ScenarioSpec {
            model: ModelSpec::Repeated {
                signal: SignalSpec::TwoPointDependent { points: vec![0.5] },
            },
            noise: NoiseSpec {
                first: LawSpec::Laplace { scale: 0.3 },
                second: LawSpec::Laplace { scale: 0.3 },
                centered: true,
            },
            declared: Some(UpsilonParams { kappa: 1.0, s: 1.0 }),
        },
        "uniform_eiv_gaussian" => ScenarioSpec {
            model: ModelSpec::Eiv {
                signal: SignalSpec::Uniform { dim: 1, half_width: 1.0 },
                map: EivMap::CubicPlusLinear,
            },
            noise: NoiseSpec {
                first: LawSpec::Gaussian { sd: 0.3 },
                second: LawSpec::Gaussian { sd: 0.3 },
                centered: true,
            },
            declared: None,
        },
        "uniform_ica_laplace" => ScenarioSpec {
            model: ModelSpec::Ica {
                mixing: vec![vec![1.0, 0.5], vec![0.3, 1.0]],
                d1: 1,
                sources: vec![LawSpec::Uniform { half_width: 1.0 }, LawSpec::Uniform { half_width: 1.0 }],
            },
            noise: NoiseSpec {
                first: LawSpec::Laplace { scale: 0.3 },
                second: LawSpec::Laplace { scale: 0.3 },
                centered: true,
            },
            declared: None,
        },
        other => return Err(Error::config("scenario", format!("unknown preset '{other}'"))),
    };
    Ok(spec)
}

pub const PRESETS: [&str; 5] = [
    "uniform_repeated_g",
    "point_mass_repeated",
    "two_point_repeated_laplace",
    "uniform_eiv_gaussian",
    "uniform_ica_laplace",
];
