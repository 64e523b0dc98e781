//! Noise law with compactly supported characteristic function.
//!
//! Density `c_g (1 + cos cx) / (π² − (cx)²)²`, CF
//! `[(1 − |t/c|) cos(πt/c) + sin(π|t/c|)/π] 1_{|t| ≤ c}`, variance `π²/c²`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::spectral::Spectral;

const TABLE_POINTS: usize = 1 << 16;
const TABLE_HALF_WIDTH: f64 = 200.0;

#[derive(Debug, Clone)]
pub struct GNoise {
    c: f64,
    c_g: f64,
    table_x: Vec<f64>,
    table_cdf: Vec<f64>,
}

impl GNoise {
    pub fn new(c: f64) -> Result<GNoise> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::config("c", format!("must be positive, got {c}")));
        }
        // g(0) = (2π)^{-1} ∫ CF = 4c/π³ fixes the constant
        let c_g = 2.0 * PI * c;
        let mut g = GNoise {
            c,
            c_g,
            table_x: Vec::new(),
            table_cdf: Vec::new(),
        };
        g.build_table();
        Ok(g)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn c_g(&self) -> f64 {
        self.c_g
    }

    pub fn variance(&self) -> f64 {
        PI * PI / (self.c * self.c)
    }

    pub fn density(&self, x: f64) -> f64 {
        // with δ = |cx| − π the ratio becomes a squared sinc, free of the removable singularity
        let delta = (self.c * x).abs() - PI;
        let h = 0.5 * delta;
        let sinc = if h.abs() < 1e-4 {
            1.0 - h * h / 6.0 + h.powi(4) / 120.0
        } else {
            h.sin() / h
        };
        self.c_g * sinc * sinc / (2.0 * (2.0 * PI + delta).powi(2))
    }

    pub fn cf(&self, t: f64) -> f64 {
        let s = (t / self.c).abs();
        if s >= 1.0 {
            return 0.0;
        }
        (1.0 - s) * (PI * s).cos() + (PI * s).sin() / PI
    }

    fn build_table(&mut self) {
        let half = TABLE_HALF_WIDTH / self.c;
        let n = TABLE_POINTS;
        let step = 2.0 * half / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|k| -half + step * k as f64).collect();
        let mut cdf = vec![0.0; n];
        for k in 1..n {
            let mid = self.density(0.5 * (x[k - 1] + x[k]));
            let area = step / 6.0 * (self.density(x[k - 1]) + 4.0 * mid + self.density(x[k]));
            cdf[k] = cdf[k - 1] + area;
        }
        let total = cdf[n - 1];
        cdf.iter_mut().for_each(|v| *v /= total);
        self.table_x = x;
        self.table_cdf = cdf;
    }

    /// Tabulated CDF used by the sampler.
    pub fn table_cdf(&self, x: f64) -> f64 {
        let xs = &self.table_x;
        if x <= xs[0] {
            return 0.0;
        }
        if x >= xs[xs.len() - 1] {
            return 1.0;
        }
        let k = xs.partition_point(|&v| v <= x) - 1;
        let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
        self.table_cdf[k] + w * (self.table_cdf[k + 1] - self.table_cdf[k])
    }

    /// Inverse-CDF draw with linear interpolation in the table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let cdf = &self.table_cdf;
        let k = cdf.partition_point(|&v| v < u).clamp(1, cdf.len() - 1);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.table_x[k - 1] + w * (self.table_x[k] - self.table_x[k - 1])
    }
}

impl Spectral for GNoise {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, t: &[f64]) -> Complex64 {
        Complex64::new(self.cf(t[0]), 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite_gauss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cf_endpoints() {
        let g = GNoise::new(2.0).unwrap();
        assert_eq!(g.cf(0.0), 1.0);
        assert!(g.cf(2.0).abs() < 1e-15 && g.cf(-2.0).abs() < 1e-15);
        let s = 0.3f64;
        let closed = (1.0 - s) * (PI * s).cos() + (PI * s).sin() / PI;
        assert!((g.cf(0.3 * 2.0) - closed).abs() < 1e-14);
    }

    #[test]
    fn density_is_normalized_and_smooth_at_singularity() {
        for &c in &[0.5, 1.0, 3.0] {
            let g = GNoise::new(c).unwrap();
            let r = 4000.0 / c;
            let (x, w) = composite_gauss(-r, r, 8000, 8);
            let total: f64 = x.iter().zip(&w).map(|(x, w)| g.density(*x) * w).sum();
            // tail beyond r is below 1e-9
            assert!((total - 1.0).abs() < 1e-8, "c={c}: {total}");
            let var: f64 = x.iter().zip(&w).map(|(x, w)| x * x * g.density(*x) * w).sum();
            assert!((var - g.variance()).abs() < 2e-3 * g.variance());
            let p = PI / c;
            let direct = |x: f64| g.c_g * (1.0 + (c * x).cos()) / (PI * PI - (c * x).powi(2)).powi(2);
            for &dx in &[1e-3, 1e-2, 0.1] {
                assert!((g.density(p + dx) - direct(p + dx)).abs() < 1e-9 * direct(p + dx).max(1e-3));
            }
            assert!((g.density(p) - g.density(p + 1e-9)).abs() < 1e-9);
        }
    }

    #[test]
    fn density_and_cf_are_a_fourier_pair() {
        let g = GNoise::new(1.5).unwrap();
        let (t, w) = composite_gauss(-1.5, 1.5, 2, 40);
        for &x in &[0.0, 0.7, 2.0, PI / 1.5, 5.0] {
            let inv: f64 = t.iter().zip(&w).map(|(t, w)| (t * x).cos() * g.cf(*t) * w).sum::<f64>() / (2.0 * PI);
            assert!((inv - g.density(x)).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn sampler_matches_table() {
        let g = GNoise::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let f = g.table_cdf(*x);
                (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "{ks}");
    }
}
