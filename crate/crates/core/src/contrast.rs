//! Contrast functionals: empirical `M_n`, oracle `M(·; ν | R, Q)` and linearized `M^lin`.
//!
//! All three are quadratures of a squared modulus over the grid box. The empirical and
//! oracle versions share [`ContrastEvaluator`], which tabulates monomials on the grid
//! once so that repeated evaluations by the minimizer cost one pass over the nodes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::ecf::EcfTable;
use crate::error::{Error, Result};
use crate::multiindex::MultiIndexSet;
use crate::quadrature::QuadratureGrid;
use crate::spectral::Spectral;
use crate::taylor::TaylorPoly;

/// True signal CF and per-block noise CFs.
#[derive(Clone)]
pub struct OracleModel {
    pub phi_r: Arc<dyn Spectral>,
    pub phi_q1: Arc<dyn Spectral>,
    pub phi_q2: Arc<dyn Spectral>,
}

impl std::fmt::Debug for OracleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleModel")
            .field("d1", &self.phi_q1.dim())
            .field("d2", &self.phi_q2.dim())
            .finish()
    }
}

impl OracleModel {
    pub fn dims(&self) -> (usize, usize) {
        (self.phi_q1.dim(), self.phi_q2.dim())
    }

    /// CF of the observations, `Φ_R(t)·Φ_{Q₁}(t₁)·Φ_{Q₂}(t₂)`.
    pub fn observation_cf(&self, t: &[f64]) -> Complex64 {
        let d1 = self.phi_q1.dim();
        self.phi_r.value(t) * self.phi_q1.value(&t[..d1]) * self.phi_q2.value(&t[d1..])
    }

    /// Population counterpart of the empirical CF tables.
    pub fn population_table(&self, grid: &QuadratureGrid) -> EcfTable {
        EcfTable::from_fn(grid, 0, |t| self.observation_cf(t))
    }
}

/// Values of a function on the full grid and on the two block slices.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValues {
    pub full: Vec<Complex64>,
    pub first: Vec<Complex64>,
    pub second: Vec<Complex64>,
}

impl GridValues {
    pub fn of(phi: &dyn Spectral, grid: &QuadratureGrid) -> GridValues {
        let t = EcfTable::from_fn(grid, 0, |t| phi.value(t));
        GridValues {
            full: t.full,
            first: t.first,
            second: t.second,
        }
    }
}

fn check_table(ecf: &EcfTable, grid: &QuadratureGrid) -> Result<()> {
    if ecf.grid_id != grid.id() || ecf.full.len() != grid.len() {
        return Err(Error::invalid(format!(
            "ECF table computed on grid {} but contrast requested on {}",
            ecf.grid_id,
            grid.id()
        )));
    }
    Ok(())
}

fn block_weights(grid: &QuadratureGrid, p: usize) -> Vec<f64> {
    let mut t = vec![0.0; p.max(1)];
    (0..grid.count(p)).map(|k| grid.sub_node(p, k, &mut t[..p])).collect()
}

/// `Σ w |φ·E₁·E₂ − E·φ₁·φ₂|²` for tabulated values.
pub fn contrast_from_values(phi: &GridValues, ecf: &EcfTable, grid: &QuadratureGrid) -> Result<f64> {
    check_table(ecf, grid)?;
    let (d1, d2) = grid.dims();
    let w1 = block_weights(grid, d1);
    let w2 = block_weights(grid, d2);
    let n2 = w2.len();
    let mut acc = 0.0;
    for (i1, &wa) in w1.iter().enumerate() {
        for (i2, &wb) in w2.iter().enumerate() {
            let k = i1 * n2 + i2;
            let r = phi.full[k] * ecf.first[i1] * ecf.second[i2] - ecf.full[k] * phi.first[i1] * phi.second[i2];
            acc += wa * wb * r.norm_sqr();
        }
    }
    Ok(acc)
}

/// Quadrature of `M_n(φ)` for a polynomial candidate.
pub fn contrast_empirical(poly: &TaylorPoly, ecf: &EcfTable, grid: &QuadratureGrid) -> Result<f64> {
    let ev = ContrastEvaluator::new(grid, poly.index_set().clone(), poly.dims(), ecf)?;
    ev.value(poly.reals())
}

/// Quadrature of `M_n(φ)` for an arbitrary candidate function.
pub fn contrast_empirical_spectral(phi: &dyn Spectral, ecf: &EcfTable, grid: &QuadratureGrid) -> Result<f64> {
    contrast_from_values(&GridValues::of(phi, grid), ecf, grid)
}

/// Quadrature of `M(φ; ν | R, Q)` for a polynomial candidate.
pub fn contrast_oracle(poly: &TaylorPoly, model: &OracleModel, grid: &QuadratureGrid) -> Result<f64> {
    if model.dims() != grid.dims() || poly.dims() != grid.dims() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: poly.dim(),
        });
    }
    let table = model.population_table(grid);
    contrast_empirical(poly, &table, grid)
}

/// Quadrature of `M(φ; ν | R, Q)` written out with the noise weight `|Φ_{Q₁}Φ_{Q₂}|²`.
pub fn contrast_oracle_spectral(phi: &dyn Spectral, model: &OracleModel, grid: &QuadratureGrid) -> Result<f64> {
    if model.dims() != grid.dims() || phi.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: phi.dim(),
        });
    }
    let (d1, _) = grid.dims();
    let d = grid.dim();
    let mut t = vec![0.0; d];
    let mut acc = 0.0;
    for k in 0..grid.len() {
        let w = grid.node(k, &mut t);
        let mut t1 = t.clone();
        t1[d1..].iter_mut().for_each(|v| *v = 0.0);
        let mut t2 = t.clone();
        t2[..d1].iter_mut().for_each(|v| *v = 0.0);
        let r = phi.value(&t) * model.phi_r.value(&t1) * model.phi_r.value(&t2)
            - model.phi_r.value(&t) * phi.value(&t1) * phi.value(&t2);
        let q = model.phi_q1.value(&t[..d1]) * model.phi_q2.value(&t[d1..]);
        acc += w * r.norm_sqr() * q.norm_sqr();
    }
    Ok(acc)
}

/// Quadrature of `M^lin(h, φ; ν)`.
pub fn contrast_linearized(h: &dyn Spectral, phi: &dyn Spectral, grid: &QuadratureGrid) -> Result<f64> {
    if h.dim() != phi.dim() || h.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: h.dim(),
        });
    }
    let hv = GridValues::of(h, grid);
    let pv = GridValues::of(phi, grid);
    let (d1, d2) = grid.dims();
    let w1 = block_weights(grid, d1);
    let w2 = block_weights(grid, d2);
    let n2 = w2.len();
    let mut acc = 0.0;
    for (i1, &wa) in w1.iter().enumerate() {
        for (i2, &wb) in w2.iter().enumerate() {
            let k = i1 * n2 + i2;
            let r = hv.full[k] * pv.first[i1] * pv.second[i2]
                - pv.full[k] * hv.first[i1] * pv.second[i2]
                - pv.full[k] * pv.first[i1] * hv.second[i2];
            acc += wa * wb * r.norm_sqr();
        }
    }
    Ok(acc)
}

/// Monomial tables of one index set on one grid, bound to a target CF table.
///
/// Evaluates the contrast and its exact gradient with respect to the parity-reduced
/// real coefficients.
#[derive(Debug, Clone)]
pub struct ContrastEvaluator {
    set: Arc<MultiIndexSet>,
    n1: usize,
    n2: usize,
    w1: Vec<f64>,
    w2: Vec<f64>,
    /// `mono[j][k]`: monomial `j` at full-grid node `k`.
    mono: Vec<Vec<f64>>,
    /// Index positions supported on the first block and their slice monomials.
    first: Vec<(usize, Vec<f64>)>,
    second: Vec<(usize, Vec<f64>)>,
    odd: Vec<bool>,
    e_full: Vec<Complex64>,
    e_first: Vec<Complex64>,
    e_second: Vec<Complex64>,
}

impl ContrastEvaluator {
    pub fn new(
        grid: &QuadratureGrid,
        set: Arc<MultiIndexSet>,
        dims: (usize, usize),
        ecf: &EcfTable,
    ) -> Result<Self> {
        check_table(ecf, grid)?;
        if dims != grid.dims() || set.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: set.dim(),
            });
        }
        let (d1, d2) = dims;
        let d = d1 + d2;
        let w1 = block_weights(grid, d1);
        let w2 = block_weights(grid, d2);
        let mut t = vec![0.0; d];
        let nodes: Vec<Vec<f64>> = (0..grid.len())
            .map(|k| {
                grid.node(k, &mut t);
                t.clone()
            })
            .collect();
        let monomial = |entries: &[u32], x: &[f64]| -> f64 {
            entries
                .iter()
                .zip(x)
                .fold(1.0, |acc, (&e, &v)| acc * v.powi(e as i32))
        };
        let mono = set
            .indices()
            .iter()
            .map(|i| nodes.iter().map(|x| monomial(i.entries(), x)).collect())
            .collect();
        let block_nodes = |p: usize| -> Vec<Vec<f64>> {
            let mut x = vec![0.0; p];
            (0..grid.count(p))
                .map(|k| {
                    grid.sub_node(p, k, &mut x);
                    x.clone()
                })
                .collect()
        };
        let b1 = block_nodes(d1);
        let b2 = block_nodes(d2);
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (j, i) in set.indices().iter().enumerate() {
            if i.supported_on(0..d1) {
                first.push((j, b1.iter().map(|x| monomial(&i.entries()[..d1], x)).collect()));
            }
            if i.supported_on(d1..d) {
                second.push((j, b2.iter().map(|x| monomial(&i.entries()[d1..], x)).collect()));
            }
        }
        let odd = set.indices().iter().map(|i| i.order() % 2 == 1).collect();
        Ok(ContrastEvaluator {
            n1: w1.len(),
            n2: w2.len(),
            w1,
            w2,
            mono,
            first,
            second,
            odd,
            set,
            e_full: ecf.full.clone(),
            e_first: ecf.first.clone(),
            e_second: ecf.second.clone(),
        })
    }

    pub fn index_set(&self) -> &Arc<MultiIndexSet> {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    fn values(&self, reals: &[f64]) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        let mut re = vec![0.0; self.n1 * self.n2];
        let mut im = vec![0.0; self.n1 * self.n2];
        for (j, &r) in reals.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let target = if self.odd[j] { &mut im } else { &mut re };
            for (acc, m) in target.iter_mut().zip(&self.mono[j]) {
                *acc += r * m;
            }
        }
        let full = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
        let slice = |list: &[(usize, Vec<f64>)], len: usize| -> Vec<Complex64> {
            let mut re = vec![0.0; len];
            let mut im = vec![0.0; len];
            for (j, mono) in list {
                let r = reals[*j];
                if r == 0.0 {
                    continue;
                }
                let target = if self.odd[*j] { &mut im } else { &mut re };
                for (acc, m) in target.iter_mut().zip(mono) {
                    *acc += r * m;
                }
            }
            re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
        };
        (full, slice(&self.first, self.n1), slice(&self.second, self.n2))
    }

    fn check(&self, reals: &[f64]) -> Result<()> {
        if reals.len() != self.set.len() {
            return Err(Error::DimensionMismatch {
                expected: self.set.len(),
                got: reals.len(),
            });
        }
        Ok(())
    }

    /// Contrast value at the given coefficients.
    pub fn value(&self, reals: &[f64]) -> Result<f64> {
        self.check(reals)?;
        let (p, p1, p2) = self.values(reals);
        let mut acc = 0.0;
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let k = i1 * self.n2 + i2;
                let a = self.e_first[i1] * self.e_second[i2];
                let r = p[k] * a - self.e_full[k] * p1[i1] * p2[i2];
                let w = self.w1[i1] * self.w2[i2];
                acc += w * r.norm_sqr();
            }
        }
        Ok(acc)
    }

    /// Contrast value and gradient; the entry for the constant coefficient is zero.
    pub fn value_and_gradient(&self, reals: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(reals)?;
        let (p, p1, p2) = self.values(reals);
        let mut acc = 0.0;
        let mut v = vec![Complex64::new(0.0, 0.0); self.n1 * self.n2];
        let mut wa = vec![Complex64::new(0.0, 0.0); self.n1];
        let mut wb = vec![Complex64::new(0.0, 0.0); self.n2];
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let k = i1 * self.n2 + i2;
                let a = self.e_first[i1] * self.e_second[i2];
                let r = p[k] * a - self.e_full[k] * p1[i1] * p2[i2];
                let w = self.w1[i1] * self.w2[i2];
                acc += w * r.norm_sqr();
                let cr = r.conj() * w;
                v[k] = cr * a;
                let ce = cr * self.e_full[k];
                wa[i1] += ce * p2[i2];
                wb[i2] += ce * p1[i1];
            }
        }
        let re_unit = |odd: bool, z: Complex64| if odd { -z.im } else { z.re };
        let mut grad = vec![0.0; self.set.len()];
        for j in 1..self.set.len() {
            let odd = self.odd[j];
            let s: f64 = self.mono[j].iter().zip(&v).map(|(m, z)| m * re_unit(odd, *z)).sum();
            grad[j] = 2.0 * s;
        }
        for (j, mono) in &self.first {
            if *j == 0 {
                continue;
            }
            let s: f64 = mono.iter().zip(&wa).map(|(m, z)| m * re_unit(self.odd[*j], *z)).sum();
            grad[*j] -= 2.0 * s;
        }
        for (j, mono) in &self.second {
            if *j == 0 {
                continue;
            }
            let s: f64 = mono.iter().zip(&wb).map(|(m, z)| m * re_unit(self.odd[*j], *z)).sum();
            grad[*j] -= 2.0 * s;
        }
        Ok((acc, grad))
    }

    /// Weighted real residuals and their Jacobian with respect to the coefficients in `cols`.
    ///
    /// Residuals are `√w·Re r` followed by `√w·Im r`, so their squared norm is the contrast.
    pub fn residuals_and_jacobian(&self, reals: &[f64], cols: &[usize]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check(reals)?;
        let (p, p1, p2) = self.values(reals);
        let len = self.n1 * self.n2;
        let mut res = DVector::zeros(2 * len);
        let mut jac = DMatrix::zeros(2 * len, cols.len());
        let slot = |list: &[(usize, Vec<f64>)], j: usize| list.iter().find(|(i, _)| *i == j).map(|(_, m)| m.clone());
        let firsts: Vec<Option<Vec<f64>>> = cols.iter().map(|&j| slot(&self.first, j)).collect();
        let seconds: Vec<Option<Vec<f64>>> = cols.iter().map(|&j| slot(&self.second, j)).collect();
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let k = i1 * self.n2 + i2;
                let a = self.e_first[i1] * self.e_second[i2];
                let sw = (self.w1[i1] * self.w2[i2]).sqrt();
                let r = (p[k] * a - self.e_full[k] * p1[i1] * p2[i2]) * sw;
                res[k] = r.re;
                res[len + k] = r.im;
                for (c, &j) in cols.iter().enumerate() {
                    let mut dz = a * self.mono[j][k];
                    if let Some(m) = &firsts[c] {
                        dz -= self.e_full[k] * p2[i2] * m[i1];
                    }
                    if let Some(m) = &seconds[c] {
                        dz -= self.e_full[k] * p1[i1] * m[i2];
                    }
                    if self.odd[j] {
                        dz *= Complex64::new(0.0, 1.0);
                    }
                    dz *= sw;
                    jac[(k, c)] = dz.re;
                    jac[(len + k, c)] = dz.im;
                }
            }
        }
        Ok((res, jac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecf::{ecf_on_grid, SampleSet};
    use crate::multiindex::MultiIndex;
    use crate::quadrature::{make_grid, QuadRule};
    use crate::spectral::FnSpectral;
    use crate::taylor::UpsilonParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mixed(a: f64) -> TaylorPoly {
        TaylorPoly::from_complex(
            1,
            1,
            2,
            &[
                (MultiIndex::new(vec![0, 0]), Complex64::new(1.0, 0.0)),
                (MultiIndex::new(vec![1, 1]), Complex64::new(a, 0.0)),
            ],
            true,
        )
        .unwrap()
    }

    fn sinc(x: f64) -> f64 {
        if x.abs() < 1e-8 {
            1.0 - x * x / 6.0
        } else {
            x.sin() / x
        }
    }

    fn uniform_repeated_model(noise_scale: f64) -> OracleModel {
        OracleModel {
            phi_r: Arc::new(FnSpectral::new(2, |t| Complex64::new(sinc(t[0] + t[1]), 0.0))),
            phi_q1: Arc::new(FnSpectral::new(1, move |t| Complex64::new((-0.5 * (noise_scale * t[0]).powi(2)).exp(), 0.0))),
            phi_q2: Arc::new(FnSpectral::new(1, move |t| Complex64::new(sinc(noise_scale * t[0]), 0.0))),
        }
    }

    #[test]
    fn constant_one_on_degenerate_sample() {
        let g = make_grid(1.0, 8, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let s = SampleSet::new(1, 1, vec![0.0, 0.0]).unwrap();
        let tab = ecf_on_grid(&s, &g).unwrap();
        assert_eq!(contrast_empirical(&TaylorPoly::one(1, 1, 3), &tab, &g).unwrap(), 0.0);
    }

    #[test]
    fn ecf_itself_has_zero_contrast() {
        let g = make_grid(1.0, 10, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = SampleSet::new(1, 1, data).unwrap();
        let tab = ecf_on_grid(&s, &g).unwrap();
        let vals = GridValues {
            full: tab.full.clone(),
            first: tab.first.clone(),
            second: tab.second.clone(),
        };
        assert!(contrast_from_values(&vals, &tab, &g).unwrap() < 1e-30);
    }

    #[test]
    fn mixed_term_against_unit_ecf() {
        // φ̃ ≡ 1 and φ = 1 + t₁t₂ give the integrand t₁²t₂², integral (2/3)² on [−1,1]²
        let g = make_grid(1.0, 8, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let tab = EcfTable::from_fn(&g, 1, |_| Complex64::new(1.0, 0.0));
        let v = contrast_empirical(&mixed(1.0), &tab, &g).unwrap();
        assert!((v - 4.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let g = make_grid(1.0, 8, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let h = make_grid(1.0, 9, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let tab = EcfTable::from_fn(&g, 1, |_| Complex64::new(1.0, 0.0));
        assert!(contrast_empirical(&mixed(1.0), &tab, &h).is_err());
    }

    #[test]
    fn oracle_vanishes_at_truth_and_grows_quadratically() {
        let g = make_grid(1.0, 48, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let model = uniform_repeated_model(1.0);
        assert!(contrast_oracle_spectral(model.phi_r.as_ref(), &model, &g).unwrap() < 1e-10);
        let mut vals = Vec::new();
        let eps = [1e-1, 1e-2, 1e-3];
        for &e in &eps {
            let r = model.phi_r.clone();
            let phi = FnSpectral::new(2, move |t| r.value(t) + e * t[0] * t[1]);
            vals.push(contrast_oracle_spectral(&phi, &model, &g).unwrap());
        }
        assert!(vals.iter().all(|&v| v > 0.0));
        let slope = ((vals[2] / vals[0]).ln()) / ((eps[2] / eps[0]).ln());
        assert!((slope - 2.0).abs() < 1e-3, "slope {slope}");
    }

    #[test]
    fn oracle_with_point_mass_noise_matches_hand_loop() {
        let g = make_grid(1.0, 16, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let mut model = uniform_repeated_model(1.0);
        model.phi_q1 = Arc::new(FnSpectral::one(1));
        model.phi_q2 = Arc::new(FnSpectral::one(1));
        let p = mixed(0.3);
        let got = contrast_oracle(&p, &model, &g).unwrap();
        let mut hand = 0.0;
        for (t, w) in g.points() {
            let f = |x: f64, y: f64| Complex64::new(1.0 + 0.3 * x * y, 0.0);
            let r = |x: f64, y: f64| Complex64::new(sinc(x + y), 0.0);
            let z = f(t[0], t[1]) * r(t[0], 0.0) * r(0.0, t[1]) - r(t[0], t[1]) * f(t[0], 0.0) * f(0.0, t[1]);
            hand += w * z.norm_sqr();
        }
        assert!((got - hand).abs() < 1e-15 * hand.max(1.0));
        let spectral = contrast_oracle_spectral(&p, &model, &g).unwrap();
        assert!((spectral - hand).abs() < 1e-14 * hand.max(1.0));
    }

    #[test]
    fn oracle_polynomial_and_spectral_forms_agree() {
        let g = make_grid(1.0, 20, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let model = uniform_repeated_model(0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = TaylorPoly::random_member(1, 1, 4, &UpsilonParams::new(0.75, 2.0).unwrap(), &mut rng);
        let a = contrast_oracle(&p, &model, &g).unwrap();
        let b = contrast_oracle_spectral(&p, &model, &g).unwrap();
        assert!((a - b).abs() < 1e-12 * a.max(1e-12));
    }

    #[test]
    fn linearized_examples() {
        let nu = 1.3;
        let g = make_grid(nu, 8, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let zero = TaylorPoly::zero(1, 1, 2);
        let one = TaylorPoly::one(1, 1, 2);
        assert_eq!(contrast_linearized(&zero, &one, &g).unwrap(), 0.0);
        let a = 0.7;
        let h = TaylorPoly::from_complex(1, 1, 2, &[(MultiIndex::new(vec![1, 1]), Complex64::new(a, 0.0))], false).unwrap();
        let v = contrast_linearized(&h, &one, &g).unwrap();
        let exact = a * a * (2.0 * nu.powi(3) / 3.0).powi(2);
        assert!((v - exact).abs() < 1e-13 * exact);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pr = UpsilonParams::new(0.6, 1.5).unwrap();
        for _ in 0..100 {
            let h = TaylorPoly::random_member(1, 1, 3, &pr, &mut rng);
            let f = TaylorPoly::random_member(1, 1, 3, &pr, &mut rng);
            assert!(contrast_linearized(&h, &f, &g).unwrap() >= 0.0);
        }
    }

    #[test]
    fn monotone_in_box_size() {
        let model = uniform_repeated_model(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pr = UpsilonParams::new(0.75, 2.0).unwrap();
        for _ in 0..10 {
            let p = TaylorPoly::random_member(1, 1, 4, &pr, &mut rng);
            let small = contrast_oracle(&p, &model, &make_grid(0.5, 48, QuadRule::GaussLegendre, (1, 1)).unwrap()).unwrap();
            let big = contrast_oracle(&p, &model, &make_grid(1.0, 48, QuadRule::GaussLegendre, (1, 1)).unwrap()).unwrap();
            let big_fine = contrast_oracle(&p, &model, &make_grid(1.0, 96, QuadRule::GaussLegendre, (1, 1)).unwrap()).unwrap();
            let quad_err = (big - big_fine).abs();
            assert!(small <= big + quad_err + 1e-15);
        }
    }

    #[test]
    fn refinement_converges() {
        let model = uniform_repeated_model(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pr = UpsilonParams::new(0.75, 2.0).unwrap();
        let p = TaylorPoly::random_member(1, 1, 4, &pr, &mut rng);
        for q in [32usize, 48, 64] {
            let a = contrast_oracle(&p, &model, &make_grid(1.0, q, QuadRule::GaussLegendre, (1, 1)).unwrap()).unwrap();
            let b = contrast_oracle(&p, &model, &make_grid(1.0, 2 * q, QuadRule::GaussLegendre, (1, 1)).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-8, "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn trapezoid_agrees_with_gauss_on_refinement() {
        let model = uniform_repeated_model(1.0);
        let p = mixed(0.4);
        let gl = contrast_oracle(&p, &model, &make_grid(1.0, 48, QuadRule::GaussLegendre, (1, 1)).unwrap()).unwrap();
        let tr = contrast_oracle(&p, &model, &make_grid(1.0, 801, QuadRule::Trapezoid, (1, 1)).unwrap()).unwrap();
        assert!((gl - tr).abs() < 1e-5 * gl);
    }

    #[test]
    fn jacobian_matches_gradient_and_residual_norm() {
        let g = make_grid(1.0, 10, QuadRule::GaussLegendre, (1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tab = ecf_on_grid(&SampleSet::new(1, 1, data).unwrap(), &g).unwrap();
        let pr = UpsilonParams::new(0.75, 2.0).unwrap();
        for _ in 0..5 {
            let p = TaylorPoly::random_member(1, 1, 4, &pr, &mut rng);
            let ev = ContrastEvaluator::new(&g, p.index_set().clone(), (1, 1), &tab).unwrap();
            let cols: Vec<usize> = (1..p.len()).collect();
            let (r, j) = ev.residuals_and_jacobian(p.reals(), &cols).unwrap();
            let (v, grad) = ev.value_and_gradient(p.reals()).unwrap();
            assert!((r.norm_squared() - v).abs() < 1e-12 * v.max(1e-300));
            let jg = j.tr_mul(&r) * 2.0;
            for (c, &k) in cols.iter().enumerate() {
                assert!((jg[c] - grad[k]).abs() < 1e-10 * (1.0 + grad[k].abs()), "coef {k}");
            }
        }
    }
}
