//! Normalized Legendre polynomials on `[−ν, ν]` and the monomial change-of-basis matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::multiindex::{binomial, MultiIndexSet};

/// `(i+1/2)^{1/2} ν^{−1/2} P_i(x/ν)` by the three-term recurrence, with an in-domain flag.
pub fn legendre_eval(i: u32, nu: f64, x: f64) -> (f64, bool) {
    let in_domain = x.abs() <= nu;
    let y = x / nu;
    let (mut p0, mut p1) = (1.0, y);
    let p = if i == 0 {
        1.0
    } else {
        for k in 1..i {
            let k = f64::from(k);
            let p2 = ((2.0 * k + 1.0) * y * p1 - k * p0) / (k + 1.0);
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    ((f64::from(i) + 0.5).sqrt() / nu.sqrt() * p, in_domain)
}

/// Monomial coefficient of `x^{i−2k}` in the normalized Legendre polynomial of index `i`.
fn legendre_coefficient(i: u32, k: u32, nu: f64) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let j = i - 2 * k;
    (f64::from(i) + 0.5).sqrt() / nu.sqrt()
        * sign
        * binomial(i, k)
        * binomial(2 * i - 2 * k, i)
        * 0.5f64.powi(i as i32)
        * nu.powi(-(j as i32))
}

/// Normalized Legendre polynomials `0..=max_index` on `[−ν, ν]` in the monomial basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreBasis {
    nu: f64,
    coeffs: Vec<Vec<f64>>,
}

impl LegendreBasis {
    pub fn new(nu: f64, max_index: u32) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::config("nu", format!("must be positive, got {nu}")));
        }
        let coeffs = (0..=max_index)
            .map(|i| {
                let mut c = vec![0.0; i as usize + 1];
                for k in 0..=i / 2 {
                    c[(i - 2 * k) as usize] = legendre_coefficient(i, k, nu);
                }
                c
            })
            .collect();
        Ok(LegendreBasis { nu, coeffs })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn max_index(&self) -> u32 {
        self.coeffs.len() as u32 - 1
    }

    /// Monomial coefficients of the polynomial of index `i`, lowest power first.
    pub fn coefficients(&self, i: u32) -> &[f64] {
        &self.coeffs[i as usize]
    }

    /// Horner evaluation of the monomial form.
    pub fn eval(&self, i: u32, x: f64) -> f64 {
        self.coeffs[i as usize].iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// The matrix `B` with `P^norm_i = Σ_j B_{i,j} X^j` over multi-indices of order at most `m`.
#[derive(Debug, Clone)]
pub struct ChangeOfBasis {
    pub set: MultiIndexSet,
    pub nu: f64,
    pub matrix: DMatrix<f64>,
}

pub fn change_of_basis(m: u32, nu: f64, d: usize) -> Result<ChangeOfBasis> {
    if d == 0 {
        return Err(Error::invalid("change_of_basis needs d >= 1"));
    }
    if !(nu > 0.0) {
        return Err(Error::config("nu", format!("must be positive, got {nu}")));
    }
    let set = MultiIndexSet::new(d, m);
    let n = set.len();
    let mut matrix = DMatrix::zeros(n, n);
    for r in 0..n {
        let i = set.get(r).entries();
        for c in 0..n {
            let j = set.get(c).entries();
            let mut v = 1.0;
            for a in 0..d {
                if j[a] > i[a] || (i[a] - j[a]) % 2 == 1 {
                    v = 0.0;
                    break;
                }
                v *= legendre_coefficient(i[a], (i[a] - j[a]) / 2, nu);
            }
            matrix[(r, c)] = v;
        }
    }
    Ok(ChangeOfBasis { set, nu, matrix })
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn sigma_max_power(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    let mtm = m.transpose() * m;
    let mut v = DVector::from_fn(n, |k, _| 1.0 + 0.01 * k as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = &mtm * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / nw;
        if (next - lambda).abs() <= tol * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_order_values() {
        for &x in &[-0.9, 0.0, 0.3] {
            assert!((legendre_eval(0, 1.0, x).0 - 0.5f64.sqrt()).abs() < 1e-15);
        }
        assert!((legendre_eval(1, 1.0, 1.0).0 - 1.5f64.sqrt()).abs() < 1e-15);
        assert!(!legendre_eval(2, 1.0, 1.5).1);
    }

    #[test]
    fn gram_is_identity() {
        let (t, w) = gauss_legendre(64);
        for &nu in &[0.5, 1.0, 2.0] {
            for i in 0..=12 {
                for j in 0..=12 {
                    let g: f64 = t
                        .iter()
                        .zip(&w)
                        .map(|(t, w)| w * nu * legendre_eval(i, nu, nu * t).0 * legendre_eval(j, nu, nu * t).0)
                        .sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((g - target).abs() < 1e-10, "nu={nu} ({i},{j}) {g}");
                }
            }
        }
    }

    #[test]
    fn monomial_form_matches_recurrence() {
        let b = LegendreBasis::new(0.7, 12).unwrap();
        for i in 0..=12 {
            for &x in &[-0.7, -0.2, 0.05, 0.6] {
                assert!((b.eval(i, x) - legendre_eval(i, 0.7, x).0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn change_of_basis_entries() {
        let nu = 0.8;
        let b = change_of_basis(3, nu, 1).unwrap();
        assert!((b.matrix[(1, 1)] - 1.5f64.sqrt() * nu.powf(-1.5)).abs() < 1e-14);
        assert!((b.matrix[(0, 0)] - (1.0 / (2.0 * nu)).sqrt()).abs() < 1e-14);
        let b2 = change_of_basis(4, nu, 2).unwrap();
        for r in 0..b2.set.len() {
            for c in 0..b2.set.len() {
                let (i, j) = (b2.set.get(r).entries(), b2.set.get(c).entries());
                let structural_zero = i.iter().zip(j).any(|(a, b)| b > a || (a - b) % 2 == 1);
                assert_eq!(b2.matrix[(r, c)] == 0.0, structural_zero);
            }
        }
    }

    #[test]
    fn change_of_basis_reproduces_products() {
        let nu = 1.3;
        let b = change_of_basis(3, nu, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let x = [rng.random_range(-nu..nu), rng.random_range(-nu..nu)];
            for r in 0..b.set.len() {
                let i = b.set.get(r).entries();
                let direct = legendre_eval(i[0], nu, x[0]).0 * legendre_eval(i[1], nu, x[1]).0;
                let via: f64 = (0..b.set.len())
                    .map(|c| {
                        let j = b.set.get(c).entries();
                        b.matrix[(r, c)] * x[0].powi(j[0] as i32) * x[1].powi(j[1] as i32)
                    })
                    .sum();
                assert!((direct - via).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn power_iteration_matches_svd() {
        for &(m, nu, d) in &[(2, 1.0, 1), (6, 0.5, 2), (5, 1.0, 2), (4, 2.0, 1)] {
            let b = change_of_basis(m, nu, d).unwrap();
            let p = sigma_max_power(&b.matrix, 10_000, 1e-15);
            let s = b.matrix.clone().svd(false, false).singular_values.max();
            assert!((p - s).abs() < 1e-8 * s, "{p} vs {s}");
        }
        let b = change_of_basis(2, 1.0, 1).unwrap();
        assert!(sigma_max_power(&b.matrix, 10_000, 1e-15) <= 32.0);
    }
}
