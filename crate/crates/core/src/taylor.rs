//! Truncated multivariate Taylor polynomials with Hermitian parity.
//!
//! A coefficient of odd total degree is purely imaginary and one of even degree is
//! real, so one real number per multi-index is stored and read as `r` or `i·r`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{MultiIndex, MultiIndexSet};
use crate::spectral::Spectral;

/// Parameters `(κ, S)` of the coefficient class `Υ_{κ,S}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsilonParams {
    pub kappa: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

impl UpsilonParams {
    pub fn new(kappa: f64, s: f64) -> Result<Self> {
        let p = UpsilonParams { kappa, s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::config("kappa", format!("must lie in (0, 1], got {}", self.kappa)));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::config("S", format!("must be positive, got {}", self.s)));
        }
        Ok(())
    }

    /// Coefficient bound for total degree `k ≥ 1`: `S^k k^{−κk}`.
    pub fn bound_for_order(&self, k: u32) -> f64 {
        let k = f64::from(k);
        (k * self.s.ln() - self.kappa * k * k.ln()).exp()
    }
}

/// Coefficient bound `S^{‖i‖₁} ‖i‖₁^{−κ‖i‖₁}` of a nonzero multi-index.
pub fn upsilon_bound(i: &MultiIndex, params: &UpsilonParams) -> Result<f64> {
    if i.is_zero() {
        return Err(Error::invalid("upsilon_bound is defined only for nonzero multi-indices"));
    }
    Ok(params.bound_for_order(i.order()))
}

/// Which block of variables a slice keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    First,
    Second,
}

/// `i^{order}`: the unit that multiplies the stored real of an index of this order.
#[inline]
pub fn parity_unit(order: u32) -> Complex64 {
    match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

#[inline]
fn parity_basis(order: u32) -> Complex64 {
    if order.is_multiple_of(2) {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct TaylorPoly {
    d1: usize,
    d2: usize,
    set: Arc<MultiIndexSet>,
    /// Real parameter per index: the coefficient is `r` (even order) or `i·r` (odd order).
    coeffs: Vec<f64>,
    cf_candidate: bool,
}

impl PartialEq for TaylorPoly {
    fn eq(&self, other: &Self) -> bool {
        self.d1 == other.d1
            && self.d2 == other.d2
            && self.set.max_degree() == other.set.max_degree()
            && self.coeffs == other.coeffs
            && self.cf_candidate == other.cf_candidate
    }
}

impl TaylorPoly {
    /// The zero polynomial.
    pub fn zero(d1: usize, d2: usize, max_degree: u32) -> Self {
        let set = Arc::new(MultiIndexSet::new(d1 + d2, max_degree));
        let coeffs = vec![0.0; set.len()];
        TaylorPoly {
            d1,
            d2,
            set,
            coeffs,
            cf_candidate: false,
        }
    }

    /// The constant 1, flagged as a characteristic-function candidate.
    pub fn one(d1: usize, d2: usize, max_degree: u32) -> Self {
        let mut p = TaylorPoly::zero(d1, d2, max_degree);
        p.coeffs[0] = 1.0;
        p.cf_candidate = true;
        p
    }

    /// Builds a polynomial from the parity-reduced real parameters in enumeration order.
    pub fn from_reals(d1: usize, d2: usize, max_degree: u32, reals: Vec<f64>, cf_candidate: bool) -> Result<Self> {
        let set = Arc::new(MultiIndexSet::new(d1 + d2, max_degree));
        Self::with_set(d1, d2, set, reals, cf_candidate)
    }

    pub(crate) fn with_set(
        d1: usize,
        d2: usize,
        set: Arc<MultiIndexSet>,
        reals: Vec<f64>,
        cf_candidate: bool,
    ) -> Result<Self> {
        if set.dim() != d1 + d2 {
            return Err(Error::DimensionMismatch {
                expected: d1 + d2,
                got: set.dim(),
            });
        }
        if reals.len() != set.len() {
            return Err(Error::DimensionMismatch {
                expected: set.len(),
                got: reals.len(),
            });
        }
        if reals.iter().any(|r| !r.is_finite()) {
            return Err(Error::numerical("non-finite polynomial coefficient"));
        }
        if cf_candidate && reals[0] != 1.0 {
            return Err(Error::invalid("characteristic-function candidate must have c_0 = 1"));
        }
        Ok(TaylorPoly {
            d1,
            d2,
            set,
            coeffs: reals,
            cf_candidate,
        })
    }

    /// Builds a polynomial from complex coefficients, rejecting parity violations above `1e-12`.
    pub fn from_complex(
        d1: usize,
        d2: usize,
        max_degree: u32,
        terms: &[(MultiIndex, Complex64)],
        cf_candidate: bool,
    ) -> Result<Self> {
        let set = Arc::new(MultiIndexSet::new(d1 + d2, max_degree));
        let mut reals = vec![0.0; set.len()];
        for (index, c) in terms {
            let k = set.position(index).ok_or_else(|| {
                Error::invalid(format!("multi-index {:?} outside degree {max_degree}", index.entries()))
            })?;
            let (keep, drop) = if index.order() % 2 == 0 { (c.re, c.im) } else { (c.im, c.re) };
            if drop.abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "coefficient of {:?} violates Hermitian parity",
                    index.entries()
                )));
            }
            reals[k] = keep;
        }
        Self::with_set(d1, d2, set, reals, cf_candidate)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn max_degree(&self) -> u32 {
        self.set.max_degree()
    }

    pub fn index_set(&self) -> &Arc<MultiIndexSet> {
        &self.set
    }

    pub fn is_cf_candidate(&self) -> bool {
        self.cf_candidate
    }

    /// Parity-reduced real parameters in enumeration order.
    pub fn reals(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Complex coefficient of the `k`-th index.
    pub fn coeff(&self, k: usize) -> Complex64 {
        parity_basis(self.set.get(k).order()) * self.coeffs[k]
    }

    pub fn coeff_of(&self, index: &MultiIndex) -> Option<Complex64> {
        self.set.position(index).map(|k| self.coeff(k))
    }

    /// `Σ_i c_i t^i`.
    pub fn evaluate(&self, t: &[f64]) -> Result<Complex64> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: t.len(),
            });
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: &[f64]) -> Complex64 {
        let m = self.max_degree() as usize;
        let d = self.dim();
        let mut powers = vec![1.0; d * (m + 1)];
        for a in 0..d {
            for k in 1..=m {
                powers[a * (m + 1) + k] = powers[a * (m + 1) + k - 1] * t[a];
            }
        }
        let mut even = 0.0;
        let mut odd = 0.0;
        for (index, &r) in self.set.indices().iter().zip(&self.coeffs) {
            if r == 0.0 {
                continue;
            }
            let mut mono = r;
            for (a, &e) in index.entries().iter().enumerate() {
                mono *= powers[a * (m + 1) + e as usize];
            }
            if index.order() % 2 == 0 {
                even += mono;
            } else {
                odd += mono;
            }
        }
        Complex64::new(even, odd)
    }

    /// Projection onto `Υ_{κ,S}`: `c_0 = 1` and every other modulus clamped to its bound.
    pub fn project_upsilon(&self, params: &UpsilonParams) -> TaylorPoly {
        let mut out = self.clone();
        out.coeffs[0] = 1.0;
        out.cf_candidate = true;
        for k in 1..out.coeffs.len() {
            let b = params.bound_for_order(out.set.get(k).order());
            out.coeffs[k] = out.coeffs[k].clamp(-b, b);
        }
        out
    }

    /// True when the polynomial satisfies every coefficient check of `Υ_{κ,S}`.
    pub fn in_upsilon(&self, params: &UpsilonParams) -> bool {
        self.coeffs[0] == 1.0
            && (1..self.coeffs.len())
                .all(|k| self.coeffs[k].abs() <= params.bound_for_order(self.set.get(k).order()))
    }

    /// `T_m`: drops every coefficient of total degree above `m`.
    pub fn truncate(&self, m: u32) -> TaylorPoly {
        if m >= self.max_degree() {
            return self.clone();
        }
        let set = Arc::new(MultiIndexSet::new(self.dim(), m));
        let coeffs = self.coeffs[..set.len()].to_vec();
        TaylorPoly {
            d1: self.d1,
            d2: self.d2,
            set,
            coeffs,
            cf_candidate: self.cf_candidate,
        }
    }

    /// Zero-extends the polynomial to a larger maximal degree.
    pub fn extend(&self, max_degree: u32) -> TaylorPoly {
        if max_degree <= self.max_degree() {
            return self.clone();
        }
        let set = Arc::new(MultiIndexSet::new(self.dim(), max_degree));
        let mut coeffs = vec![0.0; set.len()];
        coeffs[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        TaylorPoly {
            d1: self.d1,
            d2: self.d2,
            set,
            coeffs,
            cf_candidate: self.cf_candidate,
        }
    }

    /// The polynomial in one block's variables obtained by setting the other block to zero.
    pub fn slice(&self, block: Block) -> Result<TaylorPoly> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::invalid("slice needs two nonempty blocks"));
        }
        let (range, db) = match block {
            Block::First => (0..self.d1, self.d1),
            Block::Second => (self.d1..self.d1 + self.d2, self.d2),
        };
        let set = Arc::new(MultiIndexSet::new(db, self.max_degree()));
        let mut coeffs = vec![0.0; set.len()];
        for (k, index) in self.set.indices().iter().enumerate() {
            if index.supported_on(range.clone()) {
                let sub = MultiIndex::new(index.entries()[range.clone()].to_vec());
                let pos = set.position(&sub).expect("sub-index within degree");
                coeffs[pos] = self.coeffs[k];
            }
        }
        Ok(TaylorPoly {
            d1: db,
            d2: 0,
            set,
            coeffs,
            cf_candidate: self.cf_candidate,
        })
    }

    /// Draws a member of `Υ_{κ,S}` with coefficients uniform on `[−bound, bound]`.
    pub fn random_member<R: Rng + ?Sized>(
        d1: usize,
        d2: usize,
        max_degree: u32,
        params: &UpsilonParams,
        rng: &mut R,
    ) -> TaylorPoly {
        let mut p = TaylorPoly::one(d1, d2, max_degree);
        for k in 1..p.coeffs.len() {
            let b = params.bound_for_order(p.set.get(k).order());
            p.coeffs[k] = rng.random_range(-b..=b);
        }
        p
    }

    pub fn to_record(&self) -> PolyRecord {
        let coeffs = self
            .set
            .indices()
            .iter()
            .enumerate()
            .filter(|(k, _)| self.coeffs[*k] != 0.0)
            .map(|(k, index)| {
                let c = self.coeff(k);
                (index.entries().to_vec(), c.re, c.im)
            })
            .collect();
        PolyRecord {
            dims: [self.d1, self.d2],
            max_degree: self.max_degree(),
            cf_candidate: self.cf_candidate,
            coeffs,
        }
    }

    pub fn from_record(rec: &PolyRecord) -> Result<TaylorPoly> {
        let d = rec.dims[0] + rec.dims[1];
        let mut terms = Vec::with_capacity(rec.coeffs.len());
        for (entries, re, im) in &rec.coeffs {
            if entries.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: entries.len(),
                });
            }
            terms.push((MultiIndex::new(entries.clone()), Complex64::new(*re, *im)));
        }
        TaylorPoly::from_complex(rec.dims[0], rec.dims[1], rec.max_degree, &terms, rec.cf_candidate)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<TaylorPoly> {
        let rec: PolyRecord = serde_json::from_str(s)?;
        TaylorPoly::from_record(&rec)
    }
}

impl Spectral for TaylorPoly {
    fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    fn value(&self, t: &[f64]) -> Complex64 {
        self.eval_unchecked(t)
    }
}

/// JSON form of a [`TaylorPoly`]: nonzero coefficients as `[index, re, im]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyRecord {
    pub dims: [usize; 2],
    pub max_degree: u32,
    #[serde(default)]
    pub cf_candidate: bool,
    pub coeffs: Vec<(Vec<u32>, f64, f64)>,
}
