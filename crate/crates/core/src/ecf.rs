//! Empirical characteristic function of the observations.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::quadrature::QuadratureGrid;

/// Observations `Y_ℓ = (Y_ℓ^{(1)}, Y_ℓ^{(2)})`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    d1: usize,
    d2: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(d1: usize, d2: usize, data: Vec<f64>) -> Result<Self> {
        let d = d1 + d2;
        if d == 0 {
            return Err(Error::invalid("sample dimension must be positive"));
        }
        if data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "sample data length {} is not a positive multiple of d = {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample entry at row {}", pos / d)));
        }
        Ok(SampleSet { d1, d2, data })
    }

    pub fn from_rows(d1: usize, d2: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let d = d1 + d2;
        let mut data = Vec::with_capacity(rows.len() * d);
        for (k, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::invalid(format!("row {k} has {} entries, expected {d}", r.len())));
            }
            data.extend_from_slice(r);
        }
        SampleSet::new(d1, d2, data)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.data[k * d..(k + 1) * d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, a: usize) -> Vec<f64> {
        (0..self.n()).map(|k| self.row(k)[a]).collect()
    }

    /// Rows `range` as a new sample set.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Result<SampleSet> {
        let d = self.dim();
        SampleSet::new(self.d1, self.d2, self.data[range.start * d..range.end * d].to_vec())
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.n();
        (0..self.dim())
            .map(|a| blocked_sum_real(n, |k| self.row(k)[a]) / n as f64)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (1..=self.dim()).map(|a| format!("y{a}")).collect();
        w.write_record(&header)?;
        for k in 0..self.n() {
            w.write_record(self.row(k).iter().map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, d1: usize, d2: usize) -> Result<SampleSet> {
        let mut r = csv::Reader::from_path(path)?;
        let d = d1 + d2;
        let header = r.headers()?.clone();
        let expected: Vec<String> = (1..=d).map(|a| format!("y{a}")).collect();
        if header.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::invalid(format!(
                "sample CSV header {:?} does not match {:?}",
                header, expected
            )));
        }
        let mut data = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("unparseable sample value `{field}`")))?;
                data.push(v);
            }
        }
        SampleSet::new(d1, d2, data)
    }
}

const BLOCK: usize = 256;

/// Sum of `f(0..n)`: plain summation inside blocks of 256 terms, pairwise across blocks.
pub fn blocked_sum(n: usize, mut f: impl FnMut(usize) -> Complex64) -> Complex64 {
    let mut partial = Vec::with_capacity(n.div_ceil(BLOCK));
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in start..end {
            acc += f(k);
        }
        partial.push(acc);
        start = end;
    }
    pairwise(&partial)
}

fn pairwise(v: &[Complex64]) -> Complex64 {
    match v.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => v[0],
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise(a) + pairwise(b)
        }
    }
}

/// Real counterpart of [`blocked_sum`].
pub fn blocked_sum_real(n: usize, mut f: impl FnMut(usize) -> f64) -> f64 {
    blocked_sum(n, |k| Complex64::new(f(k), 0.0)).re
}

/// `(1/n) Σ_ℓ exp(i tᵀY_ℓ)`.
pub fn ecf_eval(samples: &SampleSet, t: &[f64]) -> Result<Complex64> {
    if t.len() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: t.len(),
        });
    }
    let n = samples.n();
    let s = blocked_sum(n, |k| {
        let y = samples.row(k);
        let mut z = Complex64::cis(t[0] * y[0]);
        for a in 1..t.len() {
            z *= Complex64::cis(t[a] * y[a]);
        }
        z
    });
    Ok(s / n as f64)
}

/// Empirical CF on a quadrature grid: full grid plus the two block slices.
#[derive(Debug, Clone, PartialEq)]
pub struct EcfTable {
    pub grid_id: String,
    pub n: usize,
    /// `φ̃_n(t₁, t₂)` on the full grid.
    pub full: Vec<Complex64>,
    /// `φ̃_n(t₁, 0)` on the first-block grid.
    pub first: Vec<Complex64>,
    /// `φ̃_n(0, t₂)` on the second-block grid.
    pub second: Vec<Complex64>,
}

impl EcfTable {
    /// Tables filled from an arbitrary evaluator, e.g. a true characteristic function.
    pub fn from_fn(grid: &QuadratureGrid, n: usize, f: impl Fn(&[f64]) -> Complex64 + Sync) -> EcfTable {
        let (d1, d2) = grid.dims();
        let d = d1 + d2;
        let full = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let mut t = vec![0.0; d];
                grid.node(k, &mut t);
                f(&t)
            })
            .collect();
        let first = (0..grid.block_len(true))
            .map(|k| {
                let mut t = vec![0.0; d];
                grid.sub_node(d1, k, &mut t[..d1]);
                f(&t)
            })
            .collect();
        let second = (0..grid.block_len(false))
            .map(|k| {
                let mut t = vec![0.0; d];
                grid.sub_node(d2, k, &mut t[d1..]);
                f(&t)
            })
            .collect();
        EcfTable {
            grid_id: grid.id(),
            n,
            full,
            first,
            second,
        }
    }
}

/// Evaluates the empirical CF at every node of `grid` and on both block slices.
///
/// Per-axis exponentials are tabulated once and multiplied in axis order, which
/// reproduces [`ecf_eval`] at each node bit for bit.
pub fn ecf_on_grid(samples: &SampleSet, grid: &QuadratureGrid) -> Result<EcfTable> {
    if grid.dims() != samples.dims() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: grid.dim(),
        });
    }
    let (d1, d2) = grid.dims();
    let d = d1 + d2;
    let n = samples.n();
    let nodes = grid.axis_nodes();
    let q = nodes.len();
    // tables[a][j][ℓ] = exp(i·node_j·Y_{ℓ,a})
    let tables: Vec<Vec<Vec<Complex64>>> = (0..d)
        .map(|a| {
            nodes
                .par_iter()
                .map(|&x| (0..n).map(|k| Complex64::cis(x * samples.row(k)[a])).collect())
                .collect()
        })
        .collect();
    let eval = |axes: &[usize], idx: &[usize]| -> Complex64 {
        let s = blocked_sum(n, |k| {
            let mut z = tables[axes[0]][idx[0]][k];
            for p in 1..axes.len() {
                z *= tables[axes[p]][idx[p]][k];
            }
            z
        });
        s / n as f64
    };
    let all_axes: Vec<usize> = (0..d).collect();
    let full = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut idx = vec![0usize; d];
            grid.sub_indices(d, k, &mut idx);
            eval(&all_axes, &idx)
        })
        .collect();
    let block = |axes: Vec<usize>| -> Vec<Complex64> {
        let p = axes.len();
        (0..q.pow(p as u32))
            .into_par_iter()
            .map(|k| {
                let mut idx = vec![0usize; p];
                grid.sub_indices(p, k, &mut idx);
                eval(&axes, &idx)
            })
            .collect()
    };
    let first = if d1 > 0 { block((0..d1).collect()) } else { vec![Complex64::new(1.0, 0.0)] };
    let second = if d2 > 0 { block((d1..d).collect()) } else { vec![Complex64::new(1.0, 0.0)] };
    Ok(EcfTable {
        grid_id: grid.id(),
        n,
        full,
        first,
        second,
    })
}

/// `(1/n) Σ_ℓ ‖Y_ℓ‖²`.
pub fn second_moment(samples: &SampleSet) -> f64 {
    let n = samples.n();
    blocked_sum_real(n, |k| samples.row(k).iter().map(|v| v * v).sum()) / n as f64
}
