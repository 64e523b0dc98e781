//! Goldenshluger–Lepski choice of the tail parameter `κ` over a finite grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::reconstruct::{l2_distance, DensityGrid};

/// Finite increasing grid in `(1/2, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaGrid {
    values: Vec<f64>,
}

impl KappaGrid {
    pub fn new(values: Vec<f64>) -> Result<KappaGrid> {
        if values.is_empty() {
            return Err(Error::config("kappa_grid", "must not be empty"));
        }
        if values.iter().any(|k| !(*k > 0.5 && *k <= 1.0)) {
            return Err(Error::config("kappa_grid", "values must lie in (1/2, 1]"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("kappa_grid", "values must be strictly increasing"));
        }
        Ok(KappaGrid { values })
    }

    /// `{0.55, 0.60, …, 1.00}`.
    pub fn default_grid() -> KappaGrid {
        KappaGrid {
            values: (11..=20).map(|k| f64::from(k) * 0.05).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kappa0(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `log n / log log n`, defined for `n > e`.
pub fn rate_base(n: f64) -> Result<f64> {
    if !(n > std::f64::consts::E) {
        return Err(Error::config("n", format!("must exceed e, got {n}")));
    }
    Ok(n.ln() / n.ln().ln())
}

/// `σ_n(κ′) = c_σ (log n / log log n)^{−κ′β}`.
pub fn sigma(kappa_prime: f64, n: f64, c_sigma: f64, beta: f64) -> Result<f64> {
    if !(c_sigma > 0.0) {
        return Err(Error::config("c_sigma", "must be positive"));
    }
    if !(beta > 0.0) {
        return Err(Error::config("beta", "must be positive"));
    }
    Ok(c_sigma * rate_base(n)?.powf(-kappa_prime * beta))
}

/// One row of the selection table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub kappa: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub a_n: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub sigma_n: f64,
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub criterion: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    #[serde(deserialize_with = "crate::io::f64_or_nan")]
    pub kappa: f64,
    pub index: usize,
    pub rows: Vec<SelectionRow>,
}

/// Estimates for every grid point plus the penalty inputs.
#[derive(Debug, Clone)]
pub struct AdaptInput {
    pub estimates: Vec<DensityGrid>,
    pub n: f64,
    pub beta: f64,
    pub c_sigma: f64,
}

/// Symmetric matrix of pairwise `L²` distances.
pub fn pairwise_distances(estimates: &[DensityGrid]) -> Result<Vec<Vec<f64>>> {
    let k = estimates.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..i {
            let v = l2_distance(&estimates[i], &estimates[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// `A_n(κ_j) = 0 ∨ max_{i ≤ j} (D_{ij} − σ_i)`.
pub fn bias_proxy_from(j: usize, distances: &[Vec<f64>], sigmas: &[f64]) -> f64 {
    (0..=j).map(|i| distances[i][j] - sigmas[i]).fold(0.0, f64::max)
}

/// Argmin of `A_n + σ_n`, ties to the smallest `κ`.
pub fn select_from(grid: &KappaGrid, distances: &[Vec<f64>], sigmas: &[f64]) -> Result<Selection> {
    let k = grid.len();
    if distances.len() != k || sigmas.len() != k || distances.iter().any(|r| r.len() != k) {
        return Err(Error::invalid(format!("expected distances and penalties for {k} grid points")));
    }
    let mut rows: Vec<SelectionRow> = (0..k)
        .map(|j| {
            let a = bias_proxy_from(j, distances, sigmas);
            SelectionRow {
                kappa: grid.values()[j],
                a_n: a,
                sigma_n: sigmas[j],
                criterion: a + sigmas[j],
                selected: false,
            }
        })
        .collect();
    let mut index = 0;
    for j in 1..k {
        if rows[j].criterion < rows[index].criterion {
            index = j;
        }
    }
    rows[index].selected = true;
    Ok(Selection {
        kappa: grid.values()[index],
        index,
        rows,
    })
}

fn check_input(input: &AdaptInput, grid: &KappaGrid) -> Result<Vec<f64>> {
    if input.estimates.len() != grid.len() {
        return Err(Error::invalid(format!(
            "{} estimates for {} grid points",
            input.estimates.len(),
            grid.len()
        )));
    }
    grid.values()
        .iter()
        .map(|k| sigma(*k, input.n, input.c_sigma, input.beta))
        .collect()
}

pub fn bias_proxy(j: usize, input: &AdaptInput, grid: &KappaGrid) -> Result<f64> {
    let sigmas = check_input(input, grid)?;
    if j >= grid.len() {
        return Err(Error::invalid(format!("grid index {j} out of range")));
    }
    let mut d = vec![vec![0.0; j + 1]; j + 1];
    for i in 0..j {
        let v = l2_distance(&input.estimates[i], &input.estimates[j])?;
        d[i][j] = v;
    }
    Ok(bias_proxy_from(j, &d, &sigmas))
}

pub fn select_kappa(input: &AdaptInput, grid: &KappaGrid) -> Result<Selection> {
    let sigmas = check_input(input, grid)?;
    let d = pairwise_distances(&input.estimates)?;
    select_from(grid, &d, &sigmas)
}

/// Pilot constant `max_κ′ ‖f̂⁽¹⁾_{κ′} − f̂⁽²⁾_{κ′}‖ (log n / log log n)^{κ′β}` from two
/// estimates per grid point, each built on half of the sample.
pub fn calibrate_c_sigma(split_distances: &[f64], grid: &KappaGrid, n: f64, beta: f64) -> Result<f64> {
    if split_distances.len() != grid.len() {
        return Err(Error::invalid("one split distance per grid point is required"));
    }
    let base = rate_base(n)?;
    let c = split_distances
        .iter()
        .zip(grid.values())
        .map(|(d, k)| d * base.powf(k * beta))
        .fold(0.0, f64::max);
    if !(c > 0.0) {
        return Err(Error::numerical("pilot split distances are all zero"));
    }
    Ok(c)
}

/// Columns `kappa, A_n, sigma_n, criterion, selected`.
pub fn write_selection_csv(path: &Path, selection: &Selection) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kappa", "A_n", "sigma_n", "criterion", "selected"])?;
    for r in &selection.rows {
        w.write_record([
            fmt_f64(r.kappa),
            fmt_f64(r.a_n),
            fmt_f64(r.sigma_n),
            fmt_f64(r.criterion),
            r.selected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_selection_csv(path: &Path) -> Result<Selection> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| Error::invalid(format!("bad number '{}'", &rec[k])))
        };
        rows.push(SelectionRow {
            kappa: num(0)?,
            a_n: num(1)?,
            sigma_n: num(2)?,
            criterion: num(3)?,
            selected: &rec[4] == "true",
        });
    }
    let index = rows
        .iter()
        .position(|r| r.selected)
        .ok_or_else(|| Error::invalid("no selected row"))?;
    Ok(Selection {
        kappa: rows[index].kappa,
        index,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::Lattice;
    use proptest::prelude::*;

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(0.0, 1e4, 0.7, 1.0).unwrap(), 0.7);
        let n = std::f64::consts::E.powf(std::f64::consts::E);
        assert!((sigma(1.0, n, 1.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        let g = KappaGrid::default_grid();
        let s: Vec<f64> = g.values().iter().map(|k| sigma(*k, 1e4, 1.0, 1.0).unwrap()).collect();
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        assert!(sigma(1.0, 2.0, 1.0, 1.0).unwrap_err().is_config());
    }

    #[test]
    fn grid_validation() {
        assert!(KappaGrid::new(vec![]).is_err());
        assert!(KappaGrid::new(vec![0.5, 0.7]).is_err());
        assert!(KappaGrid::new(vec![0.7, 0.7]).is_err());
        assert_eq!(KappaGrid::default_grid().len(), 10);
        assert!((KappaGrid::default_grid().values()[9] - 1.0).abs() < 1e-15);
    }

    fn flat(c: f64) -> DensityGrid {
        DensityGrid::from_fn(Lattice::cube(1, 1.0, 11).unwrap(), |_| c).unwrap()
    }

    #[test]
    fn identical_estimates_pick_the_largest() {
        let grid = KappaGrid::default_grid();
        let input = AdaptInput {
            estimates: vec![flat(0.5); grid.len()],
            n: 1e4,
            beta: 1.0,
            c_sigma: 1.0,
        };
        let s = select_kappa(&input, &grid).unwrap();
        assert!(s.rows.iter().all(|r| r.a_n == 0.0));
        assert_eq!(s.index, grid.len() - 1);
        for j in 0..grid.len() {
            assert_eq!(bias_proxy(j, &input, &grid).unwrap(), 0.0);
        }
        let one = KappaGrid::new(vec![0.8]).unwrap();
        let s = select_kappa(
            &AdaptInput {
                estimates: vec![flat(0.3)],
                ..input
            },
            &one,
        )
        .unwrap();
        assert_eq!(s.kappa, 0.8);
    }

    #[test]
    fn two_point_flip() {
        let grid = KappaGrid::new(vec![0.6, 0.9]).unwrap();
        let sig = [0.2, 0.1];
        let d = |x: f64| vec![vec![0.0, x], vec![x, 0.0]];
        let s = select_from(&grid, &d(0.25), &sig).unwrap();
        assert!((s.rows[1].a_n - 0.05).abs() < 1e-15);
        assert_eq!(s.index, 1);
        let s = select_from(&grid, &d(0.5), &sig).unwrap();
        assert!((s.rows[1].a_n - 0.3).abs() < 1e-15);
        assert_eq!(s.index, 0);
        // exact tie goes to the smaller kappa
        let s = select_from(&grid, &d(0.375), &[0.25, 0.125]).unwrap();
        assert_eq!(s.rows[0].criterion, s.rows[1].criterion);
        assert_eq!(s.index, 0);
    }

    #[test]
    fn selection_csv_round_trip() {
        let grid = KappaGrid::new(vec![0.6, 0.9]).unwrap();
        let s = select_from(&grid, &[vec![0.0, 0.31], vec![0.31, 0.0]], &[0.2, 0.1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sel.csv");
        write_selection_csv(&p, &s).unwrap();
        assert_eq!(read_selection_csv(&p).unwrap(), s);
    }

    #[test]
    fn calibration_formula() {
        let grid = KappaGrid::new(vec![0.6, 0.9]).unwrap();
        let base = rate_base(1e4).unwrap();
        let c = calibrate_c_sigma(&[0.1, 0.05], &grid, 1e4, 1.0).unwrap();
        assert!((c - (0.1 * base.powf(0.6)).max(0.05 * base.powf(0.9))).abs() < 1e-15);
        assert!(calibrate_c_sigma(&[0.0, 0.0], &grid, 1e4, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn extending_the_grid_upward_never_raises_the_minimum(seed in proptest::collection::vec(0.0f64..1.0, 15), k in 2usize..5) {
            let full = KappaGrid::new((0..5).map(|i| 0.55 + 0.1 * i as f64).collect()).unwrap();
            let mut d = vec![vec![0.0; 5]; 5];
            let mut it = seed.iter();
            for i in 0..5 {
                for j in 0..i {
                    let v = *it.next().unwrap();
                    d[i][j] = v;
                    d[j][i] = v;
                }
            }
            let sig: Vec<f64> = full.values().iter().map(|kk| sigma(*kk, 1e4, 0.3, 1.0).unwrap()).collect();
            let big = select_from(&full, &d, &sig).unwrap();
            let sub = KappaGrid::new(full.values()[..k].to_vec()).unwrap();
            let dk: Vec<Vec<f64>> = d[..k].iter().map(|r| r[..k].to_vec()).collect();
            let small = select_from(&sub, &dk, &sig[..k]).unwrap();
            prop_assert!(big.rows[big.index].criterion <= small.rows[small.index].criterion);
            prop_assert!(big.rows.iter().all(|r| r.a_n >= 0.0));
        }
    }
}
