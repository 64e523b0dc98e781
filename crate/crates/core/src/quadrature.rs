//! One-dimensional quadrature rules and tensor-product grids on `[−ν, ν]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[−1, 1]`, by Newton iteration on the recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gauss(a: f64, b: f64, panels: usize, nodes_per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(nodes_per_panel);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * nodes_per_panel);
    let mut ws = Vec::with_capacity(panels * nodes_per_panel);
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            xs.push(mid + 0.5 * h * xi);
            ws.push(0.5 * h * wi);
        }
    }
    (xs, ws)
}

/// Composite Gauss–Legendre rule over consecutive breakpoints.
pub fn gauss_on_breaks(breaks: &[f64], nodes_per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(nodes_per_panel);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for pair in breaks.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (xi, wi) in x.iter().zip(&w) {
            xs.push(mid + half * xi);
            ws.push(half * wi);
        }
    }
    (xs, ws)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    #[default]
    GaussLegendre,
    Trapezoid,
}

/// Tensor-product grid on `[−ν, ν]^{d₁} × [−ν, ν]^{d₂}` with the same rule on every axis.
///
/// Full-grid nodes are ordered row-major over the axes, first block before second,
/// so node `k` splits as `k = k₁·N₂ + k₂` into first- and second-block nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nu: f64,
    nodes_per_axis: usize,
    rule: QuadRule,
    d1: usize,
    d2: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

pub fn make_grid(nu: f64, nodes_per_axis: usize, rule: QuadRule, dims: (usize, usize)) -> Result<QuadratureGrid> {
    QuadratureGrid::new(nu, nodes_per_axis, rule, dims)
}

impl QuadratureGrid {
    pub fn new(nu: f64, nodes_per_axis: usize, rule: QuadRule, dims: (usize, usize)) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::config("nu", format!("must be positive, got {nu}")));
        }
        if nodes_per_axis < 2 {
            return Err(Error::config("nodes_per_axis", format!("must be at least 2, got {nodes_per_axis}")));
        }
        if dims.0 + dims.1 == 0 || dims.0 + dims.1 > 4 {
            return Err(Error::invalid(format!("unsupported dimension {:?}", dims)));
        }
        let (nodes, weights) = match rule {
            QuadRule::GaussLegendre => {
                let (x, w) = gauss_legendre(nodes_per_axis);
                (x.iter().map(|v| v * nu).collect(), w.iter().map(|v| v * nu).collect())
            }
            QuadRule::Trapezoid => {
                let h = 2.0 * nu / (nodes_per_axis - 1) as f64;
                let x = (0..nodes_per_axis).map(|k| -nu + h * k as f64).collect();
                let mut w = vec![h; nodes_per_axis];
                w[0] = 0.5 * h;
                w[nodes_per_axis - 1] = 0.5 * h;
                (x, w)
            }
        };
        Ok(QuadratureGrid {
            nu,
            nodes_per_axis,
            rule,
            d1: dims.0,
            d2: dims.1,
            nodes,
            weights,
        })
    }

    /// A grid with the single node at the origin and unit weight, for degenerate checks.
    pub fn origin(dims: (usize, usize)) -> Self {
        QuadratureGrid {
            nu: 0.0,
            nodes_per_axis: 1,
            rule: QuadRule::GaussLegendre,
            d1: dims.0,
            d2: dims.1,
            nodes: vec![0.0],
            weights: vec![1.0],
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn rule(&self) -> QuadRule {
        self.rule
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of nodes on a `p`-dimensional sub-grid.
    pub fn count(&self, p: usize) -> usize {
        self.nodes.len().pow(p as u32)
    }

    pub fn len(&self) -> usize {
        self.count(self.dim())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_len(&self, first: bool) -> usize {
        self.count(if first { self.d1 } else { self.d2 })
    }

    /// Coordinates and weight of node `k` of a `p`-dimensional sub-grid.
    pub fn sub_node(&self, p: usize, mut k: usize, out: &mut [f64]) -> f64 {
        let q = self.nodes.len();
        let mut w = 1.0;
        for a in (0..p).rev() {
            let j = k % q;
            k /= q;
            out[a] = self.nodes[j];
            w *= self.weights[j];
        }
        w
    }

    /// Per-axis node indices of node `k` of a `p`-dimensional sub-grid.
    pub fn sub_indices(&self, p: usize, mut k: usize, out: &mut [usize]) {
        let q = self.nodes.len();
        for a in (0..p).rev() {
            out[a] = k % q;
            k /= q;
        }
    }

    /// Coordinates and weight of full-grid node `k`.
    pub fn node(&self, k: usize, out: &mut [f64]) -> f64 {
        self.sub_node(self.dim(), k, out)
    }

    /// All full-grid nodes with weights.
    pub fn points(&self) -> Vec<(Vec<f64>, f64)> {
        let d = self.dim();
        (0..self.len())
            .map(|k| {
                let mut t = vec![0.0; d];
                let w = self.node(k, &mut t);
                (t, w)
            })
            .collect()
    }

    /// Quadrature of `f` over the full box.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let d = self.dim();
        let mut t = vec![0.0; d];
        let mut acc = 0.0;
        for k in 0..self.len() {
            let w = self.node(k, &mut t);
            acc += w * f(&t);
        }
        acc
    }

    /// Stable identifier of the grid geometry.
    pub fn id(&self) -> String {
        format!(
            "{:?}:nu={}:q={}:d=({},{})",
            self.rule, self.nu, self.nodes_per_axis, self.d1, self.d2
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_rule_exactness() {
        let g = make_grid(1.0, 2, QuadRule::GaussLegendre, (1, 0)).unwrap();
        assert!((g.integrate(|_| 1.0) - 2.0).abs() < 1e-15);
        assert!((g.integrate(|t| t[0] * t[0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!(g.integrate(|t| t[0].powi(3)).abs() < 1e-15);
    }

    #[test]
    fn eight_node_sixth_moment() {
        let g = make_grid(2.0, 8, QuadRule::GaussLegendre, (1, 0)).unwrap();
        let exact = 2.0 * 2f64.powi(7) / 7.0;
        assert!((g.integrate(|t| t[0].powi(6)) - exact).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_and_nodes_in_box() {
        for &rule in &[QuadRule::GaussLegendre, QuadRule::Trapezoid] {
            for &q in &[2usize, 3, 17, 48, 96] {
                let g = make_grid(1.7, q, rule, (1, 1)).unwrap();
                let s: f64 = g.axis_weights().iter().sum();
                assert!((s - 3.4).abs() < 1e-12, "{rule:?} {q} {s}");
                assert!(g.axis_weights().iter().all(|&w| w > 0.0));
                assert!(g.axis_nodes().iter().all(|&x| x.abs() <= 1.7));
            }
        }
    }

    #[test]
    fn gauss_exact_to_degree_2n_minus_1() {
        for n in 1..=40usize {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
        }
    }

    #[test]
    fn invalid_sizes() {
        assert!(make_grid(0.0, 4, QuadRule::GaussLegendre, (1, 1)).is_err());
        assert!(make_grid(1.0, 1, QuadRule::GaussLegendre, (1, 1)).is_err());
    }

    #[test]
    fn tensor_node_layout() {
        let g = make_grid(1.0, 3, QuadRule::Trapezoid, (1, 1)).unwrap();
        let mut t = [0.0; 2];
        let w = g.node(5, &mut t);
        // 5 = 1·3 + 2
        assert_eq!(t, [0.0, 1.0]);
        assert!((w - 1.0 * 0.5).abs() < 1e-15);
        assert!((g.integrate(|t| t[0] * t[0] * t[1] * t[1]) - 1.0).abs() < 1e-15);
    }
}
