//! Multi-indices and their fixed enumeration order.
//!
//! Indices of total degree at most `m` in `d` variables are listed by total degree
//! first, then in decreasing lexicographic order within a degree, so for `d = 2`
//! the order is `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex {
    entries: Vec<u32>,
}

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex { entries }
    }

    pub fn zero(d: usize) -> Self {
        MultiIndex {
            entries: vec![0; d],
        }
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// Total degree `‖i‖₁`.
    pub fn order(&self) -> u32 {
        self.entries.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0)
    }

    /// True when every nonzero entry lies in `range`.
    pub fn supported_on(&self, range: std::ops::Range<usize>) -> bool {
        self.entries
            .iter()
            .enumerate()
            .all(|(a, &e)| e == 0 || range.contains(&a))
    }
}

/// All multi-indices in `d` variables with total degree at most `max_degree`.
#[derive(Debug, Clone)]
pub struct MultiIndexSet {
    dim: usize,
    max_degree: u32,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl MultiIndexSet {
    pub fn new(dim: usize, max_degree: u32) -> Self {
        let mut indices = Vec::new();
        for deg in 0..=max_degree {
            let mut current = vec![0u32; dim];
            push_degree(dim, deg, 0, &mut current, &mut indices);
        }
        let lookup = indices
            .iter()
            .enumerate()
            .map(|(k, i)| (i.clone(), k))
            .collect();
        MultiIndexSet {
            dim,
            max_degree,
            indices,
            lookup,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, k: usize) -> &MultiIndex {
        &self.indices[k]
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.lookup.get(index).copied()
    }

    /// Number of indices of total degree at most `m` (a prefix of the enumeration).
    pub fn count_up_to(&self, m: u32) -> usize {
        self.indices.partition_point(|i| i.order() <= m)
    }
}

fn push_degree(dim: usize, remaining: u32, axis: usize, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if dim == 0 {
        if remaining == 0 {
            out.push(MultiIndex::new(Vec::new()));
        }
        return;
    }
    if axis == dim - 1 {
        current[axis] = remaining;
        out.push(MultiIndex::new(current.clone()));
        current[axis] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[axis] = e;
        push_degree(dim, remaining - e, axis + 1, current, out);
    }
    current[axis] = 0;
}

/// Binomial coefficient `C(n, k)` as a float.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * f64::from(n - j) / f64::from(j + 1);
    }
    acc.round()
}
