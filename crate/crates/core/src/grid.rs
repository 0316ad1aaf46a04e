//! Finite sub-Markov grids: the node set, the transition kernel and the
//! interior/absorbing split.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Row sums may exceed one by at most this much.
pub const ROW_SUM_SLACK: f64 = 1e-12;

/// A row whose sum falls below `1 - LEAK_THRESHOLD` counts as losing mass.
const LEAK_THRESHOLD: f64 = 1e-12;

/// Sparse nonnegative matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from `(row, col, probability)` triplets. Duplicate
    /// entries are summed and exact zeros dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, p) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidKernel(format!(
                    "entry ({i}, {j}) outside a {n}-node grid"
                )));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "entry ({i}, {j}) = {p} is not a finite nonnegative number"
                )));
            }
            rows[i].push((j, p));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, p) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += p,
                    _ => merged.push((j, p)),
                }
            }
            for (j, p) in merged {
                if p != 0.0 {
                    cols.push(j);
                    vals.push(p);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { n, row_ptr, cols, vals })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn row_is_empty(&self, i: usize) -> bool {
        self.row_ptr[i] == self.row_ptr[i + 1]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum()
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.row(i).find(|&(j, _)| j == i).map_or(0.0, |(_, p)| p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, p)| p)
    }

    /// `(Pu)(i)` for finite `u`.
    pub fn apply_row(&self, i: usize, u: &[f64]) -> f64 {
        self.row(i).map(|(j, p)| p * u[j]).sum()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.apply_row(i, u)).collect()
    }

    pub fn transpose(&self) -> Kernel {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, p) in self.row(i) {
                triplets.push((j, i, p));
            }
        }
        // Entries are already validated.
        Kernel::from_triplets(self.n, &triplets).expect("transpose of a valid kernel")
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, p)| (i, j, p)))
            .collect()
    }
}

/// A subset of grid nodes, stored as a membership mask.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeSet {
    mask: Vec<bool>,
}

impl NodeSet {
    pub fn empty(n: usize) -> Self {
        Self { mask: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { mask: vec![true; n] }
    }

    pub fn from_ids(n: usize, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; n];
        for id in ids {
            if id >= n {
                return Err(Error::NodeOutOfRange { node: id, n });
            }
            mask[id] = true;
        }
        Ok(Self { mask })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, i: usize) {
        self.mask[i] = true;
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet {
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn complement(&self) -> NodeSet {
        NodeSet {
            mask: self.mask.iter().map(|&m| !m).collect(),
        }
    }
}

/// Lattice metadata kept for builds that came from [`build_lattice`].
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeInfo {
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub mask: Vec<usize>,
}

/// A finite node set with a sub-stochastic transition kernel.
///
/// Absorbing nodes are exactly the nodes with empty kernel rows; every other
/// node is interior and carries a superharmonic inequality. Construction
/// rejects kernels whose interior restriction has spectral radius one.
#[derive(Clone, Debug)]
pub struct MarkovGrid {
    kernel: Kernel,
    kernel_t: Kernel,
    interior: Vec<bool>,
    interior_ids: Vec<usize>,
    coords: Option<Vec<Vec<f64>>>,
    lattice: Option<LatticeInfo>,
}

impl MarkovGrid {
    pub fn new(kernel: Kernel, coords: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let n = kernel.n();
        if n == 0 {
            return Err(Error::InvalidKernel("grid has no nodes".into()));
        }
        for i in 0..n {
            let s = kernel.row_sum(i);
            if s > 1.0 + ROW_SUM_SLACK {
                return Err(Error::InvalidKernel(format!("row {i} sums to {s}, exceeding 1")));
            }
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: c.len(),
                });
            }
        }
        let interior: Vec<bool> = (0..n).map(|i| !kernel.row_is_empty(i)).collect();
        let interior_ids = (0..n).filter(|&i| interior[i]).collect();
        let kernel_t = kernel.transpose();
        let grid = Self {
            kernel,
            kernel_t,
            interior,
            interior_ids,
            coords,
            lattice: None,
        };
        grid.check_greenian()?;
        Ok(grid)
    }

    /// Every interior node must reach an absorbing node or a mass-losing row.
    /// For a finite nonnegative kernel this is equivalent to the interior
    /// restriction having spectral radius below one.
    fn check_greenian(&self) -> Result<()> {
        let n = self.n();
        let mut escapes = vec![false; n];
        let mut queue = VecDeque::new();
        for i in 0..n {
            if !self.interior[i] || self.kernel.row_sum(i) < 1.0 - LEAK_THRESHOLD {
                escapes[i] = true;
                queue.push_back(i);
            }
        }
        // Backward search along kernel edges.
        while let Some(j) = queue.pop_front() {
            for (i, _) in self.kernel_t.row(j) {
                if !escapes[i] {
                    escapes[i] = true;
                    queue.push_back(i);
                }
            }
        }
        let trapped: Vec<usize> = (0..n).filter(|&i| !escapes[i]).collect();
        if trapped.is_empty() {
            Ok(())
        } else {
            Err(Error::NonGreenian { nodes: trapped })
        }
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kernel_transpose(&self) -> &Kernel {
        &self.kernel_t
    }

    pub fn is_interior(&self, i: usize) -> bool {
        self.interior[i]
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        !self.interior[i]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior_ids
    }

    pub fn interior_set(&self) -> NodeSet {
        NodeSet::from_mask(self.interior.clone())
    }

    pub fn absorbing(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.interior[i]).collect()
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn lattice(&self) -> Option<&LatticeInfo> {
        self.lattice.as_ref()
    }

    pub fn check_node(&self, x: usize) -> Result<()> {
        if x < self.n() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: x, n: self.n() })
        }
    }

    /// The set plus its one-step kernel neighbours.
    pub fn closure(&self, set: &NodeSet) -> NodeSet {
        let mut out = set.clone();
        for i in set.iter() {
            for (j, _) in self.kernel.row(i) {
                out.insert(j);
            }
        }
        out
    }
}

/// Builds the nearest-neighbour random walk on a rectangular lattice.
///
/// Nodes are numbered with the first coordinate varying fastest. Frame nodes
/// and the nodes listed in `mask` are absorbing; every other node moves to
/// each of its `2d` neighbours with probability `1/(2d)`.
pub fn build_lattice(dims: &[usize], spacing: f64, mask: &[usize]) -> Result<MarkovGrid> {
    if dims.is_empty() {
        return Err(Error::InvalidInput("lattice needs at least one dimension".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d < 2) {
        return Err(Error::InvalidInput(format!(
            "lattice dimensions must be at least 2, got {d}"
        )));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidInput(format!(
            "lattice spacing must be positive, got {spacing}"
        )));
    }
    let n: usize = dims.iter().product();
    let masked = NodeSet::from_ids(n, mask.iter().copied())?;
    let d = dims.len();
    let mut strides = vec![1usize; d];
    for k in 1..d {
        strides[k] = strides[k - 1] * dims[k - 1];
    }
    let multi = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; d];
        for k in 0..d {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
        out
    };
    let p = 1.0 / (2 * d) as f64;
    let mut triplets = Vec::new();
    let mut coords = Vec::with_capacity(n);
    for idx in 0..n {
        let m = multi(idx);
        coords.push(m.iter().map(|&c| c as f64 * spacing).collect());
        let on_frame = m.iter().zip(dims).any(|(&c, &len)| c == 0 || c + 1 == len);
        if on_frame || masked.contains(idx) {
            continue;
        }
        for k in 0..d {
            triplets.push((idx, idx - strides[k], p));
            triplets.push((idx, idx + strides[k], p));
        }
    }
    let kernel = Kernel::from_triplets(n, &triplets)?;
    let mut grid = MarkovGrid::new(kernel, Some(coords))?;
    grid.lattice = Some(LatticeInfo {
        dims: dims.to_vec(),
        spacing,
        mask: masked.ids(),
    });
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent reachability oracle: forward BFS from each interior node.
    fn reaches_absorption(grid: &MarkovGrid, start: usize) -> bool {
        let mut seen = vec![false; grid.n()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            if grid.is_absorbing(i) || grid.kernel().row_sum(i) < 1.0 - 1e-12 {
                return true;
            }
            for (j, _) in grid.kernel().row(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        false
    }

    #[test]
    fn path_of_five() {
        let g = build_lattice(&[5], 1.0, &[]).unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(g.interior(), &[1, 2, 3]);
        assert_eq!(g.absorbing(), vec![0, 4]);
        assert_eq!(g.kernel().get(2, 1), 0.5);
        assert_eq!(g.kernel().get(2, 3), 0.5);
        assert_eq!(g.kernel().row_sum(0), 0.0);
    }

    #[test]
    fn three_by_three_has_single_interior_node() {
        let g = build_lattice(&[3, 3], 1.0, &[]).unwrap();
        assert_eq!(g.n(), 9);
        assert_eq!(g.interior(), &[4]);
        assert_eq!(g.absorbing().len(), 8);
        for j in [1, 3, 5, 7] {
            assert_eq!(g.kernel().get(4, j), 0.25);
        }
    }

    #[test]
    fn masked_path_keeps_both_halves() {
        let g = build_lattice(&[5], 1.0, &[2]).unwrap();
        assert_eq!(g.interior(), &[1, 3]);
        for &i in g.interior() {
            assert!(reaches_absorption(&g, i));
        }
    }

    #[test]
    fn rejects_bad_lattices() {
        assert!(build_lattice(&[], 1.0, &[]).is_err());
        assert!(build_lattice(&[1, 4], 1.0, &[]).is_err());
        assert!(build_lattice(&[4], 0.0, &[]).is_err());
        assert!(build_lattice(&[4], 1.0, &[9]).is_err());
    }

    #[test]
    fn rejects_row_sum_above_one() {
        let k = Kernel::from_triplets(3, &[(1, 0, 0.55), (1, 2, 0.5)]).unwrap();
        assert!(matches!(MarkovGrid::new(k, None), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn rejects_trapped_component() {
        // 1 <-> 2 forever, 0 absorbing and unreachable from them.
        let k = Kernel::from_triplets(3, &[(1, 2, 1.0), (2, 1, 1.0)]).unwrap();
        match MarkovGrid::new(k, None) {
            Err(Error::NonGreenian { nodes }) => assert_eq!(nodes, vec![1, 2]),
            other => panic!("expected non-Greenian error, got {other:?}"),
        }
    }

    #[test]
    fn leaking_rows_are_greenian() {
        let k = Kernel::from_triplets(2, &[(0, 1, 0.9), (1, 0, 0.9)]).unwrap();
        let g = MarkovGrid::new(k, None).unwrap();
        assert!(g.absorbing().is_empty());
    }

    #[test]
    fn closure_adds_neighbours() {
        let g = build_lattice(&[9], 1.0, &[]).unwrap();
        let u = NodeSet::from_ids(9, [3, 4, 5]).unwrap();
        assert_eq!(g.closure(&u).ids(), vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let k = Kernel::from_triplets(2, &[(0, 1, 0.25), (0, 1, 0.25)]).unwrap();
        assert_eq!(k.get(0, 1), 0.5);
        assert_eq!(k.nnz(), 1);
    }
}
