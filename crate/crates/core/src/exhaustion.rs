//! Increasing subdomain sequences `U_1 ⊆ U_2 ⊆ … ⊆ U_N` with
//! `closure(U_n) ⊆ U_{n+1}` and every interior node in `U_N`.

use crate::error::{Error, Result};
use crate::grid::{MarkovGrid, NodeSet};

#[derive(Clone, Debug, PartialEq)]
pub struct Exhaustion {
    sets: Vec<NodeSet>,
}

impl Exhaustion {
    pub fn new(grid: &MarkovGrid, sets: Vec<NodeSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::InvalidInput("exhaustion needs at least one set".into()));
        }
        for (k, s) in sets.iter().enumerate() {
            if s.universe() != grid.n() {
                return Err(Error::DimensionMismatch {
                    expected: grid.n(),
                    found: s.universe(),
                });
            }
            if s.is_empty() {
                return Err(Error::InvalidInput(format!("exhaustion set {k} is empty")));
            }
        }
        for (k, pair) in sets.windows(2).enumerate() {
            let closure = grid.closure(&pair[0]);
            let missing = closure.iter().find(|&i| !pair[1].contains(i));
            if let Some(i) = missing {
                return Err(Error::InvalidInput(format!(
                    "closure of exhaustion set {k} is not inside set {}: node {i} missing",
                    k + 1
                )));
            }
        }
        let last = sets.last().expect("nonempty");
        if let Some(&i) = grid.interior().iter().find(|&&i| !last.contains(i)) {
            return Err(Error::InvalidInput(format!(
                "last exhaustion set misses interior node {i}"
            )));
        }
        Ok(Self { sets })
    }

    pub fn from_ids(grid: &MarkovGrid, sets: &[Vec<usize>]) -> Result<Self> {
        let sets = sets
            .iter()
            .map(|ids| NodeSet::from_ids(grid.n(), ids.iter().copied()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, sets)
    }

    /// One step: the whole interior.
    pub fn single(grid: &MarkovGrid) -> Result<Self> {
        if grid.interior().is_empty() {
            return Self::new(grid, vec![NodeSet::full(grid.n())]);
        }
        Self::new(grid, vec![grid.interior_set()])
    }

    /// Grows `seed` by repeated closure until the interior is covered. If the
    /// closure stops growing first, the remaining interior is added in one step.
    pub fn grow_from(grid: &MarkovGrid, seed: &NodeSet) -> Result<Self> {
        let interior = grid.interior_set();
        let mut sets = vec![seed.clone()];
        loop {
            let cur = sets.last().expect("nonempty");
            if interior.is_subset(cur) {
                break;
            }
            let next = grid.closure(cur);
            let next = if next == *cur { next.union(&interior) } else { next };
            sets.push(next);
        }
        Self::new(grid, sets)
    }

    pub fn sets(&self) -> &[NodeSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}
