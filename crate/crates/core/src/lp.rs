//! Dense tableau simplex with Bland's rule.
//!
//! Solves `max cᵀx  s.t.  Ax ≤ b, x ≥ 0`. When some `b_i < 0` a phase-one
//! problem with a single artificial column finds a feasible basis first; if
//! none exists the phase-one duals form a Farkas certificate
//! `y ≥ 0, Aᵀy ≥ 0, bᵀy < 0`.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-12;
const FEAS_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 5_000_000;

#[derive(Clone, Debug)]
pub struct LinearProgram {
    rows: usize,
    cols: usize,
    c: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Optimal duals `y ≥ 0` with `Aᵀy ≥ c` and `bᵀy = cᵀx`.
    pub dual: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Unbounded { pivots: usize },
    Infeasible { farkas: Vec<f64>, pivots: usize },
}

impl LinearProgram {
    /// `a` is row-major with `b.len()` rows and `c.len()` columns.
    pub fn new(c: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let rows = b.len();
        let cols = c.len();
        if a.len() != rows * cols {
            return Err(Error::Lp(format!(
                "constraint matrix has {} entries, expected {rows}×{cols}",
                a.len()
            )));
        }
        if c.iter().chain(&a).chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Lp("non-finite coefficient".into()));
        }
        Ok(Self { rows, cols, c, a, b })
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::new(self).run(self)
    }
}

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
    /// Column excluded from entering (the artificial after phase one).
    blocked: Option<usize>,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let (m, n) = (lp.rows, lp.cols);
        // Columns: originals, slacks, artificial, rhs.
        let width = n + m + 2;
        let mut t = vec![0.0; m * width];
        for r in 0..m {
            let row = &mut t[r * width..(r + 1) * width];
            row[..n].copy_from_slice(&lp.a[r * n..(r + 1) * n]);
            row[n + r] = 1.0;
            row[n + m] = -1.0;
            row[width - 1] = lp.b[r];
        }
        Self {
            m,
            n,
            width,
            t,
            obj: vec![0.0; width],
            basis: (n..n + m).collect(),
            pivots: 0,
            blocked: None,
        }
    }

    fn artificial(&self) -> usize {
        self.n + self.m
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r * self.width + self.width - 1]
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.width;
        let inv = 1.0 / self.t[p * w + q];
        for v in &mut self.t[p * w..(p + 1) * w] {
            *v *= inv;
        }
        self.t[p * w + q] = 1.0;
        let (before, rest) = self.t.split_at_mut(p * w);
        let (prow, after) = rest.split_at_mut(w);
        let prow: &[f64] = prow;
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[q];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow) {
                    *x -= f * y;
                }
                row[q] = 0.0;
                let last = w - 1;
                if row[last] < 0.0 && row[last] > -FEAS_EPS {
                    row[last] = 0.0;
                }
            }
        }
        let f = self.obj[q];
        if f != 0.0 {
            for (x, &y) in self.obj.iter_mut().zip(prow) {
                *x -= f * y;
            }
            self.obj[q] = 0.0;
        }
        self.basis[p] = q;
        self.pivots += 1;
    }

    /// Primal simplex from a feasible basis, Bland's rule throughout.
    fn iterate(&mut self) -> Result<Phase> {
        let ncols = self.width - 1;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Lp(format!("pivot limit {MAX_PIVOTS} exceeded")));
            }
            let entering = (0..ncols).find(|&j| Some(j) != self.blocked && self.obj[j] < -COST_EPS);
            let Some(q) = entering else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, q);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((best, br)) => {
                            if ratio < br - 1e-15 || (ratio <= br + 1e-15 && self.basis[r] < self.basis[best]) {
                                Some((r, ratio))
                            } else {
                                Some((best, br))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(Phase::Unbounded),
                Some((p, _)) => self.pivot(p, q),
            }
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let art = self.artificial();
        let most_negative = (0..self.m)
            .filter(|&r| self.rhs(r) < 0.0)
            .min_by(|&a, &b| self.rhs(a).total_cmp(&self.rhs(b)));
        if let Some(p) = most_negative {
            // Phase one: max −x_a.
            self.obj[art] = 1.0;
            self.pivot(p, art);
            self.iterate()?;
            let infeasibility = -self.obj[self.width - 1];
            if infeasibility.abs() > FEAS_EPS * (1.0 + lp.b.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                let farkas = (0..self.m).map(|i| self.obj[self.n + i].max(0.0)).collect();
                return Ok(LpOutcome::Infeasible {
                    farkas,
                    pivots: self.pivots,
                });
            }
            if let Some(r) = self.basis.iter().position(|&b| b == art) {
                let ncols = self.width - 2;
                if let Some(q) = (0..ncols).find(|&j| self.at(r, j).abs() > PIVOT_EPS) {
                    self.pivot(r, q);
                }
            }
        }
        self.blocked = Some(art);
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        for (j, &cj) in lp.c.iter().enumerate() {
            self.obj[j] = -cj;
        }
        for r in 0..self.m {
            let b = self.basis[r];
            let f = self.obj[b];
            if f != 0.0 {
                let w = self.width;
                for (x, &y) in self.obj.iter_mut().zip(&self.t[r * w..(r + 1) * w]) {
                    *x -= f * y;
                }
                self.obj[b] = 0.0;
            }
        }
        match self.iterate()? {
            Phase::Unbounded => Ok(LpOutcome::Unbounded { pivots: self.pivots }),
            Phase::Optimal => {
                let mut x = vec![0.0; self.n];
                for r in 0..self.m {
                    if self.basis[r] < self.n {
                        x[self.basis[r]] = self.rhs(r);
                    }
                }
                let dual = (0..self.m).map(|i| self.obj[self.n + i]).collect();
                Ok(LpOutcome::Optimal(LpSolution {
                    x,
                    dual,
                    objective: self.obj[self.width - 1],
                    pivots: self.pivots,
                }))
            }
        }
    }
}
