//! Polyhedral cones of superharmonic functions on a subdomain.

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::grid::{MarkovGrid, NodeSet};

/// `{v : ((I−P)v)(i) ≥ 0 for every interior node i of U}`, optionally
/// intersected with `{v ≥ 0}`.
///
/// Functions in the cone live on `closure(U)`; values elsewhere never enter
/// a constraint. With `U` the whole grid and the nonnegativity flag set this
/// is the cone `W` of nonnegative hyperharmonic functions; without the flag
/// it is the superharmonic cone `S(U)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperharmonicCone {
    domain: NodeSet,
    closure: NodeSet,
    rows: Vec<usize>,
    nonnegative: bool,
}

impl SuperharmonicCone {
    /// Nonnegative hyperharmonic functions on the whole grid.
    pub fn w_cone(grid: &MarkovGrid) -> Self {
        Self::build(grid, NodeSet::full(grid.n()), true)
    }

    /// Superharmonic functions on the whole grid, any sign.
    pub fn s_cone(grid: &MarkovGrid) -> Self {
        Self::build(grid, NodeSet::full(grid.n()), false)
    }

    pub fn on(grid: &MarkovGrid, domain: &NodeSet, nonnegative: bool) -> Result<Self> {
        if domain.universe() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                found: domain.universe(),
            });
        }
        Ok(Self::build(grid, domain.clone(), nonnegative))
    }

    fn build(grid: &MarkovGrid, domain: NodeSet, nonnegative: bool) -> Self {
        let closure = grid.closure(&domain);
        let rows = domain.iter().filter(|&i| grid.is_interior(i)).collect();
        Self {
            domain,
            closure,
            rows,
            nonnegative,
        }
    }

    pub fn domain(&self) -> &NodeSet {
        &self.domain
    }

    pub fn closure(&self) -> &NodeSet {
        &self.closure
    }

    /// Interior nodes of the subdomain, one constraint row each, ascending.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn is_row(&self, i: usize) -> bool {
        self.rows.binary_search(&i).is_ok()
    }

    pub fn nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn with_nonnegative(&self, nonnegative: bool) -> Self {
        Self {
            nonnegative,
            ..self.clone()
        }
    }

    /// The obstacle a reduction in this cone works against: `φ`, or `φ⁺`
    /// when nonnegativity is imposed.
    pub fn obstacle(&self, phi: &GridFunction) -> GridFunction {
        if self.nonnegative {
            phi.positive_part()
        } else {
            phi.clone()
        }
    }

    /// `((I−P)u)(i)` in extended arithmetic: an infinite value at `i`
    /// satisfies the row, an infinite neighbour of a finite value violates it.
    pub fn row_residual(grid: &MarkovGrid, i: usize, u: &[f64]) -> f64 {
        let k = grid.kernel();
        if u[i] == f64::INFINITY && k.diagonal(i) < 1.0 {
            return f64::INFINITY;
        }
        let mut pu = 0.0;
        for (j, p) in k.row(i) {
            if u[j] == f64::INFINITY {
                return f64::NEG_INFINITY;
            }
            pu += p * u[j];
        }
        u[i] - pu
    }
}

/// Result of a cone-membership test.
#[derive(Clone, Debug, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// Smallest constraint value; `+inf` when the cone has no constraints.
    pub worst_residual: f64,
    pub worst_node: Option<usize>,
}

/// Tests `Mu ≥ −tol` row by row (and `u ≥ −tol` on `closure(U)` for
/// nonnegative cones).
pub fn is_superharmonic(grid: &MarkovGrid, u: &GridFunction, cone: &SuperharmonicCone, tol: f64) -> Result<Membership> {
    u.check_len(grid)?;
    let vals = u.values();
    let mut worst = f64::INFINITY;
    let mut worst_node = None;
    for &i in cone.rows() {
        let r = SuperharmonicCone::row_residual(grid, i, vals);
        if r < worst {
            worst = r;
            worst_node = Some(i);
        }
    }
    if cone.nonnegative() {
        for i in cone.closure().iter() {
            if vals[i] < worst {
                worst = vals[i];
                worst_node = Some(i);
            }
        }
    }
    Ok(Membership {
        member: worst >= -tol,
        worst_residual: worst,
        worst_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_lattice;

    fn p5() -> MarkovGrid {
        build_lattice(&[5], 1.0, &[]).unwrap()
    }

    fn f(v: &[f64]) -> GridFunction {
        GridFunction::new(v.to_vec()).unwrap()
    }

    #[test]
    fn plateau_is_superharmonic() {
        let g = p5();
        let m = is_superharmonic(&g, &f(&[0., 1., 1., 1., 0.]), &SuperharmonicCone::w_cone(&g), 0.0).unwrap();
        assert!(m.member);
        assert_eq!(m.worst_residual, 0.0);
    }

    #[test]
    fn spike_is_not() {
        let g = p5();
        let u = f(&[0., 0., 1., 0., 0.]);
        let m = is_superharmonic(&g, &u, &SuperharmonicCone::w_cone(&g), 1e-12).unwrap();
        assert!(!m.member);
        assert_eq!(m.worst_residual, -0.5);
        assert_eq!(m.worst_node, Some(1));
        assert_eq!(SuperharmonicCone::row_residual(&g, 3, u.values()), -0.5);
    }

    #[test]
    fn expected_exit_time_has_unit_residual() {
        let g = p5();
        let u = f(&[0., 3., 4., 3., 0.]);
        let m = is_superharmonic(&g, &u, &SuperharmonicCone::s_cone(&g), 0.0).unwrap();
        assert!(m.member);
        assert_eq!(m.worst_residual, 1.0);
        let m = is_superharmonic(&g, &u, &SuperharmonicCone::w_cone(&g), 0.0).unwrap();
        assert_eq!(m.worst_residual, 0.0);
        for i in 1..4 {
            assert_eq!(SuperharmonicCone::row_residual(&g, i, u.values()), 1.0);
        }
    }

    #[test]
    fn infinity_conventions() {
        let g = p5();
        let u = f(&[0., 0., f64::INFINITY, 0., 0.]);
        assert_eq!(SuperharmonicCone::row_residual(&g, 2, u.values()), f64::INFINITY);
        assert_eq!(SuperharmonicCone::row_residual(&g, 1, u.values()), f64::NEG_INFINITY);
        let all_inf = GridFunction::constant(5, f64::INFINITY);
        assert!(
            is_superharmonic(&g, &all_inf, &SuperharmonicCone::w_cone(&g), 0.0)
                .unwrap()
                .member
        );
    }

    #[test]
    fn nonnegativity_only_in_w() {
        let g = p5();
        let u = GridFunction::constant(5, -1.0);
        assert!(
            is_superharmonic(&g, &u, &SuperharmonicCone::s_cone(&g), 0.0)
                .unwrap()
                .member
        );
        assert!(
            !is_superharmonic(&g, &u, &SuperharmonicCone::w_cone(&g), 0.0)
                .unwrap()
                .member
        );
    }

    #[test]
    fn subdomain_rows() {
        let g = build_lattice(&[9], 1.0, &[]).unwrap();
        let dom = NodeSet::from_ids(9, [0, 3, 4, 5]).unwrap();
        let c = SuperharmonicCone::on(&g, &dom, false).unwrap();
        assert_eq!(c.rows(), &[3, 4, 5]);
        assert_eq!(c.closure().ids(), vec![0, 2, 3, 4, 5, 6]);
    }
}
