//! Harmonic measures, Green potentials and the reference function `u_0`.

use crate::cone::{is_superharmonic, SuperharmonicCone};
use crate::error::{Error, Result};
use crate::function::{GridFunction, Measure};
use crate::grid::{MarkovGrid, NodeSet};
use crate::linalg::{default_sweeps, solve_rows, LINEAR_TOL};

/// Exit distribution of a subdomain together with the expected number of
/// visits to each of its interior nodes before exit.
#[derive(Clone, Debug)]
pub struct HarmonicMeasure {
    pub x: usize,
    pub measure: Measure,
    /// Green occupation vector `λ` on `V ∩ interior`; zero elsewhere.
    pub occupation: Vec<f64>,
}

/// `μ_x^V`: where the chain started at `x` first lands outside `V`.
///
/// Mass absorbed at absorbing nodes inside `V`, or lost through leaking
/// rows, is missing from the result.
pub fn harmonic_measure(grid: &MarkovGrid, x: usize, v: &NodeSet) -> Result<HarmonicMeasure> {
    grid.check_node(x)?;
    if v.universe() != grid.n() {
        return Err(Error::DimensionMismatch {
            expected: grid.n(),
            found: v.universe(),
        });
    }
    if !v.contains(x) {
        return Err(Error::Domain(format!("node {x} is not in the subdomain")));
    }
    let n = grid.n();
    let rows: Vec<usize> = v.iter().filter(|&i| grid.is_interior(i)).collect();
    let mut occupation = vec![0.0; n];
    if grid.is_interior(x) {
        let mut rhs = vec![0.0; n];
        rhs[x] = 1.0;
        solve_rows(
            grid.kernel_transpose(),
            &rows,
            &rhs,
            &mut occupation,
            LINEAR_TOL,
            default_sweeps(n),
        )?;
    }
    let mut weights = vec![0.0; n];
    for &i in &rows {
        let lam = occupation[i];
        if lam == 0.0 {
            continue;
        }
        for (j, p) in grid.kernel().row(i) {
            if !v.contains(j) {
                weights[j] += lam * p;
            }
        }
    }
    Ok(HarmonicMeasure {
        x,
        measure: Measure::from_computed(weights, 1e-14),
        occupation,
    })
}

/// The constant function one. Row sums at most one put it in `W`.
pub fn reference_u0(grid: &MarkovGrid) -> GridFunction {
    let u0 = GridFunction::constant(grid.n(), 1.0);
    debug_assert!(is_superharmonic(grid, &u0, &SuperharmonicCone::w_cone(grid), ROW_TOL)
        .map(|m| m.member)
        .unwrap_or(false));
    u0
}

const ROW_TOL: f64 = 1e-12;

/// `G f`: solves `(I−P)p = f` on interior nodes with `p = 0` on absorbing nodes.
pub fn green_potential(grid: &MarkovGrid, f: &GridFunction) -> Result<GridFunction> {
    f.check_len(grid)?;
    f.check_finite()?;
    for (i, &v) in f.values().iter().enumerate() {
        if v < 0.0 {
            return Err(Error::Precondition(format!(
                "charge must be nonnegative, got {v} at node {i}"
            )));
        }
        if v != 0.0 && grid.is_absorbing(i) {
            return Err(Error::Precondition(format!(
                "charge must be supported on interior nodes, got {v} at absorbing node {i}"
            )));
        }
    }
    let n = grid.n();
    let mut p = vec![0.0; n];
    solve_rows(
        grid.kernel(),
        grid.interior(),
        f.values(),
        &mut p,
        LINEAR_TOL,
        default_sweeps(n),
    )?;
    GridFunction::new(p)
}

/// `G1`, the expected time to absorption.
pub fn exit_time(grid: &MarkovGrid) -> Result<GridFunction> {
    green_potential(grid, &GridFunction::indicator(&grid.interior_set(), 1.0))
}

/// Solves the Dirichlet problem: harmonic on `rows`, equal to `boundary`
/// everywhere else.
pub fn harmonic_extension(grid: &MarkovGrid, rows: &[usize], boundary: &GridFunction) -> Result<GridFunction> {
    boundary.check_len(grid)?;
    boundary.check_finite()?;
    if let Some(&i) = rows.iter().find(|&&i| grid.is_absorbing(i)) {
        return Err(Error::Precondition(format!(
            "node {i} is absorbing and cannot carry a harmonic equation"
        )));
    }
    let n = grid.n();
    let mut u = boundary.values().to_vec();
    solve_rows(
        grid.kernel(),
        rows,
        &vec![0.0; n],
        &mut u,
        LINEAR_TOL,
        default_sweeps(n),
    )?;
    GridFunction::new(u)
}

/// Whether a nonnegative superharmonic `p` has vanishing harmonic part, i.e.
/// `p = G((I−P)p)` within `tol`.
pub fn is_potential(grid: &MarkovGrid, p: &GridFunction, tol: f64) -> Result<bool> {
    p.check_len(grid)?;
    p.check_finite()?;
    let m = is_superharmonic(grid, p, &SuperharmonicCone::w_cone(grid), tol)?;
    if !m.member {
        return Err(Error::Precondition(format!(
            "not a nonnegative superharmonic function (residual {} at node {:?})",
            m.worst_residual, m.worst_node
        )));
    }
    let charge: Vec<f64> = (0..grid.n())
        .map(|i| {
            if grid.is_interior(i) {
                SuperharmonicCone::row_residual(grid, i, p.values()).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let q = green_potential(grid, &GridFunction::new(charge)?)?;
    Ok(p.distance(&q) <= tol * (1.0 + p.sup_norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_lattice, Kernel};

    fn p5() -> MarkovGrid {
        build_lattice(&[5], 1.0, &[]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gamblers_ruin_from_center() {
        let g = p5();
        let v = NodeSet::from_ids(5, [1, 2, 3]).unwrap();
        let hm = harmonic_measure(&g, 2, &v).unwrap();
        assert!(close(hm.measure.weights(), &[0.5, 0., 0., 0., 0.5], 1e-12));
        // Expected visits from the center: 1,2,1 at nodes 1,2,3 (solve of
        // λ1 = λ2/2, λ2 = 1 + λ1/2 + λ3/2, λ3 = λ2/2).
        assert!(close(&hm.occupation, &[0., 1., 2., 1., 0.], 1e-12));
    }

    #[test]
    fn single_step() {
        let g = p5();
        let v = NodeSet::from_ids(5, [1]).unwrap();
        let hm = harmonic_measure(&g, 1, &v).unwrap();
        assert!(close(hm.measure.weights(), &[0.5, 0., 0.5, 0., 0.], 0.0));
        let g = build_lattice(&[4, 4], 1.0, &[]).unwrap();
        let x = 5;
        let hm = harmonic_measure(&g, x, &NodeSet::from_ids(16, [x]).unwrap()).unwrap();
        for j in 0..16 {
            assert_eq!(hm.measure.weights()[j], g.kernel().get(x, j));
        }
    }

    #[test]
    fn outside_point_is_domain_error() {
        let g = p5();
        let v = NodeSet::from_ids(5, [1]).unwrap();
        assert!(matches!(harmonic_measure(&g, 2, &v), Err(Error::Domain(_))));
    }

    #[test]
    fn absorption_inside_loses_mass() {
        let g = build_lattice(&[5], 1.0, &[2]).unwrap();
        let v = NodeSet::from_ids(5, [1, 2]).unwrap();
        let hm = harmonic_measure(&g, 1, &v).unwrap();
        assert!(close(hm.measure.weights(), &[0.5, 0., 0., 0., 0.], 1e-14));
    }

    #[test]
    fn green_potentials_on_p5() {
        let g = p5();
        let g1 = exit_time(&g).unwrap();
        assert!(close(g1.values(), &[0., 3., 4., 3., 0.], 1e-12));
        let delta = GridFunction::indicator(&NodeSet::from_ids(5, [2]).unwrap(), 1.0);
        let p = green_potential(&g, &delta).unwrap();
        assert!(close(p.values(), &[0., 1., 2., 1., 0.], 1e-12));
        let z = green_potential(&g, &GridFunction::zeros(5)).unwrap();
        assert_eq!(z.values(), &[0.0; 5]);
    }

    #[test]
    fn green_potential_preconditions() {
        let g = p5();
        let neg = GridFunction::new(vec![0., -1., 0., 0., 0.]).unwrap();
        assert!(green_potential(&g, &neg).is_err());
        let on_boundary = GridFunction::new(vec![1., 0., 0., 0., 0.]).unwrap();
        assert!(green_potential(&g, &on_boundary).is_err());
    }

    #[test]
    fn potentials() {
        let g = p5();
        let g1 = exit_time(&g).unwrap();
        assert!(is_potential(&g, &g1, 1e-9).unwrap());
        assert!(!is_potential(&g, &reference_u0(&g), 1e-9).unwrap());
        assert!(is_potential(&g, &GridFunction::zeros(5), 1e-9).unwrap());
        let spike = GridFunction::new(vec![0., 0., 1., 0., 0.]).unwrap();
        assert!(matches!(is_potential(&g, &spike, 1e-9), Err(Error::Precondition(_))));
    }

    #[test]
    fn leaking_kernel_potential() {
        // Single node keeping half its mass: G1 = 2, and u0 = 1 = G(1/2) is a potential.
        let g = MarkovGrid::new(Kernel::from_triplets(1, &[(0, 0, 0.5)]).unwrap(), None).unwrap();
        assert!((exit_time(&g).unwrap()[0] - 2.0).abs() < 1e-14);
        assert!(is_potential(&g, &reference_u0(&g), 1e-9).unwrap());
    }

    #[test]
    fn dirichlet_problem() {
        let g = p5();
        let b = GridFunction::new(vec![0., 0., 0., 0., 4.]).unwrap();
        let h = harmonic_extension(&g, g.interior(), &b).unwrap();
        assert!(close(h.values(), &[0., 1., 2., 3., 4.], 1e-12));
    }
}
