//! Reduced functions `R_φ`, set reductions `R_v^A`, balayage measures and the
//! lower-semicontinuous regularization.
//!
//! `R_φ` is the least member of a [`SuperharmonicCone`] dominating `φ`. On a
//! finite grid this is the obstacle problem
//!
//! ```text
//! min((I−P)u, u − φ) = 0   on the constraint rows,
//! u = φ                    elsewhere,
//! ```
//!
//! (with `φ` replaced by `φ⁺` for nonnegative cones). Three solvers are
//! available: projected Gauss–Seidel (the default), Jacobi value iteration
//! `u ← max(φ, Pu)` and Howard policy iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::SuperharmonicCone;
use crate::error::{Error, Result};
use crate::function::{GridFunction, Measure};
use crate::grid::{MarkovGrid, NodeSet};
use crate::instances::random_w_member;
use crate::linalg::{default_sweeps, solve_rows, LINEAR_TOL};
use crate::potential::{exit_time, harmonic_measure, reference_u0};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Psor,
    Value,
    Policy,
}

impl Solver {
    pub fn id(self) -> &'static str {
        match self {
            Solver::Psor => "psor",
            Solver::Value => "value",
            Solver::Policy => "policy",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psor" => Ok(Solver::Psor),
            "value" => Ok(Solver::Value),
            "policy" => Ok(Solver::Policy),
            other => Err(Error::InvalidInput(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Sup-norm LCP residual at which PSOR and policy iteration stop; the
    /// step size at which value iteration stops.
    pub tol: f64,
    /// Sweep cap; `None` means `max(100·n, 100 000)`.
    pub max_iter: Option<usize>,
    pub solver: Solver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            solver: Solver::Psor,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn solver(self, solver: Solver) -> Self {
        Self { solver, ..self }
    }

    fn sweeps(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| default_sweeps(n))
    }
}

#[derive(Clone, Debug)]
pub struct EnvelopeResult {
    pub u: GridFunction,
    /// `max |min((I−P)u, u − φ)|` over the constraint rows.
    pub residual: f64,
    /// Nodes of `closure(U)` where `u = φ` (within `tol`).
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub solver: Solver,
}

/// JSON form of an [`EnvelopeResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeJson {
    pub values: Vec<f64>,
    pub residual: f64,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub solver: Solver,
}

impl EnvelopeResult {
    pub fn to_json(&self) -> EnvelopeJson {
        EnvelopeJson {
            values: self.u.values().to_vec(),
            residual: self.residual,
            active_set: self.active_set.clone(),
            iterations: self.iterations,
            solver: self.solver,
        }
    }
}

/// Largest complementarity violation of `u` against `obstacle` on the rows.
pub fn lcp_residual(grid: &MarkovGrid, u: &GridFunction, obstacle: &GridFunction, cone: &SuperharmonicCone) -> f64 {
    let vals = u.values();
    cone.rows()
        .iter()
        .map(|&i| {
            let r = SuperharmonicCone::row_residual(grid, i, vals).min(vals[i] - obstacle[i]);
            r.abs()
        })
        .fold(0.0, f64::max)
}

/// `R_φ` in `cone`: the pointwise-least cone member dominating `φ`.
pub fn reduce(
    grid: &MarkovGrid,
    phi: &GridFunction,
    cone: &SuperharmonicCone,
    cfg: &SolverConfig,
) -> Result<EnvelopeResult> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    let obstacle = cone.obstacle(phi);
    let mut u = obstacle.values().to_vec();
    let max_iter = cfg.sweeps(grid.n());
    let iterations = match cfg.solver {
        Solver::Psor => psor(grid, obstacle.values(), cone.rows(), &mut u, cfg.tol, max_iter)?,
        Solver::Value => value_iteration(grid, obstacle.values(), cone.rows(), &mut u, cfg.tol, max_iter)?,
        Solver::Policy => policy_iteration(grid, obstacle.values(), cone.rows(), &mut u, cfg)?,
    };
    let u = GridFunction::new(u)?;
    let residual = lcp_residual(grid, &u, &obstacle, cone);
    let active_set = cone
        .closure()
        .iter()
        .filter(|&i| (u[i] - phi[i]).abs() <= cfg.tol)
        .collect();
    Ok(EnvelopeResult {
        u,
        residual,
        active_set,
        iterations,
        solver: cfg.solver,
    })
}

/// Projected Gauss–Seidel in index order. Stops when the largest
/// pre-update LCP residual of a sweep is at most `tol`.
fn psor(
    grid: &MarkovGrid,
    obstacle: &[f64],
    rows: &[usize],
    u: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let k = grid.kernel();
    let diag: Vec<f64> = rows.iter().map(|&i| 1.0 - k.diagonal(i)).collect();
    if let Some(pos) = diag.iter().position(|&d| d <= 0.0) {
        return Err(Error::NonGreenian { nodes: vec![rows[pos]] });
    }
    let mut residual = 0.0;
    for sweep in 1..=max_iter {
        residual = 0.0f64;
        for (r, &i) in rows.iter().enumerate() {
            let mut off = 0.0;
            for (j, p) in k.row(i) {
                if j != i {
                    off += p * u[j];
                }
            }
            let lcp = (diag[r] * u[i] - off).min(u[i] - obstacle[i]);
            residual = residual.max(lcp.abs());
            u[i] = obstacle[i].max(off / diag[r]);
        }
        if residual <= tol {
            return Ok(sweep);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Jacobi iteration `u ← max(φ, Pu)` until the step drops below `tol`.
fn value_iteration(
    grid: &MarkovGrid,
    obstacle: &[f64],
    rows: &[usize],
    u: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let k = grid.kernel();
    let mut next = u.to_vec();
    let mut step = 0.0;
    for sweep in 1..=max_iter {
        step = 0.0f64;
        for &i in rows {
            let v = obstacle[i].max(k.apply_row(i, u));
            step = step.max((v - u[i]).abs());
            next[i] = v;
        }
        u.copy_from_slice(&next);
        if step < tol || step == 0.0 {
            return Ok(sweep);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: step,
    })
}

/// Howard's algorithm: alternate exact evaluation of a stopping policy with
/// greedy improvement. Starts from "stop everywhere"; values increase.
fn policy_iteration(
    grid: &MarkovGrid,
    obstacle: &[f64],
    rows: &[usize],
    u: &mut [f64],
    cfg: &SolverConfig,
) -> Result<usize> {
    let k = grid.kernel();
    let n = grid.n();
    let mut cont = vec![false; n];
    let max_policies = cfg.max_iter.unwrap_or(rows.len() + 10).max(1);
    let sweeps = default_sweeps(n);
    for iteration in 1..=max_policies {
        let mut changed = false;
        for &i in rows {
            let pu = k.apply_row(i, u);
            let eps = 1e-13 * (1.0 + obstacle[i].abs().max(pu.abs()));
            if !cont[i] && pu > obstacle[i] + eps {
                cont[i] = true;
                changed = true;
            } else if cont[i] && obstacle[i] > pu + eps {
                cont[i] = false;
                changed = true;
            }
        }
        if !changed {
            return Ok(iteration);
        }
        let active: Vec<usize> = rows.iter().copied().filter(|&i| cont[i]).collect();
        for &i in rows {
            if !cont[i] {
                u[i] = obstacle[i];
            }
        }
        solve_rows(k, &active, &vec![0.0; n], u, LINEAR_TOL.min(cfg.tol), sweeps)?;
    }
    let residual = rows
        .iter()
        .map(|&i| (u[i] - k.apply_row(i, u)).min(u[i] - obstacle[i]).abs())
        .fold(0.0, f64::max);
    Err(Error::NotConverged {
        iterations: max_policies,
        residual,
    })
}

/// Independent oracle for `reduce` in the cone `W`: value iteration from
/// `u_0 = φ`, stopping once a sweep moves no value by `tol` or more.
pub fn value_iteration_oracle(grid: &MarkovGrid, phi: &GridFunction, tol: f64) -> Result<GridFunction> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    if let Some(i) = phi.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Precondition(format!(
            "value-iteration oracle needs φ ≥ 0; φ({i}) = {}",
            phi[i]
        )));
    }
    let mut u = phi.values().to_vec();
    value_iteration(grid, phi.values(), grid.interior(), &mut u, tol, usize::MAX)?;
    GridFunction::new(u)
}

fn check_in_w(grid: &MarkovGrid, v: &GridFunction, what: &str) -> Result<()> {
    v.check_len(grid)?;
    v.check_finite()?;
    let tol = 1e-9 * (1.0 + v.sup_norm());
    let m = crate::cone::is_superharmonic(grid, v, &SuperharmonicCone::w_cone(grid), tol)?;
    if m.member {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "{what} is not in the cone W (residual {} at node {:?})",
            m.worst_residual, m.worst_node
        )))
    }
}

/// `R_v^A = R_{v·1_A}` in the cone `W`, for `v ∈ W`.
pub fn reduce_on_set(grid: &MarkovGrid, v: &GridFunction, a: &NodeSet, cfg: &SolverConfig) -> Result<EnvelopeResult> {
    check_in_w(grid, v, "v")?;
    reduce(grid, &v.restrict(a), &SuperharmonicCone::w_cone(grid), cfg)
}

/// A balayage measure with the record of its post-verification.
#[derive(Clone, Debug)]
pub struct BalayageMeasure {
    pub x: usize,
    pub measure: Measure,
    /// Number of cone members `v` for which `∫v dε_x^A = R_v^A(x)` was checked.
    pub verified_against: usize,
    pub max_discrepancy: f64,
}

/// Computes `ε_x^A`: where the chain from `x` first visits `A` (time zero
/// included), with mass lost to absorption before reaching `A` dropped.
///
/// The result is checked against `R_v^A(x)` for `v = u_0`, `v = G1` and five
/// pseudo-random members of `W`; a mismatch above `tol·(1+‖v‖∞)` is an
/// internal-consistency error.
pub fn balayage_measure(grid: &MarkovGrid, x: usize, a: &NodeSet, tol: f64) -> Result<BalayageMeasure> {
    grid.check_node(x)?;
    if a.universe() != grid.n() {
        return Err(Error::DimensionMismatch {
            expected: grid.n(),
            found: a.universe(),
        });
    }
    let measure = hitting_distribution(grid, x, a)?;
    let mut tests = vec![reference_u0(grid), exit_time(grid)?];
    let mut rng = ChaCha8Rng::seed_from_u64(0xba1a_0000 ^ (x as u64) ^ ((a.len() as u64) << 32));
    for _ in 0..5 {
        tests.push(random_w_member(grid, &mut rng)?);
    }
    let cfg = SolverConfig::with_tol(1e-13).solver(Solver::Policy);
    let mut worst: f64 = 0.0;
    for v in &tests {
        let r = reduce_on_set(grid, v, a, &cfg)?;
        let lhs = measure.integrate(v);
        let gap = (lhs - r.u[x]).abs();
        if gap > tol * (1.0 + v.sup_norm()) {
            return Err(Error::InternalConsistency(format!(
                "balayage of node {x}: ∫v dε = {lhs} but R_v^A(x) = {}",
                r.u[x]
            )));
        }
        worst = worst.max(gap);
    }
    Ok(BalayageMeasure {
        x,
        measure,
        verified_against: tests.len(),
        max_discrepancy: worst,
    })
}

/// First-visit distribution of `A` without post-verification.
pub fn hitting_distribution(grid: &MarkovGrid, x: usize, a: &NodeSet) -> Result<Measure> {
    if a.contains(x) {
        return Ok(Measure::dirac(grid.n(), x));
    }
    Ok(harmonic_measure(grid, x, &a.complement())?.measure)
}

/// Lower-semicontinuous regularization. Every function on a finite discrete
/// space is continuous, so this is the identity.
pub fn regularize(u: &GridFunction) -> GridFunction {
    u.clone()
}

/// A node set standing in for a polar set. Finite grids have no nonempty
/// polar sets; the role is declared, not proved.
#[derive(Clone, Debug, PartialEq)]
pub struct NegligibleSet {
    pub nodes: NodeSet,
}

impl NegligibleSet {
    pub const ROLE: &'static str = "polar-analog";

    pub fn new(nodes: NodeSet) -> Self {
        Self { nodes }
    }

    pub fn declared_role(&self) -> &'static str {
        Self::ROLE
    }
}

/// Regularized reduction that ignores a declared negligible set:
/// `R_{φ·1_{X∖P}}`, the refinement-limit stand-in for `R̂_φ`.
pub fn regularized_reduction(
    grid: &MarkovGrid,
    phi: &GridFunction,
    negligible: &NegligibleSet,
    cfg: &SolverConfig,
) -> Result<GridFunction> {
    let off = phi.restrict(&negligible.nodes.complement());
    Ok(regularize(
        &reduce(grid, &off, &SuperharmonicCone::w_cone(grid), cfg)?.u,
    ))
}

#[derive(Clone, Debug)]
pub struct PolarSplit {
    /// `R_φ`.
    pub lhs: GridFunction,
    /// `(φ·1_P) ∨ R_{φ·1_{X∖P}}`.
    pub rhs: GridFunction,
    pub gap: f64,
}

/// Both sides of the polar decomposition of `R_φ` on a fixed grid. The gap
/// is reported, not asserted: on a finite grid `P` carries positive capacity.
pub fn polar_split(
    grid: &MarkovGrid,
    phi: &GridFunction,
    negligible: &NegligibleSet,
    cfg: &SolverConfig,
) -> Result<PolarSplit> {
    phi.check_len(grid)?;
    if let Some(i) = phi.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Precondition(format!(
            "φ must be nonnegative; φ({i}) = {}",
            phi[i]
        )));
    }
    let lhs = reduce(grid, phi, &SuperharmonicCone::w_cone(grid), cfg)?.u;
    let on_p = phi.restrict(&negligible.nodes);
    let rhs = on_p.vee(&regularized_reduction(grid, phi, negligible, cfg)?);
    let gap = lhs.distance(&rhs);
    Ok(PolarSplit { lhs, rhs, gap })
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

    fn close(a: &GridFunction, b: &[f64], tol: f64) -> bool {
        a.values().iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    const SPIKE: [f64; 5] = [0., 0., 1., 0., 0.];
    const TENT: [f64; 5] = [0., 0.5, 1., 0.5, 0.];

    #[test]
    fn spike_reduces_to_tent_with_every_solver() {
        let g = p5();
        let w = SuperharmonicCone::w_cone(&g);
        for solver in [Solver::Psor, Solver::Value, Solver::Policy] {
            let r = reduce(&g, &f(&SPIKE), &w, &SolverConfig::default().solver(solver)).unwrap();
            assert!(close(&r.u, &TENT, 1e-12), "{solver:?}: {:?}", r.u);
            assert!(r.residual <= 1e-10);
            assert_eq!(r.active_set, vec![0, 2, 4]);
        }
    }

    #[test]
    fn cone_member_is_fixed() {
        let g = p5();
        let u = f(&[0., 3., 4., 3., 0.]);
        let r = reduce(&g, &u, &SuperharmonicCone::w_cone(&g), &SolverConfig::default()).unwrap();
        assert_eq!(r.u, u);
        assert_eq!(r.active_set, vec![0, 1, 2, 3, 4]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn zero_reduces_to_zero() {
        let g = p5();
        let r = reduce(
            &g,
            &GridFunction::zeros(5),
            &SuperharmonicCone::w_cone(&g),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(r.u.values(), &[0.0; 5]);
    }

    #[test]
    fn infinite_obstacle_rejected() {
        let g = p5();
        let phi = f(&[0., f64::INFINITY, 0., 0., 0.]);
        assert!(matches!(
            reduce(&g, &phi, &SuperharmonicCone::w_cone(&g), &SolverConfig::default()),
            Err(Error::InfiniteValue { node: 1 })
        ));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let g = build_lattice(&[30], 1.0, &[]).unwrap();
        let mut phi = vec![0.0; 30];
        phi[15] = 1.0;
        let cfg = SolverConfig {
            max_iter: Some(3),
            ..SolverConfig::default()
        };
        match reduce(&g, &f(&phi), &SuperharmonicCone::w_cone(&g), &cfg) {
            Err(Error::NotConverged {
                iterations: 3,
                residual,
            }) => assert!(residual > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn w_cone_clips_negative_obstacle_on_absorbing_nodes() {
        let g = p5();
        let phi = f(&[-1., 0., 1., 0., -2.]);
        let w = reduce(&g, &phi, &SuperharmonicCone::w_cone(&g), &SolverConfig::default()).unwrap();
        assert!(close(&w.u, &TENT, 1e-12));
        let s = reduce(&g, &phi, &SuperharmonicCone::s_cone(&g), &SolverConfig::default()).unwrap();
        // u1 = (−1 + 1)/2, u3 = (1 − 2)/2 clipped below by φ(3) = 0.
        assert!(close(&s.u, &[-1., 0., 1., 0., -2.], 1e-12));
    }

    #[test]
    fn oracle_iterates() {
        let g = p5();
        let mut u = SPIKE.to_vec();
        let sweeps = value_iteration(&g, &SPIKE, g.interior(), &mut u, 1e-10, 100).unwrap();
        assert_eq!(sweeps, 2);
        assert_eq!(u, TENT.to_vec());
        let in_cone = [0., 3., 4., 3., 0.];
        let mut u = in_cone.to_vec();
        assert_eq!(
            value_iteration(&g, &in_cone, g.interior(), &mut u, 1e-10, 100).unwrap(),
            1
        );
        assert_eq!(
            value_iteration_oracle(&g, &GridFunction::zeros(5), 1e-10)
                .unwrap()
                .values(),
            &[0.0; 5]
        );
    }

    #[test]
    fn reduction_on_a_set() {
        let g = p5();
        let u0 = reference_u0(&g);
        let cfg = SolverConfig::default();
        let a = NodeSet::from_ids(5, [2]).unwrap();
        assert!(close(&reduce_on_set(&g, &u0, &a, &cfg).unwrap().u, &TENT, 1e-12));
        assert_eq!(reduce_on_set(&g, &u0, &NodeSet::full(5), &cfg).unwrap().u, u0);
        assert_eq!(
            reduce_on_set(&g, &u0, &NodeSet::empty(5), &cfg).unwrap().u.values(),
            &[0.0; 5]
        );
        assert!(reduce_on_set(&g, &f(&SPIKE), &a, &cfg).is_err());
    }

    #[test]
    fn balayage_examples() {
        let g = p5();
        let b = balayage_measure(&g, 1, &NodeSet::from_ids(5, [2]).unwrap(), 1e-9).unwrap();
        assert!((b.measure.weights()[2] - 0.5).abs() < 1e-12);
        assert!((b.measure.mass() - 0.5).abs() < 1e-12);
        assert_eq!(b.verified_against, 7);
        let b = balayage_measure(&g, 3, &NodeSet::from_ids(5, [3]).unwrap(), 1e-9).unwrap();
        assert_eq!(b.measure, Measure::dirac(5, 3));
        let b = balayage_measure(&g, 2, &NodeSet::from_ids(5, [0, 4]).unwrap(), 1e-9).unwrap();
        assert!((b.measure.weights()[0] - 0.5).abs() < 1e-12);
        assert!((b.measure.weights()[4] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regularization_is_identity() {
        let g = p5();
        let u = f(&[0.3, -1., f64::INFINITY, 2., 0.]);
        assert_eq!(regularize(&u), u);
        let r = reduce(&g, &f(&SPIKE), &SuperharmonicCone::w_cone(&g), &SolverConfig::default()).unwrap();
        assert_eq!(f(&SPIKE).vee(&regularize(&r.u)), r.u);
        let p = NegligibleSet::new(NodeSet::from_ids(5, [2]).unwrap());
        assert_eq!(p.declared_role(), "polar-analog");
        let rr = regularized_reduction(&g, &f(&SPIKE), &p, &SolverConfig::default()).unwrap();
        assert_eq!(rr.values(), &[0.0; 5]);
    }

    #[test]
    fn polar_split_examples() {
        let g = p5();
        let cfg = SolverConfig::default();
        let phi = f(&SPIKE);
        let s = polar_split(&g, &phi, &NegligibleSet::new(NodeSet::from_ids(5, [2]).unwrap()), &cfg).unwrap();
        assert!(close(&s.lhs, &TENT, 1e-12));
        assert_eq!(s.rhs.values(), &SPIKE);
        assert!((s.gap - 0.5).abs() < 1e-12);
        let s = polar_split(&g, &phi, &NegligibleSet::new(NodeSet::empty(5)), &cfg).unwrap();
        assert_eq!(s.gap, 0.0);
        let s = polar_split(&g, &phi, &NegligibleSet::new(NodeSet::full(5)), &cfg).unwrap();
        assert_eq!(s.rhs.values(), &SPIKE);
        assert!((s.gap - s.lhs.sub(&phi).max_value()).abs() < 1e-15);
    }
}
