//! Exact rational verifiers for tiny grids.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::cone::SuperharmonicCone;
use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::grid::MarkovGrid;

pub const MAX_ORACLE_NODES: usize = 10;
pub const MAX_VERTEX_ROWS: usize = 8;
const MAX_ROUNDS: usize = 10_000;
const FALLBACK_TOL: f64 = 1e-14;

pub fn rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::InvalidInput(format!("{v} is not a finite number")))
}

pub fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

struct ExactKernel {
    rows: Vec<Vec<(usize, BigRational)>>,
}

impl ExactKernel {
    fn new(grid: &MarkovGrid) -> Result<Self> {
        let rows = (0..grid.n())
            .map(|i| {
                grid.kernel()
                    .row(i)
                    .map(|(j, p)| Ok((j, rational(p)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    fn apply_row(&self, i: usize, u: &[BigRational]) -> BigRational {
        self.rows[i]
            .iter()
            .fold(BigRational::zero(), |acc, (j, p)| acc + p * &u[*j])
    }
}

/// Solves `A z = b` exactly by Gaussian elimination; `None` if singular.
fn solve_exact(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = a[col][col].recip();
        for c in col..n {
            a[col][c] = &a[col][c] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..n {
                    let t = &f * &a[col][c];
                    a[r][c] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some(b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleEnvelope {
    pub values: Vec<BigRational>,
    /// Set when the exact iteration hit its round limit and a floating
    /// iteration at tolerance 1e-14 produced the values instead.
    pub approximate: bool,
    pub rounds: usize,
}

impl OracleEnvelope {
    pub fn to_function(&self) -> GridFunction {
        GridFunction::new(self.values.iter().map(to_f64).collect()).expect("finite rationals")
    }
}

/// `R_φ` in the cone `W`, in exact arithmetic, for grids of at most ten nodes.
///
/// Each round applies one exact Bellman step `max(φ⁺, Pu)` to select the
/// continuation set, then solves the linear system `u = Pu` on that set with
/// `u = φ⁺` elsewhere. The values increase monotonically and the loop ends
/// when the Bellman step leaves `u` unchanged, which is the exact fixed point.
pub fn exact_envelope_small(grid: &MarkovGrid, phi: &GridFunction) -> Result<OracleEnvelope> {
    let n = grid.n();
    if n > MAX_ORACLE_NODES {
        return Err(Error::TooLarge(format!(
            "exact oracle takes at most {MAX_ORACLE_NODES} nodes, got {n}"
        )));
    }
    phi.check_len(grid)?;
    phi.check_finite()?;
    let kernel = ExactKernel::new(grid)?;
    let psi: Vec<BigRational> = phi
        .values()
        .iter()
        .map(|&v| rational(v.max(0.0)))
        .collect::<Result<_>>()?;
    let mut u = psi.clone();
    let mut cont = vec![false; n];
    for round in 1..=MAX_ROUNDS {
        let mut changed = false;
        for &i in grid.interior() {
            let pu = kernel.apply_row(i, &u);
            let want = if cont[i] { pu >= psi[i] } else { pu > psi[i] };
            if want != cont[i] {
                cont[i] = want;
                changed = true;
            }
        }
        if !changed {
            let ok = grid.interior().iter().all(|&i| {
                let pu = kernel.apply_row(i, &u);
                u[i] >= psi[i] && u[i] >= pu && (u[i] == psi[i] || u[i] == pu)
            });
            if !ok {
                return Err(Error::InternalConsistency(
                    "exact oracle reached a stable policy that is not a fixed point".into(),
                ));
            }
            return Ok(OracleEnvelope {
                values: u,
                approximate: false,
                rounds: round,
            });
        }
        let c: Vec<usize> = (0..n).filter(|&i| cont[i]).collect();
        let idx = |j: usize| c.binary_search(&j).ok();
        let mut a = vec![vec![BigRational::zero(); c.len()]; c.len()];
        let mut b = vec![BigRational::zero(); c.len()];
        for (r, &i) in c.iter().enumerate() {
            a[r][r] += BigRational::one();
            for (j, p) in &kernel.rows[i] {
                match idx(*j) {
                    Some(cj) => a[r][cj] -= p,
                    None => b[r] += p * &psi[*j],
                }
            }
        }
        let z = solve_exact(a, b).ok_or_else(|| Error::NonGreenian { nodes: c.clone() })?;
        u = psi.clone();
        for (r, &i) in c.iter().enumerate() {
            u[i] = z[r].clone();
        }
    }
    fallback(grid, phi)
}

fn fallback(grid: &MarkovGrid, phi: &GridFunction) -> Result<OracleEnvelope> {
    let psi = phi.positive_part();
    let mut u = psi.values().to_vec();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut step = 0.0f64;
        let next: Vec<f64> = (0..grid.n())
            .map(|i| {
                if grid.is_interior(i) {
                    psi[i].max(grid.kernel().apply_row(i, &u))
                } else {
                    psi[i]
                }
            })
            .collect();
        for (a, b) in next.iter().zip(&u) {
            step = step.max((a - b).abs());
        }
        u = next;
        if step < FALLBACK_TOL {
            break;
        }
        if rounds > 100_000_000 {
            return Err(Error::NotConverged {
                iterations: rounds,
                residual: step,
            });
        }
    }
    Ok(OracleEnvelope {
        values: u.iter().map(|&v| rational(v)).collect::<Result<_>>()?,
        approximate: true,
        rounds,
    })
}

/// A vertex of the λ-polytope at `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    /// Support `F` of `λ`; empty for `λ = 0`.
    pub support: Vec<usize>,
    pub lambda: Vec<(usize, BigRational)>,
    /// `ε_x − Mᵀλ` per node.
    pub measure: Vec<BigRational>,
    pub value: BigRational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertexOptimum {
    pub value: BigRational,
    pub optimal: Vec<Vertex>,
    pub vertices_examined: usize,
}

/// The vertices of the λ-polytope at `x`, independent of the objective.
///
/// They are `λ = 0` and, for each set `F` of rows containing `x` in which
/// every node is reachable from `x` without leaving `F`, the solution of
/// `(I − P_FF)ᵀ λ_F = e_x`.
pub fn polytope_vertices(grid: &MarkovGrid, x: usize, cone: &SuperharmonicCone) -> Result<Vec<Vertex>> {
    grid.check_node(x)?;
    let n = grid.n();
    let mut dirac = vec![BigRational::zero(); n];
    dirac[x] = BigRational::one();
    let zero_vertex = Vertex {
        support: Vec::new(),
        lambda: Vec::new(),
        measure: dirac.clone(),
        value: BigRational::zero(),
    };
    if !cone.is_row(x) {
        return Ok(vec![zero_vertex]);
    }
    let others: Vec<usize> = cone.rows().iter().copied().filter(|&i| i != x).collect();
    if others.len() + 1 > MAX_VERTEX_ROWS {
        return Err(Error::TooLarge(format!(
            "vertex enumeration takes at most {MAX_VERTEX_ROWS} rows, got {}",
            others.len() + 1
        )));
    }
    let kernel = ExactKernel::new(grid)?;
    let mut out = vec![zero_vertex];
    for mask in 0u32..(1u32 << others.len()) {
        let mut f = vec![x];
        f.extend(
            others
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &i)| i),
        );
        f.sort_unstable();
        if !reachable_within(grid, x, &f) {
            continue;
        }
        let k = f.len();
        let pos = |j: usize| f.binary_search(&j).ok();
        // (I − P_FF)ᵀ λ = e_x: equation r reads λ_r − Σ_i λ_i P_{i r} = δ_{x r}.
        let mut a = vec![vec![BigRational::zero(); k]; k];
        for (ci, &i) in f.iter().enumerate() {
            a[ci][ci] += BigRational::one();
            for (j, p) in &kernel.rows[i] {
                if let Some(rj) = pos(*j) {
                    a[rj][ci] -= p;
                }
            }
        }
        let b: Vec<BigRational> = f
            .iter()
            .map(|&i| {
                if i == x {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        let lam = solve_exact(a, b).ok_or_else(|| Error::NonGreenian { nodes: f.clone() })?;
        if lam.iter().any(|l| !l.is_positive()) {
            return Err(Error::InternalConsistency(format!(
                "vertex solve on {f:?} produced a non-positive multiplier"
            )));
        }
        let mut measure = dirac.clone();
        for (&i, l) in f.iter().zip(&lam) {
            measure[i] -= l;
            for (j, p) in &kernel.rows[i] {
                measure[*j] += l * p;
            }
        }
        if measure.iter().any(|w| w.is_negative()) {
            return Err(Error::InternalConsistency(format!(
                "vertex on {f:?} has a negative measure weight"
            )));
        }
        out.push(Vertex {
            support: f.clone(),
            lambda: f.iter().copied().zip(lam).collect(),
            measure,
            value: BigRational::zero(),
        });
    }
    Ok(out)
}

fn reachable_within(grid: &MarkovGrid, x: usize, f: &[usize]) -> bool {
    let mut seen = vec![false; grid.n()];
    seen[x] = true;
    let mut stack = vec![x];
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for (j, _) in grid.kernel().row(i) {
            if !seen[j] && f.binary_search(&j).is_ok() {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == f.len()
}

/// Evaluates `⟨ψ, μ⟩` at each vertex, with `ψ` the obstacle of `cone`, and
/// returns the exact maximum with every vertex attaining it.
pub fn evaluate_vertices(vertices: &[Vertex], phi: &GridFunction, cone: &SuperharmonicCone) -> Result<VertexOptimum> {
    let psi: Vec<BigRational> = cone
        .obstacle(phi)
        .values()
        .iter()
        .map(|&v| rational(v))
        .collect::<Result<_>>()?;
    let mut scored: Vec<Vertex> = vertices
        .iter()
        .map(|v| {
            let value = v
                .measure
                .iter()
                .zip(&psi)
                .fold(BigRational::zero(), |acc, (w, p)| acc + w * p);
            Vertex { value, ..v.clone() }
        })
        .collect();
    let best = scored
        .iter()
        .map(|v| v.value.clone())
        .max()
        .ok_or_else(|| Error::InternalConsistency("no vertices".into()))?;
    let examined = scored.len();
    scored.retain(|v| v.value == best);
    Ok(VertexOptimum {
        value: best,
        optimal: scored,
        vertices_examined: examined,
    })
}

/// `J_φ(x)` over `cone` by exhaustive vertex enumeration, exactly.
pub fn vertex_enumeration_lp(
    grid: &MarkovGrid,
    phi: &GridFunction,
    x: usize,
    cone: &SuperharmonicCone,
) -> Result<VertexOptimum> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    let vertices = polytope_vertices(grid, x, cone)?;
    evaluate_vertices(&vertices, phi, cone)
}

/// `p/q` as a rational, for tests and fixtures.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_lattice;
    use crate::instances::random_jump_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p5() -> MarkovGrid {
        build_lattice(&[5], 1.0, &[]).unwrap()
    }

    fn f(v: &[f64]) -> GridFunction {
        GridFunction::new(v.to_vec()).unwrap()
    }

    #[test]
    fn spike_is_exact_tent() {
        let r = exact_envelope_small(&p5(), &f(&[0., 0., 1., 0., 0.])).unwrap();
        assert!(!r.approximate);
        assert_eq!(
            r.values,
            vec![ratio(0, 1), ratio(1, 2), ratio(1, 1), ratio(1, 2), ratio(0, 1)]
        );
    }

    #[test]
    fn trivial_envelopes() {
        let g = p5();
        let z = exact_envelope_small(&g, &GridFunction::zeros(5)).unwrap();
        assert!(z.values.iter().all(|v| v.is_zero()));
        let g1 = f(&[0., 3., 4., 3., 0.]);
        let r = exact_envelope_small(&g, &g1).unwrap();
        assert_eq!(r.to_function(), g1);
    }

    #[test]
    fn too_large() {
        let g = build_lattice(&[11], 1.0, &[]).unwrap();
        assert!(matches!(
            exact_envelope_small(&g, &GridFunction::zeros(11)),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn vertex_value_at_node_one() {
        let g = p5();
        let w = SuperharmonicCone::w_cone(&g);
        let r = vertex_enumeration_lp(&g, &f(&[0., 0., 1., 0., 0.]), 1, &w).unwrap();
        assert_eq!(r.value, ratio(1, 2));
        // F = {1}: λ = 1, μ = δ_0/2 + δ_2/2.
        assert!(r.optimal.iter().any(|v| v.support == vec![1]
            && v.measure == vec![ratio(1, 2), ratio(0, 1), ratio(1, 2), ratio(0, 1), ratio(0, 1)]));
    }

    #[test]
    fn vertex_trivial_cases() {
        let g = p5();
        let w = SuperharmonicCone::w_cone(&g);
        let phi = f(&[0.25, 0., 1., 0., 0.]);
        assert_eq!(vertex_enumeration_lp(&g, &phi, 0, &w).unwrap().value, ratio(1, 4));
        let c = GridFunction::constant(5, 0.75);
        for x in 0..5 {
            assert_eq!(vertex_enumeration_lp(&g, &c, x, &w).unwrap().value, ratio(3, 4));
        }
    }

    #[test]
    fn vertex_count_on_path() {
        // From the center of P5 the connected row sets containing 2 are
        // {2}, {1,2}, {2,3}, {1,2,3}; with λ = 0 that is five vertices.
        let g = p5();
        let v = polytope_vertices(&g, 2, &SuperharmonicCone::w_cone(&g)).unwrap();
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn oracles_agree_on_jump_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let g = random_jump_grid(8, &mut rng).unwrap();
            let w = SuperharmonicCone::w_cone(&g);
            let phi = GridFunction::new((0..8).map(|i| ((i * 5) % 7) as f64 / 8.0).collect()).unwrap();
            let r = exact_envelope_small(&g, &phi).unwrap();
            for x in 0..8 {
                let v = vertex_enumeration_lp(&g, &phi, x, &w).unwrap();
                assert_eq!(v.value, r.values[x]);
            }
        }
    }
}
