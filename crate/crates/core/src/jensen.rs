//! Jensen measures and the envelope `J_φ`.
//!
//! For a cone with constraint matrix `M` (rows of `I−P` at the interior
//! nodes of `U`) a measure `μ` is Jensen for `x` when `ε_x − μ = Mᵀλ` for
//! some `λ ≥ 0`; with nonnegativity imposed a slack `σ ≥ 0` is added,
//! `ε_x − μ = Mᵀλ + σ`. The envelope at `x` is the linear program
//!
//! ```text
//! max  ψ(x) + Σ_i λ_i ((Pψ)_i − ψ_i)   s.t.  (I − P_RR)ᵀ λ ≤ e_x,  λ ≥ 0
//! ```
//!
//! over the rows `R`, whose dual is the obstacle problem solved by
//! [`reduce`](crate::reduite::reduce).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{is_superharmonic, SuperharmonicCone};
use crate::error::{Error, Result};
use crate::exhaustion::Exhaustion;
use crate::function::{GridFunction, Measure};
use crate::grid::{MarkovGrid, NodeSet};
use crate::lp::{LinearProgram, LpOutcome};
use crate::potential::harmonic_extension;
use crate::reduite::{reduce, SolverConfig};

/// Largest number of constraint rows a single envelope LP may carry.
pub const MAX_LP_ROWS: usize = 2000;

/// Tolerance for the identity `ε_x − μ − σ = Mᵀλ`.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// A Jensen measure for `x` on a subdomain, with its membership certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct JensenMeasure {
    pub x: usize,
    pub domain: Vec<usize>,
    pub measure: Measure,
    /// Sparse `λ ≥ 0` over interior nodes of the subdomain.
    pub certificate: Vec<(usize, f64)>,
    /// Sparse `σ ≥ 0`; empty for cones without nonnegativity.
    pub slack: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureJson {
    pub x: usize,
    #[serde(rename = "U")]
    pub domain: Vec<usize>,
    pub support: Vec<(usize, f64)>,
    pub certificate: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slack: Vec<(usize, f64)>,
}

impl JensenMeasure {
    pub fn value(&self, f: &GridFunction) -> f64 {
        self.measure.integrate(f)
    }

    /// `max_j |ε_x − μ − σ − Mᵀλ|_j`.
    pub fn certificate_residual(&self, grid: &MarkovGrid) -> f64 {
        let mut d: Vec<f64> = self.measure.weights().iter().map(|w| -w).collect();
        d[self.x] += 1.0;
        for &(j, s) in &self.slack {
            d[j] -= s;
        }
        for &(i, lam) in &self.certificate {
            d[i] -= lam;
            for (j, p) in grid.kernel().row(i) {
                d[j] += lam * p;
            }
        }
        d.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_json(&self) -> MeasureJson {
        MeasureJson {
            x: self.x,
            domain: self.domain.clone(),
            support: self.measure.support(),
            certificate: self.certificate.clone(),
            slack: self.slack.clone(),
        }
    }
}

/// Outcome of a membership test.
#[derive(Clone, Debug, PartialEq)]
pub enum JensenVerdict {
    Member {
        certificate: Vec<(usize, f64)>,
        slack: Vec<(usize, f64)>,
        residual: f64,
    },
    /// A cone member `v` with `∫v dμ = v(x) + excess`, `excess > 0`.
    Violated { direction: GridFunction, excess: f64 },
}

impl JensenVerdict {
    pub fn is_member(&self) -> bool {
        matches!(self, JensenVerdict::Member { .. })
    }
}

fn check_support(grid: &MarkovGrid, mu: &Measure, x: usize, cone: &SuperharmonicCone) -> Result<()> {
    grid.check_node(x)?;
    if mu.len() != grid.n() {
        return Err(Error::DimensionMismatch {
            expected: grid.n(),
            found: mu.len(),
        });
    }
    if cone.domain().universe() != grid.n() {
        return Err(Error::DimensionMismatch {
            expected: grid.n(),
            found: cone.domain().universe(),
        });
    }
    if !cone.domain().contains(x) {
        return Err(Error::Domain(format!("node {x} is not in the subdomain")));
    }
    if let Some((j, _)) = mu.support().into_iter().find(|&(j, _)| !cone.closure().contains(j)) {
        return Err(Error::Domain(format!(
            "measure charges node {j} outside the closure of the subdomain"
        )));
    }
    Ok(())
}

/// Decides whether `ε_x − μ` lies in `{Mᵀλ : λ ≥ 0}` (plus `{σ ≥ 0}` for
/// nonnegative cones), allowing a componentwise slack of `tol`.
pub fn is_jensen(
    grid: &MarkovGrid,
    mu: &Measure,
    x: usize,
    cone: &SuperharmonicCone,
    tol: f64,
) -> Result<JensenVerdict> {
    check_support(grid, mu, x, cone)?;
    let n = grid.n();
    let mass = mu.mass();
    if mass > 1.0 + tol {
        return Ok(JensenVerdict::Violated {
            direction: GridFunction::constant(n, 1.0),
            excess: mass - 1.0,
        });
    }
    let nodes: Vec<usize> = cone.closure().ids();
    let rows = cone.rows();
    let k = rows.len();
    let mut d = vec![0.0; n];
    for (j, w) in mu.support() {
        d[j] -= w;
    }
    d[x] += 1.0;

    // (Mᵀλ)_j = λ_j·[j row] − Σ_i λ_i P_ij.
    let mut mt = vec![0.0; nodes.len() * k];
    let pos = |j: usize| nodes.binary_search(&j).expect("row neighbours lie in the closure");
    for (c, &i) in rows.iter().enumerate() {
        mt[pos(i) * k + c] += 1.0;
        for (j, p) in grid.kernel().row(i) {
            mt[pos(j) * k + c] -= p;
        }
    }
    let two_sided = !cone.nonnegative();
    let m = if two_sided { 2 * nodes.len() } else { nodes.len() };
    let mut a = Vec::with_capacity(m * k);
    let mut b = Vec::with_capacity(m);
    a.extend_from_slice(&mt);
    b.extend(nodes.iter().map(|&j| d[j] + tol));
    if two_sided {
        a.extend(mt.iter().map(|v| -v));
        b.extend(nodes.iter().map(|&j| -d[j] + tol));
    }
    let lp = LinearProgram::new(vec![0.0; k], a, b)?;
    match lp.solve()? {
        LpOutcome::Optimal(sol) => {
            let certificate: Vec<(usize, f64)> = rows
                .iter()
                .zip(&sol.x)
                .filter(|(_, &l)| l != 0.0)
                .map(|(&i, &l)| (i, l))
                .collect();
            let mut slack = Vec::new();
            if cone.nonnegative() {
                for (r, &j) in nodes.iter().enumerate() {
                    let mtl: f64 = (0..k).map(|c| mt[r * k + c] * sol.x[c]).sum();
                    let s = d[j] - mtl;
                    if s > 0.0 {
                        slack.push((j, s));
                    }
                }
            }
            let jm = JensenMeasure {
                x,
                domain: cone.domain().ids(),
                measure: mu.clone(),
                certificate: certificate.clone(),
                slack: slack.clone(),
            };
            Ok(JensenVerdict::Member {
                certificate,
                slack,
                residual: jm.certificate_residual(grid),
            })
        }
        LpOutcome::Infeasible { farkas, .. } => {
            let mut v = vec![0.0; n];
            for (r, &j) in nodes.iter().enumerate() {
                v[j] = farkas[r];
                if two_sided {
                    v[j] -= farkas[nodes.len() + r];
                }
            }
            let scale = v.iter().fold(0.0f64, |s, t| s.max(t.abs()));
            if scale == 0.0 {
                return Err(Error::InternalConsistency(
                    "empty separating direction from an infeasible membership LP".into(),
                ));
            }
            let direction = GridFunction::new(v.iter().map(|t| t / scale).collect())?;
            let excess = mu.integrate(&direction) - direction[x];
            let member = is_superharmonic(grid, &direction, cone, CERTIFICATE_TOL)?;
            if !member.member || excess <= 0.0 {
                return Err(Error::InternalConsistency(format!(
                    "separating direction fails verification (cone residual {}, excess {excess})",
                    member.worst_residual
                )));
            }
            Ok(JensenVerdict::Violated { direction, excess })
        }
        LpOutcome::Unbounded { .. } => Err(Error::InternalConsistency(
            "feasibility LP with zero objective reported unbounded".into(),
        )),
    }
}

/// Per-node provenance of an envelope value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    /// Solved by the simplex method.
    Optimal,
    /// No constraint row at the node; `ε_x` is the only candidate.
    Direct,
    /// Node outside the closure of the subdomain; the value is the obstacle.
    Outside,
}

#[derive(Clone, Debug)]
pub struct JensenOptions {
    /// Record an optimal measure for every node.
    pub measures: bool,
    /// Solver used for the reduction the envelope is compared against.
    pub reduce: SolverConfig,
}

impl Default for JensenOptions {
    fn default() -> Self {
        Self {
            measures: false,
            reduce: SolverConfig::with_tol(1e-12),
        }
    }
}

impl JensenOptions {
    pub fn with_measures(mut self) -> Self {
        self.measures = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct EnvelopeReport {
    pub j: GridFunction,
    /// The reduction over the same cone.
    pub reduced: GridFunction,
    pub measures: Option<Vec<JensenMeasure>>,
    /// `max_x |J(x) − R_φ(x)|`.
    pub duality_gap: f64,
    pub lp_status: Vec<LpStatus>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeReportJson {
    pub values: Vec<f64>,
    pub reduced: Vec<f64>,
    pub duality_gap: f64,
    pub lp_status: Vec<LpStatus>,
}

impl EnvelopeReport {
    pub fn to_json(&self) -> EnvelopeReportJson {
        EnvelopeReportJson {
            values: self.j.values().to_vec(),
            reduced: self.reduced.values().to_vec(),
            duality_gap: self.duality_gap,
            lp_status: self.lp_status.clone(),
        }
    }
}

/// The λ-LP at one node.
struct NodeLp {
    value: f64,
    lambda: Vec<(usize, f64)>,
    status: LpStatus,
}

/// Rows reachable from `x` through rows. `λ` vanishes on every other row,
/// so the LP may be restricted to these.
fn reachable_rows(grid: &MarkovGrid, cone: &SuperharmonicCone, x: usize) -> Vec<usize> {
    let mut seen = vec![false; grid.n()];
    let mut stack = vec![x];
    seen[x] = true;
    let mut out = Vec::new();
    while let Some(i) = stack.pop() {
        out.push(i);
        for (j, _) in grid.kernel().row(i) {
            if !seen[j] && cone.is_row(j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    out.sort_unstable();
    out
}

fn solve_node(grid: &MarkovGrid, psi: &[f64], cone: &SuperharmonicCone, x: usize) -> Result<NodeLp> {
    if !cone.closure().contains(x) {
        return Ok(NodeLp {
            value: psi[x],
            lambda: Vec::new(),
            status: LpStatus::Outside,
        });
    }
    if !cone.is_row(x) {
        return Ok(NodeLp {
            value: psi[x],
            lambda: Vec::new(),
            status: LpStatus::Direct,
        });
    }
    let rows = reachable_rows(grid, cone, x);
    let k = rows.len();
    if k > MAX_LP_ROWS {
        return Err(Error::TooLarge(format!(
            "envelope LP at node {x} has {k} rows (limit {MAX_LP_ROWS})"
        )));
    }
    let kernel = grid.kernel();
    let c: Vec<f64> = rows.iter().map(|&i| kernel.apply_row(i, psi) - psi[i]).collect();
    let mut a = vec![0.0; k * k];
    for (ci, &i) in rows.iter().enumerate() {
        a[ci * k + ci] += 1.0;
        for (j, p) in kernel.row(i) {
            if let Ok(rj) = rows.binary_search(&j) {
                a[rj * k + ci] -= p;
            }
        }
    }
    let b: Vec<f64> = rows.iter().map(|&i| if i == x { 1.0 } else { 0.0 }).collect();
    match LinearProgram::new(c.clone(), a, b)?.solve()? {
        LpOutcome::Optimal(sol) => {
            let value = psi[x] + c.iter().zip(&sol.x).map(|(ci, li)| ci * li).sum::<f64>();
            let lambda = rows
                .iter()
                .zip(&sol.x)
                .filter(|(_, &l)| l != 0.0)
                .map(|(&i, &l)| (i, l))
                .collect();
            Ok(NodeLp {
                value,
                lambda,
                status: LpStatus::Optimal,
            })
        }
        LpOutcome::Unbounded { .. } => Err(Error::Lp(format!(
            "envelope LP at node {x} is unbounded: the subdomain is not Greenian"
        ))),
        LpOutcome::Infeasible { .. } => Err(Error::InternalConsistency(format!(
            "envelope LP at node {x} reported infeasible although λ = 0 is feasible"
        ))),
    }
}

fn measure_from_lambda(
    grid: &MarkovGrid,
    phi: &GridFunction,
    cone: &SuperharmonicCone,
    x: usize,
    lambda: &[(usize, f64)],
) -> Result<JensenMeasure> {
    let n = grid.n();
    let mut raw = vec![0.0; n];
    raw[x] = 1.0;
    for &(i, lam) in lambda {
        raw[i] -= lam;
        for (j, p) in grid.kernel().row(i) {
            raw[j] += lam * p;
        }
    }
    if let Some((j, w)) = raw.iter().enumerate().find(|(_, &w)| w < -CERTIFICATE_TOL) {
        return Err(Error::InternalConsistency(format!(
            "optimal certificate at node {x} yields weight {w} at node {j}"
        )));
    }
    let mut slack = Vec::new();
    if cone.nonnegative() {
        for (j, w) in raw.iter_mut().enumerate() {
            if phi[j] < 0.0 && *w > 0.0 {
                slack.push((j, *w));
                *w = 0.0;
            }
        }
    }
    let jm = JensenMeasure {
        x,
        domain: cone.domain().ids(),
        measure: Measure::from_computed(raw, CERTIFICATE_TOL),
        certificate: lambda.to_vec(),
        slack,
    };
    let residual = jm.certificate_residual(grid);
    if residual > CERTIFICATE_TOL {
        return Err(Error::InternalConsistency(format!(
            "certificate identity at node {x} off by {residual}"
        )));
    }
    Ok(jm)
}

fn check_phi(grid: &MarkovGrid, phi: &GridFunction, cone: &SuperharmonicCone) -> Result<()> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    if cone.domain().universe() != grid.n() {
        return Err(Error::DimensionMismatch {
            expected: grid.n(),
            found: cone.domain().universe(),
        });
    }
    Ok(())
}

/// An optimal Jensen measure at `x` and the value it attains.
#[derive(Clone, Debug)]
pub struct OptimalMeasure {
    pub value: f64,
    pub measure: JensenMeasure,
}

pub fn optimal_measure(
    grid: &MarkovGrid,
    phi: &GridFunction,
    x: usize,
    cone: &SuperharmonicCone,
) -> Result<OptimalMeasure> {
    check_phi(grid, phi, cone)?;
    grid.check_node(x)?;
    if !cone.domain().contains(x) {
        return Err(Error::Domain(format!("node {x} is not in the subdomain")));
    }
    let psi = cone.obstacle(phi);
    let node = solve_node(grid, psi.values(), cone, x)?;
    Ok(OptimalMeasure {
        value: node.value,
        measure: measure_from_lambda(grid, phi, cone, x, &node.lambda)?,
    })
}

/// `J_φ` over `cone` at every node, computed by one LP per constrained node
/// (in parallel), together with the duality gap against the reduction.
pub fn jensen_envelope(
    grid: &MarkovGrid,
    phi: &GridFunction,
    cone: &SuperharmonicCone,
    opts: &JensenOptions,
) -> Result<EnvelopeReport> {
    check_phi(grid, phi, cone)?;
    let psi = cone.obstacle(phi);
    let nodes: Vec<NodeLp> = (0..grid.n())
        .into_par_iter()
        .map(|x| solve_node(grid, psi.values(), cone, x))
        .collect::<Result<_>>()?;
    let measures = if opts.measures {
        Some(
            nodes
                .iter()
                .enumerate()
                .filter(|(_, nl)| nl.status != LpStatus::Outside)
                .map(|(x, nl)| measure_from_lambda(grid, phi, cone, x, &nl.lambda))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let j = GridFunction::new(nodes.iter().map(|nl| nl.value).collect())?;
    let reduced = reduce(grid, phi, cone, &opts.reduce)?.u;
    Ok(EnvelopeReport {
        duality_gap: j.distance(&reduced),
        j,
        reduced,
        measures,
        lp_status: nodes.iter().map(|nl| nl.status).collect(),
    })
}

/// Result of the exhaustion construction of `J'_φ`.
#[derive(Clone, Debug)]
pub struct GeneralEnvelope {
    /// `J'_φ`, the last local envelope.
    pub j_prime: GridFunction,
    /// `J_φ` from the LP over the whole grid.
    pub j: GridFunction,
    /// `R_φ` in the superharmonic cone of the whole grid.
    pub reduced: GridFunction,
    /// Local envelopes `v_n`, extended by `φ` off `U_n`.
    pub levels: Vec<GridFunction>,
    /// Shift heights `a_n`; the harmonic shift on `U_n` is `a_n·h_n`.
    pub shifts: Vec<f64>,
    pub gap_j_jprime: f64,
    pub gap_j_r: f64,
    pub gap_jprime_r: f64,
}

#[derive(Clone, Debug)]
pub struct GeneralOptions {
    pub gap_tol: f64,
    pub reduce: SolverConfig,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            reduce: SolverConfig::with_tol(1e-12),
        }
    }
}

/// Harmonic on the rows of `u` with boundary data one; errors unless the
/// result is strictly positive on `closure(u)`.
fn positive_harmonic(grid: &MarkovGrid, index: usize, u: &NodeSet) -> Result<GridFunction> {
    let rows: Vec<usize> = u.iter().filter(|&i| grid.is_interior(i)).collect();
    let h = harmonic_extension(grid, &rows, &GridFunction::constant(grid.n(), 1.0))?;
    if let Some(i) = grid.closure(u).iter().find(|&i| h[i] <= 0.0) {
        return Err(Error::AssumptionViolated {
            index,
            detail: format!("no strictly positive harmonic function: h({i}) = {}", h[i]),
        });
    }
    Ok(h)
}

/// Local envelopes `v_n` of `φ` on the sets of an exhaustion, each extended
/// by `φ` off `U_n`, with the harmonic shift heights used.
///
/// On `U_n` the obstacle is lifted by `a_n·h_n`, where `h_n` is harmonic on
/// `U_{n+1}` with boundary data one, enveloped by LP and lowered again.
/// Levels that decrease by more than `1e-9·(1+‖φ‖∞)` are an error.
pub fn exhaustion_levels(
    grid: &MarkovGrid,
    phi: &GridFunction,
    exhaustion: &Exhaustion,
) -> Result<(Vec<GridFunction>, Vec<f64>)> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    let sets = exhaustion.sets();
    let harmonics: Vec<GridFunction> = sets
        .iter()
        .enumerate()
        .map(|(k, u)| positive_harmonic(grid, k, u))
        .collect::<Result<_>>()?;
    let mono_tol = 1e-9 * (1.0 + phi.sup_norm());
    let mut levels: Vec<GridFunction> = Vec::with_capacity(sets.len());
    let mut shifts = Vec::with_capacity(sets.len());
    for (k, u) in sets.iter().enumerate() {
        let h = &harmonics[(k + 1).min(sets.len() - 1)];
        let closure = grid.closure(u);
        let a = if closure.iter().all(|i| phi[i] >= 0.0) {
            0.0
        } else {
            closure.iter().map(|i| -phi[i] / h[i]).fold(0.0f64, f64::max) + 1.0
        };
        let shift = GridFunction::new(
            (0..grid.n())
                .map(|i| if closure.contains(i) { a * h[i] } else { 0.0 })
                .collect(),
        )?;
        let cone = SuperharmonicCone::on(grid, u, false)?;
        let lifted = phi.add(&shift);
        let psi = lifted.values();
        let values: Vec<f64> = (0..grid.n())
            .into_par_iter()
            .map(|x| {
                if u.contains(x) {
                    solve_node(grid, psi, &cone, x).map(|nl| nl.value - shift[x])
                } else {
                    Ok(phi[x])
                }
            })
            .collect::<Result<_>>()?;
        let v = GridFunction::new(values)?;
        if let Some(prev) = levels.last() {
            if let Some(i) = (0..grid.n()).find(|&i| v[i] < prev[i] - mono_tol) {
                return Err(Error::InternalConsistency(format!(
                    "exhaustion levels decrease at node {i}: {} then {}",
                    prev[i], v[i]
                )));
            }
        }
        levels.push(v);
        shifts.push(a);
    }
    Ok((levels, shifts))
}

/// `J'_φ` through a declared exhaustion, checked against `J_φ` and `R_φ`;
/// any pairwise gap above `gap_tol·(1+‖φ‖∞)` is an error.
pub fn envelope_general(
    grid: &MarkovGrid,
    phi: &GridFunction,
    exhaustion: &Exhaustion,
    opts: &GeneralOptions,
) -> Result<GeneralEnvelope> {
    let (levels, shifts) = exhaustion_levels(grid, phi, exhaustion)?;
    let scale = 1.0 + phi.sup_norm();
    let s_cone = SuperharmonicCone::s_cone(grid);
    let direct = jensen_envelope(
        grid,
        phi,
        &s_cone,
        &JensenOptions {
            measures: false,
            reduce: opts.reduce,
        },
    )?;
    let j_prime = levels.last().expect("nonempty exhaustion").clone();
    let out = GeneralEnvelope {
        gap_j_jprime: direct.j.distance(&j_prime),
        gap_j_r: direct.j.distance(&direct.reduced),
        gap_jprime_r: j_prime.distance(&direct.reduced),
        j_prime,
        j: direct.j,
        reduced: direct.reduced,
        levels,
        shifts,
    };
    let worst = out.gap_j_jprime.max(out.gap_j_r).max(out.gap_jprime_r);
    if worst > opts.gap_tol * scale {
        return Err(Error::InternalConsistency(format!(
            "envelopes disagree: |J−J'| = {:e}, |J−R| = {:e}, |J'−R| = {:e}",
            out.gap_j_jprime, out.gap_j_r, out.gap_jprime_r
        )));
    }
    Ok(out)
}
