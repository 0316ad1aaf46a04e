//! Constructive approximation schemes: exhaustion envelopes, increasing
//! bounded approximations, decreasing approximations from above, the
//! infimum characterization and the point-spike refinement study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::SuperharmonicCone;
use crate::error::{Error, Result};
use crate::exhaustion::Exhaustion;
use crate::function::GridFunction;
use crate::grid::{build_lattice, MarkovGrid, NodeSet};
use crate::jensen::{jensen_envelope, optimal_measure, JensenMeasure, JensenOptions};
use crate::potential::exit_time;
use crate::reduite::{reduce, SolverConfig};

/// Which cone the local envelopes of an exhaustion live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeLevel {
    /// Nonnegative superharmonic functions on `U_n`; obstacle `φ⁺`.
    W,
    /// Superharmonic functions of either sign on `U_n`; obstacle `φ`.
    Local,
}

#[derive(Clone, Debug)]
pub struct ExhaustionSequence {
    pub levels: Vec<GridFunction>,
    /// The reduction over the whole grid in the same cone.
    pub reduced: GridFunction,
    /// `‖v_N − R_φ‖∞`.
    pub final_gap: f64,
}

fn monotone_tol(phi: &GridFunction) -> f64 {
    1e-9 * (1.0 + phi.sup_norm())
}

/// `v_n`: the reduction of `φ` on `U_n`, equal to the obstacle off `U_n`.
pub fn exhaustion_envelope(
    grid: &MarkovGrid,
    phi: &GridFunction,
    exhaustion: &Exhaustion,
    level: ConeLevel,
    cfg: &SolverConfig,
) -> Result<ExhaustionSequence> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    let nonneg = level == ConeLevel::W;
    let tol = monotone_tol(phi);
    let mut levels: Vec<GridFunction> = Vec::with_capacity(exhaustion.len());
    for u in exhaustion.sets() {
        let cone = SuperharmonicCone::on(grid, u, nonneg)?;
        let local = reduce(grid, phi, &cone, cfg)?.u;
        let obstacle = cone.obstacle(phi);
        let v = GridFunction::new(
            (0..grid.n())
                .map(|i| if u.contains(i) { local[i] } else { obstacle[i] })
                .collect(),
        )?;
        if let Some(prev) = levels.last() {
            if let Some(i) = (0..grid.n()).find(|&i| v[i] < prev[i] - tol) {
                return Err(Error::InternalConsistency(format!(
                    "exhaustion envelope decreases at node {i}: {} then {}",
                    prev[i], v[i]
                )));
            }
        }
        levels.push(v);
    }
    let whole = if nonneg {
        SuperharmonicCone::w_cone(grid)
    } else {
        SuperharmonicCone::s_cone(grid)
    };
    let reduced = reduce(grid, phi, &whole, cfg)?.u;
    let final_gap = levels.last().expect("nonempty exhaustion").distance(&reduced);
    Ok(ExhaustionSequence {
        levels,
        reduced,
        final_gap,
    })
}

fn require_nonnegative(phi: &GridFunction, name: &str) -> Result<()> {
    if let Some(i) = phi.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Precondition(format!(
            "{name} must be nonnegative; {name}({i}) = {}",
            phi[i]
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct UscApproximation {
    /// `ψ_n = min(φ, t_n)·1_{K_n}`.
    pub psi: Vec<GridFunction>,
    pub thresholds: Vec<f64>,
    /// `K_n`, the first `n` nodes of `{φ > 0}` by decreasing value.
    pub supports: Vec<Vec<usize>>,
    pub reduced_psi: Vec<GridFunction>,
    pub reduced: GridFunction,
    /// `‖φ ∨ max_n R_{ψ_n} − R_φ‖∞`.
    pub sup_gap: f64,
}

/// An increasing sequence of bounded functions supported in `{φ > 0}` whose
/// reductions recover `R_φ` in the cone `W`.
///
/// The supports `K_n` add the nodes of `{φ > 0}` one at a time by decreasing
/// value (ties by index); the caps `t_n` are dyadic, doubling up to the first
/// power of two at or above `max φ`.
pub fn usc_approximation(grid: &MarkovGrid, phi: &GridFunction, cfg: &SolverConfig) -> Result<UscApproximation> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    require_nonnegative(phi, "φ")?;
    let w = SuperharmonicCone::w_cone(grid);
    let reduced = reduce(grid, phi, &w, cfg)?.u;
    let mut order: Vec<usize> = (0..grid.n()).filter(|&i| phi[i] > 0.0).collect();
    order.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
    let count = order.len();
    let top = phi.max_value();
    let mut cap = 1.0f64;
    while cap < top {
        cap *= 2.0;
    }
    while cap / 2.0 >= top && top > 0.0 {
        cap /= 2.0;
    }
    let mut out = UscApproximation {
        psi: Vec::with_capacity(count),
        thresholds: Vec::with_capacity(count),
        supports: Vec::with_capacity(count),
        reduced_psi: Vec::with_capacity(count),
        sup_gap: 0.0,
        reduced: reduced.clone(),
    };
    let tol = monotone_tol(phi);
    let mut best = phi.clone();
    for n in 1..=count {
        let t = cap * 0.5f64.powi((count - n) as i32);
        let k = NodeSet::from_ids(grid.n(), order[..n].iter().copied())?;
        let psi = phi.map(|v| v.min(t)).restrict(&k);
        let r = reduce(grid, &psi, &w, cfg)?.u;
        if let Some(prev) = out.reduced_psi.last() {
            if let Some(i) = (0..grid.n()).find(|&i| r[i] < prev[i] - tol) {
                return Err(Error::InternalConsistency(format!(
                    "reductions of the approximating sequence decrease at node {i}"
                )));
            }
        }
        if let Some(i) = (0..grid.n()).find(|&i| r[i] > reduced[i] + tol) {
            return Err(Error::InternalConsistency(format!(
                "reduction of ψ_{n} exceeds R_φ at node {i}"
            )));
        }
        best = best.vee(&r);
        out.psi.push(psi);
        out.thresholds.push(t);
        out.supports.push(order[..n].to_vec());
        out.reduced_psi.push(r);
    }
    out.sup_gap = best.distance(&reduced);
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DecreasingApprox {
    /// Step parameters `m = 1, 2, 4, …`.
    pub m: Vec<u64>,
    /// `J_{φ_m}` with `φ_m = ψ + G1/m`, from the LP over `W`.
    pub j: Vec<GridFunction>,
    /// Extrapolated limit as `m → ∞`.
    pub limit: GridFunction,
    pub reduced: GridFunction,
    pub limit_gap: f64,
    /// The last three steps lie on one line in `1/m` at every node, so the
    /// extrapolation sits on the final affine piece of `m ↦ J_{φ_m}`.
    pub stable: bool,
}

/// `J_{φ_m}` for `φ_m = ψ + G1/m` decreasing to `ψ`, and its limit.
///
/// For large `m` the envelope is affine in `1/m`, so the limit is the
/// Richardson extrapolation `2J_{2m} − J_m` of the last two steps, clamped to
/// `[J_K − G1/m_K, J_K]`, the interval that must contain it.
pub fn decreasing_continuous_approx(
    grid: &MarkovGrid,
    psi: &GridFunction,
    steps: usize,
    opts: &JensenOptions,
) -> Result<DecreasingApprox> {
    psi.check_len(grid)?;
    psi.check_finite()?;
    require_nonnegative(psi, "ψ")?;
    if steps < 3 {
        return Err(Error::InvalidInput("need at least three approximation steps".into()));
    }
    if let Some(i) = (0..grid.n()).find(|&i| grid.is_absorbing(i) && psi[i] > 0.0) {
        return Err(Error::Precondition(format!(
            "ψ is not dominated by a multiple of G1: ψ({i}) = {} at an absorbing node",
            psi[i]
        )));
    }
    if steps > 62 {
        return Err(Error::InvalidInput("at most 62 approximation steps".into()));
    }
    let g1 = exit_time(grid)?;
    let w = SuperharmonicCone::w_cone(grid);
    let tol = monotone_tol(&psi.add(&g1));
    let mut ms = Vec::with_capacity(steps);
    let mut js: Vec<GridFunction> = Vec::with_capacity(steps);
    for k in 0..steps {
        let m = 1u64 << k;
        let phi_m = psi.add(&g1.scale(1.0 / m as f64));
        let j = jensen_envelope(grid, &phi_m, &w, opts)?.j;
        if let Some(prev) = js.last() {
            if let Some(i) = (0..grid.n()).find(|&i| j[i] > prev[i] + tol) {
                return Err(Error::InternalConsistency(format!(
                    "envelopes of the decreasing sequence increase at node {i}"
                )));
            }
        }
        ms.push(m);
        js.push(j);
    }
    let last = &js[steps - 1];
    let prev = &js[steps - 2];
    let m_last = ms[steps - 1] as f64;
    let limit = GridFunction::new(
        (0..grid.n())
            .map(|i| {
                let r = 2.0 * last[i] - prev[i];
                r.clamp(last[i] - g1[i] / m_last, last[i])
            })
            .collect(),
    )?;
    let older = &js[steps - 3];
    let stable = (0..grid.n()).all(|i| (older[i] - 3.0 * prev[i] + 2.0 * last[i]).abs() <= tol);
    let reduced = reduce(grid, psi, &w, &opts.reduce)?.u;
    Ok(DecreasingApprox {
        stable,
        limit_gap: limit.distance(&reduced),
        m: ms,
        j: js,
        limit,
        reduced,
    })
}

#[derive(Clone, Debug)]
pub struct Witness {
    pub x: usize,
    pub measure: JensenMeasure,
    /// `∫u dμ − u(x)`.
    pub excess: f64,
}

#[derive(Clone, Debug)]
pub struct Characterization {
    pub holds: bool,
    /// `‖R_u − u‖∞` in the superharmonic cone.
    pub reduction_gap: f64,
    pub witness: Option<Witness>,
}

/// Whether `u` is the infimum of its superharmonic majorants, i.e.
/// `R_u = u` within `tol·(1+‖u‖∞)`.
///
/// A positive verdict is confirmed by `J_u = u`; a negative one carries a
/// Jensen measure `μ` at the node of largest gap with `∫u dμ > u(x)`.
pub fn infimum_characterization_check(grid: &MarkovGrid, u: &GridFunction, tol: f64) -> Result<Characterization> {
    u.check_len(grid)?;
    u.check_finite()?;
    let s = SuperharmonicCone::s_cone(grid);
    let scale = 1.0 + u.sup_norm();
    let r = reduce(grid, u, &s, &SolverConfig::with_tol(1e-13))?.u;
    let gap = r.sub(u);
    let reduction_gap = gap.sup_norm();
    if reduction_gap <= tol * scale {
        let j = jensen_envelope(grid, u, &s, &JensenOptions::default())?.j;
        let jgap = j.distance(u);
        if jgap > tol * scale {
            return Err(Error::InternalConsistency(format!(
                "R_u = u but J_u differs from u by {jgap}"
            )));
        }
        return Ok(Characterization {
            holds: true,
            reduction_gap,
            witness: None,
        });
    }
    let x = (0..grid.n())
        .max_by(|&a, &b| gap[a].total_cmp(&gap[b]).then(b.cmp(&a)))
        .expect("nonempty grid");
    let om = optimal_measure(grid, u, x, &s)?;
    let excess = om.measure.value(u) - u[x];
    if excess <= 0.0 {
        return Err(Error::InternalConsistency(format!(
            "R_u({x}) exceeds u({x}) but the optimal measure does not"
        )));
    }
    Ok(Characterization {
        holds: false,
        reduction_gap,
        witness: Some(Witness {
            x,
            measure: om.measure,
            excess,
        }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub h: f64,
    pub nodes: usize,
    pub spike: usize,
    pub probe: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub dim: usize,
    pub height: f64,
    pub rows: Vec<RefinementRow>,
    /// In two or more dimensions: probe values strictly decrease (all zero
    /// when the height is zero). In one dimension: values do not increase
    /// and stay above half the continuum value.
    pub passed: bool,
    pub property: String,
}

fn snap(coord: &[f64], n_side: usize) -> Result<usize> {
    let mut idx = 0;
    let mut stride = 1;
    for &c in coord {
        let k = (c * (n_side - 1) as f64).round();
        if !(1.0..=(n_side - 2) as f64).contains(&k) {
            return Err(Error::InvalidInput(format!(
                "coordinate {c} does not snap to an interior node at {} nodes per side",
                n_side
            )));
        }
        idx += k as usize * stride;
        stride *= n_side;
    }
    Ok(idx)
}

/// `R_{φ_h}` at a probe node for a point spike `φ_h = height·1_{x_h}` on
/// unit-cube lattices of spacing `h`.
pub fn polar_refinement_study(
    point: &[f64],
    height: f64,
    h_list: &[f64],
    probe_offset: &[f64],
    cfg: &SolverConfig,
) -> Result<RefinementStudy> {
    let dim = point.len();
    if dim == 0 || probe_offset.len() != dim {
        return Err(Error::InvalidInput(
            "point and probe offset need the same positive dimension".into(),
        ));
    }
    if h_list.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 refinement levels".into()));
    }
    if !(height.is_finite() && height >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "height must be finite and nonnegative, got {height}"
        )));
    }
    let probe_point: Vec<f64> = point.iter().zip(probe_offset).map(|(p, o)| p + o).collect();
    let rows: Vec<RefinementRow> = h_list
        .par_iter()
        .map(|&h| {
            if !(h > 0.0 && h < 0.5) {
                return Err(Error::InvalidInput(format!("spacing {h} must lie in (0, 1/2)")));
            }
            let side = (1.0 / h).round() as usize + 1;
            let grid = build_lattice(&vec![side; dim], 1.0 / (side - 1) as f64, &[])?;
            let spike = snap(point, side)?;
            let probe = snap(&probe_point, side)?;
            let mut phi = vec![0.0; grid.n()];
            phi[spike] = height;
            let r = reduce(&grid, &GridFunction::new(phi)?, &SuperharmonicCone::w_cone(&grid), cfg)?;
            Ok(RefinementRow {
                h,
                nodes: grid.n(),
                spike,
                probe,
                value: r.u[probe],
            })
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (passed, property) = if dim >= 2 {
        if height == 0.0 {
            (values.iter().all(|&v| v == 0.0), "all values zero".to_string())
        } else {
            (
                values.windows(2).all(|w| w[1] < w[0]),
                "probe values strictly decrease under refinement".to_string(),
            )
        }
    } else {
        let o = probe_offset[0];
        let towards = if o >= 0.0 { 1.0 - point[0] } else { point[0] };
        let continuum = height * (1.0 - o.abs() / towards).max(0.0);
        let slack = 10.0 * cfg.tol;
        (
            values.windows(2).all(|w| w[1] <= w[0] + slack) && values.iter().all(|&v| v >= 0.5 * continuum),
            format!("values do not increase and stay at least {}", 0.5 * continuum),
        )
    };
    Ok(RefinementStudy {
        dim,
        height,
        rows,
        passed,
        property,
    })
}
