//! The four-way envelope audit `J_φ = J'_φ = R_φ = φ ∨ R̂_φ`.

use serde::{Deserialize, Serialize};

use crate::cone::SuperharmonicCone;
use crate::error::Result;
use crate::exhaustion::Exhaustion;
use crate::function::GridFunction;
use crate::grid::MarkovGrid;
use crate::jensen::{exhaustion_levels, jensen_envelope, JensenOptions};
use crate::reduite::{reduce, regularize, SolverConfig};

pub const DEFAULT_GAP_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub gap_tol: f64,
    pub reduce: SolverConfig,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            gap_tol: DEFAULT_GAP_TOL,
            reduce: SolverConfig::with_tol(1e-12),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub left: String,
    pub right: String,
    pub gap: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `J_φ` from one LP per node over the superharmonic cone.
    pub j: Vec<f64>,
    /// `J'_φ` from the exhaustion.
    pub j_prime: Vec<f64>,
    /// `R_φ` from the obstacle solver.
    pub r: Vec<f64>,
    /// `φ ∨ R̂_φ`.
    pub phi_vee_r_hat: Vec<f64>,
    pub gaps: Vec<PairGap>,
    /// `gap_tol·(1+‖φ‖∞)`.
    pub threshold: f64,
    pub passed: bool,
}

impl AuditReport {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().fold(0.0, |m, g| m.max(g.gap))
    }
}

/// Computes the four envelopes and their pairwise sup-norm gaps. With no
/// exhaustion the whole interior is used in one step.
pub fn duality_audit(
    grid: &MarkovGrid,
    phi: &GridFunction,
    exhaustion: Option<&Exhaustion>,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    phi.check_len(grid)?;
    phi.check_finite()?;
    let single;
    let exhaustion = match exhaustion {
        Some(e) => e,
        None => {
            single = Exhaustion::single(grid)?;
            &single
        }
    };
    let s = SuperharmonicCone::s_cone(grid);
    let jopts = JensenOptions {
        measures: false,
        reduce: opts.reduce,
    };
    let j = jensen_envelope(grid, phi, &s, &jopts)?.j;
    let (levels, _) = exhaustion_levels(grid, phi, exhaustion)?;
    let j_prime = levels.last().expect("nonempty exhaustion").clone();
    let r = reduce(grid, phi, &s, &opts.reduce)?.u;
    let vee = phi.vee(&regularize(&r));
    let threshold = opts.gap_tol * (1.0 + phi.sup_norm());
    let named = [("J", &j), ("J'", &j_prime), ("R", &r), ("phi_vee_R_hat", &vee)];
    let mut gaps = Vec::new();
    for a in 0..named.len() {
        for b in a + 1..named.len() {
            let gap = named[a].1.distance(named[b].1);
            gaps.push(PairGap {
                left: named[a].0.to_string(),
                right: named[b].0.to_string(),
                gap,
                passed: gap <= threshold,
            });
        }
    }
    let passed = gaps.iter().all(|g| g.passed);
    Ok(AuditReport {
        j: j.into_values(),
        j_prime: j_prime.into_values(),
        r: r.into_values(),
        phi_vee_r_hat: vee.into_values(),
        gaps,
        threshold,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_lattice;
    use crate::instances::{random_jump_grid, uniform_function};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spike_passes_tightly() {
        let g = build_lattice(&[5], 1.0, &[]).unwrap();
        let phi = GridFunction::new(vec![0., 0., 1., 0., 0.]).unwrap();
        let r = duality_audit(&g, &phi, None, &AuditOptions::default()).unwrap();
        assert!(r.passed);
        assert!(r.max_gap() <= 1e-10);
        assert_eq!(r.gaps.len(), 6);
    }

    #[test]
    fn random_signed_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = build_lattice(&[8, 8], 1.0, &[]).unwrap();
        let phi = uniform_function(g.n(), -1.0, 1.0, &mut rng);
        let e = Exhaustion::grow_from(&g, &crate::grid::NodeSet::from_ids(64, [27]).unwrap()).unwrap();
        assert!(
            duality_audit(&g, &phi, Some(&e), &AuditOptions::default())
                .unwrap()
                .passed
        );
        let g = random_jump_grid(20, &mut rng).unwrap();
        let phi = uniform_function(20, -1.0, 1.0, &mut rng);
        assert!(duality_audit(&g, &phi, None, &AuditOptions::default()).unwrap().passed);
    }
}
