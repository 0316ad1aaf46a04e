//! Gauss–Seidel solves for systems `(I − P_RR) u = f + P_RC u_C` on a row
//! subset `R` of a sub-stochastic kernel, with the complement held fixed.

use crate::error::{Error, Result};
use crate::grid::Kernel;

/// Relative residual target for linear solves.
pub const LINEAR_TOL: f64 = 1e-14;

pub fn default_sweeps(n: usize) -> usize {
    (100 * n).max(100_000)
}

/// Solves `u_i = rhs_i + Σ_j P_ij u_j` for every `i` in `rows`, keeping the
/// other entries of `u` fixed. `u` is the initial guess on `rows`.
///
/// Stops once the largest pre-update residual of a sweep is at most
/// `tol · (1 + ‖u‖∞)`. Returns the number of sweeps.
pub fn solve_rows(
    kernel: &Kernel,
    rows: &[usize],
    rhs: &[f64],
    u: &mut [f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<usize> {
    let diag: Vec<f64> = rows.iter().map(|&i| 1.0 - kernel.diagonal(i)).collect();
    if let Some(pos) = diag.iter().position(|&d| d <= 0.0) {
        return Err(Error::NonGreenian { nodes: vec![rows[pos]] });
    }
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        residual = 0.0;
        let mut scale: f64 = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            let mut off = rhs[i];
            for (j, p) in kernel.row(i) {
                if j != i {
                    off += p * u[j];
                }
            }
            let r = off - diag[k] * u[i];
            residual = residual.max(r.abs());
            u[i] = off / diag[k];
            scale = scale.max(u[i].abs());
        }
        if !residual.is_finite() || scale > 1e300 {
            return Err(Error::NonGreenian { nodes: rows.to_vec() });
        }
        if residual <= tol * (1.0 + scale) {
            return Ok(sweep);
        }
    }
    Err(Error::NotConverged {
        iterations: max_sweeps,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gambler_ruin() {
        // Path 0..4, absorbing ends; u = P(hit 4 before 0) = i/4.
        let trip: Vec<_> = (1..4).flat_map(|i| [(i, i - 1, 0.5), (i, i + 1, 0.5)]).collect();
        let k = Kernel::from_triplets(5, &trip).unwrap();
        let mut u = vec![0.0, 0.0, 0.0, 0.0, 1.0];
        solve_rows(&k, &[1, 2, 3], &[0.0; 5], &mut u, LINEAR_TOL, 10_000).unwrap();
        for (i, v) in u.iter().enumerate() {
            assert!((v - i as f64 / 4.0).abs() < 1e-13);
        }
    }

    #[test]
    fn self_loops() {
        // u = 1 + 0.5 u  =>  u = 2
        let k = Kernel::from_triplets(1, &[(0, 0, 0.5)]).unwrap();
        let mut u = vec![0.0];
        solve_rows(&k, &[0], &[1.0], &mut u, LINEAR_TOL, 100).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn trapped_row_rejected() {
        let k = Kernel::from_triplets(1, &[(0, 0, 1.0)]).unwrap();
        let mut u = vec![0.0];
        assert!(solve_rows(&k, &[0], &[1.0], &mut u, LINEAR_TOL, 100).is_err());
    }
}
