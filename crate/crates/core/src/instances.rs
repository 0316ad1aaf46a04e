//! Seeded random instances: grids, obstacles and cone members.

use rand::Rng;

use crate::error::{Error, Result};
use crate::function::GridFunction;
use crate::grid::{build_lattice, Kernel, MarkovGrid};
use crate::potential::{green_potential, harmonic_extension, reference_u0};

/// A random member of `W`: the minimum of two functions `G f + c·u_0` with
/// random charges `f ≥ 0` and constants `c ∈ [0, 1)`.
pub fn random_w_member<R: Rng>(grid: &MarkovGrid, rng: &mut R) -> Result<GridFunction> {
    let u0 = reference_u0(grid);
    let pick = |rng: &mut R| -> Result<GridFunction> {
        let charge: Vec<f64> = (0..grid.n())
            .map(|i| {
                if grid.is_interior(i) && rng.gen_bool(0.5) {
                    rng.gen::<f64>()
                } else {
                    0.0
                }
            })
            .collect();
        let p = green_potential(grid, &GridFunction::new(charge)?)?;
        Ok(p.add(&u0.scale(rng.gen::<f64>())))
    };
    let a = pick(rng)?;
    let b = pick(rng)?;
    Ok(a.wedge(&b))
}

/// A random superharmonic function of either sign: a Green potential plus a
/// harmonic function with boundary values in `[-1, 1]`.
pub fn random_s_member<R: Rng>(grid: &MarkovGrid, rng: &mut R) -> Result<GridFunction> {
    let charge: Vec<f64> = (0..grid.n())
        .map(|i| {
            if grid.is_interior(i) && rng.gen_bool(0.3) {
                rng.gen::<f64>()
            } else {
                0.0
            }
        })
        .collect();
    let p = green_potential(grid, &GridFunction::new(charge)?)?;
    let boundary: Vec<f64> = (0..grid.n())
        .map(|i| {
            if grid.is_absorbing(i) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    let h = harmonic_extension(grid, grid.interior(), &GridFunction::new(boundary)?)?;
    Ok(p.add(&h))
}

/// Uniform values in `[lo, hi)` on every node.
pub fn uniform_function<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> GridFunction {
    GridFunction::new((0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("uniform samples are finite")
}

/// A sub-stochastic jump kernel on `n` nodes with non-local transitions.
///
/// About a fifth of the nodes (at least one) are absorbing; each interior
/// row jumps to two to four random nodes, and half the rows leak mass.
pub fn random_jump_grid<R: Rng>(n: usize, rng: &mut R) -> Result<MarkovGrid> {
    if n < 2 {
        return Err(Error::InvalidInput("jump grid needs at least two nodes".into()));
    }
    for _ in 0..64 {
        let absorbing_count = (n / 5).max(1);
        let mut absorbing = vec![false; n];
        let mut placed = 0;
        while placed < absorbing_count {
            let i = rng.gen_range(0..n);
            if !absorbing[i] {
                absorbing[i] = true;
                placed += 1;
            }
        }
        let mut triplets = Vec::new();
        for i in (0..n).filter(|&i| !absorbing[i]) {
            let targets = rng.gen_range(2..=4usize);
            let total = if rng.gen_bool(0.5) {
                1.0
            } else {
                rng.gen_range(0.7..1.0)
            };
            let raw: Vec<(usize, f64)> = (0..targets)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0.1..1.0)))
                .collect();
            let sum: f64 = raw.iter().map(|(_, w)| w).sum();
            for (j, w) in raw {
                triplets.push((i, j, total * w / sum));
            }
        }
        let kernel = Kernel::from_triplets(n, &triplets)?;
        match MarkovGrid::new(kernel, None) {
            Ok(g) => return Ok(g),
            Err(Error::NonGreenian { .. }) | Err(Error::InvalidKernel(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidInput(
        "could not draw a Greenian jump kernel in 64 attempts".into(),
    ))
}

/// A random lattice shape with `2 ≤ side ≤ max_side` along each axis.
pub fn random_lattice<R: Rng>(dim: usize, max_side: usize, rng: &mut R) -> Result<MarkovGrid> {
    let dims: Vec<usize> = (0..dim).map(|_| rng.gen_range(3..=max_side.max(3))).collect();
    build_lattice(&dims, 1.0, &[])
}

/// Families of random audit instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InstanceKind {
    Path,
    Lattice,
    Jump,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 3] = [InstanceKind::Path, InstanceKind::Lattice, InstanceKind::Jump];

    pub fn id(self) -> &'static str {
        match self {
            InstanceKind::Path => "path",
            InstanceKind::Lattice => "lattice",
            InstanceKind::Jump => "jump",
        }
    }
}

/// A random grid of the given family with an obstacle uniform in `[-1, 1)`
/// or, when `nonnegative`, in `[0, 1)`. Paths have at most 50 nodes and
/// lattices at most `max_side` nodes per side.
pub fn random_instance<R: Rng>(
    kind: InstanceKind,
    max_side: usize,
    nonnegative: bool,
    rng: &mut R,
) -> Result<(MarkovGrid, GridFunction)> {
    let grid = match kind {
        InstanceKind::Path => build_lattice(&[rng.gen_range(3..=50)], 1.0, &[])?,
        InstanceKind::Lattice => random_lattice(2, max_side, rng)?,
        InstanceKind::Jump => random_jump_grid(rng.gen_range(6..=40), rng)?,
    };
    let lo = if nonnegative { 0.0 } else { -1.0 };
    let phi = uniform_function(grid.n(), lo, 1.0, rng);
    Ok((grid, phi))
}
