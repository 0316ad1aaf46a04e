//! Acceptance criteria, one PASS/FAIL line each.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reduite::cone::{is_superharmonic, SuperharmonicCone};
use reduite::exhaustion::Exhaustion;
use reduite::function::GridFunction;
use reduite::grid::{build_lattice, MarkovGrid, NodeSet};
use reduite::instances::{random_jump_grid, random_s_member, random_w_member, uniform_function};
use reduite::jensen::{jensen_envelope, optimal_measure, JensenOptions};
use reduite::oracle::{evaluate_vertices, exact_envelope_small, polytope_vertices, ratio, to_f64};
use reduite::potential::{exit_time, reference_u0};
use reduite::reduite::{hitting_distribution, reduce, reduce_on_set, Solver, SolverConfig};
use reduite::schemes::{
    decreasing_continuous_approx, exhaustion_envelope, infimum_characterization_check, polar_refinement_study,
    usc_approximation, ConeLevel,
};
use reduite::{duality_audit, AuditOptions, Result};

struct Outcome {
    passed: bool,
    detail: String,
}

fn fail(detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        passed: false,
        detail: detail.into(),
    })
}

fn center_seed(grid: &MarkovGrid) -> NodeSet {
    let ids = grid.interior();
    NodeSet::from_ids(grid.n(), [ids[ids.len() / 2]]).expect("interior node")
}

fn duality_audit_instances() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_241);
    let mut grids: Vec<(String, MarkovGrid)> = Vec::new();
    for k in 0..10 {
        let n = [5, 9, 14, 20, 27, 33, 38, 42, 47, 50][k];
        grids.push((format!("path {n}"), build_lattice(&[n], 1.0, &[])?));
    }
    for k in 0..10 {
        let (a, b) = [
            (3, 3),
            (4, 6),
            (5, 5),
            (7, 9),
            (8, 8),
            (10, 10),
            (11, 7),
            (12, 13),
            (14, 14),
            (15, 15),
        ][k];
        grids.push((format!("lattice {a}x{b}"), build_lattice(&[a, b], 1.0, &[])?));
    }
    for k in 0..5 {
        let n = [8, 15, 22, 30, 40][k];
        grids.push((format!("jump {n}"), random_jump_grid(n, &mut rng)?));
    }
    let mut worst = 0.0f64;
    for (k, (name, g)) in grids.iter().enumerate() {
        let lo = if k % 2 == 0 { -1.0 } else { 0.0 };
        let phi = uniform_function(g.n(), lo, 1.0, &mut rng);
        let e = Exhaustion::grow_from(g, &center_seed(g))?;
        let report = duality_audit(g, &phi, Some(&e), &AuditOptions::default())?;
        worst = worst.max(report.max_gap() / (1.0 + phi.sup_norm()));
        if !report.passed {
            return fail(format!(
                "{name}: gap {:e} over threshold {:e}",
                report.max_gap(),
                report.threshold
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome {
        passed: secs < 60.0,
        detail: format!(
            "{} instances, max gap/(1+|phi|) {worst:.2e}, {secs:.1} s (limit 60 s)",
            grids.len()
        ),
    })
}

fn oracle_equivalence() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut grids: Vec<(String, MarkovGrid)> = Vec::new();
    for n in 3..=10 {
        grids.push((format!("path {n}"), build_lattice(&[n], 1.0, &[])?));
    }
    grids.push(("lattice 3x3".into(), build_lattice(&[3, 3], 1.0, &[])?));
    for n in [6, 8, 9, 10, 10] {
        grids.push((format!("jump {n}"), random_jump_grid(n, &mut rng)?));
    }
    let mut float_worst = 0.0f64;
    let mut checks = 0usize;
    for (name, g) in &grids {
        if g.interior().len() > 8 {
            return fail(format!("{name} has more than 8 interior nodes"));
        }
        let w = SuperharmonicCone::w_cone(g);
        let vertices = (0..g.n())
            .map(|x| polytope_vertices(g, x, &w))
            .collect::<Result<Vec<_>>>()?;
        for _ in 0..50 {
            let phi = GridFunction::new((0..g.n()).map(|_| rng.gen_range(0..=16) as f64 / 16.0).collect())?;
            let exact = exact_envelope_small(g, &phi)?;
            if exact.approximate {
                return fail(format!("{name}: exact oracle fell back to floating point"));
            }
            for x in 0..g.n() {
                let v = evaluate_vertices(&vertices[x], &phi, &w)?;
                if v.value != exact.values[x] {
                    return fail(format!(
                        "{name}: node {x}: vertex value {} but exact reduction {}",
                        v.value, exact.values[x]
                    ));
                }
                checks += 1;
            }
            let exact_f = exact.to_function();
            let r = reduce(g, &phi, &w, &SolverConfig::with_tol(1e-12))?.u;
            let j = jensen_envelope(g, &phi, &w, &JensenOptions::default())?.j;
            let gap = r.distance(&exact_f).max(j.distance(&exact_f));
            float_worst = float_worst.max(gap);
            if gap > 1e-9 {
                return fail(format!("{name}: floating solvers off by {gap:e}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome {
        passed: secs < 30.0,
        detail: format!(
            "{} grids x 50 obstacles, {checks} exact node checks, float gap {float_worst:.2e}, {secs:.1} s (limit 30 s)",
            grids.len()
        ),
    })
}

fn balayage_identity() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let grids = vec![
        build_lattice(&[9], 1.0, &[])?,
        build_lattice(&[6, 6], 1.0, &[])?,
        random_jump_grid(12, &mut rng)?,
        random_jump_grid(20, &mut rng)?,
    ];
    let cfg = SolverConfig::with_tol(1e-13).solver(Solver::Policy);
    let mut worst = 0.0f64;
    let mut count = 0;
    for g in &grids {
        let mut tests = vec![reference_u0(g), exit_time(g)?];
        for _ in 0..5 {
            tests.push(random_w_member(g, &mut rng)?);
        }
        for _ in 0..10 {
            let x = rng.gen_range(0..g.n());
            let mut a = NodeSet::from_mask((0..g.n()).map(|_| rng.gen_bool(0.3)).collect());
            if a.is_empty() {
                a.insert(rng.gen_range(0..g.n()));
            }
            let eps = hitting_distribution(g, x, &a)?;
            for v in &tests {
                let lhs = eps.integrate(v);
                let rhs = reduce_on_set(g, v, &a, &cfg)?.u[x];
                worst = worst.max((lhs - rhs).abs());
                count += 1;
            }
        }
    }
    Ok(Outcome {
        passed: worst <= 1e-9,
        detail: format!("{count} identities, max gap {worst:.2e} (limit 1e-9)"),
    })
}

fn hand_fixtures() -> Result<Outcome> {
    let g = build_lattice(&[5], 1.0, &[])?;
    let w = SuperharmonicCone::w_cone(&g);
    let spike = GridFunction::new(vec![0., 0., 1., 0., 0.])?;
    let mut worst = 0.0f64;
    let mut note = |a: &[f64], b: &[f64]| {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    };
    let r = reduce(&g, &spike, &w, &SolverConfig::default())?.u;
    note(r.values(), &[0., 0.5, 1., 0.5, 0.]);
    note(exit_time(&g)?.values(), &[0., 3., 4., 3., 0.]);
    let eps = hitting_distribution(&g, 1, &NodeSet::from_ids(5, [2])?)?;
    note(eps.weights(), &[0., 0., 0.5, 0., 0.]);
    let om = optimal_measure(&g, &spike, 1, &w)?;
    note(&[om.value], &[0.5]);
    note(om.measure.measure.weights(), &[0.5, 0., 0.5, 0., 0.]);
    let exact = exact_envelope_small(&g, &spike)?;
    let grounded = exact.values == vec![ratio(0, 1), ratio(1, 2), ratio(1, 1), ratio(1, 2), ratio(0, 1)];
    note(&exact.values.iter().map(to_f64).collect::<Vec<_>>(), r.values());
    Ok(Outcome {
        passed: worst <= 1e-12 && grounded,
        detail: format!("5 fixtures, max deviation {worst:.1e} (limit 1e-12), exact oracle grounded: {grounded}"),
    })
}

fn scheme_checks() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let cfg = SolverConfig::with_tol(1e-13);
    let mut instances: Vec<(MarkovGrid, Exhaustion)> = Vec::new();
    let p9 = build_lattice(&[9], 1.0, &[])?;
    let e9 = Exhaustion::from_ids(&p9, &[vec![3, 4, 5], (2..=6).collect(), (1..=7).collect()])?;
    instances.push((p9, e9));
    for g in [
        build_lattice(&[10, 10], 1.0, &[])?,
        build_lattice(&[30], 1.0, &[])?,
        random_jump_grid(25, &mut rng)?,
    ] {
        let e = Exhaustion::grow_from(&g, &center_seed(&g))?;
        instances.push((g, e));
    }
    let (mut ex_gap, mut usc_gap, mut dec_gap) = (0.0f64, 0.0f64, 0.0f64);
    for (g, e) in &instances {
        for level in [ConeLevel::W, ConeLevel::Local] {
            let phi = uniform_function(g.n(), -1.0, 1.0, &mut rng);
            let s = exhaustion_envelope(g, &phi, e, level, &cfg)?;
            for pair in s.levels.windows(2) {
                if (0..g.n()).any(|i| pair[1][i] < pair[0][i] - 1e-12) {
                    return fail("exhaustion sequence decreases");
                }
            }
            ex_gap = ex_gap.max(s.final_gap);
        }
        let phi = uniform_function(g.n(), 0.0, 1.0, &mut rng);
        usc_gap = usc_gap.max(usc_approximation(g, &phi, &cfg)?.sup_gap);
        let mut psi = uniform_function(g.n(), 0.0, 1.0, &mut rng);
        psi = psi.restrict(&g.interior_set());
        let d = decreasing_continuous_approx(g, &psi, 30, &JensenOptions::default())?;
        if !d.stable {
            return fail("decreasing approximation did not reach its final affine piece in 30 steps");
        }
        dec_gap = dec_gap.max(d.limit_gap);
    }
    Ok(Outcome {
        passed: ex_gap <= 1e-9 && usc_gap <= 1e-9 && dec_gap <= 1e-8,
        detail: format!(
            "exhaustion gap {ex_gap:.1e} (1e-9), usc gap {usc_gap:.1e} (1e-9), decreasing-limit gap {dec_gap:.1e} (1e-8)"
        ),
    })
}

fn refinement() -> Result<Outcome> {
    let start = Instant::now();
    let hs = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let cfg = SolverConfig::with_tol(1e-10);
    let plane = polar_refinement_study(&[0.5, 0.5], 1.0, &hs, &[0.25, 0.0], &cfg)?;
    let line = polar_refinement_study(&[0.5], 1.0, &hs, &[0.25], &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let fmt = |s: &reduite::schemes::RefinementStudy| {
        s.rows
            .iter()
            .map(|r| format!("{:.4}", r.value))
            .collect::<Vec<_>>()
            .join(" > ")
    };
    let low = line.rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        passed: plane.passed && line.passed && low > 0.0 && secs < 120.0,
        detail: format!("2-D {}; 1-D min {low:.4}; {secs:.1} s (limit 120 s)", fmt(&plane)),
    })
}

fn characterization() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let tol = 1e-9;
    let classes = vec![
        ("path", build_lattice(&[20], 1.0, &[])?),
        ("lattice", build_lattice(&[8, 8], 1.0, &[])?),
        ("jump", random_jump_grid(25, &mut rng)?),
    ];
    let (mut yes, mut no) = (0, 0);
    let mut weakest = f64::INFINITY;
    for (name, g) in &classes {
        let s = SuperharmonicCone::s_cone(g);
        for k in 0..100 {
            let u = match k % 3 {
                0 => random_s_member(g, &mut rng)?,
                1 => {
                    let mut v = random_s_member(g, &mut rng)?.into_values();
                    let i = g.interior()[rng.gen_range(0..g.interior().len())];
                    v[i] += rng.gen_range(0.1..1.0);
                    GridFunction::new(v)?
                }
                _ => uniform_function(g.n(), -1.0, 1.0, &mut rng),
            };
            let scaled = tol * (1.0 + u.sup_norm());
            let direct = is_superharmonic(g, &u, &s, scaled)?.member;
            let c = infimum_characterization_check(g, &u, tol)?;
            if c.holds != direct {
                return fail(format!(
                    "{name} #{k}: check says {} but cone test says {direct}",
                    c.holds
                ));
            }
            if c.holds {
                yes += 1;
            } else {
                no += 1;
                let w = c.witness.expect("negative verdicts carry a witness");
                if w.excess < tol {
                    return fail(format!("{name} #{k}: witness excess {:e} below tol", w.excess));
                }
                let lhs = w.measure.value(&u);
                if lhs - u[w.x] < tol || w.measure.certificate_residual(g) > 1e-9 {
                    return fail(format!("{name} #{k}: witness fails re-verification"));
                }
                weakest = weakest.min(w.excess);
            }
        }
    }
    Ok(Outcome {
        passed: yes > 0 && no > 0,
        detail: format!("300 functions, {yes} in the cone, {no} outside, smallest witness excess {weakest:.2e}"),
    })
}

fn main() -> ExitCode {
    type Check = fn() -> Result<Outcome>;
    let criteria: [(&str, Check); 7] = [
        ("duality audit on 25 random instances", duality_audit_instances),
        ("exact oracle equivalence on small grids", oracle_equivalence),
        ("balayage characterization", balayage_identity),
        ("hand-verified fixtures", hand_fixtures),
        ("scheme monotonicity and limits", scheme_checks),
        ("point-spike refinement study", refinement),
        ("characterization equivalence with witnesses", characterization),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(o) if o.passed => ("PASS", o.detail),
            Ok(o) => ("FAIL", o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failures += 1;
        }
        println!("{tag} [{}] {name}: {detail}", k + 1);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
