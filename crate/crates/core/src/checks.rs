//! Seeded property checks behind `mafd verify` and the acceptance tests.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::grid::{restrict, Grid, GridIndex, MeshFunction, Rect, Region};
use crate::measures::{measure_of_box, reference_measure};
use crate::operator::{c0_bound, discrete_ma_measure, ma_apply, random_mesh_function, OperatorConfig};
use crate::poisson::{inv_norm_estimate, PoissonConfig};
use crate::problems::Problem;
use crate::solvers::{contraction_ratio, Method, PairSampling};

/// Outcome of one named check.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub values: serde_json::Value,
}

/// Largest pairwise relative difference `|a - b| / min(a, b)`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, a) in values.iter().enumerate() {
        for b in &values[k + 1..] {
            worst = worst.max((a - b).abs() / a.min(*b));
        }
    }
    worst
}

pub fn laplacian_norm(grids: &[Arc<Grid>], pcfg: &PoissonConfig) -> Result<Check> {
    let norms = grids
        .iter()
        .map(|g| inv_norm_estimate(g, pcfg))
        .collect::<Result<Vec<_>>>()?;
    let spread = relative_spread(&norms);
    let h: Vec<f64> = grids.iter().map(|g| g.h()).collect();
    Ok(Check {
        name: "laplacian-norm".into(),
        passed: spread < 0.05 && norms.iter().all(|&n| n <= 0.125),
        values: json!({ "h": h, "norms": norms, "spread": spread }),
    })
}

pub fn contraction(
    method: Method,
    mu: f64,
    grid: &Arc<Grid>,
    opcfg: &OperatorConfig,
    pcfg: &PoissonConfig,
    trials: usize,
    seed: u64,
) -> Result<Check> {
    let ratio = contraction_ratio(method, mu, grid, opcfg, pcfg, &PairSampling::Uniform, trials, seed)?;
    let method = match method {
        Method::Basic => "basic",
        Method::Preconditioned => "precond",
    };
    Ok(Check {
        name: format!("contraction-{method}"),
        passed: ratio < 1.0,
        values: json!({ "h": grid.h(), "mu": mu, "trials": trials, "seed": seed, "ratio": ratio }),
    })
}

/// Counts single-entry perturbations that break degenerate ellipticity at
/// `ε = 0`: raising a stencil neighbor must not decrease `M_h` at the
/// center, raising the center must not increase it.
pub fn monotonicity_violations(grid: &Arc<Grid>, stencil: &crate::stencil::StencilSet, trials: usize, seed: u64) -> usize {
    let cfg = OperatorConfig {
        stencil: stencil.clone(),
        epsilon: 0.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = grid.interior();
    let mut violations = 0;
    for _ in 0..trials {
        let mut v = random_mesh_function(grid, &mut rng);
        let x = interior[rng.gen_range(0..interior.len())];
        let before = ma_apply(&v, x, &cfg);
        let bump = rng.gen_range(1e-6..=1.0);
        let neighbors: Vec<GridIndex> = crate::stencil::admissible_bases(grid, x, stencil)
            .into_iter()
            .flat_map(|b| b.directions())
            .flat_map(|a| [grid.offset(x, a.p, a.q), grid.offset(x, -a.p, -a.q)])
            .flatten()
            .collect();
        let pick = rng.gen_range(0..=neighbors.len());
        let (target, center) = match neighbors.get(pick) {
            Some(&n) => (n, false),
            None => (x, true),
        };
        v.set(target, v.get(target) + bump);
        let after = ma_apply(&v, x, &cfg);
        if (center && after > before) || (!center && after < before) {
            violations += 1;
        }
    }
    violations
}

pub fn ellipticity(grid: &Arc<Grid>, stencil: &crate::stencil::StencilSet, trials: usize, seed: u64) -> Check {
    let violations = monotonicity_violations(grid, stencil, trials, seed);
    Check {
        name: "ellipticity".into(),
        passed: violations == 0,
        values: json!({ "h": grid.h(), "trials": trials, "seed": seed, "violations": violations }),
    }
}

/// Box with corners uniform in `domain`.
pub fn random_box(domain: &Rect, rng: &mut ChaCha8Rng) -> Rect {
    let mut xs = [rng.gen_range(domain.x_min..=domain.x_max), rng.gen_range(domain.x_min..=domain.x_max)];
    let mut ys = [rng.gen_range(domain.y_min..=domain.y_max), rng.gen_range(domain.y_min..=domain.y_max)];
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    Rect {
        x_min: xs[0],
        x_max: xs[1],
        y_min: ys[0],
        y_max: ys[1],
    }
}

/// Counts (pair, box) combinations with
/// `|h² Σ_B v - h² Σ_B w| > c0_bound · |v - w|_∞` for nonnegative `v`, `w`.
pub fn c0_violations(grid: &Arc<Grid>, pairs: usize, boxes: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = c0_bound(grid);
    let domain = grid.spec().domain;
    let mut violations = 0;
    for _ in 0..pairs {
        let mut sample = || {
            let values = (0..grid.node_count()).map(|_| rng.gen_range(0.0..=1.0)).collect();
            MeshFunction::from_values(grid, values).expect("finite samples")
        };
        let (v, w) = (sample(), sample());
        let bound = c0 * v.max_norm_diff(&w, Region::All).expect("same grid");
        for _ in 0..boxes {
            let b = random_box(&domain, &mut rng);
            if (measure_of_box(&v, &b) - measure_of_box(&w, &b)).abs() > bound {
                violations += 1;
            }
        }
    }
    violations
}

/// `|h² Σ_B M_h[r_h u]| - ν(B)|` for each grid, using the problem's exact
/// solution.
pub fn measure_errors(problem: &Problem, b: &Rect, grids: &[Arc<Grid>], opcfg: &OperatorConfig) -> Result<(f64, Vec<f64>)> {
    let exact = problem
        .exact
        .ok_or_else(|| crate::Error::Config(format!("problem '{}' has no exact solution", problem.name)))?;
    let reference = reference_measure(&problem.measure, b)?;
    let errors = grids
        .iter()
        .map(|g| (discrete_ma_measure(&restrict(exact, g), b, opcfg) - reference).abs())
        .collect();
    Ok((reference, errors))
}

/// Errors strictly decrease along the refinement and the last one is within
/// `rel_tol` of the reference.
pub fn measure_convergence(
    problem: &Problem,
    b: &Rect,
    grids: &[Arc<Grid>],
    opcfg: &OperatorConfig,
    rel_tol: f64,
) -> Result<Check> {
    let (reference, errors) = measure_errors(problem, b, grids, opcfg)?;
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let last = errors.last().copied().unwrap_or(f64::INFINITY) / reference.abs();
    let h: Vec<f64> = grids.iter().map(|g| g.h()).collect();
    Ok(Check {
        name: format!("measure-convergence-{}", problem.name),
        passed: decreasing && last <= rel_tol,
        values: json!({
            "h": h,
            "box": [b.x_min, b.x_max, b.y_min, b.y_max],
            "reference": reference,
            "errors": errors,
            "final_relative_error": last,
        }),
    })
}
