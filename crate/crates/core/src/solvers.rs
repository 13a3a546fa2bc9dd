//! Fixed-point iterations for `M_h[u] = f` with Dirichlet data.
//!
//! Basic time marching:
//!
//! ```text
//! u ← u + (M_h[u] - f) / μ
//! ```
//!
//! Laplacian-preconditioned time marching, written as an explicit update:
//!
//! ```text
//! -Δ_h u' = -Δ_h u + (M_h[u] - f) / μ   ⇔   u' = u - Δ_h⁻¹(M_h[u] - f) / μ
//! ```
//!
//! Boundary values are never touched by either step.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, MeshFunction, Region};
use crate::operator::{ma_apply_all, ma_residual, OperatorConfig};
use crate::poisson::{PoissonConfig, PoissonSolver};
use crate::problems::Problem;
use crate::measures::DiracSpread;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    Basic,
    #[default]
    Preconditioned,
}

#[derive(Clone, Debug, Default)]
pub enum InitialGuess {
    /// `r_h(u)` for the problem's closed-form solution.
    #[default]
    ExactRestriction,
    /// Transfinite (Coons) interpolation of the boundary data.
    BoundaryExtension,
    /// Interior values taken from the given mesh function.
    Custom(MeshFunction),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StoppingRule {
    /// Interior max-norm of `M_h[u] - f`.
    #[default]
    Residual,
    /// Interior max-norm of the last update.
    Increment,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub method: Method,
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub initial_guess: InitialGuess,
    pub stopping: StoppingRule,
    pub dirac_spread: DiracSpread,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Preconditioned,
            mu: 50.0,
            tol: 1e-8,
            max_iter: 1_000_000,
            initial_guess: InitialGuess::ExactRestriction,
            stopping: StoppingRule::Residual,
            dirac_spread: DiracSpread::Nearest,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub solution: MeshFunction,
    /// Number of residual evaluations; one per entry of `residual_history`.
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: Duration,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn write_history_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::from("iter,residual\n");
        for (k, r) in self.residual_history.iter().enumerate() {
            buf.push_str(&format!("{k},{r:.16e}\n"));
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// `u + scale * d` on the interior, `u` on the boundary.
fn update_interior(u: &MeshFunction, scale: f64, d: &MeshFunction) -> MeshFunction {
    let grid = Arc::clone(u.grid());
    let mut out = u.clone();
    let (src, dst) = (d.values(), out.values_mut());
    for row in grid.interior_rows() {
        for k in row {
            dst[k] += scale * src[k];
        }
    }
    out
}

/// One step of basic time marching.
pub fn basic_step(u: &MeshFunction, f: &MeshFunction, cfg: &SolverConfig, opcfg: &OperatorConfig) -> Result<MeshFunction> {
    let r = ma_residual(u, f, None, opcfg)?;
    Ok(update_interior(u, 1.0 / cfg.mu, &r))
}

/// One step of Laplacian-preconditioned time marching.
pub fn preconditioned_step(
    u: &MeshFunction,
    f: &MeshFunction,
    cfg: &SolverConfig,
    opcfg: &OperatorConfig,
    poisson: &PoissonSolver,
) -> Result<MeshFunction> {
    let r = ma_residual(u, f, None, opcfg)?;
    let z = poisson.solve(&r)?;
    Ok(update_interior(u, -1.0 / cfg.mu, &z))
}

/// Coons patch of the boundary values of `g`: matches `g` on all four sides.
pub fn boundary_extension(g: &MeshFunction) -> MeshFunction {
    let grid = g.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = g.clone();
    let (g00, g10, g01, g11) = (g.at(0, 0), g.at(nx, 0), g.at(0, ny), g.at(nx, ny));
    for n in grid.interior() {
        let s = n.i as f64 / nx as f64;
        let t = n.j as f64 / ny as f64;
        let edges = (1.0 - t) * g.at(n.i, 0) + t * g.at(n.i, ny) + (1.0 - s) * g.at(0, n.j) + s * g.at(nx, n.j);
        let corners = (1.0 - s) * (1.0 - t) * g00 + s * (1.0 - t) * g10 + (1.0 - s) * t * g01 + s * t * g11;
        out.set(*n, edges - corners);
    }
    out
}

fn initial_iterate(problem: &Problem, grid: &Arc<Grid>, guess: &InitialGuess, g: &MeshFunction) -> Result<MeshFunction> {
    let mut u = match guess {
        InitialGuess::ExactRestriction => problem.exact_restriction(grid).ok_or_else(|| {
            Error::Config(format!("problem '{}' has no exact solution to start from", problem.name))
        })?,
        InitialGuess::BoundaryExtension => boundary_extension(g),
        InitialGuess::Custom(u0) => {
            u0.check_same_grid(g)?;
            u0.clone()
        }
    };
    u.copy_boundary_from(g)?;
    Ok(u)
}

/// Solves the discrete problem for `problem` on `grid`.
///
/// Running out of iterations yields `converged == false`; a non-finite
/// iterate is an error.
pub fn solve(
    problem: &Problem,
    grid: &Arc<Grid>,
    cfg: &SolverConfig,
    opcfg: &OperatorConfig,
    pcfg: &PoissonConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    let f = problem.rhs(grid, cfg.dirac_spread)?;
    let g = problem.boundary_data(grid);
    let u0 = initial_iterate(problem, grid, &cfg.initial_guess, &g)?;
    iterate(u0, &f, cfg, opcfg, pcfg)
}

/// Runs the configured fixed-point iteration from `u0`, whose boundary values
/// are the Dirichlet data.
pub fn iterate(
    u0: MeshFunction,
    f: &MeshFunction,
    cfg: &SolverConfig,
    opcfg: &OperatorConfig,
    pcfg: &PoissonConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    let started = Instant::now();
    let poisson = match cfg.method {
        Method::Preconditioned => Some(PoissonSolver::new(u0.grid(), *pcfg)?),
        Method::Basic => None,
    };
    let mut u = u0;
    let mut history = Vec::new();
    let mut converged = false;
    for iteration in 0..cfg.max_iter {
        let r = ma_residual(&u, f, None, opcfg)?;
        let norm = r.max_norm(Region::Interior);
        if !norm.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        history.push(norm);
        if cfg.stopping == StoppingRule::Residual && norm <= cfg.tol {
            converged = true;
            break;
        }
        if iteration + 1 == cfg.max_iter {
            break;
        }
        let next = match &poisson {
            Some(solver) => update_interior(&u, -1.0 / cfg.mu, &solver.solve(&r)?),
            None => update_interior(&u, 1.0 / cfg.mu, &r),
        };
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: iteration + 1 });
        }
        let increment = next.max_norm_diff(&u, Region::Interior)?;
        u = next;
        if cfg.stopping == StoppingRule::Increment && increment <= cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        solution: u,
        iterations: history.len(),
        residual_history: history,
        converged,
        wall_time: started.elapsed(),
    })
}

/// How `contraction_ratio` draws its pairs `(v, w)`.
#[derive(Clone, Debug)]
pub enum PairSampling {
    /// Interior values uniform in `[-1, 1]`; boundary shared, also uniform.
    Uniform,
    /// `base + amplitude * ξ` with `ξ` uniform in `[-1, 1]` on the interior.
    Perturbed { base: MeshFunction, amplitude: f64 },
}

/// The step map with `f ≡ 0`: `T₁[v] = v + M_h[v]/μ` or `T₂[v] = v - Δ_h⁻¹ M_h[v]/μ`.
pub fn step_map(
    v: &MeshFunction,
    method: Method,
    mu: f64,
    opcfg: &OperatorConfig,
    poisson: Option<&PoissonSolver>,
) -> Result<MeshFunction> {
    let m = ma_apply_all(v, opcfg);
    match method {
        Method::Basic => Ok(update_interior(v, 1.0 / mu, &m)),
        Method::Preconditioned => {
            let solver = poisson.ok_or_else(|| Error::Config("preconditioned map needs a Poisson solver".into()))?;
            Ok(update_interior(v, -1.0 / mu, &solver.solve(&m)?))
        }
    }
}

/// Largest observed `|T v - T w|_∞ / |v - w|_∞` over interior nodes for
/// seeded pairs agreeing on the boundary. Identical pairs are skipped.
#[allow(clippy::too_many_arguments)]
pub fn contraction_ratio(
    method: Method,
    mu: f64,
    grid: &Arc<Grid>,
    opcfg: &OperatorConfig,
    pcfg: &PoissonConfig,
    sampling: &PairSampling,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    assert!(trials >= 1);
    let poisson = match method {
        Method::Preconditioned => Some(PoissonSolver::new(grid, *pcfg)?),
        Method::Basic => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let (v, w) = sample_pair(grid, sampling, &mut rng)?;
        best = best.max(pair_ratio(&v, &w, method, mu, opcfg, poisson.as_ref())?.unwrap_or(0.0));
    }
    Ok(best)
}

/// Contraction ratio of one pair, `None` when `v == w` on the interior.
pub fn pair_ratio(
    v: &MeshFunction,
    w: &MeshFunction,
    method: Method,
    mu: f64,
    opcfg: &OperatorConfig,
    poisson: Option<&PoissonSolver>,
) -> Result<Option<f64>> {
    let den = v.max_norm_diff(w, Region::Interior)?;
    if den == 0.0 {
        return Ok(None);
    }
    let tv = step_map(v, method, mu, opcfg, poisson)?;
    let tw = step_map(w, method, mu, opcfg, poisson)?;
    Ok(Some(tv.max_norm_diff(&tw, Region::Interior)? / den))
}

fn sample_pair(grid: &Arc<Grid>, sampling: &PairSampling, rng: &mut ChaCha8Rng) -> Result<(MeshFunction, MeshFunction)> {
    let (mut v, amplitude) = match sampling {
        PairSampling::Uniform => {
            let mut v = MeshFunction::zeros(grid);
            for n in grid.boundary() {
                v.set(*n, rng.gen_range(-1.0..=1.0));
            }
            (v, 1.0)
        }
        PairSampling::Perturbed { base, amplitude } => {
            if !grid.same_as(base.grid()) {
                return Err(Error::GridMismatch);
            }
            (base.clone(), *amplitude)
        }
    };
    let mut w = v.clone();
    for n in grid.interior() {
        let k = grid.flat(n.i, n.j);
        v.values_mut()[k] += amplitude * rng.gen_range(-1.0..=1.0);
        w.values_mut()[k] += amplitude * rng.gen_range(-1.0..=1.0);
    }
    Ok((v, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{restrict, GridSpec};
    use crate::operator::ma_apply_all;
    use crate::poisson::{laplacian, poisson_solve};
    use crate::problems::{quadratic_problem, smooth_radial_problem};

    fn unit(h: f64) -> Arc<Grid> {
        Grid::new(GridSpec::unit_square(h)).unwrap()
    }

    fn quad(grid: &Arc<Grid>) -> MeshFunction {
        restrict(|x, y| (x * x + y * y) / 2.0, grid)
    }

    #[test]
    fn steps_fix_exact_solution() {
        let g = unit(1.0 / 16.0);
        let u = quad(&g);
        let one = MeshFunction::constant(&g, 1.0);
        let cfg = SolverConfig::default();
        let op = OperatorConfig::exact();
        let b = basic_step(&u, &one, &cfg, &op).unwrap();
        assert!(b.max_norm_diff(&u, Region::All).unwrap() < 1e-10);
        let solver = PoissonSolver::new(&g, PoissonConfig::default()).unwrap();
        let p = preconditioned_step(&u, &one, &cfg, &op, &solver).unwrap();
        assert!(p.max_norm_diff(&u, Region::All).unwrap() < 1e-10);
    }

    #[test]
    fn basic_step_with_unit_residual() {
        let g = unit(1.0 / 16.0);
        let u = quad(&g);
        let zero = MeshFunction::zeros(&g);
        let cfg = SolverConfig::default();
        let next = basic_step(&u, &zero, &cfg, &OperatorConfig::exact()).unwrap();
        for n in g.interior() {
            assert!((next.get(*n) - u.get(*n) - 1.0 / 50.0).abs() < 1e-10);
        }
        for n in g.boundary() {
            assert_eq!(next.get(*n).to_bits(), u.get(*n).to_bits());
        }
    }

    #[test]
    fn preconditioned_constant_residual_uses_torsion() {
        let g = unit(1.0 / 16.0);
        let u = quad(&g);
        let c = 0.75;
        let f = MeshFunction::constant(&g, 1.0 - c);
        let cfg = SolverConfig::default();
        let solver = PoissonSolver::new(&g, PoissonConfig::default()).unwrap();
        let next = preconditioned_step(&u, &f, &cfg, &OperatorConfig::exact(), &solver).unwrap();
        let mut ones = MeshFunction::constant(&g, 1.0);
        ones.zero_boundary();
        let z = poisson_solve(&ones, &PoissonConfig::default()).unwrap();
        let center = crate::grid::GridIndex::new(8, 8);
        let expected = u.get(center) - c / 50.0 * z.get(center);
        assert!((next.get(center) - expected).abs() < 1e-10);
        assert!(z.get(center) < 0.0);
    }

    /// `-Δ_h u' + Δ_h u - (M_h[u] - f)/μ = 0` on the interior for random `u`.
    #[test]
    fn preconditioned_step_reconstructs_displayed_update() {
        let g = unit(1.0 / 24.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u = quad(&g);
        for n in g.interior() {
            u.set(*n, u.get(*n) + 1e-3 * rng.gen_range(-1.0..1.0));
        }
        let f = MeshFunction::constant(&g, 0.8);
        let cfg = SolverConfig::default();
        let op = OperatorConfig::default();
        let solver = PoissonSolver::new(&g, PoissonConfig::default()).unwrap();
        let next = preconditioned_step(&u, &f, &cfg, &op, &solver).unwrap();
        let r = ma_residual(&u, &f, None, &op).unwrap();
        let lhs = laplacian(&next).scaled(-1.0).axpy(1.0, &laplacian(&u)).unwrap().axpy(-1.0 / cfg.mu, &r).unwrap();
        let scale = r.max_norm(Region::Interior) / cfg.mu;
        assert!(lhs.max_norm(Region::Interior) < 1e-9 * scale.max(1.0));
        for n in g.boundary() {
            assert_eq!(next.get(*n).to_bits(), u.get(*n).to_bits());
        }
    }

    #[test]
    fn quadratic_converges_both_methods() {
        let p = quadratic_problem();
        let g = p.grid(1.0 / 16.0).unwrap();
        let exact = p.exact_restriction(&g).unwrap();
        for method in [Method::Basic, Method::Preconditioned] {
            let mut start = exact.clone();
            for n in g.interior() {
                let (x, y) = g.position(*n);
                start.set(*n, start.get(*n) + 0.01 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin());
            }
            let cfg = SolverConfig {
                method,
                mu: if method == Method::Basic { 2000.0 } else { 50.0 },
                tol: 1e-10,
                max_iter: 200_000,
                initial_guess: InitialGuess::Custom(start),
                ..Default::default()
            };
            let res = solve(&p, &g, &cfg, &OperatorConfig::exact(), &PoissonConfig::default()).unwrap();
            assert!(res.converged, "{method:?}");
            assert!(res.final_residual() <= 1e-10);
            assert_eq!(res.residual_history.len(), res.iterations);
            assert!(res.solution.max_norm_diff(&exact, Region::Interior).unwrap() < 1e-8);
        }
    }

    #[test]
    fn exact_start_converges_immediately() {
        let p = quadratic_problem();
        let g = p.grid(0.125).unwrap();
        let res = solve(&p, &g, &SolverConfig::default(), &OperatorConfig::exact(), &PoissonConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn iteration_budget_exhaustion_is_not_an_error() {
        let p = smooth_radial_problem();
        let g = p.grid(1.0 / 16.0).unwrap();
        let cfg = SolverConfig {
            max_iter: 3,
            initial_guess: InitialGuess::BoundaryExtension,
            ..Default::default()
        };
        let res = solve(&p, &g, &cfg, &OperatorConfig::default(), &PoissonConfig::default()).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn increment_rule_stops() {
        let p = quadratic_problem();
        let g = p.grid(0.125).unwrap();
        let cfg = SolverConfig {
            stopping: StoppingRule::Increment,
            tol: 1e-9,
            initial_guess: InitialGuess::BoundaryExtension,
            ..Default::default()
        };
        let res = solve(&p, &g, &cfg, &OperatorConfig::exact(), &PoissonConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.final_residual() < 1e-6);
    }

    #[test]
    fn coons_extension_matches_boundary_and_bilinear() {
        let g = unit(0.125);
        let bilinear = restrict(|x, y| 1.0 + 2.0 * x - y + 0.5 * x * y, &g);
        let ext = boundary_extension(&bilinear);
        assert!(ext.max_norm_diff(&bilinear, Region::All).unwrap() < 1e-14);
    }

    #[test]
    fn rejects_bad_configs() {
        let p = quadratic_problem();
        let g = p.grid(0.125).unwrap();
        let op = OperatorConfig::default();
        let pc = PoissonConfig::default();
        for cfg in [
            SolverConfig { mu: 0.0, ..Default::default() },
            SolverConfig { tol: -1.0, ..Default::default() },
            SolverConfig { max_iter: 0, ..Default::default() },
        ] {
            assert!(matches!(solve(&p, &g, &cfg, &op, &pc), Err(Error::Config(_))));
        }
    }

    #[test]
    fn blow_up_is_a_hard_error() {
        let g = unit(0.125);
        let u0 = quad(&g);
        let f = MeshFunction::constant(&g, 1e300);
        let cfg = SolverConfig {
            method: Method::Basic,
            mu: 1e-10,
            ..Default::default()
        };
        let out = iterate(u0, &f, &cfg, &OperatorConfig::default(), &PoissonConfig::default());
        assert!(matches!(out, Err(Error::NonFinite { iteration: 1 })), "{out:?}");
    }

    #[test]
    fn contraction_pairs() {
        let g = unit(1.0 / 16.0);
        let op = OperatorConfig::default();
        let pc = PoissonConfig::default();
        let v = quad(&g);
        assert_eq!(pair_ratio(&v, &v, Method::Basic, 50.0, &op, None).unwrap(), None);
        let sampling = PairSampling::Perturbed { base: quad(&g), amplitude: 1e-4 };
        let a = contraction_ratio(Method::Preconditioned, 50.0, &g, &op, &pc, &sampling, 4, 1).unwrap();
        let b = contraction_ratio(Method::Preconditioned, 50.0, &g, &op, &pc, &sampling, 8, 1).unwrap();
        assert!(b >= a && a > 0.0);
        // The map is linear in the step size: T differences for tiny μ blow up.
        let c = contraction_ratio(Method::Basic, 1e-3, &g, &op, &pc, &sampling, 2, 1).unwrap();
        assert!(c > 1.0);
        let m = ma_apply_all(&v, &op);
        assert!(m.max_norm(Region::Interior) > 0.0);
    }
}
