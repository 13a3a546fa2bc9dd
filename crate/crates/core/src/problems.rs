//! Benchmark catalog and the grid-refinement driver.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{restrict, Grid, GridSpec, MeshFunction, Rect, Region};
use crate::measures::{build_rhs, Atom, Density, DiracSpread, MeasureSpec, ScalarField};
use crate::operator::OperatorConfig;
use crate::poisson::PoissonConfig;
use crate::solvers::{solve, SolverConfig};

#[derive(Clone, Debug)]
pub struct Problem {
    pub name: &'static str,
    pub domain: Rect,
    pub measure: MeasureSpec,
    pub boundary: ScalarField,
    pub exact: Option<ScalarField>,
}

impl Problem {
    pub fn grid(&self, h: f64) -> Result<Arc<Grid>> {
        Grid::new(GridSpec::new(self.domain, h))
    }

    pub fn rhs(&self, grid: &Arc<Grid>, spread: DiracSpread) -> Result<MeshFunction> {
        build_rhs(&self.measure, grid, spread)
    }

    /// `r_h(g)`; only boundary entries are meaningful.
    pub fn boundary_data(&self, grid: &Arc<Grid>) -> MeshFunction {
        restrict(self.boundary, grid)
    }

    pub fn exact_restriction(&self, grid: &Arc<Grid>) -> Option<MeshFunction> {
        self.exact.map(|u| restrict(u, grid))
    }

    /// Largest `|exact - g|` over `samples` points per side of the perimeter.
    pub fn boundary_mismatch(&self, samples: usize) -> Option<f64> {
        let u = self.exact?;
        let d = self.domain;
        let mut worst: f64 = 0.0;
        for k in 0..=samples {
            let t = k as f64 / samples as f64;
            let x = d.x_min + t * d.width();
            let y = d.y_min + t * d.height();
            for (px, py) in [(x, d.y_min), (x, d.y_max), (d.x_min, y), (d.x_max, y)] {
                worst = worst.max((u(px, py) - (self.boundary)(px, py)).abs());
            }
        }
        Some(worst)
    }
}

fn unit_density(_: f64, _: f64) -> f64 {
    1.0
}

fn radial_density(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    (1.0 + r2) * r2.exp()
}

/// Densities that a serialized measure may reference by name.
pub fn density_by_name(name: &str) -> Option<Density> {
    match name {
        "one" => Some(Density { name: "one", eval: unit_density }),
        "radial" => Some(Density { name: "radial", eval: radial_density }),
        _ => None,
    }
}

pub fn two_dirac_exact(x: f64, y: f64) -> f64 {
    if 0.25 < x && x < 0.75 {
        (y - 0.5).abs()
    } else {
        let left = (x - 0.25).hypot(y - 0.5);
        let right = (x - 0.75).hypot(y - 0.5);
        left.min(right)
    }
}

/// Two cones of weight `π/2` joined by a ridge along `y = 1/2`.
pub fn two_dirac_problem() -> Problem {
    Problem {
        name: "two_dirac",
        domain: Rect::UNIT_SQUARE,
        measure: MeasureSpec::atoms(vec![
            Atom { x: 0.25, y: 0.5, weight: FRAC_PI_2 },
            Atom { x: 0.75, y: 0.5, weight: FRAC_PI_2 },
        ]),
        boundary: two_dirac_exact,
        exact: Some(two_dirac_exact),
    }
}

fn half_norm_sq(x: f64, y: f64) -> f64 {
    0.5 * (x * x + y * y)
}

pub fn quadratic_problem() -> Problem {
    Problem {
        name: "quadratic",
        domain: Rect::UNIT_SQUARE,
        measure: MeasureSpec::density(density_by_name("one").expect("registered")),
        boundary: half_norm_sq,
        exact: Some(half_norm_sq),
    }
}

fn radial_exact(x: f64, y: f64) -> f64 {
    (0.5 * (x * x + y * y)).exp()
}

/// `u = exp(|x|²/2)` with `det D²u = (1 + |x|²) exp(|x|²)`.
pub fn smooth_radial_problem() -> Problem {
    Problem {
        name: "smooth_radial",
        domain: Rect::UNIT_SQUARE,
        measure: MeasureSpec::density(density_by_name("radial").expect("registered")),
        boundary: radial_exact,
        exact: Some(radial_exact),
    }
}

fn cone_exact(x: f64, y: f64) -> f64 {
    (x - 0.5).hypot(y - 0.5)
}

/// Unit-slope cone at the center; its gradient image at the apex is the unit
/// disk, so the atom carries weight `π`.
pub fn single_cone_problem() -> Problem {
    Problem {
        name: "single_cone",
        domain: Rect::UNIT_SQUARE,
        measure: MeasureSpec::atoms(vec![Atom { x: 0.5, y: 0.5, weight: PI }]),
        boundary: cone_exact,
        exact: Some(cone_exact),
    }
}

pub const PROBLEM_NAMES: [&str; 4] = ["two_dirac", "quadratic", "smooth_radial", "single_cone"];

pub fn problem_by_name(name: &str) -> Option<Problem> {
    match name {
        "two_dirac" => Some(two_dirac_problem()),
        "quadratic" => Some(quadratic_problem()),
        "smooth_radial" => Some(smooth_radial_problem()),
        "single_cone" => Some(single_cone_problem()),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Interior max-norm distance to `r_h(exact)`.
    pub max_error: Option<f64>,
    pub residual: f64,
    pub wall_time: Duration,
    /// Set when the solve aborted instead of returning.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    pub problem: String,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    pub fn errors(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.max_error).collect()
    }

    /// `h,iterations,converged,max_error,residual,wall_time_ms`; the timing
    /// column is written as `0` when `with_timing` is false.
    pub fn write_csv<W: Write>(&self, mut out: W, with_timing: bool) -> Result<()> {
        let mut buf = String::from("h,iterations,converged,max_error,residual,wall_time_ms\n");
        for r in &self.rows {
            let err = r.max_error.map_or(String::new(), |e| format!("{e:.16e}"));
            let ms = if with_timing { r.wall_time.as_secs_f64() * 1e3 } else { 0.0 };
            writeln!(
                buf,
                "{:.16e},{},{},{},{:.16e},{:.3}",
                r.h, r.iterations, r.converged, err, r.residual, ms
            )
            .expect("writing to a String cannot fail");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Aligned table with one column per `h`.
    pub fn to_text(&self, mu: f64) -> String {
        let mut s = String::new();
        let header: Vec<String> = self.rows.iter().map(|r| format!("{:>10}", format_h(r.h))).collect();
        let errors: Vec<String> = self
            .rows
            .iter()
            .map(|r| match (r.max_error, r.converged) {
                (Some(e), true) => format!("{e:>10.2e}"),
                (Some(e), false) => format!("{:>10}", format!("{e:.2e}*")),
                (None, _) => format!("{:>10}", "-"),
            })
            .collect();
        let _ = writeln!(s, "problem: {}", self.problem);
        let _ = writeln!(s, "{:>8} |{}", "mu \\ h", header.join(" "));
        let _ = writeln!(s, "{}", "-".repeat(10 + 11 * self.rows.len()));
        let _ = writeln!(s, "{mu:>8} |{}", errors.join(" "));
        if !self.all_converged() {
            let _ = writeln!(s, "(* not converged)");
        }
        s
    }
}

/// `1/2^k` or `1/n` when `h` is such a reciprocal, decimal otherwise.
pub fn format_h(h: f64) -> String {
    let n = (1.0 / h).round();
    if ((1.0 / h) - n).abs() < 1e-9 * n {
        let n = n as u64;
        if n.is_power_of_two() && n > 1 {
            format!("1/2^{}", n.trailing_zeros())
        } else {
            format!("1/{n}")
        }
    } else {
        format!("{h}")
    }
}

/// Solves `problem` at each `h` and tabulates the interior max-norm error.
pub fn run_convergence_study(
    problem: &Problem,
    h_list: &[f64],
    cfg: &SolverConfig,
    opcfg: &OperatorConfig,
    pcfg: &PoissonConfig,
) -> Result<ErrorTable> {
    if h_list.is_empty() {
        return Err(Error::Config("h list must not be empty".into()));
    }
    let grids = h_list
        .iter()
        .map(|&h| problem.grid(h))
        .collect::<Result<Vec<_>>>()?;
    let rows = grids
        .par_iter()
        .map(|grid| {
            let started = std::time::Instant::now();
            match solve(problem, grid, cfg, opcfg, pcfg) {
                Ok(res) => {
                    let max_error = problem.exact_restriction(grid).map(|u| {
                        res.solution
                            .max_norm_diff(&u, Region::Interior)
                            .expect("same grid")
                    });
                    ErrorRow {
                        h: grid.h(),
                        iterations: res.iterations,
                        converged: res.converged,
                        max_error,
                        residual: res.final_residual(),
                        wall_time: res.wall_time,
                        failure: None,
                    }
                }
                Err(e) => ErrorRow {
                    h: grid.h(),
                    iterations: 0,
                    converged: false,
                    max_error: None,
                    residual: f64::NAN,
                    wall_time: started.elapsed(),
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(ErrorTable {
        problem: problem.name.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{ma_residual, OperatorConfig};

    #[test]
    fn two_dirac_values() {
        let p = two_dirac_problem();
        let u = p.exact.unwrap();
        assert_eq!(u(0.5, 0.75), 0.25);
        assert_eq!(u(0.0, 0.5), 0.25);
        assert_eq!(u(0.25, 0.5), 0.0);
        assert_eq!(u(0.5, 0.5), 0.0);
        // Branches agree on x = 1/4 and x = 3/4.
        for &y in &[0.0, 0.2, 0.5, 0.9] {
            assert!((u(0.25, y) - (y - 0.5f64).abs()).abs() < 1e-15);
            assert!((u(0.75, y) - (y - 0.5f64).abs()).abs() < 1e-15);
        }
        let grid = p.grid(1.0 / 16.0).unwrap();
        let r = p.exact_restriction(&grid).unwrap();
        assert_eq!(r.at(8, 8), 0.0);
    }

    #[test]
    fn catalog_boundary_compatibility() {
        for name in PROBLEM_NAMES {
            let p = problem_by_name(name).unwrap();
            assert_eq!(p.name, name);
            assert!(p.boundary_mismatch(200).unwrap() <= 1e-12);
        }
        assert!(problem_by_name("nope").is_none());
    }

    #[test]
    fn quadratic_is_a_discrete_solution() {
        let p = quadratic_problem();
        assert_eq!((p.exact.unwrap())(1.0, 1.0), 1.0);
        let grid = p.grid(1.0 / 16.0).unwrap();
        let u = p.exact_restriction(&grid).unwrap();
        let f = p.rhs(&grid, DiracSpread::Nearest).unwrap();
        let r = ma_residual(&u, &f, Some(&p.boundary_data(&grid)), &OperatorConfig::exact()).unwrap();
        assert!(r.max_norm(Region::All) < 1e-9);
    }

    #[test]
    fn radial_identity_by_finite_differences() {
        let p = smooth_radial_problem();
        let u = p.exact.unwrap();
        let f = p.measure.density.unwrap().eval;
        assert_eq!(f(0.0, 0.0), 1.0);
        assert_eq!(u(0.0, 0.0), 1.0);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        // Richardson-extrapolated central differences, O(d^4) accurate.
        let fd = |x: f64, y: f64, d: f64| {
            let uxx = (u(x + d, y) - 2.0 * u(x, y) + u(x - d, y)) / (d * d);
            let uyy = (u(x, y + d) - 2.0 * u(x, y) + u(x, y - d)) / (d * d);
            let uxy = (u(x + d, y + d) - u(x + d, y - d) - u(x - d, y + d) + u(x - d, y - d)) / (4.0 * d * d);
            [uxx, uyy, uxy]
        };
        for _ in 0..20 {
            let (x, y): (f64, f64) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9));
            let (coarse, fine) = (fd(x, y, 1e-2), fd(x, y, 5e-3));
            let [uxx, uyy, uxy]: [f64; 3] = std::array::from_fn(|k| (4.0 * fine[k] - coarse[k]) / 3.0);
            let det = uxx * uyy - uxy * uxy;
            assert!((det - f(x, y)).abs() < 1e-6, "det {det} f {}", f(x, y));
            let e = (0.5 * (x * x + y * y)).exp();
            assert!((uxx - (1.0 + x * x) * e).abs() < 1e-6);
            assert!((uyy - (1.0 + y * y) * e).abs() < 1e-6);
            assert!((uxy - x * y * e).abs() < 1e-6);
        }
    }

    #[test]
    fn single_cone_values() {
        let p = single_cone_problem();
        let u = p.exact.unwrap();
        assert_eq!(u(0.5, 0.5), 0.0);
        assert_eq!(u(1.0, 0.5), 0.5);
        assert_eq!(p.measure.atoms[0].weight, PI);
    }

    #[test]
    fn h_labels() {
        assert_eq!(format_h(0.125), "1/2^3");
        assert_eq!(format_h(1.0 / 3.0), "1/3");
        assert_eq!(format_h(0.3), "0.3");
    }
}
