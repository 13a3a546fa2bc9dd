//! Five-point Laplacian with homogeneous Dirichlet data and two solvers for
//! `Δ_h z = r`: diagonalization in the discrete sine basis, and matrix-free
//! conjugate gradients.

use std::sync::Arc;

use rayon::prelude::*;
use rustdct::{Dst1, DctPlanner};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridIndex, MeshFunction, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PoissonMethod {
    #[default]
    FastDiagonalization,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonConfig {
    pub method: PoissonMethod,
    /// Target for `|Δ_h z - r|_∞ / |r|_∞` in the iterative method.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            method: PoissonMethod::FastDiagonalization,
            rel_tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

impl PoissonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!("poisson rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("poisson max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// `Δ_h v(x)` at an interior node.
pub fn laplacian_apply(v: &MeshFunction, x: GridIndex) -> f64 {
    let h = v.grid().h();
    let (i, j) = (x.i, x.j);
    (v.at(i + 1, j) + v.at(i - 1, j) + v.at(i, j + 1) + v.at(i, j - 1) - 4.0 * v.at(i, j)) / (h * h)
}

/// `Δ_h v` on the interior, zero on the boundary.
pub fn laplacian(v: &MeshFunction) -> MeshFunction {
    let grid = v.grid();
    let mut out = MeshFunction::zeros(grid);
    laplacian_into(grid, v.values(), out.values_mut());
    out
}

fn laplacian_into(grid: &Grid, v: &[f64], out: &mut [f64]) {
    let stride = grid.ny() + 1;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let nx = grid.nx();
    out.par_chunks_mut(stride).enumerate().for_each(|(i, row)| {
        if i == 0 || i == nx {
            row.fill(0.0);
            return;
        }
        row[0] = 0.0;
        row[stride - 1] = 0.0;
        let k0 = i * stride;
        for j in 1..stride - 1 {
            let k = k0 + j;
            row[j] = (v[k + stride] + v[k - stride] + v[k + 1] + v[k - 1] - 4.0 * v[k]) * inv_h2;
        }
    });
}

/// Reusable solver for one grid.
pub struct PoissonSolver {
    grid: Arc<Grid>,
    cfg: PoissonConfig,
    dst_x: Arc<dyn Dst1<f64>>,
    dst_y: Arc<dyn Dst1<f64>>,
    /// `1 / λ_kl` in the sine basis, row-major over `(k, l)`.
    inv_eigen: Vec<f64>,
}

impl PoissonSolver {
    pub fn new(grid: &Arc<Grid>, cfg: PoissonConfig) -> Result<Self> {
        cfg.validate()?;
        let (mx, my) = (grid.nx() - 1, grid.ny() - 1);
        let mut planner = DctPlanner::new();
        let dst_x = planner.plan_dst1(mx);
        let dst_y = planner.plan_dst1(my);
        let h2 = grid.h() * grid.h();
        let eig = |k: usize, n: usize| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin();
            -4.0 * s * s / h2
        };
        let ex: Vec<f64> = (1..=mx).map(|k| eig(k, grid.nx())).collect();
        let ey: Vec<f64> = (1..=my).map(|l| eig(l, grid.ny())).collect();
        // Two unnormalized DST-I passes per axis scale by (n/2) each.
        let scale = 4.0 / (grid.nx() as f64 * grid.ny() as f64);
        let inv_eigen = ex
            .iter()
            .flat_map(|a| ey.iter().map(move |b| scale / (a + b)))
            .collect();
        Ok(PoissonSolver {
            grid: Arc::clone(grid),
            cfg,
            dst_x,
            dst_y,
            inv_eigen,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &PoissonConfig {
        &self.cfg
    }

    /// Solves `Δ_h z = rhs` on the interior with `z = 0` on the boundary.
    /// Boundary entries of `rhs` are ignored.
    pub fn solve(&self, rhs: &MeshFunction) -> Result<MeshFunction> {
        if !self.grid.same_as(rhs.grid()) {
            return Err(Error::GridMismatch);
        }
        match self.cfg.method {
            PoissonMethod::FastDiagonalization => Ok(self.solve_fast(rhs)),
            PoissonMethod::Iterative => self.solve_cg(rhs),
        }
    }

    fn solve_fast(&self, rhs: &MeshFunction) -> MeshFunction {
        let grid = &self.grid;
        let (mx, my) = (grid.nx() - 1, grid.ny() - 1);
        let mut work = vec![0.0; mx * my];
        for (i, row) in work.chunks_mut(my).enumerate() {
            let k0 = grid.flat(i + 1, 1);
            row.copy_from_slice(&rhs.values()[k0..k0 + my]);
        }

        self.transform_2d(&mut work);
        work.par_iter_mut()
            .zip(self.inv_eigen.par_iter())
            .for_each(|(w, inv)| *w *= inv);
        self.transform_2d(&mut work);

        let mut z = MeshFunction::zeros(grid);
        for (i, row) in work.chunks(my).enumerate() {
            let k0 = grid.flat(i + 1, 1);
            z.values_mut()[k0..k0 + my].copy_from_slice(row);
        }
        z
    }

    fn transform_2d(&self, work: &mut [f64]) {
        let (mx, my) = (self.grid.nx() - 1, self.grid.ny() - 1);
        let dst_y = &self.dst_y;
        work.par_chunks_mut(my)
            .for_each_init(|| vec![0.0; dst_y.get_scratch_len()], |scratch, row| {
                dst_y.process_dst1_with_scratch(row, scratch)
            });
        let mut transposed = vec![0.0; mx * my];
        for i in 0..mx {
            for j in 0..my {
                transposed[j * mx + i] = work[i * my + j];
            }
        }
        let dst_x = &self.dst_x;
        transposed
            .par_chunks_mut(mx)
            .for_each_init(|| vec![0.0; dst_x.get_scratch_len()], |scratch, col| {
                dst_x.process_dst1_with_scratch(col, scratch)
            });
        for j in 0..my {
            for i in 0..mx {
                work[i * my + j] = transposed[j * mx + i];
            }
        }
    }

    /// Conjugate gradients on `-Δ_h z = -rhs`, which is symmetric positive definite.
    fn solve_cg(&self, rhs: &MeshFunction) -> Result<MeshFunction> {
        let grid = &self.grid;
        let interior = |k: usize| {
            let n = grid.unflat(k);
            grid.is_interior(n.i, n.j)
        };
        let mask: Vec<bool> = (0..grid.node_count()).map(interior).collect();
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).zip(&mask).filter(|(_, m)| **m).map(|((x, y), _)| x * y).sum()
        };

        let mut b = rhs.values().iter().map(|v| -v).collect::<Vec<_>>();
        for (v, m) in b.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        let b_norm = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut x = vec![0.0; grid.node_count()];
        if b_norm == 0.0 {
            return MeshFunction::from_values(grid, x);
        }
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; grid.node_count()];
        let mut rr = dot(&r, &r);
        for iter in 0..self.cfg.max_iter {
            laplacian_into(grid, &p, &mut ap);
            ap.iter_mut().for_each(|v| *v = -*v);
            let alpha = rr / dot(&p, &ap);
            for k in 0..x.len() {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let res = r.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / b_norm;
            if res <= self.cfg.rel_tol {
                // Recompute the true residual; the recursive one drifts.
                let z = MeshFunction::from_values(grid, x.clone())?;
                let true_res = laplacian(&z).max_norm_diff(rhs, Region::Interior)? / b_norm;
                if true_res <= self.cfg.rel_tol {
                    return Ok(z);
                }
                laplacian_into(grid, &x, &mut ap);
                for k in 0..r.len() {
                    r[k] = if mask[k] { b[k] + ap[k] } else { 0.0 };
                }
                p.copy_from_slice(&r);
                rr = dot(&r, &r);
                continue;
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..p.len() {
                p[k] = r[k] + beta * p[k];
            }
            if iter + 1 == self.cfg.max_iter {
                return Err(Error::PoissonNotConverged {
                    iterations: self.cfg.max_iter,
                    residual: res,
                });
            }
        }
        let z = MeshFunction::from_values(grid, x)?;
        let res = laplacian(&z).max_norm_diff(rhs, Region::Interior)? / b_norm;
        Err(Error::PoissonNotConverged {
            iterations: self.cfg.max_iter,
            residual: res,
        })
    }
}

/// One-shot `Δ_h⁻¹ rhs` with homogeneous Dirichlet data.
pub fn poisson_solve(rhs: &MeshFunction, cfg: &PoissonConfig) -> Result<MeshFunction> {
    PoissonSolver::new(rhs.grid(), *cfg)?.solve(rhs)
}

/// `‖Δ_h⁻¹‖_∞`, equal to the maximum of the discrete torsion function since
/// `-Δ_h⁻¹` is entrywise nonnegative.
pub fn inv_norm_estimate(grid: &Arc<Grid>, cfg: &PoissonConfig) -> Result<f64> {
    let mut rhs = MeshFunction::constant(grid, -1.0);
    rhs.zero_boundary();
    Ok(poisson_solve(&rhs, cfg)?.max_norm(Region::Interior))
}
