//! The wide-stencil Monge-Ampère operator
//!
//! ```text
//! M_h[v](x) = min over admissible bases (a1, a2) of
//!             max(D_a1 v(x) / |a1 h|², 0) * max(D_a2 v(x) / |a2 h|², 0)
//! ```
//!
//! with `D_a v(x) = v(x + a) - 2 v(x) + v(x - a)`, plus an optional `±ε v(x)`
//! properness term.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridIndex, MeshFunction, Rect, Region};
use crate::stencil::{admissible_bases, is_admissible, Direction, StencilSet};

pub const DEFAULT_EPSILON: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EpsilonSign {
    /// `M_h[v](x) + ε v(x)`.
    #[default]
    Plus,
    /// `M_h[v](x) - ε v(x)`, strictly decreasing in the center value.
    Minus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorConfig {
    pub stencil: StencilSet,
    pub epsilon: f64,
    pub epsilon_sign: EpsilonSign,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            stencil: StencilSet::default(),
            epsilon: DEFAULT_EPSILON,
            epsilon_sign: EpsilonSign::Plus,
        }
    }
}

impl OperatorConfig {
    /// 17-point stencil without the properness term.
    pub fn exact() -> Self {
        OperatorConfig {
            epsilon: 0.0,
            ..Default::default()
        }
    }

    pub fn with_width(width: u32, epsilon: f64) -> Self {
        OperatorConfig {
            stencil: crate::stencil::enumerate_bases(width),
            epsilon,
            epsilon_sign: EpsilonSign::Plus,
        }
    }

    fn signed_epsilon(&self) -> f64 {
        match self.epsilon_sign {
            EpsilonSign::Plus => self.epsilon,
            EpsilonSign::Minus => -self.epsilon,
        }
    }
}

/// Closed axis-aligned box used as a test set for discrete measures.
pub type BorelBox = Rect;

/// Undivided centered second difference `v(x+a) - 2 v(x) + v(x-a)`.
pub fn second_difference(v: &MeshFunction, x: GridIndex, a: Direction) -> Result<f64> {
    let grid = v.grid();
    let out_of_grid = || Error::OutOfGrid {
        i: x.i,
        j: x.j,
        p: a.p,
        q: a.q,
    };
    let fwd = grid.offset(x, a.p, a.q).ok_or_else(out_of_grid)?;
    let bwd = grid.offset(x, -a.p, -a.q).ok_or_else(out_of_grid)?;
    Ok(v.get(fwd) + v.get(bwd) - 2.0 * v.get(x))
}

/// One basis prepared for flat-index evaluation on a particular grid.
#[derive(Clone, Copy, Debug)]
struct FlatBasis {
    reach: usize,
    first: isize,
    second: isize,
    first_scale: f64,
    second_scale: f64,
}

fn flat_bases(grid: &Grid, stencil: &StencilSet) -> Vec<FlatBasis> {
    let stride = (grid.ny() + 1) as isize;
    let h2 = grid.h() * grid.h();
    stencil
        .bases()
        .iter()
        .map(|b| FlatBasis {
            reach: b.reach() as usize,
            first: b.first.p as isize * stride + b.first.q as isize,
            second: b.second.p as isize * stride + b.second.q as isize,
            first_scale: 1.0 / (b.first.norm_sq() as f64 * h2),
            second_scale: 1.0 / (b.second.norm_sq() as f64 * h2),
        })
        .collect()
}

#[inline]
fn apply_flat(values: &[f64], grid: &Grid, bases: &[FlatBasis], i: usize, j: usize, eps: f64) -> f64 {
    let k = grid.flat(i, j);
    let center = values[k];
    let dist = i.min(j).min(grid.nx() - i).min(grid.ny() - j);
    let mut best = f64::INFINITY;
    for b in bases {
        if b.reach > dist {
            continue;
        }
        let d1 = values[(k as isize + b.first) as usize] + values[(k as isize - b.first) as usize]
            - 2.0 * center;
        let d2 = values[(k as isize + b.second) as usize]
            + values[(k as isize - b.second) as usize]
            - 2.0 * center;
        let prod = (d1 * b.first_scale).max(0.0) * (d2 * b.second_scale).max(0.0);
        best = best.min(prod);
    }
    debug_assert!(bases.iter().any(|b| b.reach <= dist), "no admissible basis at ({i}, {j})");
    best + eps * center
}

/// `M_h[v]` at the interior node `x`.
pub fn ma_apply(v: &MeshFunction, x: GridIndex, cfg: &OperatorConfig) -> f64 {
    let grid = v.grid();
    let h2 = grid.h() * grid.h();
    let bases = admissible_bases(grid, x, &cfg.stencil);
    let mut best = f64::INFINITY;
    for b in bases {
        let mut prod = 1.0;
        for a in b.directions() {
            let d = second_difference(v, x, a).expect("admissible basis stays on the grid");
            prod *= (d * (1.0 / (a.norm_sq() as f64 * h2))).max(0.0);
        }
        best = best.min(prod);
    }
    best + cfg.signed_epsilon() * v.get(x)
}

/// `M_h[v]` on every interior node; boundary entries are zero.
pub fn ma_apply_all(v: &MeshFunction, cfg: &OperatorConfig) -> MeshFunction {
    let grid = v.grid();
    let bases = flat_bases(grid, &cfg.stencil);
    let eps = cfg.signed_epsilon();
    let values = v.values();
    let ny = grid.ny();
    let mut out = MeshFunction::zeros(grid);
    out.values_mut()
        .par_chunks_mut(ny + 1)
        .enumerate()
        .filter(|(i, _)| *i > 0 && *i < grid.nx())
        .for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate().take(ny).skip(1) {
                *slot = apply_flat(values, grid, &bases, i, j, eps);
            }
        });
    out
}

/// Interior: `M_h[v] - f`. Boundary: `v - g` when `g` is given, zero otherwise.
pub fn ma_residual(
    v: &MeshFunction,
    f: &MeshFunction,
    boundary: Option<&MeshFunction>,
    cfg: &OperatorConfig,
) -> Result<MeshFunction> {
    v.check_same_grid(f)?;
    let mut r = ma_apply_all(v, cfg);
    let grid = Arc::clone(v.grid());
    let (dst, src) = (r.values_mut(), f.values());
    for k in grid.interior_rows().flatten() {
        dst[k] -= src[k];
    }
    if let Some(g) = boundary {
        v.check_same_grid(g)?;
        for n in grid.boundary() {
            let k = grid.flat(n.i, n.j);
            r.values_mut()[k] = v.values()[k] - g.values()[k];
        }
    }
    Ok(r)
}

fn convexity_tol(v: &MeshFunction) -> f64 {
    1e-12 * v.max_norm(Region::All).max(1.0)
}

/// Nonnegativity of second differences along every stencil direction that
/// fits around each interior node.
pub fn is_discrete_convex(v: &MeshFunction, stencil: &StencilSet) -> bool {
    let grid = v.grid();
    let tol = convexity_tol(v);
    grid.interior().par_iter().all(|&x| {
        stencil
            .bases()
            .iter()
            .filter(|b| is_admissible(grid, x, b))
            .flat_map(|b| b.directions())
            .all(|a| second_difference(v, x, a).map_or(true, |d| d >= -tol))
    })
}

/// Nonnegativity of `D_e v(x)` for every lattice vector `e` with `x ± e` on
/// the grid. Quadratic in the node count; meant for small grids.
pub fn is_discrete_convex_full(v: &MeshFunction) -> bool {
    let grid = v.grid();
    let tol = convexity_tol(v);
    let (nx, ny) = (grid.nx() as i32, grid.ny() as i32);
    grid.interior().par_iter().all(|&x| {
        (0..=nx).all(|p| {
            (-ny..=ny).all(|q| {
                if p == 0 && q <= 0 {
                    return true;
                }
                let (Some(fwd), Some(bwd)) = (grid.offset(x, p, q), grid.offset(x, -p, -q)) else {
                    return true;
                };
                v.get(fwd) - 2.0 * v.get(x) + v.get(bwd) >= -tol
            })
        })
    })
}

/// `h² Σ_{x ∈ Ω_h ∩ B} M_h[v](x)`, node membership by closed containment.
pub fn discrete_ma_measure(v: &MeshFunction, b: &BorelBox, cfg: &OperatorConfig) -> f64 {
    let m = ma_apply_all(v, cfg);
    crate::measures::measure_of_box(&m, b)
}

/// `Σ_{x ∈ Ω_h} h²`.
pub fn c0_bound(grid: &Grid) -> f64 {
    grid.h() * grid.h() * grid.interior().len() as f64
}

/// Random mesh function with values uniform in `[-1, 1]` on every node.
pub(crate) fn random_mesh_function(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> MeshFunction {
    let values = (0..grid.node_count())
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    MeshFunction::from_values(grid, values).expect("sampled values are finite")
}

/// Largest observed `|M_h v - M_h w|_∞ / |v - w|_∞` over `trials` seeded
/// random pairs.
pub fn lipschitz_estimate(cfg: &OperatorConfig, grid: &Arc<Grid>, trials: usize, seed: u64) -> f64 {
    assert!(trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let v = random_mesh_function(grid, &mut rng);
        let w = random_mesh_function(grid, &mut rng);
        best = best.max(lipschitz_ratio(&v, &w, cfg));
    }
    best
}

/// `|M_h v - M_h w|_∞(interior) / |v - w|_∞(all)`; zero when `v == w`.
pub fn lipschitz_ratio(v: &MeshFunction, w: &MeshFunction, cfg: &OperatorConfig) -> f64 {
    let den = v.max_norm_diff(w, Region::All).expect("same grid");
    if den == 0.0 {
        return 0.0;
    }
    let mv = ma_apply_all(v, cfg);
    let mw = ma_apply_all(w, cfg);
    mv.max_norm_diff(&mw, Region::Interior).expect("same grid") / den
}
