//! Orthogonal bases of primitive lattice directions for the wide stencil.
//!
//! A basis `{a, a_perp}` is stored once per symmetry class: `a = (p, q)` with
//! `p > 0, q >= 0` and `a_perp = (-q, p)`. Width 1 gives the 9-point stencil,
//! width 2 the 17-point stencil.

use std::collections::BTreeSet;

use crate::grid::{Grid, GridIndex};

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction {
    pub p: i32,
    pub q: i32,
}

impl Direction {
    /// Returns `None` for the zero vector and for non-primitive vectors.
    pub fn new(p: i32, q: i32) -> Option<Direction> {
        if gcd(p.unsigned_abs(), q.unsigned_abs()) == 1 {
            Some(Direction { p, q })
        } else {
            None
        }
    }

    pub fn norm_sq(&self) -> i64 {
        let (p, q) = (self.p as i64, self.q as i64);
        p * p + q * q
    }

    pub fn dot(&self, other: &Direction) -> i64 {
        self.p as i64 * other.p as i64 + self.q as i64 * other.q as i64
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(&self) -> Direction {
        Direction {
            p: -self.q,
            q: self.p,
        }
    }

    pub fn neg(&self) -> Direction {
        Direction {
            p: -self.p,
            q: -self.q,
        }
    }

    pub fn max_component(&self) -> u32 {
        self.p.unsigned_abs().max(self.q.unsigned_abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrthogonalBasis {
    pub first: Direction,
    pub second: Direction,
}

impl OrthogonalBasis {
    pub fn directions(&self) -> [Direction; 2] {
        [self.first, self.second]
    }

    /// Largest component over both directions; the basis fits around a node
    /// whose distance to the boundary, in lattice units, is at least this.
    pub fn reach(&self) -> u32 {
        self.first.max_component().max(self.second.max_component())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StencilSet {
    width: u32,
    bases: Vec<OrthogonalBasis>,
    offsets: Vec<Direction>,
}

impl StencilSet {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bases(&self) -> &[OrthogonalBasis] {
        &self.bases
    }

    /// Deduplicated `±a` over all bases, center excluded.
    pub fn offsets(&self) -> &[Direction] {
        &self.offsets
    }

    /// Number of stencil points including the center.
    pub fn point_count(&self) -> usize {
        self.offsets.len() + 1
    }
}

impl Default for StencilSet {
    fn default() -> Self {
        enumerate_bases(2)
    }
}

/// All canonical orthogonal bases with components bounded by `width`.
///
/// Ordered by reach, then by the second component of the first direction, so
/// the axis basis always comes first.
pub fn enumerate_bases(width: u32) -> StencilSet {
    assert!(width >= 1, "stencil width must be at least 1");
    let w = width as i32;
    let mut firsts: Vec<Direction> = (1..=w)
        .flat_map(|p| (0..=w).filter_map(move |q| Direction::new(p, q)))
        .collect();
    firsts.sort_by_key(|d| (d.max_component(), d.q));

    let bases: Vec<OrthogonalBasis> = firsts
        .into_iter()
        .map(|first| OrthogonalBasis {
            first,
            second: first.perp(),
        })
        .collect();

    let offsets: BTreeSet<Direction> = bases
        .iter()
        .flat_map(|b| b.directions())
        .flat_map(|d| [d, d.neg()])
        .collect();

    StencilSet {
        width,
        bases,
        offsets: offsets.into_iter().collect(),
    }
}

/// Whether both `x ± a` and `x ± a_perp` are grid nodes.
#[inline]
pub fn is_admissible(grid: &Grid, x: GridIndex, basis: &OrthogonalBasis) -> bool {
    let r = basis.reach() as usize;
    x.i >= r && x.j >= r && x.i + r <= grid.nx() && x.j + r <= grid.ny()
}

/// Bases of `stencil` usable at the interior node `x`.
///
/// Neighbors may be boundary nodes; their values come from the Dirichlet data.
pub fn admissible_bases<'a>(
    grid: &Grid,
    x: GridIndex,
    stencil: &'a StencilSet,
) -> Vec<&'a OrthogonalBasis> {
    debug_assert!(grid.is_interior(x.i, x.j));
    let out: Vec<_> = stencil
        .bases
        .iter()
        .filter(|b| is_admissible(grid, x, b))
        .collect();
    assert!(
        !out.is_empty(),
        "axis basis must be admissible at interior node {x:?}"
    );
    out
}
