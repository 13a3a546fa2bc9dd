//! Lattice geometry on an axis-aligned rectangle.
//!
//! Nodes are `(x_min + i h, y_min + j h)` for `0 <= i <= nx`, `0 <= j <= ny`.
//! Storage and every enumeration use row-major order in `(i, j)`: the flat
//! index of a node is `i * (ny + 1) + j`.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative slack accepted when checking that `h` divides a side length.
const DIVISIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const UNIT_SQUARE: Rect = Rect {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    };

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub domain: Rect,
    pub h: f64,
}

impl GridSpec {
    pub fn new(domain: Rect, h: f64) -> Self {
        GridSpec { domain, h }
    }

    pub fn unit_square(h: f64) -> Self {
        GridSpec::new(Rect::UNIT_SQUARE, h)
    }

    /// Number of divisions along one side, or an error if `h` does not divide it.
    fn divisions(side: f64, h: f64) -> Result<usize> {
        if !h.is_finite() || h <= 0.0 {
            return Err(Error::Config(format!("h must be positive, got {h}")));
        }
        if side.is_nan() || side <= 0.0 {
            return Err(Error::Config(format!("domain side must be positive, got {side}")));
        }
        let ratio = side / h;
        let n = ratio.round();
        if n < 2.0 || (ratio - n).abs() > DIVISIBILITY_TOL * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "h must divide domain side (side {side}, h {h}, ratio {ratio})"
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub i: usize,
    pub j: usize,
}

impl GridIndex {
    pub fn new(i: usize, j: usize) -> Self {
        GridIndex { i, j }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
    All,
}

#[derive(Debug, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    nx: usize,
    ny: usize,
    interior: Vec<GridIndex>,
    boundary: Vec<GridIndex>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        let nx = GridSpec::divisions(spec.domain.width(), spec.h)?;
        let ny = GridSpec::divisions(spec.domain.height(), spec.h)?;
        let mut interior = Vec::with_capacity((nx - 1) * (ny - 1));
        let mut boundary = Vec::with_capacity(2 * (nx + ny));
        for i in 0..=nx {
            for j in 0..=ny {
                let idx = GridIndex::new(i, j);
                if i == 0 || j == 0 || i == nx || j == ny {
                    boundary.push(idx);
                } else {
                    interior.push(idx);
                }
            }
        }
        Ok(Arc::new(Grid {
            spec,
            nx,
            ny,
            interior,
            boundary,
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn interior(&self) -> &[GridIndex] {
        &self.interior
    }

    /// Flat index ranges of the interior, one per interior row `i`.
    pub fn interior_rows(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let stride = self.ny + 1;
        (1..self.nx).map(move |i| i * stride + 1..i * stride + self.ny)
    }

    pub fn boundary(&self) -> &[GridIndex] {
        &self.boundary
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    #[inline]
    pub fn unflat(&self, k: usize) -> GridIndex {
        GridIndex::new(k / (self.ny + 1), k % (self.ny + 1))
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i < self.nx && j < self.ny
    }

    pub fn in_region(&self, idx: GridIndex, region: Region) -> bool {
        match region {
            Region::All => true,
            Region::Interior => self.is_interior(idx.i, idx.j),
            Region::Boundary => !self.is_interior(idx.i, idx.j),
        }
    }

    /// Shifts `idx` by the lattice offset `(p, q)` if the result is a node.
    #[inline]
    pub fn offset(&self, idx: GridIndex, p: i32, q: i32) -> Option<GridIndex> {
        let i = idx.i as i64 + p as i64;
        let j = idx.j as i64 + q as i64;
        if i < 0 || j < 0 || i > self.nx as i64 || j > self.ny as i64 {
            None
        } else {
            Some(GridIndex::new(i as usize, j as usize))
        }
    }

    pub fn position(&self, idx: GridIndex) -> (f64, f64) {
        let d = &self.spec.domain;
        // The far edge is pinned to the domain side so that boundary data is
        // sampled exactly on the perimeter.
        let x = if idx.i == self.nx {
            d.x_max
        } else {
            d.x_min + idx.i as f64 * self.spec.h
        };
        let y = if idx.j == self.ny {
            d.y_max
        } else {
            d.y_min + idx.j as f64 * self.spec.h
        };
        (x, y)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.nx == other.nx && self.ny == other.ny && self.spec == other.spec)
    }
}

/// Real values on every node of a grid, boundary included.
#[derive(Clone, Debug)]
pub struct MeshFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl MeshFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        MeshFunction::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        MeshFunction {
            grid: Arc::clone(grid),
            values: vec![c; grid.node_count()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Config(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite value at node {:?}",
                grid.unflat(k)
            )));
        }
        Ok(MeshFunction {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: GridIndex) -> f64 {
        self.values[self.grid.flat(idx.i, idx.j)]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.flat(i, j)]
    }

    #[inline]
    pub fn set(&mut self, idx: GridIndex, value: f64) {
        let k = self.grid.flat(idx.i, idx.j);
        self.values[k] = value;
    }

    pub fn check_same_grid(&self, other: &MeshFunction) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn max_norm(&self, region: Region) -> f64 {
        self.region_max(region, |k| self.values[k].abs())
    }

    pub fn max_norm_diff(&self, other: &MeshFunction, region: Region) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.region_max(region, |k| (self.values[k] - other.values[k]).abs()))
    }

    fn region_max(&self, region: Region, f: impl Fn(usize) -> f64) -> f64 {
        let g = &self.grid;
        let mut acc: f64 = 0.0;
        let mut take = |k: usize| {
            let v = f(k);
            // NaN wins so that non-finite data cannot hide behind the max.
            if v > acc || v.is_nan() && !acc.is_nan() {
                acc = v;
            }
        };
        match region {
            Region::Interior => g.interior_rows().flatten().for_each(&mut take),
            Region::All => (0..g.node_count()).for_each(&mut take),
            Region::Boundary => g.boundary.iter().for_each(|n| take(g.flat(n.i, n.j))),
        }
        acc
    }

    /// `self + alpha * other` nodewise.
    pub fn axpy(&self, alpha: f64, other: &MeshFunction) -> Result<MeshFunction> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(MeshFunction {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    pub fn scaled(&self, alpha: f64) -> MeshFunction {
        MeshFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Copies the boundary entries of `src` into `self`.
    pub fn copy_boundary_from(&mut self, src: &MeshFunction) -> Result<()> {
        self.check_same_grid(src)?;
        for n in self.grid.boundary.iter() {
            let k = self.grid.flat(n.i, n.j);
            self.values[k] = src.values[k];
        }
        Ok(())
    }

    pub fn zero_boundary(&mut self) {
        let grid = Arc::clone(&self.grid);
        for n in grid.boundary.iter() {
            self.values[grid.flat(n.i, n.j)] = 0.0;
        }
    }

    /// Writes `i,j,x,y,value` rows in row-major order with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::from("i,j,x,y,value\n");
        for k in 0..self.grid.node_count() {
            let idx = self.grid.unflat(k);
            let (x, y) = self.grid.position(idx);
            writeln!(
                buf,
                "{},{},{:.16e},{:.16e},{:.16e}",
                idx.i, idx.j, x, y, self.values[k]
            )
            .expect("writing to a String cannot fail");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Reads the layout produced by [`MeshFunction::write_csv`]; every node
    /// must appear exactly once. Coordinates are ignored.
    pub fn read_csv(grid: &Arc<Grid>, text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Config(format!("mesh csv line {line}: {what}"));
        let mut values = vec![f64::NAN; grid.node_count()];
        let mut seen = vec![false; grid.node_count()];
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(bad(n + 1, "expected 5 fields"));
            }
            let i: usize = fields[0].parse().map_err(|_| bad(n + 1, "bad i"))?;
            let j: usize = fields[1].parse().map_err(|_| bad(n + 1, "bad j"))?;
            let value: f64 = fields[4].parse().map_err(|_| bad(n + 1, "bad value"))?;
            if i > grid.nx() || j > grid.ny() {
                return Err(bad(n + 1, "node outside the grid"));
            }
            let k = grid.flat(i, j);
            if std::mem::replace(&mut seen[k], true) {
                return Err(bad(n + 1, "duplicate node"));
            }
            values[k] = value;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("mesh csv does not cover every node".into()));
        }
        MeshFunction::from_values(grid, values)
    }
}

/// Samples `f` at every node: the restriction `r_h(f)`.
pub fn restrict(f: impl Fn(f64, f64) -> f64, grid: &Arc<Grid>) -> MeshFunction {
    let values = (0..grid.node_count())
        .map(|k| {
            let (x, y) = grid.position(grid.unflat(k));
            f(x, y)
        })
        .collect();
    MeshFunction {
        grid: Arc::clone(grid),
        values,
    }
}
