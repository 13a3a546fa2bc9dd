//! Finite Borel measures as Dirac atoms plus an optional density, their
//! discretization into right-hand sides `f_h`, and evaluation on boxes.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MeshFunction, Rect};
use crate::operator::BorelBox;
use crate::quadrature::integrate_box;

pub type ScalarField = fn(f64, f64) -> f64;

/// A continuous nonnegative density, referenced by its registered name.
#[derive(Clone, Copy)]
pub struct Density {
    pub name: &'static str,
    pub eval: ScalarField,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Density({})", self.name)
    }
}

impl PartialEq for Density {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "w")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MeasureSpec {
    pub atoms: Vec<Atom>,
    pub density: Option<Density>,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    atoms: Vec<Atom>,
    density: Option<String>,
}

impl MeasureSpec {
    pub fn atoms(atoms: Vec<Atom>) -> Self {
        MeasureSpec {
            atoms,
            density: None,
        }
    }

    pub fn density(density: Density) -> Self {
        MeasureSpec {
            atoms: Vec::new(),
            density: Some(density),
        }
    }

    pub fn validate(&self, domain: &Rect) -> Result<()> {
        for a in &self.atoms {
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(Error::Measure(format!("atom weight must be positive, got {}", a.weight)));
            }
            let inside = a.x > domain.x_min && a.x < domain.x_max && a.y > domain.y_min && a.y < domain.y_max;
            if !inside {
                return Err(Error::Measure(format!(
                    "atom ({}, {}) is not strictly inside the domain",
                    a.x, a.y
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MeasureJson {
            atoms: self.atoms.clone(),
            density: self.density.map(|d| d.name.to_string()),
        })
        .expect("measure serializes")
    }

    /// Parses the JSON form; density names resolve against the problem catalog.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MeasureJson = serde_json::from_str(text)?;
        let density = match raw.density {
            None => None,
            Some(name) => Some(
                crate::problems::density_by_name(&name)
                    .ok_or_else(|| Error::Measure(format!("unknown density '{name}'")))?,
            ),
        };
        Ok(MeasureSpec {
            atoms: raw.atoms,
            density,
        })
    }

    pub fn total_atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// How a Dirac atom is loaded onto the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiracSpread {
    /// All of `w / h²` on the nearest interior node.
    #[default]
    Nearest,
    /// Bilinear weights on the corners of the enclosing cell; shares that
    /// would land on boundary corners are redistributed over the interior ones.
    Bilinear,
}

fn nearest_interior(grid: &Grid, x: f64, y: f64) -> (usize, usize) {
    let d = grid.spec().domain;
    let h = grid.h();
    // Halfway ties round down, i.e. towards the smaller row-major index.
    let pick = |t: f64, n: usize| -> usize {
        let s = t / h;
        let k = if s - s.floor() > 0.5 { s.ceil() } else { s.floor() };
        (k.max(1.0) as usize).min(n - 1)
    };
    (pick(x - d.x_min, grid.nx()), pick(y - d.y_min, grid.ny()))
}

/// Discrete right-hand side: density sampled at interior nodes plus atom loads.
pub fn build_rhs(measure: &MeasureSpec, grid: &Arc<Grid>, spread: DiracSpread) -> Result<MeshFunction> {
    measure.validate(&grid.spec().domain)?;
    let mut f = MeshFunction::zeros(grid);
    let h = grid.h();
    if let Some(density) = measure.density {
        for &n in grid.interior() {
            let (x, y) = grid.position(n);
            let value = (density.eval)(x, y);
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Measure(format!(
                    "density '{}' is {value} at ({x}, {y})",
                    density.name
                )));
            }
            f.set(n, value);
        }
    }
    for atom in &measure.atoms {
        let load = atom.weight / (h * h);
        match spread {
            DiracSpread::Nearest => {
                let (i, j) = nearest_interior(grid, atom.x, atom.y);
                let (nx, ny) = grid.position(crate::grid::GridIndex::new(i, j));
                let dist = ((nx - atom.x).powi(2) + (ny - atom.y).powi(2)).sqrt();
                if dist > h * std::f64::consts::SQRT_2 * (1.0 + 1e-12) {
                    return Err(Error::Measure(format!(
                        "no interior node within h*sqrt(2) of atom ({}, {})",
                        atom.x, atom.y
                    )));
                }
                let k = grid.flat(i, j);
                f.values_mut()[k] += load;
            }
            DiracSpread::Bilinear => {
                let d = grid.spec().domain;
                let sx = ((atom.x - d.x_min) / h).clamp(0.0, grid.nx() as f64);
                let sy = ((atom.y - d.y_min) / h).clamp(0.0, grid.ny() as f64);
                let i0 = (sx.floor() as usize).min(grid.nx() - 1);
                let j0 = (sy.floor() as usize).min(grid.ny() - 1);
                let (tx, ty) = (sx - i0 as f64, sy - j0 as f64);
                let corners = [
                    (i0, j0, (1.0 - tx) * (1.0 - ty)),
                    (i0 + 1, j0, tx * (1.0 - ty)),
                    (i0, j0 + 1, (1.0 - tx) * ty),
                    (i0 + 1, j0 + 1, tx * ty),
                ];
                let interior_weight: f64 = corners
                    .iter()
                    .filter(|(i, j, _)| grid.is_interior(*i, *j))
                    .map(|c| c.2)
                    .sum();
                if interior_weight <= 0.0 {
                    return Err(Error::Measure(format!(
                        "atom ({}, {}) has no interior cell corner",
                        atom.x, atom.y
                    )));
                }
                for (i, j, wgt) in corners {
                    if grid.is_interior(i, j) {
                        let k = grid.flat(i, j);
                        f.values_mut()[k] += load * wgt / interior_weight;
                    }
                }
            }
        }
    }
    Ok(f)
}

/// `h² Σ_{x ∈ Ω_h ∩ B} f(x)` with closed containment.
pub fn measure_of_box(f: &MeshFunction, b: &BorelBox) -> f64 {
    let grid = f.grid();
    let h = grid.h();
    let sum: f64 = grid
        .interior()
        .iter()
        .filter(|n| {
            let (x, y) = grid.position(**n);
            b.contains(x, y)
        })
        .map(|n| f.get(*n))
        .sum();
    h * h * sum
}

/// `ν(B)`: atoms strictly inside `B` plus the density integral over `B`.
pub fn reference_measure(measure: &MeasureSpec, b: &BorelBox) -> Result<f64> {
    let mut total = 0.0;
    for a in &measure.atoms {
        let inside = a.x > b.x_min && a.x < b.x_max && a.y > b.y_min && a.y < b.y_max;
        if inside {
            total += a.weight;
        } else if b.contains(a.x, a.y) {
            return Err(Error::Measure(format!(
                "atom ({}, {}) lies on the box boundary; choose another box",
                a.x, a.y
            )));
        }
    }
    if let Some(density) = measure.density {
        total += integrate_box(&|x, y| (density.eval)(x, y), b.x_min, b.x_max, b.y_min, b.y_max, 1e-10);
    }
    Ok(total)
}
