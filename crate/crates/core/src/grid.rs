//! Uniform Dirichlet grids and the fields sampled on them.
//!
//! Only interior nodes carry values; the boundary ring is implicit and
//! always zero. Storage is row-major with the x index running fastest.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub n: [usize; 2],
}

impl Grid2D {
    pub fn new(origin: [f64; 2], extent: [f64; 2], n: [usize; 2]) -> Result<Self> {
        if n[0] < 4 || n[1] < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 interior points per axis, got {}x{}",
                n[0], n[1]
            )));
        }
        if !(extent[0] > 0.0 && extent[1] > 0.0 && extent[0].is_finite() && extent[1].is_finite()) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {extent:?}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { origin, extent, n })
    }

    /// Square box `[-half, half]^2` centered at `center` with `n` interior points per axis.
    pub fn centered_box(center: [f64; 2], half: f64, n: usize) -> Result<Self> {
        Self::new(
            [center[0] - half, center[1] - half],
            [2.0 * half, 2.0 * half],
            [n, n],
        )
    }

    pub fn h(&self) -> [f64; 2] {
        [
            self.extent[0] / (self.n[0] + 1) as f64,
            self.extent[1] / (self.n[1] + 1) as f64,
        ]
    }

    /// Quadrature weight of one node.
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h[0] * h[1]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [
            self.origin[0] + (i + 1) as f64 * h[0],
            self.origin[1] + (j + 1) as f64 * h[1],
        ]
    }

    pub fn center(&self) -> [f64; 2] {
        [
            self.origin[0] + 0.5 * self.extent[0],
            self.origin[1] + 0.5 * self.extent[1],
        ]
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0] >= self.origin[0]
            && x[0] <= self.origin[0] + self.extent[0]
            && x[1] >= self.origin[1]
            && x[1] <= self.origin[1] + self.extent[1]
    }

    /// Iterator over `(flat index, i, j, coordinate)`.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, usize, [f64; 2])> + '_ {
        (0..self.n[1]).flat_map(move |j| {
            (0..self.n[0]).map(move |i| (self.index(i, j), i, j, self.node(i, j)))
        })
    }

    pub fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Bilinear interpolation of nodal data at an arbitrary point, using the
    /// zero boundary ring; points outside the closed rectangle give zero.
    pub fn interpolate<T>(&self, values: &[T], x: [f64; 2]) -> T
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let h = self.h();
        // Position in "padded" index space where 0 and n+1 are the boundary.
        let sx = (x[0] - self.origin[0]) / h[0];
        let sy = (x[1] - self.origin[1]) / h[1];
        let nx = self.n[0] as f64 + 1.0;
        let ny = self.n[1] as f64 + 1.0;
        if !(sx >= 0.0 && sy >= 0.0 && sx <= nx && sy <= ny) {
            return T::default();
        }
        let i0 = (sx.floor() as usize).min(self.n[0]);
        let j0 = (sy.floor() as usize).min(self.n[1]);
        let fx = sx - i0 as f64;
        let fy = sy - j0 as f64;
        let at = |pi: usize, pj: usize| -> T {
            if pi == 0 || pj == 0 || pi > self.n[0] || pj > self.n[1] {
                T::default()
            } else {
                values[self.index(pi - 1, pj - 1)]
            }
        };
        at(i0, j0) * ((1.0 - fx) * (1.0 - fy))
            + at(i0 + 1, j0) * (fx * (1.0 - fy))
            + at(i0, j0 + 1) * ((1.0 - fx) * fy)
            + at(i0 + 1, j0 + 1) * (fx * fy)
    }
}

fn check_values<T>(grid: &Grid2D, len: usize, finite: impl Fn(&T) -> bool, values: &[T]) -> Result<()> {
    if len != grid.len() {
        return Err(Error::GridMismatch(format!(
            "expected {} values for a {}x{} grid, got {len}",
            grid.len(),
            grid.n[0],
            grid.n[1]
        )));
    }
    if !values.iter().all(finite) {
        return Err(Error::Domain("field contains non-finite values".into()));
    }
    Ok(())
}

/// Complex wave function sampled at interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: Grid2D,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid2D, values: Vec<Complex64>) -> Result<Self> {
        check_values(&grid, values.len(), |z: &Complex64| z.is_finite(), &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = grid.nodes().map(|(_, _, _, x)| f(x)).collect();
        Self { grid, values }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn modulus(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Discrete L2 norm with node quadrature.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_area() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Index of the largest modulus; ties resolve to the lowest index.
    pub fn argmax_modulus(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (k, z) in self.values.iter().enumerate() {
            let m = z.norm();
            if m > best_val {
                best = k;
                best_val = m;
            }
        }
        best
    }

    pub fn sample(&self, x: [f64; 2]) -> Complex64 {
        self.grid.interpolate(&self.values, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        check_values(&grid, values.len(), |v: &f64| v.is_finite(), &values)?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = grid.nodes().map(|(_, _, _, x)| f(x)).collect();
        Self { grid, values }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Components of the magnetic 1-form sampled at interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorPotentialField {
    pub grid: Grid2D,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl VectorPotentialField {
    pub fn new(grid: Grid2D, a1: Vec<f64>, a2: Vec<f64>) -> Result<Self> {
        check_values(&grid, a1.len(), |v: &f64| v.is_finite(), &a1)?;
        check_values(&grid, a2.len(), |v: &f64| v.is_finite(), &a2)?;
        Ok(Self { grid, a1, a2 })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            a1: vec![0.0; grid.len()],
            a2: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let (a1, a2) = grid.nodes().map(|(_, _, _, x)| f(x)).map(|a| (a[0], a[1])).unzip();
        Self { grid, a1, a2 }
    }

    /// Central-difference curl `d1 a2 - d2 a1` at interior nodes whose
    /// stencil stays inside the sampled region; `None` on the outer ring.
    pub fn discrete_curl(&self, i: usize, j: usize) -> Option<f64> {
        let g = &self.grid;
        if i == 0 || j == 0 || i + 1 >= g.n[0] || j + 1 >= g.n[1] {
            return None;
        }
        let h = g.h();
        let d1a2 = (self.a2[g.index(i + 1, j)] - self.a2[g.index(i - 1, j)]) / (2.0 * h[0]);
        let d2a1 = (self.a1[g.index(i, j + 1)] - self.a1[g.index(i, j - 1)]) / (2.0 * h[1]);
        Some(d1a2 - d2a1)
    }
}
