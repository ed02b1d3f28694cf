//! Scalar and vector potentials of a problem instance: named analytic
//! families, sampled lattices read from files, and arbitrary closures.
//!
//! Magnetic presets are described by their field `B` and carry a gauge in
//! which the curl is known in closed form. Polynomial fields use the radial
//! (Poincaré) gauge about `center`: for `B = b0 + g·r + rᵀKr`,
//! `A = (b0/2 + g·r/3 + rᵀKr/4) · (-r2, r1)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn origin() -> [f64; 2] {
    [0.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarPreset {
    Constant {
        value: f64,
    },
    /// `value + gradient · (x - center)`.
    Linear {
        value: f64,
        gradient: [f64; 2],
        #[serde(default = "origin")]
        center: [f64; 2],
    },
    /// `value + curvature |x - center|²`.
    QuadraticRadial {
        value: f64,
        curvature: f64,
        #[serde(default = "origin")]
        center: [f64; 2],
    },
    /// `value + k1 (x1 - c1)² + k2 (x2 - c2)²`.
    Harmonic {
        value: f64,
        stiffness: [f64; 2],
        #[serde(default = "origin")]
        center: [f64; 2],
    },
    /// CSV lattice with columns `x,y,v`.
    Sampled {
        path: String,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    #[default]
    Symmetric,
    Landau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldPreset {
    /// Uniform field `field`.
    Constant {
        field: f64,
        #[serde(default = "origin")]
        center: [f64; 2],
        #[serde(default)]
        gauge: Gauge,
    },
    /// `B = field + gradient · (x - center)`.
    Linear {
        field: f64,
        gradient: [f64; 2],
        #[serde(default = "origin")]
        center: [f64; 2],
    },
    /// `B = field + curvature |x - center|²`.
    QuadraticRadial {
        field: f64,
        curvature: f64,
        #[serde(default = "origin")]
        center: [f64; 2],
    },
    /// `B = field + k1 (x1 - c1)² + k2 (x2 - c2)²`.
    Harmonic {
        field: f64,
        stiffness: [f64; 2],
        #[serde(default = "origin")]
        center: [f64; 2],
    },
    /// CSV lattice with columns `x,y,a1,a2`.
    Sampled {
        path: String,
    },
}

/// Values of one or more components on a regular lattice, interpolated
/// bilinearly inside the lattice rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledLattice {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub n: [usize; 2],
    /// `components[c][j * n[0] + i]`.
    pub components: Vec<Vec<f64>>,
}

impl SampledLattice {
    pub fn lower(&self) -> [f64; 2] {
        self.origin
    }

    pub fn upper(&self) -> [f64; 2] {
        [
            self.origin[0] + self.spacing[0] * (self.n[0] - 1) as f64,
            self.origin[1] + self.spacing[1] * (self.n[1] - 1) as f64,
        ]
    }

    pub fn covers(&self, lo: [f64; 2], hi: [f64; 2]) -> bool {
        let (a, b) = (self.lower(), self.upper());
        let tol = 1e-9 * (self.spacing[0] + self.spacing[1]);
        lo[0] >= a[0] - tol && lo[1] >= a[1] - tol && hi[0] <= b[0] + tol && hi[1] <= b[1] + tol
    }

    /// Bilinear interpolation of component `c`; `None` outside the lattice.
    pub fn eval(&self, c: usize, x: [f64; 2]) -> Option<f64> {
        let mut idx = [0usize; 2];
        let mut frac = [0.0; 2];
        for d in 0..2 {
            let s = (x[d] - self.origin[d]) / self.spacing[d];
            let last = (self.n[d] - 1) as f64;
            if !(s >= -1e-9 && s <= last + 1e-9) {
                return None;
            }
            let s = s.clamp(0.0, last);
            let i = (s.floor() as usize).min(self.n[d] - 2);
            idx[d] = i;
            frac[d] = s - i as f64;
        }
        let v = &self.components[c];
        let at = |i: usize, j: usize| v[j * self.n[0] + i];
        let [i, j] = idx;
        let [fx, fy] = frac;
        Some(
            at(i, j) * (1.0 - fx) * (1.0 - fy)
                + at(i + 1, j) * fx * (1.0 - fy)
                + at(i, j + 1) * (1.0 - fx) * fy
                + at(i + 1, j + 1) * fx * fy,
        )
    }
}

/// Parse a sampled lattice from CSV text.
///
/// The first non-comment line is a header whose first two columns are `x`
/// and `y`; each further line holds the coordinates followed by
/// `components` values. Rows may come in any order but must cover a full
/// regular lattice with at least two points per axis exactly once.
pub fn parse_sampled(text: &str, components: usize) -> Result<SampledLattice> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("sampled field: empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != 2 + components || cols[0] != "x" || cols[1] != "y" {
        return Err(Error::Parse(format!(
            "sampled field: header must be x,y followed by {components} value column(s), got '{header}'"
        )));
    }
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (ln, line) in lines {
        let vals: Vec<&str> = line.split(',').map(str::trim).collect();
        if vals.len() != 2 + components {
            return Err(Error::Parse(format!("sampled field line {}: expected {} columns", ln + 1, 2 + components)));
        }
        let mut row = [0.0; 4];
        for (slot, s) in row.iter_mut().zip(&vals) {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse(format!("sampled field line {}: bad number '{s}'", ln + 1)))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("sampled field line {}: non-finite value", ln + 1)));
            }
            *slot = v;
        }
        rows.push(row);
    }
    let axis = |d: usize| -> Result<(f64, f64, usize)> {
        let mut xs: Vec<f64> = rows.iter().map(|r| r[d]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        xs.dedup();
        if xs.len() < 2 {
            return Err(Error::Parse("sampled field: need at least 2 points per axis".into()));
        }
        let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Parse("sampled field: degenerate lattice".into()));
        }
        for (k, x) in xs.iter().enumerate() {
            if (x - (xs[0] + step * k as f64)).abs() > 1e-6 * step {
                return Err(Error::Parse("sampled field: coordinates are not uniformly spaced".into()));
            }
        }
        Ok((xs[0], step, xs.len()))
    };
    let (x0, hx, nx) = axis(0)?;
    let (y0, hy, ny) = axis(1)?;
    if nx.checked_mul(ny) != Some(rows.len()) {
        return Err(Error::Parse(format!(
            "sampled field: {} rows do not form a full {nx}x{ny} lattice",
            rows.len()
        )));
    }
    let mut comps = vec![vec![f64::NAN; nx * ny]; components];
    let mut seen = vec![false; nx * ny];
    for r in &rows {
        let i = ((r[0] - x0) / hx).round() as usize;
        let j = ((r[1] - y0) / hy).round() as usize;
        let k = j * nx + i;
        if seen[k] {
            return Err(Error::Parse(format!("sampled field: duplicate point ({}, {})", r[0], r[1])));
        }
        seen[k] = true;
        for (c, comp) in comps.iter_mut().enumerate() {
            comp[k] = r[2 + c];
        }
    }
    Ok(SampledLattice {
        origin: [x0, y0],
        spacing: [hx, hy],
        n: [nx, ny],
        components: comps,
    })
}

fn load_sampled(path: &str, base: &Path, components: usize) -> Result<SampledLattice> {
    let full = base.join(path);
    let text = std::fs::read_to_string(&full)
        .map_err(|e| Error::Parse(format!("cannot read sampled field {}: {e}", full.display())))?;
    parse_sampled(&text, components)
}

type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Runtime scalar potential `V`.
#[derive(Clone)]
pub enum ScalarPotential {
    Analytic(ScalarPreset),
    Sampled(Arc<SampledLattice>),
    Function(ScalarFn),
}

impl fmt::Debug for ScalarPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Analytic(p) => write!(f, "Analytic({p:?})"),
            Self::Sampled(s) => write!(f, "Sampled({:?} points)", s.n),
            Self::Function(_) => write!(f, "Function"),
        }
    }
}

impl ScalarPotential {
    pub fn constant(value: f64) -> Self {
        Self::Analytic(ScalarPreset::Constant { value })
    }

    pub fn from_fn(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    /// Resolve a preset; sampled paths are relative to `base`.
    pub fn from_preset(preset: &ScalarPreset, base: &Path) -> Result<Self> {
        match preset {
            ScalarPreset::Sampled { path } => Ok(Self::Sampled(Arc::new(load_sampled(path, base, 1)?))),
            p => {
                let ok = match p {
                    ScalarPreset::Constant { value } => value.is_finite(),
                    ScalarPreset::Linear { value, gradient, center } => {
                        finite(&[*value, gradient[0], gradient[1], center[0], center[1]])
                    }
                    ScalarPreset::QuadraticRadial { value, curvature, center } => {
                        finite(&[*value, *curvature, center[0], center[1]])
                    }
                    ScalarPreset::Harmonic { value, stiffness, center } => {
                        finite(&[*value, stiffness[0], stiffness[1], center[0], center[1]])
                    }
                    ScalarPreset::Sampled { .. } => unreachable!(),
                };
                if !ok {
                    return Err(Error::InvalidParameter("potential parameters must be finite".into()));
                }
                Ok(Self::Analytic(p.clone()))
            }
        }
    }

    /// `V(x)`; NaN outside a sampled lattice.
    pub fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            Self::Analytic(p) => match *p {
                ScalarPreset::Constant { value } => value,
                ScalarPreset::Linear { value, gradient, center } => {
                    value + gradient[0] * (x[0] - center[0]) + gradient[1] * (x[1] - center[1])
                }
                ScalarPreset::QuadraticRadial { value, curvature, center } => {
                    value + curvature * ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2))
                }
                ScalarPreset::Harmonic { value, stiffness, center } => {
                    value + stiffness[0] * (x[0] - center[0]).powi(2) + stiffness[1] * (x[1] - center[1]).powi(2)
                }
                ScalarPreset::Sampled { .. } => f64::NAN,
            },
            Self::Sampled(s) => s.eval(0, x).unwrap_or(f64::NAN),
            Self::Function(f) => f(x),
        }
    }

    /// Gradient, exact for analytic presets and by central differences with
    /// step `h` otherwise.
    pub fn gradient(&self, x: [f64; 2], h: f64) -> [f64; 2] {
        if let Self::Analytic(p) = self {
            match *p {
                ScalarPreset::Constant { .. } => return [0.0, 0.0],
                ScalarPreset::Linear { gradient, .. } => return gradient,
                ScalarPreset::QuadraticRadial { curvature, center, .. } => {
                    return [2.0 * curvature * (x[0] - center[0]), 2.0 * curvature * (x[1] - center[1])]
                }
                ScalarPreset::Harmonic { stiffness, center, .. } => {
                    return [2.0 * stiffness[0] * (x[0] - center[0]), 2.0 * stiffness[1] * (x[1] - center[1])]
                }
                ScalarPreset::Sampled { .. } => {}
            }
        }
        [
            (self.value([x[0] + h, x[1]]) - self.value([x[0] - h, x[1]])) / (2.0 * h),
            (self.value([x[0], x[1] + h]) - self.value([x[0], x[1] - h])) / (2.0 * h),
        ]
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runtime vector potential `A`.
#[derive(Clone)]
pub enum VectorPotential {
    Analytic(FieldPreset),
    Sampled(Arc<SampledLattice>),
    Function(VectorFn),
}

impl fmt::Debug for VectorPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Analytic(p) => write!(f, "Analytic({p:?})"),
            Self::Sampled(s) => write!(f, "Sampled({:?} points)", s.n),
            Self::Function(_) => write!(f, "Function"),
        }
    }
}

impl VectorPotential {
    pub fn zero() -> Self {
        Self::constant_field(0.0, [0.0, 0.0])
    }

    /// Uniform field in the symmetric gauge about `center`.
    pub fn constant_field(field: f64, center: [f64; 2]) -> Self {
        Self::Analytic(FieldPreset::Constant {
            field,
            center,
            gauge: Gauge::Symmetric,
        })
    }

    pub fn from_fn(f: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn from_preset(preset: &FieldPreset, base: &Path) -> Result<Self> {
        let ok = match preset {
            FieldPreset::Sampled { path } => return Ok(Self::Sampled(Arc::new(load_sampled(path, base, 2)?))),
            FieldPreset::Constant { field, center, .. } => finite(&[*field, center[0], center[1]]),
            FieldPreset::Linear { field, gradient, center } => {
                finite(&[*field, gradient[0], gradient[1], center[0], center[1]])
            }
            FieldPreset::QuadraticRadial { field, curvature, center } => {
                finite(&[*field, *curvature, center[0], center[1]])
            }
            FieldPreset::Harmonic { field, stiffness, center } => {
                finite(&[*field, stiffness[0], stiffness[1], center[0], center[1]])
            }
        };
        if !ok {
            return Err(Error::InvalidParameter("field parameters must be finite".into()));
        }
        Ok(Self::Analytic(preset.clone()))
    }

    /// `A(x)`; NaN outside a sampled lattice.
    pub fn value(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Self::Analytic(p) => {
                let radial = |c: [f64; 2], phi: &dyn Fn([f64; 2]) -> f64| {
                    let r = [x[0] - c[0], x[1] - c[1]];
                    let f = phi(r);
                    [-f * r[1], f * r[0]]
                };
                match *p {
                    FieldPreset::Constant { field, center, gauge } => match gauge {
                        Gauge::Symmetric => radial(center, &|_| 0.5 * field),
                        Gauge::Landau => [-field * (x[1] - center[1]), 0.0],
                    },
                    FieldPreset::Linear { field, gradient, center } => radial(center, &|r| {
                        0.5 * field + (gradient[0] * r[0] + gradient[1] * r[1]) / 3.0
                    }),
                    FieldPreset::QuadraticRadial { field, curvature, center } => {
                        radial(center, &|r| 0.5 * field + 0.25 * curvature * (r[0] * r[0] + r[1] * r[1]))
                    }
                    FieldPreset::Harmonic { field, stiffness, center } => radial(center, &|r| {
                        0.5 * field + 0.25 * (stiffness[0] * r[0] * r[0] + stiffness[1] * r[1] * r[1])
                    }),
                    FieldPreset::Sampled { .. } => [f64::NAN, f64::NAN],
                }
            }
            Self::Sampled(s) => match (s.eval(0, x), s.eval(1, x)) {
                (Some(a), Some(b)) => [a, b],
                _ => [f64::NAN, f64::NAN],
            },
            Self::Function(f) => f(x),
        }
    }

    /// Closed-form `B = ∂₁A₂ - ∂₂A₁` when known.
    pub fn exact_field(&self, x: [f64; 2]) -> Option<f64> {
        match self {
            Self::Analytic(p) => match *p {
                FieldPreset::Constant { field, .. } => Some(field),
                FieldPreset::Linear { field, gradient, center } => {
                    Some(field + gradient[0] * (x[0] - center[0]) + gradient[1] * (x[1] - center[1]))
                }
                FieldPreset::QuadraticRadial { field, curvature, center } => {
                    Some(field + curvature * ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)))
                }
                FieldPreset::Harmonic { field, stiffness, center } => Some(
                    field + stiffness[0] * (x[0] - center[0]).powi(2) + stiffness[1] * (x[1] - center[1]).powi(2),
                ),
                FieldPreset::Sampled { .. } => None,
            },
            _ => None,
        }
    }

    /// Gradient of the field, exact for analytic presets.
    pub fn exact_field_gradient(&self, x: [f64; 2]) -> Option<[f64; 2]> {
        match self {
            Self::Analytic(p) => match *p {
                FieldPreset::Constant { .. } => Some([0.0, 0.0]),
                FieldPreset::Linear { gradient, .. } => Some(gradient),
                FieldPreset::QuadraticRadial { curvature, center, .. } => Some([
                    2.0 * curvature * (x[0] - center[0]),
                    2.0 * curvature * (x[1] - center[1]),
                ]),
                FieldPreset::Harmonic { stiffness, center, .. } => Some([
                    2.0 * stiffness[0] * (x[0] - center[0]),
                    2.0 * stiffness[1] * (x[1] - center[1]),
                ]),
                FieldPreset::Sampled { .. } => None,
            },
            _ => None,
        }
    }

    /// Jacobian `J[k][l] = ∂_l A_k` by central differences with step `h`.
    pub fn jacobian(&self, x: [f64; 2], h: f64) -> [[f64; 2]; 2] {
        let xp = self.value([x[0] + h, x[1]]);
        let xm = self.value([x[0] - h, x[1]]);
        let yp = self.value([x[0], x[1] + h]);
        let ym = self.value([x[0], x[1] - h]);
        let d = 2.0 * h;
        [
            [(xp[0] - xm[0]) / d, (yp[0] - ym[0]) / d],
            [(xp[1] - xm[1]) / d, (yp[1] - ym[1]) / d],
        ]
    }
}
