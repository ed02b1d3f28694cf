//! Constant-coefficient limiting problem `-Δ_A v + V v = |v|^{p-2} v` on a
//! truncated box.
//!
//! The groundstate energy is obtained from the minimum of the magnetic
//! Sobolev quotient
//!
//! ```text
//! S(v) = (∫ |D_A v|² + V |v|²) / (∫ |v|^p)^{2/p},   E = (1/2 - 1/p) · min S^{p/(p-2)}
//! ```
//!
//! by normalized descent: the gradient is preconditioned with the inverse of
//! the linear part, conjugated against the previous direction (Polak-Ribière,
//! clipped at zero), and each step renormalizes `‖v‖_p = 1`. A step is
//! accepted only if it does not increase `S`.
//!
//! Plain steepest descent stalls when the field is strong: the profile then
//! sits near the lowest Landau level, where many directions are almost flat.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{covariant_gradient, lp_norm_p, MagneticOperator};
use crate::grid::{ComplexField, Grid2D, RealField, VectorPotentialField};
use crate::solver::{pcg, GaugePreconditioner};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Data of the limiting problem: `V* > 0`, constant field `B* = dA*`, exponent `p > 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitingSpec {
    pub v_star: f64,
    pub b_star: f64,
    pub p: f64,
}

impl LimitingSpec {
    pub fn new(v_star: f64, b_star: f64, p: f64) -> Result<Self> {
        if !(v_star > 0.0 && v_star.is_finite()) {
            return Err(Error::InvalidParameter(format!("V* must be positive, got {v_star}")));
        }
        if !b_star.is_finite() {
            return Err(Error::InvalidParameter(format!("B* must be finite, got {b_star}")));
        }
        check_exponent(p)?;
        Ok(Self { v_star, b_star, p })
    }

    /// Half-width of the truncation box, `max(12, 8 / sqrt(V*))`.
    pub fn box_half_width(&self) -> f64 {
        (8.0 / self.v_star.sqrt()).max(12.0)
    }

    /// Square box centred at the origin with `n` interior nodes per axis.
    pub fn default_grid(&self, n: usize) -> Result<Grid2D> {
        Grid2D::centered_box([0.0, 0.0], self.box_half_width(), n)
    }

    /// `E = (1/2 - 1/p) s^{p/(p-2)}`.
    pub fn energy_from_quotient(&self, s: f64) -> f64 {
        (0.5 - 1.0 / self.p) * s.powf(self.p / (self.p - 2.0))
    }
}

pub fn check_exponent(p: f64) -> Result<()> {
    if p > 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("exponent must satisfy p > 2, got {p}")))
    }
}

/// Iteration controls shared by the limiting and penalized solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop once the relative gradient residual falls below this value.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    /// Bounds on the first trial step of each line search.
    pub step_min: f64,
    pub step_max: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            restarts: 4,
            step_min: 0.1,
            step_max: 1e4,
            cg_max_iter: 2_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if self.max_iter == 0 || self.restarts == 0 || self.cg_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration counts must be positive".into()));
        }
        if !(self.step_min > 0.0 && self.step_min <= self.step_max) {
            return Err(Error::InvalidParameter("need 0 < step_min <= step_max".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct QuotientResult {
    pub s_min: f64,
    pub energy: f64,
    /// Minimizer normalized to `‖v‖_p = 1`.
    pub profile: ComplexField,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    /// Seed of the winning start.
    pub seed: u64,
    /// Quotient value after every accepted step of the winning start.
    pub trace: Vec<f64>,
    /// `max |v|` on the outermost node ring divided by `max |v|`.
    pub boundary_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeMoment {
    pub q: f64,
    pub mu: f64,
}

/// `A(y) = (-b (y2 - c2) / 2, b (y1 - c1) / 2)` about the grid centre.
pub fn symmetric_gauge_potential(b_star: f64, grid: &Grid2D) -> VectorPotentialField {
    let c = grid.center();
    VectorPotentialField::from_fn(*grid, |x| {
        [-0.5 * b_star * (x[1] - c[1]), 0.5 * b_star * (x[0] - c[0])]
    })
}

/// `A(y) = (-b (y2 - c2), 0)` about the grid centre.
pub fn landau_gauge_potential(b_star: f64, grid: &Grid2D) -> VectorPotentialField {
    let c = grid.center();
    VectorPotentialField::from_fn(*grid, |x| [-b_star * (x[1] - c[1]), 0.0])
}

fn operator(spec: &LimitingSpec, a: &VectorPotentialField) -> Result<MagneticOperator> {
    let v = RealField::constant(a.grid, spec.v_star);
    MagneticOperator::new(a, 1.0, 1.0, &v)
}

fn nonzero(v: &ComplexField) -> Result<()> {
    if v.is_zero() {
        Err(Error::Domain("field is identically zero".into()))
    } else {
        Ok(())
    }
}

/// Magnetic Sobolev quotient `S(v)`.
pub fn sobolev_quotient(v: &ComplexField, spec: &LimitingSpec, a: &VectorPotentialField) -> Result<f64> {
    v.grid.check_same(&a.grid)?;
    nonzero(v)?;
    let q = operator(spec, a)?.energy(&v.values);
    Ok(q / lp_norm_p(v, spec.p).powf(2.0 / spec.p))
}

/// Limiting functional `I(v) = (1/2) ∫ |D_A v|² + V|v|² - (1/p) ∫ |v|^p`.
pub fn limiting_functional(v: &ComplexField, spec: &LimitingSpec, a: &VectorPotentialField) -> Result<f64> {
    v.grid.check_same(&a.grid)?;
    let q = operator(spec, a)?.energy(&v.values);
    Ok(0.5 * q - lp_norm_p(v, spec.p) / spec.p)
}

/// `<I'(v), v> = ∫ |D_A v|² + V|v|² - ∫ |v|^p`.
pub fn nehari_defect(v: &ComplexField, spec: &LimitingSpec, a: &VectorPotentialField) -> Result<f64> {
    v.grid.check_same(&a.grid)?;
    let q = operator(spec, a)?.energy(&v.values);
    Ok(q - lp_norm_p(v, spec.p))
}

/// Scale `t*` with `t* v` on the Nehari manifold.
pub fn nehari_scale(v: &ComplexField, spec: &LimitingSpec, a: &VectorPotentialField) -> Result<f64> {
    v.grid.check_same(&a.grid)?;
    nonzero(v)?;
    let q = operator(spec, a)?.energy(&v.values);
    let pp = lp_norm_p(v, spec.p);
    Ok((q / pp).powf(1.0 / (spec.p - 2.0)))
}

fn normalize_p(values: &mut [Complex64], cell: f64, p: f64) {
    let pp = cell * values.iter().map(|z| z.norm().powf(p)).sum::<f64>();
    let s = pp.powf(-1.0 / p);
    values.iter_mut().for_each(|z| *z *= s);
}

fn nonlinearity(values: &[Complex64], p: f64, out: &mut [Complex64]) {
    for (o, z) in out.iter_mut().zip(values) {
        let m = z.norm();
        *o = if m == 0.0 { ZERO } else { z * m.powf(p - 2.0) };
    }
}

/// Seeded Gaussian initial datum with random centre and width; seed 0 is
/// centred. Centres are snapped to nodes: in strong fields the lattice
/// weakly pins the profile at nodes, and drifting to one from elsewhere
/// takes hundreds of iterations.
///
/// Lengths are in units of `1 / sqrt(V* + |B*|/2)`, which interpolates
/// between the field-free width and the lowest Landau level width
/// `sqrt(2 / |B*|)`. An off-centre seed carries the magnetic translation
/// phase `e^{-i (A(c) - A(o)) · y}` so that it stays close to the lowest
/// Landau level in strong fields; `a` is assumed linear.
pub fn seeded_gaussian(spec: &LimitingSpec, a: &VectorPotentialField, seed: u64) -> ComplexField {
    let grid = a.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (spec.v_star + 0.5 * spec.b_star.abs()).sqrt();
    let o = grid.center();
    let (mut cx, mut cy) = (o[0], o[1]);
    if seed != 0 {
        cx += rng.gen_range(-1.5..1.5) * scale;
        cy += rng.gen_range(-1.5..1.5) * scale;
    }
    // Snap to the nearest node.
    let h = grid.h();
    let snap = |c: f64, k: usize| {
        let i = ((c - grid.origin[k]) / h[k]).round().clamp(1.0, grid.n[k] as f64);
        grid.origin[k] + i * h[k]
    };
    let (cx, cy) = (snap(cx, 0), snap(cy, 1));
    let w = rng.gen_range(0.7..1.5) * scale;
    let at = |x: [f64; 2]| [grid.interpolate(&a.a1, x), grid.interpolate(&a.a2, x)];
    let (ac, ao) = (at([cx, cy]), at(o));
    let shift = [ac[0] - ao[0], ac[1] - ao[1]];
    ComplexField::from_fn(grid, |x| {
        let r2 = (x[0] - cx).powi(2) + (x[1] - cy).powi(2);
        let phase = -(shift[0] * (x[0] - o[0]) + shift[1] * (x[1] - o[1]));
        Complex64::from_polar((-r2 / (2.0 * w * w)).exp(), phase)
    })
}

struct Descent<'a> {
    op: &'a MagneticOperator,
    pre: GaugePreconditioner,
    p: f64,
    cell: f64,
}

impl Descent<'_> {
    fn quotient(&self, v: &[Complex64]) -> f64 {
        let pp = self.cell * v.iter().map(|z| z.norm().powf(self.p)).sum::<f64>();
        self.op.energy(v) / pp.powf(2.0 / self.p)
    }

    fn run(&mut self, init: &ComplexField, cfg: &SolverConfig, seed: u64) -> QuotientResult {
        let grid = init.grid;
        let n = grid.len();
        let p = self.p;
        let mut v = init.values.clone();
        normalize_p(&mut v, self.cell, p);
        let mut s = self.quotient(&v);
        let mut trace = vec![s];
        let mut lv = vec![ZERO; n];
        let mut f = vec![ZERO; n];
        let mut r = vec![ZERO; n];
        let mut inv = vec![ZERO; n];
        let mut d = vec![ZERO; n];
        let mut dir = vec![ZERO; n];
        let mut ldir = vec![ZERO; n];
        let mut trial = vec![ZERO; n];
        let mut best = vec![ZERO; n];
        // Previous preconditioned gradient and its pairing with the gradient.
        let mut prev: Option<(Vec<Complex64>, f64)> = None;
        let mut tau0 = 1.0f64;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        let dot = |a: &[Complex64], b: &[Complex64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>()
        };
        for it in 0..cfg.max_iter {
            iterations = it;
            self.op.apply(&v, &mut lv);
            nonlinearity(&v, p, &mut f);
            let q = self.cell * dot(&v, &lv);
            let pp = self.cell * v.iter().map(|z| z.norm().powf(p)).sum::<f64>();
            let lambda = q / pp;
            let gscale = 2.0 / pp.powf(2.0 / p);
            for k in 0..n {
                r[k] = lv[k] - f[k] * lambda;
            }
            residual = gscale * (self.cell * dot(&r, &r)).sqrt() / s;
            if residual <= cfg.tol {
                converged = true;
                break;
            }
            let rtol = (0.05 * residual).clamp(1e-13, 1e-4);
            pcg(self.op, &mut self.pre, &f, &mut inv, rtol, cfg.cg_max_iter);
            for k in 0..n {
                d[k] = v[k] - inv[k] * lambda;
            }
            // Polak-Ribiere+ conjugation in the metric of the operator; falls
            // back to the plain preconditioned gradient when not a descent.
            let rd = dot(&r, &d);
            let mut beta = 0.0;
            if let Some((dp, rdp)) = &prev {
                if *rdp > 0.0 {
                    beta = ((rd - dot(&r, dp)) / rdp).max(0.0);
                }
            }
            for k in 0..n {
                dir[k] = d[k] + dir[k] * beta;
            }
            let mut slope = gscale * self.cell * dot(&r, &dir);
            if !(slope > 0.0) {
                dir.copy_from_slice(&d);
                slope = gscale * self.cell * rd;
            }
            prev = Some((d.clone(), rd));

            // Along the ray `v - τ dir` the quotient and its derivative are
            // cheap once `L dir` is known, since `L` is linear.
            self.op.apply(&dir, &mut ldir);
            let cell = self.cell;
            let phi = |tau: f64| -> f64 {
                let (mut q, mut pp, mut gd) = (0.0, 0.0, 0.0);
                let mut nl = 0.0;
                for k in 0..n {
                    let w = v[k] - dir[k] * tau;
                    let lw = lv[k] - ldir[k] * tau;
                    let m2 = w.norm_sqr();
                    let mp2 = m2.powf(0.5 * (p - 2.0));
                    q += w.re * lw.re + w.im * lw.im;
                    pp += m2 * mp2;
                    gd += lw.re * dir[k].re + lw.im * dir[k].im;
                    nl += mp2 * (w.re * dir[k].re + w.im * dir[k].im);
                }
                let (q, pp) = (cell * q, cell * pp);
                -(2.0 / pp.powf(2.0 / p)) * cell * (gd - q / pp * nl)
            };
            // Secant search for a zero of the directional derivative: extrapolate
            // while still descending, then regula falsi inside the bracket.
            let d0 = -slope;
            let mut tau = tau0.clamp(cfg.step_min, cfg.step_max);
            let (mut lo, mut dlo) = (0.0, d0);
            let mut hi: Option<(f64, f64)> = None;
            for _ in 0..12 {
                let dt = phi(tau);
                if dt.abs() <= 0.1 * d0.abs() {
                    break;
                }
                if dt < 0.0 {
                    let ext = if dt > dlo { tau - dt * (tau - lo) / (dt - dlo) } else { 4.0 * tau };
                    lo = tau;
                    dlo = dt;
                    if hi.is_none() {
                        tau = ext.clamp(1.5 * tau, 8.0 * tau);
                        continue;
                    }
                } else {
                    hi = Some((tau, dt));
                }
                let (h, dh) = hi.expect("bracket");
                let t = lo - dlo * (h - lo) / (dh - dlo);
                let margin = 0.05 * (h - lo);
                tau = t.clamp(lo + margin, h - margin);
            }
            let mut accepted = None;
            for _ in 0..40 {
                for k in 0..n {
                    trial[k] = v[k] - dir[k] * tau;
                }
                normalize_p(&mut trial, self.cell, p);
                let st = self.quotient(&trial);
                if st <= s {
                    std::mem::swap(&mut best, &mut trial);
                    accepted = Some((st, tau));
                    break;
                }
                tau *= 0.5;
            }
            iterations = it + 1;
            match accepted {
                Some((st, t)) => {
                    std::mem::swap(&mut v, &mut best);
                    s = st;
                    trace.push(s);
                    tau0 = t;
                }
                // No descent left at machine precision.
                None => break,
            }
        }
        let profile = ComplexField { grid, values: v };
        let boundary_ratio = boundary_ratio(&profile);
        QuotientResult {
            s_min: s,
            energy: (0.5 - 1.0 / p) * s.powf(p / (p - 2.0)),
            profile,
            iterations,
            converged,
            residual,
            seed,
            trace,
            boundary_ratio,
        }
    }
}

/// Ratio of the largest modulus on the outermost node ring to the global maximum.
pub fn boundary_ratio(u: &ComplexField) -> f64 {
    let g = &u.grid;
    let [nx, ny] = g.n;
    let max = u.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let ring = g
        .nodes()
        .filter(|&(_, i, j, _)| i == 0 || j == 0 || i + 1 == nx || j + 1 == ny)
        .map(|(k, _, _, _)| u.values[k].norm())
        .fold(0.0, f64::max);
    ring / max
}

/// One descent from a given initial datum in an arbitrary gauge.
pub fn descend_from(
    spec: &LimitingSpec,
    a: &VectorPotentialField,
    init: &ComplexField,
    config: &SolverConfig,
    seed: u64,
) -> Result<QuotientResult> {
    config.validate()?;
    init.grid.check_same(&a.grid)?;
    nonzero(init)?;
    let op = operator(spec, a)?;
    let mut descent = Descent {
        op: &op,
        pre: GaugePreconditioner::new(a.grid, 1.0, spec.v_star),
        p: spec.p,
        cell: a.grid.cell_area(),
    };
    Ok(descent.run(init, config, seed))
}

/// Multi-start minimization of `S` in the gauge `a`; keeps the smallest
/// quotient, ties going to the lowest seed.
pub fn minimize_quotient_in_gauge(
    spec: &LimitingSpec,
    a: &VectorPotentialField,
    config: &SolverConfig,
    seed: u64,
) -> Result<QuotientResult> {
    config.validate()?;
    let mut best: Option<QuotientResult> = None;
    for r in 0..config.restarts as u64 {
        let s = seed.wrapping_add(r);
        let init = seeded_gaussian(spec, a, s);
        let run = descend_from(spec, a, &init, config, s)?;
        let better = match &best {
            None => true,
            Some(b) => run.s_min < b.s_min,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Multi-start minimization in the symmetric gauge of `spec.b_star`.
pub fn minimize_quotient(
    spec: &LimitingSpec,
    grid: &Grid2D,
    config: &SolverConfig,
    seed: u64,
) -> Result<QuotientResult> {
    let a = symmetric_gauge_potential(spec.b_star, grid);
    minimize_quotient_in_gauge(spec, &a, config, seed)
}

/// Profile rescaled onto the Nehari manifold (the solution normalization).
pub fn nehari_profile(result: &QuotientResult, spec: &LimitingSpec, a: &VectorPotentialField) -> Result<ComplexField> {
    let t = nehari_scale(&result.profile, spec, a)?;
    Ok(result.profile.scaled(Complex64::new(t, 0.0)))
}

/// Charge `q = ∫|v|²` and moment `μ = ∫ y1 j2 - y2 j1` with the current
/// `j_k = <D_k v, i v>` of the Nehari-normalized groundstate, coordinates
/// relative to the grid centre and `D` taken in the symmetric gauge.
///
/// With this orientation `μ = ∂/∂B ∫|D_A v|²` at fixed `v`, so the force
/// `q ∇V + μ ∇B` is the gradient of the concentration function up to a
/// positive factor.
pub fn charge_and_moment(result: &QuotientResult, spec: &LimitingSpec) -> Result<ChargeMoment> {
    if !result.converged {
        return Err(Error::NotConverged(format!(
            "limiting solve for V* = {}, B* = {} stopped at residual {:.3e}",
            spec.v_star, spec.b_star, result.residual
        )));
    }
    let grid = result.profile.grid;
    let a = symmetric_gauge_potential(spec.b_star, &grid);
    let v = nehari_profile(result, spec, &a)?;
    moments_of(&v, &a)
}

/// Charge and moment of an already normalized profile in the gauge `a`.
pub fn moments_of(v: &ComplexField, a: &VectorPotentialField) -> Result<ChargeMoment> {
    let grid = v.grid;
    let (g1, g2) = covariant_gradient(v, a, 1.0)?;
    let c = grid.center();
    let mut q = 0.0;
    let mut mu = 0.0;
    for (k, _, _, x) in grid.nodes() {
        let z = v.values[k];
        q += z.norm_sqr();
        let j1 = (g1.values[k] * z.conj()).im;
        let j2 = (g2.values[k] * z.conj()).im;
        mu += (x[0] - c[0]) * j2 - (x[1] - c[1]) * j1;
    }
    let w = grid.cell_area();
    Ok(ChargeMoment { q: q * w, mu: mu * w })
}
