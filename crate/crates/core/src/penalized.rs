//! Penalized semiclassical problem
//!
//! ```text
//! -ε² Δ_{A/ε²} u + V u = g_ε(x, u)   in Ω,  u = 0 on ∂Ω,
//! g_ε(x, s) = |s|^{p-2} s                         in Λ,
//!           = min(μ ε² H(x), |s|^{p-2}) s         outside Λ,
//! ```
//!
//! with the logarithmic Hardy weight `H` centred at `x0`. Spike solutions
//! are found by descent on `𝓖_ε` along the Nehari-type set
//! `<𝓖'_ε(u), u> = 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::concentration::ProblemInstance;
use crate::error::{Error, Result};
use crate::field::MagneticOperator;
use crate::grid::{ComplexField, Grid2D};
use crate::limiting::SolverConfig;
use crate::solver::{pcg, GaugePreconditioner};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct PenalizedSpec {
    pub instance: ProblemInstance,
    pub x0: [f64; 2],
    pub rho: f64,
    pub rho0: f64,
    pub beta: f64,
    pub mu_pen: f64,
    pub eps: f64,
}

impl PenalizedSpec {
    /// Defaults: `ρ` half the distance from `x0` to `∂Λ`, `ρ0 = ρ/2`,
    /// `β = 1`, `μ = 0.5`.
    pub fn new(instance: ProblemInstance, x0: [f64; 2], eps: f64) -> Result<Self> {
        let d = instance
            .lambda
            .iter()
            .filter(|r| r.contains_open(x0))
            .map(|r| r.inner_distance(x0))
            .fold(0.0, f64::max);
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("x0 = {x0:?} is not inside the concentration region")));
        }
        let rho = 0.5 * d;
        Self::with_params(instance, x0, rho, 0.5 * rho, 1.0, 0.5, eps)
    }

    pub fn with_params(
        instance: ProblemInstance,
        x0: [f64; 2],
        rho: f64,
        rho0: f64,
        beta: f64,
        mu_pen: f64,
        eps: f64,
    ) -> Result<Self> {
        let s = Self {
            instance,
            x0,
            rho,
            rho0,
            beta,
            mu_pen,
            eps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0 < self.rho && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < rho0 < rho, got rho0 = {}, rho = {}",
                self.rho0, self.rho
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        if !(self.mu_pen > 0.0 && self.mu_pen < 1.0) {
            return Err(Error::InvalidParameter(format!("mu_pen must lie in (0, 1), got {}", self.mu_pen)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {}", self.eps)));
        }
        let inside = self
            .instance
            .lambda
            .iter()
            .any(|r| r.contains_open(self.x0) && r.inner_distance(self.x0) >= self.rho);
        if !inside {
            return Err(Error::InvalidParameter(format!(
                "closed ball of radius {} about {:?} is not inside the concentration region",
                self.rho, self.x0
            )));
        }
        Ok(())
    }

    /// `μ ε² H(x)`, infinite inside `Λ` (where the nonlinearity is not cut).
    pub fn cutoff(&self, x: [f64; 2]) -> f64 {
        if self.instance.in_lambda(x) {
            f64::INFINITY
        } else {
            self.mu_pen * self.eps * self.eps * penalization_h(x, self)
        }
    }
}

/// `H(x) = (log ρ/ρ0)^β / (4 |x - x0|² (log |x - x0|/ρ0)^{2+β})` outside `Λ`, zero inside.
pub fn penalization_h(x: [f64; 2], spec: &PenalizedSpec) -> f64 {
    if spec.instance.in_lambda(x) {
        return 0.0;
    }
    hardy_weight(x, spec)
}

fn hardy_weight(x: [f64; 2], spec: &PenalizedSpec) -> f64 {
    let r = (x[0] - spec.x0[0]).hypot(x[1] - spec.x0[1]);
    let l = (r / spec.rho0).ln();
    (spec.rho / spec.rho0).ln().powf(spec.beta) / (4.0 * r * r * l.powf(2.0 + spec.beta))
}

/// `g` for a given cutoff `c = μ ε² H(x)` (infinite inside `Λ`).
pub fn g_with_cutoff(c: f64, s: Complex64, p: f64) -> Complex64 {
    let m = s.norm();
    if m == 0.0 {
        return ZERO;
    }
    s * m.powf(p - 2.0).min(c)
}

/// `G` for a given cutoff, by the closed form of `∫₀^{|s|} min(c t, t^{p-1}) dt`.
pub fn big_g_with_cutoff(c: f64, s: Complex64, p: f64) -> f64 {
    let m = s.norm();
    if c.is_infinite() {
        return m.powf(p) / p;
    }
    let tbar = c.powf(1.0 / (p - 2.0));
    if m <= tbar {
        m.powf(p) / p
    } else {
        tbar.powf(p) / p + 0.5 * c * (m * m - tbar * tbar)
    }
}

pub fn g_eps(x: [f64; 2], s: Complex64, spec: &PenalizedSpec) -> Complex64 {
    g_with_cutoff(spec.cutoff(x), s, spec.instance.p)
}

#[allow(non_snake_case)]
pub fn G_eps(x: [f64; 2], s: Complex64, spec: &PenalizedSpec) -> f64 {
    big_g_with_cutoff(spec.cutoff(x), s, spec.instance.p)
}

/// Discretized penalized problem on a fixed grid.
pub struct PenalizedProblem {
    pub grid: Grid2D,
    pub op: MagneticOperator,
    /// `μ ε² H` per node, infinite inside `Λ`.
    pub cutoff: Vec<f64>,
    pub p: f64,
    pub eps: f64,
}

impl PenalizedProblem {
    pub fn new(spec: &PenalizedSpec, grid: &Grid2D) -> Result<Self> {
        spec.validate()?;
        let dom = &spec.instance.domain;
        let hi = [grid.origin[0] + grid.extent[0], grid.origin[1] + grid.extent[1]];
        let tol = 1e-9 * dom.diameter();
        if grid.origin[0] < dom.min[0] - tol
            || grid.origin[1] < dom.min[1] - tol
            || hi[0] > dom.max[0] + tol
            || hi[1] > dom.max[1] + tol
        {
            return Err(Error::InvalidGrid("grid extends outside the domain".into()));
        }
        let eps = spec.eps;
        let v = spec.instance.sample_v(grid);
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("potential is undefined on the grid".into()));
        }
        let a = spec.instance.sample_a(grid);
        let op = MagneticOperator::new(&a, 1.0 / (eps * eps), eps * eps, &v)?;
        let cutoff = grid.nodes().map(|(_, _, _, x)| spec.cutoff(x)).collect();
        Ok(Self {
            grid: *grid,
            op,
            cutoff,
            p: spec.instance.p,
            eps,
        })
    }

    fn cell(&self) -> f64 {
        self.grid.cell_area()
    }

    /// `∫ ε²|D_{A/ε²}u|² + V|u|²`.
    pub fn quadratic(&self, u: &[Complex64]) -> f64 {
        self.op.energy(u)
    }

    pub fn primitive(&self, u: &[Complex64]) -> f64 {
        self.cell()
            * u.iter()
                .zip(&self.cutoff)
                .map(|(s, &c)| big_g_with_cutoff(c, *s, self.p))
                .sum::<f64>()
    }

    /// `∫ <g(u), u>`.
    pub fn nonlinear_pairing(&self, u: &[Complex64]) -> f64 {
        self.cell()
            * u.iter()
                .zip(&self.cutoff)
                .map(|(s, &c)| (g_with_cutoff(c, *s, self.p).conj() * s).re)
                .sum::<f64>()
    }

    pub fn functional(&self, u: &[Complex64]) -> f64 {
        0.5 * self.quadratic(u) - self.primitive(u)
    }

    /// `<𝓖'_ε(u), u>`.
    pub fn derivative_pairing(&self, u: &[Complex64]) -> f64 {
        self.quadratic(u) - self.nonlinear_pairing(u)
    }

    /// Unpenalized `𝓕_ε(u) = (1/2) ∫ ε²|Du|² + V|u|² - (1/p) ∫ |u|^p`.
    pub fn original_functional(&self, u: &[Complex64]) -> f64 {
        let lp = self.cell() * u.iter().map(|z| z.norm().powf(self.p)).sum::<f64>();
        0.5 * self.quadratic(u) - lp / self.p
    }

    fn nonlinearity(&self, u: &[Complex64], out: &mut [Complex64]) {
        for ((o, s), &c) in out.iter_mut().zip(u).zip(&self.cutoff) {
            *o = g_with_cutoff(c, *s, self.p);
        }
    }

    /// Scale `t ∈ [1e-6, 1e6]` with `<𝓖'_ε(t u), t u> = 0`, by bisection in
    /// `log t`. `None` when the bracket holds no root.
    pub fn nehari_scale(&self, u: &[Complex64]) -> Option<f64> {
        let q = self.quadratic(u);
        if !(q > 0.0) {
            return None;
        }
        // <G'(tu), tu> / t² = Q - ∫ m(x, t|u|) |u|², decreasing in t.
        let w: Vec<(f64, f64)> = u
            .iter()
            .zip(&self.cutoff)
            .filter(|(s, _)| s.norm() > 0.0)
            .map(|(s, &c)| (s.norm(), c))
            .collect();
        let p = self.p;
        let cell = self.cell();
        let psi = |t: f64| {
            q - cell
                * w.iter()
                    .map(|&(m, c)| (t * m).powf(p - 2.0).min(c) * m * m)
                    .sum::<f64>()
        };
        let (mut lo, mut hi) = (1e-6f64.ln(), 1e6f64.ln());
        if psi(lo.exp()) <= 0.0 || psi(hi.exp()) >= 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if psi(mid.exp()) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some((0.5 * (lo + hi)).exp())
    }

    /// Preconditioner `(-ε²Δ + V(x_c))^{-1}` gauge-shifted to the node `k`.
    fn preconditioner(&self, spec: &PenalizedSpec, k: usize) -> GaugePreconditioner {
        let g = self.grid;
        let x = g.node(k % g.n[0], k / g.n[0]);
        let mut pre = GaugePreconditioner::new(g, self.eps * self.eps, self.op.potential()[k].max(1e-12));
        pre.set_gauge_center(x, spec.instance.a.value(x), 1.0 / (self.eps * self.eps));
        pre
    }

    /// Energy-norm gradient residual `‖u - L^{-1} g(u)‖_L / ‖u‖_L`, the
    /// dual norm of `𝓖'_ε(u)` relative to `u`. On the constraint set the
    /// gradient is already orthogonal to `u` in this inner product.
    pub fn residual(&self, spec: &PenalizedSpec, u: &[Complex64]) -> f64 {
        let k = ComplexField { grid: self.grid, values: u.to_vec() }.argmax_modulus();
        let mut pre = self.preconditioner(spec, k);
        let mut s = Scratch::new(u.len());
        self.gradient(&mut pre, u, &mut s, 1e-10, 5_000)
    }

    /// Fill `s.d = u - L^{-1} g(u)` and return the energy-norm residual.
    fn gradient(&self, pre: &mut GaugePreconditioner, u: &[Complex64], s: &mut Scratch, rtol: f64, cg_max: usize) -> f64 {
        self.nonlinearity(u, &mut s.g);
        pcg(&self.op, pre, &s.g, &mut s.w, rtol, cg_max);
        for ((d, a), b) in s.d.iter_mut().zip(u).zip(&s.w) {
            *d = a - b;
        }
        self.op.apply(&s.d, &mut s.ld);
        self.op.apply(u, &mut s.lu);
        let dd: f64 = s.d.iter().zip(&s.ld).map(|(a, b)| (a.conj() * b).re).sum();
        let uu: f64 = u.iter().zip(&s.lu).map(|(a, b)| (a.conj() * b).re).sum();
        (dd.max(0.0) / uu).sqrt()
    }
}

struct Scratch {
    g: Vec<Complex64>,
    w: Vec<Complex64>,
    d: Vec<Complex64>,
    ld: Vec<Complex64>,
    lu: Vec<Complex64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            g: vec![ZERO; n],
            w: vec![ZERO; n],
            d: vec![ZERO; n],
            ld: vec![ZERO; n],
            lu: vec![ZERO; n],
        }
    }
}

/// `𝓖_ε(u)` by the same quadrature as the solver.
pub fn penalized_functional(u: &ComplexField, spec: &PenalizedSpec) -> Result<f64> {
    Ok(PenalizedProblem::new(spec, &u.grid)?.functional(&u.values))
}

/// `<𝓖'_ε(u), u>`.
pub fn penalized_derivative_pairing(u: &ComplexField, spec: &PenalizedSpec) -> Result<f64> {
    Ok(PenalizedProblem::new(spec, &u.grid)?.derivative_pairing(&u.values))
}

/// `𝓕_ε(u)`, the functional without penalization.
pub fn original_functional(u: &ComplexField, spec: &PenalizedSpec) -> Result<f64> {
    Ok(PenalizedProblem::new(spec, &u.grid)?.original_functional(&u.values))
}

/// `sup_{t>0} 𝓕_ε(t u) = (1/2 - 1/p) (Q / P^{2/p})^{p/(p-2)}` with
/// `Q = ∫ ε²|Du|² + V|u|²` and `P = ∫ |u|^p`.
pub fn ray_maximum(u: &ComplexField, spec: &PenalizedSpec) -> Result<f64> {
    let prob = PenalizedProblem::new(spec, &u.grid)?;
    let q = prob.quadratic(&u.values);
    let p = prob.p;
    let pp = u.grid.cell_area() * u.values.iter().map(|z| z.norm().powf(p)).sum::<f64>();
    if !(pp > 0.0) {
        return Err(Error::Domain("field is identically zero".into()));
    }
    Ok((0.5 - 1.0 / p) * (q / pp.powf(2.0 / p)).powf(p / (p - 2.0)))
}

/// Translate a limiting profile (symmetric gauge of field `b` about its grid
/// centre) so its peak sits at the centre: `v_c(y) = e^{i A(y_p)·y} v(y + y_p)`.
fn recentred_sampler(profile: &ComplexField, b: f64) -> (impl Fn([f64; 2]) -> Complex64 + '_, f64) {
    let g = profile.grid;
    let c = g.center();
    let k = profile.argmax_modulus();
    let xp = g.node(k % g.n[0], k / g.n[0]);
    let yp = [xp[0] - c[0], xp[1] - c[1]];
    let ap = [-0.5 * b * yp[1], 0.5 * b * yp[0]];
    let peak = profile.values[k].norm();
    // Effective support: farthest node from the peak with |v| above 1e-8 of the maximum.
    let radius = g
        .nodes()
        .filter(|&(k, _, _, _)| profile.values[k].norm() > 1e-8 * peak)
        .map(|(_, _, _, x)| (x[0] - xp[0]).hypot(x[1] - xp[1]))
        .fold(0.0, f64::max);
    let f = move |y: [f64; 2]| {
        let v = profile.sample([xp[0] + y[0], xp[1] + y[1]]);
        v * Complex64::from_polar(1.0, ap[0] * y[0] + ap[1] * y[1])
    };
    (f, radius)
}

/// Test family `u_ε(x) = e^{-i A(x*)·(x-x*)/ε²} e^{-i yᵀSy/2} v((x-x*)/ε)`
/// on `grid`, where `S` is the symmetric part of `DA(x*)` and `v` is a
/// limiting profile in the symmetric gauge of `B(x*)`.
pub fn make_test_family(
    x_star: [f64; 2],
    v_profile: &ComplexField,
    eps: f64,
    instance: &ProblemInstance,
    grid: &Grid2D,
) -> Result<ComplexField> {
    if !instance.in_lambda(x_star) {
        return Err(Error::Domain(format!("x* = {x_star:?} is not inside the concentration region")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let b = instance.field_at(x_star)?;
    let (v, radius) = recentred_sampler(v_profile, b);
    let reach = eps * radius;
    let dom = &instance.domain;
    if x_star[0] - reach < dom.min[0]
        || x_star[0] + reach > dom.max[0]
        || x_star[1] - reach < dom.min[1]
        || x_star[1] + reach > dom.max[1]
    {
        return Err(Error::Domain(format!(
            "rescaled profile support (radius {reach:.4}) leaves the domain"
        )));
    }
    let a0 = instance.a.value(x_star);
    let j = instance.a.jacobian(x_star, instance.h_curl);
    let s = [
        [j[0][0], 0.5 * (j[0][1] + j[1][0])],
        [0.5 * (j[0][1] + j[1][0]), j[1][1]],
    ];
    let e2 = eps * eps;
    Ok(ComplexField::from_fn(*grid, |x| {
        let d = [x[0] - x_star[0], x[1] - x_star[1]];
        let y = [d[0] / eps, d[1] / eps];
        let sym = 0.5 * (s[0][0] * y[0] * y[0] + 2.0 * s[0][1] * y[0] * y[1] + s[1][1] * y[1] * y[1]);
        let phase = -(a0[0] * d[0] + a0[1] * d[1]) / e2 - sym;
        v(y) * Complex64::from_polar(1.0, phase)
    }))
}

#[derive(Clone, Debug)]
pub struct SpikeSolution {
    pub u: ComplexField,
    /// `ε^{-2} 𝓖_ε(u)`.
    pub energy_scaled: f64,
    pub peak: [f64; 2],
    pub peak_height: f64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `|<𝓖'_ε(u), u>| / ∫ ε²|Du|² + V|u|²` at the returned field.
    pub nehari_defect: f64,
    pub diagnostic: Option<String>,
}

/// Solver defaults for the penalized problem: residual `1e-5`.
pub fn default_penalized_config() -> SolverConfig {
    SolverConfig {
        tol: 1e-5,
        max_iter: 2_000,
        step_max: 2.0,
        ..SolverConfig::default()
    }
}

fn finish(prob: &PenalizedProblem, u: Vec<Complex64>, residual: f64, converged: bool, iterations: usize, diagnostic: Option<String>) -> SpikeSolution {
    let u = ComplexField { grid: prob.grid, values: u };
    let k = u.argmax_modulus();
    let g = prob.grid;
    let q = prob.quadratic(&u.values);
    let defect = if q > 0.0 { prob.derivative_pairing(&u.values).abs() / q } else { 0.0 };
    SpikeSolution {
        energy_scaled: prob.functional(&u.values) / (prob.eps * prob.eps),
        peak: g.node(k % g.n[0], k / g.n[0]),
        peak_height: u.values[k].norm(),
        u,
        residual,
        converged,
        iterations,
        nehari_defect: defect,
        diagnostic,
    }
}

/// Damped preconditioned descent on `𝓖_ε` along the Nehari-type set.
///
/// Each step moves along `u - L^{-1} g(u)` (the gradient preconditioned by
/// the linear part `L = -ε²Δ_{A/ε²} + V`), rescales onto the constraint
/// and is accepted if `𝓖_ε` does not increase.
pub fn solve_penalized(spec: &PenalizedSpec, init: &ComplexField, config: &SolverConfig) -> Result<SpikeSolution> {
    config.validate()?;
    if init.is_zero() {
        return Err(Error::Domain("initial guess is identically zero".into()));
    }
    let prob = PenalizedProblem::new(spec, &init.grid)?;
    let grid = prob.grid;
    let n = grid.len();
    let mut u = init.values.clone();
    let Some(t) = prob.nehari_scale(&u) else {
        let msg = "initial guess has no Nehari rescaling in [1e-6, 1e6]".to_string();
        return Ok(finish(&prob, u, f64::INFINITY, false, 0, Some(msg)));
    };
    u.iter_mut().for_each(|z| *z *= t);
    let mut energy = prob.functional(&u);

    let peak_of = |u: &[Complex64]| ComplexField { grid, values: u.to_vec() }.argmax_modulus();
    let mut peak = peak_of(&u);
    let mut pre = prob.preconditioner(spec, peak);
    let mut s = Scratch::new(n);
    let mut trial = vec![ZERO; n];
    let mut prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    let mut rtol = 1e-4;
    for it in 0..config.max_iter {
        let k = peak_of(&u);
        if k != peak {
            peak = k;
            pre = prob.preconditioner(spec, k);
        }
        let residual = prob.gradient(&mut pre, &u, &mut s, rtol, config.cg_max_iter);
        if residual <= config.tol {
            return Ok(finish(&prob, u, residual, true, it, None));
        }
        rtol = (0.05 * residual).clamp(1e-12, 1e-4);
        let d = &s.d;
        let mut tau = 1.0;
        if let Some((up, dp)) = &prev {
            let mut ss = 0.0;
            let mut sy = 0.0;
            for k in 0..n {
                let sv = u[k] - up[k];
                let yd = d[k] - dp[k];
                ss += sv.norm_sqr();
                sy += sv.re * yd.re + sv.im * yd.im;
            }
            if sy > 0.0 && ss > 0.0 {
                tau = (ss / sy).clamp(config.step_min, config.step_max);
            }
        }
        let mut accepted = false;
        let mut collapsed = false;
        for _ in 0..40 {
            for k in 0..n {
                trial[k] = u[k] - d[k] * tau;
            }
            match prob.nehari_scale(&trial) {
                Some(t) => {
                    trial.iter_mut().for_each(|z| *z *= t);
                    let e = prob.functional(&trial);
                    if e <= energy {
                        prev = Some((u.clone(), d.clone()));
                        std::mem::swap(&mut u, &mut trial);
                        energy = e;
                        accepted = true;
                        break;
                    }
                }
                None => collapsed = true,
            }
            tau *= 0.5;
        }
        if !accepted {
            let msg = if collapsed {
                "Nehari bracket failure: the iterate fell into the trivial regime"
            } else {
                "line search found no descent"
            };
            return Ok(finish(&prob, u, residual, residual <= config.tol, it + 1, Some(msg.into())));
        }
    }
    let r = prob.gradient(&mut pre, &u, &mut s, rtol.min(1e-8), config.cg_max_iter);
    let converged = r <= config.tol;
    let msg = (!converged).then(|| format!("no convergence after {} iterations", config.max_iter));
    Ok(finish(&prob, u, r, converged, config.max_iter, msg))
}

/// `max |u|` over nodes outside the open ball `B(x_eps, R ε)`; zero when the
/// ball covers every node.
pub fn off_peak_sup(u: &ComplexField, x_eps: [f64; 2], r: f64, eps: f64) -> f64 {
    let rad = r * eps;
    u.grid
        .nodes()
        .filter(|&(_, _, _, x)| (x[0] - x_eps[0]).hypot(x[1] - x_eps[1]) >= rad)
        .map(|(k, _, _, _)| u.values[k].norm())
        .fold(0.0, f64::max)
}

/// `sup |u|` over grid nodes inside the closed region.
pub fn sup_on_lambda(u: &ComplexField, instance: &ProblemInstance) -> f64 {
    u.grid
        .nodes()
        .filter(|&(_, _, _, x)| instance.in_lambda_closed(x))
        .map(|(k, _, _, _)| u.values[k].norm())
        .fold(0.0, f64::max)
}

/// Smallness report for the Hardy weight: for each real field `φ`, the
/// largest `ε` with `∫ ε² H φ² ≤ ∫ ε² |∇φ|² + V φ²` (infinite when the
/// inequality holds for every `ε`). Returns the minimum over the fields.
pub fn hardy_epsilon_bar(spec: &PenalizedSpec, fields: &[ComplexField]) -> Result<f64> {
    let mut bar = f64::INFINITY;
    for phi in fields {
        let grid = phi.grid;
        let zero = crate::grid::VectorPotentialField::zeros(grid);
        let v = spec.instance.sample_v(&grid);
        let kin = MagneticOperator::new(&zero, 1.0, 1.0, &v)?;
        let grad = kin.kinetic_energy(&phi.values);
        let pot = kin.potential_energy(&phi.values);
        let w = grid.cell_area();
        let h: f64 = grid
            .nodes()
            .map(|(k, _, _, x)| penalization_h(x, spec) * phi.values[k].norm_sqr())
            .sum::<f64>()
            * w;
        if h > grad {
            bar = bar.min((pot / (h - grad)).sqrt());
        }
    }
    Ok(bar)
}

/// Penalization parameters as they appear in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyParams {
    /// Ball radius; `None` picks half the distance from `x0` to the region boundary.
    pub rho: Option<f64>,
    /// Inner radius; `None` picks `rho / 2`.
    pub rho0: Option<f64>,
    pub beta: f64,
    pub mu_pen: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            rho: None,
            rho0: None,
            beta: 1.0,
            mu_pen: 0.5,
        }
    }
}

impl PenaltyParams {
    pub fn spec(&self, instance: &ProblemInstance, x0: [f64; 2], eps: f64) -> Result<PenalizedSpec> {
        let base = PenalizedSpec::new(instance.clone(), x0, eps)?;
        let rho = self.rho.unwrap_or(base.rho);
        let rho0 = self.rho0.unwrap_or(0.5 * rho);
        PenalizedSpec::with_params(instance.clone(), x0, rho, rho0, self.beta, self.mu_pen, eps)
    }
}
