//! Linear algebra for the magnetic operator: a fast Dirichlet solver for
//! `-kappa Δ + c` (sine transform), a gauge-shifted preconditioner built on
//! it, and preconditioned conjugate gradients.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::MagneticOperator;
use crate::grid::Grid2D;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One-dimensional type-I discrete sine transform of length `n` computed
/// through an FFT of length `2(n + 1)`.
struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Dst1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        let fft = planner.plan_fft_forward(2 * (n + 1));
        let scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        Self {
            n,
            fft,
            buf: vec![ZERO; 2 * (n + 1)],
            scratch,
        }
    }

    /// In place: `x_k <- Σ_j x_j sin(π (j+1)(k+1) / (n+1))`.
    fn apply(&mut self, x: &mut [Complex64]) {
        let n = self.n;
        let m = 2 * (n + 1);
        self.buf[0] = ZERO;
        self.buf[n + 1] = ZERO;
        for (j, &xj) in x.iter().enumerate() {
            self.buf[j + 1] = xj;
            self.buf[m - 1 - j] = -xj;
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        // FFT of the odd extension equals -2i times the sine sum.
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = self.buf[k + 1] * Complex64::new(0.0, 0.5);
        }
    }
}

/// Exact solver for `(-kappa Δ_5pt + c) x = r` with homogeneous Dirichlet data.
pub struct DirichletSolver {
    grid: Grid2D,
    dst_x: Dst1,
    dst_y: Dst1,
    inv_eig: Vec<f64>,
    col: Vec<Complex64>,
}

impl DirichletSolver {
    pub fn new(grid: Grid2D, kappa: f64, shift: f64) -> Self {
        let [nx, ny] = grid.n;
        let h = grid.h();
        let mut planner = FftPlanner::new();
        let dst_x = Dst1::new(nx, &mut planner);
        let dst_y = Dst1::new(ny, &mut planner);
        let lx: Vec<f64> = (1..=nx)
            .map(|k| 4.0 / (h[0] * h[0]) * (PI * k as f64 / (2.0 * (nx + 1) as f64)).sin().powi(2))
            .collect();
        let ly: Vec<f64> = (1..=ny)
            .map(|k| 4.0 / (h[1] * h[1]) * (PI * k as f64 / (2.0 * (ny + 1) as f64)).sin().powi(2))
            .collect();
        // Two forward transforms need a 4 / ((nx+1)(ny+1)) normalisation.
        let norm = 4.0 / ((nx + 1) * (ny + 1)) as f64;
        let mut inv_eig = Vec::with_capacity(nx * ny);
        for ky in &ly {
            for kx in &lx {
                inv_eig.push(norm / (kappa * (kx + ky) + shift));
            }
        }
        Self {
            grid,
            dst_x,
            dst_y,
            inv_eig,
            col: vec![ZERO; ny],
        }
    }

    fn transform(&mut self, x: &mut [Complex64]) {
        let [nx, ny] = self.grid.n;
        for row in x.chunks_mut(nx) {
            self.dst_x.apply(row);
        }
        for i in 0..nx {
            for j in 0..ny {
                self.col[j] = x[j * nx + i];
            }
            self.dst_y.apply(&mut self.col);
            for j in 0..ny {
                x[j * nx + i] = self.col[j];
            }
        }
    }

    /// In-place solve.
    pub fn solve(&mut self, x: &mut [Complex64]) {
        self.transform(x);
        for (z, w) in x.iter_mut().zip(&self.inv_eig) {
            *z *= *w;
        }
        self.transform(x);
    }
}

/// Preconditioner `e^{-iψ} (-kappa Δ + c)^{-1} e^{iψ}` with the linear phase
/// `ψ(x) = scale · A0 · (x - x0)`, which removes the local vector potential
/// `A0` near the gauge centre `x0`.
pub struct GaugePreconditioner {
    solver: DirichletSolver,
    phase: Option<Vec<Complex64>>,
}

impl GaugePreconditioner {
    pub fn new(grid: Grid2D, kappa: f64, shift: f64) -> Self {
        Self {
            solver: DirichletSolver::new(grid, kappa, shift),
            phase: None,
        }
    }

    pub fn set_gauge_center(&mut self, x0: [f64; 2], a0: [f64; 2], scale: f64) {
        if a0 == [0.0, 0.0] {
            self.phase = None;
            return;
        }
        let g = self.solver.grid;
        self.phase = Some(
            g.nodes()
                .map(|(_, _, _, x)| {
                    let psi = scale * (a0[0] * (x[0] - x0[0]) + a0[1] * (x[1] - x0[1]));
                    Complex64::from_polar(1.0, psi)
                })
                .collect(),
        );
    }

    pub fn apply(&mut self, r: &[Complex64], out: &mut [Complex64]) {
        match &self.phase {
            None => {
                out.copy_from_slice(r);
                self.solver.solve(out);
            }
            Some(ph) => {
                for ((o, z), p) in out.iter_mut().zip(r).zip(ph) {
                    *o = z * p;
                }
                self.solver.solve(out);
                for (o, p) in out.iter_mut().zip(ph) {
                    *o *= p.conj();
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Preconditioned conjugate gradients for `L x = b`; `x` holds the initial
/// guess on entry.
pub fn pcg(
    op: &MagneticOperator,
    pre: &mut GaugePreconditioner,
    b: &[Complex64],
    x: &mut [Complex64],
    rtol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|z| *z = ZERO);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![ZERO; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![ZERO; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    let mut ap = vec![ZERO; n];
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel > rtol && it < max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += p[k] * alpha;
            r[k] -= ap[k] * alpha;
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + p[k] * beta;
        }
        rel = norm(&r) / bnorm;
        it += 1;
    }
    CgOutcome {
        iterations: it,
        relative_residual: rel,
        converged: rel <= rtol,
    }
}
