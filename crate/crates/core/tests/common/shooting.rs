//! Radial shooting oracle for the positive groundstate of
//! `-Δw + w = w^{p-1}` in the plane, independent of the grid solvers.

use std::f64::consts::PI;

pub struct RadialProfile {
    /// `w(0)`.
    pub amplitude: f64,
    /// `∫ |∇w|²`.
    pub kinetic: f64,
    /// `∫ w²` (the charge).
    pub mass: f64,
    /// `∫ w^p`.
    pub lp: f64,
    pub p: f64,
}

impl RadialProfile {
    pub fn quotient(&self) -> f64 {
        (self.kinetic + self.mass) / self.lp.powf(2.0 / self.p)
    }

    pub fn energy(&self) -> f64 {
        (0.5 - 1.0 / self.p) * self.quotient().powf(self.p / (self.p - 2.0))
    }
}

fn rhs(r: f64, w: f64, dw: f64, p: f64) -> (f64, f64) {
    (dw, -dw / r + w - w.abs().powf(p - 2.0) * w)
}

enum Shot {
    Overshoot,
    Undershoot,
}

fn shoot(a: f64, p: f64, dr: f64, r_max: f64) -> (Shot, Vec<(f64, f64, f64)>) {
    // series start w = a + (a - a^{p-1}) r² / 4
    let r0 = 1e-6;
    let c = (a - a.powf(p - 1.0)) / 4.0;
    let mut r = r0;
    let mut w = a + c * r0 * r0;
    let mut dw = 2.0 * c * r0;
    let mut path = vec![(0.0, a, 0.0)];
    while r < r_max {
        let (k1w, k1d) = rhs(r, w, dw, p);
        let (k2w, k2d) = rhs(r + dr / 2.0, w + dr / 2.0 * k1w, dw + dr / 2.0 * k1d, p);
        let (k3w, k3d) = rhs(r + dr / 2.0, w + dr / 2.0 * k2w, dw + dr / 2.0 * k2d, p);
        let (k4w, k4d) = rhs(r + dr, w + dr * k3w, dw + dr * k3d, p);
        w += dr / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        dw += dr / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        r += dr;
        if w < 0.0 {
            return (Shot::Overshoot, path);
        }
        if dw > 0.0 {
            return (Shot::Undershoot, path);
        }
        path.push((r, w, dw));
    }
    (Shot::Undershoot, path)
}

/// Bisection on `w(0)`; integrals are accumulated with the trapezoid rule up
/// to the radius where the trajectory is still trustworthy.
pub fn radial_groundstate(p: f64) -> RadialProfile {
    let dr = 2e-4;
    let r_max = 30.0;
    let (mut lo, mut hi) = (1.0 + 1e-9, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match shoot(mid, p, dr, r_max).0 {
            Shot::Overshoot => hi = mid,
            Shot::Undershoot => lo = mid,
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let a = lo;
    let (_, path) = shoot(a, p, dr, r_max);
    // Keep the monotone decaying part, stopping where w reaches its floor.
    let cut = path
        .iter()
        .position(|&(r, w, _)| r > 2.0 && w < 1e-9)
        .unwrap_or(path.len());
    let path = &path[..cut];
    let (mut kin, mut mass, mut lp) = (0.0, 0.0, 0.0);
    for win in path.windows(2) {
        let (r0, w0, d0) = win[0];
        let (r1, w1, d1) = win[1];
        let h = r1 - r0;
        kin += 0.5 * h * (d0 * d0 * r0 + d1 * d1 * r1);
        mass += 0.5 * h * (w0 * w0 * r0 + w1 * w1 * r1);
        lp += 0.5 * h * (w0.powf(p) * r0 + w1.powf(p) * r1);
    }
    RadialProfile {
        amplitude: a,
        kinetic: 2.0 * PI * kin,
        mass: 2.0 * PI * mass,
        lp: 2.0 * PI * lp,
        p,
    }
}
