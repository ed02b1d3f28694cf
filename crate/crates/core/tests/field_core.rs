use magnls::field::{covariant_gradient, lp_norm_p, magnetic_energy, modulus_gradient_energy};
use magnls::{ComplexField, Grid2D, RealField, VectorPotentialField};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: Grid2D, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ComplexField::new(grid, values).unwrap()
}

/// Dense matrix of `-Δ_h + V` on interior nodes with zero Dirichlet data,
/// assembled entry by entry.
fn dense_operator(grid: &Grid2D, v: &[f64]) -> Vec<Vec<f64>> {
    let n = grid.len();
    let [nx, ny] = grid.n;
    let [hx, hy] = grid.h();
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            m[k][k] = 2.0 / (hx * hx) + 2.0 / (hy * hy) + v[k];
            if i > 0 {
                m[k][grid.index(i - 1, j)] = -1.0 / (hx * hx);
            }
            if i + 1 < nx {
                m[k][grid.index(i + 1, j)] = -1.0 / (hx * hx);
            }
            if j > 0 {
                m[k][grid.index(i, j - 1)] = -1.0 / (hy * hy);
            }
            if j + 1 < ny {
                m[k][grid.index(i, j + 1)] = -1.0 / (hy * hy);
            }
        }
    }
    m
}

fn dense_form(grid: &Grid2D, m: &[Vec<f64>], u: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for (k, row) in m.iter().enumerate() {
        let mu: Complex64 = row.iter().zip(u).map(|(a, z)| z * *a).sum();
        acc += (u[k].conj() * mu).re;
    }
    acc * grid.cell_area()
}

#[test]
fn zero_field_has_zero_energy_and_norm() {
    let g = Grid2D::centered_box([0.0, 0.0], 1.0, 12).unwrap();
    let u = ComplexField::zeros(g);
    let a = VectorPotentialField::from_fn(g, |x| [x[1], -x[0]]);
    let v = RealField::constant(g, 1.0);
    assert_eq!(magnetic_energy(&u, &a, &v, 0.3).unwrap(), 0.0);
    assert_eq!(lp_norm_p(&u, 4.0), 0.0);
    assert_eq!(modulus_gradient_energy(&u), 0.0);
    let (g1, g2) = covariant_gradient(&u, &a, 2.0).unwrap();
    assert!(g1.is_zero() && g2.is_zero());
}

#[test]
fn gaussian_energy_matches_dense_oracle() {
    let g = Grid2D::centered_box([0.3, -0.2], 3.0, 16).unwrap();
    let u = ComplexField::from_fn(g, |x| Complex64::new((-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp(), 0.0));
    let v = RealField::constant(g, 1.0);
    let dense = dense_form(&g, &dense_operator(&g, &v.values), &u.values);
    let e = magnetic_energy(&u, &VectorPotentialField::zeros(g), &v, 1.0).unwrap();
    assert!((e - dense).abs() <= 1e-10 * dense, "{e} vs {dense}");
}

#[test]
fn complex_fields_match_dense_oracle_with_variable_potential() {
    let g = Grid2D::new([-1.0, -2.0], [2.0, 3.0], [16, 16]).unwrap();
    let v = RealField::from_fn(g, |x| 1.0 + x[0] * x[0] + 0.5 * x[1]);
    let m = dense_operator(&g, &v.values);
    for seed in 0..5 {
        let u = random_field(g, seed);
        let dense = dense_form(&g, &m, &u.values);
        let e = magnetic_energy(&u, &VectorPotentialField::zeros(g), &v, 1.0).unwrap();
        assert!((e - dense).abs() <= 1e-10 * dense.abs(), "seed {seed}: {e} vs {dense}");
    }
}

#[test]
fn eps_scaling_is_an_identity() {
    let g = Grid2D::centered_box([0.0, 0.0], 2.0, 24).unwrap();
    let u = random_field(g, 7);
    let a = VectorPotentialField::from_fn(g, |x| [-0.4 * x[1] + 0.1 * x[0] * x[0], 0.7 * x[0]]);
    let v = RealField::from_fn(g, |x| 1.0 + 0.2 * x[0]);
    let eps: f64 = 0.3;
    let scaled = VectorPotentialField::from_fn(g, |x| {
        [(-0.4 * x[1] + 0.1 * x[0] * x[0]) / (eps * eps), 0.7 * x[0] / (eps * eps)]
    });
    let zero_v = RealField::constant(g, 0.0);
    let potential = magnetic_energy(&u, &VectorPotentialField::zeros(g), &v, 1.0).unwrap()
        - magnetic_energy(&u, &VectorPotentialField::zeros(g), &zero_v, 1.0).unwrap();
    let kinetic = magnetic_energy(&u, &scaled, &zero_v, 1.0).unwrap();
    let direct = magnetic_energy(&u, &a, &v, eps).unwrap();
    let combined = eps * eps * kinetic + potential;
    assert!((direct - combined).abs() <= 1e-12 * direct, "{direct} vs {combined}");
}

#[test]
fn single_node_lp_norm() {
    let g = Grid2D::new([0.0, 0.0], [0.5, 0.5], [4, 4]).unwrap();
    let mut u = ComplexField::zeros(g);
    u.values[g.index(2, 1)] = Complex64::new(0.0, 2.0);
    assert!((lp_norm_p(&u, 4.0) - 0.16).abs() < 1e-15);
}

#[test]
fn gaussian_lp_norm_converges_under_refinement() {
    // ∫ exp(-p |x - c|² / 2) = 2π / p.
    let p = 4.0;
    let exact = 2.0 * std::f64::consts::PI / p;
    let mut errors = Vec::new();
    for n in [8, 16, 32, 64] {
        let g = Grid2D::centered_box([0.0, 0.0], 6.0, n).unwrap();
        let u = ComplexField::from_fn(g, |x| {
            let r2 = (x[0] - 0.13).powi(2) + (x[1] + 0.29).powi(2);
            Complex64::from_polar((-r2 / 2.0).exp(), x[0])
        });
        errors.push((lp_norm_p(&u, p) - exact).abs());
    }
    for w in errors.windows(2) {
        // At least second order until the truncation floor of the box.
        assert!(w[1] <= w[0] / 3.5 || w[1] < 1e-12, "{errors:?}");
    }
    assert!(errors[3] < 1e-10, "{errors:?}");
}

#[test]
fn pure_gauge_gradient_vanishes_at_second_order() {
    // u = e^{iφ} with A = -∇φ / scale: D_A u = 0 in the continuum.
    let scale = 2.0;
    let phi = |x: [f64; 2]| 0.3 * x[0] * x[0] - 0.2 * x[0] * x[1] + 0.5 * x[1];
    let dphi = |x: [f64; 2]| [0.6 * x[0] - 0.2 * x[1], -0.2 * x[0] + 0.5];
    let mut norms = Vec::new();
    for n in [32, 64, 128] {
        let g = Grid2D::centered_box([0.0, 0.0], 1.0, n).unwrap();
        let u = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, phi(x)));
        let a = VectorPotentialField::from_fn(g, |x| {
            let d = dphi(x);
            [-d[0] / scale, -d[1] / scale]
        });
        let (g1, g2) = covariant_gradient(&u, &a, scale).unwrap();
        // The zero ghost values make the outermost ring O(1/h); measure inside it.
        let [nx, ny] = g.n;
        let mut acc = 0.0;
        for (k, i, j, _) in g.nodes() {
            if i > 0 && j > 0 && i + 1 < nx && j + 1 < ny {
                acc += g1.values[k].norm_sqr() + g2.values[k].norm_sqr();
            }
        }
        norms.push((acc * g.cell_area()).sqrt());
    }
    for w in norms.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "observed order {order}: {norms:?}");
    }
}

#[test]
fn gauge_covariance_of_energy_converges_at_second_order() {
    // u -> e^{iφ} u with A -> A - ∇φ leaves the continuum energy unchanged.
    // Quadratic φ would be exact on the lattice; a trigonometric one is not.
    let phi = |x: [f64; 2]| (0.9 * x[0]).sin() * (0.7 * x[1]).cos();
    let dphi = |x: [f64; 2]| {
        [0.9 * (0.9 * x[0]).cos() * (0.7 * x[1]).cos(), -0.7 * (0.9 * x[0]).sin() * (0.7 * x[1]).sin()]
    };
    let base_a = |x: [f64; 2]| [-0.25 * x[1], 0.25 * x[0]];
    let bump = |x: [f64; 2]| {
        let r2 = (x[0] - 0.2).powi(2) + x[1] * x[1];
        Complex64::new((-r2).exp(), 0.3 * (-r2).exp() * x[0])
    };
    let mut diffs = Vec::new();
    for n in [16, 32, 64, 128] {
        let g = Grid2D::centered_box([0.0, 0.0], 5.0, n).unwrap();
        let v = RealField::constant(g, 1.0);
        let u = ComplexField::from_fn(g, bump);
        let a = VectorPotentialField::from_fn(g, base_a);
        let w = ComplexField::from_fn(g, |x| bump(x) * Complex64::from_polar(1.0, phi(x)));
        let a2 = VectorPotentialField::from_fn(g, |x| {
            let (b, d) = (base_a(x), dphi(x));
            [b[0] - d[0], b[1] - d[1]]
        });
        let e0 = magnetic_energy(&u, &a, &v, 1.0).unwrap();
        let e1 = magnetic_energy(&w, &a2, &v, 1.0).unwrap();
        diffs.push((e1 - e0).abs() / e0);
    }
    let orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    assert!(orders[1..].iter().all(|&o| o >= 1.8), "{diffs:?} {orders:?}");
}

#[test]
fn linear_gauge_change_is_exact_on_the_lattice() {
    let g = Grid2D::centered_box([0.0, 0.0], 4.0, 40).unwrap();
    let v = RealField::constant(g, 1.0);
    let u = random_field(g, 3);
    let a = VectorPotentialField::from_fn(g, |x| [-0.6 * x[1], 0.6 * x[0]]);
    let k = [0.7, -1.1];
    let w = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1]));
    let w = ComplexField::new(g, w.values.iter().zip(&u.values).map(|(p, z)| p * z).collect()).unwrap();
    let a2 = VectorPotentialField::from_fn(g, |x| [-0.6 * x[1] - k[0], 0.6 * x[0] - k[1]]);
    let e0 = magnetic_energy(&u, &a, &v, 1.0).unwrap();
    let e1 = magnetic_energy(&w, &a2, &v, 1.0).unwrap();
    assert!((e0 - e1).abs() <= 1e-12 * e0);
}

#[test]
fn real_positive_modulus_energy_equals_plain_energy() {
    let g = Grid2D::centered_box([0.0, 0.0], 2.0, 20).unwrap();
    let u = ComplexField::from_fn(g, |x| Complex64::new(1.0 + 0.5 * (x[0] * x[1]).sin().abs(), 0.0));
    let zero = RealField::constant(g, 0.0);
    let plain = magnetic_energy(&u, &VectorPotentialField::zeros(g), &zero, 1.0).unwrap();
    let m = modulus_gradient_energy(&u);
    assert!((plain - m).abs() <= 1e-12 * plain);
}

#[test]
fn diamagnetic_inequality_on_seeded_fields() {
    // Calibrated slack: zero. The link form makes the inequality exact
    // (|e^{iθ}a - b| ≥ ||a| - |b|| on every link).
    for seed in 0..10u64 {
        let g = Grid2D::centered_box([0.0, 0.0], 3.0, 24 + 4 * seed as usize).unwrap();
        let u = random_field(g, seed);
        let b = 0.3 + 0.4 * seed as f64;
        let a = VectorPotentialField::from_fn(g, |x| [-0.5 * b * x[1] + x[0] * x[0], 0.5 * b * x[0]]);
        let zero = RealField::constant(g, 0.0);
        let kinetic = magnetic_energy(&u, &a, &zero, 1.0).unwrap();
        let m = modulus_gradient_energy(&u);
        assert!(m <= kinetic, "seed {seed}: {m} > {kinetic}");
    }
}

#[test]
fn grid_mismatch_is_an_error() {
    let g1 = Grid2D::centered_box([0.0, 0.0], 1.0, 8).unwrap();
    let g2 = Grid2D::centered_box([0.0, 0.0], 1.0, 9).unwrap();
    let u = ComplexField::zeros(g1);
    assert!(covariant_gradient(&u, &VectorPotentialField::zeros(g2), 1.0).is_err());
    let v = RealField::constant(g1, 1.0);
    assert!(magnetic_energy(&u, &VectorPotentialField::zeros(g2), &v, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_is_a_quadratic_form(seed in 0u64..1000, re in -3.0f64..3.0, im in -3.0f64..3.0, b in -2.0f64..2.0) {
        let g = Grid2D::centered_box([0.0, 0.0], 2.0, 12).unwrap();
        let u = random_field(g, seed);
        let a = VectorPotentialField::from_fn(g, |x| [-0.5 * b * x[1], 0.5 * b * x[0] + 0.1 * x[1] * x[1]]);
        let v = RealField::from_fn(g, |x| 1.0 + x[0] * x[0]);
        let alpha = Complex64::new(re, im);
        let e = magnetic_energy(&u, &a, &v, 0.7).unwrap();
        let scaled = magnetic_energy(&u.scaled(alpha), &a, &v, 0.7).unwrap();
        prop_assert!((scaled - alpha.norm_sqr() * e).abs() <= 1e-12 * scaled.abs().max(e * alpha.norm_sqr()).max(1e-300));
    }

    #[test]
    fn diamagnetic_inequality_holds(seed in 0u64..1000, b in -5.0f64..5.0, c in -2.0f64..2.0) {
        let g = Grid2D::centered_box([0.1, -0.3], 1.5, 10).unwrap();
        let u = random_field(g, seed);
        let a = VectorPotentialField::from_fn(g, |x| [-0.5 * b * x[1] + c * x[0] * x[1], 0.5 * b * x[0]]);
        let zero = RealField::constant(g, 0.0);
        prop_assert!(modulus_gradient_energy(&u) <= magnetic_energy(&u, &a, &zero, 1.0).unwrap());
    }
}
