use magnls::concentration::{build_reduced_table, ProblemInstance, Rect, ReducedTable, TableOptions};
use magnls::harness::{decay_fit, epsilon_sweep, lorentz_balance, rescale_spike, SweepOptions};
use magnls::limiting::SolverConfig;
use magnls::potential::{FieldPreset, ScalarPotential, ScalarPreset, VectorPotential};
use magnls::{ComplexField, Grid2D};
use num_complex::Complex64;
use std::path::Path;
use std::sync::OnceLock;

fn limiting_opts() -> TableOptions {
    TableOptions {
        grid_n: 128,
        solver: SolverConfig { restarts: 1, ..SolverConfig::default() },
        ..TableOptions::default()
    }
}

fn table() -> &'static ReducedTable {
    static T: OnceLock<ReducedTable> = OnceLock::new();
    T.get_or_init(|| build_reduced_table(4.0, &[0.0, 0.5, 1.0, 1.5], &limiting_opts()).unwrap())
}

fn preset_v(p: ScalarPreset) -> ScalarPotential {
    ScalarPotential::from_preset(&p, Path::new(".")).unwrap()
}

fn preset_a(p: FieldPreset) -> VectorPotential {
    VectorPotential::from_preset(&p, Path::new(".")).unwrap()
}

#[test]
fn decay_fit_recovers_synthetic_rate() {
    let eps = 0.01;
    let g = Grid2D::centered_box([0.3, 0.2], 0.2, 161).unwrap();
    let c = g.center();
    for lam in [0.5, 1.0, 2.0] {
        let u = ComplexField::from_fn(g, |x| {
            let r = (x[0] - c[0]).hypot(x[1] - c[1]);
            Complex64::from_polar((-lam * r / (1.0 + r) / eps).exp(), 3.0 * x[0])
        });
        let (fit, r2) = decay_fit(&u, c, eps, (5.0 * eps, 15.0 * eps)).unwrap();
        assert!((fit - lam).abs() < 1e-9 * lam, "{fit} vs {lam}");
        assert!(r2 > 1.0 - 1e-12);
    }
}

#[test]
fn decay_fit_of_plain_exponential() {
    // e^{-r/ε} fits the model with slope ≈ (1 + r)² on the annulus, so the
    // rate is 1 only once 15ε is small.
    let eps = 0.002;
    let g = Grid2D::centered_box([0.0, 0.0], 0.04, 201).unwrap();
    let u = ComplexField::from_fn(g, |x| Complex64::new((-x[0].hypot(x[1]) / eps).exp(), 0.0));
    let (fit, r2) = decay_fit(&u, [0.0, 0.0], eps, (5.0 * eps, 15.0 * eps)).unwrap();
    assert!((fit - 1.0).abs() < 0.05, "{fit}");
    assert!(r2 > 0.99);
}

#[test]
fn decay_fit_of_constant_is_flat() {
    let g = Grid2D::centered_box([0.0, 0.0], 1.0, 101).unwrap();
    let u = ComplexField::from_fn(g, |_| Complex64::new(0.0, 0.7));
    let (lam, _) = decay_fit(&u, [0.0, 0.0], 0.05, (0.25, 0.75)).unwrap();
    assert!(lam.abs() < 1e-12);
    assert!(decay_fit(&u, [0.0, 0.0], 0.05, (0.25, 0.251)).is_err());
    assert!(decay_fit(&u, [0.0, 0.0], 0.05, (0.5, 0.25)).is_err());
}

#[test]
fn lorentz_force_vanishes_where_both_fields_are_critical() {
    let inst = ProblemInstance::whole(
        Rect::square(1.0),
        ScalarPotential::constant(1.0),
        preset_a(FieldPreset::QuadraticRadial { field: 0.5, curvature: 1.0, center: [0.1, -0.2] }),
        4.0,
    )
    .unwrap();
    let r = lorentz_balance(&inst, [0.1, -0.2], table(), 1e-3, &limiting_opts()).unwrap();
    assert!(r.force_residual < 0.05, "{r:?}");
    assert!(r.grad_c[0].hypot(r.grad_c[1]) < 1e-3 * r.q, "{r:?}");
    assert!(r.q > 0.0);
}

#[test]
fn lorentz_force_of_a_potential_slope_is_reported() {
    let inst = ProblemInstance::whole(
        Rect::square(1.0),
        preset_v(ScalarPreset::Linear { value: 1.0, gradient: [0.2, 0.0], center: [0.0, 0.0] }),
        VectorPotential::constant_field(0.5, [0.0, 0.0]),
        4.0,
    )
    .unwrap();
    let r = lorentz_balance(&inst, [0.0, 0.0], table(), 1e-3, &limiting_opts()).unwrap();
    assert!((r.force_residual - 1.0).abs() < 1e-9, "{r:?}");
    assert!((r.force[0] - 0.2 * r.q).abs() < 1e-9 * r.q && r.force[1].abs() < 1e-12);
    assert!(r.cosine > 0.99);
}

#[test]
fn lorentz_force_points_along_the_concentration_gradient() {
    // ∇C = (1/2)(q ∇V + μ ∇B) by the field and potential derivatives of E.
    let inst = ProblemInstance::whole(
        Rect::square(1.0),
        preset_v(ScalarPreset::QuadraticRadial { value: 1.0, curvature: 0.3, center: [0.0, 0.0] }),
        preset_a(FieldPreset::Linear { field: 0.5, gradient: [0.5, -0.3], center: [0.0, 0.0] }),
        4.0,
    )
    .unwrap();
    let r = lorentz_balance(&inst, [0.4, 0.3], table(), 1e-3, &limiting_opts()).unwrap();
    assert!(r.cosine > 0.95, "{r:?}");
    let half = [0.5 * r.force[0], 0.5 * r.force[1]];
    let err = (r.grad_c[0] - half[0]).hypot(r.grad_c[1] - half[1]) / half[0].hypot(half[1]);
    assert!(err < 0.05, "∇C = {:?}, F/2 = {half:?}", r.grad_c);
}

#[test]
fn lorentz_rejects_points_near_the_boundary() {
    let inst = ProblemInstance::whole(Rect::square(1.0), ScalarPotential::constant(1.0), VectorPotential::zero(), 4.0)
        .unwrap();
    assert!(lorentz_balance(&inst, [0.9995, 0.0], table(), 1e-3, &limiting_opts()).is_err());
    assert!(lorentz_balance(&inst, [0.0, 0.0], table(), 0.0, &limiting_opts()).is_err());
}

#[test]
fn rescaling_a_spike_keeps_its_shape() {
    let a = VectorPotential::constant_field(0.5, [0.0, 0.0]);
    let g = Grid2D::centered_box([0.0, 0.0], 1.0, 199).unwrap();
    let xe = [0.1, 0.05];
    let profile = |y: [f64; 2]| (-(y[0] * y[0] + y[1] * y[1])).exp();
    let modulated = |eps: f64, x: [f64; 2]| {
        let a0 = a.value(xe);
        let d = [x[0] - xe[0], x[1] - xe[1]];
        Complex64::from_polar(profile([d[0] / eps, d[1] / eps]), -(a0[0] * d[0] + a0[1] * d[1]) / (eps * eps))
    };
    let u = ComplexField::from_fn(g, |x| modulated(0.2, x));
    let w = rescale_spike(&u, xe, 0.2, 0.1, &a, &g);
    let want = ComplexField::from_fn(g, |x| modulated(0.1, x));
    let err = w.values.iter().zip(&want.values).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(err < 2e-3, "{err}");
}

fn uniform_field_instance() -> ProblemInstance {
    ProblemInstance::whole(Rect::square(1.2), ScalarPotential::constant(1.0), VectorPotential::constant_field(0.5, [0.0, 0.0]), 4.0)
        .unwrap()
}

#[test]
fn sweep_on_uniform_field_approaches_the_limiting_energy() {
    let inst = uniform_field_instance();
    let opts = SweepOptions { scan_resolution: 9, ..SweepOptions::default() };
    let rep = epsilon_sweep(&inst, table(), &opts).unwrap();
    assert_eq!(rep.eps_values, vec![0.1, 0.07, 0.05]);
    assert_eq!(rep.records.len(), 3);
    assert_eq!(rep.argmin_c, [0.0, 0.0]);
    assert!(rep.all_converged());
    let e = table().energy(0.5).unwrap();
    let last = *rep.energies_scaled.last().unwrap();
    assert!((last - e).abs() < 0.1 * e, "{last} vs {e}");
    for (k, &es) in rep.energies_scaled.iter().enumerate() {
        assert!(es >= rep.target_inf_c * 0.9, "lower bound at ε = {}", rep.eps_values[k]);
    }
    for r in &rep.records {
        assert!(r.peak_offset_over_eps <= 4.0, "{r:?}");
    }
}

#[test]
fn sweep_is_deterministic() {
    let inst = uniform_field_instance();
    let opts = SweepOptions { eps: vec![0.1, 0.08], scan_resolution: 9, limiting_grid_n: 64, ..SweepOptions::default() };
    let t = build_reduced_table(4.0, &[0.0, 1.0], &TableOptions { grid_n: 64, ..limiting_opts() }).unwrap();
    let a = serde_json::to_string(&epsilon_sweep(&inst, &t, &opts).unwrap()).unwrap();
    let b = serde_json::to_string(&epsilon_sweep(&inst, &t, &opts).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_options_are_validated() {
    let inst = uniform_field_instance();
    for bad in [
        SweepOptions { eps: vec![], ..SweepOptions::default() },
        SweepOptions { eps: vec![0.05, 0.1], ..SweepOptions::default() },
        SweepOptions { nodes_per_eps: 0.5, ..SweepOptions::default() },
        SweepOptions { decay_annulus: [5.0, 5.0], ..SweepOptions::default() },
    ] {
        assert!(epsilon_sweep(&inst, table(), &bad).is_err());
    }
}
