//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::shooting::radial_groundstate;
use magnls::concentration::{build_reduced_table, ProblemInstance, Rect, ReducedTable, TableOptions};
use magnls::harness::{epsilon_sweep, invariant_battery, lorentz_balance, BatteryConfig, BatteryReport, SweepOptions};
use magnls::limiting::{
    landau_gauge_potential, minimize_quotient, minimize_quotient_in_gauge, nehari_profile, symmetric_gauge_potential,
    LimitingSpec, QuotientResult, SolverConfig,
};
use magnls::penalized::{make_test_family, off_peak_sup, ray_maximum, PenalizedSpec};
use magnls::potential::{FieldPreset, ScalarPotential, ScalarPreset, VectorPotential};
use magnls::Grid2D;

const N: usize = 128;

struct Run {
    failed: usize,
}

impl Run {
    fn report(&mut self, id: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn error(&mut self, id: &str, e: impl std::fmt::Display) {
        self.report(id, false, format!("error: {e}"));
    }
}

fn solver() -> SolverConfig {
    SolverConfig { restarts: 1, ..SolverConfig::default() }
}

/// Limiting solve on `[-12/√V, 12/√V]²`, so every solve sees the same
/// lattice in units of the decay length `1/√V`.
fn solve(v: f64, b: f64) -> magnls::Result<QuotientResult> {
    let spec = LimitingSpec::new(v, b, 4.0)?;
    let grid = Grid2D::centered_box([0.0, 0.0], 12.0 / v.sqrt(), N)?;
    let r = minimize_quotient(&spec, &grid, &solver(), 0)?;
    if !r.converged {
        return Err(magnls::Error::NotConverged(format!("E({v}, {b}): residual {:.2e}", r.residual)));
    }
    Ok(r)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn quadratic_b_instance() -> magnls::Result<ProblemInstance> {
    ProblemInstance::whole(
        Rect::square(2.0),
        ScalarPotential::from_preset(&ScalarPreset::Constant { value: 1.0 }, Path::new("."))?,
        VectorPotential::from_preset(
            &FieldPreset::QuadraticRadial { field: 0.1, curvature: 1.0, center: [0.0, 0.0] },
            Path::new("."),
        )?,
        4.0,
    )
}

fn table_options() -> TableOptions {
    TableOptions { grid_n: N, solver: solver(), ..TableOptions::default() }
}

fn c1_oracle(run: &mut Run) {
    let t = Instant::now();
    let oracle = radial_groundstate(4.0).energy();
    match solve(1.0, 0.0) {
        Ok(r) => {
            let secs = t.elapsed().as_secs_f64();
            let err = rel(r.energy, oracle);
            run.report(
                "1",
                err <= 0.01 && secs <= 120.0,
                format!("E(1,0) = {:.6}, shooting oracle {oracle:.6}, rel err {err:.4} (tol 0.01), {secs:.1} s (limit 120 s)", r.energy),
            );
        }
        Err(e) => run.error("1", e),
    }
}

fn c2_to_5(run: &mut Run) {
    let tol = solver().tol;
    let e = |v: f64, b: f64| solve(v, b).map(|r| r.energy);
    match (e(1.0, 0.5), e(4.0, 1.0)) {
        (Ok(e1), Ok(e4)) => {
            let err = rel(e4, 4.0 * e1);
            // λ² bookkeeping for the field.
            let companion = e(4.0, 2.0).map(|e42| rel(e42, 4.0 * e1));
            let companion = match companion {
                Ok(c) => format!("companion E(4,2) vs 4 E(1,0.5): rel err {c:.2e} ({})", if c <= 0.02 { "pass" } else { "fail" }),
                Err(err) => format!("companion error: {err}"),
            };
            run.report(
                "2",
                err <= 0.02,
                format!("E(1,0.5) = {e1:.6}, E(4,1) = {e4:.6}, rel dev from factor 4 {err:.4} (tol 0.02); {companion}"),
            );
        }
        (Err(err), _) | (_, Err(err)) => run.error("2", err),
    }

    let gauge = LimitingSpec::new(1.0, 0.5, 4.0).and_then(|s| {
        let g = s.default_grid(N)?;
        let sym = minimize_quotient_in_gauge(&s, &symmetric_gauge_potential(0.5, &g), &solver(), 0)?;
        let lan = minimize_quotient_in_gauge(&s, &landau_gauge_potential(0.5, &g), &solver(), 0)?;
        Ok((sym.energy, lan.energy))
    });
    match gauge {
        Ok((s, l)) => {
            let err = rel(l, s);
            run.report("3", err <= 0.02, format!("symmetric {s:.6}, Landau {l:.6}, rel diff {err:.2e} (tol 0.02)"));
        }
        Err(err) => run.error("3", err),
    }

    match e(1.0, 0.0) {
        Ok(e0) => {
            let mut ok = true;
            let mut parts = Vec::new();
            for b in [0.25, 0.5, 1.0] {
                match e(1.0, b) {
                    Ok(eb) => {
                        let need = 3.0 * tol * (eb + e0);
                        ok &= eb - e0 > need;
                        parts.push(format!("E(1,{b}) - E(1,0) = {:.4} (need > {need:.1e})", eb - e0));
                    }
                    Err(err) => {
                        ok = false;
                        parts.push(format!("b = {b}: {err}"));
                    }
                }
            }
            run.report("4", ok, parts.join("; "));
        }
        Err(err) => run.error("4", err),
    }

    let mut ok = true;
    let mut parts = Vec::new();
    for b in [0.0, 0.5] {
        match (e(1.25, b), e(1.0, b)) {
            (Ok(hi), Ok(lo)) => {
                let need = tol * (hi + lo);
                ok &= hi - lo > need;
                parts.push(format!("E(1.25,{b}) - E(1,{b}) = {:.4} (need > {need:.1e})", hi - lo));
            }
            (Err(err), _) | (_, Err(err)) => {
                ok = false;
                parts.push(format!("b = {b}: {err}"));
            }
        }
    }
    run.report("5", ok, parts.join("; "));
}

fn battery_check(run: &mut Run, id: &str, rep: &BatteryReport, names: &[(&str, f64)]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &(name, tol) in names {
        match rep.results.iter().find(|r| r.name == name) {
            Some(r) => {
                ok &= r.measured <= tol;
                parts.push(format!("{name}: worst {:.2e} (tol {tol:.0e}; {})", r.measured, r.detail));
            }
            None => {
                ok = false;
                parts.push(format!("{name}: missing from the battery"));
            }
        }
    }
    run.report(id, ok, parts.join("; "));
}

fn c6_to_8_and_14(run: &mut Run) {
    let cfg = BatteryConfig::default();
    let first = invariant_battery(&cfg);
    let second = invariant_battery(&cfg);
    match (&first, &second) {
        (Ok(a), Ok(b)) => {
            battery_check(run, "6", a, &[("Nehari identity after rescaling", 1e-10)]);
            battery_check(
                run,
                "7",
                a,
                &[("nonlinearity properties (g1)-(g6)", 1e-12), ("radial derivative of G matches g", 1e-6)],
            );
            battery_check(run, "8", a, &[("coercivity", 0.0)]);
            let ja = serde_json::to_string_pretty(a).unwrap();
            let jb = serde_json::to_string_pretty(b).unwrap();
            run.report(
                "14",
                ja == jb,
                format!("two battery runs: {} bytes each, identical = {}; {} passed, {} failed", ja.len(), ja == jb, a.passed, a.failed),
            );
        }
        (Err(e), _) | (_, Err(e)) => {
            for id in ["6", "7", "8", "14"] {
                run.error(id, e);
            }
        }
    }
}

fn c9(run: &mut Run, inst: &ProblemInstance, table: &ReducedTable) {
    let eps = 0.05;
    let res = (|| -> magnls::Result<(f64, f64)> {
        let inf_c = table.energy(inst.field_at([0.0, 0.0])?)?;
        let ls = LimitingSpec::new(1.0, inst.field_at([0.0, 0.0])?, 4.0)?;
        let prof = minimize_quotient(&ls, &ls.default_grid(N)?, &solver(), 0)?;
        let grid = inst.domain.grid_with_spacing(eps / 8.0)?;
        let u = make_test_family([0.0, 0.0], &prof.profile, eps, inst, &grid)?;
        let spec = PenalizedSpec::new(inst.clone(), [0.0, 0.0], eps)?;
        Ok((ray_maximum(&u, &spec)? / (eps * eps), inf_c))
    })();
    match res {
        Ok((ray, inf_c)) => {
            let excess = (ray - inf_c) / inf_c;
            run.report(
                "9",
                excess <= 0.10,
                format!("ε^-2 sup_t F_ε(t u_test) = {ray:.6} at ε = {eps}, inf C = {inf_c:.6}, excess {excess:.4} (tol 0.10)"),
            );
        }
        Err(e) => run.error("9", e),
    }
}

fn c10_11(run: &mut Run, inst: &ProblemInstance, table: &ReducedTable, started: Instant) {
    let opts = SweepOptions { limiting_solver: solver(), ..SweepOptions::default() };
    let rep = match epsilon_sweep(inst, table, &opts) {
        Ok(r) => r,
        Err(e) => {
            run.error("10", &e);
            run.error("11", e);
            return;
        }
    };
    let secs = started.elapsed().as_secs_f64();
    let target = rep.target_inf_c;
    let gaps: Vec<f64> = rep.energies_scaled.iter().map(|e| (e - target).abs() / target).collect();
    let last = *gaps.last().unwrap();
    let a_ok = last <= 0.10 && gaps.windows(2).all(|w| w[1] <= w[0]) && rep.all_converged();
    let b_ok = rep.records.iter().all(|r| r.peak_offset_over_eps <= 4.0);
    let c_ok = rep.off_peak_sups.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    let offsets: Vec<f64> = rep.records.iter().map(|r| r.peak_offset_over_eps).collect();
    run.report(
        "10a",
        a_ok,
        format!(
            "ε = {:?}: ε^-2 G_ε(u_ε) = [{}], inf C = {target:.6}, rel gaps [{}] (tol 0.10, monotone), converged = {}",
            rep.eps_values,
            fmt(&rep.energies_scaled),
            fmt(&gaps),
            rep.all_converged()
        ),
    );
    run.report("10b", b_ok, format!("|x_ε - argmin C| / ε = [{}] (tol 4), argmin C = {:?}", fmt(&offsets), rep.argmin_c));
    // The ε → 0 limit of the off-peak sup is that of the Nehari-normalized
    // limiting groundstate at (V, B)(x*).
    let limit = (|| -> magnls::Result<f64> {
        let x = rep.argmin_c;
        let ls = LimitingSpec::new(inst.v.value(x), inst.field_at(x)?, 4.0)?;
        let grid = ls.default_grid(N)?;
        let r = minimize_quotient(&ls, &grid, &solver(), 0)?;
        let v = nehari_profile(&r, &ls, &symmetric_gauge_potential(ls.b_star, &grid))?;
        let pk = v.argmax_modulus();
        Ok(off_peak_sup(&v, grid.node(pk % grid.n[0], pk / grid.n[0]), opts.off_peak_radius, 1.0))
    })()
    .map_or_else(|e| e.to_string(), |l| format!("{l:.4e}"));
    run.report(
        "10c",
        c_ok,
        format!("off-peak sup at R = 10: [{}] (must decrease); limiting-profile value {limit}", fmt(&rep.off_peak_sups)),
    );
    run.report("10t", secs <= 900.0, format!("table build and sweep took {secs:.0} s (limit 900 s)"));

    let rec = rep.records.last().unwrap();
    match (rec.decay_rate, rec.decay_r2) {
        (Some(l), Some(r2)) => run.report(
            "11",
            l > 0.0 && r2 >= 0.9,
            format!("ε = {}: fitted rate {l:.4} (> 0), r² = {r2:.4} (>= 0.9) on [5ε, 15ε]", rec.eps),
        ),
        _ => run.error("11", "decay fit had too few usable nodes"),
    }
}

fn c12(run: &mut Run, table: &ReducedTable) {
    let res = (|| -> magnls::Result<(f64, f64)> {
        let x0 = [0.1, -0.2];
        let critical = ProblemInstance::whole(
            Rect::square(1.0),
            ScalarPotential::from_preset(&ScalarPreset::QuadraticRadial { value: 1.0, curvature: 0.5, center: x0 }, Path::new("."))?,
            VectorPotential::from_preset(&FieldPreset::QuadraticRadial { field: 0.5, curvature: 1.0, center: x0 }, Path::new("."))?,
            4.0,
        )?;
        let at_critical = lorentz_balance(&critical, x0, table, 1e-3, &table_options())?;
        let probe = ProblemInstance::whole(
            Rect::square(1.0),
            ScalarPotential::from_preset(&ScalarPreset::QuadraticRadial { value: 1.0, curvature: 0.3, center: [0.0, 0.0] }, Path::new("."))?,
            VectorPotential::from_preset(
                &FieldPreset::Linear { field: 0.5, gradient: [0.5, -0.3], center: [0.0, 0.0] },
                Path::new("."),
            )?,
            4.0,
        )?;
        let at_probe = lorentz_balance(&probe, [0.4, 0.3], table, 1e-3, &table_options())?;
        Ok((at_critical.force_residual, at_probe.cosine))
    })();
    match res {
        Ok((residual, cosine)) => run.report(
            "12",
            residual < 0.05 && cosine > 0.95,
            format!("force residual at common critical point {residual:.2e} (tol 0.05); probe cos(∇C, F) = {cosine:.4} (> 0.95)"),
        ),
        Err(e) => run.error("12", e),
    }
}

fn c13(run: &mut Run) {
    let opts = TableOptions { max_jump: f64::INFINITY, ..table_options() };
    match build_reduced_table(4.0, &[0.0, 0.25, 0.5, 0.75, 1.0], &opts) {
        Ok(t) => {
            let jump = t.max_relative_jump();
            let es: Vec<String> = t.nodes.iter().map(|n| format!("{:.4}", n.e)).collect();
            run.report("13", jump <= 0.15, format!("e(b) = [{}], largest neighbouring jump {jump:.4} (tol 0.15)", es.join(", ")));
        }
        Err(e) => run.error("13", e),
    }
}

fn main() -> ExitCode {
    let mut run = Run { failed: 0 };
    c1_oracle(&mut run);
    c2_to_5(&mut run);
    c6_to_8_and_14(&mut run);

    let started = Instant::now();
    let inst = match quadratic_b_instance() {
        Ok(i) => i,
        Err(e) => {
            run.error("9-12", e);
            return ExitCode::FAILURE;
        }
    };
    // V ≡ 1 and B = 0.1 + |x|² reach b = 8.1 in the corners of Ω.
    match build_reduced_table(4.0, &[0.0, 0.5, 1.0, 2.0, 4.0, 8.5], &table_options()) {
        Ok(table) => {
            c9(&mut run, &inst, &table);
            c10_11(&mut run, &inst, &table, started);
            c12(&mut run, &table);
        }
        Err(e) => {
            for id in ["9", "10", "11", "12"] {
                run.error(id, &e);
            }
        }
    }
    c13(&mut run);

    println!("{} criteria lines failed", run.failed);
    if run.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
