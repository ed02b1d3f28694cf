//! `magnls`: limiting tables, concentration maps, ε-sweeps and the invariant
//! battery from the command line.
//!
//! Exit codes: 0 success, 1 runtime or solver failure, 2 configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use magnls::concentration::{build_reduced_table, required_b_range, scan_concentration, ReducedTable, TableNode};
use magnls::config::RunConfig;
use magnls::harness::{epsilon_sweep, invariant_battery};
use magnls::io;
use magnls::limiting::{charge_and_moment, minimize_quotient, LimitingSpec};
use magnls::ComplexField;
use serde_json::json;

#[derive(Parser)]
#[command(name = "magnls", version, about = "Semiclassical magnetic NLS groundstates and spike concentration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the limiting problem E(V*, b) at the requested fields and write a table.
    Limiting(LimitingArgs),
    /// Scan the concentration function C = E(V, B) over the concentration region.
    Map(MapArgs),
    /// Solve the penalized problem along a decreasing list of ε.
    Sweep(SweepArgs),
    /// Run the invariant battery; exit 0 iff every invariant holds.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` of the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every randomized step (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Print the JSON report on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct LimitingArgs {
    #[command(flatten)]
    common: Common,
    /// Constant potential V* > 0.
    #[arg(long)]
    vstar: Option<f64>,
    /// Comma-separated field strengths.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b: Option<Vec<f64>>,
    /// Nonlinearity exponent, p > 2.
    #[arg(long)]
    p: Option<f64>,
    /// Interior nodes per axis of each solve.
    #[arg(long)]
    grid_n: Option<usize>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    common: Common,
    /// Existing table JSON (overrides `table.path` of the config).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Samples per axis of the scan.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Comma-separated, strictly decreasing ε values.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn runtime_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

type Outcome = Result<(), Failure>;

/// Loaded configuration with the directories relative paths refer to.
struct Setup {
    config: RunConfig,
    base: PathBuf,
    out: PathBuf,
    json: bool,
}

fn setup(common: &Common) -> Result<Setup, Failure> {
    let (mut config, base) = match &common.config {
        Some(path) => {
            let c = RunConfig::load(path).map_err(config_error)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (c, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if let Some(s) = common.seed {
        config.seed = s;
        config.sweep.seed = s;
        config.verify.seed = s;
        config.table.options.seed = s;
    }
    config.validate().map_err(config_error)?;
    let out = match &common.out {
        Some(o) => o.clone(),
        None => config.output_path(&base),
    };
    Ok(Setup { config, base, out, json: common.json })
}

fn write(out: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(runtime_error)?;
    let path = out.join(name);
    fs::write(&path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime_error)?;
    Ok(path)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn emit(setup: &Setup, name: &str, report: &serde_json::Value) -> Outcome {
    let text = pretty(report);
    let path = write(&setup.out, name, &text)?;
    if setup.json {
        print!("{text}");
    } else {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_limiting(args: &LimitingArgs) -> Outcome {
    let mut s = setup(&args.common)?;
    let lc = &mut s.config.limiting;
    if let Some(v) = args.vstar {
        lc.vstar = v;
    }
    if let Some(b) = &args.b {
        lc.b = b.clone();
    }
    if let Some(p) = args.p {
        lc.p = p;
    }
    if let Some(n) = args.grid_n {
        lc.grid_n = n;
    }
    s.config.validate().map_err(config_error)?;
    let lc = s.config.limiting.clone();
    if lc.b.is_empty() {
        return Err(config_error(anyhow!("no field values requested")));
    }

    // Each node is solved at (V*, b); the table stores the reduced values
    // e(b / V*) = V*^{-2/(p-2)} E(V*, b) that the concentration map reads.
    let scale = lc.vstar.powf(2.0 / (lc.p - 2.0));
    let mut rows = Vec::new();
    let mut nodes: Vec<TableNode> = Vec::new();
    for &b in &lc.b {
        let spec = LimitingSpec::new(lc.vstar, b, lc.p).map_err(config_error)?;
        let grid = spec.default_grid(lc.grid_n).map_err(config_error)?;
        let r = minimize_quotient(&spec, &grid, &lc.solver, s.config.seed)
            .with_context(|| format!("limiting solve at V* = {}, b = {b}", lc.vstar))
            .map_err(runtime_error)?;
        if !r.converged {
            return Err(runtime_error(anyhow!(
                "limiting solve at V* = {}, b = {b} did not converge: residual {:.3e} after {} iterations",
                lc.vstar,
                r.residual,
                r.iterations
            )));
        }
        let cm = charge_and_moment(&r, &spec).map_err(runtime_error)?;
        rows.push(json!({
            "b": b,
            "energy": r.energy,
            "s_min": r.s_min,
            "charge": cm.q,
            "moment": cm.mu,
            "iterations": r.iterations,
            "residual": r.residual,
            "boundary_ratio": r.boundary_ratio,
        }));
        nodes.push(TableNode {
            b: (b / lc.vstar).abs(),
            e: r.energy / scale,
            s_min: r.s_min,
            iterations: r.iterations,
            residual: r.residual,
            boundary_ratio: r.boundary_ratio,
        });
    }
    nodes.sort_by(|a, b| a.b.total_cmp(&b.b));
    nodes.dedup_by(|a, b| a.b == b.b);
    let half_width = LimitingSpec::new(lc.vstar, 0.0, lc.p).map_err(config_error)?.box_half_width() * lc.vstar.sqrt();
    let table = ReducedTable { p: lc.p, grid_n: lc.grid_n, half_width, nodes };
    write(&s.out, "table.json", io::table_to_json(&table))?;
    write(&s.out, "table.csv", io::table_csv(&table))?;
    let report = json!({
        "command": "limiting",
        "version": env!("CARGO_PKG_VERSION"),
        "config": s.config,
        "nodes": rows,
    });
    emit(&s, "limiting.json", &report)
}

/// Load the table named by the flag or the config, or build one covering
/// `need` from the configured field grid.
fn obtain_table(s: &Setup, flag: Option<&PathBuf>, need: (f64, f64)) -> Result<(ReducedTable, Option<PathBuf>), Failure> {
    let path = flag.cloned().or_else(|| s.config.table.path.as_ref().map(|p| s.base.join(p)));
    if let Some(path) = path {
        let t = io::read_table(&path).map_err(config_error)?;
        return Ok((t, Some(path)));
    }
    let mut grid = s.config.table.b_grid.clone();
    if need.0 < grid[0] {
        grid.insert(0, 0.0);
    }
    let last = *grid.last().expect("validated nonempty");
    if need.1 > last {
        // Round the upper end up to a multiple of the last spacing.
        let step = if grid.len() > 1 { last - grid[grid.len() - 2] } else { 0.5 };
        grid.push(last + ((need.1 - last) / step).ceil().max(1.0) * step);
    }
    let p = s.config.instance.as_ref().map_or(s.config.limiting.p, |i| i.p);
    let t = build_reduced_table(p, &grid, &s.config.table.options)
        .context("building the reduced table")
        .map_err(runtime_error)?;
    Ok((t, None))
}

fn coverage(t: &ReducedTable, need: (f64, f64)) -> Outcome {
    let (lo, hi) = t.range();
    if need.0 < lo - 1e-12 * (1.0 + hi) || need.1 > hi + 1e-12 * (1.0 + hi) {
        return Err(runtime_error(anyhow!(
            "table covers b in [{lo}, {hi}] but this instance needs b in [{}, {}]",
            need.0,
            need.1
        )));
    }
    Ok(())
}

fn cmd_map(args: &MapArgs) -> Outcome {
    let mut s = setup(&args.common)?;
    if let Some(r) = args.resolution {
        s.config.map.resolution = r;
    }
    s.config.validate().map_err(config_error)?;
    let inst = s.config.instance(&s.base).map_err(config_error)?;
    let res = s.config.map.resolution;
    let need = required_b_range(&inst, res).map_err(config_error)?;
    let (table, from) = obtain_table(&s, args.table.as_ref(), need)?;
    coverage(&table, need)?;
    let map = scan_concentration(&inst, res, &table).map_err(runtime_error)?;
    write(&s.out, "map.csv", io::map_csv(&map))?;
    write(&s.out, "map.pgm", io::map_pgm(&map).map_err(runtime_error)?)?;
    if from.is_none() {
        write(&s.out, "table.json", io::table_to_json(&table))?;
    }
    let report = json!({
        "command": "map",
        "version": env!("CARGO_PKG_VERSION"),
        "config": s.config,
        "table": { "source": from.map(|p| p.display().to_string()), "range": table.range(), "nodes": table.nodes.len() },
        "resolution": map.resolution,
        "argmin_index": map.argmin_index,
        "argmin_point": map.argmin_point,
        "argmin_value": map.argmin_value,
        "boundary_min": map.boundary_min,
        "boundary_hypothesis": map.boundary_hypothesis,
    });
    emit(&s, "map.json", &report)
}

fn field_dumps(s: &Setup, k: usize, u: &ComplexField) -> Outcome {
    write(&s.out, &format!("field_{k}.csv"), io::field_csv(u))?;
    write(&s.out, &format!("field_{k}.pgm"), io::modulus_pgm(u).map_err(runtime_error)?)?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Outcome {
    let mut s = setup(&args.common)?;
    if let Some(e) = &args.eps {
        s.config.sweep.eps = e.clone();
    }
    s.config.validate().map_err(config_error)?;
    let inst = s.config.instance(&s.base).map_err(config_error)?;
    let opts = s.config.sweep.clone();
    let need = required_b_range(&inst, opts.scan_resolution).map_err(config_error)?;
    let (table, from) = obtain_table(&s, args.table.as_ref(), need)?;
    coverage(&table, need)?;
    if from.is_none() {
        write(&s.out, "table.json", io::table_to_json(&table))?;
    }
    let base = json!({
        "command": "sweep",
        "version": env!("CARGO_PKG_VERSION"),
        "config": s.config,
    });
    match epsilon_sweep(&inst, &table, &opts) {
        Ok(rep) => {
            for (k, u) in rep.fields.iter().enumerate() {
                field_dumps(&s, k, u)?;
            }
            let mut report = base;
            report["report"] = serde_json::to_value(&rep).expect("report serializes");
            emit(&s, "sweep.json", &report)?;
            if rep.all_converged() {
                Ok(())
            } else {
                let bad: Vec<String> = rep.records.iter().filter(|r| !r.converged).map(|r| r.eps.to_string()).collect();
                Err(runtime_error(anyhow!("penalized solve did not converge at ε = {}", bad.join(", "))))
            }
        }
        Err(e) => {
            let mut report = base;
            report["error"] = json!(e.to_string());
            emit(&s, "sweep.json", &report)?;
            Err(runtime_error(e))
        }
    }
}

fn cmd_verify(args: &VerifyArgs) -> Outcome {
    let s = setup(&args.common)?;
    let rep = invariant_battery(&s.config.verify).map_err(config_error)?;
    let text = pretty(&serde_json::to_value(&rep).expect("report serializes"));
    if s.json {
        print!("{text}");
    } else {
        for r in &rep.results {
            println!(
                "{} [{}] {}: {:.3e} (threshold {:.1e}) {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.module,
                r.name,
                r.measured,
                r.threshold,
                r.detail
            );
        }
        println!("{} passed, {} failed", rep.passed, rep.failed);
    }
    if args.common.out.is_some() || args.common.config.is_some() {
        write(&s.out, "verify.json", &text)?;
    }
    if rep.all_passed() {
        Ok(())
    } else {
        let names: Vec<&str> = rep.failures().map(|r| r.name.as_str()).collect();
        Err(runtime_error(anyhow!("violated invariants: {}", names.join("; "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Limiting(a) => cmd_limiting(a),
        Command::Map(a) => cmd_map(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
