//! Concentration function `C(x) = E(V(x), B(x))`.
//!
//! In two dimensions the limiting energy satisfies
//! `E(V, B) = V^{2/(p-2)} e(B / V)` with `e(b) = E(1, b)`, so one table of
//! limiting solves over `b` serves every point of the domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, RealField, VectorPotentialField};
use crate::limiting::{check_exponent, minimize_quotient, LimitingSpec, SolverConfig};
use crate::potential::{ScalarPotential, VectorPotential};

/// Closed axis-aligned rectangle `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let r = Self { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn square(half: f64) -> Self {
        Self {
            min: [-half, -half],
            max: [half, half],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..2).all(|d| self.min[d].is_finite() && self.max[d].is_finite() && self.min[d] < self.max[d]);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate rectangle {:?}..{:?}", self.min, self.max)))
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        (0..2).all(|d| x[d] >= self.min[d] && x[d] <= self.max[d])
    }

    pub fn contains_open(&self, x: [f64; 2]) -> bool {
        (0..2).all(|d| x[d] > self.min[d] && x[d] < self.max[d])
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn diameter(&self) -> f64 {
        (self.max[0] - self.min[0]).hypot(self.max[1] - self.min[1])
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    /// Distance from an interior point to the boundary.
    pub fn inner_distance(&self, x: [f64; 2]) -> f64 {
        (0..2)
            .map(|d| (x[d] - self.min[d]).min(self.max[d] - x[d]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Dirichlet grid on this rectangle with spacing at most `h`.
    pub fn grid_with_spacing(&self, h: f64) -> Result<Grid2D> {
        let n = |d: usize| ((self.max[d] - self.min[d]) / h).ceil() as usize - 1;
        Grid2D::new(self.min, [self.max[0] - self.min[0], self.max[1] - self.min[1]], [n(0), n(1)])
    }
}

/// Default curl step: `1e-4 · diam Ω`.
pub fn default_curl_step(domain: &Rect) -> f64 {
    1e-4 * domain.diameter()
}

/// Domain `Ω`, concentration region `Λ ⊆ Ω` (a union of rectangles),
/// potentials and exponent.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub domain: Rect,
    pub lambda: Vec<Rect>,
    pub v: ScalarPotential,
    pub a: VectorPotential,
    pub p: f64,
    pub h_curl: f64,
}

impl ProblemInstance {
    pub fn new(domain: Rect, lambda: Vec<Rect>, v: ScalarPotential, a: VectorPotential, p: f64) -> Result<Self> {
        let h_curl = default_curl_step(&domain);
        let inst = Self {
            domain,
            lambda,
            v,
            a,
            p,
            h_curl,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Instance with `Λ = Ω`.
    pub fn whole(domain: Rect, v: ScalarPotential, a: VectorPotential, p: f64) -> Result<Self> {
        Self::new(domain, vec![domain], v, a, p)
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        self.domain.validate()?;
        if self.lambda.is_empty() {
            return Err(Error::InvalidParameter("the concentration region is empty".into()));
        }
        for r in &self.lambda {
            r.validate()?;
            if !self.domain.contains_rect(r) {
                return Err(Error::InvalidParameter(format!(
                    "region rectangle {:?}..{:?} is not inside the domain",
                    r.min, r.max
                )));
            }
        }
        if !(self.h_curl > 0.0) {
            return Err(Error::InvalidParameter("curl step must be positive".into()));
        }
        for potential in [&self.v] {
            if let ScalarPotential::Sampled(s) = potential {
                if !s.covers(self.domain.min, self.domain.max) {
                    return Err(Error::InvalidParameter("sampled V does not cover the domain".into()));
                }
            }
        }
        if let VectorPotential::Sampled(s) = &self.a {
            if !s.covers(self.domain.min, self.domain.max) {
                return Err(Error::InvalidParameter("sampled A does not cover the domain".into()));
            }
        }
        let (points, _) = self.lambda_samples(64)?;
        let inf = points.iter().map(|&x| self.v.value(x)).fold(f64::INFINITY, f64::min);
        if !(inf > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "V must be positive on the concentration region, sampled infimum is {inf}"
            )));
        }
        Ok(())
    }

    pub fn in_lambda_closed(&self, x: [f64; 2]) -> bool {
        self.lambda.iter().any(|r| r.contains(x))
    }

    /// Interior of the union of rectangles.
    pub fn in_lambda(&self, x: [f64; 2]) -> bool {
        if self.lambda.iter().any(|r| r.contains_open(x)) {
            return true;
        }
        let d = 1e-9 * self.domain.diameter();
        [[d, 0.0], [-d, 0.0], [0.0, d], [0.0, -d], [d, d], [-d, -d], [d, -d], [-d, d]]
            .iter()
            .all(|o| self.in_lambda_closed([x[0] + o[0], x[1] + o[1]]))
    }

    /// Bounding box of `Λ`.
    pub fn lambda_bounds(&self) -> Rect {
        let mut b = self.lambda[0];
        for r in &self.lambda[1..] {
            for d in 0..2 {
                b.min[d] = b.min[d].min(r.min[d]);
                b.max[d] = b.max[d].max(r.max[d]);
            }
        }
        b
    }

    /// Uniform lattice of `resolution` points per axis over the bounding box
    /// of `Λ`, restricted to the closed region; returns the points and their
    /// lattice indices, in row-major order with `i` fastest.
    pub fn lambda_samples(&self, resolution: usize) -> Result<SamplePoints> {
        if resolution < 2 {
            return Err(Error::InvalidParameter("need at least 2 samples per axis".into()));
        }
        let b = self.lambda_bounds();
        let coord = |d: usize, i: usize| {
            if i + 1 == resolution {
                b.max[d]
            } else {
                b.min[d] + (b.max[d] - b.min[d]) * i as f64 / (resolution - 1) as f64
            }
        };
        let mut pts = Vec::new();
        let mut idx = Vec::new();
        for j in 0..resolution {
            for i in 0..resolution {
                let x = [coord(0, i), coord(1, j)];
                if self.in_lambda_closed(x) {
                    pts.push(x);
                    idx.push([i, j]);
                }
            }
        }
        Ok((pts, idx))
    }

    pub fn field_at(&self, x: [f64; 2]) -> Result<f64> {
        curl_at(&self.a, &self.domain, x, self.h_curl)
    }

    pub fn sample_v(&self, grid: &Grid2D) -> RealField {
        RealField::from_fn(*grid, |x| self.v.value(x))
    }

    pub fn sample_a(&self, grid: &Grid2D) -> VectorPotentialField {
        VectorPotentialField::from_fn(*grid, |x| self.a.value(x))
    }

    /// Infimum of `V` over the sampled closed region.
    pub fn inf_v_lambda(&self, resolution: usize) -> Result<f64> {
        let (pts, _) = self.lambda_samples(resolution)?;
        Ok(pts.iter().map(|&x| self.v.value(x)).fold(f64::INFINITY, f64::min))
    }
}

/// `B(x) = ∂₁A₂ - ∂₂A₁`: exact when the potential knows its curl, central
/// differences with step `h_curl` otherwise.
pub fn curl_at(a: &VectorPotential, domain: &Rect, x: [f64; 2], h_curl: f64) -> Result<f64> {
    if let Some(b) = a.exact_field(x) {
        return Ok(b);
    }
    let stencil = [
        [x[0] - h_curl, x[1]],
        [x[0] + h_curl, x[1]],
        [x[0], x[1] - h_curl],
        [x[0], x[1] + h_curl],
    ];
    if stencil.iter().any(|&s| !domain.contains(s)) {
        return Err(Error::Domain(format!("curl stencil at {x:?} with step {h_curl} leaves the domain")));
    }
    let j = a.jacobian(x, h_curl);
    let b = j[1][0] - j[0][1];
    if b.is_finite() {
        Ok(b)
    } else {
        Err(Error::Domain(format!("vector potential is undefined near {x:?}")))
    }
}

/// One limiting solve of the reduced table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableNode {
    pub b: f64,
    pub e: f64,
    pub s_min: f64,
    pub iterations: usize,
    pub residual: f64,
    pub boundary_ratio: f64,
}

/// Piecewise-linear table of `e(b) = E(1, b)` for `b ≥ 0`, extended to
/// negative fields by `e(-b) = e(b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedTable {
    pub p: f64,
    pub grid_n: usize,
    pub half_width: f64,
    pub nodes: Vec<TableNode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableOptions {
    /// Interior nodes per axis of each limiting solve.
    pub grid_n: usize,
    pub solver: SolverConfig,
    pub seed: u64,
    /// Refine until neighbouring relative jumps fall below this.
    pub max_jump: f64,
    pub max_nodes: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            grid_n: 128,
            solver: SolverConfig::default(),
            seed: 0,
            max_jump: 0.05,
            max_nodes: 64,
        }
    }
}

fn solve_node(p: f64, b: f64, opts: &TableOptions) -> Result<TableNode> {
    let spec = LimitingSpec::new(1.0, b, p)?;
    let grid = spec.default_grid(opts.grid_n)?;
    let r = minimize_quotient(&spec, &grid, &opts.solver, opts.seed)?;
    if !r.converged {
        return Err(Error::NotConverged(format!(
            "table node b = {b}: residual {:.3e} after {} iterations",
            r.residual, r.iterations
        )));
    }
    Ok(TableNode {
        b,
        e: r.energy,
        s_min: r.s_min,
        iterations: r.iterations,
        residual: r.residual,
        boundary_ratio: r.boundary_ratio,
    })
}

fn solve_nodes(p: f64, bs: &[f64], opts: &TableOptions) -> Result<Vec<TableNode>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(bs.len().max(1));
    if workers <= 1 {
        return bs.iter().map(|&b| solve_node(p, b, opts)).collect();
    }
    let chunk = bs.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = bs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|&b| solve_node(p, b, opts)).collect::<Vec<_>>()))
            .collect();
        let mut out = Vec::with_capacity(bs.len());
        for h in handles {
            for r in h.join().expect("table worker panicked") {
                out.push(r?);
            }
        }
        Ok(out)
    })
}

/// Solve the limiting problem at every node of `b_grid`, then insert
/// midpoints wherever neighbouring energies differ by more than
/// `opts.max_jump` relatively.
pub fn build_reduced_table(p: f64, b_grid: &[f64], opts: &TableOptions) -> Result<ReducedTable> {
    check_exponent(p)?;
    opts.solver.validate()?;
    if b_grid.is_empty() {
        return Err(Error::InvalidParameter("empty b grid".into()));
    }
    if b_grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::InvalidParameter("table fields must be finite and nonnegative".into()));
    }
    if b_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("b grid must be strictly increasing".into()));
    }
    if !(opts.max_jump > 0.0) {
        return Err(Error::InvalidParameter("max_jump must be positive".into()));
    }
    let mut nodes = solve_nodes(p, b_grid, opts)?;
    loop {
        let mids: Vec<f64> = nodes
            .windows(2)
            .filter(|w| relative_jump(w[0].e, w[1].e) > opts.max_jump)
            .map(|w| 0.5 * (w[0].b + w[1].b))
            .collect();
        if mids.is_empty() {
            break;
        }
        if nodes.len() + mids.len() > opts.max_nodes {
            return Err(Error::NotConverged(format!(
                "table refinement needs more than {} nodes",
                opts.max_nodes
            )));
        }
        nodes.extend(solve_nodes(p, &mids, opts)?);
        nodes.sort_by(|a, b| a.b.partial_cmp(&b.b).expect("finite"));
    }
    let spec = LimitingSpec::new(1.0, 0.0, p)?;
    Ok(ReducedTable {
        p,
        grid_n: opts.grid_n,
        half_width: spec.box_half_width(),
        nodes,
    })
}

pub fn relative_jump(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().min(b.abs())
}

impl ReducedTable {
    /// Structural checks for tables read from disk.
    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        if self.nodes.is_empty() {
            return Err(Error::Parse("table has no nodes".into()));
        }
        for n in &self.nodes {
            if !(n.b.is_finite() && n.b >= 0.0 && n.e.is_finite() && n.e > 0.0) {
                return Err(Error::Parse(format!("invalid table node b = {}, e = {}", n.b, n.e)));
            }
        }
        if self.nodes.windows(2).any(|w| w[0].b >= w[1].b) {
            return Err(Error::Parse("table nodes must be strictly increasing in b".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0].b, self.nodes[self.nodes.len() - 1].b)
    }

    /// Largest relative jump between neighbouring nodes.
    pub fn max_relative_jump(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| relative_jump(w[0].e, w[1].e))
            .fold(0.0, f64::max)
    }

    /// `e(b)` by linear interpolation in `|b|`.
    pub fn energy(&self, b: f64) -> Result<f64> {
        let x = b.abs();
        let (lo, hi) = self.range();
        let tol = 1e-12 * (1.0 + hi);
        if !(x >= lo - tol && x <= hi + tol) {
            return Err(Error::TableRange { requested: b, lo, hi });
        }
        let x = x.clamp(lo, hi);
        let k = self.nodes.partition_point(|n| n.b <= x);
        if k == 0 {
            return Ok(self.nodes[0].e);
        }
        if k == self.nodes.len() {
            return Ok(self.nodes[k - 1].e);
        }
        let (a, c) = (&self.nodes[k - 1], &self.nodes[k]);
        let t = (x - a.b) / (c.b - a.b);
        Ok(a.e + t * (c.e - a.e))
    }
}

/// `C(x) = V(x)^{2/(p-2)} e(B(x)/V(x))`.
pub fn concentration_at(x: [f64; 2], instance: &ProblemInstance, table: &ReducedTable) -> Result<f64> {
    if instance.p != table.p {
        return Err(Error::InvalidParameter(format!(
            "table exponent {} does not match instance exponent {}",
            table.p, instance.p
        )));
    }
    let v = instance.v.value(x);
    let b = instance.field_at(x)?;
    reduced_concentration(v, b, table)
}

fn reduced_concentration(v: f64, b: f64, table: &ReducedTable) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("potential must be positive, got {v}")));
    }
    let p = table.p;
    Ok(v.powf(2.0 / (p - 2.0)) * table.energy(b / v)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationMap {
    pub resolution: usize,
    pub sample_points: Vec<[f64; 2]>,
    /// Lattice index of each sample.
    pub sample_index: Vec<[usize; 2]>,
    pub v_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub values: Vec<f64>,
    /// Position of the minimum in `values`; the first one on ties.
    pub argmin_index: usize,
    pub argmin_point: [f64; 2],
    pub argmin_value: f64,
    /// Minimum over the samples on the boundary of the region.
    pub boundary_min: f64,
    /// `inf_∂Λ C > inf_Λ C` on the samples.
    pub boundary_hypothesis: bool,
}

/// Evaluate `C` on a uniform `resolution × resolution` sample of `Λ`.
/// Sample points and their lattice indices.
pub type SamplePoints = (Vec<[f64; 2]>, Vec<[usize; 2]>);

type Samples = (Vec<[f64; 2]>, Vec<[usize; 2]>, Vec<f64>, Vec<f64>);

fn sample_fields(instance: &ProblemInstance, resolution: usize) -> Result<Samples> {
    let (points, index) = instance.lambda_samples(resolution)?;
    let mut v_values = Vec::with_capacity(points.len());
    let mut b_values = Vec::with_capacity(points.len());
    for &x in &points {
        let v = instance.v.value(x);
        if !(v > 0.0) {
            return Err(Error::Domain(format!("potential must be positive, got {v} at {x:?}")));
        }
        v_values.push(v);
        b_values.push(instance.field_at(x)?);
    }
    Ok((points, index, v_values, b_values))
}

fn reduced_range(v: &[f64], b: &[f64]) -> (f64, f64) {
    v.iter()
        .zip(b)
        .map(|(v, b)| (b / v).abs())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// Range of `|B/V|` a scan at `resolution` will look up in the table.
pub fn required_b_range(instance: &ProblemInstance, resolution: usize) -> Result<(f64, f64)> {
    if resolution < 8 {
        return Err(Error::InvalidParameter(format!("scan resolution must be at least 8, got {resolution}")));
    }
    let (_, _, v, b) = sample_fields(instance, resolution)?;
    Ok(reduced_range(&v, &b))
}

pub fn scan_concentration(instance: &ProblemInstance, resolution: usize, table: &ReducedTable) -> Result<ConcentrationMap> {
    if resolution < 8 {
        return Err(Error::InvalidParameter(format!("scan resolution must be at least 8, got {resolution}")));
    }
    if instance.p != table.p {
        return Err(Error::InvalidParameter(format!(
            "table exponent {} does not match instance exponent {}",
            table.p, instance.p
        )));
    }
    let (points, index, v_values, b_values) = sample_fields(instance, resolution)?;
    let needed = reduced_range(&v_values, &b_values);
    let (lo, hi) = table.range();
    if needed.0 < lo - 1e-12 * (1.0 + hi) || needed.1 > hi + 1e-12 * (1.0 + hi) {
        return Err(Error::TableCoverage {
            need_lo: needed.0,
            need_hi: needed.1,
            lo,
            hi,
        });
    }
    let values = v_values
        .iter()
        .zip(&b_values)
        .map(|(&v, &b)| reduced_concentration(v, b, table))
        .collect::<Result<Vec<f64>>>()?;
    let mut argmin_index = 0;
    for (k, c) in values.iter().enumerate() {
        if *c < values[argmin_index] {
            argmin_index = k;
        }
    }
    let on_boundary = |k: usize| {
        let [i, j] = index[k];
        if i == 0 || j == 0 || i + 1 == resolution || j + 1 == resolution {
            return true;
        }
        let b = instance.lambda_bounds();
        let step = [
            (b.max[0] - b.min[0]) / (resolution - 1) as f64,
            (b.max[1] - b.min[1]) / (resolution - 1) as f64,
        ];
        let x = points[k];
        [[step[0], 0.0], [-step[0], 0.0], [0.0, step[1]], [0.0, -step[1]]]
            .iter()
            .any(|o| !instance.in_lambda_closed([x[0] + o[0], x[1] + o[1]]))
    };
    let boundary_min = (0..values.len())
        .filter(|&k| on_boundary(k))
        .map(|k| values[k])
        .fold(f64::INFINITY, f64::min);
    let argmin_value = values[argmin_index];
    Ok(ConcentrationMap {
        resolution,
        argmin_point: points[argmin_index],
        sample_points: points,
        sample_index: index,
        v_values,
        b_values,
        values,
        argmin_index,
        argmin_value,
        boundary_min,
        boundary_hypothesis: boundary_min > argmin_value * (1.0 + 1e-12),
    })
}
