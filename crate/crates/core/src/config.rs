//! TOML run configuration.
//!
//! ```toml
//! output_dir = "out"
//! seed = 0
//!
//! [instance]
//! p = 4.0
//! domain = { min = [-2.0, -2.0], max = [2.0, 2.0] }
//! v = { kind = "constant", value = 1.0 }
//! a = { kind = "quadratic_radial", field = 0.1, curvature = 1.0 }
//!
//! [table]
//! b_grid = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
//!
//! [sweep]
//! eps = [0.1, 0.07, 0.05]
//! ```
//!
//! Unknown keys are rejected everywhere. Relative paths (sampled fields,
//! table files, the output directory) are resolved against the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concentration::{ProblemInstance, Rect, TableOptions};
use crate::error::{Error, Result};
use crate::harness::{BatteryConfig, SweepOptions};
use crate::limiting::{check_exponent, SolverConfig};
use crate::potential::{FieldPreset, ScalarPotential, ScalarPreset, VectorPotential};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub p: f64,
    pub domain: Rect,
    /// Concentration region; the whole domain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Rect>>,
    pub v: ScalarPreset,
    pub a: FieldPreset,
    /// Curl difference step; `1e-4 · diam Ω` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_curl: Option<f64>,
}

impl InstanceConfig {
    pub fn build(&self, base: &Path) -> Result<ProblemInstance> {
        let v = ScalarPotential::from_preset(&self.v, base)?;
        let a = VectorPotential::from_preset(&self.a, base)?;
        let lambda = self.lambda.clone().unwrap_or_else(|| vec![self.domain]);
        let mut inst = ProblemInstance::new(self.domain, lambda, v, a, self.p)?;
        if let Some(h) = self.h_curl {
            inst.h_curl = h;
            inst.validate()?;
        }
        Ok(inst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitingConfig {
    pub vstar: f64,
    pub b: Vec<f64>,
    pub p: f64,
    pub grid_n: usize,
    pub solver: SolverConfig,
}

impl Default for LimitingConfig {
    fn default() -> Self {
        Self {
            vstar: 1.0,
            b: vec![0.0, 0.25, 0.5],
            p: 4.0,
            grid_n: 128,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    /// Existing table file to reuse instead of solving.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub b_grid: Vec<f64>,
    #[serde(flatten)]
    pub options: TableOptions,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            path: None,
            b_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            options: TableOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub resolution: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { resolution: 41 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceConfig>,
    #[serde(default)]
    pub limiting: LimitingConfig,
    #[serde(default)]
    pub table: TableConfig,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub verify: BatteryConfig,
}

fn default_output() -> String {
    "out".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: default_output(),
            seed: 0,
            instance: None,
            limiting: LimitingConfig::default(),
            table: TableConfig::default(),
            map: MapConfig::default(),
            sweep: SweepOptions::default(),
            verify: BatteryConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate config text. Semantic checks that need files
    /// (sampled fields) happen in [`InstanceConfig::build`].
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Panics on seeds above `i64::MAX`, which [`RunConfig::validate`] rejects.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit.
        if [self.seed, self.sweep.seed, self.verify.seed].iter().any(|&s| s > i64::MAX as u64) {
            return Err(Error::InvalidParameter(format!("seeds must not exceed {}", i64::MAX)));
        }
        check_exponent(self.limiting.p)?;
        if !(self.limiting.vstar > 0.0 && self.limiting.vstar.is_finite()) {
            return Err(Error::InvalidParameter(format!("vstar must be positive, got {}", self.limiting.vstar)));
        }
        if self.limiting.b.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("limiting fields must be finite".into()));
        }
        if self.limiting.grid_n < 4 || self.table.options.grid_n < 4 {
            return Err(Error::InvalidParameter("grid_n must be at least 4".into()));
        }
        self.limiting.solver.validate()?;
        self.table.options.solver.validate()?;
        if self.table.b_grid.is_empty()
            || self.table.b_grid.iter().any(|b| !(b.is_finite() && *b >= 0.0))
            || self.table.b_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(
                "table b_grid must be nonempty, nonnegative and strictly increasing".into(),
            ));
        }
        if !(self.table.options.max_jump > 0.0) {
            return Err(Error::InvalidParameter("table max_jump must be positive".into()));
        }
        if self.map.resolution < 8 {
            return Err(Error::InvalidParameter(format!(
                "map resolution must be at least 8, got {}",
                self.map.resolution
            )));
        }
        self.sweep.validate()?;
        self.verify.validate()?;
        if let Some(i) = &self.instance {
            check_exponent(i.p)?;
            i.domain.validate()?;
            for r in i.lambda.iter().flatten() {
                r.validate()?;
            }
            if let Some(h) = i.h_curl {
                if !(h > 0.0) {
                    return Err(Error::InvalidParameter("h_curl must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn instance(&self, base: &Path) -> Result<ProblemInstance> {
        self.instance
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("config has no [instance] section".into()))?
            .build(base)
    }

    pub fn output_path(&self, base: &Path) -> PathBuf {
        base.join(&self.output_dir)
    }
}
