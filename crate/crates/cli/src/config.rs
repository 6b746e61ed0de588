use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ilbk_core::checksum::fnv1a64;
use ilbk_core::gas::{derive_constants, GasParameters};
use ilbk_core::math::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Spectral,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Hot,
    Cold,
    Bimodal,
    Shell,
    Perturbed,
}

impl InitialKind {
    pub fn to_core(self) -> ilbk_core::evolution::InitialData {
        use ilbk_core::evolution::InitialData::*;
        match self {
            InitialKind::Hot => Hot,
            InitialKind::Cold => Cold,
            InitialKind::Bimodal => Bimodal,
            InitialKind::Shell => Shell,
            InitialKind::Perturbed => Perturbed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Nodes per axis of the full velocity grid.
    pub n: usize,
    /// Half-width in thermal-width multiples.
    pub l: f64,
    /// Radial grid size for the isotropic sector.
    pub nr: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 24, l: 6.0, nr: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: MethodKind,
    /// Time step for rk4; 0 means the stability limit is chosen automatically.
    pub dt: f64,
    pub t_end: f64,
    pub samples: usize,
    pub initial: InitialKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: MethodKind::Spectral,
            dt: 0.0,
            t_end: 6.0,
            samples: 97,
            initial: InitialKind::Hot,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    /// Velocity nodes per axis for the slab demo.
    pub n: usize,
    /// Spatial cells.
    pub nx: usize,
    pub steps: usize,
    /// Commensurability multiplier: dt = 4 q dx / h.
    pub q: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { n: 10, nx: 16, steps: 1000, q: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    /// Relative mass-conservation budget for evolve; 0 keeps the method default.
    pub mass_drift: f64,
    /// Relative slack for the monotone-decay checks; 0 keeps the method default.
    pub monotonicity: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig { mass_drift: 0.0, monotonicity: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub m: f64,
    pub m1: f64,
    pub eps: f64,
    pub theta1: f64,
    pub u1: [f64; 3],
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub transport: TransportConfig,
    pub tolerances: ToleranceConfig,
    pub seed: u64,
    /// Output directory; flag and environment take precedence.
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            m: 1.0,
            m1: 1.0,
            eps: 0.5,
            theta1: 1.0,
            u1: [0.0; 3],
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            transport: TransportConfig::default(),
            tolerances: ToleranceConfig::default(),
            seed: 7,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> GasParameters {
        GasParameters {
            m: self.m,
            m1: self.m1,
            eps: self.eps,
            theta1: self.theta1,
            u1: Vec3::new(self.u1[0], self.u1[1], self.u1[2]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        derive_constants(&self.params()).map_err(|e| anyhow::anyhow!("{e}"))?;
        if self.grid.n < 8 || self.grid.n % 2 != 0 {
            bail!("grid.n must be even and at least 8, got {}", self.grid.n);
        }
        if self.grid.nr < 8 {
            bail!("grid.nr must be at least 8, got {}", self.grid.nr);
        }
        if !(self.grid.l > 0.0) {
            bail!("grid.l must be positive, got {}", self.grid.l);
        }
        if self.solver.samples < 2 {
            bail!("solver.samples must be at least 2, got {}", self.solver.samples);
        }
        if !(self.solver.t_end > 0.0) {
            bail!("solver.t_end must be positive, got {}", self.solver.t_end);
        }
        if self.transport.nx < 2 || self.transport.q == 0 {
            bail!("transport needs nx >= 2 and q >= 1");
        }
        for (name, tol) in
            [("mass_drift", self.tolerances.mass_drift), ("monotonicity", self.tolerances.monotonicity)]
        {
            if !(tol >= 0.0 && tol.is_finite()) {
                bail!("tolerances.{name} must be finite and nonnegative, got {tol}");
            }
        }
        Ok(())
    }

    /// Hash of the scientific part of the configuration (everything except
    /// the output location). Embedded in every artifact.
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.out = None;
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        format!("{:016x}", fnv1a64(&bytes))
    }
}

/// Load the config file (empty object when absent), apply dotted `--set`
/// overrides, then decode with unknown keys rejected.
pub fn resolve(
    config_path: Option<&Path>,
    sets: &[String],
    seed_flag: Option<u64>,
) -> Result<RunConfig> {
    let mut value: serde_json::Value = match config_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("config {} is not valid JSON", path.display()))?
        }
        None => serde_json::json!({}),
    };
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got `{set}`"))?;
        apply_override(&mut value, key, raw)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| anyhow::anyhow!("{e}"))?;
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(root: &mut serde_json::Value, key: &str, raw: &str) -> Result<()> {
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if part.is_empty() {
            bail!("--set key `{key}` has an empty path segment");
        }
        let obj = node
            .as_object_mut()
            .with_context(|| format!("--set key `{key}` descends into a non-object"))?;
        if parts.peek().is_some() {
            node = obj.entry(part).or_insert_with(|| serde_json::json!({}));
        } else {
            let parsed =
                serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
    }
    Ok(())
}

/// Output directory precedence: flag, then config, then ILBK_OUT, then ./out.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = &cfg.out {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var("ILBK_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("out")
}
