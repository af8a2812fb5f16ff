//! Run configuration: a TOML file describing the symbol space, kernel,
//! fiber map, grid and estimator settings.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use lyap_core::cocycle::{CocyclePair, FiberMap};
use lyap_core::linalg::{self, Mat};
use lyap_core::projective::{make_grid, GridScheme, ProjectiveGrid};
use lyap_core::symbol_space::{Kernel, SymbolSpace};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub space: SpaceConfig,
    pub kernel: KernelConfig,
    pub fiber: FiberConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub mixing: MixingConfig,
    #[serde(default)]
    pub holder: HolderConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub labels: Vec<String>,
    /// Pairwise distances; the discrete metric when omitted.
    pub dist: Option<Vec<Vec<f64>>>,
    /// Divide distances by the diameter.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    pub m: usize,
    /// Matrix used for every edge not listed in `matrices`.
    pub default: Option<Vec<Vec<f64>>>,
    /// Row-major matrices keyed `"to,from"` by label or index.
    #[serde(default)]
    pub matrices: BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub scheme: Option<String>,
    /// Coarser grid for the contraction certificate.
    pub certification_n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 720, scheme: None, certification_n: 180 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub n: usize,
    pub trajectories: usize,
    pub stationary_tol: f64,
    /// Exponent of the grid error budget `v_α(ψ) h^α`.
    pub budget_alpha: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { n: 100_000, trajectories: 64, stationary_tol: 1e-10, budget_alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixingConfig {
    pub trials: usize,
    pub n_max: usize,
    /// `"holder"` or `"sigma-marginal"`.
    pub family: String,
    pub alpha: f64,
    pub commutation_trials: usize,
}

impl Default for MixingConfig {
    fn default() -> Self {
        MixingConfig { trials: 8, n_max: 200, family: "holder".into(), alpha: 0.5, commutation_trials: 100 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderConfig {
    pub n_max: usize,
    pub le_steps: usize,
    pub le_trajectories: usize,
    pub override_certificate: bool,
    pub contraction_trials: usize,
    pub probes: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub scan_steps: usize,
    pub scan_trajectories: usize,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig {
            n_max: 12,
            le_steps: 20_000,
            le_trajectories: 32,
            override_certificate: false,
            contraction_trials: 20,
            probes: 30,
            d_min: 1e-4,
            d_max: 1e-1,
            scan_steps: 20_000,
            scan_trajectories: 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub directions: usize,
    pub n: usize,
    pub trajectories: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { directions: 16, n: 10_000, trajectories: 16 }
    }
}

/// Everything built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub pair: CocyclePair,
    pub grid: Option<ProjectiveGrid>,
    pub cert_grid: Option<ProjectiveGrid>,
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Core(lyap_core::Error::InvalidInput { path: path.into(), message: message.into() })
}

fn matrix(path: &str, rows: &[Vec<f64>], m: usize) -> Result<Mat, CliError> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(invalid(path, format!("expected a {m}x{m} matrix")));
    }
    linalg::from_rows(rows).ok_or_else(|| invalid(path, "malformed matrix"))
}

fn symbol_index(space: &SymbolSpace, token: &str) -> Option<usize> {
    let token = token.trim();
    space.index_of(token).or_else(|| token.parse::<usize>().ok().filter(|i| *i < space.len()))
}

fn scheme(cfg: &GridConfig, m: usize) -> Result<GridScheme, CliError> {
    match cfg.scheme.as_deref() {
        None if m == 2 => Ok(GridScheme::UniformAngle),
        None => Ok(GridScheme::FibonacciSphere),
        Some("uniform-angle") => Ok(GridScheme::UniformAngle),
        Some("fibonacci-sphere") => Ok(GridScheme::FibonacciSphere),
        Some(other) => Err(invalid("grid.scheme", format!("unknown scheme `{other}`"))),
    }
}

impl RunConfig {
    pub fn validate_settings(&self) -> Result<(), CliError> {
        let e = &self.estimator;
        if e.trajectories == 0 {
            return Err(invalid("estimator.trajectories", "must be positive"));
        }
        if !(e.stationary_tol > 0.0) {
            return Err(invalid("estimator.stationary_tol", "must be positive"));
        }
        if !(e.budget_alpha > 0.0 && e.budget_alpha <= 1.0) {
            return Err(invalid("estimator.budget_alpha", "must lie in (0, 1]"));
        }
        if !matches!(self.mixing.family.as_str(), "holder" | "sigma-marginal") {
            return Err(invalid("mixing.family", "expected `holder` or `sigma-marginal`"));
        }
        if !(self.mixing.alpha > 0.0 && self.mixing.alpha <= 1.0) {
            return Err(invalid("mixing.alpha", "must lie in (0, 1]"));
        }
        let h = &self.holder;
        if !(h.d_min > 0.0 && h.d_max > h.d_min) {
            return Err(invalid("holder.d_min", "need 0 < d_min < d_max"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Model, CliError> {
        self.validate_settings()?;
        let n = self.space.labels.len();
        let dist = match &self.space.dist {
            Some(d) => d.clone(),
            None => (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect(),
        };
        let mut space = SymbolSpace::new(self.space.labels.clone(), dist)?;
        if self.space.normalize {
            space = space.normalized();
        }
        let space = Arc::new(space);
        let kernel = Kernel::new(space.clone(), self.kernel.rows.clone())?;
        let m = self.fiber.m;
        if m < 2 {
            return Err(invalid("fiber.m", "fiber dimension must be at least 2"));
        }
        let default = match &self.fiber.default {
            Some(rows) => Some(matrix("fiber.default", rows, m)?),
            None => None,
        };
        let mut mats: Vec<Option<Mat>> = vec![default; n * n];
        for (key, rows) in &self.fiber.matrices {
            let path = format!("fiber.matrices.\"{key}\"");
            let mut parts = key.split(',');
            let (Some(to), Some(from), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(invalid(path, "key must have the form \"to,from\""));
            };
            let to = symbol_index(&space, to).ok_or_else(|| invalid(&path, format!("unknown symbol `{to}`")))?;
            let from = symbol_index(&space, from).ok_or_else(|| invalid(&path, format!("unknown symbol `{from}`")))?;
            mats[to * n + from] = Some(matrix(&path, rows, m)?);
        }
        let mut resolved = Vec::with_capacity(n * n);
        for (idx, mat) in mats.into_iter().enumerate() {
            match mat {
                Some(mat) => resolved.push(mat),
                None => {
                    let (to, from) = (idx / n, idx % n);
                    let key = format!("{},{}", space.labels()[to], space.labels()[from]);
                    return Err(invalid(format!("fiber.matrices.\"{key}\""), "missing matrix and no fiber.default"));
                }
            }
        }
        let fiber = FiberMap::new(space, m, resolved)?;
        let pair = CocyclePair::new(fiber, kernel)?;
        let (grid, cert_grid) = if m <= 3 {
            let s = scheme(&self.grid, m)?;
            (Some(make_grid(m, self.grid.n, s)?), Some(make_grid(m, self.grid.certification_n, s)?))
        } else {
            (None, None)
        };
        Ok(Model { pair, grid, cert_grid })
    }
}
