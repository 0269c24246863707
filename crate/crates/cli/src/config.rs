//! Experiment configuration (TOML). Unknown keys are rejected.
//!
//! ```toml
//! [grid]
//! nx = 200
//! coarse = [10, 20, 40]
//!
//! [method]
//! n_ov = [3, 4, 5]
//!
//! [medium]
//! contrast = 1e4
//!
//! [velocity]
//! mode = "vortex"
//!
//! [boundary]
//! left = "dirichlet"
//! right = "dirichlet"
//! g = "x1sq_plus_exp"
//! ```

use std::path::{Path, PathBuf};

use cemflow::fields::{builtin_medium, builtin_velocity, MediumPattern, Reaction, RobinCoeff, ScalarFn, DEFAULT_C};
use cemflow::grid::{BoundaryKind, BoundarySpec, DomainSpec};
use cemflow::{BoundaryData, Layers, MediumField, ProblemData, Scheme, SchemeConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub medium: MediumConfig,
    #[serde(default)]
    pub velocity: VelocityConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    pub time: Option<TimeConfig>,
    pub nonlinear: Option<NonlinearConfig>,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 }
    }
}

/// Fine resolution and the coarse resolutions `Nx` (square coarse cells
/// unless `coarse_ny` is given).
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: Option<usize>,
    pub coarse: Vec<usize>,
    pub coarse_ny: Option<Vec<usize>>,
}

/// One entry of `n_ov`: a layer count or `"glo"`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum LayersEntry {
    Count(usize),
    Name(String),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default = "default_l")]
    pub l_m: usize,
    #[serde(default = "default_n_ov")]
    pub n_ov: Vec<LayersEntry>,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Also compute correctors on the whole domain and report `D_*`/`N_*`.
    #[serde(default = "default_true")]
    pub corrector_errors: bool,
}

fn default_l() -> usize {
    3
}

fn default_n_ov() -> Vec<LayersEntry> {
    vec![LayersEntry::Count(3)]
}

fn default_c() -> f64 {
    DEFAULT_C
}

fn default_true() -> bool {
    true
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self { l_m: default_l(), n_ov: default_n_ov(), c: default_c(), corrector_errors: true }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    #[serde(default = "default_pattern")]
    pub pattern: String,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Plain-text medium file; overrides the builtin pattern.
    pub file: Option<PathBuf>,
}

fn default_pattern() -> String {
    "inclusions".into()
}

fn default_contrast() -> f64 {
    1e4
}

fn default_seed() -> u64 {
    1
}

impl Default for MediumConfig {
    fn default() -> Self {
        Self { pattern: default_pattern(), contrast: default_contrast(), seed: default_seed(), file: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VelocityConfig {
    #[serde(default = "default_velocity")]
    pub mode: String,
    #[serde(default)]
    pub c_flow: f64,
}

fn default_velocity() -> String {
    "vortex".into()
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self { mode: default_velocity(), c_flow: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SideKind {
    Dirichlet,
    Neumann,
}

impl From<SideKind> for BoundaryKind {
    fn from(k: SideKind) -> Self {
        match k {
            SideKind::Dirichlet => BoundaryKind::Dirichlet,
            SideKind::Neumann => BoundaryKind::NeumannRobin,
        }
    }
}

/// Per-side condition and catalog names of `g`, `q` and `b`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default = "dirichlet")]
    pub bottom: SideKind,
    #[serde(default = "dirichlet")]
    pub right: SideKind,
    #[serde(default = "dirichlet")]
    pub top: SideKind,
    #[serde(default = "dirichlet")]
    pub left: SideKind,
    #[serde(default = "zero_name")]
    pub g: String,
    #[serde(default = "zero_name")]
    pub q: String,
    #[serde(default = "zero_name")]
    pub b: String,
}

fn dirichlet() -> SideKind {
    SideKind::Dirichlet
}

fn zero_name() -> String {
    "zero".into()
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            bottom: SideKind::Dirichlet,
            right: SideKind::Dirichlet,
            top: SideKind::Dirichlet,
            left: SideKind::Dirichlet,
            g: zero_name(),
            q: zero_name(),
            b: zero_name(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "zero_name")]
    pub source: String,
    #[serde(default = "zero_name")]
    pub u_init: String,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { source: zero_name(), u_init: zero_name() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub tau: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

fn default_scheme() -> String {
    "CD".into()
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonlinearConfig {
    #[serde(default = "default_reaction")]
    pub reaction: String,
    #[serde(default = "default_substeps")]
    pub ode_substeps: usize,
}

fn default_reaction() -> String {
    "u_minus_u3".into()
}

fn default_substeps() -> usize {
    SchemeConfig::DEFAULT_ODE_SUBSTEPS
}

/// Fine reference: resolution (a multiple of `grid.nx`) and the number of
/// time steps over `[0, T]`.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub resolution: Option<usize>,
    pub steps: Option<usize>,
    #[serde(default)]
    pub skip: bool,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    #[default]
    Steady,
    Transient,
    Nonlinear,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub kind: SweepKind,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub snapshots: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out(), snapshots: true }
    }
}

/// One `(coarse resolution, layers)` cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub cnx: usize,
    pub cny: usize,
    pub layers: Layers,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(f) = &cfg.medium.file {
            if f.is_relative() {
                cfg.medium.file = Some(path.parent().unwrap_or(Path::new(".")).join(f));
            }
        }
        Ok((cfg, text))
    }

    pub fn ny(&self) -> usize {
        self.grid.ny.unwrap_or(self.grid.nx)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let (nx, ny) = (self.grid.nx, self.ny());
        if nx == 0 || ny == 0 {
            return Err(schema("grid.nx and grid.ny must be positive"));
        }
        if self.grid.coarse.is_empty() {
            return Err(schema("grid.coarse must list at least one coarse resolution"));
        }
        let cny = self.coarse_ny();
        if cny.len() != self.grid.coarse.len() {
            return Err(schema("grid.coarse_ny must have the same length as grid.coarse"));
        }
        for (&cx, &cy) in self.grid.coarse.iter().zip(&cny) {
            if cx == 0 || cy == 0 || nx % cx != 0 || ny % cy != 0 {
                return Err(schema(format!("fine grid {nx}x{ny} is not divisible by coarse grid {cx}x{cy}")));
            }
        }
        if self.method.l_m == 0 {
            return Err(schema("method.l_m must be at least 1"));
        }
        if !(self.method.c > 0.0) {
            return Err(schema("method.c must be positive"));
        }
        if self.method.n_ov.is_empty() {
            return Err(schema("method.n_ov must not be empty"));
        }
        self.layers()?;
        self.problem_template()?;
        if let Some(t) = &self.time {
            let steps = self.scheme_config(t)?.steps().map_err(|e| schema(e.to_string()))?;
            if let Some(r) = self.reference.steps {
                if r % steps != 0 {
                    return Err(schema(format!("reference.steps {r} must be a multiple of the {steps} multiscale steps")));
                }
            }
        }
        if let Some(n) = &self.nonlinear {
            if n.ode_substeps == 0 {
                return Err(schema("nonlinear.ode_substeps must be at least 1"));
            }
        }
        if let Some(r) = self.reference.resolution {
            if r == 0 || r % nx != 0 || (r * ny) % nx != 0 {
                return Err(schema(format!("reference.resolution {r} must be a multiple of grid.nx = {nx}")));
            }
        }
        if self.reference.steps == Some(0) {
            return Err(schema("reference.steps must be positive"));
        }
        Ok(())
    }

    fn coarse_ny(&self) -> Vec<usize> {
        self.grid.coarse_ny.clone().unwrap_or_else(|| {
            let ratio = self.ny() as f64 / self.grid.nx as f64;
            self.grid.coarse.iter().map(|&c| ((c as f64) * ratio).round().max(1.0) as usize).collect()
        })
    }

    pub fn layers(&self) -> Result<Vec<Layers>, CliError> {
        self.method
            .n_ov
            .iter()
            .map(|e| match e {
                LayersEntry::Count(0) => Err(schema("method.n_ov entries must be at least 1")),
                LayersEntry::Count(m) => Ok(Layers::Finite(*m)),
                LayersEntry::Name(s) if s == "glo" => Ok(Layers::Global),
                LayersEntry::Name(s) => Err(schema(format!("method.n_ov entry '{s}' is neither a count nor \"glo\""))),
            })
            .collect()
    }

    /// Coarse resolutions paired with layer counts: position-wise, or one
    /// list broadcast against a single entry.
    pub fn paired_cells(&self) -> Result<Vec<Cell>, CliError> {
        let layers = self.layers()?;
        let coarse: Vec<(usize, usize)> = self.grid.coarse.iter().copied().zip(self.coarse_ny()).collect();
        let n = coarse.len().max(layers.len());
        if !(coarse.len() == layers.len() || coarse.len() == 1 || layers.len() == 1) {
            return Err(schema(format!(
                "grid.coarse ({}) and method.n_ov ({}) differ in length; use `sweep` for all combinations",
                coarse.len(),
                layers.len()
            )));
        }
        Ok((0..n)
            .map(|k| {
                let (cnx, cny) = coarse[k.min(coarse.len() - 1)];
                Cell { cnx, cny, layers: layers[k.min(layers.len() - 1)] }
            })
            .collect())
    }

    /// All combinations, coarse-major.
    pub fn product_cells(&self) -> Result<Vec<Cell>, CliError> {
        let layers = self.layers()?;
        Ok(self
            .grid
            .coarse
            .iter()
            .copied()
            .zip(self.coarse_ny())
            .flat_map(|(cnx, cny)| layers.iter().map(move |&l| Cell { cnx, cny, layers: l }))
            .collect())
    }

    pub fn scheme_config(&self, t: &TimeConfig) -> Result<SchemeConfig, CliError> {
        let scheme = Scheme::from_name(&t.scheme).map_err(|e| schema(e.to_string()))?;
        let mut cfg = SchemeConfig::new(t.tau, t.t_end, scheme).map_err(|e| schema(e.to_string()))?;
        if let Some(n) = &self.nonlinear {
            cfg.ode_substeps = n.ode_substeps;
        }
        Ok(cfg)
    }

    pub fn time(&self, command: &str) -> Result<&TimeConfig, CliError> {
        self.time.as_ref().ok_or_else(|| schema(format!("`{command}` needs a [time] block")))
    }

    fn boundary_spec(&self) -> BoundarySpec {
        let b = &self.boundary;
        BoundarySpec::sides(&self.domain_spec(), [b.bottom.into(), b.right.into(), b.top.into(), b.left.into()])
    }

    fn domain_spec(&self) -> DomainSpec {
        let d = self.domain;
        DomainSpec { x_min: d.x_min, x_max: d.x_max, y_min: d.y_min, y_max: d.y_max }
    }

    fn medium_at(&self, nx: usize, ny: usize) -> Result<MediumField, CliError> {
        let m = &self.medium;
        match &m.file {
            Some(path) => MediumField::load(path).map_err(|e| match e {
                cemflow::CemError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
                other => schema(format!("{}: {other}", path.display())),
            }),
            None => {
                let pattern = MediumPattern::from_name(&m.pattern).map_err(|e| schema(e.to_string()))?;
                builtin_medium(nx, ny, m.contrast, pattern, m.seed).map_err(|e| schema(e.to_string()))
            }
        }
    }

    /// Problem data with the medium sampled on the configured fine grid.
    pub fn problem(&self) -> Result<ProblemData, CliError> {
        let mut p = self.problem_template()?;
        p.medium = self.medium_at(self.grid.nx, self.ny())?;
        Ok(p)
    }

    fn problem_template(&self) -> Result<ProblemData, CliError> {
        let domain = self.domain_spec();
        DomainSpec::new(domain.x_min, domain.x_max, domain.y_min, domain.y_max).map_err(|e| schema(e.to_string()))?;
        let f = |what: &str, name: &str| ScalarFn::from_catalog(name).map_err(|e| schema(format!("{what}: {e}")));
        let velocity = builtin_velocity(&self.velocity.mode, self.velocity.c_flow).map_err(|e| schema(e.to_string()))?;
        if self.medium.file.is_none() {
            MediumPattern::from_name(&self.medium.pattern).map_err(|e| schema(e.to_string()))?;
            if !(self.medium.contrast >= 1.0 && self.medium.contrast.is_finite()) {
                return Err(schema(format!("medium.contrast must be >= 1, got {}", self.medium.contrast)));
            }
        }
        let data = BoundaryData {
            g: f("boundary.g", &self.boundary.g)?,
            q: f("boundary.q", &self.boundary.q)?,
            b: RobinCoeff::from_name(&self.boundary.b).map_err(|e| schema(format!("boundary.b: {e}")))?,
        };
        let reaction = match &self.nonlinear {
            Some(n) => Reaction::from_name(&n.reaction).map_err(|e| schema(e.to_string()))?,
            None => Reaction::None,
        };
        let placeholder = MediumField::uniform(1, 1, 1.0).map_err(|e| schema(e.to_string()))?;
        Ok(ProblemData {
            domain,
            medium: placeholder,
            velocity,
            boundary: self.boundary_spec(),
            data,
            source: f("problem.source", &self.problem.source)?,
            u_init: f("problem.u_init", &self.problem.u_init)?,
            reaction,
        })
    }

    /// Reference resolution `(nx, ny)`.
    pub fn reference_grid(&self) -> (usize, usize) {
        let r = self.reference.resolution.unwrap_or(self.grid.nx);
        (r, r * self.ny() / self.grid.nx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nnx = 20\ncoarse = [4]\n";

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.method.l_m, 3);
        assert_eq!(cfg.method.c, 24.0);
        assert_eq!(cfg.layers().unwrap(), vec![Layers::Finite(3)]);
        assert_eq!(cfg.reference_grid(), (20, 20));
    }

    #[test]
    fn cells() {
        let text = "[grid]\nnx = 40\ncoarse = [4, 8]\n[method]\nn_ov = [1, \"glo\"]\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.paired_cells().unwrap().len(), 2);
        assert_eq!(cfg.product_cells().unwrap().len(), 4);
        assert_eq!(cfg.paired_cells().unwrap()[1].layers, Layers::Global);
        let bad = "[grid]\nnx = 40\ncoarse = [4, 8]\n[method]\nn_ov = [1, 2, 3]\n";
        assert!(ExperimentConfig::parse(bad).unwrap().paired_cells().is_err());
    }

    #[test]
    fn rejections() {
        for text in [
            "[grid]\nnx = 15\ncoarse = [10]\n",
            "[grid]\nnx = 20\nnx = 20\ncoarse = [4]\n",
            "[grid]\nnx = 20\ncoarse = [4]\ncolour = 1\n",
            "[grid]\nnx = 20\ncoarse = [4]\n[boundary]\ng = \"nope\"\n",
            "[grid]\nnx = 20\ncoarse = [4]\n[method]\nn_ov = [\"all\"]\n",
            "[grid]\nnx = 20\ncoarse = [4]\n[time]\nt_end = 1.0\ntau = 0.3\n",
            "[grid]\nnx = 20\ncoarse = [4]\n[reference]\nresolution = 30\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Schema(_))), "{text}");
        }
    }
}
