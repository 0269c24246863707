//! Coefficient fields, boundary data and source terms.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CemError, Result};
use crate::grid::{BoundaryEdge, FineGrid};

/// Piecewise constant positive coefficient, one value per fine cell
/// (row-major, row 0 at the bottom).
#[derive(Clone, Debug, PartialEq)]
pub struct MediumField {
    pub nx: usize,
    pub ny: usize,
    values: Vec<f64>,
    kappa_min: f64,
    kappa_max: f64,
}

impl MediumField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny || nx == 0 || ny == 0 {
            return Err(CemError::InvalidInput(format!(
                "medium has {} values, expected {nx}x{ny}",
                values.len()
            )));
        }
        let mut kappa_min = f64::INFINITY;
        let mut kappa_max = 0.0f64;
        for (cell, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CemError::NonFinite(format!("medium value in cell {cell}")));
            }
            if v <= 0.0 {
                return Err(CemError::NonPositiveCoefficient { cell, value: v });
            }
            kappa_min = kappa_min.min(v);
            kappa_max = kappa_max.max(v);
        }
        Ok(Self { nx, ny, values, kappa_min, kappa_max })
    }

    pub fn uniform(nx: usize, ny: usize, value: f64) -> Result<Self> {
        Self::new(nx, ny, vec![value; nx * ny])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, ci: usize, cj: usize) -> f64 {
        self.values[cj * self.nx + ci]
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa_min
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    pub fn contrast(&self) -> f64 {
        self.kappa_max / self.kappa_min
    }

    /// Samples this field (viewed as covering `grid.domain`) at the cell
    /// centers of `grid`.
    pub fn resample(&self, grid: &FineGrid) -> Result<Self> {
        if grid.nx == self.nx && grid.ny == self.ny {
            return Ok(self.clone());
        }
        let mut out = Vec::with_capacity(grid.num_cells());
        for cj in 0..grid.ny {
            for ci in 0..grid.nx {
                let sx = ((ci as f64 + 0.5) * self.nx as f64 / grid.nx as f64) as usize;
                let sy = ((cj as f64 + 0.5) * self.ny as f64 / grid.ny as f64) as usize;
                out.push(self.at(sx.min(self.nx - 1), sy.min(self.ny - 1)));
            }
        }
        Self::new(grid.nx, grid.ny, out)
    }

    /// Parses the plain-text grid format: a header line `nx ny` followed by
    /// `ny` rows of `nx` values. Values may be separated by whitespace or, when
    /// `comma` is set, by commas.
    pub fn parse(text: &str, comma: bool) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let split = |l: &str| -> Vec<String> {
            if comma {
                l.split(',').map(|s| s.trim().to_string()).collect()
            } else {
                l.split_whitespace().map(str::to_string).collect()
            }
        };
        let header = lines.next().ok_or_else(|| CemError::Parse("medium file is empty".into()))?;
        let dims = split(header);
        if dims.len() != 2 {
            return Err(CemError::Parse(format!("medium header must be 'nx ny', got '{header}'")));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|_| CemError::Parse(format!("bad medium dimension '{s}'")))
        };
        let nx = parse_dim(&dims[0])?;
        let ny = parse_dim(&dims[1])?;
        let mut values = Vec::with_capacity(nx * ny);
        for (row, line) in lines.enumerate() {
            let items = split(line);
            if items.len() != nx {
                return Err(CemError::Parse(format!(
                    "medium row {row} has {} values, expected {nx}",
                    items.len()
                )));
            }
            for s in items {
                values.push(s.parse::<f64>().map_err(|_| CemError::Parse(format!("bad medium value '{s}'")))?);
            }
        }
        if values.len() != nx * ny {
            return Err(CemError::Parse(format!(
                "medium file has {} rows, expected {ny}",
                values.len() / nx.max(1)
            )));
        }
        Self::new(nx, ny, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let comma = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        Self::parse(&text, comma)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.nx, self.ny);
        for cj in 0..self.ny {
            let row: Vec<String> = (0..self.nx).map(|ci| format!("{:e}", self.at(ci, cj))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MediumPattern {
    Uniform,
    /// Isolated disks of high conductivity.
    Inclusions,
    /// Short thin bars of high conductivity, horizontal or vertical.
    Channels,
}

impl MediumPattern {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Self::Uniform),
            "inclusions" => Ok(Self::Inclusions),
            "channels" => Ok(Self::Channels),
            _ => Err(CemError::InvalidInput(format!("unknown medium pattern '{name}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Disk { cx: f64, cy: f64, r: f64 },
    Bar { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Bar { x0, x1, y0, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }

    fn anchor(&self) -> (f64, f64) {
        match *self {
            Shape::Disk { cx, cy, .. } => (cx, cy),
            Shape::Bar { x0, x1, y0, y1 } => (0.5 * (x0 + x1), 0.5 * (y0 + y1)),
        }
    }
}

/// Builtin high-contrast medium on the unit square: background 1 and
/// inclusions of value `contrast`. Geometry is defined in continuous
/// coordinates and sampled at cell centers, so the same seed gives the same
/// medium at every resolution.
pub fn builtin_medium(nx: usize, ny: usize, contrast: f64, pattern: MediumPattern, seed: u64) -> Result<MediumField> {
    if !(contrast >= 1.0) || !contrast.is_finite() {
        return Err(CemError::InvalidInput(format!("contrast must be >= 1, got {contrast}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<Shape> = match pattern {
        MediumPattern::Uniform => Vec::new(),
        MediumPattern::Inclusions => (0..60)
            .map(|_| Shape::Disk {
                cx: rng.random_range(0.04..0.96),
                cy: rng.random_range(0.04..0.96),
                r: rng.random_range(0.012..0.03),
            })
            .collect(),
        MediumPattern::Channels => (0..24)
            .map(|_| {
                let len = rng.random_range(0.08..0.2);
                let width = rng.random_range(0.008..0.016);
                let cx = rng.random_range(0.12..0.88);
                let cy = rng.random_range(0.12..0.88);
                let (hx, hy) = if rng.random_bool(0.5) { (len, width) } else { (width, len) };
                Shape::Bar { x0: cx - 0.5 * hx, x1: cx + 0.5 * hx, y0: cy - 0.5 * hy, y1: cy + 0.5 * hy }
            })
            .collect(),
    };
    let mut values = vec![1.0; nx * ny];
    for cj in 0..ny {
        for ci in 0..nx {
            let x = (ci as f64 + 0.5) / nx as f64;
            let y = (cj as f64 + 0.5) / ny as f64;
            if shapes.iter().any(|s| s.contains(x, y)) {
                values[cj * nx + ci] = contrast;
            }
        }
    }
    // On very coarse grids an inclusion may miss every cell center.
    if let Some(s) = shapes.first() {
        let (x, y) = s.anchor();
        let ci = ((x * nx as f64) as usize).min(nx - 1);
        let cj = ((y * ny as f64) as usize).min(ny - 1);
        values[cj * nx + ci] = contrast;
    }
    MediumField::new(nx, ny, values)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VelocityMode {
    Zero,
    Constant([f64; 2]),
    /// Cellular flow `[cos(k y) sin(k x), -cos(k x) sin(k y)]` with `k = 18 pi`.
    Vortex,
    /// Vortex plus `c_flow [1/2 - x, y]`, pointing into the domain on the left,
    /// right and bottom sides.
    Inflow,
    /// Negated inflow field.
    Outflow,
    /// Rigid rotation `c_flow [1/2 - y, x - 1/2]`.
    Rotation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityField {
    pub mode: VelocityMode,
    pub c_flow: f64,
}

const VORTEX_K: f64 = 18.0 * PI;

impl VelocityField {
    pub fn new(mode: VelocityMode, c_flow: f64) -> Self {
        Self { mode, c_flow }
    }

    pub fn zero() -> Self {
        Self::new(VelocityMode::Zero, 0.0)
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        let vortex = || {
            [
                (VORTEX_K * y).cos() * (VORTEX_K * x).sin(),
                -(VORTEX_K * x).cos() * (VORTEX_K * y).sin(),
            ]
        };
        match self.mode {
            VelocityMode::Zero => [0.0, 0.0],
            VelocityMode::Constant(b) => b,
            VelocityMode::Vortex => vortex(),
            VelocityMode::Rotation => [self.c_flow * (0.5 - y), self.c_flow * (x - 0.5)],
            VelocityMode::Inflow | VelocityMode::Outflow => {
                let v = vortex();
                let b = [v[0] + self.c_flow * (0.5 - x), v[1] + self.c_flow * y];
                if self.mode == VelocityMode::Outflow {
                    [-b[0], -b[1]]
                } else {
                    b
                }
            }
        }
    }

    /// Upper bound of `|beta|` over the unit square.
    pub fn scale(&self) -> f64 {
        match self.mode {
            VelocityMode::Zero => 0.0,
            VelocityMode::Constant(b) => (b[0] * b[0] + b[1] * b[1]).sqrt(),
            VelocityMode::Vortex => 1.0,
            VelocityMode::Rotation => self.c_flow.abs() * 0.5f64.hypot(0.5),
            VelocityMode::Inflow | VelocityMode::Outflow => 1.0 + self.c_flow.abs() * 0.5f64.hypot(1.0),
        }
    }
}

/// Builtin velocity by name: `zero`, `vortex`, `inflow`, `outflow`,
/// `rotation`, or `constant:<bx>,<by>`.
pub fn builtin_velocity(mode: &str, c_flow: f64) -> Result<VelocityField> {
    let m = match mode {
        "zero" => VelocityMode::Zero,
        "vortex" => VelocityMode::Vortex,
        "inflow" => VelocityMode::Inflow,
        "outflow" => VelocityMode::Outflow,
        "rotation" => VelocityMode::Rotation,
        _ => {
            let parsed = mode.strip_prefix("constant:").and_then(|rest| {
                let mut it = rest.split(',').map(|s| s.trim().parse::<f64>());
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(a)), Some(Ok(b)), None) => Some([a, b]),
                    _ => None,
                }
            });
            VelocityMode::Constant(parsed.ok_or_else(|| CemError::InvalidInput(format!("unknown velocity mode '{mode}'")))?)
        }
    };
    Ok(VelocityField::new(m, c_flow))
}

/// Weight of the `s`-form: `C H^-2 kappa_1 max(|beta|^2, 1)` with `kappa_1`
/// the global maximum of the medium.
#[derive(Clone, Copy, Debug)]
pub struct KappaTilde {
    pub c: f64,
    pub h: f64,
    pub kappa1: f64,
    pub velocity: VelocityField,
}

pub const DEFAULT_C: f64 = 24.0;

pub fn kappa_tilde(medium: &MediumField, velocity: VelocityField, h: f64, c: f64) -> Result<KappaTilde> {
    if !(h > 0.0) {
        return Err(CemError::InvalidInput(format!("coarse size must be positive, got {h}")));
    }
    Ok(KappaTilde { c, h, kappa1: medium.kappa_max(), velocity })
}

impl KappaTilde {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let b = self.velocity.eval(p);
        let b2 = (b[0] * b[0] + b[1] * b[1]).max(1.0);
        self.c * self.kappa1 * b2 / (self.h * self.h)
    }
}

type PointFn = dyn Fn([f64; 2], f64) -> f64 + Send + Sync;

/// Named closed-form function of space and time.
#[derive(Clone)]
pub struct ScalarFn {
    name: String,
    f: Arc<PointFn>,
    dt: Option<Arc<PointFn>>,
    zero: bool,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.name)
    }
}

impl ScalarFn {
    pub fn new(name: impl Into<String>, f: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f), dt: None, zero: false }
    }

    pub fn with_dt(mut self, dt: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.dt = Some(Arc::new(dt));
        self
    }

    pub fn zero() -> Self {
        Self { zero: true, ..Self::new("zero", |_, _| 0.0).with_dt(|_, _| 0.0) }
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        Self::new(format!("constant:{c}"), move |_, _| c).with_dt(|_, _| 0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// True only for the catalog zero function.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn eval(&self, p: [f64; 2], t: f64) -> f64 {
        (self.f)(p, t)
    }

    pub fn has_dt(&self) -> bool {
        self.dt.is_some()
    }

    pub fn eval_dt(&self, p: [f64; 2], t: f64) -> Option<f64> {
        self.dt.as_ref().map(|d| d(p, t))
    }

    /// Catalog of closed forms used by configs:
    ///
    /// | name | value |
    /// |---|---|
    /// | `zero`, `one`, `constant:<c>` | constants |
    /// | `x1` | `x` |
    /// | `x1sq_plus_exp` | `x^2 + exp(x y)` |
    /// | `decay_exp` | `(x^2 + exp(x y)) exp(-t)` |
    /// | `sin_sin` | `sin(pi x) sin(pi y)` |
    /// | `side_flux` | `-1` on `x = 0`, `1` on `x = 1`, `1` on `y = 0, x > 1/2`, else `0` |
    /// | `decay_side_flux` | `side_flux * exp(-t)` |
    /// | `bumps` | sum of two smooth Gaussian sources |
    /// | `ramp_bumps` | `bumps * (1 - exp(-5 t))` |
    /// | `checker` | `sin(2 pi x) sin(2 pi y)` |
    pub fn from_catalog(name: &str) -> Result<Self> {
        let f = match name {
            "zero" => Self::zero(),
            "one" => Self::constant(1.0),
            "x1" => Self::new(name, |p, _| p[0]).with_dt(|_, _| 0.0),
            "x1sq_plus_exp" => Self::new(name, |p, _| x1sq_plus_exp(p)).with_dt(|_, _| 0.0),
            "decay_exp" => Self::new(name, |p, t| x1sq_plus_exp(p) * (-t).exp())
                .with_dt(|p, t| -x1sq_plus_exp(p) * (-t).exp()),
            "sin_sin" => Self::new(name, |p, _| (PI * p[0]).sin() * (PI * p[1]).sin()).with_dt(|_, _| 0.0),
            "side_flux" => Self::new(name, |p, _| side_flux(p)).with_dt(|_, _| 0.0),
            "decay_side_flux" => Self::new(name, |p, t| side_flux(p) * (-t).exp())
                .with_dt(|p, t| -side_flux(p) * (-t).exp()),
            "bumps" => Self::new(name, |p, _| bumps(p)).with_dt(|_, _| 0.0),
            "ramp_bumps" => Self::new(name, |p, t| bumps(p) * (1.0 - (-5.0 * t).exp()))
                .with_dt(|p, t| bumps(p) * 5.0 * (-5.0 * t).exp()),
            "checker" => Self::new(name, |p, _| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin())
                .with_dt(|_, _| 0.0),
            _ => {
                let c = name
                    .strip_prefix("constant:")
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| CemError::InvalidInput(format!("unknown function '{name}'")))?;
                Self::constant(c)
            }
        };
        Ok(f)
    }
}

fn x1sq_plus_exp(p: [f64; 2]) -> f64 {
    p[0] * p[0] + (p[0] * p[1]).exp()
}

fn side_flux(p: [f64; 2]) -> f64 {
    const TOL: f64 = 1e-12;
    if p[0] <= TOL {
        -1.0
    } else if p[0] >= 1.0 - TOL {
        1.0
    } else if p[1] <= TOL && p[0] > 0.5 {
        1.0
    } else {
        0.0
    }
}

fn bumps(p: [f64; 2]) -> f64 {
    let g = |cx: f64, cy: f64, w: f64| (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / w).exp();
    10.0 * g(0.3, 0.35, 0.01) - 10.0 * g(0.7, 0.65, 0.01)
}

/// Robin coefficient `b` on `Gamma_N`.
#[derive(Clone, Debug)]
pub enum RobinCoeff {
    Zero,
    Constant(f64),
    /// Medium value of the cell adjacent to the edge.
    AdjacentKappa,
    Function(ScalarFn),
}

impl RobinCoeff {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Self::Zero),
            "kappa" => Ok(Self::AdjacentKappa),
            _ => match ScalarFn::from_catalog(name)? {
                f if f.is_zero() => Ok(Self::Zero),
                f => Ok(Self::Function(f)),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::Constant(c) => format!("constant:{c}"),
            Self::AdjacentKappa => "kappa".into(),
            Self::Function(f) => f.name().to_string(),
        }
    }

    pub fn eval(&self, edge: &BoundaryEdge, p: [f64; 2], medium: &MediumField) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::AdjacentKappa => medium.values()[edge.cell],
            Self::Function(f) => f.eval(p, 0.0),
        }
    }
}

/// Boundary data: Dirichlet `g` (a closed form on the whole domain), flux `q`
/// and Robin coefficient `b` on `Gamma_N`.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    pub g: ScalarFn,
    pub q: ScalarFn,
    pub b: RobinCoeff,
}

impl BoundaryData {
    pub fn homogeneous() -> Self {
        Self { g: ScalarFn::zero(), q: ScalarFn::zero(), b: RobinCoeff::Zero }
    }
}

/// Pointwise reaction term `f(u)` for the splitting driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reaction {
    None,
    /// `f(u) = u`
    Linear,
    /// `f(u) = u - u^3`
    GinzburgLandau,
}

impl Reaction {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" | "zero" => Ok(Self::None),
            "linear" => Ok(Self::Linear),
            "ginzburg_landau" | "u_minus_u3" => Ok(Self::GinzburgLandau),
            _ => Err(CemError::InvalidInput(format!("unknown reaction '{name}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Linear => "linear",
            Self::GinzburgLandau => "ginzburg_landau",
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Linear => u,
            Self::GinzburgLandau => u - u * u * u,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Linear => 1.0,
            Self::GinzburgLandau => 1.0 - 3.0 * u * u,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn homogeneous_limit() {
        let m = builtin_medium(20, 20, 1.0, MediumPattern::Inclusions, 7).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn contrast_is_exact_and_deterministic() {
        for pattern in [MediumPattern::Inclusions, MediumPattern::Channels] {
            for n in [16, 200] {
                let a = builtin_medium(n, n, 1e4, pattern, 42).unwrap();
                let b = builtin_medium(n, n, 1e4, pattern, 42).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.kappa_min(), 1.0);
                assert_eq!(a.kappa_max(), 1e4);
                assert_eq!(a.contrast(), 1e4);
            }
        }
        let a = builtin_medium(50, 50, 1e4, MediumPattern::Inclusions, 1).unwrap();
        let b = builtin_medium(50, 50, 1e4, MediumPattern::Inclusions, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn medium_validation() {
        assert!(matches!(
            MediumField::new(2, 1, vec![1.0, 0.0]),
            Err(CemError::NonPositiveCoefficient { cell: 1, .. })
        ));
        assert!(MediumField::new(2, 2, vec![1.0]).is_err());
        assert!(builtin_medium(4, 4, 0.5, MediumPattern::Uniform, 0).is_err());
    }

    #[test]
    fn medium_text_round_trip() {
        let m = builtin_medium(8, 6, 1e3, MediumPattern::Channels, 3).unwrap();
        let back = MediumField::parse(&m.to_text(), false).unwrap();
        assert_eq!(m, back);
        let csv = "2,2\n1,2\n3,4\n";
        let c = MediumField::parse(csv, true).unwrap();
        assert_eq!(c.at(0, 1), 3.0);
        assert!(MediumField::parse("2 2\n1 2\n3\n", false).is_err());
        assert!(MediumField::parse("2 2\n1 2\n", false).is_err());
    }

    #[test]
    fn resample_at_centers() {
        let m = MediumField::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = FineGrid::new(crate::grid::DomainSpec::unit_square(), 4, 4).unwrap();
        let r = m.resample(&g).unwrap();
        assert_eq!(r.at(0, 0), 1.0);
        assert_eq!(r.at(3, 0), 2.0);
        assert_eq!(r.at(1, 3), 3.0);
        assert_eq!(r.at(2, 2), 4.0);
    }

    #[test]
    fn vortex_closed_form() {
        let v = builtin_velocity("vortex", 0.0).unwrap();
        // cos(4.5 pi) vanishes, so the field is zero here.
        let b = v.eval([0.25, 0.25]);
        let c = (4.5 * PI).cos();
        let s = (4.5 * PI).sin();
        assert_relative_eq!(b[0], c * s, epsilon = 1e-15);
        assert_relative_eq!(b[1], -c * s, epsilon = 1e-15);
        assert!(b[0].abs() < 1e-14 && b[1].abs() < 1e-14);
        let p = [1.0 / 36.0, 0.0];
        assert_relative_eq!(v.eval(p)[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn inflow_outflow_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vortex = builtin_velocity("vortex", 3.0).unwrap();
        let zero_in = builtin_velocity("inflow", 0.0).unwrap();
        let inflow = builtin_velocity("inflow", 2.5).unwrap();
        let outflow = builtin_velocity("outflow", 2.5).unwrap();
        for _ in 0..10 {
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            assert_eq!(zero_in.eval(p), vortex.eval(p));
            let a = inflow.eval(p);
            let b = outflow.eval(p);
            assert_eq!(a, [-b[0], -b[1]]);
        }
        assert!(builtin_velocity("swirl", 1.0).is_err());
        assert_eq!(builtin_velocity("constant:1,0", 0.0).unwrap().eval([0.3, 0.3]), [1.0, 0.0]);
    }

    #[test]
    fn builtin_velocities_are_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for (mode, c) in [("vortex", 0.0), ("inflow", 2.0), ("outflow", 4.0), ("rotation", 3.0), ("constant:1,2", 0.0)] {
            let v = builtin_velocity(mode, c).unwrap();
            let scale = v.scale().max(1.0);
            for _ in 0..100 {
                let p = [rng.random_range(0.01..0.99), rng.random_range(0.01..0.99)];
                let dx = (v.eval([p[0] + h, p[1]])[0] - v.eval([p[0] - h, p[1]])[0]) / (2.0 * h);
                let dy = (v.eval([p[0], p[1] + h])[1] - v.eval([p[0], p[1] - h])[1]) / (2.0 * h);
                assert!((dx + dy).abs() <= 1e-8 * scale, "{mode}: {}", dx + dy);
            }
        }
    }

    #[test]
    fn kappa_tilde_scaling() {
        let m = MediumField::uniform(10, 10, 1.0).unwrap();
        let v = VelocityField::new(VelocityMode::Constant([0.6, 0.8]), 0.0);
        let k = kappa_tilde(&m, v, 0.1, DEFAULT_C).unwrap();
        assert_relative_eq!(k.eval([0.3, 0.4]), 2400.0, max_relative = 1e-14);
        let k2 = kappa_tilde(&m, v, 0.2, DEFAULT_C).unwrap();
        assert_relative_eq!(k2.eval([0.3, 0.4]) * 4.0, k.eval([0.3, 0.4]), max_relative = 1e-14);
        let vortex = builtin_velocity("vortex", 0.0).unwrap();
        let hi = builtin_medium(10, 10, 1e4, MediumPattern::Inclusions, 0).unwrap();
        let k = kappa_tilde(&hi, vortex, 0.1, DEFAULT_C).unwrap();
        assert_relative_eq!(k.eval([0.25, 0.25]), 24.0 * 100.0 * 1e4, max_relative = 1e-14);
        assert!(kappa_tilde(&m, v, 0.0, DEFAULT_C).is_err());
    }

    #[test]
    fn catalog() {
        let f = ScalarFn::from_catalog("x1sq_plus_exp").unwrap();
        assert_relative_eq!(f.eval([1.0, 1.0], 0.0), 1.0 + std::f64::consts::E, max_relative = 1e-15);
        let d = ScalarFn::from_catalog("decay_exp").unwrap();
        let (p, t) = ([0.3, 0.7], 0.4);
        let fd = (d.eval(p, t + 1e-6) - d.eval(p, t - 1e-6)) / 2e-6;
        assert_relative_eq!(d.eval_dt(p, t).unwrap(), fd, max_relative = 1e-8);
        let r = ScalarFn::from_catalog("ramp_bumps").unwrap();
        let fd = (r.eval(p, t + 1e-6) - r.eval(p, t - 1e-6)) / 2e-6;
        assert_relative_eq!(r.eval_dt(p, t).unwrap(), fd, max_relative = 1e-6);
        assert_eq!(ScalarFn::from_catalog("constant:2.5").unwrap().eval(p, 0.0), 2.5);
        assert!(ScalarFn::from_catalog("nope").is_err());
        assert!(ScalarFn::from_catalog("zero").unwrap().is_zero());
        let q = ScalarFn::from_catalog("side_flux").unwrap();
        assert_eq!(q.eval([0.0, 0.5], 0.0), -1.0);
        assert_eq!(q.eval([1.0, 0.5], 0.0), 1.0);
        assert_eq!(q.eval([0.7, 0.0], 0.0), 1.0);
        assert_eq!(q.eval([0.3, 0.0], 0.0), 0.0);
    }

    #[test]
    fn reactions() {
        assert_eq!(Reaction::GinzburgLandau.eval(2.0), -6.0);
        assert_eq!(Reaction::GinzburgLandau.derivative(1.0), -2.0);
        assert!(Reaction::from_name("cubic").is_err());
    }
}
