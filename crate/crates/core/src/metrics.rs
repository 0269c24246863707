//! Norms, relative errors and convergence tables.

use crate::assembly::SparseOperator;
use crate::error::{CemError, Result};
use crate::grid::FineGrid;
use crate::instance::Instance;
use crate::spectral::{AuxSpace, PiProjector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    /// Mass matrix.
    L2,
    /// `K + R_full`
    A,
    /// Quasi-norm `K + R_half`.
    Acal,
    S,
    /// `Acal` plus `s(pi v, pi v)`.
    B,
    /// `|v(T)|_{L2}^2 + sum_n tau |v^n|_B^2`, left endpoints.
    E,
}

impl NormKind {
    pub fn name(&self) -> &'static str {
        match self {
            NormKind::L2 => "L2",
            NormKind::A => "a",
            NormKind::Acal => "Acal",
            NormKind::S => "s",
            NormKind::B => "B",
            NormKind::E => "E",
        }
    }
}

/// Tolerance for round-off negative quadratic values.
pub const INDEFINITE_TOL: f64 = 1e-12;

fn checked_sqrt(q: f64, scale: f64) -> Result<f64> {
    if !q.is_finite() {
        return Err(CemError::NonFinite("quadratic form".into()));
    }
    if q < -INDEFINITE_TOL * scale.max(1.0) {
        return Err(CemError::Indefinite(q));
    }
    Ok(q.max(0.0).sqrt())
}

fn quad_scale(op: &SparseOperator, v: &[f64]) -> f64 {
    op.max_abs() * v.iter().map(|x| x * x).sum::<f64>()
}

/// Norms on one instance. `aux` is needed for the `B` and `E` kinds.
#[derive(Clone, Copy)]
pub struct Norms<'a> {
    pub inst: &'a Instance,
    pub aux: Option<&'a AuxSpace>,
}

impl<'a> Norms<'a> {
    pub fn new(inst: &'a Instance, aux: Option<&'a AuxSpace>) -> Self {
        Self { inst, aux }
    }

    fn form(&self, kind: NormKind) -> Option<&'a SparseOperator> {
        let f = &self.inst.forms;
        match kind {
            NormKind::L2 => Some(&f.mass),
            NormKind::A => Some(&f.a_form),
            NormKind::Acal | NormKind::B => Some(&f.quasi),
            NormKind::S => Some(&f.s_form),
            NormKind::E => None,
        }
    }

    fn squared(&self, kind: NormKind, v: &[f64]) -> Result<(f64, f64)> {
        if v.len() != self.inst.num_nodes() {
            return Err(CemError::InvalidInput(format!("vector of length {} for {} nodes", v.len(), self.inst.num_nodes())));
        }
        let op = self.form(kind).ok_or_else(|| CemError::InvalidInput("the E norm needs a trajectory".into()))?;
        let mut q = op.quad(v);
        let scale = quad_scale(op, v);
        if kind == NormKind::B {
            let aux = self.aux.ok_or_else(|| CemError::InvalidInput("the B norm needs the auxiliary space".into()))?;
            let c = PiProjector::new(aux).coeffs(self.inst, v);
            q += c.iter().map(|x| x * x).sum::<f64>();
        }
        Ok((q, scale))
    }

    pub fn norm(&self, kind: NormKind, v: &[f64]) -> Result<f64> {
        let (q, scale) = self.squared(kind, v)?;
        checked_sqrt(q, scale)
    }

    /// Time-integrated norm of a trajectory `v^0..v^N`.
    pub fn energy(&self, traj: &[Vec<f64>], tau: f64) -> Result<f64> {
        let Some(last) = traj.last() else {
            return Err(CemError::InvalidInput("empty trajectory".into()));
        };
        let (mut q, mut scale) = self.squared(NormKind::L2, last)?;
        q = q.max(0.0);
        for v in &traj[..traj.len() - 1] {
            let (b, s) = self.squared(NormKind::B, v)?;
            checked_sqrt(b, s)?;
            q += tau * b.max(0.0);
            scale += tau * s;
        }
        checked_sqrt(q, scale)
    }

    /// `|u - u_ref| / |u_ref|`
    pub fn relative_error(&self, kind: NormKind, u: &[f64], u_ref: &[f64]) -> Result<f64> {
        let denom = self.norm(kind, u_ref)?;
        if denom == 0.0 {
            return Err(CemError::InvalidInput(format!("zero reference in the {} norm", kind.name())));
        }
        Ok(self.norm(kind, &diff(u, u_ref)?)? / denom)
    }

    /// Relative error, or the absolute one when the reference vanishes.
    pub fn error(&self, kind: NormKind, u: &[f64], u_ref: &[f64]) -> Result<ErrorValue> {
        let denom = self.norm(kind, u_ref)?;
        let num = self.norm(kind, &diff(u, u_ref)?)?;
        Ok(if denom > 0.0 { ErrorValue { value: num / denom, relative: true } } else { ErrorValue { value: num, relative: false } })
    }
}

fn diff(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(CemError::InvalidInput("vector sizes differ".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorValue {
    pub value: f64,
    pub relative: bool,
}

/// Q1 interpolation of a nodal vector from `from` onto the nodes of `to`.
pub fn prolongate(from: &FineGrid, to: &FineGrid, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != from.num_nodes() {
        return Err(CemError::InvalidInput("vector does not match the source grid".into()));
    }
    if from.domain != to.domain {
        return Err(CemError::InvalidInput("grids cover different domains".into()));
    }
    let d = from.domain;
    let mut out = Vec::with_capacity(to.num_nodes());
    for node in 0..to.num_nodes() {
        let p = to.node_coords(node);
        let sx = ((p[0] - d.x_min) / from.hx).clamp(0.0, from.nx as f64);
        let sy = ((p[1] - d.y_min) / from.hy).clamp(0.0, from.ny as f64);
        let i = (sx.floor() as usize).min(from.nx - 1);
        let j = (sy.floor() as usize).min(from.ny - 1);
        let (a, b) = (sx - i as f64, sy - j as f64);
        let [n0, n1, n2, n3] = from.cell_nodes(i, j);
        out.push((1.0 - a) * (1.0 - b) * v[n0] + a * (1.0 - b) * v[n1] + a * b * v[n2] + (1.0 - a) * b * v[n3]);
    }
    Ok(out)
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub value: f64,
    /// `value / previous value`
    pub ratio: Option<f64>,
}

impl ConvergenceRow {
    /// `3.10E-05(20.8%)`
    pub fn display(&self) -> String {
        match self.ratio {
            Some(r) => format!("{}({:.1}%)", sci(self.value), 100.0 * r),
            None => sci(self.value),
        }
    }
}

pub fn convergence_table(values: &[f64]) -> Vec<ConvergenceRow> {
    values
        .iter()
        .enumerate()
        .map(|(k, &value)| ConvergenceRow { value, ratio: (k > 0).then(|| value / values[k - 1]) })
        .collect()
}

/// Scientific notation with a two-digit exponent, e.g. `1.49E-04`.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.2E}");
    let (m, e) = s.split_once('E').expect("exponent");
    let e: i32 = e.parse().expect("integer exponent");
    format!("{m}E{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

/// Row of `results.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub command: String,
    pub h: f64,
    pub n_ov: String,
    pub l_m: usize,
    pub contrast: f64,
    pub c_flow: f64,
    pub scheme: String,
    pub tau: Option<f64>,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub e_a: Option<f64>,
    pub e_l: Option<f64>,
    pub d_a: Option<f64>,
    pub d_l: Option<f64>,
    pub n_a: Option<f64>,
    pub n_l: Option<f64>,
    pub wall_s: f64,
}

impl ErrorReport {
    pub const COLUMNS: [&'static str; 17] = [
        "command", "H", "Nov", "lm", "contrast", "cflow", "scheme", "tau", "Lambda", "LambdaPrime", "E_a", "E_L", "D_a",
        "D_L", "N_a", "N_L", "wall_s",
    ];

    pub fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        vec![
            self.command.clone(),
            num(self.h),
            self.n_ov.clone(),
            self.l_m.to_string(),
            num(self.contrast),
            num(self.c_flow),
            self.scheme.clone(),
            opt(self.tau),
            num(self.lambda),
            num(self.lambda_prime),
            opt(self.e_a),
            opt(self.e_l),
            opt(self.d_a),
            opt(self.d_l),
            opt(self.n_a),
            opt(self.n_l),
            format!("{:.3}", self.wall_s),
        ]
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6e}")
    }
}
