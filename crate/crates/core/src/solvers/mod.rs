//! Multiscale solves: steady, Backward Euler (CD and D variants), Strang
//! splitting for reaction terms, and the fine-scale reference.

mod reference;
mod transient;

pub use reference::{reference_steady, reference_transient, ReferenceTrajectory};
pub use transient::{
    nonlinear_substep, run_strang, run_transient, strang_step, transient_init, transient_solve, TransientRun,
    TransientState, TransientSystem,
};

use std::time::Instant;

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::Solve;
use faer::Mat;

use crate::assembly::{boundary_load_filtered, interpolate};
use crate::cem::{build_space_and_correctors, CorrectorSet, Layers, MultiscaleSpace};
use crate::error::{CemError, Result};
use crate::instance::Instance;
use crate::spectral::{build_aux_space, lambda_stats};

/// Backward Euler variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Convection and diffusion implicit.
    CD,
    /// Diffusion implicit, convection explicit.
    D,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::CD => "CD",
            Scheme::D => "D",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "CD" | "cd" => Ok(Scheme::CD),
            "D" | "d" | "Dapp" | "dapp" => Ok(Scheme::D),
            _ => Err(CemError::InvalidInput(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub tau: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub ode_substeps: usize,
}

impl SchemeConfig {
    pub const DEFAULT_ODE_SUBSTEPS: usize = 10;

    pub fn new(tau: f64, t_end: f64, scheme: Scheme) -> Result<Self> {
        let cfg = Self { tau, t_end, scheme, ode_substeps: Self::DEFAULT_ODE_SUBSTEPS };
        cfg.steps()?;
        Ok(cfg)
    }

    /// `T / tau`, which must be a positive integer.
    pub fn steps(&self) -> Result<usize> {
        if !(self.tau > 0.0 && self.tau.is_finite() && self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CemError::InvalidInput(format!("need tau > 0 and T > 0, got tau={} T={}", self.tau, self.t_end)));
        }
        let n = (self.t_end / self.tau).round();
        if n < 1.0 || (n * self.tau - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(CemError::InvalidInput(format!(
                "T={} is not an integer multiple of tau={}",
                self.t_end, self.tau
            )));
        }
        if self.ode_substeps == 0 {
            return Err(CemError::InvalidInput("ode_substeps must be positive".into()));
        }
        Ok(n as usize)
    }
}

/// Wall-clock seconds per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub spectral: f64,
    /// Basis functions and correctors, built together.
    pub local: f64,
    pub solve: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.spectral + self.local + self.solve
    }
}

#[derive(Clone, Debug)]
pub struct SteadySolution {
    pub coeffs: Vec<f64>,
    pub u_ms: Vec<f64>,
    pub correctors: CorrectorSet,
    pub g_tilde: Vec<f64>,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub timings: Timings,
}

/// `(f, v) + (q, v)_{Gamma_N}` at time `t`.
pub fn load_vector(inst: &Instance, t: f64) -> Result<Vec<f64>> {
    let fine = inst.fine();
    let f = interpolate(&inst.problem.source, fine, t)?;
    let mut out = if inst.problem.source.is_zero() { vec![0.0; fine.num_nodes()] } else { inst.forms.mass.mul_vec(&f) };
    if inst.bp.has_neumann() && !inst.problem.data.q.is_zero() {
        let fb = boundary_load_filtered(&inst.problem.data.q, &inst.bp, fine, t, |_| true);
        out.iter_mut().zip(&fb).for_each(|(o, b)| *o += b);
    }
    check_finite(&out, "load vector")?;
    Ok(out)
}

pub(crate) fn check_finite(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(CemError::NonFinite(format!("{what} at index {i}"))),
        None => Ok(()),
    }
}

/// Dense LU of a reduced system.
pub(crate) struct DenseLu {
    lu: PartialPivLu<f64>,
    n: usize,
}

impl DenseLu {
    pub fn new(a: &Mat<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(CemError::InvalidInput("reduced system is not square".into()));
        }
        if a.nrows() == 0 {
            return Err(CemError::Singular("empty reduced system".into()));
        }
        Ok(Self { lu: a.partial_piv_lu(), n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(CemError::Singular("reduced system".into()));
        }
        Ok(out)
    }
}

/// `u = P c - D + N + g~`
pub fn assemble_solution(inst: &Instance, space: &MultiscaleSpace, coeffs: &[f64], d: &[f64], n: &[f64], g_tilde: &[f64]) -> Vec<f64> {
    let mut u = space.expand(inst.fine(), coeffs);
    for i in 0..u.len() {
        u[i] += g_tilde[i] - d[i] + n[i];
    }
    u
}

/// Galerkin solve in the multiscale space with given correctors.
pub fn steady_solve(inst: &Instance, space: &MultiscaleSpace, correctors: &CorrectorSet, g_tilde: &[f64]) -> Result<SteadySolution> {
    let t0 = Instant::now();
    let fine = inst.fine();
    let nn = fine.num_nodes();
    if g_tilde.len() != nn || correctors.d.len() != nn || correctors.n.len() != nn {
        return Err(CemError::InvalidInput("vector sizes do not match the instance".into()));
    }
    let mut r = load_vector(inst, 0.0)?;
    let z: Vec<f64> = (0..nn).map(|i| g_tilde[i] - correctors.d[i] + correctors.n[i]).collect();
    inst.forms.acal.mul_vec_add(-1.0, &z, &mut r);
    let a = space.galerkin(fine, &inst.forms.acal);
    let coeffs = DenseLu::new(&a)?.solve(&space.project(fine, &r))?;
    let u_ms = assemble_solution(inst, space, &coeffs, &correctors.d, &correctors.n, g_tilde);
    check_finite(&u_ms, "multiscale solution")?;
    Ok(SteadySolution {
        coeffs,
        u_ms,
        correctors: correctors.clone(),
        g_tilde: g_tilde.to_vec(),
        lambda: f64::NAN,
        lambda_prime: f64::NAN,
        timings: Timings { solve: t0.elapsed().as_secs_f64(), ..Timings::default() },
    })
}

/// Spectral problems, basis, correctors and the reduced solve.
pub fn steady_pipeline(inst: &Instance, l: usize, layers: Layers) -> Result<SteadySolution> {
    let t0 = Instant::now();
    let aux = build_aux_space(inst, l, false)?;
    let t1 = Instant::now();
    let g = interpolate(&inst.problem.data.g, inst.fine(), 0.0)?;
    let (space, set) = build_space_and_correctors(inst, &aux, layers, &g, &inst.problem.data.q, 0.0)?;
    let t2 = Instant::now();
    let mut sol = steady_solve(inst, &space, &set, &g)?;
    let (lambda, lambda_prime) = lambda_stats(&aux);
    sol.lambda = lambda;
    sol.lambda_prime = lambda_prime;
    sol.timings.spectral = (t1 - t0).as_secs_f64();
    sol.timings.local = (t2 - t1).as_secs_f64();
    Ok(sol)
}

#[cfg(test)]
mod tests;
