use std::time::Instant;

use faer::Mat;

use super::{assemble_solution, check_finite, load_vector, DenseLu, Scheme, SchemeConfig, Timings};
use crate::assembly::SparseOperator;
use crate::cem::{build_ms_basis, corrector_trajectory, CorrectorTrajectory, FormKind, Layers, MultiscaleSpace, TimeSource};
use crate::error::{CemError, Result};
use crate::fields::Reaction;
use crate::instance::Instance;
use crate::spectral::{build_aux_space, lambda_stats};

#[derive(Clone, Debug, PartialEq)]
pub struct TransientState {
    pub step: usize,
    pub time: f64,
    pub coeffs: Vec<f64>,
    pub d: Vec<f64>,
    pub n: Vec<f64>,
    pub u_ms: Vec<f64>,
    pub scheme: Scheme,
}

/// Reduced operators of one scheme and time step, factorized once.
pub struct TransientSystem<'a> {
    inst: &'a Instance,
    space: &'a MultiscaleSpace,
    pub scheme: Scheme,
    pub tau: f64,
    gram: Mat<f64>,
    gram_lu: DenseLu,
    step_lu: DenseLu,
}

impl<'a> TransientSystem<'a> {
    pub fn new(inst: &'a Instance, space: &'a MultiscaleSpace, scheme: Scheme, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CemError::InvalidInput(format!("time step must be positive, got {tau}")));
        }
        let fine = inst.fine();
        let gram = space.galerkin(fine, &inst.forms.mass);
        let form = space.galerkin(fine, implicit_form(inst, scheme));
        let lhs = Mat::from_fn(gram.nrows(), gram.ncols(), |i, j| gram[(i, j)] / tau + form[(i, j)]);
        Ok(Self { inst, space, scheme, tau, gram_lu: DenseLu::new(&gram)?, step_lu: DenseLu::new(&lhs)?, gram })
    }

    fn check(&self, traj: &CorrectorTrajectory, src: &TimeSource) -> Result<()> {
        if traj.kind != corrector_kind(self.scheme) {
            return Err(CemError::InvalidInput("corrector trajectory does not match the scheme".into()));
        }
        if (traj.tau - self.tau).abs() > 1e-14 * self.tau || (src.tau - self.tau).abs() > 1e-14 * self.tau {
            return Err(CemError::InvalidInput("time step mismatch".into()));
        }
        if traj.steps() != src.steps() {
            return Err(CemError::InvalidInput("corrector trajectory and data cover different steps".into()));
        }
        Ok(())
    }

    /// `z^n = g~^n - D^n + N^n`
    fn lift(&self, traj: &CorrectorTrajectory, src: &TimeSource, n: usize) -> Vec<f64> {
        let (g, d, nc) = (&src.g_tilde[n], &traj.d[n], &traj.n[n]);
        (0..g.len()).map(|i| g[i] - d[i] + nc[i]).collect()
    }

    /// `(f, v) + (q, v) - X(z, v) - (z_t, v)` at level `n`.
    fn data_rhs(&self, traj: &CorrectorTrajectory, src: &TimeSource, n: usize, z: &[f64]) -> Result<Vec<f64>> {
        let inst = self.inst;
        let mut r = load_vector(inst, src.time(n))?;
        implicit_form(inst, self.scheme).mul_vec_add(-1.0, z, &mut r);
        let (dr, nr) = (traj.d_rate(n), traj.n_rate(n));
        let gt = &src.g_tilde_t[n];
        let zt: Vec<f64> = (0..z.len()).map(|i| gt[i] - dr[i] + nr[i]).collect();
        inst.forms.mass.mul_vec_add(-1.0, &zt, &mut r);
        Ok(r)
    }

    fn finish(&self, n: usize, coeffs: Vec<f64>, traj: &CorrectorTrajectory, src: &TimeSource) -> Result<TransientState> {
        let u_ms = assemble_solution(self.inst, self.space, &coeffs, &traj.d[n], &traj.n[n], &src.g_tilde[n]);
        check_finite(&u_ms, "transient solution")?;
        Ok(TransientState {
            step: n,
            time: src.time(n),
            coeffs,
            d: traj.d[n].clone(),
            n: traj.n[n].clone(),
            u_ms,
            scheme: self.scheme,
        })
    }

    /// `P^T M P c = P^T M (u_init - g~ + D - N)` at `t = 0`.
    pub fn init(&self, traj: &CorrectorTrajectory, src: &TimeSource, u_init: &[f64]) -> Result<TransientState> {
        self.check(traj, src)?;
        let z = self.lift(traj, src, 0);
        let w: Vec<f64> = u_init.iter().zip(&z).map(|(u, z)| u - z).collect();
        let fine = self.inst.fine();
        let c = self.gram_lu.solve(&self.space.project(fine, &self.inst.forms.mass.mul_vec(&w)))?;
        self.finish(0, c, traj, src)
    }

    /// One Backward Euler step.
    pub fn step(&self, state: &TransientState, traj: &CorrectorTrajectory, src: &TimeSource) -> Result<TransientState> {
        self.check(traj, src)?;
        let n1 = state.step + 1;
        if n1 > src.steps() {
            return Err(CemError::InvalidInput(format!("time data ends at step {}", src.steps())));
        }
        let z = self.lift(traj, src, n1);
        let mut r = self.data_rhs(traj, src, n1, &z)?;
        if self.scheme == Scheme::D {
            self.inst.forms.c_conv.mul_vec_add(-1.0, &state.u_ms, &mut r);
        }
        let mut b = self.space.project(self.inst.fine(), &r);
        let gc = mat_vec(&self.gram, &state.coeffs);
        b.iter_mut().zip(&gc).for_each(|(bi, gi)| *bi += gi / self.tau);
        let c = self.step_lu.solve(&b)?;
        self.finish(n1, c, traj, src)
    }

    /// Linear part of a Strang step: Backward Euler from the fine vector
    /// `w` with the extra source `extra` (already a load vector).
    fn linear_from(&self, w: &[f64], extra: &[f64], traj: &CorrectorTrajectory, src: &TimeSource, n1: usize) -> Result<TransientState> {
        let z = self.lift(traj, src, n1);
        let mut r = self.data_rhs(traj, src, n1, &z)?;
        let mass = &self.inst.forms.mass;
        mass.mul_vec_add(1.0 / self.tau, w, &mut r);
        r.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
        let c = self.step_lu.solve(&self.space.project(self.inst.fine(), &r))?;
        self.finish(n1, c, traj, src)
    }
}

fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

fn implicit_form(inst: &Instance, scheme: Scheme) -> &SparseOperator {
    match scheme {
        Scheme::CD => &inst.forms.acal,
        Scheme::D => &inst.forms.a_form,
    }
}

fn corrector_kind(scheme: Scheme) -> FormKind {
    match scheme {
        Scheme::CD => FormKind::Acal,
        Scheme::D => FormKind::AForm,
    }
}

/// Initial state from the problem's `u_init`.
pub fn transient_init(sys: &TransientSystem<'_>, traj: &CorrectorTrajectory, src: &TimeSource) -> Result<TransientState> {
    let u0 = crate::assembly::interpolate(&sys.inst.problem.u_init, sys.inst.fine(), 0.0)?;
    sys.init(traj, src, &u0)
}

/// All states `n = 0..=steps`.
pub fn transient_solve(sys: &TransientSystem<'_>, traj: &CorrectorTrajectory, src: &TimeSource) -> Result<Vec<TransientState>> {
    let mut states = vec![transient_init(sys, traj, src)?];
    for _ in 0..src.steps() {
        let next = sys.step(states.last().expect("initial state"), traj, src)?;
        states.push(next);
    }
    Ok(states)
}

/// Integrates `dw/dt = f(w + z) - f(z)` nodewise over `tau_half` with
/// `substeps` classical Runge-Kutta steps.
pub fn nonlinear_substep(w: &[f64], z: &[f64], tau_half: f64, reaction: Reaction, substeps: usize) -> Result<Vec<f64>> {
    if !(tau_half > 0.0 && tau_half.is_finite()) || substeps == 0 {
        return Err(CemError::InvalidInput("nonlinear substep needs tau > 0 and at least one substep".into()));
    }
    if w.len() != z.len() {
        return Err(CemError::InvalidInput("vector sizes differ".into()));
    }
    let h = tau_half / substeps as f64;
    let out: Vec<f64> = w
        .iter()
        .zip(z)
        .map(|(&w0, &zi)| {
            let fz = reaction.eval(zi);
            let rhs = |x: f64| reaction.eval(x + zi) - fz;
            let mut x = w0;
            for _ in 0..substeps {
                let k1 = rhs(x);
                let k2 = rhs(x + 0.5 * h * k1);
                let k3 = rhs(x + 0.5 * h * k2);
                let k4 = rhs(x + h * k3);
                x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            x
        })
        .collect();
    check_finite(&out, "nonlinear substep")?;
    Ok(out)
}

/// One Strang step: half reaction step, CD Backward Euler step with source
/// `f(z)`, half reaction step, relift.
pub fn strang_step(
    sys: &TransientSystem<'_>,
    state: &TransientState,
    traj: &CorrectorTrajectory,
    src: &TimeSource,
    reaction: Reaction,
    substeps: usize,
) -> Result<TransientState> {
    if sys.scheme != Scheme::CD {
        return Err(CemError::InvalidInput("Strang splitting uses the CD scheme".into()));
    }
    sys.check(traj, src)?;
    let n1 = state.step + 1;
    if n1 > src.steps() {
        return Err(CemError::InvalidInput(format!("time data ends at step {}", src.steps())));
    }
    let z0 = sys.lift(traj, src, state.step);
    let z1 = sys.lift(traj, src, n1);
    let w: Vec<f64> = state.u_ms.iter().zip(&z0).map(|(u, z)| u - z).collect();
    let w = nonlinear_substep(&w, &z0, 0.5 * sys.tau, reaction, substeps)?;
    let fz: Vec<f64> = z1.iter().map(|&x| reaction.eval(x)).collect();
    let extra = sys.inst.forms.mass.mul_vec(&fz);
    let lin = sys.linear_from(&w, &extra, traj, src, n1)?;
    let w_lin = sys.space.expand(sys.inst.fine(), &lin.coeffs);
    let w = nonlinear_substep(&w_lin, &z1, 0.5 * sys.tau, reaction, substeps)?;
    let u_ms: Vec<f64> = w.iter().zip(&z1).map(|(a, b)| a + b).collect();
    check_finite(&u_ms, "Strang step")?;
    Ok(TransientState { u_ms, ..lin })
}

/// Output of the transient drivers.
#[derive(Clone, Debug)]
pub struct TransientRun {
    pub states: Vec<TransientState>,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub timings: Timings,
}

impl TransientRun {
    pub fn last(&self) -> &TransientState {
        self.states.last().expect("initial state")
    }
}

fn prepare(
    inst: &Instance,
    l: usize,
    layers: Layers,
    cfg: &SchemeConfig,
) -> Result<(MultiscaleSpace, CorrectorTrajectory, TimeSource, f64, f64, Timings)> {
    let steps = cfg.steps()?;
    let t0 = Instant::now();
    let aux = build_aux_space(inst, l, false)?;
    let t1 = Instant::now();
    let src = TimeSource::new(inst, &inst.problem.data.g, &inst.problem.data.q, cfg.tau, steps)?;
    let kind = corrector_kind(cfg.scheme);
    let (space, traj) = match cfg.scheme {
        Scheme::CD => {
            let (s, t) = corrector_trajectory(inst, &aux, layers, kind, &src, true)?;
            (s.expect("basis requested"), t)
        }
        Scheme::D => {
            let s = build_ms_basis(inst, &aux, layers)?;
            (s, corrector_trajectory(inst, &aux, layers, kind, &src, false)?.1)
        }
    };
    let t2 = Instant::now();
    let (lambda, lambda_prime) = lambda_stats(&aux);
    let timings = Timings { spectral: (t1 - t0).as_secs_f64(), local: (t2 - t1).as_secs_f64(), solve: 0.0 };
    Ok((space, traj, src, lambda, lambda_prime, timings))
}

/// Full Backward Euler run of the instance's problem.
pub fn run_transient(inst: &Instance, l: usize, layers: Layers, cfg: &SchemeConfig) -> Result<TransientRun> {
    let (space, traj, src, lambda, lambda_prime, mut timings) = prepare(inst, l, layers, cfg)?;
    let t0 = Instant::now();
    let sys = TransientSystem::new(inst, &space, cfg.scheme, cfg.tau)?;
    let states = transient_solve(&sys, &traj, &src)?;
    timings.solve = t0.elapsed().as_secs_f64();
    Ok(TransientRun { states, lambda, lambda_prime, timings })
}

/// Strang splitting run with the instance's reaction term.
pub fn run_strang(inst: &Instance, l: usize, layers: Layers, cfg: &SchemeConfig) -> Result<TransientRun> {
    let cfg = SchemeConfig { scheme: Scheme::CD, ..*cfg };
    let (space, traj, src, lambda, lambda_prime, mut timings) = prepare(inst, l, layers, &cfg)?;
    let t0 = Instant::now();
    let sys = TransientSystem::new(inst, &space, Scheme::CD, cfg.tau)?;
    let mut states = vec![transient_init(&sys, &traj, &src)?];
    for _ in 0..src.steps() {
        let next = strang_step(&sys, states.last().expect("initial state"), &traj, &src, inst.problem.reaction, cfg.ode_substeps)?;
        states.push(next);
    }
    timings.solve = t0.elapsed().as_secs_f64();
    Ok(TransientRun { states, lambda, lambda_prime, timings })
}
