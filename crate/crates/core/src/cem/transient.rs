//! Time-dependent boundary correctors.
//!
//! At `t = 0` the correctors solve the static local problems. Afterwards,
//! each step solves `(X + M / tau) D^{n+1} + s-term = rhs` on every patch,
//! with `X` the operator of the chosen scheme.

use rayon::prelude::*;

use super::{element_flux_rhs, patch_groups, FormKind, Layers, MultiscaleSpace, PatchGroup, PatchSystem, PatchVec};
use crate::assembly::{interpolate, interpolate_with, BoxForms, SparseOperator};
use crate::error::{CemError, Result};
use crate::fields::ScalarFn;
use crate::instance::Instance;
use crate::spectral::AuxSpace;

/// Boundary data sampled on the time levels `t_n = n tau`, `n = 0..=steps`.
#[derive(Clone, Debug)]
pub struct TimeSource {
    pub tau: f64,
    pub g_tilde: Vec<Vec<f64>>,
    /// `d/dt g~`: exact when available, otherwise a backward difference
    /// (zero at `n = 0`).
    pub g_tilde_t: Vec<Vec<f64>>,
    pub q: ScalarFn,
    pub g_zero: bool,
}

impl TimeSource {
    pub fn new(inst: &Instance, g: &ScalarFn, q: &ScalarFn, tau: f64, steps: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CemError::InvalidInput(format!("time step must be positive, got {tau}")));
        }
        let fine = inst.fine();
        let mut g_tilde = Vec::with_capacity(steps + 1);
        let mut g_tilde_t = Vec::with_capacity(steps + 1);
        for n in 0..=steps {
            let t = n as f64 * tau;
            let gn = interpolate(g, fine, t)?;
            let dt = if g.is_zero() {
                vec![0.0; gn.len()]
            } else if g.has_dt() {
                interpolate_with(|p| g.eval_dt(p, t).unwrap_or(0.0), fine)?
            } else if n == 0 {
                vec![0.0; gn.len()]
            } else {
                let prev: &Vec<f64> = &g_tilde[n - 1];
                gn.iter().zip(prev).map(|(a, b)| (a - b) / tau).collect()
            };
            g_tilde.push(gn);
            g_tilde_t.push(dt);
        }
        Ok(Self { tau, g_tilde, g_tilde_t, q: q.clone(), g_zero: g.is_zero() })
    }

    pub fn steps(&self) -> usize {
        self.g_tilde.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }
}

/// `D^n` and `N^n` for `n = 0..=steps`.
#[derive(Clone, Debug)]
pub struct CorrectorTrajectory {
    pub kind: FormKind,
    pub tau: f64,
    pub d: Vec<Vec<f64>>,
    pub n: Vec<Vec<f64>>,
}

impl CorrectorTrajectory {
    pub fn steps(&self) -> usize {
        self.d.len() - 1
    }

    /// `(D^n - D^{n-1}) / tau`
    pub fn d_rate(&self, n: usize) -> Vec<f64> {
        rate(&self.d, n, self.tau)
    }

    pub fn n_rate(&self, n: usize) -> Vec<f64> {
        rate(&self.n, n, self.tau)
    }
}

fn rate(v: &[Vec<f64>], n: usize, tau: f64) -> Vec<f64> {
    if n == 0 {
        return vec![0.0; v[0].len()];
    }
    v[n].iter().zip(&v[n - 1]).map(|(a, b)| (a - b) / tau).collect()
}

/// Local corrector values of one patch, in its free numbering.
#[derive(Clone, Debug)]
struct GroupLocals {
    d: Option<Vec<f64>>,
    n: Option<Vec<f64>>,
}

struct GroupRun {
    basis: Vec<PatchVec>,
    d: Vec<PatchVec>,
    n: Vec<PatchVec>,
    last: GroupLocals,
}

struct Members {
    forms: Vec<BoxForms>,
}

fn flux_rhs(inst: &Instance, sys: &PatchSystem, grp: &PatchGroup, q: &ScalarFn, t: f64) -> Vec<f64> {
    let mut b = vec![0.0; sys.n_free()];
    for &e in &grp.members {
        if let Some((cells, y)) = element_flux_rhs(inst, e, q, t) {
            sys.add_box_to_free(&cells, &y, &mut b);
        }
    }
    b
}

fn dirichlet_rhs(inst: &Instance, sys: &PatchSystem, members: &Members, kind: FormKind, g: &[f64], gt: Option<&[f64]>) -> Vec<f64> {
    let fine = inst.fine();
    let mut b = vec![0.0; sys.n_free()];
    for f in &members.forms {
        let op = match kind {
            FormKind::Acal => f.acal_form(),
            FormKind::AForm => f.a_form(),
        };
        let mut y = op.mul_vec(&f.cells.gather(fine, g));
        if let Some(gt) = gt {
            f.mass.mul_vec_add(1.0, &f.cells.gather(fine, gt), &mut y);
        }
        sys.add_box_to_free(&f.cells, &y, &mut b);
    }
    b
}

#[allow(clippy::too_many_arguments)]
fn run_group(
    inst: &Instance,
    aux: &AuxSpace,
    grp: &PatchGroup,
    kind: FormKind,
    src: &TimeSource,
    start: Option<(usize, &GroupLocals)>,
    end: usize,
    with_basis: bool,
    active: (bool, bool),
) -> Result<GroupRun> {
    let (d_on, n_on) = active;
    let op = kind.global(inst);
    let members = Members { forms: grp.members.iter().map(|&e| inst.element_forms(e)).collect::<Result<_>>()? };
    let mut basis = Vec::new();
    let mut d_out = Vec::new();
    let mut n_out = Vec::new();
    let (n0, mut locals) = match start {
        Some((n0, loc)) => (n0, loc.clone()),
        None => {
            let sys = PatchSystem::new(inst, aux, grp, op)?;
            let mut rhs: Vec<(Vec<f64>, Vec<(usize, f64)>)> = Vec::new();
            if with_basis {
                for &e in &grp.members {
                    for j in 0..aux.l {
                        rhs.push((vec![0.0; sys.n_free()], vec![(sys.q_index(e, j), 1.0)]));
                    }
                }
            }
            let nb = rhs.len();
            if d_on {
                rhs.push((dirichlet_rhs(inst, &sys, &members, kind, &src.g_tilde[0], None), Vec::new()));
            }
            if n_on {
                rhs.push((flux_rhs(inst, &sys, grp, &src.q, 0.0), Vec::new()));
            }
            let mut sol = sys.solve_many(&rhs)?;
            let n_loc = if n_on { sol.pop() } else { None };
            let d_loc = if d_on { sol.pop() } else { None };
            basis = sol[..nb].iter().map(|x| sys.to_patchvec(x)).collect();
            if let Some(d) = &d_loc {
                d_out.push(sys.to_patchvec(d));
            }
            if let Some(n) = &n_loc {
                n_out.push(sys.to_patchvec(n));
            }
            (0, GroupLocals { d: d_loc, n: n_loc })
        }
    };
    if end > n0 && (d_on || n_on) {
        let step_op = SparseOperator::lin_comb(&[(1.0, op), (1.0 / src.tau, &inst.forms.mass)])?;
        let sys = PatchSystem::new(inst, aux, grp, &step_op)?;
        let m_ff: SparseOperator = sys.restrict_free(inst.fine(), &inst.forms.mass)?;
        for k in n0..end {
            let t = src.time(k + 1);
            let mut rhs = Vec::new();
            if let Some(d) = &locals.d {
                let mut b = dirichlet_rhs(inst, &sys, &members, kind, &src.g_tilde[k + 1], Some(&src.g_tilde_t[k + 1]));
                m_ff.mul_vec_add(1.0 / src.tau, d, &mut b);
                rhs.push((b, Vec::new()));
            }
            if let Some(n) = &locals.n {
                let mut b = flux_rhs(inst, &sys, grp, &src.q, t);
                m_ff.mul_vec_add(1.0 / src.tau, n, &mut b);
                rhs.push((b, Vec::new()));
            }
            let mut sol = sys.solve_many(&rhs)?;
            if locals.n.is_some() {
                let n = sol.pop().expect("neumann column");
                n_out.push(sys.to_patchvec(&n));
                locals.n = Some(n);
            }
            if locals.d.is_some() {
                let d = sol.pop().expect("dirichlet column");
                d_out.push(sys.to_patchvec(&d));
                locals.d = Some(d);
            }
        }
    }
    Ok(GroupRun { basis, d: d_out, n: n_out, last: locals })
}

fn activity(inst: &Instance, src: &TimeSource) -> (bool, bool) {
    (!src.g_zero, inst.bp.has_neumann() && !src.q.is_zero())
}

/// Corrector trajectory over all time levels of `src`, optionally together
/// with the multiscale basis (only for [`FormKind::Acal`]).
pub fn corrector_trajectory(
    inst: &Instance,
    aux: &AuxSpace,
    layers: Layers,
    kind: FormKind,
    src: &TimeSource,
    with_basis: bool,
) -> Result<(Option<MultiscaleSpace>, CorrectorTrajectory)> {
    if with_basis && kind != FormKind::Acal {
        return Err(CemError::InvalidInput("the multiscale basis is defined with the Acal form".into()));
    }
    let fine = inst.fine();
    let nn = fine.num_nodes();
    let steps = src.steps();
    let active = activity(inst, src);
    let mut traj = CorrectorTrajectory { kind, tau: src.tau, d: vec![vec![0.0; nn]; steps + 1], n: vec![vec![0.0; nn]; steps + 1] };
    let mut columns: Vec<Option<PatchVec>> = vec![None; if with_basis { aux.num_functions() } else { 0 }];
    if !with_basis && !active.0 && !active.1 {
        return Ok((None, traj));
    }
    let groups = patch_groups(inst, layers)?;
    for chunk in groups.chunks(32) {
        let runs = chunk
            .par_iter()
            .map(|grp| run_group(inst, aux, grp, kind, src, None, steps, with_basis, active))
            .collect::<Result<Vec<_>>>()?;
        for (grp, run) in chunk.iter().zip(runs) {
            let mut it = run.basis.into_iter();
            if with_basis {
                for &e in &grp.members {
                    for j in 0..aux.l {
                        columns[e * aux.l + j] = it.next();
                    }
                }
            }
            for (k, v) in run.d.iter().enumerate() {
                v.add_to(fine, 1.0, &mut traj.d[k]);
            }
            for (k, v) in run.n.iter().enumerate() {
                v.add_to(fine, 1.0, &mut traj.n[k]);
            }
        }
    }
    let space = with_basis.then(|| MultiscaleSpace {
        layers,
        l: aux.l,
        columns: columns.into_iter().map(|c| c.expect("every column solved")).collect(),
    });
    Ok((space, traj))
}

/// Corrector values at one time level, with the local state needed to
/// advance them.
#[derive(Clone, Debug)]
pub struct CorrectorState {
    pub kind: FormKind,
    pub layers: Layers,
    pub step: usize,
    pub d: Vec<f64>,
    pub n: Vec<f64>,
    groups: Vec<PatchGroup>,
    locals: Vec<GroupLocals>,
}

/// `D^0`, `N^0` from the static local problems.
pub fn transient_corrector_init(
    inst: &Instance,
    aux: &AuxSpace,
    layers: Layers,
    kind: FormKind,
    src: &TimeSource,
) -> Result<CorrectorState> {
    advance(inst, aux, layers, kind, src, None)
}

/// Advances the correctors by one time step.
pub fn transient_corrector_step(
    inst: &Instance,
    aux: &AuxSpace,
    state: &CorrectorState,
    src: &TimeSource,
) -> Result<CorrectorState> {
    if state.step >= src.steps() {
        return Err(CemError::InvalidInput(format!("time source ends at step {}", src.steps())));
    }
    advance(inst, aux, state.layers, state.kind, src, Some(state))
}

fn advance(
    inst: &Instance,
    aux: &AuxSpace,
    layers: Layers,
    kind: FormKind,
    src: &TimeSource,
    prev: Option<&CorrectorState>,
) -> Result<CorrectorState> {
    let fine = inst.fine();
    let nn = fine.num_nodes();
    let active = activity(inst, src);
    let groups = match prev {
        Some(p) => p.groups.clone(),
        None => patch_groups(inst, layers)?,
    };
    let step = prev.map_or(0, |p| p.step + 1);
    let mut d = vec![0.0; nn];
    let mut n = vec![0.0; nn];
    let mut locals = Vec::with_capacity(groups.len());
    for (ci, chunk) in groups.chunks(32).enumerate() {
        let runs = chunk
            .par_iter()
            .enumerate()
            .map(|(k, grp)| {
                let start = prev.map(|p| (p.step, &p.locals[ci * 32 + k]));
                run_group(inst, aux, grp, kind, src, start, step, false, active)
            })
            .collect::<Result<Vec<_>>>()?;
        for run in runs {
            if let Some(v) = run.d.last() {
                v.add_to(fine, 1.0, &mut d);
            }
            if let Some(v) = run.n.last() {
                v.add_to(fine, 1.0, &mut n);
            }
            locals.push(run.last);
        }
    }
    Ok(CorrectorState { kind, layers, step, d, n, groups, locals })
}
