use crate::assembly::{interpolate, SparseOperator};
use crate::error::{CemError, Result};
use crate::fields::Reaction;
use crate::instance::Instance;

use super::{check_finite, load_vector};

/// Dirichlet elimination: solves `op u = b` on the free nodes with `u = g~`
/// on `Gamma_D`.
struct Eliminated {
    free: Vec<usize>,
    op_ff: crate::assembly::SparseLu,
}

impl Eliminated {
    fn new(inst: &Instance, op: &SparseOperator) -> Result<Self> {
        let free = inst.bp.free_dofs();
        if free.is_empty() {
            return Err(CemError::InvalidInput("no free degrees of freedom".into()));
        }
        let op_ff = op.restrict(&free)?.lu()?;
        Ok(Self { free, op_ff })
    }

    fn solve(&self, inst: &Instance, op: &SparseOperator, b: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let mask = inst.bp.dirichlet_mask();
        let u_d: Vec<f64> = g.iter().zip(mask).map(|(&v, &d)| if d { v } else { 0.0 }).collect();
        let mut r = b.to_vec();
        op.mul_vec_add(-1.0, &u_d, &mut r);
        let rf: Vec<f64> = self.free.iter().map(|&i| r[i]).collect();
        let x = self.op_ff.solve(&rf)?;
        let mut u = u_d;
        for (&i, xi) in self.free.iter().zip(x) {
            u[i] = xi;
        }
        Ok(u)
    }
}

/// Fine Q1 solution of the steady problem.
pub fn reference_steady(inst: &Instance) -> Result<Vec<f64>> {
    let op = &inst.forms.acal;
    let g = interpolate(&inst.problem.data.g, inst.fine(), 0.0)?;
    let b = load_vector(inst, 0.0)?;
    let u = Eliminated::new(inst, op)?.solve(inst, op, &b, &g)?;
    check_finite(&u, "reference solution")?;
    Ok(u)
}

/// Recorded states of a fine time integration.
#[derive(Clone, Debug)]
pub struct ReferenceTrajectory {
    pub tau: f64,
    /// `(step, u)` pairs, ascending.
    pub states: Vec<(usize, Vec<f64>)>,
}

impl ReferenceTrajectory {
    pub fn last(&self) -> &[f64] {
        &self.states.last().expect("at least the initial state").1
    }

    pub fn at_step(&self, n: usize) -> Option<&[f64]> {
        self.states.iter().find(|(k, _)| *k == n).map(|(_, v)| v.as_slice())
    }
}

/// Backward Euler with the full `Acal` form; a reaction term is taken
/// explicitly. Records every `record_every`-th state and the last one.
pub fn reference_transient(inst: &Instance, tau: f64, steps: usize, record_every: usize) -> Result<ReferenceTrajectory> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(CemError::InvalidInput(format!("time step must be positive, got {tau}")));
    }
    let fine = inst.fine();
    let mass = &inst.forms.mass;
    let op = SparseOperator::lin_comb(&[(1.0, &inst.forms.acal), (1.0 / tau, mass)])?;
    let sys = Eliminated::new(inst, &op)?;
    let reaction = inst.problem.reaction;
    let g0 = interpolate(&inst.problem.data.g, fine, 0.0)?;
    let mut u = interpolate(&inst.problem.u_init, fine, 0.0)?;
    // Dirichlet values are imposed from the data.
    for (i, &d) in inst.bp.dirichlet_mask().iter().enumerate() {
        if d {
            u[i] = g0[i];
        }
    }
    let every = record_every.max(1);
    let mut states = vec![(0, u.clone())];
    for n in 0..steps {
        let t = (n + 1) as f64 * tau;
        let mut b = load_vector(inst, t)?;
        mass.mul_vec_add(1.0 / tau, &u, &mut b);
        if reaction != Reaction::None {
            let fu: Vec<f64> = u.iter().map(|&x| reaction.eval(x)).collect();
            mass.mul_vec_add(1.0, &fu, &mut b);
        }
        let g = interpolate(&inst.problem.data.g, fine, t)?;
        u = sys.solve(inst, &op, &b, &g)?;
        check_finite(&u, "reference trajectory")?;
        if (n + 1) % every == 0 || n + 1 == steps {
            states.push((n + 1, u.clone()));
        }
    }
    Ok(ReferenceTrajectory { tau, states })
}
