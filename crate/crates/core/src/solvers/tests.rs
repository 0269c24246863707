use super::*;
use crate::assembly::interpolate_with;
use crate::cem::{build_ms_basis, corrector_trajectory, FormKind, TimeSource};
use crate::fields::{builtin_medium, builtin_velocity, MediumField, MediumPattern, Reaction, RobinCoeff, ScalarFn, VelocityField, VelocityMode};
use crate::grid::{BoundaryKind, BoundarySpec, DomainSpec};
use crate::instance::ProblemData;
use crate::metrics::{NormKind, Norms};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn mixed() -> [BoundaryKind; 4] {
    use BoundaryKind::*;
    [Dirichlet, NeumannRobin, Dirichlet, NeumannRobin]
}

fn problem(n: usize, velocity: VelocityField, kinds: [BoundaryKind; 4]) -> ProblemData {
    let medium = builtin_medium(n, n, 1e3, MediumPattern::Inclusions, 7).unwrap();
    ProblemData::new(medium, velocity, BoundarySpec::sides(&DomainSpec::unit_square(), kinds))
}

fn rel_l2(inst: &Instance, u: &[f64], r: &[f64]) -> f64 {
    Norms::new(inst, None).relative_error(NormKind::L2, u, r).unwrap()
}

#[test]
fn config_requires_integer_steps() {
    assert_eq!(SchemeConfig::new(0.1, 1.0, Scheme::CD).unwrap().steps().unwrap(), 10);
    assert_eq!(SchemeConfig::new(0.025, 1.0, Scheme::D).unwrap().steps().unwrap(), 40);
    assert!(SchemeConfig::new(0.3, 1.0, Scheme::CD).is_err());
    assert!(SchemeConfig::new(0.0, 1.0, Scheme::CD).is_err());
    assert!(SchemeConfig::new(-0.1, 1.0, Scheme::CD).is_err());
    assert_eq!(Scheme::from_name("Dapp").unwrap(), Scheme::D);
    assert!(Scheme::from_name("E").is_err());
}

#[test]
fn steady_zero_data_gives_zero() {
    let inst = Instance::new(problem(12, builtin_velocity("vortex", 2.0).unwrap(), mixed()), 12, 12, 3, 3).unwrap();
    let sol = steady_pipeline(&inst, 2, Layers::Finite(1)).unwrap();
    assert!(max_abs(&sol.u_ms) <= 1e-12);
    assert!(max_abs(&sol.correctors.d) <= 1e-12 && max_abs(&sol.correctors.n) <= 1e-12);
}

#[test]
fn steady_reproduces_linear_data() {
    let medium = MediumField::uniform(16, 16, 1.0).unwrap();
    let spec = BoundarySpec::all(&DomainSpec::unit_square(), BoundaryKind::Dirichlet);
    let mut p = ProblemData::new(medium, VelocityField::zero(), spec);
    p.data.g = ScalarFn::from_catalog("x1").unwrap();
    let inst = Instance::new(p, 16, 16, 4, 4).unwrap();
    let r = reference_steady(&inst).unwrap();
    let x = interpolate_with(|p| p[0], inst.fine()).unwrap();
    assert!(r.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
    for layers in [Layers::Global, Layers::Finite(4)] {
        let sol = steady_pipeline(&inst, 3, layers).unwrap();
        assert!(rel_l2(&inst, &sol.u_ms, &r) <= 1e-8, "{layers:?}");
    }
}

#[test]
fn steady_saturated_matches_reference() {
    let mut p = problem(16, builtin_velocity("vortex", 2.0).unwrap(), mixed());
    p.data.g = ScalarFn::from_catalog("x1sq_plus_exp").unwrap();
    p.data.q = ScalarFn::from_catalog("side_flux").unwrap();
    p.data.b = RobinCoeff::AdjacentKappa;
    p.source = ScalarFn::from_catalog("bumps").unwrap();
    let inst = Instance::new(p, 16, 16, 4, 4).unwrap();
    let r = reference_steady(&inst).unwrap();
    let sol = steady_pipeline(&inst, 25, Layers::Finite(4)).unwrap();
    assert!(rel_l2(&inst, &sol.u_ms, &r) <= 1e-8);
    assert_eq!(sol.lambda, f64::INFINITY);
    // nodewise assembly identity
    let aux = build_aux_space(&inst, 25, false).unwrap();
    let space = build_ms_basis(&inst, &aux, Layers::Finite(4)).unwrap();
    let u = assemble_solution(&inst, &space, &sol.coeffs, &sol.correctors.d, &sol.correctors.n, &sol.g_tilde);
    assert!(u.iter().zip(&sol.u_ms).all(|(a, b)| (a - b).abs() <= 1e-12 * max_abs(&u)));
}

#[test]
fn reference_residual_and_manufactured_rate() {
    let mut p = problem(16, builtin_velocity("vortex", 2.0).unwrap(), mixed());
    p.data.g = ScalarFn::from_catalog("x1sq_plus_exp").unwrap();
    p.data.q = ScalarFn::from_catalog("side_flux").unwrap();
    p.source = ScalarFn::from_catalog("bumps").unwrap();
    let inst = Instance::new(p, 16, 16, 4, 4).unwrap();
    let u = reference_steady(&inst).unwrap();
    let b = load_vector(&inst, 0.0).unwrap();
    let au = inst.forms.acal.mul_vec(&u);
    let free = inst.bp.free_dofs();
    let res: f64 = free.iter().map(|&i| (au[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = free.iter().map(|&i| b[i].powi(2)).sum::<f64>().sqrt();
    assert!(res <= 1e-10 * scale);

    use std::f64::consts::PI;
    let exact = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin();
    let mut errs = Vec::new();
    for n in [16, 32, 64] {
        let medium = MediumField::uniform(n, n, 1.0).unwrap();
        let spec = BoundarySpec::all(&DomainSpec::unit_square(), BoundaryKind::Dirichlet);
        let mut p = ProblemData::new(medium, VelocityField::new(VelocityMode::Constant([1.0, 0.0]), 1.0), spec);
        p.source = ScalarFn::new("mms", move |p, _| 2.0 * PI * PI * exact(p) + PI * (PI * p[0]).cos() * (PI * p[1]).sin());
        let inst = Instance::new(p, n, n, 1, 1).unwrap();
        let u = reference_steady(&inst).unwrap();
        let e = interpolate_with(exact, inst.fine()).unwrap();
        errs.push(rel_l2(&inst, &u, &e));
    }
    for w in errs.windows(2) {
        let r = w[1] / w[0];
        assert!((0.2..0.3).contains(&r), "ratio {r}");
    }
}

fn transient_instance(g: &str, q: &str) -> Instance {
    let mut p = problem(12, builtin_velocity("vortex", 1.0).unwrap(), mixed());
    p.data.g = ScalarFn::from_catalog(g).unwrap();
    p.data.q = ScalarFn::from_catalog(q).unwrap();
    p.u_init = p.data.g.clone();
    Instance::new(p, 12, 12, 3, 3).unwrap()
}

#[test]
fn transient_zero_data_stays_zero() {
    let inst = transient_instance("zero", "zero");
    for scheme in [Scheme::CD, Scheme::D] {
        let cfg = SchemeConfig::new(0.25, 1.0, scheme).unwrap();
        let run = run_transient(&inst, 2, Layers::Finite(1), &cfg).unwrap();
        assert_eq!(run.states.len(), 5);
        for s in &run.states {
            assert!(max_abs(&s.u_ms) <= 1e-12 && max_abs(&s.d) <= 1e-12 && max_abs(&s.n) <= 1e-12);
        }
    }
    let mut p = inst.problem.clone();
    p.reaction = Reaction::GinzburgLandau;
    let inst = Instance::new(p, 12, 12, 3, 3).unwrap();
    let run = run_strang(&inst, 2, Layers::Finite(1), &SchemeConfig::new(0.25, 1.0, Scheme::CD).unwrap()).unwrap();
    assert!(run.states.iter().all(|s| max_abs(&s.u_ms) <= 1e-12));
}

#[test]
fn transient_approaches_steady_state() {
    let inst = transient_instance("x1sq_plus_exp", "side_flux");
    let steady = steady_pipeline(&inst, 3, Layers::Finite(1)).unwrap();
    for scheme in [Scheme::CD, Scheme::D] {
        let cfg = SchemeConfig::new(0.05, 1.0, scheme).unwrap();
        let run = run_transient(&inst, 3, Layers::Finite(1), &cfg).unwrap();
        let gaps: Vec<f64> = run.states.iter().map(|s| rel_l2(&inst, &s.u_ms, &steady.u_ms)).collect();
        if scheme == Scheme::CD {
            assert!(gaps.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{gaps:?}");
        }
        let bound = if scheme == Scheme::CD { 1e-6 } else { 5e-2 };
        assert!(*gaps.last().unwrap() < bound, "{scheme:?} {gaps:?}");
        let scale = max_abs(&steady.u_ms);
        assert!(run.states.iter().all(|s| max_abs(&s.u_ms) <= 10.0 * scale));
    }
}

#[test]
fn transient_init_projection() {
    let inst = transient_instance("x1sq_plus_exp", "zero");
    let aux = build_aux_space(&inst, 2, false).unwrap();
    let src = TimeSource::new(&inst, &inst.problem.data.g, &inst.problem.data.q, 0.5, 2).unwrap();
    let (space, traj) = corrector_trajectory(&inst, &aux, Layers::Finite(1), FormKind::Acal, &src, true).unwrap();
    let space = space.unwrap();
    let sys = TransientSystem::new(&inst, &space, Scheme::CD, 0.5).unwrap();
    // u_init = g~: w^0 is the projection of D^0
    let s0 = transient_init(&sys, &traj, &src).unwrap();
    let fine = inst.fine();
    let gram = space.galerkin(fine, &inst.forms.mass);
    let rhs = space.project(fine, &inst.forms.mass.mul_vec(&traj.d[0]));
    let want = DenseLu::new(&gram).unwrap().solve(&rhs).unwrap();
    assert!(s0.coeffs.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-10 * max_abs(&want)));
    // vectors in span(P) are reproduced
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c: Vec<f64> = (0..space.num_cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pc = space.expand(fine, &c);
    let g0 = &src.g_tilde[0];
    let u0: Vec<f64> = (0..pc.len()).map(|i| pc[i] + g0[i] - traj.d[0][i] + traj.n[0][i]).collect();
    let s = sys.init(&traj, &src, &u0).unwrap();
    assert!(s.coeffs.iter().zip(&c).all(|(a, b)| (a - b).abs() <= 1e-10));
    assert!(s.u_ms.iter().zip(&u0).all(|(a, b)| (a - b).abs() <= 1e-10 * max_abs(&u0)));
}

#[test]
fn transient_state_assembly_identity() {
    let inst = transient_instance("decay_exp", "decay_side_flux");
    let cfg = SchemeConfig::new(0.25, 0.5, Scheme::CD).unwrap();
    let run = run_transient(&inst, 2, Layers::Finite(1), &cfg).unwrap();
    let aux = build_aux_space(&inst, 2, false).unwrap();
    let space = build_ms_basis(&inst, &aux, Layers::Finite(1)).unwrap();
    for s in &run.states {
        let g = crate::assembly::interpolate(&inst.problem.data.g, inst.fine(), s.time).unwrap();
        let u = assemble_solution(&inst, &space, &s.coeffs, &s.d, &s.n, &g);
        assert!(u.iter().zip(&s.u_ms).all(|(a, b)| (a - b).abs() <= 1e-12 * max_abs(&u).max(1.0)));
    }
}

#[test]
fn strang_without_reaction_is_linear_step() {
    let inst = transient_instance("decay_exp", "decay_side_flux");
    let aux = build_aux_space(&inst, 2, false).unwrap();
    let src = TimeSource::new(&inst, &inst.problem.data.g, &inst.problem.data.q, 0.25, 2).unwrap();
    let (space, traj) = corrector_trajectory(&inst, &aux, Layers::Finite(1), FormKind::Acal, &src, true).unwrap();
    let space = space.unwrap();
    let sys = TransientSystem::new(&inst, &space, Scheme::CD, 0.25).unwrap();
    let s0 = transient_init(&sys, &traj, &src).unwrap();
    let lin = sys.step(&s0, &traj, &src).unwrap();
    let spl = strang_step(&sys, &s0, &traj, &src, Reaction::None, 10).unwrap();
    let scale = max_abs(&lin.u_ms);
    assert!(lin.u_ms.iter().zip(&spl.u_ms).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
    let d_sys = TransientSystem::new(&inst, &space, Scheme::D, 0.25).unwrap();
    assert!(strang_step(&d_sys, &s0, &traj, &src, Reaction::None, 10).is_err());
}

fn gl_exact(u0: f64, t: f64) -> f64 {
    u0 * t.exp() / (1.0 - u0 * u0 + u0 * u0 * (2.0 * t).exp()).sqrt()
}

#[test]
fn strang_pure_reaction_matches_ode() {
    let n = 8;
    let medium = MediumField::uniform(n, n, 1e-10).unwrap();
    let spec = BoundarySpec::all(&DomainSpec::unit_square(), BoundaryKind::NeumannRobin);
    let mut p = ProblemData::new(medium, VelocityField::zero(), spec);
    p.u_init = ScalarFn::new("init", |p, _| 0.2 + 1.5 * p[0] * p[1]);
    p.reaction = Reaction::GinzburgLandau;
    let inst = Instance::new(p, n, n, 2, 2).unwrap();
    let cfg = SchemeConfig::new(0.1, 0.5, Scheme::CD).unwrap();
    let run = run_strang(&inst, 25, Layers::Global, &cfg).unwrap();
    let u0 = interpolate(&inst.problem.u_init, inst.fine(), 0.0).unwrap();
    for s in &run.states {
        let err = s.u_ms.iter().zip(&u0).map(|(u, &a)| (u - gl_exact(a, s.time)).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "t = {} err = {err}", s.time);
    }
}

#[test]
fn nonlinear_substep_examples() {
    let w0 = vec![0.5, -1.0, 2.0];
    let z = vec![0.3, 0.0, -0.7];
    let w = nonlinear_substep(&w0, &z, 0.05, Reaction::Linear, 10).unwrap();
    for (a, b) in w.iter().zip(&w0) {
        assert!((a - b * 0.05f64.exp()).abs() <= 1e-8);
    }
    let zero = nonlinear_substep(&[0.0; 3], &z, 0.05, Reaction::GinzburgLandau, 10).unwrap();
    assert!(zero.iter().all(|&x| x == 0.0));
    let w = nonlinear_substep(&[2.0], &[0.0], 0.05, Reaction::GinzburgLandau, 10).unwrap();
    assert!((w[0] - gl_exact(2.0, 0.05)).abs() <= 1e-6);
    assert!(w[0] > 1.0 && w[0] < 2.0);
    assert!(nonlinear_substep(&[1.0], &[0.0], 0.0, Reaction::Linear, 10).is_err());
    assert!(nonlinear_substep(&[1e200], &[0.0], 1.0, Reaction::GinzburgLandau, 1).is_err());
}

#[test]
fn reference_transient_records_and_converges() {
    let inst = transient_instance("x1sq_plus_exp", "side_flux");
    let tr = reference_transient(&inst, 0.05, 40, 10).unwrap();
    assert_eq!(tr.states.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 10, 20, 30, 40]);
    let steady = reference_steady(&inst).unwrap();
    assert!(rel_l2(&inst, tr.last(), &steady) < 1e-6);
    assert!(tr.at_step(20).is_some() && tr.at_step(21).is_none());
}
