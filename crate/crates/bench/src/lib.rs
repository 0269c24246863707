//! Fixtures shared by the benchmarks in `benches/`.

use cemflow::fields::{builtin_medium, builtin_velocity, MediumPattern, ScalarFn};
use cemflow::{BoundarySpec, DomainSpec, Instance, ProblemData};

/// Contrast-`1e4` inclusions, inflow velocity, Dirichlet on top and
/// flux data elsewhere.
pub fn fixture(n: usize, coarse: usize) -> Instance {
    let medium = builtin_medium(n, n, 1e4, MediumPattern::Inclusions, 1).expect("medium");
    let velocity = builtin_velocity("inflow", 2.0).expect("velocity");
    let mut p = ProblemData::new(medium, velocity, BoundarySpec::dirichlet_top(&DomainSpec::unit_square()));
    p.data.g = ScalarFn::from_catalog("x1sq_plus_exp").expect("catalog");
    p.data.q = ScalarFn::from_catalog("side_flux").expect("catalog");
    Instance::new(p, n, n, coarse, coarse).expect("instance")
}
