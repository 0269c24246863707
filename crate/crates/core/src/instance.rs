//! A problem bound to a grid pair, with its assembled forms.

use crate::assembly::{assemble_box, assemble_forms, AssembledForms, BoxForms, FormContext};
use crate::error::Result;
use crate::fields::{kappa_tilde, BoundaryData, KappaTilde, MediumField, Reaction, ScalarFn, VelocityField, DEFAULT_C};
use crate::grid::{build_grids, classify_boundary, BoundaryPartition, BoundarySpec, CoarseGrid, DomainSpec, FineGrid, GridPair};

/// Continuous problem description.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub domain: DomainSpec,
    /// Medium on any resolution; resampled at fine cell centers.
    pub medium: MediumField,
    pub velocity: VelocityField,
    pub boundary: BoundarySpec,
    pub data: BoundaryData,
    pub source: ScalarFn,
    pub u_init: ScalarFn,
    pub reaction: Reaction,
}

impl ProblemData {
    /// Homogeneous data on the unit square with all-Dirichlet boundary.
    pub fn new(medium: MediumField, velocity: VelocityField, boundary: BoundarySpec) -> Self {
        Self {
            domain: DomainSpec::unit_square(),
            medium,
            velocity,
            boundary,
            data: BoundaryData::homogeneous(),
            source: ScalarFn::zero(),
            u_init: ScalarFn::zero(),
            reaction: Reaction::None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub grids: GridPair,
    pub problem: ProblemData,
    /// Medium sampled on the fine grid.
    pub medium: MediumField,
    pub bp: BoundaryPartition,
    pub kappa_tilde: KappaTilde,
    pub forms: AssembledForms,
}

impl Instance {
    pub fn new(problem: ProblemData, nx: usize, ny: usize, cnx: usize, cny: usize) -> Result<Self> {
        Self::with_constant(problem, nx, ny, cnx, cny, DEFAULT_C)
    }

    /// Same as [`Instance::new`] with an explicit constant in the `s`-form weight.
    pub fn with_constant(problem: ProblemData, nx: usize, ny: usize, cnx: usize, cny: usize, c: f64) -> Result<Self> {
        let grids = build_grids(problem.domain, nx, ny, cnx, cny)?;
        let medium = problem.medium.resample(&grids.fine)?;
        let bp = classify_boundary(&grids.fine, &problem.boundary)?;
        let kt = kappa_tilde(&medium, problem.velocity, grids.h(), c)?;
        let ctx = FormContext {
            fine: &grids.fine,
            medium: &medium,
            velocity: problem.velocity,
            bp: &bp,
            robin: &problem.data.b,
            kappa_tilde: kt,
        };
        let forms = assemble_forms(&ctx)?;
        Ok(Self { grids, problem, medium, bp, kappa_tilde: kt, forms })
    }

    pub fn ctx(&self) -> FormContext<'_> {
        FormContext {
            fine: &self.grids.fine,
            medium: &self.medium,
            velocity: self.problem.velocity,
            bp: &self.bp,
            robin: &self.problem.data.b,
            kappa_tilde: self.kappa_tilde,
        }
    }

    pub fn fine(&self) -> &FineGrid {
        &self.grids.fine
    }

    pub fn coarse(&self) -> &CoarseGrid {
        &self.grids.coarse
    }

    pub fn h(&self) -> f64 {
        self.grids.h()
    }

    pub fn num_nodes(&self) -> usize {
        self.grids.fine.num_nodes()
    }

    /// Forms restricted to the cells of one coarse element, in its box-local
    /// numbering.
    pub fn element_forms(&self, element: usize) -> Result<BoxForms> {
        assemble_box(&self.ctx(), self.grids.coarse.cell_box(element))
    }
}
