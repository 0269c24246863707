//! Bilinear (Q1) finite-element assembly on the fine grid.
//!
//! Operators are indexed by node, rows are test functions and columns trial
//! functions. An operator assembled on a [`CellBox`] uses the box-local node
//! numbering; the box covering the whole grid reproduces the global numbering.

mod sparse;

pub use sparse::{SparseLu, SparseOperator};

use crate::error::{CemError, Result};
use crate::fields::{KappaTilde, MediumField, RobinCoeff, ScalarFn, VelocityField};
use crate::grid::{BoundaryEdge, BoundaryPartition, CellBox, FineGrid};

/// Gauss-Legendre points and weights on `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureRule {
    pub points: [f64; 2],
    pub weights: [f64; 2],
}

impl QuadratureRule {
    pub fn gauss2() -> Self {
        let d = 0.5 / 3f64.sqrt();
        Self { points: [0.5 - d, 0.5 + d], weights: [0.5, 0.5] }
    }
}

/// Shape function values and reference derivatives at the 2x2 Gauss points.
struct CellReference {
    /// `(xi, eta, weight)`
    points: [(f64, f64, f64); 4],
    n: [[f64; 4]; 4],
    dxi: [[f64; 4]; 4],
    deta: [[f64; 4]; 4],
}

fn shape(xi: f64, eta: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    (
        [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta],
        [-(1.0 - eta), 1.0 - eta, eta, -eta],
        [-(1.0 - xi), -xi, xi, 1.0 - xi],
    )
}

impl CellReference {
    fn new() -> Self {
        let q = QuadratureRule::gauss2();
        let mut points = [(0.0, 0.0, 0.0); 4];
        let mut n = [[0.0; 4]; 4];
        let mut dxi = [[0.0; 4]; 4];
        let mut deta = [[0.0; 4]; 4];
        let mut k = 0;
        for b in 0..2 {
            for a in 0..2 {
                let (xi, eta) = (q.points[a], q.points[b]);
                points[k] = (xi, eta, q.weights[a] * q.weights[b]);
                (n[k], dxi[k], deta[k]) = shape(xi, eta);
                k += 1;
            }
        }
        Self { points, n, dxi, deta }
    }
}

/// Element matrices of one fine cell, indexed by the counterclockwise local
/// node order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellMatrices {
    pub stiffness: [[f64; 4]; 4],
    pub convection: [[f64; 4]; 4],
    pub mass: [[f64; 4]; 4],
    pub weighted_mass: [[f64; 4]; 4],
}

/// Everything the forms depend on.
#[derive(Clone, Copy, Debug)]
pub struct FormContext<'a> {
    pub fine: &'a FineGrid,
    pub medium: &'a MediumField,
    pub velocity: VelocityField,
    pub bp: &'a BoundaryPartition,
    pub robin: &'a RobinCoeff,
    pub kappa_tilde: KappaTilde,
}

impl FormContext<'_> {
    pub fn cell_matrices(&self, ci: usize, cj: usize) -> CellMatrices {
        cell_matrices_with(&CellReference::new(), self, ci, cj)
    }
}

fn cell_matrices_with(r: &CellReference, ctx: &FormContext<'_>, ci: usize, cj: usize) -> CellMatrices {
    let g = ctx.fine;
    let (hx, hy) = (g.hx, g.hy);
    let area = hx * hy;
    let kappa = ctx.medium.at(ci, cj);
    let origin = g.point(ci, cj);
    let mut out = CellMatrices::default();
    for q in 0..4 {
        let (xi, eta, w) = r.points[q];
        let p = [origin[0] + xi * hx, origin[1] + eta * hy];
        let beta = ctx.velocity.eval(p);
        let kt = ctx.kappa_tilde.eval(p);
        let wq = w * area;
        for a in 0..4 {
            let (na, dxa, dya) = (r.n[q][a], r.dxi[q][a] / hx, r.deta[q][a] / hy);
            for b in 0..4 {
                let (nb, dxb, dyb) = (r.n[q][b], r.dxi[q][b] / hx, r.deta[q][b] / hy);
                out.stiffness[a][b] += wq * kappa * (dxa * dxb + dya * dyb);
                out.convection[a][b] += wq * (beta[0] * dxb + beta[1] * dyb) * na;
                out.mass[a][b] += wq * na * nb;
                out.weighted_mass[a][b] += wq * kt * na * nb;
            }
        }
    }
    out
}

/// Boundary edge integrals `int_e c(x) w v` for linear edge shape functions,
/// with `c` sampled at the two Gauss points.
fn edge_matrix(edge: &BoundaryEdge, c: impl Fn([f64; 2]) -> f64) -> [[f64; 2]; 2] {
    let q = QuadratureRule::gauss2();
    let len = edge.length();
    let mut m = [[0.0; 2]; 2];
    for k in 0..2 {
        let s = q.points[k];
        let n = [1.0 - s, s];
        let cv = c(edge.point(s)) * q.weights[k] * len;
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] += cv * n[a] * n[b];
            }
        }
    }
    m
}

/// Margin `b - beta.nu` at the Gauss points of `Gamma_N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InflowDiagnostic {
    pub min_margin: f64,
    pub violating_points: usize,
    pub total_points: usize,
}

impl InflowDiagnostic {
    pub fn is_satisfied(&self) -> bool {
        self.violating_points == 0
    }
}

/// Operators assembled over a cell box. `r_full`, `r_half`, `m_bnd` only
/// include `Gamma_N` edges adjacent to cells of the box.
#[derive(Clone, Debug)]
pub struct BoxForms {
    pub cells: CellBox,
    pub k_diff: SparseOperator,
    pub c_conv: SparseOperator,
    pub mass: SparseOperator,
    pub s_form: SparseOperator,
    pub r_full: SparseOperator,
    pub r_half: SparseOperator,
    pub m_bnd: SparseOperator,
}

impl BoxForms {
    /// `a = K + R_full`
    pub fn a_form(&self) -> SparseOperator {
        SparseOperator::lin_comb(&[(1.0, &self.k_diff), (1.0, &self.r_full)]).expect("same dimensions")
    }

    /// `Acal = K + R_full + C`
    pub fn acal_form(&self) -> SparseOperator {
        SparseOperator::lin_comb(&[(1.0, &self.k_diff), (1.0, &self.r_full), (1.0, &self.c_conv)])
            .expect("same dimensions")
    }

    /// `K + R_half`, whose quadratic form is the `Acal` quasi-norm.
    pub fn quasi_form(&self) -> SparseOperator {
        SparseOperator::lin_comb(&[(1.0, &self.k_diff), (1.0, &self.r_half)]).expect("same dimensions")
    }
}

fn box_node(cells: &CellBox, i: usize, j: usize) -> usize {
    cells.local_node(i, j)
}

/// Assembles all forms on the cells of `cells`, in box-local numbering.
pub fn assemble_box(ctx: &FormContext<'_>, cells: CellBox) -> Result<BoxForms> {
    let g = ctx.fine;
    if cells.x1 > g.nx || cells.y1 > g.ny || cells.x0 >= cells.x1 || cells.y0 >= cells.y1 {
        return Err(CemError::InvalidGrid(format!("cell box {cells:?} outside the grid")));
    }
    let n = cells.num_nodes();
    let reference = CellReference::new();
    let cap = 16 * cells.num_cells();
    let mut tk = Vec::with_capacity(cap);
    let mut tc = Vec::with_capacity(cap);
    let mut tm = Vec::with_capacity(cap);
    let mut ts = Vec::with_capacity(cap);
    for cj in cells.y0..cells.y1 {
        for ci in cells.x0..cells.x1 {
            let e = cell_matrices_with(&reference, ctx, ci, cj);
            let nodes = [
                box_node(&cells, ci, cj),
                box_node(&cells, ci + 1, cj),
                box_node(&cells, ci + 1, cj + 1),
                box_node(&cells, ci, cj + 1),
            ];
            for a in 0..4 {
                for b in 0..4 {
                    let (r, c) = (nodes[a], nodes[b]);
                    tk.push((r, c, e.stiffness[a][b]));
                    tc.push((r, c, e.convection[a][b]));
                    tm.push((r, c, e.mass[a][b]));
                    ts.push((r, c, e.weighted_mass[a][b]));
                }
            }
        }
    }
    let mut tr_full = Vec::new();
    let mut tr_half = Vec::new();
    let mut tb = Vec::new();
    for edge in ctx.bp.neumann_edges() {
        let (ci, cj) = g.cell_ij(edge.cell);
        if !(ci >= cells.x0 && ci < cells.x1 && cj >= cells.y0 && cj < cells.y1) {
            continue;
        }
        let nu = edge.normal();
        let b_nu = |p: [f64; 2]| {
            let beta = ctx.velocity.eval(p);
            (ctx.robin.eval(edge, p, ctx.medium), beta[0] * nu[0] + beta[1] * nu[1])
        };
        let full = edge_matrix(edge, |p| {
            let (b, bn) = b_nu(p);
            b - bn
        });
        let half = edge_matrix(edge, |p| {
            let (b, bn) = b_nu(p);
            b - 0.5 * bn
        });
        let mb = edge_matrix(edge, |_| 1.0);
        let local = edge.nodes.map(|v| {
            let (i, j) = g.node_ij(v);
            box_node(&cells, i, j)
        });
        for a in 0..2 {
            for b in 0..2 {
                tr_full.push((local[a], local[b], full[a][b]));
                tr_half.push((local[a], local[b], half[a][b]));
                tb.push((local[a], local[b], mb[a][b]));
            }
        }
    }
    Ok(BoxForms {
        cells,
        k_diff: SparseOperator::from_triplets(n, n, tk)?,
        c_conv: SparseOperator::from_triplets(n, n, tc)?,
        mass: SparseOperator::from_triplets(n, n, tm)?,
        s_form: SparseOperator::from_triplets(n, n, ts)?,
        r_full: SparseOperator::from_triplets(n, n, tr_full)?,
        r_half: SparseOperator::from_triplets(n, n, tr_half)?,
        m_bnd: SparseOperator::from_triplets(n, n, tb)?,
    })
}

/// Global forms plus the commonly used combinations.
#[derive(Clone, Debug)]
pub struct AssembledForms {
    pub k_diff: SparseOperator,
    pub c_conv: SparseOperator,
    pub r_full: SparseOperator,
    pub r_half: SparseOperator,
    pub mass: SparseOperator,
    pub s_form: SparseOperator,
    pub m_bnd: SparseOperator,
    /// `K + R_full`
    pub a_form: SparseOperator,
    /// `K + R_full + C`
    pub acal: SparseOperator,
    /// `K + R_half`
    pub quasi: SparseOperator,
    pub inflow: InflowDiagnostic,
}

/// Assembles every form over all fine cells. Dirichlet nodes are kept.
pub fn assemble_forms(ctx: &FormContext<'_>) -> Result<AssembledForms> {
    let b = assemble_box(ctx, ctx.fine.all_cells())?;
    let a_form = b.a_form();
    let acal = b.acal_form();
    let quasi = b.quasi_form();
    let inflow = inflow_diagnostic(ctx);
    Ok(AssembledForms {
        k_diff: b.k_diff,
        c_conv: b.c_conv,
        r_full: b.r_full,
        r_half: b.r_half,
        mass: b.mass,
        s_form: b.s_form,
        m_bnd: b.m_bnd,
        a_form,
        acal,
        quasi,
        inflow,
    })
}

pub fn inflow_diagnostic(ctx: &FormContext<'_>) -> InflowDiagnostic {
    let q = QuadratureRule::gauss2();
    let mut d = InflowDiagnostic { min_margin: f64::INFINITY, violating_points: 0, total_points: 0 };
    for edge in ctx.bp.neumann_edges() {
        let nu = edge.normal();
        for &s in &q.points {
            let p = edge.point(s);
            let beta = ctx.velocity.eval(p);
            let margin = ctx.robin.eval(edge, p, ctx.medium) - (beta[0] * nu[0] + beta[1] * nu[1]);
            d.min_margin = d.min_margin.min(margin);
            d.total_points += 1;
            if margin < -1e-12 {
                d.violating_points += 1;
            }
        }
    }
    d
}

/// Nodal interpolant of `f(., t)`.
pub fn interpolate(f: &ScalarFn, grid: &FineGrid, t: f64) -> Result<Vec<f64>> {
    interpolate_with(|p| f.eval(p, t), grid)
}

pub fn interpolate_with(f: impl Fn([f64; 2]) -> f64, grid: &FineGrid) -> Result<Vec<f64>> {
    let v: Vec<f64> = (0..grid.num_nodes()).map(|n| f(grid.node_coords(n))).collect();
    match v.iter().position(|x| !x.is_finite()) {
        Some(n) => Err(CemError::NonFinite(format!("interpolated value at node {n}"))),
        None => Ok(v),
    }
}

/// `(q, v)_{Gamma_N}` for every nodal basis function `v`, restricted to edges
/// selected by `keep`.
pub fn boundary_load_filtered(
    q: &ScalarFn,
    bp: &BoundaryPartition,
    grid: &FineGrid,
    t: f64,
    keep: impl Fn(&BoundaryEdge) -> bool,
) -> Vec<f64> {
    let rule = QuadratureRule::gauss2();
    let mut out = vec![0.0; grid.num_nodes()];
    if q.is_zero() {
        return out;
    }
    for edge in bp.neumann_edges().filter(|e| keep(e)) {
        let len = edge.length();
        for k in 0..2 {
            let s = rule.points[k];
            let w = rule.weights[k] * len * q.eval(edge.point(s), t);
            out[edge.nodes[0]] += w * (1.0 - s);
            out[edge.nodes[1]] += w * s;
        }
    }
    out
}

/// `(q, v)_{Gamma_N}` as a fine vector.
pub fn boundary_load(q: &ScalarFn, bp: &BoundaryPartition, grid: &FineGrid, t: f64) -> Result<Vec<f64>> {
    if !bp.has_neumann() {
        return Err(CemError::EmptyNeumann);
    }
    let v = boundary_load_filtered(q, bp, grid, t, |_| true);
    match v.iter().position(|x| !x.is_finite()) {
        Some(n) => Err(CemError::NonFinite(format!("boundary load at node {n}"))),
        None => Ok(v),
    }
}

/// Restriction of `op` to `dofs` (principal submatrix).
pub fn restrict(op: &SparseOperator, dofs: &[usize]) -> Result<SparseOperator> {
    op.restrict(dofs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{builtin_velocity, kappa_tilde, VelocityMode, DEFAULT_C};
    use crate::grid::{build_grids, classify_boundary, BoundaryKind, BoundarySpec, DomainSpec, GridPair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        g: GridPair,
        medium: MediumField,
        bp: BoundaryPartition,
        robin: RobinCoeff,
        velocity: VelocityField,
    }

    impl Setup {
        fn new(n: usize, c: usize, velocity: VelocityField, spec: impl Fn(&DomainSpec) -> BoundarySpec) -> Self {
            let g = build_grids(DomainSpec::unit_square(), n, n, c, c).unwrap();
            let medium = MediumField::uniform(n, n, 1.0).unwrap();
            let bp = classify_boundary(&g.fine, &spec(&g.fine.domain)).unwrap();
            Self { g, medium, bp, robin: RobinCoeff::Zero, velocity }
        }

        fn ctx(&self) -> FormContext<'_> {
            FormContext {
                fine: &self.g.fine,
                medium: &self.medium,
                velocity: self.velocity,
                bp: &self.bp,
                robin: &self.robin,
                kappa_tilde: kappa_tilde(&self.medium, self.velocity, self.g.h(), DEFAULT_C).unwrap(),
            }
        }
    }

    fn dirichlet(d: &DomainSpec) -> BoundarySpec {
        BoundarySpec::all(d, BoundaryKind::Dirichlet)
    }

    #[test]
    fn element_matrices_match_exact_integrals() {
        let s = Setup::new(4, 1, VelocityField::zero(), dirichlet);
        let e = s.ctx().cell_matrices(1, 2);
        let k = [[4.0, -1.0, -2.0, -1.0], [-1.0, 4.0, -1.0, -2.0], [-2.0, -1.0, 4.0, -1.0], [-1.0, -2.0, -1.0, 4.0]];
        let m = [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]];
        let h2 = 1.0 / 16.0;
        for a in 0..4 {
            for b in 0..4 {
                assert!((e.stiffness[a][b] - k[a][b] / 6.0).abs() <= 1e-14);
                assert!((e.mass[a][b] - h2 * m[a][b] / 36.0).abs() <= 1e-14);
                assert_eq!(e.convection[a][b], 0.0);
            }
        }
    }

    #[test]
    fn vanishing_terms() {
        let s = Setup::new(8, 2, VelocityField::zero(), dirichlet);
        let f = assemble_forms(&s.ctx()).unwrap();
        assert_eq!(f.c_conv.max_abs(), 0.0);
        assert_eq!(f.r_full.nnz(), 0);
        assert_eq!(f.r_half.nnz(), 0);
    }

    #[test]
    fn s_form_is_scaled_mass_for_constant_weight() {
        let v = VelocityField::new(VelocityMode::Constant([0.6, 0.8]), 0.0);
        let s = Setup::new(8, 2, v, dirichlet);
        let f = assemble_forms(&s.ctx()).unwrap();
        let kt = 24.0 / (0.5f64 * 0.5);
        let diff = SparseOperator::lin_comb(&[(1.0, &f.s_form), (-kt, &f.mass)]).unwrap();
        assert!(diff.max_abs() <= 1e-12 * kt);
    }

    #[test]
    fn linear_patch_test() {
        let s = Setup::new(8, 2, VelocityField::zero(), dirichlet);
        let f = assemble_forms(&s.ctx()).unwrap();
        let x = interpolate(&ScalarFn::from_catalog("x1").unwrap(), &s.g.fine, 0.0).unwrap();
        let r = f.k_diff.mul_vec(&x);
        for j in 1..8 {
            for i in 1..8 {
                assert!(r[s.g.fine.node_index(i, j)].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interpolation() {
        let g = build_grids(DomainSpec::unit_square(), 4, 4, 1, 1).unwrap();
        let one = interpolate(&ScalarFn::constant(1.0), &g.fine, 0.0).unwrap();
        assert!(one.iter().all(|&v| v == 1.0));
        let f = interpolate(&ScalarFn::from_catalog("x1sq_plus_exp").unwrap(), &g.fine, 0.0).unwrap();
        assert!((f[g.fine.node_index(4, 4)] - (1.0 + std::f64::consts::E)).abs() < 1e-15);
        let x = interpolate(&ScalarFn::from_catalog("x1").unwrap(), &g.fine, 0.0).unwrap();
        for j in 0..=4 {
            for i in 0..=4 {
                assert_eq!(x[g.fine.node_index(i, j)], [0.0, 0.25, 0.5, 0.75, 1.0][i]);
            }
        }
        let bad = ScalarFn::new("bad", |p, _| 1.0 / p[0]);
        assert!(interpolate(&bad, &g.fine, 0.0).is_err());
    }

    #[test]
    fn boundary_load_sums() {
        let g = build_grids(DomainSpec::unit_square(), 8, 8, 2, 2).unwrap();
        let d = g.fine.domain;
        let all = classify_boundary(&g.fine, &BoundarySpec::all(&d, BoundaryKind::NeumannRobin)).unwrap();
        let one = ScalarFn::constant(1.0);
        let l = boundary_load(&one, &all, &g.fine, 0.0).unwrap();
        assert!((l.iter().sum::<f64>() - 4.0).abs() < 1e-14);
        let z = boundary_load(&ScalarFn::zero(), &all, &g.fine, 0.0).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        use BoundaryKind::*;
        let left = classify_boundary(&g.fine, &BoundarySpec::sides(&d, [Dirichlet, Dirichlet, Dirichlet, NeumannRobin])).unwrap();
        let l = boundary_load(&one, &left, &g.fine, 0.0).unwrap();
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for (n, &v) in l.iter().enumerate() {
            if v != 0.0 {
                assert_eq!(g.fine.node_ij(n).0, 0);
            }
        }
        let dir = classify_boundary(&g.fine, &BoundarySpec::all(&d, Dirichlet)).unwrap();
        assert!(matches!(boundary_load(&one, &dir, &g.fine, 0.0), Err(CemError::EmptyNeumann)));
    }

    #[test]
    fn restricted_stiffness_equals_homogeneous_dirichlet_assembly() {
        let s = Setup::new(8, 2, VelocityField::zero(), dirichlet);
        let f = assemble_forms(&s.ctx()).unwrap();
        let free = s.bp.free_dofs();
        let r = restrict(&f.k_diff, &free).unwrap().to_dense();
        // Independent assembly: loop over cells, drop constrained nodes.
        let e = s.ctx().cell_matrices(0, 0);
        let pos: std::collections::HashMap<usize, usize> = free.iter().enumerate().map(|(k, &n)| (n, k)).collect();
        let mut dense = vec![vec![0.0; free.len()]; free.len()];
        for cj in 0..8 {
            for ci in 0..8 {
                let nodes = s.g.fine.cell_nodes(ci, cj);
                for a in 0..4 {
                    for b in 0..4 {
                        if let (Some(&ra), Some(&rb)) = (pos.get(&nodes[a]), pos.get(&nodes[b])) {
                            dense[ra][rb] += e.stiffness[a][b];
                        }
                    }
                }
            }
        }
        for a in 0..free.len() {
            for b in 0..free.len() {
                assert!((r[(a, b)] - dense[a][b]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quasi_norm_nonnegative_on_inflow_layout() {
        let mut s = Setup::new(20, 4, builtin_velocity("inflow", 2.0).unwrap(), BoundarySpec::dirichlet_top);
        s.medium = crate::fields::builtin_medium(20, 20, 1e4, crate::fields::MediumPattern::Inclusions, 3).unwrap();
        let f = assemble_forms(&s.ctx()).unwrap();
        assert!(f.inflow.is_satisfied());
        let free = s.bp.free_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut v = vec![0.0; s.g.fine.num_nodes()];
            for &n in &free {
                v[n] = rng.random_range(-1.0..1.0);
            }
            assert!(f.quasi.quad(&v) >= -1e-12);
        }
    }

    #[test]
    fn convection_is_skew_for_zero_trace() {
        // Constant and rigid-rotation fields are integrated exactly by the 2x2 rule.
        for velocity in [builtin_velocity("rotation", 2.0).unwrap(), builtin_velocity("constant:1,-0.5", 0.0).unwrap()] {
            let s = Setup::new(24, 4, velocity, dirichlet);
            let f = assemble_forms(&s.ctx()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let free = s.bp.free_dofs();
            for _ in 0..20 {
                let mut v = vec![0.0; s.g.fine.num_nodes()];
                for &n in &free {
                    v[n] = rng.random_range(-1.0..1.0);
                }
                let norm2: f64 = v.iter().map(|x| x * x).sum();
                assert!(f.c_conv.quad(&v).abs() <= 1e-12 * norm2);
            }
        }
    }

    #[test]
    fn convection_boundary_identity() {
        // v^T C v = 1/2 int (beta.nu) v^2, so Acal and K + R_half share the quadratic form.
        let s = Setup::new(24, 4, builtin_velocity("rotation", 2.0).unwrap(), |d| {
            BoundarySpec::all(d, BoundaryKind::NeumannRobin)
        });
        let f = assemble_forms(&s.ctx()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v: Vec<f64> = (0..s.g.fine.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (lhs, rhs) = (f.acal.quad(&v), f.quasi.quad(&v));
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn box_assembly_matches_global_on_interior() {
        let s = Setup::new(16, 4, builtin_velocity("inflow", 1.0).unwrap(), BoundarySpec::dirichlet_top);
        let ctx = s.ctx();
        let global = assemble_forms(&ctx).unwrap();
        let whole = assemble_box(&ctx, s.g.fine.all_cells()).unwrap();
        assert_eq!(whole.acal_form(), global.acal);
        let cells = s.g.coarse.cell_box(0);
        let local = assemble_box(&ctx, cells).unwrap();
        // Element-local forms summed over all elements give the global form.
        let mut acc = vec![0.0; s.g.fine.num_nodes()];
        let x: Vec<f64> = (0..s.g.fine.num_nodes()).map(|k| (k as f64 * 0.37).sin()).collect();
        for e in 0..s.g.coarse.num_elements() {
            let cb = s.g.coarse.cell_box(e);
            let lf = assemble_box(&ctx, cb).unwrap().acal_form();
            let xl: Vec<f64> = (cb.y0..=cb.y1)
                .flat_map(|j| (cb.x0..=cb.x1).map(move |i| (i, j)))
                .map(|(i, j)| x[s.g.fine.node_index(i, j)])
                .collect();
            let yl = lf.mul_vec(&xl);
            let mut k = 0;
            for j in cb.y0..=cb.y1 {
                for i in cb.x0..=cb.x1 {
                    acc[s.g.fine.node_index(i, j)] += yl[k];
                    k += 1;
                }
            }
        }
        let y = global.acal.mul_vec(&x);
        for (a, b) in acc.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(local.k_diff.nrows(), 25);
    }
}
