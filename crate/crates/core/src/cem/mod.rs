//! Multiscale basis functions and boundary correctors.
//!
//! Every local problem has the form `B(x, v) = rhs(v)` for `v` in the local
//! space `V_i^m`, with `B(w, v) = X(w, v) + s(pi w, pi v)` and `X` one of the
//! assembled global operators. With `Q` the matrix of coefficient functionals
//! of `pi` for the elements inside the patch, the local system
//! `(X + Q^T Q) x = b` is solved in bordered form
//!
//! ```text
//! [ X   Q^T ] [x]   [b ]
//! [ Q   -I  ] [y] = [b2]
//! ```
//!
//! which stays sparse. Elements whose oversampled regions coincide share one
//! factorization.

mod patch;
pub mod transient;

pub use patch::{PatchGroup, PatchSystem, PatchVec};
pub use transient::{
    corrector_trajectory, transient_corrector_init, transient_corrector_step, CorrectorState, CorrectorTrajectory,
    TimeSource,
};

use faer::Mat;
use rayon::prelude::*;

use crate::assembly::{SparseOperator, QuadratureRule};
use crate::error::{CemError, Result};
use crate::fields::ScalarFn;
use crate::grid::{oversample_region, CellBox, FineGrid};
use crate::instance::Instance;
use crate::spectral::AuxSpace;

/// Oversampling: `m` coarse layers, or the whole domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layers {
    Finite(usize),
    Global,
}

impl Layers {
    pub fn label(&self) -> String {
        match self {
            Layers::Finite(m) => m.to_string(),
            Layers::Global => "glo".into(),
        }
    }
}

/// Global operator that defines the local problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormKind {
    /// `Acal = K + R_full + C`
    Acal,
    /// `a = K + R_full`
    AForm,
}

impl FormKind {
    pub fn global<'a>(&self, inst: &'a Instance) -> &'a SparseOperator {
        match self {
            FormKind::Acal => &inst.forms.acal,
            FormKind::AForm => &inst.forms.a_form,
        }
    }
}

/// Column `e * l + j` is `psi_e^{j,m}`, stored on the node box of its
/// oversampled region.
#[derive(Clone, Debug)]
pub struct MultiscaleSpace {
    pub layers: Layers,
    pub l: usize,
    pub columns: Vec<PatchVec>,
}

impl MultiscaleSpace {
    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    /// `P c`
    pub fn expand(&self, fine: &FineGrid, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; fine.num_nodes()];
        for (col, &ck) in self.columns.iter().zip(c) {
            if ck != 0.0 {
                col.add_to(fine, ck, &mut out);
            }
        }
        out
    }

    /// `P^T v`
    pub fn project(&self, fine: &FineGrid, v: &[f64]) -> Vec<f64> {
        self.columns.par_iter().map(|col| col.dot_global(fine, v)).collect()
    }

    /// `P^T X P`
    pub fn galerkin(&self, fine: &FineGrid, op: &SparseOperator) -> Mat<f64> {
        let n = self.num_cols();
        let images: Vec<Vec<f64>> = self.columns.par_iter().map(|c| c.apply_in_box(fine, op)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|a| {
                let ca = &self.columns[a];
                (0..n)
                    .map(|b| {
                        let cb = &self.columns[b];
                        ca.dot_box(&cb.cells, &images[b])
                    })
                    .collect()
            })
            .collect();
        Mat::from_fn(n, n, |a, b| rows[a][b])
    }

    /// Dense `P` (small instances only).
    pub fn dense(&self, fine: &FineGrid) -> Mat<f64> {
        let n = fine.num_nodes();
        let mut m = Mat::zeros(n, self.num_cols());
        for (k, col) in self.columns.iter().enumerate() {
            let g = col.to_global(fine);
            for i in 0..n {
                m[(i, k)] = g[i];
            }
        }
        m
    }
}

/// Fine vectors of the static correctors `D^m g~` and `N^m q`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorSet {
    pub d: Vec<f64>,
    pub n: Vec<f64>,
}

impl CorrectorSet {
    pub fn zeros(n: usize) -> Self {
        Self { d: vec![0.0; n], n: vec![0.0; n] }
    }
}

/// Regions of every element grouped by geometry, in order of first member.
pub fn patch_groups(inst: &Instance, layers: Layers) -> Result<Vec<PatchGroup>> {
    let coarse = inst.coarse();
    let ne = coarse.num_elements();
    let mut groups: Vec<PatchGroup> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for e in 0..ne {
        let (cells, elements) = match layers {
            Layers::Global => (inst.fine().all_cells(), (0..ne).collect::<Vec<_>>()),
            Layers::Finite(m) => {
                let r = oversample_region(coarse, e, m)?;
                (r.cells, r.elements(coarse))
            }
        };
        match index.get(&cells) {
            Some(&g) => {
                let grp: &mut PatchGroup = &mut groups[g];
                grp.members.push(e);
            }
            None => {
                index.insert(cells, groups.len());
                groups.push(PatchGroup { cells, elements, members: vec![e] });
            }
        }
    }
    Ok(groups)
}

/// `Acal_{(K_e)}` (or `a_{(K_e)}`) applied to `g`, on the node box of `K_e`.
pub fn element_form_rhs(inst: &Instance, e: usize, kind: FormKind, g: &[f64]) -> Result<(CellBox, Vec<f64>)> {
    let f = inst.element_forms(e)?;
    let op = match kind {
        FormKind::Acal => f.acal_form(),
        FormKind::AForm => f.a_form(),
    };
    let cells = f.cells;
    Ok((cells, op.mul_vec(&cells.gather(inst.fine(), g))))
}

/// `int_{dK_e cap Gamma_N} q v` on the node box of `K_e`, or `None` when the
/// element does not touch `Gamma_N`.
pub fn element_flux_rhs(inst: &Instance, e: usize, q: &ScalarFn, t: f64) -> Option<(CellBox, Vec<f64>)> {
    let fine = inst.fine();
    let coarse = inst.coarse();
    let cells = coarse.cell_box(e);
    let rule = QuadratureRule::gauss2();
    let mut out: Option<Vec<f64>> = None;
    for edge in inst.bp.neumann_edges() {
        let (ci, cj) = fine.cell_ij(edge.cell);
        if coarse.element_of_cell(ci, cj) != e {
            continue;
        }
        let v = out.get_or_insert_with(|| vec![0.0; cells.num_nodes()]);
        let len = edge.length();
        let local = edge.nodes.map(|n| {
            let (i, j) = fine.node_ij(n);
            cells.local_node(i, j)
        });
        for k in 0..2 {
            let s = rule.points[k];
            let w = rule.weights[k] * len * q.eval(edge.point(s), t);
            v[local[0]] += w * (1.0 - s);
            v[local[1]] += w * s;
        }
    }
    out.map(|v| (cells, v))
}

/// Output of [`build_static`].
#[derive(Clone, Debug)]
pub struct StaticBuild {
    pub space: Option<MultiscaleSpace>,
    pub correctors: CorrectorSet,
}

/// Right sides of the static corrector problems.
#[derive(Clone, Copy, Debug)]
pub struct StaticData<'a> {
    pub g_tilde: Option<&'a [f64]>,
    pub flux: Option<(&'a ScalarFn, f64)>,
}

/// Builds the multiscale basis and/or static correctors with one
/// factorization per patch. `kind` selects the operator of the local
/// problems; the basis always uses `Acal`.
pub fn build_static(
    inst: &Instance,
    aux: &AuxSpace,
    layers: Layers,
    kind: FormKind,
    with_basis: bool,
    data: StaticData<'_>,
) -> Result<StaticBuild> {
    if with_basis && kind != FormKind::Acal {
        return Err(CemError::InvalidInput("the multiscale basis is defined with the Acal form".into()));
    }
    let groups = patch_groups(inst, layers)?;
    let fine = inst.fine();
    let nn = fine.num_nodes();
    let op = kind.global(inst);
    let l = aux.l;
    let mut columns: Vec<Option<PatchVec>> = vec![None; if with_basis { aux.num_functions() } else { 0 }];
    let mut correctors = CorrectorSet::zeros(nn);
    let has_flux = data.flux.is_some_and(|(q, _)| !q.is_zero()) && inst.bp.has_neumann();
    let has_g = data.g_tilde.is_some_and(|g| g.iter().any(|&x| x != 0.0));
    if !with_basis && !has_flux && !has_g {
        return Ok(StaticBuild { space: None, correctors });
    }

    for chunk in groups.chunks(32) {
        let results = chunk
            .par_iter()
            .map(|grp| -> Result<_> {
                let sys = PatchSystem::new(inst, aux, grp, op)?;
                let mut rhs: Vec<(Vec<f64>, Vec<(usize, f64)>)> = Vec::new();
                if with_basis {
                    for &e in &grp.members {
                        for j in 0..l {
                            rhs.push((vec![0.0; sys.n_free()], vec![(sys.q_index(e, j), 1.0)]));
                        }
                    }
                }
                let d_col = if has_g {
                    let g = data.g_tilde.unwrap();
                    let mut b = vec![0.0; sys.n_free()];
                    for &e in &grp.members {
                        let (cells, y) = element_form_rhs(inst, e, kind, g)?;
                        sys.add_box_to_free(&cells, &y, &mut b);
                    }
                    rhs.push((b, Vec::new()));
                    Some(rhs.len() - 1)
                } else {
                    None
                };
                let n_col = if has_flux {
                    let (q, t) = data.flux.unwrap();
                    let mut b = vec![0.0; sys.n_free()];
                    let mut any = false;
                    for &e in &grp.members {
                        if let Some((cells, y)) = element_flux_rhs(inst, e, q, t) {
                            sys.add_box_to_free(&cells, &y, &mut b);
                            any = true;
                        }
                    }
                    any.then(|| {
                        rhs.push((b, Vec::new()));
                        rhs.len() - 1
                    })
                } else {
                    None
                };
                let sol = sys.solve_many(&rhs)?;
                let basis: Vec<PatchVec> =
                    if with_basis { (0..grp.members.len() * l).map(|k| sys.to_patchvec(&sol[k])).collect() } else { Vec::new() };
                let d = d_col.map(|k| sys.to_patchvec(&sol[k]));
                let n = n_col.map(|k| sys.to_patchvec(&sol[k]));
                Ok((grp.members.clone(), basis, d, n))
            })
            .collect::<Result<Vec<_>>>()?;
        for (members, basis, d, n) in results {
            let mut it = basis.into_iter();
            if with_basis {
                for e in members {
                    for j in 0..l {
                        columns[e * l + j] = it.next();
                    }
                }
            }
            if let Some(d) = d {
                d.add_to(fine, 1.0, &mut correctors.d);
            }
            if let Some(n) = n {
                n.add_to(fine, 1.0, &mut correctors.n);
            }
        }
    }
    let space = with_basis.then(|| MultiscaleSpace {
        layers,
        l,
        columns: columns.into_iter().map(|c| c.expect("every column solved")).collect(),
    });
    Ok(StaticBuild { space, correctors })
}

/// Multiscale basis `psi_i^{j,m}` for every element and eigenfunction.
pub fn build_ms_basis(inst: &Instance, aux: &AuxSpace, layers: Layers) -> Result<MultiscaleSpace> {
    let b = build_static(inst, aux, layers, FormKind::Acal, true, StaticData { g_tilde: None, flux: None })?;
    Ok(b.space.expect("basis requested"))
}

/// `D^m g~ = sum_i D_i^m g~`.
pub fn dirichlet_corrector(inst: &Instance, aux: &AuxSpace, layers: Layers, g_tilde: &[f64]) -> Result<Vec<f64>> {
    let b = build_static(inst, aux, layers, FormKind::Acal, false, StaticData { g_tilde: Some(g_tilde), flux: None })?;
    Ok(b.correctors.d)
}

/// `N^m q = sum_i N_i^m q` at time `t`.
pub fn neumann_corrector(inst: &Instance, aux: &AuxSpace, layers: Layers, q: &ScalarFn, t: f64) -> Result<Vec<f64>> {
    if !inst.bp.has_neumann() {
        return Err(CemError::EmptyNeumann);
    }
    let b = build_static(inst, aux, layers, FormKind::Acal, false, StaticData { g_tilde: None, flux: Some((q, t)) })?;
    Ok(b.correctors.n)
}

/// Basis and both static correctors in one pass.
pub fn build_space_and_correctors(
    inst: &Instance,
    aux: &AuxSpace,
    layers: Layers,
    g_tilde: &[f64],
    q: &ScalarFn,
    t: f64,
) -> Result<(MultiscaleSpace, CorrectorSet)> {
    let b = build_static(inst, aux, layers, FormKind::Acal, true, StaticData { g_tilde: Some(g_tilde), flux: Some((q, t)) })?;
    Ok((b.space.expect("basis requested"), b.correctors))
}
