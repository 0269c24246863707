use faer::Mat;

use crate::assembly::{SparseLu, SparseOperator};
use crate::error::{CemError, Result};
use crate::grid::{local_dof_mask, CellBox, FineGrid};
use crate::instance::Instance;
use crate::spectral::AuxSpace;

/// Values on the closed node box of `cells`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchVec {
    pub cells: CellBox,
    pub values: Vec<f64>,
}

impl PatchVec {
    pub fn zeros(cells: CellBox) -> Self {
        Self { cells, values: vec![0.0; cells.num_nodes()] }
    }

    pub fn add_to(&self, fine: &FineGrid, alpha: f64, out: &mut [f64]) {
        self.cells.scatter_add(fine, alpha, &self.values, out);
    }

    pub fn to_global(&self, fine: &FineGrid) -> Vec<f64> {
        let mut out = vec![0.0; fine.num_nodes()];
        self.add_to(fine, 1.0, &mut out);
        out
    }

    pub fn dot_global(&self, fine: &FineGrid, v: &[f64]) -> f64 {
        let c = &self.cells;
        let w = c.node_width();
        let mut s = 0.0;
        for j in c.y0..=c.y1 {
            let row = &self.values[(j - c.y0) * w..(j - c.y0 + 1) * w];
            let g0 = fine.node_index(c.x0, j);
            s += row.iter().zip(&v[g0..g0 + w]).map(|(a, b)| a * b).sum::<f64>();
        }
        s
    }

    /// `op * self` on the same box. Valid when `self` vanishes on the box
    /// lines that lie inside the domain.
    pub fn apply_in_box(&self, fine: &FineGrid, op: &SparseOperator) -> Vec<f64> {
        let c = &self.cells;
        let nxg = fine.nodes_x();
        let mut out = vec![0.0; c.num_nodes()];
        for j in c.y0..=c.y1 {
            for i in c.x0..=c.x1 {
                let (cols, vals) = op.row(fine.node_index(i, j));
                let mut s = 0.0;
                for (&col, &a) in cols.iter().zip(vals) {
                    let (ci, cj) = (col % nxg, col / nxg);
                    if c.contains_node(ci, cj) {
                        s += a * self.values[c.local_node(ci, cj)];
                    }
                }
                out[c.local_node(i, j)] = s;
            }
        }
        out
    }

    /// `sum self[k] * other[k]` over the common nodes, `other` given on `cells`.
    pub fn dot_box(&self, cells: &CellBox, other: &[f64]) -> f64 {
        let Some(r) = self.cells.intersection(cells) else {
            return 0.0;
        };
        let mut s = 0.0;
        for j in r.y0..=r.y1 {
            let a0 = self.cells.local_node(r.x0, j);
            let b0 = cells.local_node(r.x0, j);
            let w = r.node_width();
            s += self.values[a0..a0 + w].iter().zip(&other[b0..b0 + w]).map(|(x, y)| x * y).sum::<f64>();
        }
        s
    }
}

/// Elements sharing one oversampled region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGroup {
    pub cells: CellBox,
    /// Elements inside the region, ascending.
    pub elements: Vec<usize>,
    /// Elements whose region this is, ascending.
    pub members: Vec<usize>,
}

/// Factorized bordered system of one patch.
pub struct PatchSystem {
    cells: CellBox,
    elements: Vec<usize>,
    l: usize,
    /// Box-local node -> free position.
    pos: Vec<Option<usize>>,
    free_local: Vec<usize>,
    lu: SparseLu,
}

impl PatchSystem {
    pub fn new(inst: &Instance, aux: &AuxSpace, grp: &PatchGroup, op: &SparseOperator) -> Result<Self> {
        let fine = inst.fine();
        let cells = grp.cells;
        let dofs = local_dof_mask(fine, cells, &inst.bp);
        let mut pos = vec![None; cells.num_nodes()];
        let mut free_local = Vec::with_capacity(dofs.len());
        for &g in &dofs.free {
            let (i, j) = fine.node_ij(g);
            let k = cells.local_node(i, j);
            pos[k] = Some(free_local.len());
            free_local.push(k);
        }
        if free_local.is_empty() {
            return Err(CemError::InvalidInput("patch without free degrees of freedom".into()));
        }
        let nf = free_local.len();
        let l = aux.l;
        let nq = grp.elements.len() * l;
        let mut t = Vec::new();
        let nxg = fine.nodes_x();
        for (p, &k) in free_local.iter().enumerate() {
            let (i, j) = (cells.x0 + k % cells.node_width(), cells.y0 + k / cells.node_width());
            let (cols, vals) = op.row(fine.node_index(i, j));
            for (&col, &a) in cols.iter().zip(vals) {
                let (ci, cj) = (col % nxg, col / nxg);
                if cells.contains_node(ci, cj) {
                    if let Some(q) = pos[cells.local_node(ci, cj)] {
                        t.push((p, q, a));
                    }
                }
            }
        }
        for (r_el, &e) in grp.elements.iter().enumerate() {
            let el = &aux.elements[e];
            let ec = el.cells;
            for j in 0..l {
                let r = nf + r_el * l + j;
                for (kl, &v) in el.s_basis[j].iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let (i, jj) = (ec.x0 + kl % ec.node_width(), ec.y0 + kl / ec.node_width());
                    if let Some(p) = pos[cells.local_node(i, jj)] {
                        t.push((p, r, v));
                        t.push((r, p, v));
                    }
                }
                t.push((r, r, -1.0));
            }
        }
        let lu = SparseOperator::from_triplets(nf + nq, nf + nq, t)?.lu()?;
        Ok(Self { cells, elements: grp.elements.clone(), l, pos, free_local, lu })
    }

    pub fn n_free(&self) -> usize {
        self.free_local.len()
    }

    pub fn cells(&self) -> CellBox {
        self.cells
    }

    /// Row of the bordered block belonging to `pi`'s `j`-th functional on `e`.
    pub fn q_index(&self, e: usize, j: usize) -> usize {
        let r = self.elements.binary_search(&e).expect("element inside the patch");
        r * self.l + j
    }

    /// Adds box-local values on `cells` (inside the patch) to a free vector.
    pub fn add_box_to_free(&self, cells: &CellBox, y: &[f64], b: &mut [f64]) {
        for j in cells.y0..=cells.y1 {
            for i in cells.x0..=cells.x1 {
                if let Some(p) = self.pos[self.cells.local_node(i, j)] {
                    b[p] += y[cells.local_node(i, j)];
                }
            }
        }
    }

    /// Free part of a fine vector.
    pub fn gather_free(&self, fine: &FineGrid, v: &[f64]) -> Vec<f64> {
        let w = self.cells.node_width();
        self.free_local
            .iter()
            .map(|&k| v[fine.node_index(self.cells.x0 + k % w, self.cells.y0 + k / w)])
            .collect()
    }

    /// Principal submatrix of `op` on the free nodes.
    pub fn restrict_free(&self, fine: &FineGrid, op: &SparseOperator) -> Result<SparseOperator> {
        let w = self.cells.node_width();
        let nxg = fine.nodes_x();
        let mut t = Vec::new();
        for (p, &k) in self.free_local.iter().enumerate() {
            let (cols, vals) = op.row(fine.node_index(self.cells.x0 + k % w, self.cells.y0 + k / w));
            for (&col, &a) in cols.iter().zip(vals) {
                let (ci, cj) = (col % nxg, col / nxg);
                if self.cells.contains_node(ci, cj) {
                    if let Some(q) = self.pos[self.cells.local_node(ci, cj)] {
                        t.push((p, q, a));
                    }
                }
            }
        }
        SparseOperator::from_triplets(self.n_free(), self.n_free(), t)
    }

    /// Solves for several right sides `(b1, sparse b2)`; returns the free
    /// parts of the solutions.
    pub fn solve_many(&self, rhs: &[(Vec<f64>, Vec<(usize, f64)>)]) -> Result<Vec<Vec<f64>>> {
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        let nf = self.n_free();
        let mut m = Mat::<f64>::zeros(self.lu.dim(), rhs.len());
        for (c, (b1, b2)) in rhs.iter().enumerate() {
            for (i, &v) in b1.iter().enumerate() {
                m[(i, c)] = v;
            }
            for &(r, v) in b2 {
                m[(nf + r, c)] += v;
            }
        }
        self.lu.solve_in_place(&mut m)?;
        Ok((0..rhs.len()).map(|c| (0..nf).map(|i| m[(i, c)]).collect()).collect())
    }

    pub fn solve(&self, b1: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(&[(b1.to_vec(), Vec::new())])?.pop().expect("one column"))
    }

    pub fn to_patchvec(&self, x: &[f64]) -> PatchVec {
        let mut v = PatchVec::zeros(self.cells);
        for (&k, &xi) in self.free_local.iter().zip(x) {
            v.values[k] = xi;
        }
        v
    }
}
