//! Structured fine/coarse rectangular grids, oversampled regions and boundary
//! classification.
//!
//! Nodes are numbered row-major: node `(i, j)` has index `j * (nx + 1) + i`,
//! with `i` running along `x`. Cells are numbered the same way with `nx`
//! cells per row. Cell nodes are listed counterclockwise starting from the
//! lower-left corner.

use crate::error::{CemError, Result};

/// Axis-aligned rectangular domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl DomainSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(CemError::InvalidGrid(format!(
                "degenerate domain [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn unit_square() -> Self {
        Self { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Half-open range of fine cells `[x0, x1) x [y0, y1)`; its node box is
/// `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl CellBox {
    pub fn node_width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn node_height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.node_width() * self.node_height()
    }

    pub fn num_cells(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains_node(&self, i: usize, j: usize) -> bool {
        i >= self.x0 && i <= self.x1 && j >= self.y0 && j <= self.y1
    }

    /// Box-local index of a node given in global `(i, j)` coordinates.
    pub fn local_node(&self, i: usize, j: usize) -> usize {
        (j - self.y0) * self.node_width() + (i - self.x0)
    }

    /// Global node indices of the box, box-local order.
    pub fn global_nodes(&self, fine: &FineGrid) -> Vec<usize> {
        (self.y0..=self.y1)
            .flat_map(|j| (self.x0..=self.x1).map(move |i| fine.node_index(i, j)))
            .collect()
    }

    /// Copies the box part of a global nodal vector.
    pub fn gather(&self, fine: &FineGrid, v: &[f64]) -> Vec<f64> {
        let w = self.node_width();
        let mut out = Vec::with_capacity(self.num_nodes());
        for j in self.y0..=self.y1 {
            let s = fine.node_index(self.x0, j);
            out.extend_from_slice(&v[s..s + w]);
        }
        out
    }

    /// `out[global] += alpha * local[box]`
    pub fn scatter_add(&self, fine: &FineGrid, alpha: f64, local: &[f64], out: &mut [f64]) {
        let w = self.node_width();
        for (r, j) in (self.y0..=self.y1).enumerate() {
            let s = fine.node_index(self.x0, j);
            for (o, l) in out[s..s + w].iter_mut().zip(&local[r * w..(r + 1) * w]) {
                *o += alpha * l;
            }
        }
    }

    /// Intersection of the node boxes; may be degenerate (a line or a point).
    pub fn intersection(&self, other: &CellBox) -> Option<CellBox> {
        let b = CellBox {
            x0: self.x0.max(other.x0),
            x1: self.x1.min(other.x1),
            y0: self.y0.max(other.y0),
            y1: self.y1.min(other.y1),
        };
        (b.x0 <= b.x1 && b.y0 <= b.y1).then_some(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }
}

/// One fine edge on the domain boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub side: Side,
    pub nodes: [usize; 2],
    pub cell: usize,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl BoundaryEdge {
    pub fn length(&self) -> f64 {
        ((self.end[0] - self.start[0]).powi(2) + (self.end[1] - self.start[1]).powi(2)).sqrt()
    }

    pub fn normal(&self) -> [f64; 2] {
        self.side.normal()
    }

    /// Position of a point on the edge, `s` in `[0, 1]`.
    pub fn point(&self, s: f64) -> [f64; 2] {
        [
            self.start[0] + s * (self.end[0] - self.start[0]),
            self.start[1] + s * (self.end[1] - self.start[1]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FineGrid {
    pub domain: DomainSpec,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl FineGrid {
    pub fn new(domain: DomainSpec, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(CemError::InvalidGrid("fine cell counts must be at least 1".into()));
        }
        Ok(Self {
            domain,
            nx,
            ny,
            hx: domain.width() / nx as f64,
            hy: domain.height() / ny as f64,
        })
    }

    pub fn nodes_x(&self) -> usize {
        self.nx + 1
    }

    pub fn nodes_y(&self) -> usize {
        self.ny + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_x() * self.nodes_y()
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_x() + i
    }

    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % self.nodes_x(), node / self.nodes_x())
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        // Endpoints are pinned so that boundary nodes sit exactly on the boundary.
        let x = if i == self.nx { self.domain.x_max } else { self.domain.x_min + i as f64 * self.hx };
        let y = if j == self.ny { self.domain.y_max } else { self.domain.y_min + j as f64 * self.hy };
        [x, y]
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(node);
        self.point(i, j)
    }

    pub fn cell_index(&self, ci: usize, cj: usize) -> usize {
        cj * self.nx + ci
    }

    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        let n0 = self.node_index(ci, cj);
        let w = self.nodes_x();
        [n0, n0 + 1, n0 + w + 1, n0 + w]
    }

    pub fn cell_center(&self, ci: usize, cj: usize) -> [f64; 2] {
        [
            self.domain.x_min + (ci as f64 + 0.5) * self.hx,
            self.domain.y_min + (cj as f64 + 0.5) * self.hy,
        ]
    }

    pub fn all_cells(&self) -> CellBox {
        CellBox { x0: 0, x1: self.nx, y0: 0, y1: self.ny }
    }

    pub fn is_boundary_node(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Boundary edges ordered bottom, right, top, left; each side traversed in
    /// increasing coordinate.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let mut edges = Vec::with_capacity(2 * (self.nx + self.ny));
        for i in 0..self.nx {
            edges.push(BoundaryEdge {
                side: Side::Bottom,
                nodes: [self.node_index(i, 0), self.node_index(i + 1, 0)],
                cell: self.cell_index(i, 0),
                start: self.point(i, 0),
                end: self.point(i + 1, 0),
            });
        }
        for j in 0..self.ny {
            edges.push(BoundaryEdge {
                side: Side::Right,
                nodes: [self.node_index(self.nx, j), self.node_index(self.nx, j + 1)],
                cell: self.cell_index(self.nx - 1, j),
                start: self.point(self.nx, j),
                end: self.point(self.nx, j + 1),
            });
        }
        for i in 0..self.nx {
            edges.push(BoundaryEdge {
                side: Side::Top,
                nodes: [self.node_index(i, self.ny), self.node_index(i + 1, self.ny)],
                cell: self.cell_index(i, self.ny - 1),
                start: self.point(i, self.ny),
                end: self.point(i + 1, self.ny),
            });
        }
        for j in 0..self.ny {
            edges.push(BoundaryEdge {
                side: Side::Left,
                nodes: [self.node_index(0, j), self.node_index(0, j + 1)],
                cell: self.cell_index(0, j),
                start: self.point(0, j),
                end: self.point(0, j + 1),
            });
        }
        edges
    }
}

/// Conforming coarse partition: each coarse element is a block of
/// `cells_x x cells_y` fine cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseGrid {
    pub nx: usize,
    pub ny: usize,
    pub cells_x: usize,
    pub cells_y: usize,
    /// Coarse mesh size: the longest coarse element edge.
    pub h: f64,
}

impl CoarseGrid {
    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.nx + ex
    }

    pub fn element_ij(&self, element: usize) -> (usize, usize) {
        (element % self.nx, element / self.nx)
    }

    pub fn cell_box(&self, element: usize) -> CellBox {
        let (ex, ey) = self.element_ij(element);
        CellBox {
            x0: ex * self.cells_x,
            x1: (ex + 1) * self.cells_x,
            y0: ey * self.cells_y,
            y1: (ey + 1) * self.cells_y,
        }
    }

    pub fn element_of_cell(&self, ci: usize, cj: usize) -> usize {
        self.element_index(ci / self.cells_x, cj / self.cells_y)
    }

    /// Fine cell indices of an element, row-major.
    pub fn fine_cells(&self, fine: &FineGrid, element: usize) -> Vec<usize> {
        let b = self.cell_box(element);
        (b.y0..b.y1)
            .flat_map(|cj| (b.x0..b.x1).map(move |ci| fine.cell_index(ci, cj)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPair {
    pub fine: FineGrid,
    pub coarse: CoarseGrid,
}

impl GridPair {
    pub fn h(&self) -> f64 {
        self.coarse.h
    }
}

/// Builds the fine grid and the conforming coarse partition.
pub fn build_grids(domain: DomainSpec, nx: usize, ny: usize, cnx: usize, cny: usize) -> Result<GridPair> {
    if cnx == 0 || cny == 0 {
        return Err(CemError::InvalidGrid("coarse element counts must be at least 1".into()));
    }
    let fine = FineGrid::new(domain, nx, ny)?;
    if nx % cnx != 0 || ny % cny != 0 {
        return Err(CemError::InvalidGrid(format!(
            "fine resolution {nx}x{ny} is not divisible by coarse resolution {cnx}x{cny}"
        )));
    }
    let cells_x = nx / cnx;
    let cells_y = ny / cny;
    let h = (fine.hx * cells_x as f64).max(fine.hy * cells_y as f64);
    Ok(GridPair { fine, coarse: CoarseGrid { nx: cnx, ny: cny, cells_x, cells_y, h } })
}

/// Oversampled domain `K_i^m`: the element `K_i` grown by `m` rings of coarse
/// elements and clipped to the domain. Rectangular by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OversampleRegion {
    pub center: usize,
    pub layers: usize,
    /// Inclusive coarse element ranges.
    pub ex: (usize, usize),
    pub ey: (usize, usize),
    pub cells: CellBox,
}

/// Key identifying the geometry of a region; regions with equal keys share
/// their local systems.
pub type PatchKey = (usize, usize, usize, usize);

impl OversampleRegion {
    pub fn key(&self) -> PatchKey {
        (self.ex.0, self.ex.1, self.ey.0, self.ey.1)
    }

    pub fn elements(&self, coarse: &CoarseGrid) -> Vec<usize> {
        (self.ey.0..=self.ey.1)
            .flat_map(|ey| (self.ex.0..=self.ex.1).map(move |ex| coarse.element_index(ex, ey)))
            .collect()
    }

    pub fn num_elements(&self) -> usize {
        (self.ex.1 - self.ex.0 + 1) * (self.ey.1 - self.ey.0 + 1)
    }

    pub fn is_whole_domain(&self, coarse: &CoarseGrid) -> bool {
        self.ex == (0, coarse.nx - 1) && self.ey == (0, coarse.ny - 1)
    }
}

pub fn oversample_region(coarse: &CoarseGrid, element: usize, layers: usize) -> Result<OversampleRegion> {
    if element >= coarse.num_elements() {
        return Err(CemError::IndexOutOfRange { index: element, size: coarse.num_elements() });
    }
    let (ex, ey) = coarse.element_ij(element);
    let ex0 = ex.saturating_sub(layers);
    let ey0 = ey.saturating_sub(layers);
    let ex1 = (ex + layers).min(coarse.nx - 1);
    let ey1 = (ey + layers).min(coarse.ny - 1);
    let cells = CellBox {
        x0: ex0 * coarse.cells_x,
        x1: (ex1 + 1) * coarse.cells_x,
        y0: ey0 * coarse.cells_y,
        y1: (ey1 + 1) * coarse.cells_y,
    };
    Ok(OversampleRegion { center: element, layers, ex: (ex0, ex1), ey: (ey0, ey1), cells })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeTag {
    Interior,
    /// On the part of the region boundary that lies inside the domain.
    PatchBoundary,
    Dirichlet,
    NeumannRobin,
}

/// Degrees of freedom of the local space `V_i^m` on a cell box.
#[derive(Clone, Debug)]
pub struct LocalDofs {
    pub cells: CellBox,
    /// Tag per node of the box, box-local row-major.
    pub tags: Vec<NodeTag>,
    /// Free global node indices, ascending.
    pub free: Vec<usize>,
}

impl LocalDofs {
    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }
}

/// Free dofs of `V_i^m`: nodes of the closed region minus those on the
/// interior part of its boundary and those on `Gamma_D`.
pub fn local_dof_mask(fine: &FineGrid, cells: CellBox, bp: &BoundaryPartition) -> LocalDofs {
    let mut tags = Vec::with_capacity(cells.num_nodes());
    let mut free = Vec::new();
    for j in cells.y0..=cells.y1 {
        for i in cells.x0..=cells.x1 {
            let node = fine.node_index(i, j);
            let on_cut = (i == cells.x0 && cells.x0 > 0)
                || (i == cells.x1 && cells.x1 < fine.nx)
                || (j == cells.y0 && cells.y0 > 0)
                || (j == cells.y1 && cells.y1 < fine.ny);
            let tag = if on_cut {
                NodeTag::PatchBoundary
            } else if bp.is_dirichlet(node) {
                NodeTag::Dirichlet
            } else if fine.is_boundary_node(i, j) {
                NodeTag::NeumannRobin
            } else {
                NodeTag::Interior
            };
            if matches!(tag, NodeTag::Interior | NodeTag::NeumannRobin) {
                free.push(node);
            }
            tags.push(tag);
        }
    }
    LocalDofs { cells, tags, free }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Dirichlet,
    NeumannRobin,
}

/// One interval of a side. `start`/`end` are absolute coordinates along the
/// side (`x` for bottom/top, `y` for left/right).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySegment {
    pub side: Side,
    pub start: f64,
    pub end: f64,
    pub kind: BoundaryKind,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct BoundarySpec {
    pub segments: Vec<BoundarySegment>,
}

impl BoundarySpec {
    /// Whole sides with the given kinds, in the order bottom, right, top, left.
    pub fn sides(domain: &DomainSpec, kinds: [BoundaryKind; 4]) -> Self {
        let segments = Side::ALL
            .iter()
            .zip(kinds)
            .map(|(&side, kind)| {
                let (start, end) = side_extent(domain, side);
                BoundarySegment { side, start, end, kind }
            })
            .collect();
        Self { segments }
    }

    pub fn all(domain: &DomainSpec, kind: BoundaryKind) -> Self {
        Self::sides(domain, [kind; 4])
    }

    /// Dirichlet on top, Neumann/Robin on the other three sides.
    pub fn dirichlet_top(domain: &DomainSpec) -> Self {
        use BoundaryKind::*;
        Self::sides(domain, [NeumannRobin, NeumannRobin, Dirichlet, NeumannRobin])
    }
}

fn side_extent(domain: &DomainSpec, side: Side) -> (f64, f64) {
    match side {
        Side::Bottom | Side::Top => (domain.x_min, domain.x_max),
        Side::Left | Side::Right => (domain.y_min, domain.y_max),
    }
}

/// Tagged boundary edges plus node-level views of `Gamma_D` and `Gamma_N`.
#[derive(Clone, Debug)]
pub struct BoundaryPartition {
    pub edges: Vec<BoundaryEdge>,
    pub kinds: Vec<BoundaryKind>,
    dirichlet_nodes: Vec<bool>,
    neumann_nodes: Vec<bool>,
}

impl BoundaryPartition {
    /// Nodes in the closure of `Gamma_D` (a corner shared with `Gamma_N` counts
    /// as Dirichlet).
    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet_nodes[node]
    }

    /// Nodes touching at least one `Gamma_N` edge.
    pub fn touches_neumann(&self, node: usize) -> bool {
        self.neumann_nodes[node]
    }

    pub fn has_neumann(&self) -> bool {
        self.kinds.contains(&BoundaryKind::NeumannRobin)
    }

    pub fn has_dirichlet(&self) -> bool {
        self.kinds.contains(&BoundaryKind::Dirichlet)
    }

    pub fn neumann_edges(&self) -> impl Iterator<Item = &BoundaryEdge> {
        self.edges
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == BoundaryKind::NeumannRobin)
            .map(|(e, _)| e)
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet_nodes
    }

    /// Global free dofs of `V` (all nodes not on `Gamma_D`), ascending.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.dirichlet_nodes.len()).filter(|&n| !self.dirichlet_nodes[n]).collect()
    }
}

/// Tags every fine boundary edge from a side/interval description.
///
/// Interval endpoints must coincide with fine nodes, and every edge must be
/// covered by exactly one interval.
pub fn classify_boundary(grid: &FineGrid, spec: &BoundarySpec) -> Result<BoundaryPartition> {
    let d = grid.domain;
    for seg in &spec.segments {
        let (lo, hi) = side_extent(&d, seg.side);
        let h = match seg.side {
            Side::Bottom | Side::Top => grid.hx,
            Side::Left | Side::Right => grid.hy,
        };
        if !(seg.start < seg.end) || seg.start < lo - 1e-12 * h || seg.end > hi + 1e-12 * h {
            return Err(CemError::InvalidBoundary(format!(
                "interval [{}, {}] on {} side is empty or outside [{lo}, {hi}]",
                seg.start,
                seg.end,
                seg.side.name()
            )));
        }
        for v in [seg.start, seg.end] {
            let k = (v - lo) / h;
            if (k - k.round()).abs() > 1e-9 {
                return Err(CemError::InvalidBoundary(format!(
                    "interval endpoint {v} on {} side is not aligned with a fine node",
                    seg.side.name()
                )));
            }
        }
    }

    let edges = grid.boundary_edges();
    let mut kinds = Vec::with_capacity(edges.len());
    for e in &edges {
        let mid = e.point(0.5);
        let t = match e.side {
            Side::Bottom | Side::Top => mid[0],
            Side::Left | Side::Right => mid[1],
        };
        let mut hits = spec.segments.iter().filter(|s| s.side == e.side && s.start < t && t < s.end);
        let first = hits.next().ok_or_else(|| {
            CemError::InvalidBoundary(format!("{} side near {t} is not covered", e.side.name()))
        })?;
        if hits.next().is_some() {
            return Err(CemError::InvalidBoundary(format!(
                "overlapping intervals on {} side near {t}",
                e.side.name()
            )));
        }
        kinds.push(first.kind);
    }

    let mut dirichlet_nodes = vec![false; grid.num_nodes()];
    let mut neumann_nodes = vec![false; grid.num_nodes()];
    for (e, k) in edges.iter().zip(&kinds) {
        let mask = match k {
            BoundaryKind::Dirichlet => &mut dirichlet_nodes,
            BoundaryKind::NeumannRobin => &mut neumann_nodes,
        };
        mask[e.nodes[0]] = true;
        mask[e.nodes[1]] = true;
    }
    Ok(BoundaryPartition { edges, kinds, dirichlet_nodes, neumann_nodes })
}
