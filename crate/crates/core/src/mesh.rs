//! Uniform tensor-product grids on the unit hypercube, axis-aligned sub-boxes
//! of such grids, element patches and coarse/fine nesting.
//!
//! All numbering is lexicographic with axis 0 running fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// A point in R^d, padded with zeros beyond `dim`.
pub type Point = [f64; MAX_DIM];

/// Multi-index, padded with zeros beyond `dim`.
pub type Multi = [usize; MAX_DIM];

/// Uniform grid of `(0,1)^dim` with `n` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorGrid {
    dim: usize,
    cells: usize,
}

impl TensorGrid {
    pub fn new(dim: usize, cells_per_axis: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if cells_per_axis < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per axis, got {cells_per_axis}"
            )));
        }
        Ok(TensorGrid {
            dim,
            cells: cells_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn mesh_size(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn element_count(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn node_count(&self) -> usize {
        (self.cells + 1).pow(self.dim as u32)
    }

    /// Volume of one element, `h^d`.
    pub fn element_volume(&self) -> f64 {
        self.mesh_size().powi(self.dim as i32)
    }

    pub fn element_multi(&self, id: usize) -> Multi {
        unravel(id, self.cells, self.dim)
    }

    pub fn element_id(&self, multi: &Multi) -> usize {
        ravel(multi, self.cells, self.dim)
    }

    pub fn node_multi(&self, id: usize) -> Multi {
        unravel(id, self.cells + 1, self.dim)
    }

    pub fn node_id(&self, multi: &Multi) -> usize {
        ravel(multi, self.cells + 1, self.dim)
    }

    pub fn node_point(&self, id: usize) -> Point {
        let m = self.node_multi(id);
        let h = self.mesh_size();
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = m[a] as f64 * h;
        }
        p
    }

    pub fn is_boundary_node(&self, id: usize) -> bool {
        let m = self.node_multi(id);
        (0..self.dim).any(|a| m[a] == 0 || m[a] == self.cells)
    }

    pub fn check_element(&self, id: usize) -> Result<()> {
        if id >= self.element_count() {
            return Err(Error::InvalidElement {
                id,
                count: self.element_count(),
            });
        }
        Ok(())
    }

    pub fn element_midpoint(&self, id: usize) -> Result<Point> {
        self.check_element(id)?;
        let m = self.element_multi(id);
        let h = self.mesh_size();
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = (m[a] as f64 + 0.5) * h;
        }
        Ok(p)
    }

    /// Element containing `x` (points on interior faces go to the upper cell).
    pub fn locate(&self, x: &Point) -> usize {
        let mut m = [0; MAX_DIM];
        for a in 0..self.dim {
            let i = (x[a] * self.cells as f64).floor();
            m[a] = (i.max(0.0) as usize).min(self.cells - 1);
        }
        self.element_id(&m)
    }

    /// The whole grid as a box mesh with homogeneous Dirichlet nodes on `∂Ω`.
    pub fn as_box(&self) -> BoxMesh {
        let mut cells = [0; MAX_DIM];
        for c in cells.iter_mut().take(self.dim) {
            *c = self.cells;
        }
        BoxMesh::new(self.dim, self.cells, [0; MAX_DIM], cells)
    }
}

fn ravel(m: &Multi, extent: usize, dim: usize) -> usize {
    let mut id = 0;
    for a in (0..dim).rev() {
        id = id * extent + m[a];
    }
    id
}

fn unravel(mut id: usize, extent: usize, dim: usize) -> Multi {
    let mut m = [0; MAX_DIM];
    for slot in m.iter_mut().take(dim) {
        *slot = id % extent;
        id /= extent;
    }
    m
}

const NONE: usize = usize::MAX;

/// An axis-aligned block of cells cut out of a uniform grid with `parent_cells`
/// cells per axis. Nodes on the block boundary carry homogeneous Dirichlet
/// conditions; the remaining nodes are "free" and numbered lexicographically.
#[derive(Clone, Debug)]
pub struct BoxMesh {
    dim: usize,
    parent_cells: usize,
    lo: Multi,
    cells: Multi,
    strides: Multi,
    free_index: Vec<usize>,
    free_nodes: Vec<usize>,
    boundary_nodes: Vec<usize>,
    boundary_index: Vec<usize>,
}

impl BoxMesh {
    /// `lo` is the node multi-index of the lower corner in the parent grid.
    pub fn new(dim: usize, parent_cells: usize, lo: Multi, cells: Multi) -> Self {
        let mut strides = [0; MAX_DIM];
        let mut stride = 1;
        for a in 0..dim {
            strides[a] = stride;
            stride *= cells[a] + 1;
        }
        let count = stride;
        let mut free_index = vec![NONE; count];
        let mut boundary_index = vec![NONE; count];
        let mut free_nodes = Vec::new();
        let mut boundary_nodes = Vec::new();
        for id in 0..count {
            let mut on_boundary = false;
            let mut rest = id;
            for a in 0..dim {
                let j = rest % (cells[a] + 1);
                rest /= cells[a] + 1;
                if j == 0 || j == cells[a] {
                    on_boundary = true;
                }
            }
            if on_boundary {
                boundary_index[id] = boundary_nodes.len();
                boundary_nodes.push(id);
            } else {
                free_index[id] = free_nodes.len();
                free_nodes.push(id);
            }
        }
        BoxMesh {
            dim,
            parent_cells,
            lo,
            cells,
            strides,
            free_index,
            free_nodes,
            boundary_nodes,
            boundary_index,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mesh_size(&self) -> f64 {
        1.0 / self.parent_cells as f64
    }

    pub fn parent_cells(&self) -> usize {
        self.parent_cells
    }

    pub fn lower_corner(&self) -> Multi {
        self.lo
    }

    pub fn cells(&self) -> Multi {
        self.cells
    }

    pub fn node_count(&self) -> usize {
        self.free_index.len()
    }

    pub fn element_count(&self) -> usize {
        (0..self.dim).map(|a| self.cells[a]).product()
    }

    pub fn node_multi(&self, id: usize) -> Multi {
        let mut m = [0; MAX_DIM];
        let mut rest = id;
        for a in 0..self.dim {
            m[a] = rest % (self.cells[a] + 1);
            rest /= self.cells[a] + 1;
        }
        m
    }

    pub fn node_id(&self, m: &Multi) -> usize {
        (0..self.dim).map(|a| m[a] * self.strides[a]).sum()
    }

    pub fn element_multi(&self, id: usize) -> Multi {
        let mut m = [0; MAX_DIM];
        let mut rest = id;
        for a in 0..self.dim {
            m[a] = rest % self.cells[a];
            rest /= self.cells[a];
        }
        m
    }

    /// Local node ids of the `2^dim` element corners; bit `a` of the corner
    /// index selects the upper side along axis `a`.
    pub fn element_nodes(&self, id: usize, out: &mut [usize; 8]) {
        let m = self.element_multi(id);
        let base = self.node_id(&m);
        for (k, slot) in out.iter_mut().enumerate().take(1 << self.dim) {
            let mut node = base;
            for a in 0..self.dim {
                if k >> a & 1 == 1 {
                    node += self.strides[a];
                }
            }
            *slot = node;
        }
    }

    /// Coordinates of the lower corner of a local element.
    pub fn element_origin(&self, id: usize) -> Point {
        let m = self.element_multi(id);
        let h = self.mesh_size();
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = (self.lo[a] + m[a]) as f64 * h;
        }
        p
    }

    pub fn node_point(&self, id: usize) -> Point {
        let m = self.node_multi(id);
        let h = self.mesh_size();
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = (self.lo[a] + m[a]) as f64 * h;
        }
        p
    }

    /// Node multi-index in the parent grid.
    pub fn parent_node_multi(&self, id: usize) -> Multi {
        let mut m = self.node_multi(id);
        for a in 0..self.dim {
            m[a] += self.lo[a];
        }
        m
    }

    /// Element multi-index in the parent grid.
    pub fn parent_element_multi(&self, id: usize) -> Multi {
        let mut m = self.element_multi(id);
        for a in 0..self.dim {
            m[a] += self.lo[a];
        }
        m
    }

    pub fn free_index(&self, id: usize) -> Option<usize> {
        let i = self.free_index[id];
        (i != NONE).then_some(i)
    }

    pub fn boundary_index(&self, id: usize) -> Option<usize> {
        let i = self.boundary_index[id];
        (i != NONE).then_some(i)
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn free_count(&self) -> usize {
        self.free_nodes.len()
    }

    /// Restricts a vector over all nodes to the free nodes.
    pub fn restrict_free(&self, full: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&n| full[n]).collect()
    }

    /// Extends a free-node vector by zero boundary values.
    pub fn extend_free(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.node_count()];
        for (&n, &v) in self.free_nodes.iter().zip(free) {
            full[n] = v;
        }
        full
    }
}

/// All elements whose closure meets the closure of some element of `elements`.
pub fn neighborhood(grid: &TensorGrid, elements: &[usize]) -> Vec<usize> {
    let n = grid.cells_per_axis() as isize;
    let dim = grid.dim();
    let mut hit = vec![false; grid.element_count()];
    for &e in elements {
        let m = grid.element_multi(e);
        for k in 0..3usize.pow(dim as u32) {
            let mut nb = [0; MAX_DIM];
            let mut code = k;
            let mut inside = true;
            for a in 0..dim {
                let off = (code % 3) as isize - 1;
                code /= 3;
                let j = m[a] as isize + off;
                if j < 0 || j >= n {
                    inside = false;
                    break;
                }
                nb[a] = j as usize;
            }
            if inside {
                hit[grid.element_id(&nb)] = true;
            }
        }
    }
    (0..hit.len()).filter(|&e| hit[e]).collect()
}

/// Coarse/fine pair where the fine grid subdivides each coarse cell into
/// `ratio^dim` cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NestingMap {
    coarse: TensorGrid,
    fine: TensorGrid,
    ratio: usize,
}

impl NestingMap {
    pub fn new(coarse: TensorGrid, fine: TensorGrid) -> Result<Self> {
        if coarse.dim() != fine.dim() {
            return Err(Error::DimensionMismatch(format!(
                "coarse grid is {}D, fine grid is {}D",
                coarse.dim(),
                fine.dim()
            )));
        }
        let (nc, nf) = (coarse.cells_per_axis(), fine.cells_per_axis());
        if nf < nc || nf % nc != 0 {
            return Err(Error::NonNested {
                coarse: nc,
                fine: nf,
            });
        }
        Ok(NestingMap {
            coarse,
            fine,
            ratio: nf / nc,
        })
    }

    pub fn coarse(&self) -> &TensorGrid {
        &self.coarse
    }

    pub fn fine(&self) -> &TensorGrid {
        &self.fine
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn parent(&self, fine_element: usize) -> usize {
        self.parent_of_multi(&self.fine.element_multi(fine_element))
    }

    pub fn parent_of_multi(&self, fine_multi: &Multi) -> usize {
        let mut m = [0; MAX_DIM];
        for a in 0..self.coarse.dim() {
            m[a] = fine_multi[a] / self.ratio;
        }
        self.coarse.element_id(&m)
    }

    pub fn children(&self, coarse_element: usize) -> Vec<usize> {
        let dim = self.coarse.dim();
        let base = self.coarse.element_multi(coarse_element);
        let r = self.ratio;
        (0..r.pow(dim as u32))
            .map(|k| {
                let local = unravel(k, r, dim);
                let mut m = [0; MAX_DIM];
                for a in 0..dim {
                    m[a] = base[a] * r + local[a];
                }
                self.fine.element_id(&m)
            })
            .collect()
    }

    /// Multilinear interpolation of coarse nodal values onto the fine nodes
    /// (both vectors over all nodes, boundary included).
    pub fn prolongate(&self, coarse_values: &[f64]) -> Vec<f64> {
        let dim = self.coarse.dim();
        let n = self.coarse.cells_per_axis();
        let r = self.ratio;
        (0..self.fine.node_count())
            .map(|id| {
                let j = self.fine.node_multi(id);
                let mut cell = [0; MAX_DIM];
                let mut t = [0.0; MAX_DIM];
                for a in 0..dim {
                    cell[a] = (j[a] / r).min(n - 1);
                    t[a] = (j[a] - cell[a] * r) as f64 / r as f64;
                }
                let mut value = 0.0;
                for k in 0..1usize << dim {
                    let mut weight = 1.0;
                    let mut corner = cell;
                    for a in 0..dim {
                        if k >> a & 1 == 1 {
                            weight *= t[a];
                            corner[a] += 1;
                        } else {
                            weight *= 1.0 - t[a];
                        }
                    }
                    if weight != 0.0 {
                        value += weight * coarse_values[self.coarse.node_id(&corner)];
                    }
                }
                value
            })
            .collect()
    }
}

/// The level-`ℓ` element neighborhood of a coarse element together with its
/// fine submesh.
#[derive(Clone, Debug)]
pub struct Patch {
    center: usize,
    level: usize,
    coarse: TensorGrid,
    lo: Multi,
    hi: Multi,
    elements: Vec<usize>,
    mesh: BoxMesh,
    interior_boundary_nodes: Vec<usize>,
    global_boundary_nodes: Vec<usize>,
    covers_domain: bool,
}

impl Patch {
    /// Builds `N^ℓ(T)`; fails if the patch is the whole domain.
    pub fn new(nesting: &NestingMap, center: usize, level: usize) -> Result<Self> {
        let patch = Self::new_allowing_full(nesting, center, level)?;
        if patch.covers_domain {
            return Err(Error::PatchCoversDomain { center, level });
        }
        Ok(patch)
    }

    /// Like [`Patch::new`] but accepts `N^ℓ(T) = Ω`.
    pub fn new_allowing_full(nesting: &NestingMap, center: usize, level: usize) -> Result<Self> {
        let coarse = *nesting.coarse();
        coarse.check_element(center)?;
        if level == 0 {
            return Err(Error::InvalidParameter("patch level must be >= 1".into()));
        }
        let dim = coarse.dim();
        let n = coarse.cells_per_axis();
        let c = coarse.element_multi(center);
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for a in 0..dim {
            lo[a] = c[a].saturating_sub(level);
            hi[a] = (c[a] + level).min(n - 1);
        }
        let covers_domain = (0..dim).all(|a| lo[a] == 0 && hi[a] == n - 1);

        let mut elements = Vec::new();
        let count: usize = (0..dim).map(|a| hi[a] - lo[a] + 1).product();
        for k in 0..count {
            let mut rest = k;
            let mut m = [0; MAX_DIM];
            for a in 0..dim {
                let ext = hi[a] - lo[a] + 1;
                m[a] = lo[a] + rest % ext;
                rest /= ext;
            }
            elements.push(coarse.element_id(&m));
        }

        let r = nesting.ratio();
        let nf = nesting.fine().cells_per_axis();
        let mut fine_lo = [0; MAX_DIM];
        let mut fine_cells = [0; MAX_DIM];
        for a in 0..dim {
            fine_lo[a] = lo[a] * r;
            fine_cells[a] = (hi[a] - lo[a] + 1) * r;
        }
        let mesh = BoxMesh::new(dim, nf, fine_lo, fine_cells);
        let (mut interior_boundary_nodes, mut global_boundary_nodes) = (Vec::new(), Vec::new());
        for &node in mesh.boundary_nodes() {
            let g = mesh.parent_node_multi(node);
            if (0..dim).any(|a| g[a] == 0 || g[a] == nf) {
                global_boundary_nodes.push(node);
            } else {
                interior_boundary_nodes.push(node);
            }
        }

        Ok(Patch {
            center,
            level,
            coarse,
            lo,
            hi,
            elements,
            mesh,
            interior_boundary_nodes,
            global_boundary_nodes,
            covers_domain,
        })
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coarse(&self) -> &TensorGrid {
        &self.coarse
    }

    /// Coarse elements of the patch in lexicographic order.
    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    /// Position of a coarse element inside [`Patch::elements`].
    pub fn local_index(&self, coarse_element: usize) -> Option<usize> {
        let m = self.coarse.element_multi(coarse_element);
        let dim = self.coarse.dim();
        if (0..dim).any(|a| m[a] < self.lo[a] || m[a] > self.hi[a]) {
            return None;
        }
        let mut idx = 0;
        for a in (0..dim).rev() {
            idx = idx * (self.hi[a] - self.lo[a] + 1) + (m[a] - self.lo[a]);
        }
        Some(idx)
    }

    /// Inclusive coarse element range per axis.
    pub fn coarse_range(&self) -> (Multi, Multi) {
        (self.lo, self.hi)
    }

    pub fn mesh(&self) -> &BoxMesh {
        &self.mesh
    }

    /// Local fine nodes on `∂ω ∩ Ω`.
    pub fn interior_boundary_nodes(&self) -> &[usize] {
        &self.interior_boundary_nodes
    }

    /// Local fine nodes on `∂ω ∩ ∂Ω`.
    pub fn global_boundary_nodes(&self) -> &[usize] {
        &self.global_boundary_nodes
    }

    pub fn covers_domain(&self) -> bool {
        self.covers_domain
    }

    /// Whether the open supports of two patches intersect.
    pub fn overlaps(&self, other: &Patch) -> bool {
        ranges_overlap(self.coarse.dim(), (self.lo, self.hi), (other.lo, other.hi))
    }
}

pub(crate) fn ranges_overlap(dim: usize, a: (Multi, Multi), b: (Multi, Multi)) -> bool {
    (0..dim).all(|ax| a.0[ax] <= b.1[ax] && b.0[ax] <= a.1[ax])
}
