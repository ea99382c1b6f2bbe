//! Q1 assembly of `ε(∇u,∇v) + (b·∇u, v)` on box meshes with homogeneous
//! Dirichlet conditions on the box boundary.
//!
//! Integrals use the tensor Gauss rule with two points per axis, which is exact
//! for the stiffness and mass matrices and for the convection matrix of any
//! affine velocity.

use crate::error::{Error, Result};
use crate::linsolve::{LinearSolver, SolverOptions};
use crate::mesh::{BoxMesh, Multi, Point, MAX_DIM};
use crate::source::Source;
use crate::sparse::{CsrMatrix, SymmetryHint};
use crate::velocity::VelocityField;

const MAX_NODES: usize = 1 << MAX_DIM;
type ElementMatrix = [[f64; MAX_NODES]; MAX_NODES];

/// Shape functions and reference gradients of the unit Q1 cell at the Gauss
/// points. Corner `k` and quadrature point `q` both use bit `a` for the upper
/// side along axis `a`.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    dim: usize,
    points: Vec<Point>,
    weight: f64,
    shape: Vec<[f64; MAX_NODES]>,
    grad: Vec<[[f64; MAX_DIM]; MAX_NODES]>,
}

impl ReferenceElement {
    pub fn new(dim: usize) -> Self {
        let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let nodes = 1 << dim;
        let mut points = Vec::with_capacity(nodes);
        let mut shape = Vec::with_capacity(nodes);
        let mut grad = Vec::with_capacity(nodes);
        for q in 0..nodes {
            let mut xi = [0.0; MAX_DIM];
            for a in 0..dim {
                xi[a] = g[q >> a & 1];
            }
            let mut n = [0.0; MAX_NODES];
            let mut dn = [[0.0; MAX_DIM]; MAX_NODES];
            for k in 0..nodes {
                let factor = |a: usize| if k >> a & 1 == 1 { xi[a] } else { 1.0 - xi[a] };
                n[k] = (0..dim).map(factor).product();
                for a in 0..dim {
                    let sign = if k >> a & 1 == 1 { 1.0 } else { -1.0 };
                    dn[k][a] = sign * (0..dim).filter(|&b| b != a).map(factor).product::<f64>();
                }
            }
            points.push(xi);
            shape.push(n);
            grad.push(dn);
        }
        ReferenceElement {
            dim,
            points,
            weight: 0.5f64.powi(dim as i32),
            shape,
            grad,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        1 << self.dim
    }

    /// Physical quadrature points of a cell with lower corner `origin`.
    pub fn physical_points(&self, origin: &Point, h: f64) -> Vec<Point> {
        self.points
            .iter()
            .map(|xi| {
                let mut x = [0.0; MAX_DIM];
                for a in 0..self.dim {
                    x[a] = origin[a] + h * xi[a];
                }
                x
            })
            .collect()
    }

    pub fn stiffness(&self, h: f64) -> ElementMatrix {
        let scale = h.powi(self.dim as i32 - 2) * self.weight;
        self.integrate(|q, i, j| scale * dot(&self.grad[q][i], &self.grad[q][j], self.dim))
    }

    pub fn mass(&self, h: f64) -> ElementMatrix {
        let scale = h.powi(self.dim as i32) * self.weight;
        self.integrate(|q, i, j| scale * self.shape[q][i] * self.shape[q][j])
    }

    /// Row = test function, column = trial function.
    pub fn convection(&self, h: f64, b: &[[f64; MAX_DIM]]) -> ElementMatrix {
        let scale = h.powi(self.dim as i32 - 1) * self.weight;
        self.integrate(|q, i, j| scale * dot(&b[q], &self.grad[q][j], self.dim) * self.shape[q][i])
    }

    /// `(b·∇u, b·∇v)` on the cell.
    pub fn streamline(&self, h: f64, b: &[[f64; MAX_DIM]]) -> ElementMatrix {
        let scale = h.powi(self.dim as i32 - 2) * self.weight;
        self.integrate(|q, i, j| {
            scale * dot(&b[q], &self.grad[q][i], self.dim) * dot(&b[q], &self.grad[q][j], self.dim)
        })
    }

    fn integrate(&self, f: impl Fn(usize, usize, usize) -> f64) -> ElementMatrix {
        let n = self.node_count();
        let mut m = [[0.0; MAX_NODES]; MAX_NODES];
        for q in 0..n {
            for (i, row) in m.iter_mut().enumerate().take(n) {
                for (j, v) in row.iter_mut().enumerate().take(n) {
                    *v += f(q, i, j);
                }
            }
        }
        m
    }
}

fn dot(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM], dim: usize) -> f64 {
    (0..dim).map(|k| a[k] * b[k]).sum()
}

/// Sorted neighbour pattern (all nodes within one index step per axis) of a
/// set of rows, restricted to free columns.
struct Pattern {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Pattern {
    fn new(mesh: &BoxMesh, rows: &[usize]) -> Self {
        let dim = mesh.dim();
        let cells = mesh.cells();
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(rows.len() * 3usize.pow(dim as u32));
        for &node in rows {
            let m = mesh.node_multi(node);
            for k in 0..3usize.pow(dim as u32) {
                let mut rest = k;
                let mut nb: Multi = [0; MAX_DIM];
                let mut valid = true;
                for a in 0..dim {
                    let off = rest % 3;
                    rest /= 3;
                    let j = m[a] as isize + off as isize - 1;
                    if j < 0 || j > cells[a] as isize {
                        valid = false;
                        break;
                    }
                    nb[a] = j as usize;
                }
                if valid {
                    if let Some(col) = mesh.free_index(mesh.node_id(&nb)) {
                        indices.push(col);
                    }
                }
            }
            indptr.push(indices.len());
        }
        Pattern { indptr, indices }
    }

    fn position(&self, row: usize, col: usize) -> usize {
        let range = self.indptr[row]..self.indptr[row + 1];
        let k = self.indices[range.clone()]
            .binary_search(&col)
            .expect("column inside the element stencil");
        range.start + k
    }
}

/// Operators of a Dirichlet problem on a box mesh.
#[derive(Clone, Debug)]
pub struct AssembledProblem {
    mesh: BoxMesh,
    epsilon: f64,
    supg_delta: Option<f64>,
    /// Laplacian part over free nodes.
    pub k: CsrMatrix,
    /// Convection part over free nodes.
    pub c: CsrMatrix,
    pub m: CsrMatrix,
    /// System matrix `εK + C` (plus the streamline term when stabilized).
    pub a: CsrMatrix,
    /// Rows of the unconstrained system matrix belonging to boundary nodes,
    /// restricted to free columns; numbered by `BoxMesh::boundary_index`.
    pub a_boundary: CsrMatrix,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AssemblyOptions {
    /// Streamline diffusion parameter; `None` assembles plain Galerkin.
    pub supg_delta: Option<f64>,
}

pub fn assemble(mesh: &BoxMesh, epsilon: f64, velocity: &VelocityField, options: AssemblyOptions) -> Result<AssembledProblem> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if let Some(delta) = options.supg_delta {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("SUPG delta must be >= 0, got {delta}")));
        }
    }
    velocity.check_dim(mesh.dim())?;
    let dim = mesh.dim();
    let h = mesh.mesh_size();
    let re = ReferenceElement::new(dim);
    let nodes = re.node_count();

    let free = Pattern::new(mesh, mesh.free_nodes());
    let bdry = Pattern::new(mesh, mesh.boundary_nodes());
    let nnz = free.indices.len();
    let (mut kv, mut cv, mut mv, mut sv) = (vec![0.0; nnz], vec![0.0; nnz], vec![0.0; nnz], vec![0.0; nnz]);
    let mut av_bdry = vec![0.0; bdry.indices.len()];

    let ke = re.stiffness(h);
    let me = re.mass(h);
    let constant_b = velocity.is_constant().then(|| vec![velocity.eval(&[0.0; MAX_DIM]); nodes]);
    let constant_ce = constant_b.as_ref().map(|b| re.convection(h, b));
    let constant_se = constant_b.as_ref().map(|b| re.streamline(h, b));
    let delta = options.supg_delta.unwrap_or(0.0);

    let mut corner = [0usize; MAX_NODES];
    let mut b_q = vec![[0.0; MAX_DIM]; nodes];
    for e in 0..mesh.element_count() {
        mesh.element_nodes(e, &mut corner);
        let (ce, se) = match (&constant_ce, &constant_se) {
            (Some(ce), Some(se)) => (*ce, *se),
            _ => {
                let origin = mesh.element_origin(e);
                for (slot, x) in b_q.iter_mut().zip(re.physical_points(&origin, h)) {
                    *slot = velocity.eval_checked(&x)?;
                }
                (re.convection(h, &b_q), re.streamline(h, &b_q))
            }
        };
        for i in 0..nodes {
            let row_free = mesh.free_index(corner[i]);
            let row_bdry = mesh.boundary_index(corner[i]);
            for j in 0..nodes {
                let Some(col) = mesh.free_index(corner[j]) else { continue };
                if let Some(r) = row_free {
                    let p = free.position(r, col);
                    kv[p] += ke[i][j];
                    cv[p] += ce[i][j];
                    mv[p] += me[i][j];
                    sv[p] += se[i][j];
                } else if let Some(r) = row_bdry {
                    let p = bdry.position(r, col);
                    av_bdry[p] += epsilon * ke[i][j] + ce[i][j] + delta * se[i][j];
                }
            }
        }
    }

    let nf = mesh.free_count();
    let av: Vec<f64> = (0..nnz).map(|p| epsilon * kv[p] + cv[p] + delta * sv[p]).collect();
    let convection_hint = if velocity.is_constant() {
        SymmetryHint::SkewPartKnown
    } else {
        SymmetryHint::General
    };
    Ok(AssembledProblem {
        mesh: mesh.clone(),
        epsilon,
        supg_delta: options.supg_delta,
        k: CsrMatrix::from_pattern(nf, &free.indptr, &free.indices, &kv, SymmetryHint::Symmetric),
        c: CsrMatrix::from_pattern(nf, &free.indptr, &free.indices, &cv, convection_hint),
        m: CsrMatrix::from_pattern(nf, &free.indptr, &free.indices, &mv, SymmetryHint::Symmetric),
        a: CsrMatrix::from_pattern(nf, &free.indptr, &free.indices, &av, SymmetryHint::General),
        a_boundary: CsrMatrix::from_pattern(nf, &bdry.indptr, &bdry.indices, &av_bdry, SymmetryHint::General),
    })
}

impl AssembledProblem {
    pub fn mesh(&self) -> &BoxMesh {
        &self.mesh
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn supg_delta(&self) -> Option<f64> {
        self.supg_delta
    }

    pub fn free_count(&self) -> usize {
        self.mesh.free_count()
    }

    pub fn solver(&self, options: SolverOptions) -> Result<LinearSolver<'_>> {
        LinearSolver::new(&self.a, options)
    }

    /// Solves with a right-hand side over free nodes.
    pub fn solve(&self, rhs: &[f64], options: SolverOptions) -> Result<Vec<f64>> {
        if rhs.len() != self.free_count() {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has length {}, problem has {} free nodes",
                rhs.len(),
                self.free_count()
            )));
        }
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; rhs.len()]);
        }
        self.solver(options)?.solve(rhs)
    }
}

/// `(𝟏_K, φ_i)` over all box nodes, where the coarse cell `K` is given by its
/// element multi-index on a grid with `coarse_cells` cells per axis.
pub fn indicator_load(mesh: &BoxMesh, coarse_cells: usize, coarse_element: &Multi) -> Result<Vec<f64>> {
    let dim = mesh.dim();
    if !mesh.parent_cells().is_multiple_of(coarse_cells) {
        return Err(Error::NonNested {
            coarse: coarse_cells,
            fine: mesh.parent_cells(),
        });
    }
    let r = mesh.parent_cells() / coarse_cells;
    let lo = mesh.lower_corner();
    let cells = mesh.cells();
    // local element range covered by K
    let mut start = [0; MAX_DIM];
    let mut extent = [1; MAX_DIM];
    for a in 0..dim {
        let k0 = coarse_element[a] * r;
        if k0 < lo[a] || k0 + r > lo[a] + cells[a] {
            return Err(Error::InvalidParameter(format!(
                "coarse element {:?} lies outside the assembly domain",
                &coarse_element[..dim]
            )));
        }
        start[a] = k0 - lo[a];
        extent[a] = r;
    }
    let mut load = vec![0.0; mesh.node_count()];
    let share = mesh.mesh_size().powi(dim as i32) / (1 << dim) as f64;
    let mut corner = [0usize; MAX_NODES];
    for k in 0..r.pow(dim as u32) {
        let mut rest = k;
        let mut m = [0; MAX_DIM];
        for a in 0..dim {
            m[a] = start[a] + rest % extent[a];
            rest /= extent[a];
        }
        let e = element_id(mesh, &m);
        mesh.element_nodes(e, &mut corner);
        for &node in &corner[..1 << dim] {
            load[node] += share;
        }
    }
    Ok(load)
}

fn element_id(mesh: &BoxMesh, m: &Multi) -> usize {
    let cells = mesh.cells();
    let mut id = 0;
    for a in (0..mesh.dim()).rev() {
        id = id * cells[a] + m[a];
    }
    id
}

/// `(f, φ_i)` over all box nodes by the assembly quadrature.
pub fn general_load(mesh: &BoxMesh, f: &Source) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.node_count()];
    if f.is_zero() {
        return Ok(load);
    }
    let dim = mesh.dim();
    let h = mesh.mesh_size();
    let re = ReferenceElement::new(dim);
    let scale = h.powi(dim as i32) * re.weight;
    let mut corner = [0usize; MAX_NODES];
    for e in 0..mesh.element_count() {
        mesh.element_nodes(e, &mut corner);
        let origin = mesh.element_origin(e);
        for (q, x) in re.physical_points(&origin, h).iter().enumerate() {
            let fx = f.eval_checked(x)?;
            for k in 0..re.node_count() {
                load[corner[k]] += scale * fx * re.shape[q][k];
            }
        }
    }
    Ok(load)
}

/// `Σ_T (f, b·∇φ_i)_T` over all box nodes; the streamline part of the
/// stabilized right-hand side.
pub fn streamline_load(mesh: &BoxMesh, f: &Source, velocity: &VelocityField) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.node_count()];
    if f.is_zero() {
        return Ok(load);
    }
    let dim = mesh.dim();
    let h = mesh.mesh_size();
    let re = ReferenceElement::new(dim);
    let scale = h.powi(dim as i32 - 1) * re.weight;
    let mut corner = [0usize; MAX_NODES];
    for e in 0..mesh.element_count() {
        mesh.element_nodes(e, &mut corner);
        let origin = mesh.element_origin(e);
        for (q, x) in re.physical_points(&origin, h).iter().enumerate() {
            let fx = f.eval_checked(x)?;
            let b = velocity.eval_checked(x)?;
            for k in 0..re.node_count() {
                load[corner[k]] += scale * fx * dot(&b, &re.grad[q][k], dim);
            }
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TensorGrid;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn one_dimensional_element_matrices() {
        let re = ReferenceElement::new(1);
        let h = 0.125;
        let k = re.stiffness(h);
        let m = re.mass(h);
        let c = re.convection(h, &[[0.7, 0.0, 0.0]; 2]);
        for (i, j, kij, mij, cij) in [
            (0, 0, 1.0, 2.0, -1.0),
            (0, 1, -1.0, 1.0, 1.0),
            (1, 0, -1.0, 1.0, -1.0),
            (1, 1, 1.0, 2.0, 1.0),
        ] {
            assert!(close(k[i][j], kij / h, 1e-12));
            assert!(close(m[i][j], mij * h / 6.0, 1e-15));
            assert!(close(c[i][j], cij * 0.7 / 2.0, 1e-15));
        }
    }

    #[test]
    fn single_free_node_solve() {
        let grid = TensorGrid::new(1, 2).unwrap();
        let mesh = grid.as_box();
        let p = assemble(&mesh, 1.0, &VelocityField::constant(&[0.0]), AssemblyOptions::default()).unwrap();
        let rhs = mesh.restrict_free(&general_load(&mesh, &Source::One).unwrap());
        let x = p.solve(&rhs, SolverOptions::default()).unwrap();
        assert_eq!(x.len(), 1);
        assert!(close(x[0], 0.125, 1e-15));
    }

    #[test]
    fn indicator_load_values() {
        let mesh = TensorGrid::new(1, 8).unwrap().as_box();
        let load = indicator_load(&mesh, 4, &[1, 0, 0]).unwrap();
        assert_eq!(load[3], 0.125);
        assert_eq!(load[2], 0.0625);
        assert_eq!(load[4], 0.0625);
        assert_eq!(load.iter().sum::<f64>(), 0.25);

        let mesh2 = TensorGrid::new(2, 4).unwrap().as_box();
        let l2 = indicator_load(&mesh2, 4, &[1, 2, 0]).unwrap();
        let nz: Vec<f64> = l2.iter().copied().filter(|&v| v != 0.0).collect();
        assert_eq!(nz, vec![1.0 / 64.0; 4]);
        assert!(indicator_load(&mesh2, 3, &[0, 0, 0]).is_err());
    }

    #[test]
    fn loads_of_simple_sources() {
        let mesh = TensorGrid::new(2, 6).unwrap().as_box();
        let ones = general_load(&mesh, &Source::One).unwrap();
        let interior = mesh.node_id(&[2, 3, 0]);
        assert!(close(ones[interior], 1.0 / 36.0, 1e-15));
        assert!(close(ones.iter().sum::<f64>(), 1.0, 1e-13));
        assert!(general_load(&mesh, &Source::Zero).unwrap().iter().all(|&v| v == 0.0));

        let line = TensorGrid::new(1, 10).unwrap().as_box();
        let f = Source::function("x1", |x| x[0]);
        let load = general_load(&line, &f).unwrap();
        for i in 1..10 {
            assert!(close(load[i], 0.1 * (i as f64 * 0.1), 1e-15), "node {i}");
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero_inside() {
        let mesh = TensorGrid::new(3, 5).unwrap().as_box();
        let p = assemble(&mesh, 1.0, &VelocityField::constant(&[1.0, 0.0, 0.0]), AssemblyOptions::default()).unwrap();
        let center = mesh.free_index(mesh.node_id(&[2, 2, 2])).unwrap();
        let (cols, vals) = p.k.row(center);
        assert_eq!(cols.len(), 27);
        assert!(vals.iter().sum::<f64>().abs() < 1e-13);
        let (_, cvals) = p.c.row(center);
        assert!(cvals.iter().sum::<f64>().abs() < 1e-14);
        let m_sum: f64 = p.m.row(center).1.iter().sum();
        assert!(close(m_sum, 1.0 / 125.0, 1e-15));
    }

    #[test]
    fn supg_with_zero_delta_is_galerkin() {
        let mesh = TensorGrid::new(2, 8).unwrap().as_box();
        let b = VelocityField::Rotational;
        let plain = assemble(&mesh, 0.01, &b, AssemblyOptions::default()).unwrap();
        let zero = assemble(&mesh, 0.01, &b, AssemblyOptions { supg_delta: Some(0.0) }).unwrap();
        assert_eq!(plain.a.to_dense(), zero.a.to_dense());
        let stab = assemble(&mesh, 0.01, &b, AssemblyOptions { supg_delta: Some(0.1) }).unwrap();
        assert!(stab.a.nnz() >= plain.a.nnz());
    }

    #[test]
    fn rejects_bad_parameters() {
        let mesh = TensorGrid::new(2, 4).unwrap().as_box();
        let b = VelocityField::constant(&[1.0, 0.0]);
        assert!(assemble(&mesh, 0.0, &b, AssemblyOptions::default()).is_err());
        assert!(assemble(&mesh, 1.0, &VelocityField::Rotational, AssemblyOptions::default()).is_ok());
        let line = TensorGrid::new(1, 4).unwrap().as_box();
        assert!(assemble(&line, 1.0, &VelocityField::Rotational, AssemblyOptions::default()).is_err());
        let bad = VelocityField::tabulated("nan", |_| [f64::NAN; 3]);
        assert!(assemble(&mesh, 1.0, &bad, AssemblyOptions::default()).is_err());
    }

    fn skew_defect(c: &CsrMatrix) -> f64 {
        let t = c.transpose();
        CsrMatrix::linear_combination(1.0, c, 1.0, &t).max_abs()
    }

    #[test]
    fn affine_convection_is_skew() {
        let mut m = [[0.0; 3]; 3];
        m[0][1] = 0.8;
        m[1][0] = -0.3;
        m[0][0] = 0.5;
        m[1][1] = -0.5;
        let b = VelocityField::affine(m, [0.2, -0.1, 0.0]).unwrap();
        let mesh = TensorGrid::new(2, 7).unwrap().as_box();
        let p = assemble(&mesh, 0.1, &b, AssemblyOptions::default()).unwrap();
        assert!(skew_defect(&p.c) <= 1e-12 * p.c.max_abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn constant_convection_is_skew_and_coercive(
            dim in 1usize..=3,
            n in 2usize..=6,
            angle in 0.0f64..std::f64::consts::TAU,
            tilt in -1.0f64..1.0,
            eps in 1e-4f64..1.0,
            seed in proptest::collection::vec(-1.0f64..1.0, 216),
        ) {
            let b = [angle.cos() * tilt.cos(), angle.sin() * tilt.cos(), tilt.sin()];
            let field = VelocityField::constant(&b[..dim]);
            let mesh = TensorGrid::new(dim, n).unwrap().as_box();
            let p = assemble(&mesh, eps, &field, AssemblyOptions::default()).unwrap();
            let scale = mesh.mesh_size().powi(dim as i32 - 1);
            prop_assert!(skew_defect(&p.c) <= 1e-12 * scale);
            let v: Vec<f64> = seed.iter().cycle().take(p.free_count()).copied().collect();
            let energy = p.a.quad_form(&v);
            let lap = eps * p.k.quad_form(&v);
            prop_assert!((energy - lap).abs() <= 1e-12 * lap);
        }
    }
}
