//! Super-localized basis construction.
//!
//! For every coarse element `T` the patch problem is solved once per coarse
//! element `K` of the patch with load `𝟏_K`. The weak normal derivatives of
//! these responses on the interior part of the patch boundary form a Gram
//! matrix; sources are drawn from its near-null eigenvectors and a
//! velocity-aware weighting picks one combination among them.

use serde::{Deserialize, Serialize};

use crate::dense::{gram_eigen, symmetric_eigen, DenseMatrix, SymmetricEigen};
use crate::error::{Error, Result};
use crate::fem::{assemble, indicator_load, AssembledProblem, AssemblyOptions};
use crate::linsolve::{LinearSolver, SolverKind, SolverOptions};
use crate::mesh::{BoxMesh, Multi, NestingMap, Patch, TensorGrid, MAX_DIM};
use crate::par::{self, Execution};
use crate::sparse::{dot, CsrMatrix, SymmetryHint};
use crate::velocity::{euclidean_norm, VelocityField};

/// How `L²(Γ)` inner products of boundary traces are realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMassKind {
    #[default]
    Consistent,
    Lumped,
}

/// Fine nodes on `Γ = ∂ω ∩ Ω` and the trace mass matrix over them.
#[derive(Clone, Debug)]
pub struct BoundaryTrace {
    measured: Vec<usize>,
    mass: CsrMatrix,
    trace_integrals: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(patch: &Patch, kind: BoundaryMassKind) -> Self {
        let mesh = patch.mesh();
        let dim = mesh.dim();
        let measured = patch.interior_boundary_nodes().to_vec();
        let mut position = vec![usize::MAX; mesh.node_count()];
        for (i, &n) in measured.iter().enumerate() {
            position[n] = i;
        }
        let h = mesh.mesh_size();
        let (lo, cells) = (mesh.lower_corner(), mesh.cells());
        let nf = mesh.parent_cells();
        let mut triplets = Vec::new();
        let mut integrals = vec![0.0; measured.len()];
        for axis in 0..dim {
            for side in [0, cells[axis]] {
                let g = lo[axis] + side;
                if g == 0 || g == nf {
                    continue;
                }
                let others: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
                let facets: usize = others.iter().map(|&a| cells[a]).product();
                for f in 0..facets {
                    let mut base: Multi = [0; MAX_DIM];
                    base[axis] = side;
                    let mut rest = f;
                    for &a in &others {
                        base[a] = rest % cells[a];
                        rest /= cells[a];
                    }
                    let corners = 1usize << others.len();
                    let node_of = |k: usize| {
                        let mut m = base;
                        for (bit, &a) in others.iter().enumerate() {
                            m[a] += k >> bit & 1;
                        }
                        mesh.node_id(&m)
                    };
                    for ki in 0..corners {
                        let i = position[node_of(ki)];
                        if i == usize::MAX {
                            continue;
                        }
                        for kj in 0..corners {
                            // tensor product of 1D masses (h/6)·[[2,1],[1,2]]
                            let mut v = 1.0;
                            for bit in 0..others.len() {
                                let same = (ki >> bit & 1) == (kj >> bit & 1);
                                v *= h / 6.0 * if same { 2.0 } else { 1.0 };
                            }
                            integrals[i] += v;
                            let j = position[node_of(kj)];
                            if j != usize::MAX {
                                triplets.push((i, j, v));
                            }
                        }
                    }
                }
            }
        }
        let n = measured.len();
        let mass = match kind {
            BoundaryMassKind::Consistent => CsrMatrix::from_triplets(n, n, triplets, SymmetryHint::Symmetric),
            BoundaryMassKind::Lumped => CsrMatrix::from_triplets(
                n,
                n,
                integrals.iter().enumerate().map(|(i, &v)| (i, i, v)).collect(),
                SymmetryHint::Symmetric,
            ),
        };
        BoundaryTrace {
            measured,
            mass,
            trace_integrals: integrals,
        }
    }

    /// Local patch node ids of the measured boundary.
    pub fn measured_nodes(&self) -> &[usize] {
        &self.measured
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// `∫_Γ` of each measured nodal trace function.
    pub fn trace_integrals(&self) -> &[f64] {
        &self.trace_integrals
    }

    /// `M_Γ⁻¹ r` for each residual.
    pub fn riesz(&self, residuals: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if self.measured.is_empty() {
            return Ok(residuals.iter().map(|_| Vec::new()).collect());
        }
        let options = SolverOptions {
            kind: SolverKind::Direct,
            tolerance: 1e-12,
            ..Default::default()
        };
        let solver = LinearSolver::new(&self.mass, options)
            .map_err(|e| Error::Factorization(format!("boundary mass: {e}")))?;
        solver.solve_many(&residuals.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    /// `‖r‖_{L²(Γ)}` of the Riesz representative of a residual functional.
    pub fn norm(&self, residual: &[f64]) -> Result<f64> {
        let z = self.riesz(&[residual])?;
        Ok(dot(residual, &z[0]).max(0.0).sqrt())
    }
}

/// `ε⁻¹(a_ω(ψ, v_i) − (g, v_i))` for the measured boundary nodes `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalDerivativeResidual {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

/// `psi` over the free patch nodes, `load` over all patch nodes.
pub fn boundary_residual(
    trace: &BoundaryTrace,
    problem: &AssembledProblem,
    psi: &[f64],
    load: &[f64],
) -> NormalDerivativeResidual {
    let mesh = problem.mesh();
    let eps = problem.epsilon();
    let values = trace
        .measured_nodes()
        .iter()
        .map(|&node| {
            let row = mesh.boundary_index(node).expect("measured nodes lie on the patch boundary");
            (problem.a_boundary.row_dot(row, psi) - load[node]) / eps
        })
        .collect();
    NormalDerivativeResidual { values, epsilon: eps }
}

/// `B[i][j] = ρ_iᵀ M_Γ⁻¹ ρ_j / (|T||K|)` with `|T| = |K| = cell_volume`.
pub fn normal_gram(trace: &BoundaryTrace, residuals: &[NormalDerivativeResidual], cell_volume: f64) -> Result<DenseMatrix> {
    let n = residuals.len();
    let rho: Vec<&[f64]> = residuals.iter().map(|r| r.values.as_slice()).collect();
    let z = trace.riesz(&rho)?;
    let scale = 1.0 / (cell_volume * cell_volume);
    let mut b = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (dot(rho[i], &z[j]) + dot(rho[j], &z[i])) * scale;
            b.set(i, j, v);
            b.set(j, i, v);
        }
    }
    Ok(b)
}

/// Eigenpairs of [`normal_gram`], computed from the residuals directly so
/// that near-zero eigenvalues keep their accuracy.
pub fn normal_spectrum(
    trace: &BoundaryTrace,
    residuals: &[NormalDerivativeResidual],
    cell_volume: f64,
) -> Result<SymmetricEigen> {
    let rho: Vec<&[f64]> = residuals.iter().map(|r| r.values.as_slice()).collect();
    let z = trace.riesz(&rho)?;
    let scaled = |v: &[f64]| v.iter().map(|x| x / cell_volume).collect::<Vec<f64>>();
    gram_eigen(
        rho.iter().map(|r| scaled(r)).collect(),
        z.iter().map(|r| scaled(r)).collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    /// Zero-based eigenvalue indices.
    pub indices: Vec<usize>,
    /// Set when the spectrum has no positive eigenvalue.
    pub degenerate: bool,
}

/// Indices `i` with `λ_i/λ_max ≤ max((λ₁/λ_max)^{1/p}, 1e-10)`; index 0 is
/// always included. `spectrum` must be ascending.
pub fn select_candidates(spectrum: &[f64], p: f64) -> Selection {
    let Some(&lmax) = spectrum.last() else {
        return Selection { indices: Vec::new(), degenerate: true };
    };
    if !(lmax > 0.0) {
        return Selection { indices: vec![0], degenerate: true };
    }
    let ratio = spectrum[0].max(0.0) / lmax;
    let threshold = ratio.powf(1.0 / p).max(1e-10);
    let mut indices = vec![0];
    indices.extend((1..spectrum.len()).filter(|&i| spectrum[i] / lmax <= threshold));
    Selection { indices, degenerate: false }
}

/// Per-element penalty for the patch elements (in [`Patch::elements`] order)
/// and whether the velocity vanished at the centre. Elements other than the
/// centre get at least `floor`.
pub fn element_weights(patch: &Patch, velocity: &VelocityField, p_w: f64, floor: f64) -> Result<(Vec<f64>, bool)> {
    let coarse = patch.coarse();
    let dim = coarse.dim();
    let center = patch.center();
    let b = velocity.eval_checked(&coarse.element_midpoint(center)?)?;
    let norm = euclidean_norm(&b);
    let zero_velocity = norm == 0.0;
    let c = coarse.element_multi(center);
    let weights = patch
        .elements()
        .iter()
        .map(|&k| {
            if k == center {
                return 0.0;
            }
            let m = coarse.element_multi(k);
            let dist = (0..dim)
                .map(|a| {
                    let offset = m[a] as f64 - c[a] as f64;
                    let shift = if zero_velocity { 0.0 } else { b[a] / norm };
                    (offset - shift).abs()
                })
                .fold(0.0_f64, f64::max);
            dist.powf(2.0 * p_w).max(floor)
        })
        .collect();
    Ok((weights, zero_velocity))
}

/// `W[i][j] = Σ_K w_K g_i(K) g_j(K) |K| / (‖g_i‖ ‖g_j‖)`.
pub fn weighted_gram(candidates: &[Vec<f64>], weights: &[f64], cell_volume: f64) -> Result<DenseMatrix> {
    let norms: Vec<f64> = candidates
        .iter()
        .map(|g| (cell_volume * dot(g, g)).sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::InvalidParameter(format!("candidate source {i} has zero norm")));
    }
    let n = candidates.len();
    let mut w = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = weights
                .iter()
                .zip(&candidates[i])
                .zip(&candidates[j])
                .map(|((wk, gi), gj)| wk * gi * gj)
                .sum();
            let v = s * cell_volume / (norms[i] * norms[j]);
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisParams {
    pub level: usize,
    /// Eigenvalue band exponent.
    pub p: f64,
    /// Weight exponent.
    pub p_w: f64,
    /// Smallest weight of a non-central element. With a velocity along a grid
    /// axis the downstream neighbour would otherwise weigh nothing, and the
    /// patch next to the outflow boundary would repeat its neighbour's source.
    #[serde(default = "default_weight_floor")]
    pub weight_floor: f64,
}

fn default_weight_floor() -> f64 {
    1e-2
}

impl Default for BasisParams {
    fn default() -> Self {
        BasisParams {
            level: 1,
            p: 1.5,
            p_w: 2.0,
            weight_floor: default_weight_floor(),
        }
    }
}

impl BasisParams {
    pub fn validate(&self) -> Result<()> {
        if self.level == 0 {
            return Err(Error::InvalidParameter("level must be >= 1".into()));
        }
        if !(self.p >= 1.0) {
            return Err(Error::InvalidParameter(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.p_w >= 1.0) {
            return Err(Error::InvalidParameter(format!("p_w must be >= 1, got {}", self.p_w)));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight floor must be finite and >= 0, got {}",
                self.weight_floor
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BasisOptions {
    pub boundary_mass: BoundaryMassKind,
    /// Build entries whose patch is the whole domain instead of failing.
    pub allow_full_patches: bool,
    pub solver: SolverOptions,
    pub execution: Execution,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            boundary_mass: BoundaryMassKind::Consistent,
            allow_full_patches: true,
            solver: SolverOptions {
                kind: SolverKind::Direct,
                ..Default::default()
            },
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFlags {
    /// The normal-derivative spectrum had no positive eigenvalue.
    pub degenerate_spectrum: bool,
    /// `b(m_T) = 0`; weights fell back to plain index distance.
    pub zero_velocity: bool,
    /// The patch is the whole domain.
    pub covers_domain: bool,
}

impl EntryFlags {
    pub fn any(&self) -> bool {
        self.degenerate_spectrum || self.zero_velocity || self.covers_domain
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlodBasisEntry {
    pub center: usize,
    pub level: usize,
    /// Inclusive coarse element range of the patch.
    pub coarse_range: (Multi, Multi),
    /// Coarse elements of the patch (lexicographic).
    pub elements: Vec<usize>,
    /// Source coefficients on `elements`, with `‖g‖_{L²} = 1`.
    pub source: Vec<f64>,
    /// Fine node range of the patch box: lower corner and cells per axis.
    pub fine_lo: Multi,
    pub fine_cells: Multi,
    /// Basis function on the free nodes of the patch box.
    pub phi: Vec<f64>,
    /// Ascending eigenvalues of the normal-derivative Gram matrix.
    pub spectrum: Vec<f64>,
    pub candidates: Vec<usize>,
    pub sigma: f64,
    pub flags: EntryFlags,
    pub measured_nodes: usize,
    /// Relative residual of the final patch solve.
    pub solve_residual: f64,
}

impl SlodBasisEntry {
    pub fn patch_mesh(&self, fine: &TensorGrid) -> BoxMesh {
        BoxMesh::new(fine.dim(), fine.cells_per_axis(), self.fine_lo, self.fine_cells)
    }

    /// Global fine node ids paired with the basis values.
    pub fn phi_nodes(&self, fine: &TensorGrid) -> Vec<usize> {
        let mesh = self.patch_mesh(fine);
        mesh.free_nodes()
            .iter()
            .map(|&n| fine.node_id(&mesh.parent_node_multi(n)))
            .collect()
    }

    /// The basis function over all fine nodes.
    pub fn phi_global(&self, fine: &TensorGrid) -> Vec<f64> {
        let mut out = vec![0.0; fine.node_count()];
        for (node, v) in self.phi_nodes(fine).into_iter().zip(&self.phi) {
            out[node] = *v;
        }
        out
    }

    /// Source coefficients over all coarse elements.
    pub fn source_global(&self, coarse_elements: usize) -> Vec<f64> {
        let mut g = vec![0.0; coarse_elements];
        for (&k, &v) in self.elements.iter().zip(&self.source) {
            g[k] = v;
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlodBasis {
    pub coarse: TensorGrid,
    pub fine: TensorGrid,
    pub epsilon: f64,
    pub velocity: String,
    pub params: BasisParams,
    pub boundary_mass: BoundaryMassKind,
    pub entries: Vec<SlodBasisEntry>,
}

impl SlodBasis {
    pub fn nesting(&self) -> Result<NestingMap> {
        NestingMap::new(self.coarse, self.fine)
    }

    pub fn sigma(&self) -> f64 {
        sigma(&self.entries)
    }

    /// Columns are the global source coefficients of the entries.
    pub fn source_matrix(&self) -> DenseMatrix {
        let n = self.coarse.element_count();
        let mut g = DenseMatrix::zeros(n, self.entries.len());
        for (col, e) in self.entries.iter().enumerate() {
            for (&k, &v) in e.elements.iter().zip(&e.source) {
                g.set(k, col, v);
            }
        }
        g
    }

    pub fn flagged(&self) -> Vec<(usize, EntryFlags)> {
        self.entries
            .iter()
            .filter(|e| e.flags.any())
            .map(|e| (e.center, e.flags))
            .collect()
    }
}

/// `max_T σ_T`; zero for an empty set.
pub fn sigma(entries: &[SlodBasisEntry]) -> f64 {
    entries.iter().map(|e| e.sigma).fold(0.0, f64::max)
}

fn patch_error(center: usize, source: Option<usize>, e: Error) -> Error {
    Error::Patch {
        center,
        source_element: source,
        inner: Box::new(e),
    }
}

/// Everything computed on one patch before the source is chosen.
pub struct PatchResponses {
    pub patch: Patch,
    pub problem: AssembledProblem,
    pub trace: BoundaryTrace,
    /// Indicator loads over all patch nodes, one per patch element.
    pub loads: Vec<Vec<f64>>,
    /// Responses over the free patch nodes.
    pub psi: Vec<Vec<f64>>,
    pub residuals: Vec<NormalDerivativeResidual>,
}

/// Solves the patch problem for every indicator load of the patch.
pub fn local_responses(
    nesting: &NestingMap,
    patch: Patch,
    epsilon: f64,
    velocity: &VelocityField,
    options: &BasisOptions,
) -> Result<PatchResponses> {
    with_local_responses(nesting, patch, epsilon, velocity, options, |r, _| Ok(r))
}

/// As [`local_responses`], handing the factorized patch operator to `finish`.
fn with_local_responses<R>(
    nesting: &NestingMap,
    patch: Patch,
    epsilon: f64,
    velocity: &VelocityField,
    options: &BasisOptions,
    finish: impl FnOnce(PatchResponses, &LinearSolver<'_>) -> Result<R>,
) -> Result<R> {
    let center = patch.center();
    let coarse = *nesting.coarse();
    let problem = assemble(patch.mesh(), epsilon, velocity, AssemblyOptions::default())
        .map_err(|e| patch_error(center, None, e))?;
    let matrix = problem.a.clone();
    let solver = LinearSolver::new(&matrix, options.solver).map_err(|e| patch_error(center, None, e))?;
    let trace = BoundaryTrace::new(&patch, options.boundary_mass);
    let mesh = patch.mesh();
    let mut loads = Vec::with_capacity(patch.elements().len());
    let mut psi = Vec::with_capacity(patch.elements().len());
    let mut residuals = Vec::with_capacity(patch.elements().len());
    for &k in patch.elements() {
        let load = indicator_load(mesh, coarse.cells_per_axis(), &coarse.element_multi(k))
            .map_err(|e| patch_error(center, Some(k), e))?;
        let x = solver
            .solve(&mesh.restrict_free(&load))
            .map_err(|e| patch_error(center, Some(k), e))?;
        residuals.push(boundary_residual(&trace, &problem, &x, &load));
        loads.push(load);
        psi.push(x);
    }
    finish(
        PatchResponses {
            patch,
            problem,
            trace,
            loads,
            psi,
            residuals,
        },
        &solver,
    )
}

fn sign_normalize(c: &mut [f64]) {
    let mut pivot = 0;
    for i in 0..c.len() {
        if c[i].abs() > c[pivot].abs() {
            pivot = i;
        }
    }
    if c.get(pivot).is_some_and(|&v| v < 0.0) {
        c.iter_mut().for_each(|v| *v = -*v);
    }
}

/// One basis function for the coarse element `center`.
pub fn build_entry(
    nesting: &NestingMap,
    center: usize,
    epsilon: f64,
    velocity: &VelocityField,
    params: &BasisParams,
    options: &BasisOptions,
) -> Result<SlodBasisEntry> {
    params.validate()?;
    let patch = if options.allow_full_patches {
        Patch::new_allowing_full(nesting, center, params.level)?
    } else {
        Patch::new(nesting, center, params.level)?
    };
    let coarse = *nesting.coarse();
    let cell_volume = coarse.element_volume();
    let covers_domain = patch.covers_domain();
    with_local_responses(nesting, patch, epsilon, velocity, options, |r, solver| {
        finish_entry(r, solver, velocity, center, covers_domain, cell_volume, params)
    })
}

fn finish_entry(
    r: PatchResponses,
    solver: &LinearSolver<'_>,
    velocity: &VelocityField,
    center: usize,
    covers_domain: bool,
    cell_volume: f64,
    params: &BasisParams,
) -> Result<SlodBasisEntry> {
    let wrap = |e: Error| patch_error(center, None, e);

    let eigen = normal_spectrum(&r.trace, &r.residuals, cell_volume).map_err(wrap)?;
    let selection = select_candidates(&eigen.values, params.p);
    let (weights, zero_velocity) = element_weights(&r.patch, velocity, params.p_w, params.weight_floor).map_err(wrap)?;
    // Without any measured boundary every source is admissible; the weights
    // then single out the central element.
    let indices: Vec<usize> = if selection.degenerate {
        (0..eigen.values.len()).collect()
    } else {
        selection.indices.clone()
    };
    let candidates: Vec<Vec<f64>> = indices.iter().map(|&i| eigen.vector(i)).collect();
    let w = weighted_gram(&candidates, &weights, cell_volume).map_err(wrap)?;
    let tie = symmetric_eigen(&w).map_err(wrap)?;
    let eta = tie.vector(0);

    let nk = r.patch.elements().len();
    let mut source = vec![0.0; nk];
    for (e, g) in eta.iter().zip(&candidates) {
        let norm = (cell_volume * dot(g, g)).sqrt();
        for (s, v) in source.iter_mut().zip(g) {
            *s += e * v / norm;
        }
    }
    let scale = (cell_volume * dot(&source, &source)).sqrt();
    source.iter_mut().for_each(|v| *v /= scale);
    sign_normalize(&mut source);

    let mesh = r.patch.mesh();
    let mut load = vec![0.0; mesh.node_count()];
    for (c, l) in source.iter().zip(&r.loads) {
        for (a, b) in load.iter_mut().zip(l) {
            *a += c * b;
        }
    }
    let rhs = mesh.restrict_free(&load);
    let phi = solver.solve(&rhs).map_err(wrap)?;
    let solve_residual = crate::linsolve::relative_residual(&r.problem.a, &phi, &rhs);
    let residual = boundary_residual(&r.trace, &r.problem, &phi, &load);
    let sigma = r.trace.norm(&residual.values).map_err(wrap)?;

    let entry = SlodBasisEntry {
        center,
        level: params.level,
        coarse_range: r.patch.coarse_range(),
        elements: r.patch.elements().to_vec(),
        source,
        fine_lo: mesh.lower_corner(),
        fine_cells: mesh.cells(),
        phi,
        spectrum: eigen.values,
        candidates: selection.indices,
        sigma,
        flags: EntryFlags {
            degenerate_spectrum: selection.degenerate,
            zero_velocity,
            covers_domain,
        },
        measured_nodes: r.trace.measured_nodes().len(),
        solve_residual,
    };
    let finite = entry.source.iter().chain(&entry.phi).chain(&entry.spectrum).all(|v| v.is_finite())
        && entry.sigma.is_finite();
    if !finite {
        return Err(wrap(Error::InvalidParameter("non-finite value in basis entry".into())));
    }
    Ok(entry)
}

/// Builds every entry independently; failures are collected per element.
pub fn build_basis(
    nesting: &NestingMap,
    epsilon: f64,
    velocity: &VelocityField,
    params: &BasisParams,
    options: &BasisOptions,
) -> Result<SlodBasis> {
    params.validate()?;
    velocity.check_dim(nesting.coarse().dim())?;
    let ids: Vec<usize> = (0..nesting.coarse().element_count()).collect();
    let results = par::map(options.execution, &ids, |&t| {
        build_entry(nesting, t, epsilon, velocity, params, options)
    });
    let mut entries = Vec::with_capacity(ids.len());
    let mut failures = Vec::new();
    for (t, r) in ids.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => failures.push((*t, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Basis(failures));
    }
    let flagged = entries.iter().filter(|e| e.flags.any()).count();
    if flagged > 0 {
        log::info!("{flagged} basis entries carry flags");
    }
    Ok(SlodBasis {
        coarse: *nesting.coarse(),
        fine: *nesting.fine(),
        epsilon,
        velocity: velocity.descriptor(),
        params: *params,
        boundary_mass: options.boundary_mass,
        entries,
    })
}
