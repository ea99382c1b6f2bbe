//! Coarse solution methods and the fine reference.
//!
//! Every method returns its result on the free nodes of the global fine grid
//! so that errors are always measured there.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::SlodBasis;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fem::{assemble, general_load, streamline_load, AssembledProblem, AssemblyOptions};
use crate::linsolve::SolverOptions;
use crate::mesh::{BoxMesh, NestingMap, TensorGrid};
use crate::par::{self, Execution};
use crate::projection::{ideal_solve, project_p0};
use crate::source::Source;
use crate::sparse::{dot, norm2};
use crate::velocity::{euclidean_norm, VelocityField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Slod,
    SlodGalerkin,
    Collocation,
    Fem,
    Supg,
    Ideal,
    Reference,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Slod,
        Method::SlodGalerkin,
        Method::Collocation,
        Method::Fem,
        Method::Supg,
        Method::Ideal,
        Method::Reference,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Slod => "slod",
            Method::SlodGalerkin => "slod_galerkin",
            Method::Collocation => "collocation",
            Method::Fem => "fem",
            Method::Supg => "supg",
            Method::Ideal => "ideal",
            Method::Reference => "reference",
        }
    }

    /// Whether the method needs a localized basis.
    pub fn uses_basis(self) -> bool {
        matches!(self, Method::Slod | Method::SlodGalerkin | Method::Collocation)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::config("methods", format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// 2-norm condition number of the coarse matrix, when computed.
    pub condition: Option<f64>,
    /// Relative residual of the coarse solve.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseSolution {
    pub method: Method,
    /// Per basis function or per free coarse node.
    pub coefficients: Vec<f64>,
    /// Values on the free nodes of the global fine grid.
    pub fine: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub solver: SolverOptions,
    /// Gauss panels per coarse cell and axis for `Π_H f`.
    pub panels: usize,
    /// Largest coarse system for which singular values are computed.
    pub condition_limit: usize,
    pub execution: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            solver: SolverOptions::default(),
            panels: 4,
            condition_limit: 1024,
            execution: Execution::Parallel,
        }
    }
}

/// The globally assembled fine problem.
#[derive(Clone, Debug)]
pub struct FineSystem {
    grid: TensorGrid,
    velocity: VelocityField,
    problem: AssembledProblem,
}

impl FineSystem {
    pub fn new(grid: TensorGrid, epsilon: f64, velocity: &VelocityField) -> Result<Self> {
        let problem = assemble(&grid.as_box(), epsilon, velocity, AssemblyOptions::default())?;
        Ok(FineSystem {
            grid,
            velocity: velocity.clone(),
            problem,
        })
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn mesh(&self) -> &BoxMesh {
        self.problem.mesh()
    }

    pub fn problem(&self) -> &AssembledProblem {
        &self.problem
    }

    pub fn epsilon(&self) -> f64 {
        self.problem.epsilon()
    }

    pub fn velocity(&self) -> &VelocityField {
        &self.velocity
    }

    /// Load of `f` restricted to the free nodes.
    pub fn load(&self, f: &Source) -> Result<Vec<f64>> {
        Ok(self.mesh().restrict_free(&general_load(self.mesh(), f)?))
    }

    /// Extends a free-node vector to all fine nodes.
    pub fn to_full(&self, free: &[f64]) -> Vec<f64> {
        self.mesh().extend_free(free)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhsMode {
    /// `(Π_H f, φ_i)`.
    Projected,
    /// `(f, φ_i)`.
    Unprojected,
}

fn check_compatible(basis: &SlodBasis, fine: &FineSystem) -> Result<()> {
    if basis.fine != *fine.grid() {
        return Err(Error::DimensionMismatch(format!(
            "basis was built on a {}-cell fine grid, system has {}",
            basis.fine.cells_per_axis(),
            fine.grid().cells_per_axis()
        )));
    }
    if basis.epsilon != fine.epsilon() {
        return Err(Error::InvalidParameter(format!(
            "basis epsilon {} differs from system epsilon {}",
            basis.epsilon,
            fine.epsilon()
        )));
    }
    Ok(())
}

/// Global free indices of an entry's basis values and of every globally free
/// node of its closed patch box.
fn entry_indices(basis: &SlodBasis, fine_mesh: &BoxMesh, entry: usize) -> (Vec<usize>, Vec<usize>) {
    let e = &basis.entries[entry];
    let patch = e.patch_mesh(&basis.fine);
    let global = |local: usize| {
        let m = patch.parent_node_multi(local);
        fine_mesh.free_index(fine_mesh.node_id(&m))
    };
    let phi = patch
        .free_nodes()
        .iter()
        .map(|&n| global(n).expect("interior patch nodes are free"))
        .collect();
    let rows = (0..patch.node_count()).filter_map(global).collect();
    (phi, rows)
}

/// Assembles `S[i][j] = a(φ_j, φ_i)` with the fine operator. Column `j` is
/// computed by one sparse product and dotted with every basis function whose
/// patch shares a coarse element with patch `j`.
pub fn coarse_matrix(basis: &SlodBasis, fine: &FineSystem, execution: Execution) -> Result<DenseMatrix> {
    check_compatible(basis, fine)?;
    let a = &fine.problem().a;
    let dim = basis.coarse.dim();
    let indices: Vec<(Vec<usize>, Vec<usize>)> = (0..basis.entries.len())
        .map(|i| entry_indices(basis, fine.mesh(), i))
        .collect();
    let n = basis.entries.len();
    let nfree = fine.mesh().free_count();
    let columns = par::map_range_with(
        execution,
        n,
        || (vec![0.0; nfree], vec![0.0; nfree]),
        |(x, y), j| {
            let (phi_idx, rows) = &indices[j];
            for (&k, &v) in phi_idx.iter().zip(&basis.entries[j].phi) {
                x[k] = v;
            }
            for &r in rows {
                y[r] = a.row_dot(r, x);
            }
            let range_j = basis.entries[j].coarse_range;
            let col: Vec<(usize, f64)> = (0..n)
                .filter(|&i| crate::mesh::ranges_overlap(dim, basis.entries[i].coarse_range, range_j))
                .map(|i| {
                    let s = indices[i]
                        .0
                        .iter()
                        .zip(&basis.entries[i].phi)
                        .map(|(&k, &v)| v * y[k])
                        .sum::<f64>();
                    (i, s)
                })
                .collect();
            for &k in phi_idx {
                x[k] = 0.0;
            }
            for &r in rows {
                y[r] = 0.0;
            }
            col
        },
    );
    let mut s = DenseMatrix::zeros(n, n);
    for (j, col) in columns.into_iter().enumerate() {
        for (i, v) in col {
            s.set(i, j, v);
        }
    }
    Ok(s)
}

fn condition_of(m: &DenseMatrix, limit: usize) -> Result<Option<f64>> {
    if m.rows() > limit {
        return Ok(None);
    }
    let s = m.singular_values()?;
    let (max, min) = (s.first().copied().unwrap_or(0.0), s.last().copied().unwrap_or(0.0));
    Ok(Some(if min > 0.0 { max / min } else { f64::INFINITY }))
}

fn dense_solve_checked(m: &DenseMatrix, rhs: &[f64], options: &SolveOptions) -> Result<(Vec<f64>, Diagnostics)> {
    let condition = condition_of(m, options.condition_limit)?;
    if norm2(rhs) == 0.0 {
        return Ok((
            vec![0.0; rhs.len()],
            Diagnostics {
                condition,
                residual: Some(0.0),
            },
        ));
    }
    let singular = || Error::SingularCoarse {
        condition: condition.unwrap_or(f64::INFINITY),
    };
    if condition.is_some_and(|c| !(c < 1e14)) {
        return Err(singular());
    }
    let x = m.solve(rhs).map_err(|_| singular())?;
    let r: Vec<f64> = m.matvec(&x).iter().zip(rhs).map(|(a, b)| a - b).collect();
    let residual = norm2(&r) / norm2(rhs);
    if !(residual <= options.solver.tolerance) {
        return Err(Error::Solve {
            reason: format!(
                "coarse system residual too large (condition {})",
                condition.map_or("not computed".to_string(), |c| format!("{c:.3e}"))
            ),
            residual,
        });
    }
    Ok((
        x,
        Diagnostics {
            condition,
            residual: Some(residual),
        },
    ))
}

fn combine(basis: &SlodBasis, fine: &FineSystem, coefficients: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; fine.mesh().free_count()];
    for (i, c) in coefficients.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let (idx, _) = entry_indices(basis, fine.mesh(), i);
        for (&k, &v) in idx.iter().zip(&basis.entries[i].phi) {
            u[k] += c * v;
        }
    }
    u
}

/// Galerkin projection onto the localized space.
pub fn solve_slod(
    basis: &SlodBasis,
    fine: &FineSystem,
    f: &Source,
    mode: RhsMode,
    options: &SolveOptions,
) -> Result<CoarseSolution> {
    check_compatible(basis, fine)?;
    let load = match mode {
        RhsMode::Projected => fine.load(&Source::Piecewise(project_p0(f, &basis.coarse, options.panels)?))?,
        RhsMode::Unprojected => fine.load(f)?,
    };
    let rhs: Vec<f64> = (0..basis.entries.len())
        .map(|i| {
            let (idx, _) = entry_indices(basis, fine.mesh(), i);
            idx.iter().zip(&basis.entries[i].phi).map(|(&k, &v)| v * load[k]).sum()
        })
        .collect();
    let s = coarse_matrix(basis, fine, options.execution)?;
    let (c, diagnostics) = dense_solve_checked(&s, &rhs, options)?;
    let u = combine(basis, fine, &c);
    Ok(CoarseSolution {
        method: match mode {
            RhsMode::Projected => Method::Slod,
            RhsMode::Unprojected => Method::SlodGalerkin,
        },
        coefficients: c,
        fine: u,
        diagnostics,
    })
}

/// Expands `Π_H f` in the sources and returns the matching combination of
/// basis functions.
pub fn solve_collocation(basis: &SlodBasis, fine: &FineSystem, f: &Source, options: &SolveOptions) -> Result<CoarseSolution> {
    check_compatible(basis, fine)?;
    let target = project_p0(f, &basis.coarse, options.panels)?;
    let g = basis.source_matrix();
    let (c, diagnostics) = dense_solve_checked(&g, target.values(), options)?;
    let u = combine(basis, fine, &c);
    Ok(CoarseSolution {
        method: Method::Collocation,
        coefficients: c,
        fine: u,
        diagnostics,
    })
}

fn coarse_fem(
    nesting: &NestingMap,
    epsilon: f64,
    velocity: &VelocityField,
    f: &Source,
    delta: Option<f64>,
    options: &SolveOptions,
) -> Result<CoarseSolution> {
    let coarse = nesting.coarse().as_box();
    let problem = assemble(&coarse, epsilon, velocity, AssemblyOptions { supg_delta: delta })?;
    let mut load = general_load(&coarse, f)?;
    if let Some(d) = delta.filter(|&d| d != 0.0) {
        for (l, s) in load.iter_mut().zip(streamline_load(&coarse, f, velocity)?) {
            *l += d * s;
        }
    }
    let rhs = coarse.restrict_free(&load);
    let x = problem.solve(&rhs, options.solver)?;
    let fine_full = nesting.prolongate(&coarse.extend_free(&x));
    let fine_mesh = nesting.fine().as_box();
    let residual = crate::linsolve::relative_residual(&problem.a, &x, &rhs);
    Ok(CoarseSolution {
        method: if delta.is_some() { Method::Supg } else { Method::Fem },
        coefficients: x,
        fine: fine_mesh.restrict_free(&fine_full),
        diagnostics: Diagnostics {
            condition: None,
            residual: Some(residual),
        },
    })
}

/// Plain Q1 Galerkin on the coarse grid, prolongated to the fine grid.
pub fn solve_fem(nesting: &NestingMap, epsilon: f64, velocity: &VelocityField, f: &Source, options: &SolveOptions) -> Result<CoarseSolution> {
    coarse_fem(nesting, epsilon, velocity, f, None, options)
}

/// Streamline upwind Petrov–Galerkin on the coarse grid with parameter `delta`.
pub fn solve_supg(
    nesting: &NestingMap,
    epsilon: f64,
    velocity: &VelocityField,
    f: &Source,
    delta: f64,
    options: &SolveOptions,
) -> Result<CoarseSolution> {
    coarse_fem(nesting, epsilon, velocity, f, Some(delta), options)
}

/// Global fine solve.
pub fn solve_reference(fine: &FineSystem, f: &Source, options: &SolveOptions) -> Result<CoarseSolution> {
    let h = fine.grid().mesh_size();
    let bmax = (0..fine.grid().node_count())
        .map(|n| euclidean_norm(&fine.velocity().eval(&fine.grid().node_point(n))))
        .fold(0.0, f64::max);
    if h * bmax / fine.epsilon() > 2.0 {
        log::warn!(
            "fine grid does not resolve epsilon: h·|b|/eps = {:.3}",
            h * bmax / fine.epsilon()
        );
    }
    let rhs = fine.load(f)?;
    let x = fine.problem().solve(&rhs, options.solver)?;
    let residual = crate::linsolve::relative_residual(&fine.problem().a, &x, &rhs);
    Ok(CoarseSolution {
        method: Method::Reference,
        coefficients: Vec::new(),
        fine: x,
        diagnostics: Diagnostics {
            condition: None,
            residual: Some(residual),
        },
    })
}

/// Fine solve with `Π_H f`.
pub fn solve_ideal(fine: &FineSystem, nesting: &NestingMap, f: &Source, options: &SolveOptions) -> Result<CoarseSolution> {
    let x = ideal_solve(fine.problem(), nesting, f, options.panels, options.solver)?;
    Ok(CoarseSolution {
        method: Method::Ideal,
        coefficients: Vec::new(),
        fine: x,
        diagnostics: Diagnostics::default(),
    })
}

/// `vᵀ S v` for the fine representation `Φv`, i.e. `a(Φv, Φv)`.
pub fn energy_of_combination(basis: &SlodBasis, fine: &FineSystem, v: &[f64]) -> (f64, f64) {
    let u = combine(basis, fine, v);
    let p = fine.problem();
    (dot(&u, &p.a.matvec(&u)), p.epsilon() * p.k.quad_form(&u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, BasisOptions, BasisParams};
    use crate::projection::P0Function;

    fn one_d(eps: f64, nc: usize, nf: usize) -> (NestingMap, FineSystem, VelocityField) {
        let b = VelocityField::constant(&[1.0]);
        let n = NestingMap::new(TensorGrid::new(1, nc).unwrap(), TensorGrid::new(1, nf).unwrap()).unwrap();
        let fine = FineSystem::new(*n.fine(), eps, &b).unwrap();
        (n, fine, b)
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("lod".parse::<Method>().is_err());
    }

    #[test]
    fn fem_single_node() {
        let n = NestingMap::new(TensorGrid::new(1, 2).unwrap(), TensorGrid::new(1, 8).unwrap()).unwrap();
        let s = solve_fem(&n, 1.0, &VelocityField::constant(&[0.0]), &Source::One, &SolveOptions::default()).unwrap();
        assert_eq!(s.coefficients.len(), 1);
        assert!((s.coefficients[0] - 0.125).abs() < 1e-15);
        // prolongation: value at x = 0.25 is half the midpoint value
        assert!((s.fine[1] - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn supg_without_delta_is_fem() {
        let b = VelocityField::Rotational;
        let n = NestingMap::new(TensorGrid::new(2, 4).unwrap(), TensorGrid::new(2, 16).unwrap()).unwrap();
        let o = SolveOptions::default();
        let fem = solve_fem(&n, 0.01, &b, &Source::SinCos, &o).unwrap();
        let supg = solve_supg(&n, 0.01, &b, &Source::SinCos, 0.0, &o).unwrap();
        for (a, c) in fem.fine.iter().zip(&supg.fine) {
            assert!((a - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_sources_give_zero_solutions() {
        let (n, fine, b) = one_d(0.1, 4, 16);
        let o = SolveOptions::default();
        let basis = build_basis(&n, 0.1, &b, &BasisParams::default(), &BasisOptions::default()).unwrap();
        for s in [
            solve_slod(&basis, &fine, &Source::Zero, RhsMode::Projected, &o).unwrap(),
            solve_collocation(&basis, &fine, &Source::Zero, &o).unwrap(),
            solve_fem(&n, 0.1, &b, &Source::Zero, &o).unwrap(),
            solve_supg(&n, 0.1, &b, &Source::Zero, 1.0 / 16.0, &o).unwrap(),
            solve_reference(&fine, &Source::Zero, &o).unwrap(),
        ] {
            assert!(s.fine.iter().all(|&v| v == 0.0), "{}", s.method);
        }
    }

    #[test]
    fn collocation_reproduces_a_stored_source() {
        let (n, fine, b) = one_d(0.05, 8, 64);
        let basis = build_basis(&n, 0.05, &b, &BasisParams::default(), &BasisOptions::default()).unwrap();
        let t = 3;
        let g = P0Function::new(basis.coarse, basis.entries[t].source_global(8)).unwrap();
        let s = solve_collocation(&basis, &fine, &Source::Piecewise(g), &SolveOptions::default()).unwrap();
        for (i, c) in s.coefficients.iter().enumerate() {
            let expect = if i == t { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-9, "c[{i}] = {c}");
        }
    }

    #[test]
    fn one_dimensional_slod_is_exact_for_piecewise_constants() {
        let (n, fine, b) = one_d(0.01, 8, 128);
        let basis = build_basis(&n, 0.01, &b, &BasisParams::default(), &BasisOptions::default()).unwrap();
        let f = Source::Piecewise(P0Function::new(*n.coarse(), vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 2.0]).unwrap());
        let o = SolveOptions::default();
        let slod = solve_slod(&basis, &fine, &f, RhsMode::Projected, &o).unwrap();
        let galerkin = solve_slod(&basis, &fine, &f, RhsMode::Unprojected, &o).unwrap();
        assert_eq!(slod.fine, galerkin.fine);
        let reference = solve_reference(&fine, &f, &o).unwrap();
        let m = &fine.problem().m;
        let e: Vec<f64> = slod.fine.iter().zip(&reference.fine).map(|(a, c)| a - c).collect();
        let rel = (m.quad_form(&e) / m.quad_form(&reference.fine)).sqrt();
        assert!(rel < 1e-8, "relative L2 error {rel}");
    }

    #[test]
    fn ideal_matches_reference_for_piecewise_constants() {
        let (n, fine, _) = one_d(0.125, 4, 64);
        let o = SolveOptions::default();
        let a = solve_ideal(&fine, &n, &Source::One, &o).unwrap();
        let r = solve_reference(&fine, &Source::One, &o).unwrap();
        assert_eq!(a.fine, r.fine);
    }
}
