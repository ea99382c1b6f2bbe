//! Piecewise constants on the coarse grid and the `L²` projection onto them.

use crate::error::{Error, Result};
use crate::fem::{general_load, AssembledProblem};
use crate::linsolve::SolverOptions;
use crate::mesh::{NestingMap, Point, TensorGrid, MAX_DIM};
use crate::par::{self, Execution};
use crate::source::Source;

/// One value per coarse element.
#[derive(Clone, Debug, PartialEq)]
pub struct P0Function {
    grid: TensorGrid,
    values: Vec<f64>,
}

impl P0Function {
    pub fn new(grid: TensorGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.element_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} cell values for a grid with {} elements",
                values.len(),
                grid.element_count()
            )));
        }
        Ok(P0Function { grid, values })
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.values[self.grid.locate(x)]
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.element_volume().sqrt() * self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

// 5-point Gauss–Legendre rule on [0, 1]
const GAUSS5_X: [f64; 5] = [
    0.046_910_077_030_668_02,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_331_9,
];
const GAUSS5_W: [f64; 5] = [
    0.118_463_442_528_094_71,
    0.239_314_335_249_683_1,
    0.284_444_444_444_444_5,
    0.239_314_335_249_683_1,
    0.118_463_442_528_094_71,
];

/// Cell average of `f` over the cell with lower corner `origin` and side `h`,
/// using `panels^d` sub-cells with a 5-point Gauss rule per axis each.
pub fn cell_average(f: &Source, dim: usize, origin: &Point, h: f64, panels: usize) -> Result<f64> {
    cell_integral_with(dim, origin, h, panels, |x| f.eval_checked(x))
}

fn cell_integral_with(
    dim: usize,
    origin: &Point,
    h: f64,
    panels: usize,
    f: impl Fn(&Point) -> Result<f64>,
) -> Result<f64> {
    let per_axis = panels * GAUSS5_X.len();
    let step = h / panels as f64;
    let mut total = 0.0;
    for k in 0..per_axis.pow(dim as u32) {
        let mut rest = k;
        let mut x = [0.0; MAX_DIM];
        let mut w = 1.0;
        for a in 0..dim {
            let j = rest % per_axis;
            rest /= per_axis;
            let (panel, g) = (j / GAUSS5_X.len(), j % GAUSS5_X.len());
            x[a] = origin[a] + step * (panel as f64 + GAUSS5_X[g]);
            w *= GAUSS5_W[g] / panels as f64;
        }
        total += w * f(&x)?;
    }
    Ok(total)
}

/// `Π_H f` by per-cell quadrature; exact (no quadrature) when `f` is already
/// piecewise constant on `coarse`.
pub fn project_p0(f: &Source, coarse: &TensorGrid, panels: usize) -> Result<P0Function> {
    if panels == 0 {
        return Err(Error::InvalidParameter("quadrature refinement must be >= 1".into()));
    }
    if let Some(exact) = f.as_p0(coarse) {
        return Ok(exact);
    }
    let dim = coarse.dim();
    let h = coarse.mesh_size();
    let ids: Vec<usize> = (0..coarse.element_count()).collect();
    let values = par::map(Execution::Parallel, &ids, |&e| {
        let mut origin = coarse.element_midpoint(e)?;
        for x in origin.iter_mut().take(dim) {
            *x -= 0.5 * h;
        }
        cell_average(f, dim, &origin, h, panels)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    P0Function::new(*coarse, values)
}

/// `‖f‖²_{L²(Ω)}` by the same quadrature as [`project_p0`] on `grid`.
pub fn l2_norm_squared(f: &Source, grid: &TensorGrid, panels: usize) -> Result<f64> {
    let dim = grid.dim();
    let h = grid.mesh_size();
    let mut total = 0.0;
    for e in 0..grid.element_count() {
        let mut origin = grid.element_midpoint(e)?;
        for x in origin.iter_mut().take(dim) {
            *x -= 0.5 * h;
        }
        let avg = cell_integral_with(dim, &origin, h, panels, |x| f.eval_checked(x).map(|v| v * v))?;
        total += avg * grid.element_volume();
    }
    Ok(total)
}

/// Fine solve with the load of `Π_H f`: the discrete ideal method.
pub fn ideal_solve(
    fine: &AssembledProblem,
    nesting: &NestingMap,
    f: &Source,
    panels: usize,
    options: SolverOptions,
) -> Result<Vec<f64>> {
    let projected = Source::Piecewise(project_p0(f, nesting.coarse(), panels)?);
    let load = general_load(fine.mesh(), &projected)?;
    fine.solve(&fine.mesh().restrict_free(&load), options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simple_averages() {
        let g = TensorGrid::new(1, 2).unwrap();
        let p = project_p0(&Source::function("x", |x| x[0]), &g, 1).unwrap();
        assert!((p.values()[0] - 0.25).abs() < 1e-15);
        assert!((p.values()[1] - 0.75).abs() < 1e-15);
        let ones = project_p0(&Source::One, &TensorGrid::new(3, 3).unwrap(), 4).unwrap();
        assert!(ones.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sin_cos_cell_averages() {
        let g = TensorGrid::new(2, 4).unwrap();
        let p = project_p0(&Source::SinCos, &g, 4).unwrap();
        let h = 0.25;
        for e in 0..16 {
            let m = g.element_multi(e);
            let (a0, a1) = (m[0] as f64 * h, m[1] as f64 * h);
            let ix = ((PI * a0).cos() - (PI * (a0 + h)).cos()) / PI;
            let iy = ((PI * (a1 + h)).sin() - (PI * a1).sin()) / PI;
            assert!((p.values()[e] - ix * iy / (h * h)).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let g = TensorGrid::new(2, 4).unwrap();
        let p = project_p0(&Source::SinCos, &g, 2).unwrap();
        let again = project_p0(&Source::Piecewise(p.clone()), &g, 2).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn rejects_zero_refinement_and_bad_lengths() {
        let g = TensorGrid::new(1, 4).unwrap();
        assert!(project_p0(&Source::SinCos, &g, 0).is_err());
        assert!(P0Function::new(g, vec![1.0; 3]).is_err());
    }

    #[test]
    fn l2_norm_of_p0() {
        let g = TensorGrid::new(2, 2).unwrap();
        let p = P0Function::new(g, vec![2.0; 4]).unwrap();
        assert!((p.l2_norm() - 2.0).abs() < 1e-15);
    }
}
