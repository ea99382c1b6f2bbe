//! Right-hand sides `f`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, TensorGrid};
use crate::projection::P0Function;

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Source {
    Zero,
    One,
    /// `sin(πx₁)·cos(πx₂)`.
    SinCos,
    Piecewise(P0Function),
    /// Caller-supplied function; the name enters cache keys and CSV echoes.
    Function { name: String, eval: ScalarFn },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    Zero,
    One,
    SinCos,
    /// Cell values on a uniform grid with `cells` cells per axis, lexicographic
    /// with axis 0 fastest.
    Table { cells: usize, values: Vec<f64> },
}

impl Source {
    pub fn function(name: impl Into<String>, eval: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Source::Function {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn from_spec(spec: &SourceSpec, dim: usize) -> Result<Self> {
        Ok(match spec {
            SourceSpec::Zero => Source::Zero,
            SourceSpec::One => Source::One,
            SourceSpec::SinCos => {
                if dim < 2 {
                    return Err(Error::InvalidParameter("sin_cos source needs dim >= 2".into()));
                }
                Source::SinCos
            }
            SourceSpec::Table { cells, values } => {
                let grid = TensorGrid::new(dim, *cells)?;
                Source::Piecewise(P0Function::new(grid, values.clone())?)
            }
        })
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::One => 1.0,
            Source::SinCos => (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).cos(),
            Source::Piecewise(p) => p.eval(x),
            Source::Function { eval, .. } => eval(x),
        }
    }

    pub fn eval_checked(&self, x: &Point) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidParameter(format!("source {} is not finite at {x:?}", self.descriptor())))
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Source::Zero => true,
            Source::Piecewise(p) => p.values().iter().all(|&v| v == 0.0),
            _ => false,
        }
    }

    /// The exact cell values on `coarse` when `f` is piecewise constant there.
    pub fn as_p0(&self, coarse: &TensorGrid) -> Option<P0Function> {
        let n = coarse.element_count();
        match self {
            Source::Zero => Some(P0Function::new(*coarse, vec![0.0; n]).ok()?),
            Source::One => Some(P0Function::new(*coarse, vec![1.0; n]).ok()?),
            Source::Piecewise(p) => {
                let g = p.grid();
                if g.dim() != coarse.dim() || !coarse.cells_per_axis().is_multiple_of(g.cells_per_axis()) {
                    return None;
                }
                let values = (0..n)
                    .map(|e| p.eval(&coarse.element_midpoint(e).expect("valid element")))
                    .collect();
                P0Function::new(*coarse, values).ok()
            }
            _ => None,
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Source::Zero => "zero".into(),
            Source::One => "one".into(),
            Source::SinCos => "sin_cos".into(),
            Source::Piecewise(p) => format!("table({}:{:?})", p.grid().cells_per_axis(), p.values()),
            Source::Function { name, .. } => format!("function({name})"),
        }
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_sources_restrict_to_finer_grids() {
        let g = TensorGrid::new(2, 2).unwrap();
        let f = Source::Piecewise(P0Function::new(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let fine = TensorGrid::new(2, 4).unwrap();
        let p = f.as_p0(&fine).unwrap();
        assert_eq!(p.values()[0], 1.0);
        assert_eq!(p.values()[3], 2.0);
        assert_eq!(p.values()[15], 4.0);
        assert!(f.as_p0(&TensorGrid::new(2, 3).unwrap()).is_none());
        assert!(Source::SinCos.as_p0(&fine).is_none());
    }

    #[test]
    fn table_spec() {
        let spec: SourceSpec = toml::from_str("kind = \"table\"\ncells = 2\nvalues = [1.0, 0.0]").unwrap();
        let f = Source::from_spec(&spec, 1).unwrap();
        assert_eq!(f.eval(&[0.2, 0.0, 0.0]), 1.0);
        assert_eq!(f.eval(&[0.7, 0.0, 0.0]), 0.0);
        assert!(Source::from_spec(&SourceSpec::SinCos, 1).is_err());
    }
}
