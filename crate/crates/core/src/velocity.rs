//! Divergence-free velocity fields.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, MAX_DIM};

pub type VectorFn = Arc<dyn Fn(&Point) -> [f64; MAX_DIM] + Send + Sync>;

#[derive(Clone)]
pub enum VelocityField {
    Constant([f64; MAX_DIM]),
    /// `b(x) = M x + c` with `trace(M) = 0`.
    Affine {
        matrix: [[f64; MAX_DIM]; MAX_DIM],
        offset: [f64; MAX_DIM],
    },
    /// `b(x) = (−x₂, x₁)`, two-dimensional only.
    Rotational,
    /// Arbitrary field supplied by the caller. The name enters cache keys, so it
    /// must identify the function.
    Tabulated { name: String, eval: VectorFn },
}

/// Serializable description of the built-in fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocitySpec {
    Constant { value: Vec<f64> },
    /// Unit vector `(cos θ, sin θ)` scaled by `magnitude`.
    Angle {
        angle: f64,
        #[serde(default = "one")]
        magnitude: f64,
    },
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    Rotational,
}

fn one() -> f64 {
    1.0
}

impl VelocityField {
    pub fn constant(value: &[f64]) -> Self {
        let mut v = [0.0; MAX_DIM];
        v[..value.len()].copy_from_slice(value);
        VelocityField::Constant(v)
    }

    pub fn affine(matrix: [[f64; MAX_DIM]; MAX_DIM], offset: [f64; MAX_DIM]) -> Result<Self> {
        let trace = matrix[0][0] + matrix[1][1] + matrix[2][2];
        if trace != 0.0 {
            return Err(Error::Velocity(format!(
                "affine velocity matrix has trace {trace}, must be divergence-free"
            )));
        }
        Ok(VelocityField::Affine { matrix, offset })
    }

    pub fn tabulated(name: impl Into<String>, eval: impl Fn(&Point) -> [f64; MAX_DIM] + Send + Sync + 'static) -> Self {
        VelocityField::Tabulated {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn from_spec(spec: &VelocitySpec, dim: usize) -> Result<Self> {
        let field = match spec {
            VelocitySpec::Constant { value } => {
                if value.len() != dim {
                    return Err(Error::Velocity(format!(
                        "constant velocity has {} components for a {dim}D problem",
                        value.len()
                    )));
                }
                VelocityField::constant(value)
            }
            VelocitySpec::Angle { angle, magnitude } => {
                if dim != 2 {
                    return Err(Error::Velocity("angle velocity requires dim = 2".into()));
                }
                VelocityField::constant(&[magnitude * angle.cos(), magnitude * angle.sin()])
            }
            VelocitySpec::Affine { matrix, offset } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) || offset.len() != dim {
                    return Err(Error::Velocity(format!("affine velocity must be {dim}x{dim} plus {dim}")));
                }
                let mut m = [[0.0; MAX_DIM]; MAX_DIM];
                let mut c = [0.0; MAX_DIM];
                for i in 0..dim {
                    m[i][..dim].copy_from_slice(&matrix[i]);
                    c[i] = offset[i];
                }
                VelocityField::affine(m, c)?
            }
            VelocitySpec::Rotational => VelocityField::Rotational,
        };
        field.check_dim(dim)?;
        Ok(field)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            VelocityField::Rotational if dim != 2 => {
                Err(Error::Velocity("rotational velocity requires dim = 2".into()))
            }
            VelocityField::Constant(v) if v[dim..].iter().any(|&x| x != 0.0) => Err(Error::Velocity(
                format!("constant velocity has nonzero components beyond dim {dim}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &Point) -> [f64; MAX_DIM] {
        match self {
            VelocityField::Constant(v) => *v,
            VelocityField::Affine { matrix, offset } => {
                let mut b = *offset;
                for (bi, row) in b.iter_mut().zip(matrix) {
                    *bi += row[0] * x[0] + row[1] * x[1] + row[2] * x[2];
                }
                b
            }
            VelocityField::Rotational => [-x[1], x[0], 0.0],
            VelocityField::Tabulated { eval, .. } => eval(x),
        }
    }

    /// Evaluates and rejects non-finite values.
    pub fn eval_checked(&self, x: &Point) -> Result<[f64; MAX_DIM]> {
        let b = self.eval(x);
        if b.iter().all(|v| v.is_finite()) {
            Ok(b)
        } else {
            Err(Error::Velocity(format!("velocity {} is not finite at {x:?}", self.descriptor())))
        }
    }

    /// Whether the field is constant in space (enables skew-symmetry checks).
    pub fn is_constant(&self) -> bool {
        matches!(self, VelocityField::Constant(_))
    }

    /// Exact textual identity of the field, used in cache keys and CSV echoes.
    pub fn descriptor(&self) -> String {
        match self {
            VelocityField::Constant(v) => format!("constant({:?},{:?},{:?})", v[0], v[1], v[2]),
            VelocityField::Affine { matrix, offset } => format!("affine({matrix:?},{offset:?})"),
            VelocityField::Rotational => "rotational".into(),
            VelocityField::Tabulated { name, .. } => format!("tabulated({name})"),
        }
    }
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

pub fn euclidean_norm(b: &[f64; MAX_DIM]) -> f64 {
    (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_requires_zero_trace() {
        let mut m = [[0.0; 3]; 3];
        m[0][0] = 1.0;
        assert!(VelocityField::affine(m, [0.0; 3]).is_err());
        m[1][1] = -1.0;
        let b = VelocityField::affine(m, [0.5, 0.0, 0.0]).unwrap();
        assert_eq!(b.eval(&[1.0, 2.0, 0.0]), [1.5, -2.0, 0.0]);
    }

    #[test]
    fn specs() {
        let b = VelocityField::from_spec(&VelocitySpec::Angle { angle: 0.7, magnitude: 1.0 }, 2).unwrap();
        assert_eq!(b.eval(&[0.3, 0.3, 0.0])[0], 0.7f64.cos());
        assert!(VelocityField::from_spec(&VelocitySpec::Rotational, 3).is_err());
        assert!(VelocityField::from_spec(&VelocitySpec::Constant { value: vec![1.0] }, 2).is_err());
        let r = VelocityField::Rotational;
        assert_eq!(r.eval(&[0.25, 0.5, 0.0]), [-0.5, 0.25, 0.0]);
        let spec: VelocitySpec = toml::from_str("kind = \"constant\"\nvalue = [1.0, 2.0]").unwrap();
        assert_eq!(spec, VelocitySpec::Constant { value: vec![1.0, 2.0] });
    }

    #[test]
    fn descriptors_are_exact() {
        let a = VelocityField::constant(&[0.1, 0.2]);
        let b = VelocityField::constant(&[0.1, 0.2 + 1e-16 * 2.0]);
        assert_ne!(a.descriptor(), b.descriptor());
    }
}
