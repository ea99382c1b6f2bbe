//! Experiment configuration: TOML files and built-in presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{BasisOptions, BasisParams, BoundaryMassKind};
use crate::error::{Error, Result};
use crate::linsolve::{SolverKind, SolverOptions};
use crate::mesh::TensorGrid;
use crate::par::Execution;
use crate::solvers::{Method, SolveOptions};
use crate::source::{Source, SourceSpec};
use crate::velocity::{VelocityField, VelocitySpec};

/// One experiment. Grid sizes are cells per axis, so `coarse_sizes = [8, 16]`
/// means `H ∈ {1/8, 1/16}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim: usize,
    pub epsilon: f64,
    pub velocity: VelocitySpec,
    pub f: SourceSpec,
    pub coarse_sizes: Vec<usize>,
    pub fine_size: usize,
    pub levels: Vec<usize>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_p_w")]
    pub p_w: f64,
    #[serde(default = "default_weight_floor")]
    pub weight_floor: f64,
    pub methods: Vec<Method>,
    #[serde(default = "default_tolerance")]
    pub solver_tolerance: f64,
    #[serde(default = "default_direct_limit")]
    pub direct_limit: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub cache: bool,
    /// 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_true")]
    pub allow_full_patches: bool,
    #[serde(default)]
    pub boundary_mass: BoundaryMassKind,
    /// SUPG parameter; `H²` when absent.
    #[serde(default)]
    pub supg_delta: Option<f64>,
    /// Gauss panels per coarse cell and axis for `Π_H f`.
    #[serde(default = "default_panels")]
    pub panels: usize,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_p() -> f64 {
    BasisParams::default().p
}
fn default_p_w() -> f64 {
    BasisParams::default().p_w
}
fn default_weight_floor() -> f64 {
    BasisParams::default().weight_floor
}
fn default_tolerance() -> f64 {
    SolverOptions::default().tolerance
}
fn default_direct_limit() -> usize {
    SolverOptions::default().direct_limit
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_true() -> bool {
    true
}
fn default_panels() -> usize {
    4
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::config(key, message)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            // the key is whatever starts the line the error points into
            let key = e
                .span()
                .map(|s| {
                    let start = text[..s.start].rfind('\n').map_or(0, |i| i + 1);
                    let line = text[start..].lines().next().unwrap_or("");
                    line.split('=').next().unwrap_or(line).trim().to_string()
                })
                .filter(|k| !k.is_empty())
                .unwrap_or_else(|| "<file>".into());
            bad(&key, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configs serialize");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(bad("dim", format!("must be 1, 2 or 3, got {}", self.dim)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(bad("epsilon", format!("must be positive and finite, got {}", self.epsilon)));
        }
        VelocityField::from_spec(&self.velocity, self.dim).map_err(|e| bad("velocity", e.to_string()))?;
        Source::from_spec(&self.f, self.dim).map_err(|e| bad("f", e.to_string()))?;
        TensorGrid::new(self.dim, self.fine_size).map_err(|e| bad("fine_size", e.to_string()))?;
        if self.coarse_sizes.is_empty() {
            return Err(bad("coarse_sizes", "must not be empty"));
        }
        for &n in &self.coarse_sizes {
            if n == 0 || !self.fine_size.is_multiple_of(n) {
                return Err(bad(
                    "coarse_sizes",
                    format!("{n} cells per axis does not divide the fine size {}", self.fine_size),
                ));
            }
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(bad("levels", "must be a non-empty list of values >= 1"));
        }
        if self.methods.is_empty() {
            return Err(bad("methods", "must not be empty"));
        }
        if !(self.p >= 1.0) {
            return Err(bad("p", format!("must be >= 1, got {}", self.p)));
        }
        if !(self.p_w >= 1.0) {
            return Err(bad("p_w", format!("must be >= 1, got {}", self.p_w)));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor.is_finite()) {
            return Err(bad("weight_floor", "must be finite and >= 0"));
        }
        if !(self.solver_tolerance > 0.0 && self.solver_tolerance < 1.0) {
            return Err(bad("solver_tolerance", "must lie in (0, 1)"));
        }
        if self.panels == 0 {
            return Err(bad("panels", "must be >= 1"));
        }
        if let Some(d) = self.supg_delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(bad("supg_delta", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn velocity_field(&self) -> Result<VelocityField> {
        VelocityField::from_spec(&self.velocity, self.dim)
    }

    pub fn source(&self) -> Result<Source> {
        Source::from_spec(&self.f, self.dim)
    }

    pub fn basis_params(&self, level: usize) -> BasisParams {
        BasisParams {
            level,
            p: self.p,
            p_w: self.p_w,
            weight_floor: self.weight_floor,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver_tolerance,
            direct_limit: self.direct_limit,
            ..SolverOptions::default()
        }
    }

    pub fn basis_options(&self) -> BasisOptions {
        BasisOptions {
            boundary_mass: self.boundary_mass,
            allow_full_patches: self.allow_full_patches,
            solver: SolverOptions {
                kind: SolverKind::Direct,
                tolerance: self.solver_tolerance,
                ..SolverOptions::default()
            },
            execution: Execution::Parallel,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            solver: self.solver_options(),
            panels: self.panels,
            ..SolveOptions::default()
        }
    }
}

/// Scaling applied to a preset: `h·2^scale_h` and `ε·2^scale_eps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PresetScale {
    pub scale_h: i32,
    pub scale_eps: i32,
}

impl PresetScale {
    /// Two levels coarser `h` and two levels larger `ε` than the full-scale setup.
    pub const DESK: PresetScale = PresetScale { scale_h: 2, scale_eps: 2 };
    pub const FULL: PresetScale = PresetScale { scale_h: 0, scale_eps: 0 };
}

pub const PRESETS: [&str; 4] = ["fig4", "fig5", "fig6", "fig9"];

/// dim, log2 ε, velocity, source, −log2 h, −log2 H list, levels, methods.
type PresetTuple = (usize, i32, VelocitySpec, SourceSpec, u32, Vec<u32>, Vec<usize>, Vec<Method>);

/// Built-in experiment setups. Coarse sizes that are not strictly coarser than the
/// scaled fine grid are dropped.
pub fn preset(name: &str, scale: PresetScale) -> Result<ExperimentConfig> {
    let pow2 = |k: i32| 2f64.powi(k);
    let (dim, eps_exp, velocity, f, fine_exp, coarse_exps, levels, methods): PresetTuple = match name {
        "fig4" => (
            2,
            -7,
            VelocitySpec::Angle { angle: 0.7, magnitude: 1.0 },
            SourceSpec::One,
            10,
            vec![2, 3, 4, 5, 6],
            vec![1, 2, 3, 4],
            vec![Method::Slod, Method::Fem, Method::Supg],
        ),
        "fig5" => (
            2,
            -7,
            VelocitySpec::Angle { angle: 0.7, magnitude: 1.0 },
            SourceSpec::One,
            10,
            vec![3, 4, 5, 6],
            vec![1, 2, 3, 4],
            vec![Method::Slod],
        ),
        "fig6" => (
            2,
            -7,
            VelocitySpec::Rotational,
            SourceSpec::SinCos,
            10,
            vec![2, 3, 4, 5, 6],
            vec![1, 2, 3, 4],
            vec![Method::Slod, Method::SlodGalerkin, Method::Fem, Method::Supg],
        ),
        "fig9" => (
            3,
            -5,
            VelocitySpec::Constant {
                value: vec![std::f64::consts::FRAC_PI_4; 3],
            },
            SourceSpec::One,
            6,
            vec![2, 3, 4],
            vec![1, 2, 3],
            vec![Method::Slod, Method::Fem, Method::Supg],
        ),
        other => {
            return Err(bad(
                "preset",
                format!("unknown preset `{other}`; known: {}", PRESETS.join(", ")),
            ))
        }
    };
    let fine_exp = fine_exp as i32 - scale.scale_h;
    if fine_exp < 1 {
        return Err(bad("scale-h", format!("scaling leaves a fine grid of 2^{fine_exp} cells")));
    }
    let fine_size = 1usize << fine_exp;
    let coarse_sizes: Vec<usize> = coarse_exps
        .into_iter()
        .filter(|&k| (k as i32) < fine_exp)
        .map(|k| 1usize << k)
        .collect();
    let config = ExperimentConfig {
        name: name.to_string(),
        dim,
        epsilon: pow2(eps_exp + scale.scale_eps),
        velocity,
        f,
        coarse_sizes,
        fine_size,
        levels,
        p: default_p(),
        p_w: default_p_w(),
        weight_floor: default_weight_floor(),
        methods,
        solver_tolerance: default_tolerance(),
        direct_limit: default_direct_limit(),
        output_dir: PathBuf::from("results").join(name),
        cache: true,
        workers: 0,
        allow_full_patches: true,
        boundary_mass: BoundaryMassKind::Consistent,
        supg_delta: None,
        panels: default_panels(),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
dim = 2
epsilon = 0.03125
coarse_sizes = [8, 16]
fine_size = 256
levels = [3]
methods = ["slod", "fem"]
workers = 2

[velocity]
kind = "angle"
angle = 0.7

[f]
kind = "one"
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(c.coarse_sizes, vec![8, 16]);
        assert_eq!(c.methods, vec![Method::Slod, Method::Fem]);
        assert_eq!(c.p, 1.5);
        assert!(c.cache);
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            (EXAMPLE.replace("fine_size = 256", "fine_size = 250"), "coarse_sizes"),
            (EXAMPLE.replace("levels = [3]", "levels = [0]"), "levels"),
            (EXAMPLE.replace("epsilon = 0.03125", "epsilon = -1.0"), "epsilon"),
            (EXAMPLE.replace("\"fem\"", "\"lod\""), "methods"),
            (EXAMPLE.replace("dim = 2", "dim = 2\nbogus = 1"), "bogus"),
            (EXAMPLE.replace("kind = \"one\"", "kind = \"sin_cos\"").replace("dim = 2", "dim = 1"), "velocity"),
        ];
        for (text, key) in cases {
            match ExperimentConfig::from_toml(&text) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("expected a config error for {key}, got {other:?}"),
            }
        }
    }

    #[test]
    fn presets() {
        let full = preset("fig4", PresetScale::FULL).unwrap();
        assert_eq!(full.fine_size, 1024);
        assert_eq!(full.epsilon, 2f64.powi(-7));
        assert_eq!(full.coarse_sizes, vec![4, 8, 16, 32, 64]);
        let desk = preset("fig4", PresetScale::DESK).unwrap();
        assert_eq!(desk.fine_size, 256);
        assert_eq!(desk.epsilon, 2f64.powi(-5));
        let nine = preset("fig9", PresetScale::DESK).unwrap();
        assert_eq!((nine.dim, nine.fine_size), (3, 16));
        assert_eq!(nine.coarse_sizes, vec![4, 8]);
        let six = preset("fig6", PresetScale::FULL).unwrap();
        assert!(six.methods.contains(&Method::SlodGalerkin));
        assert!(preset("fig7", PresetScale::FULL).is_err());
    }
}
