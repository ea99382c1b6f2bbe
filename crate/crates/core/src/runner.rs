//! Experiment orchestration: basis → solve → analyze, and file emission.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{convergence_rate, decay_fit, eigen_decay_report, error_norms, riesz_report, DecayFit, ErrorReport};
use crate::basis::{build_basis, SlodBasis};
use crate::cache::{self, CacheOutcome};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::mesh::{NestingMap, TensorGrid};
use crate::par;
use crate::solvers::{
    solve_collocation, solve_fem, solve_ideal, solve_reference, solve_slod, solve_supg, CoarseSolution, FineSystem,
    Method, RhsMode,
};
use crate::source::Source;
use crate::velocity::VelocityField;

pub const RESULTS_HEADER: &str =
    "method,dim,epsilon,H,h,ell,p,pw,l2_error,h1_semi_error,eps_norm_error,sigma,runtime_seconds";

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub method: Method,
    pub dim: usize,
    pub epsilon: f64,
    pub coarse_cells: usize,
    pub fine_cells: usize,
    /// `None` for methods that do not use a localized basis.
    pub level: Option<usize>,
    pub p: f64,
    pub p_w: f64,
    pub errors: ErrorReport,
    pub sigma: Option<f64>,
    pub runtime_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub coarse_cells: usize,
    pub level: Option<usize>,
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Skipped {
    pub coarse_cells: usize,
    pub level: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub method: Method,
    pub level: Option<usize>,
    pub l2: Option<f64>,
    pub h1_semi: Option<f64>,
    pub eps_norm: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct StudyOutcome {
    pub rows: Vec<StudyRow>,
    pub rates: Vec<RateRow>,
    pub failures: Vec<Failure>,
    pub skipped: Vec<Skipped>,
}

/// Shared inputs of a run.
struct Setup {
    fine: FineSystem,
    velocity: VelocityField,
    f: Source,
    reference: Vec<f64>,
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    let velocity = config.velocity_field()?;
    let f = config.source()?;
    let grid = TensorGrid::new(config.dim, config.fine_size)?;
    let fine = FineSystem::new(grid, config.epsilon, &velocity)?;
    let reference = solve_reference(&fine, &f, &config.solve_options())?.fine;
    Ok(Setup {
        fine,
        velocity,
        f,
        reference,
    })
}

/// Levels to run on a coarse grid with `n` cells per axis. Once a level
/// makes every patch the whole domain, larger ones repeat it and are skipped.
fn effective_levels(levels: &[usize], n: usize) -> (Vec<usize>, Vec<Skipped>) {
    let cap = n.saturating_sub(1).max(1);
    let mut seen = BTreeSet::new();
    let (mut run, mut skip) = (Vec::new(), Vec::new());
    for &l in levels {
        if seen.insert(l.min(cap)) {
            run.push(l);
        } else {
            skip.push(Skipped {
                coarse_cells: n,
                level: l,
                reason: format!("every patch already covers the domain at level {cap}"),
            });
        }
    }
    (run, skip)
}

fn get_basis(
    config: &ExperimentConfig,
    cache_dir: Option<&Path>,
    nesting: &NestingMap,
    velocity: &VelocityField,
    level: usize,
) -> Result<(SlodBasis, CacheOutcome, Option<PathBuf>)> {
    let params = config.basis_params(level);
    let options = config.basis_options();
    match cache_dir {
        Some(dir) => {
            let (b, outcome, path) = cache::load_or_build(dir, nesting, config.epsilon, velocity, &params, &options)?;
            Ok((b, outcome, Some(path)))
        }
        None => Ok((
            build_basis(nesting, config.epsilon, velocity, &params, &options)?,
            CacheOutcome::Built,
            None,
        )),
    }
}

fn run_method(
    method: Method,
    config: &ExperimentConfig,
    s: &Setup,
    nesting: &NestingMap,
    basis: Option<&SlodBasis>,
) -> Result<CoarseSolution> {
    let o = config.solve_options();
    let need = || basis.ok_or_else(|| Error::InvalidParameter(format!("{method} needs a basis")));
    match method {
        Method::Slod => solve_slod(need()?, &s.fine, &s.f, RhsMode::Projected, &o),
        Method::SlodGalerkin => solve_slod(need()?, &s.fine, &s.f, RhsMode::Unprojected, &o),
        Method::Collocation => solve_collocation(need()?, &s.fine, &s.f, &o),
        Method::Fem => solve_fem(nesting, config.epsilon, &s.velocity, &s.f, &o),
        Method::Supg => {
            let h = nesting.coarse().mesh_size();
            solve_supg(nesting, config.epsilon, &s.velocity, &s.f, config.supg_delta.unwrap_or(h * h), &o)
        }
        Method::Ideal => solve_ideal(&s.fine, nesting, &s.f, &o),
        Method::Reference => Ok(CoarseSolution {
            method,
            coefficients: Vec::new(),
            fine: s.reference.clone(),
            diagnostics: Default::default(),
        }),
    }
}

fn row(
    config: &ExperimentConfig,
    s: &Setup,
    n: usize,
    level: Option<usize>,
    solution: &CoarseSolution,
    sigma: Option<f64>,
    seconds: f64,
) -> Result<StudyRow> {
    Ok(StudyRow {
        method: solution.method,
        dim: config.dim,
        epsilon: config.epsilon,
        coarse_cells: n,
        fine_cells: config.fine_size,
        level,
        p: config.p,
        p_w: config.p_w,
        errors: error_norms(&s.fine, &s.reference, &solution.fine)?,
        sigma,
        runtime_seconds: seconds,
    })
}

/// Runs every (H, ℓ, method) cell of the configuration. Failures of single
/// cells are recorded, setup failures are returned as errors.
pub fn run_study(config: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<StudyOutcome> {
    config.validate()?;
    par::with_workers(config.workers, || study_inner(config, cache_dir))
}

fn study_inner(config: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<StudyOutcome> {
    let s = setup(config)?;
    let mut out = StudyOutcome::default();
    for &n in &config.coarse_sizes {
        let nesting = NestingMap::new(TensorGrid::new(config.dim, n)?, *s.fine.grid())?;
        for &m in config.methods.iter().filter(|m| !m.uses_basis()) {
            let t = Instant::now();
            match run_method(m, config, &s, &nesting, None)
                .and_then(|sol| row(config, &s, n, None, &sol, None, t.elapsed().as_secs_f64()))
            {
                Ok(r) => out.rows.push(r),
                Err(e) => out.failures.push(Failure {
                    coarse_cells: n,
                    level: None,
                    method: Some(m),
                    message: e.to_string(),
                }),
            }
        }
        if !config.methods.iter().any(|m| m.uses_basis()) {
            continue;
        }
        let (levels, skipped) = effective_levels(&config.levels, n);
        out.skipped.extend(skipped);
        for level in levels {
            let t = Instant::now();
            let basis = match get_basis(config, cache_dir, &nesting, &s.velocity, level) {
                Ok((b, _, _)) => b,
                Err(e) => {
                    out.failures.push(Failure {
                        coarse_cells: n,
                        level: Some(level),
                        method: None,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let basis_seconds = t.elapsed().as_secs_f64();
            let sigma = basis.sigma();
            for &m in config.methods.iter().filter(|m| m.uses_basis()) {
                let t = Instant::now();
                match run_method(m, config, &s, &nesting, Some(&basis)).and_then(|sol| {
                    row(
                        config,
                        &s,
                        n,
                        Some(level),
                        &sol,
                        Some(sigma),
                        basis_seconds + t.elapsed().as_secs_f64(),
                    )
                }) {
                    Ok(r) => out.rows.push(r),
                    Err(e) => out.failures.push(Failure {
                        coarse_cells: n,
                        level: Some(level),
                        method: Some(m),
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    out.rates = rates(&out.rows);
    Ok(out)
}

/// Least-squares slopes per method and level against `H`.
pub fn rates(rows: &[StudyRow]) -> Vec<RateRow> {
    let keys: BTreeSet<(Method, Option<usize>)> = rows.iter().map(|r| (r.method, r.level)).collect();
    keys.into_iter()
        .map(|(method, level)| {
            let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.method == method && r.level == level).collect();
            let series = |f: fn(&ErrorReport) -> f64| {
                let pts: Vec<(f64, f64)> = sel.iter().map(|r| (1.0 / r.coarse_cells as f64, f(&r.errors))).collect();
                convergence_rate(&pts)
            };
            RateRow {
                method,
                level,
                l2: series(|e| e.l2),
                h1_semi: series(|e| e.h1_semi),
                eps_norm: series(|e| e.eps_norm),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayPoint {
    pub coarse_cells: usize,
    pub level: usize,
    pub errors: ErrorReport,
    pub sigma: f64,
}

#[derive(Clone, Debug, Default)]
pub struct DecayOutcome {
    pub points: Vec<DecayPoint>,
    pub fits: Vec<(usize, DecayFit)>,
    pub failures: Vec<Failure>,
    pub skipped: Vec<Skipped>,
}

/// ℓ-sweep of the first basis method (SLOD when none is listed) at every
/// coarse size, fitted in `|·|_V`.
pub fn run_decay(config: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<DecayOutcome> {
    config.validate()?;
    par::with_workers(config.workers, || {
        let s = setup(config)?;
        let method = config.methods.iter().copied().find(|m| m.uses_basis()).unwrap_or(Method::Slod);
        let mut out = DecayOutcome::default();
        for &n in &config.coarse_sizes {
            let nesting = NestingMap::new(TensorGrid::new(config.dim, n)?, *s.fine.grid())?;
            let (levels, skipped) = effective_levels(&config.levels, n);
            out.skipped.extend(skipped);
            let mut pts = Vec::new();
            for level in levels {
                let result = get_basis(config, cache_dir, &nesting, &s.velocity, level).and_then(|(b, _, _)| {
                    let sol = run_method(method, config, &s, &nesting, Some(&b))?;
                    Ok(DecayPoint {
                        coarse_cells: n,
                        level,
                        errors: error_norms(&s.fine, &s.reference, &sol.fine)?,
                        sigma: b.sigma(),
                    })
                });
                match result {
                    Ok(p) => {
                        pts.push((p.level, p.errors.h1_semi));
                        out.points.push(p);
                    }
                    Err(e) => out.failures.push(Failure {
                        coarse_cells: n,
                        level: Some(level),
                        method: Some(method),
                        message: e.to_string(),
                    }),
                }
            }
            match decay_fit(config.dim, &pts) {
                Ok(fit) => out.fits.push((n, fit)),
                Err(e) => out.failures.push(Failure {
                    coarse_cells: n,
                    level: None,
                    method: Some(method),
                    message: format!("decay fit: {e}"),
                }),
            }
        }
        Ok(out)
    })
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn results_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.dim,
            num(r.epsilon),
            num(1.0 / r.coarse_cells as f64),
            num(1.0 / r.fine_cells as f64),
            opt(r.level),
            num(r.p),
            num(r.p_w),
            num(r.errors.l2),
            num(r.errors.h1_semi),
            num(r.errors.eps_norm),
            opt(r.sigma.map(num)),
            num(r.runtime_seconds),
        );
    }
    s
}

pub fn rates_csv(rates: &[RateRow]) -> String {
    let mut s = String::from("method,ell,l2_rate,h1_semi_rate,eps_norm_rate\n");
    for r in rates {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.method,
            opt(r.level),
            opt(r.l2.map(num)),
            opt(r.h1_semi.map(num)),
            opt(r.eps_norm.map(num))
        );
    }
    s
}

pub fn decay_csv(config: &ExperimentConfig, fits: &[(usize, DecayFit)]) -> String {
    let mut s = String::from("dim,epsilon,H,C1,C2,exponent,fit_residual,non_decaying\n");
    for (n, f) in fits {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            config.dim,
            num(config.epsilon),
            num(1.0 / *n as f64),
            num(f.c1),
            num(f.c2),
            num(f.exponent),
            num(f.fit_residual),
            f.non_decaying
        );
    }
    s
}

pub fn decay_points_csv(points: &[DecayPoint]) -> String {
    let mut s = String::from("H,ell,l2_error,h1_semi_error,eps_norm_error,sigma\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            num(1.0 / p.coarse_cells as f64),
            p.level,
            num(p.errors.l2),
            num(p.errors.h1_semi),
            num(p.errors.eps_norm),
            num(p.sigma)
        );
    }
    s
}

/// `node,x,y,z,value` over all fine nodes; boundary values are zero.
pub fn solution_csv(fine: &FineSystem, free_values: &[f64]) -> String {
    let full = fine.to_full(free_values);
    let grid = fine.grid();
    let mut s = String::from("node,x,y,z,value\n");
    for (n, v) in full.iter().enumerate() {
        let x = grid.node_point(n);
        let _ = writeln!(s, "{n},{},{},{},{}", num(x[0]), num(x[1]), num(x[2]), num(*v));
    }
    s
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    config: &'a ExperimentConfig,
    artifacts: Vec<Artifact>,
    failures: &'a [Failure],
    skipped: &'a [Skipped],
}

/// Collects emitted files and writes the manifest last.
pub struct Emitter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, content)?;
        self.record(name, content.as_bytes());
        Ok(path)
    }

    /// Registers a file written elsewhere (e.g. a cache file).
    pub fn record_file(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let name = path.strip_prefix(&self.dir).unwrap_or(path).to_string_lossy().into_owned();
        self.record(&name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.artifacts.retain(|a| a.file != name);
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect(),
            bytes: bytes.len(),
        });
    }

    pub fn finish(self, command: &str, config: &ExperimentConfig, failures: &[Failure], skipped: &[Skipped]) -> Result<PathBuf> {
        let manifest = Manifest {
            command,
            config_hash: config.hash(),
            config,
            artifacts: self.artifacts,
            failures,
            skipped,
        };
        let path = self.dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Cache(e.to_string()))?;
        fs::write(&path, json)?;
        Ok(path)
    }
}

/// Overall result of a command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    Partial,
}

impl RunStatus {
    pub fn from_failures(failures: &[Failure]) -> Self {
        if failures.is_empty() {
            RunStatus::Success
        } else {
            RunStatus::Partial
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Partial => 2,
        }
    }
}

fn cache_dir(config: &ExperimentConfig) -> Option<PathBuf> {
    config.cache.then(|| config.output_dir.join("cache"))
}

pub fn study(config: &ExperimentConfig) -> Result<RunStatus> {
    let out = run_study(config, cache_dir(config).as_deref())?;
    let mut e = Emitter::new(&config.output_dir)?;
    e.write("results.csv", &results_csv(&out.rows))?;
    e.write("rates.csv", &rates_csv(&out.rates))?;
    e.write("config.toml", &config.to_toml())?;
    e.finish("study", config, &out.failures, &out.skipped)?;
    Ok(RunStatus::from_failures(&out.failures))
}

pub fn decay(config: &ExperimentConfig) -> Result<RunStatus> {
    let out = run_decay(config, cache_dir(config).as_deref())?;
    let mut e = Emitter::new(&config.output_dir)?;
    e.write("decay.csv", &decay_csv(config, &out.fits))?;
    e.write("decay_points.csv", &decay_points_csv(&out.points))?;
    e.write("config.toml", &config.to_toml())?;
    e.finish("decay", config, &out.failures, &out.skipped)?;
    Ok(RunStatus::from_failures(&out.failures))
}

/// Builds (or loads) the basis of every (H, ℓ) and emits its σ, Riesz and
/// spectrum tables. With `tables = false` only the bases are produced.
fn bases(config: &ExperimentConfig, command: &str, tables: bool) -> Result<RunStatus> {
    config.validate()?;
    par::with_workers(config.workers, || {
        let velocity = config.velocity_field()?;
        let fine = TensorGrid::new(config.dim, config.fine_size)?;
        let dir = cache_dir(config);
        let mut e = Emitter::new(&config.output_dir)?;
        let (mut failures, mut skipped) = (Vec::new(), Vec::new());
        let mut summary = String::from("H,ell,entries,sigma,flagged_entries,riesz_ratio,cache\n");
        let mut sigma = String::from("H,ell,center,sigma,candidates,measured_nodes,degenerate,zero_velocity,covers_domain\n");
        let mut riesz = String::from("H,ell,sigma_min,sigma_max,ratio,flagged\n");
        let mut eigen = String::from("H,ell,center,index,lambda,ratio,selected\n");
        for &n in &config.coarse_sizes {
            let nesting = NestingMap::new(TensorGrid::new(config.dim, n)?, fine)?;
            let (levels, skip) = effective_levels(&config.levels, n);
            skipped.extend(skip);
            for level in levels {
                let hh = num(1.0 / n as f64);
                let built = get_basis(config, dir.as_deref(), &nesting, &velocity, level)
                    .and_then(|(b, outcome, path)| Ok((riesz_report(&b)?, b, outcome, path)));
                let (r, b, outcome, path) = match built {
                    Ok(x) => x,
                    Err(err) => {
                        failures.push(Failure {
                            coarse_cells: n,
                            level: Some(level),
                            method: None,
                            message: err.to_string(),
                        });
                        continue;
                    }
                };
                if let Some(p) = path {
                    e.record_file(&p)?;
                }
                let outcome = match outcome {
                    CacheOutcome::Hit => "hit",
                    CacheOutcome::Built if dir.is_some() => "built",
                    CacheOutcome::Built => "off",
                };
                let _ = writeln!(
                    summary,
                    "{hh},{level},{},{},{},{},{outcome}",
                    b.entries.len(),
                    num(b.sigma()),
                    b.flagged().len(),
                    num(r.ratio)
                );
                let _ = writeln!(riesz, "{hh},{level},{},{},{},{}", num(r.sigma_min), num(r.sigma_max), num(r.ratio), r.flagged);
                for en in &b.entries {
                    let _ = writeln!(
                        sigma,
                        "{hh},{level},{},{},{},{},{},{},{}",
                        en.center,
                        num(en.sigma),
                        en.candidates.len(),
                        en.measured_nodes,
                        en.flags.degenerate_spectrum,
                        en.flags.zero_velocity,
                        en.flags.covers_domain
                    );
                }
                for row in eigen_decay_report(&b.entries) {
                    let _ = writeln!(
                        eigen,
                        "{hh},{level},{},{},{},{},{}",
                        row.center,
                        row.index,
                        num(row.lambda),
                        num(row.ratio),
                        row.selected
                    );
                }
            }
        }
        e.write("basis.csv", &summary)?;
        if tables {
            e.write("sigma.csv", &sigma)?;
            e.write("riesz.csv", &riesz)?;
            e.write("eigen.csv", &eigen)?;
        }
        e.write("config.toml", &config.to_toml())?;
        e.finish(command, config, &failures, &skipped)?;
        Ok(RunStatus::from_failures(&failures))
    })
}

pub fn basis(config: &ExperimentConfig) -> Result<RunStatus> {
    bases(config, "basis", false)
}

pub fn report(config: &ExperimentConfig) -> Result<RunStatus> {
    bases(config, "report", true)
}

/// One method at one (H, ℓ); writes the solution and its error row.
pub fn solve(config: &ExperimentConfig, method: Method, coarse_cells: usize, level: usize) -> Result<RunStatus> {
    let mut config = config.clone();
    config.coarse_sizes = vec![coarse_cells];
    config.levels = vec![level];
    config.methods = vec![method];
    config.validate()?;
    par::with_workers(config.workers, || {
        let s = setup(&config)?;
        let nesting = NestingMap::new(TensorGrid::new(config.dim, coarse_cells)?, *s.fine.grid())?;
        let t = Instant::now();
        let basis = if method.uses_basis() {
            Some(get_basis(&config, cache_dir(&config).as_deref(), &nesting, &s.velocity, level)?.0)
        } else {
            None
        };
        let sol = run_method(method, &config, &s, &nesting, basis.as_ref())?;
        let r = row(
            &config,
            &s,
            coarse_cells,
            basis.as_ref().map(|_| level),
            &sol,
            basis.as_ref().map(|b| b.sigma()),
            t.elapsed().as_secs_f64(),
        )?;
        let mut e = Emitter::new(&config.output_dir)?;
        e.write(&format!("solution_{method}.csv"), &solution_csv(&s.fine, &sol.fine))?;
        e.write("results.csv", &results_csv(std::slice::from_ref(&r)))?;
        e.write("config.toml", &config.to_toml())?;
        e.finish("solve", &config, &[], &[])?;
        log::info!(
            "{method}: l2 {:e}, h1 {:e}, eps {:e}",
            r.errors.l2,
            r.errors.h1_semi,
            r.errors.eps_norm
        );
        Ok(RunStatus::Success)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::SourceSpec;
    use crate::velocity::VelocitySpec;

    fn tiny(dir: &Path) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
dim = 2
epsilon = 0.125
coarse_sizes = [2, 4]
fine_size = 16
levels = [1, 2, 5]
methods = ["slod", "fem", "supg", "reference"]
output_dir = "{}"

[velocity]
kind = "angle"
angle = 0.7

[f]
kind = "one"
"#,
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn levels_beyond_full_patches_are_skipped() {
        let (run, skip) = effective_levels(&[1, 2, 3, 4], 3);
        assert_eq!(run, vec![1, 2]);
        assert_eq!(skip.len(), 2);
        let (run, _) = effective_levels(&[1, 2], 1);
        assert_eq!(run, vec![1]);
    }

    #[test]
    fn study_writes_tables_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny(dir.path());
        assert_eq!(study(&config).unwrap(), RunStatus::Success);
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(RESULTS_HEADER));
        let rows: Vec<&str> = lines.collect();
        // per H: fem, supg, reference, then slod per run level
        // H = 1/2 runs level 1 only, H = 1/4 runs 1, 2 and 5 (capped to 3)
        assert_eq!(rows.len(), 3 + 1 + 3 + 3);
        assert!(rows.iter().any(|r| r.starts_with("reference,2,") && r.contains(",0e0,0e0,0e0,")));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        let files: Vec<&str> = manifest["artifacts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a["file"].as_str().unwrap())
            .collect();
        assert_eq!(files, vec!["results.csv", "rates.csv", "config.toml"]);
        assert_eq!(manifest["skipped"].as_array().unwrap().len(), 2);
        let digest: String = Sha256::digest(csv.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(manifest["artifacts"][0]["sha256"], digest.as_str());
    }

    #[test]
    fn solution_dump_has_every_node() {
        let grid = TensorGrid::new(1, 4).unwrap();
        let fine = FineSystem::new(grid, 1.0, &VelocityField::from_spec(&VelocitySpec::Constant { value: vec![0.0] }, 1).unwrap()).unwrap();
        let s = solve_reference(&fine, &Source::from_spec(&SourceSpec::One, 1).unwrap(), &Default::default()).unwrap();
        let csv = solution_csv(&fine, &s.fine);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().ends_with(",0e0"));
    }
}
