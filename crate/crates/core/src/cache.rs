//! On-disk cache of localized bases.
//!
//! Layout (little endian): magic, format version, length-prefixed JSON key,
//! entry count, the entries, and a SHA-256 digest of everything before it.
//! Floats are stored as raw bits, so a loaded basis is bitwise identical to
//! the one that was saved.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{build_basis, BasisOptions, BasisParams, BoundaryMassKind, EntryFlags, SlodBasis, SlodBasisEntry};
use crate::error::{Error, Result};
use crate::mesh::{Multi, NestingMap, TensorGrid, MAX_DIM};
use crate::velocity::VelocityField;

const MAGIC: &[u8; 8] = b"SLODBAS\0";
const VERSION: u32 = 1;

/// Everything a basis depends on. Floats are kept as bit patterns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub dim: usize,
    pub coarse_cells: usize,
    pub fine_cells: usize,
    pub epsilon_bits: u64,
    pub velocity: String,
    pub level: usize,
    pub p_bits: u64,
    pub p_w_bits: u64,
    pub weight_floor_bits: u64,
    pub boundary_mass: BoundaryMassKind,
}

impl CacheKey {
    pub fn new(
        nesting: &NestingMap,
        epsilon: f64,
        velocity: &VelocityField,
        params: &BasisParams,
        boundary_mass: BoundaryMassKind,
    ) -> Self {
        CacheKey {
            dim: nesting.coarse().dim(),
            coarse_cells: nesting.coarse().cells_per_axis(),
            fine_cells: nesting.fine().cells_per_axis(),
            epsilon_bits: epsilon.to_bits(),
            velocity: velocity.descriptor(),
            level: params.level,
            p_bits: params.p.to_bits(),
            p_w_bits: params.p_w.to_bits(),
            weight_floor_bits: params.weight_floor.to_bits(),
            boundary_mass,
        }
    }

    pub fn of(basis: &SlodBasis) -> Self {
        CacheKey {
            dim: basis.coarse.dim(),
            coarse_cells: basis.coarse.cells_per_axis(),
            fine_cells: basis.fine.cells_per_axis(),
            epsilon_bits: basis.epsilon.to_bits(),
            velocity: basis.velocity.clone(),
            level: basis.params.level,
            p_bits: basis.params.p.to_bits(),
            p_w_bits: basis.params.p_w.to_bits(),
            weight_floor_bits: basis.params.weight_floor.to_bits(),
            boundary_mass: basis.boundary_mass,
        }
    }

    fn json(&self) -> String {
        serde_json::to_string(self).expect("cache keys serialize")
    }

    /// File name derived from a hash of the key.
    pub fn file_name(&self) -> String {
        let digest = Sha256::digest(self.json().as_bytes());
        let hex: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
        format!("basis-{hex}.bin")
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bool(&mut self, v: bool) {
        self.0.push(v as u8);
    }
    fn multi(&mut self, m: &Multi) {
        m.iter().for_each(|&v| self.usize(v));
    }
    fn floats(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn indices(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Cache("file is truncated".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Cache("index out of range".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Cache(format!("invalid flag byte {b}"))),
        }
    }
    fn multi(&mut self) -> Result<Multi> {
        let mut m = [0; MAX_DIM];
        for v in &mut m {
            *v = self.usize()?;
        }
        Ok(m)
    }
    fn len(&mut self, width: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(width) > self.data.len() - self.pos {
            return Err(Error::Cache("length prefix exceeds file size".into()));
        }
        Ok(n)
    }
    fn floats(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }
}

pub fn encode(basis: &SlodBasis) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    let key = CacheKey::of(basis).json();
    w.usize(key.len());
    w.0.extend_from_slice(key.as_bytes());
    w.usize(basis.entries.len());
    for e in &basis.entries {
        w.usize(e.center);
        w.usize(e.level);
        w.multi(&e.coarse_range.0);
        w.multi(&e.coarse_range.1);
        w.indices(&e.elements);
        w.floats(&e.source);
        w.multi(&e.fine_lo);
        w.multi(&e.fine_cells);
        w.floats(&e.phi);
        w.floats(&e.spectrum);
        w.indices(&e.candidates);
        w.f64(e.sigma);
        w.bool(e.flags.degenerate_spectrum);
        w.bool(e.flags.zero_velocity);
        w.bool(e.flags.covers_domain);
        w.usize(e.measured_nodes);
        w.f64(e.solve_residual);
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

/// Decodes a cached basis and checks it against `expected`.
pub fn decode(data: &[u8], expected: &CacheKey) -> Result<SlodBasis> {
    if data.len() < MAGIC.len() + 4 + 32 || &data[..MAGIC.len()] != MAGIC {
        return Err(Error::Cache("not a basis cache file".into()));
    }
    let (body, digest) = data.split_at(data.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Cache("checksum mismatch".into()));
    }
    let mut r = Reader {
        data: body,
        pos: MAGIC.len(),
    };
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Cache(format!("format version {version}, expected {VERSION}")));
    }
    let klen = r.len(1)?;
    let key: CacheKey = serde_json::from_slice(r.take(klen)?).map_err(|e| Error::Cache(format!("key: {e}")))?;
    if key != *expected {
        return Err(Error::CacheKeyMismatch(format!(
            "cached {}, requested {}",
            key.json(),
            expected.json()
        )));
    }
    let coarse = TensorGrid::new(key.dim, key.coarse_cells)?;
    let fine = TensorGrid::new(key.dim, key.fine_cells)?;
    let count = r.len(1)?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        entries.push(SlodBasisEntry {
            center: r.usize()?,
            level: r.usize()?,
            coarse_range: (r.multi()?, r.multi()?),
            elements: r.indices()?,
            source: r.floats()?,
            fine_lo: r.multi()?,
            fine_cells: r.multi()?,
            phi: r.floats()?,
            spectrum: r.floats()?,
            candidates: r.indices()?,
            sigma: r.f64()?,
            flags: EntryFlags {
                degenerate_spectrum: r.bool()?,
                zero_velocity: r.bool()?,
                covers_domain: r.bool()?,
            },
            measured_nodes: r.usize()?,
            solve_residual: r.f64()?,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Cache("trailing bytes after the last entry".into()));
    }
    if entries.len() != coarse.element_count() || entries.iter().enumerate().any(|(i, e)| e.center != i) {
        return Err(Error::Cache("entries do not match the coarse grid".into()));
    }
    Ok(SlodBasis {
        coarse,
        fine,
        epsilon: f64::from_bits(key.epsilon_bits),
        velocity: key.velocity,
        params: BasisParams {
            level: key.level,
            p: f64::from_bits(key.p_bits),
            p_w: f64::from_bits(key.p_w_bits),
            weight_floor: f64::from_bits(key.weight_floor_bits),
        },
        boundary_mass: key.boundary_mass,
        entries,
    })
}

pub fn save(path: &Path, basis: &SlodBasis) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    // write then rename, so readers never see a partial file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(basis))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path, expected: &CacheKey) -> Result<SlodBasis> {
    decode(&fs::read(path)?, expected)
}

/// Where a basis came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Built,
}

/// Loads the basis from `dir` when a matching file exists, otherwise builds
/// and stores it. Unreadable or mismatching files are rebuilt.
pub fn load_or_build(
    dir: &Path,
    nesting: &NestingMap,
    epsilon: f64,
    velocity: &VelocityField,
    params: &BasisParams,
    options: &BasisOptions,
) -> Result<(SlodBasis, CacheOutcome, PathBuf)> {
    let key = CacheKey::new(nesting, epsilon, velocity, params, options.boundary_mass);
    let path = dir.join(key.file_name());
    if path.exists() {
        match load(&path, &key) {
            Ok(basis) => return Ok((basis, CacheOutcome::Hit, path)),
            Err(e) => log::warn!("rebuilding {}: {e}", path.display()),
        }
    }
    let basis = build_basis(nesting, epsilon, velocity, params, options)?;
    save(&path, &basis)?;
    Ok((basis, CacheOutcome::Built, path))
}
