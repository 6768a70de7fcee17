//! Binary cache of operators, bases and the lifting matrix.
//!
//! Layout (little endian): `PFSI`, format version, `nx nz m n`, the operator matrices in
//! CSR form, then `STOK`, `LIFT` and `PLAT` sections, closed by a SHA-256 of everything before it.

use std::fs;
use std::path::Path;

use log::info;
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use sha2::{Digest, Sha256};

use crate::discretization::{build, DiscreteOperators};
use crate::error::{FsiError, Result};
use crate::galerkin::Model;
use crate::plate_basis::{solve_plate_eigen, PlateBasis, PlateMode};
use crate::stokes_basis::{build_lifting, solve_stokes_eigen, LiftingOperator, StokesBasis, StokesMode};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PFSI";

/// Grid and basis sizes a cache was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub nx: usize,
    pub nz: usize,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Built,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        for &x in v {
            self.usize(x);
        }
    }
    fn tag(&mut self, t: &[u8; 4]) {
        self.0.extend_from_slice(t);
    }
    fn csr(&mut self, name: &str, a: &CsrMatrix<f64>) {
        self.usize(name.len());
        self.0.extend_from_slice(name.as_bytes());
        self.usize(a.nrows());
        self.usize(a.ncols());
        self.usizes(a.row_offsets());
        self.usizes(a.col_indices());
        self.f64s(a.values());
    }
    fn dense(&mut self, a: &DMatrix<f64>) {
        self.usize(a.nrows());
        self.usize(a.ncols());
        self.f64s(a.as_slice());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated() -> FsiError {
    FsiError::Cache("truncated cache file".into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).ok_or_else(truncated)?;
        let s = self.buf.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| FsiError::Cache("size overflow".into()))
    }
    fn len(&mut self, width: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(width) > self.buf.len() - self.pos {
            return Err(truncated());
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n)
            .map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap())))
            .collect()
    }
    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }
    fn tag(&mut self, t: &[u8; 4]) -> Result<()> {
        if self.take(4)? != t {
            return Err(FsiError::Cache(format!(
                "expected section {}",
                String::from_utf8_lossy(t)
            )));
        }
        Ok(())
    }
    fn csr(&mut self) -> Result<(String, CsrMatrix<f64>)> {
        let k = self.len(1)?;
        let name = String::from_utf8(self.take(k)?.to_vec())
            .map_err(|_| FsiError::Cache("matrix name is not UTF-8".into()))?;
        let (r, c) = (self.usize()?, self.usize()?);
        let offsets = self.usizes()?;
        let cols = self.usizes()?;
        let vals = self.f64s()?;
        let a = CsrMatrix::try_from_csr_data(r, c, offsets, cols, vals)
            .map_err(|e| FsiError::Cache(format!("matrix {name}: {e}")))?;
        Ok((name, a))
    }
    fn dense(&mut self) -> Result<DMatrix<f64>> {
        let (r, c) = (self.usize()?, self.usize()?);
        let v = self.f64s()?;
        if v.len() != r * c {
            return Err(FsiError::Cache("dense matrix size mismatch".into()));
        }
        Ok(DMatrix::from_vec(r, c, v))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialize a model; returns the bytes and the hex checksum stored in the trailer.
pub fn encode(model: &Model) -> (Vec<u8>, String) {
    let mut w = Writer(Vec::new());
    w.tag(MAGIC);
    w.u32(FORMAT_VERSION);
    for v in [model.ops.grid.nx, model.ops.grid.nz, model.stokes.len(), model.plate.len()] {
        w.usize(v);
    }
    let mats = model.ops.named_matrices();
    w.u32(mats.len() as u32);
    for (name, a) in &mats {
        w.csr(name, a);
    }
    w.tag(b"STOK");
    w.usize(model.stokes.len());
    for mode in &model.stokes.modes {
        w.f64s(&[mode.lambda, mode.residual]);
        w.f64s(mode.e.as_slice());
        w.f64s(mode.p.as_slice());
    }
    w.tag(b"LIFT");
    w.dense(&model.lift.nmat);
    w.tag(b"PLAT");
    w.usize(model.plate.len());
    for mode in &model.plate.modes {
        w.f64s(&[mode.kappa, mode.residual]);
        w.f64s(mode.g.as_slice());
    }
    w.dense(&model.plate.projector);
    let digest = Sha256::digest(&w.0);
    let sum = hex(&digest);
    w.0.extend_from_slice(&digest);
    (w.0, sum)
}

/// Parse and verify a cache for `key`. Operators are rebuilt and must match the stored ones bitwise.
pub fn decode(bytes: &[u8], key: CacheKey) -> Result<(Model, String)> {
    if bytes.len() < 36 {
        return Err(truncated());
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(FsiError::Cache("checksum mismatch".into()));
    }
    let sum = hex(&digest);
    let mut r = Reader { buf: body, pos: 0 };
    r.tag(MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(FsiError::StaleCache {
            field: "version",
            cached: version as u64,
            requested: FORMAT_VERSION as u64,
        });
    }
    let fields = [("nx", key.nx), ("nz", key.nz), ("m", key.m), ("n", key.n)];
    for (field, requested) in fields {
        let cached = r.u64()?;
        if cached != requested as u64 {
            return Err(FsiError::StaleCache {
                field,
                cached,
                requested: requested as u64,
            });
        }
    }
    let ops: DiscreteOperators = build(key.nx, key.nz)?;
    let fresh = ops.named_matrices();
    let count = r.u32()? as usize;
    if count != fresh.len() {
        return Err(FsiError::Cache("operator set differs from this build".into()));
    }
    for (name, a) in &fresh {
        let (stored_name, stored) = r.csr()?;
        if stored_name != *name || stored != *a {
            return Err(FsiError::Cache(format!("operator `{name}` differs from this build")));
        }
    }

    r.tag(b"STOK")?;
    let nm = r.usize()?;
    let mut modes = Vec::with_capacity(nm);
    for _ in 0..nm {
        let head = r.f64s()?;
        let e = DVector::from_vec(r.f64s()?);
        let p = DVector::from_vec(r.f64s()?);
        if head.len() != 2 || e.len() != ops.grid.n_velocity() {
            return Err(FsiError::Cache("malformed Stokes mode".into()));
        }
        modes.push(StokesMode {
            lambda: head[0],
            residual: head[1],
            e,
            p,
        });
    }
    let stokes = StokesBasis { modes };

    r.tag(b"LIFT")?;
    let nmat = r.dense()?;
    if nmat.shape() != (ops.grid.n_velocity(), ops.grid.n_beam()) {
        return Err(FsiError::Cache("malformed lifting matrix".into()));
    }
    let lift = LiftingOperator { nmat };

    r.tag(b"PLAT")?;
    let nn = r.usize()?;
    let mut pmodes = Vec::with_capacity(nn);
    for _ in 0..nn {
        let head = r.f64s()?;
        let g = DVector::from_vec(r.f64s()?);
        if head.len() != 2 || g.len() != ops.grid.n_beam() {
            return Err(FsiError::Cache("malformed plate mode".into()));
        }
        pmodes.push(PlateMode {
            kappa: head[0],
            residual: head[1],
            g,
        });
    }
    let projector = r.dense()?;
    if r.pos != body.len() {
        return Err(FsiError::Cache("trailing bytes before checksum".into()));
    }
    let plate = PlateBasis {
        modes: pmodes,
        projector,
    };
    Ok((Model::from_parts(ops, stokes, plate, lift)?, sum))
}

pub fn build_model(key: CacheKey) -> Result<Model> {
    let ops = build(key.nx, key.nz)?;
    let stokes = solve_stokes_eigen(&ops, key.m)?;
    let plate = solve_plate_eigen(&ops, key.n)?;
    let lift = build_lifting(&ops)?;
    Model::from_parts(ops, stokes, plate, lift)
}

pub fn write(path: &Path, model: &Model) -> Result<String> {
    let (bytes, sum) = encode(model);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(sum)
}

pub fn read(path: &Path, key: CacheKey) -> Result<(Model, String)> {
    decode(&fs::read(path)?, key)
}

/// Load the cache at `path` when present, otherwise build and write it.
pub fn load_or_build(path: &Path, key: CacheKey) -> Result<(Model, CacheStatus, String)> {
    if path.exists() {
        let (model, sum) = read(path, key)?;
        info!("cache hit {} (sha256 {sum})", path.display());
        return Ok((model, CacheStatus::Hit, sum));
    }
    let model = build_model(key)?;
    let sum = write(path, &model)?;
    info!("cache built {} (sha256 {sum})", path.display());
    Ok((model, CacheStatus::Built, sum))
}
