//! Binary checkpoint: magic, format version, config JSON, then each named
//! tensor as shape plus little-endian f64 values.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::config::SolverConfig;
use crate::model::SolverModel;
use crate::params::ParameterStore;
use crate::ModelError;

pub const MAGIC: &[u8; 8] = b"MWPSOLV\0";
pub const VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn to_bytes(model: &SolverModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config).expect("config serializes");
    put_u64(&mut out, cfg.len() as u64);
    out.extend_from_slice(&cfg);
    let p = &model.params;
    put_u64(&mut out, p.len() as u64);
    for i in 0..p.len() {
        let name = p.name(i).as_bytes();
        put_u64(&mut out, name.len() as u64);
        out.extend_from_slice(name);
        let v = p.value(i);
        put_u64(&mut out, v.nrows() as u64);
        put_u64(&mut out, v.ncols() as u64);
        for x in v.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.buf.len() < n {
            return Err(ModelError::Checkpoint("truncated file".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, ModelError> {
        let n = self.u64()?;
        if n > self.buf.len() as u64 * 8 + 8 {
            return Err(ModelError::Checkpoint(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<SolverModel, ModelError> {
    let mut r = Reader { buf: bytes };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(ModelError::Checkpoint("not a solver checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.len()?;
    let config: SolverConfig =
        serde_json::from_slice(r.take(n)?).map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
    let count = r.len()?;
    let mut params = ParameterStore::new();
    for _ in 0..count {
        let n = r.len()?;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| ModelError::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let (rows, cols) = (r.len()?, r.len()?);
        let raw = r.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if params.id(&name).is_some() {
            return Err(ModelError::Checkpoint(format!("duplicate parameter {name}")));
        }
        params.add(&name, Array2::from_shape_vec((rows, cols), data).unwrap());
    }
    if !r.buf.is_empty() {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }
    SolverModel::from_parts(config, params)
}

pub fn save(model: &SolverModel, path: &Path) -> Result<(), ModelError> {
    let io = |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&to_bytes(model)).map_err(io)
}

pub fn load(path: &Path) -> Result<SolverModel, ModelError> {
    let io = |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io)?
        .read_to_end(&mut bytes)
        .map_err(io)?;
    from_bytes(&bytes)
}
