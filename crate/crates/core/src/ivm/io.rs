//! Binary model files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "IVM1"
//! u32 K, u32 S, u32 F
//! f64 sigma, f64 C
//! f64 alpha[K][S + 1]      bias first in each row
//! f64 import_points[S][F]  raw feature values
//! f64 mean[F], f64 scale[F]
//! u32 class_ids[K], u32 total_classes
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{IvmModel, Standardizer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IVM1";

pub fn write_model(model: &IvmModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [model.class_ids.len(), model.num_import(), model.f] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [model.sigma, model.c]
        .iter()
        .chain(&model.alpha)
        .chain(&model.import_points)
        .chain(&model.standardizer.mean)
        .chain(&model.standardizer.scale)
    {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &c in &model.class_ids {
        buf.extend_from_slice(&u32::from(c).to_le_bytes());
    }
    buf.extend_from_slice(&(model.total_classes as u32).to_le_bytes());
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::format(self.path, "model file is truncated"));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.path, "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn read_model(path: &Path) -> Result<IvmModel> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { buf: &buf, pos: 0, path };
    if cur.take(4)? != MAGIC {
        return Err(Error::format(path, "not an IVM1 model file"));
    }
    let (k, s, f) = (cur.u32()?, cur.u32()?, cur.u32()?);
    let head = cur.f64s(2)?;
    let alpha = cur.f64s(k * (s + 1))?;
    let points = cur.f64s(s * f)?;
    let mean = cur.f64s(f)?;
    let scale = cur.f64s(f)?;
    let mut class_ids = Vec::with_capacity(k);
    for _ in 0..k {
        let c = cur.u32()?;
        class_ids.push(u16::try_from(c).map_err(|_| Error::format(path, "class id out of range"))?);
    }
    let total = cur.u32()?;
    if cur.pos != buf.len() {
        return Err(Error::format(path, "trailing bytes after model"));
    }
    IvmModel::from_parts(f, points, alpha, head[0], head[1], Standardizer { mean, scale }, class_ids, total)
        .map_err(|e| Error::format(path, e.to_string()))
}
