//! Flat raster files.
//!
//! A 64-byte little-endian header followed by the row-major payload
//! `[t][row][col][channel]`:
//!
//! | offset | type     | field                      |
//! |--------|----------|----------------------------|
//! | 0      | [u8; 4]  | magic `STMR`               |
//! | 4      | u16      | version (1)                |
//! | 6      | u32 x 4  | T, H, W, C                 |
//! | 22     | u16      | dtype: 1 f32, 2 f64, 3 u16 |
//! | 24     | zeros    | reserved up to byte 64     |
//!
//! Dates live next to the raster in `<name>.dates`, one ISO date per line.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::model::{FeatureStack, LabelStack, ProbabilityStack, Shape};

const MAGIC: &[u8; 4] = b"STMR";
const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U16(Vec<u16>),
}

impl RasterData {
    fn code(&self) -> u16 {
        match self {
            RasterData::F32(_) => 1,
            RasterData::F64(_) => 2,
            RasterData::U16(_) => 3,
        }
    }

    fn len(&self) -> usize {
        match self {
            RasterData::F32(v) => v.len(),
            RasterData::F64(v) => v.len(),
            RasterData::U16(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub shape: Shape,
    pub channels: usize,
    pub data: RasterData,
    pub dates: Vec<NaiveDate>,
}

pub fn dates_path(path: &Path) -> PathBuf {
    path.with_extension("dates")
}

pub fn write_raster(path: &Path, r: &Raster) -> Result<()> {
    let s = r.shape;
    if r.data.len() != s.len() * r.channels {
        return Err(Error::data("raster payload does not match its dimensions"));
    }
    if !r.dates.is_empty() && r.dates.len() != s.t {
        return Err(Error::data("raster needs one date per layer"));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + r.data.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for d in [s.t, s.h, s.w, r.channels] {
        let d = u32::try_from(d).map_err(|_| Error::data("raster dimension exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&r.data.code().to_le_bytes());
    buf.resize(HEADER_LEN, 0);
    match &r.data {
        RasterData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        RasterData::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        RasterData::U16(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let dp = dates_path(path);
    let text: String = r.dates.iter().map(|d| format!("{}\n", d.format("%Y-%m-%d"))).collect();
    std::fs::write(&dp, text).map_err(|e| Error::io(&dp, e))
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < HEADER_LEN || &buf[..4] != MAGIC {
        return Err(Error::format(path, "not an STMR raster"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([buf[o], buf[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes")) as usize;
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported raster version {version}")));
    }
    let (t, h, w, c) = (u32_at(6), u32_at(10), u32_at(14), u32_at(18));
    let n = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::format(path, "raster dimensions overflow"))?;
    let payload = &buf[HEADER_LEN..];
    let width = match u16_at(22) {
        1 => 4,
        2 => 8,
        3 => 2,
        d => return Err(Error::format(path, format!("unknown dtype code {d}"))),
    };
    if payload.len() != n * width {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, expected {}", payload.len(), n * width),
        ));
    }
    let data = match u16_at(22) {
        1 => RasterData::F32(payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
        2 => RasterData::F64(payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()),
        _ => RasterData::U16(payload.chunks_exact(2).map(|b| u16::from_le_bytes(b.try_into().unwrap())).collect()),
    };
    let dp = dates_path(path);
    let dates = match std::fs::read_to_string(&dp) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                NaiveDate::parse_from_str(l.trim(), "%Y-%m-%d")
                    .map_err(|e| Error::format(&dp, format!("bad date '{l}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&dp, e)),
    };
    if !dates.is_empty() && dates.len() != t {
        return Err(Error::format(&dp, format!("{} dates for {t} layers", dates.len())));
    }
    Ok(Raster {
        shape: Shape::new(t, h, w),
        channels: c,
        data,
        dates,
    })
}

pub fn write_features(path: &Path, f: &FeatureStack) -> Result<()> {
    write_raster(
        path,
        &Raster {
            shape: f.shape(),
            channels: f.num_features(),
            data: RasterData::F64(f.values().to_vec()),
            dates: f.dates().to_vec(),
        },
    )
}

pub fn read_features(path: &Path) -> Result<FeatureStack> {
    let r = read_raster(path)?;
    let values = match r.data {
        RasterData::F64(v) => v,
        RasterData::F32(v) => v.into_iter().map(f64::from).collect(),
        RasterData::U16(_) => return Err(Error::format(path, "feature raster must hold floats")),
    };
    FeatureStack::new(r.shape, r.channels, values, r.dates).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_probabilities(path: &Path, p: &ProbabilityStack, dates: &[NaiveDate]) -> Result<()> {
    write_raster(
        path,
        &Raster {
            shape: p.shape(),
            channels: p.num_classes(),
            data: RasterData::F64(p.values().to_vec()),
            dates: dates.to_vec(),
        },
    )
}

pub fn read_probabilities(path: &Path) -> Result<(ProbabilityStack, Vec<NaiveDate>)> {
    let r = read_raster(path)?;
    let RasterData::F64(values) = r.data else {
        return Err(Error::format(path, "probability raster must be f64"));
    };
    let p = ProbabilityStack::new(r.shape, r.channels, values).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((p, r.dates))
}

pub fn write_labels(path: &Path, l: &LabelStack, dates: &[NaiveDate]) -> Result<()> {
    write_raster(
        path,
        &Raster {
            shape: l.shape(),
            channels: 1,
            data: RasterData::U16(l.values().to_vec()),
            dates: dates.to_vec(),
        },
    )
}

pub fn read_labels(path: &Path, k: usize) -> Result<(LabelStack, Vec<NaiveDate>)> {
    let r = read_raster(path)?;
    let RasterData::U16(values) = r.data else {
        return Err(Error::format(path, "label raster must be u16"));
    };
    if r.channels != 1 {
        return Err(Error::format(path, "label raster must have one channel"));
    }
    let l = LabelStack::new(r.shape, k, values).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((l, r.dates))
}
