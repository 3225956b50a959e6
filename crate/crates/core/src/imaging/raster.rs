//! Binary raster format.
//!
//! ```text
//! LDK1 <tag> <width> <height> <channels>\n
//! <width * height * channels little-endian f32, row-major, channels interleaved>
//! ```
//!
//! | tag | type          | channels | invalid pixel encoding |
//! |-----|---------------|----------|------------------------|
//! | IMG | [`Image`]     | 3        | n/a                    |
//! | DEP | [`DepthMap`]  | 1        | `0.0`                  |
//! | ALB | [`AlbedoMap`] | 2        | n/a                    |
//! | NRM | [`NormalMap`] | 3        | `(0, 0, 0)`            |
//! | VAR | [`ScalarField`] | 1      | `-1.0`                 |
//!
//! Values are stored as `f32`, so writing an `f64` field rounds each value to
//! the nearest `f32`. Reading then writing is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{AlbedoMap, DepthMap, Image, NormalMap, ScalarField};
use crate::error::{Error, Result};

const MAGIC: &str = "LDK1";

/// A field type with a raster encoding.
pub trait Raster: Sized {
    const TAG: &'static str;
    const CHANNELS: usize;

    fn dims(&self) -> (usize, usize);
    fn encode(&self) -> Result<Vec<f32>>;
    fn decode(width: usize, height: usize, values: &[f32]) -> Result<Self>;
}

impl Raster for Image {
    const TAG: &'static str = "IMG";
    const CHANNELS: usize = 3;

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn encode(&self) -> Result<Vec<f32>> {
        self.validate()?;
        Ok(self.data.iter().flat_map(|p| p.map(|c| c as f32)).collect())
    }

    fn decode(width: usize, height: usize, values: &[f32]) -> Result<Self> {
        let data = values.chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]).collect();
        Image::from_data(width, height, data).map_err(|e| Error::format(e.to_string()))
    }
}

impl Raster for DepthMap {
    const TAG: &'static str = "DEP";
    const CHANNELS: usize = 1;

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn encode(&self) -> Result<Vec<f32>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.data.len());
        for (&d, &ok) in self.data.iter().zip(&self.valid) {
            if ok {
                let v = d as f32;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(format!("depth {d} not representable as positive f32")));
                }
                out.push(v);
            } else {
                out.push(0.0);
            }
        }
        Ok(out)
    }

    fn decode(width: usize, height: usize, values: &[f32]) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len());
        let mut valid = Vec::with_capacity(values.len());
        for &v in values {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::format(format!("invalid depth value {v}")));
            }
            data.push(v as f64);
            valid.push(v > 0.0);
        }
        Ok(DepthMap { width, height, data, valid })
    }
}

impl Raster for AlbedoMap {
    const TAG: &'static str = "ALB";
    const CHANNELS: usize = 2;

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn encode(&self) -> Result<Vec<f32>> {
        self.validate()?;
        let mut out = Vec::with_capacity(2 * self.data.len());
        for &[h, s] in &self.data {
            let mut hf = h as f32;
            // hue just below 1 can round up to 1.0 in f32
            if hf >= 1.0 {
                hf = 0.0;
            }
            out.push(hf);
            out.push(s as f32);
        }
        Ok(out)
    }

    fn decode(width: usize, height: usize, values: &[f32]) -> Result<Self> {
        let data = values.chunks_exact(2).map(|c| [c[0] as f64, c[1] as f64]).collect();
        let map = AlbedoMap { width, height, data };
        map.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(map)
    }
}

impl Raster for NormalMap {
    const TAG: &'static str = "NRM";
    const CHANNELS: usize = 3;

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn encode(&self) -> Result<Vec<f32>> {
        self.validate(None)?;
        let mut out = Vec::with_capacity(3 * self.data.len());
        for (n, &ok) in self.data.iter().zip(&self.valid) {
            if ok {
                out.extend(n.iter().map(|&c| c as f32));
            } else {
                out.extend([0.0f32; 3]);
            }
        }
        Ok(out)
    }

    fn decode(width: usize, height: usize, values: &[f32]) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len() / 3);
        let mut valid = Vec::with_capacity(values.len() / 3);
        for c in values.chunks_exact(3) {
            let n = Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64);
            if !n.iter().all(|x| x.is_finite()) {
                return Err(Error::format("non-finite normal"));
            }
            let ok = n != Vector3::zeros();
            if ok && (n.norm() - 1.0).abs() > 1e-5 {
                return Err(Error::format(format!("normal not unit length: {}", n.norm())));
            }
            data.push(n);
            valid.push(ok);
        }
        Ok(NormalMap { width, height, data, valid })
    }
}

impl Raster for ScalarField {
    const TAG: &'static str = "VAR";
    const CHANNELS: usize = 1;

    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn encode(&self) -> Result<Vec<f32>> {
        self.validate()?;
        Ok(self.data.iter().zip(&self.valid).map(|(&x, &ok)| if ok { x as f32 } else { -1.0 }).collect())
    }

    fn decode(width: usize, height: usize, values: &[f32]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("non-finite scalar value"));
        }
        Ok(ScalarField {
            width,
            height,
            data: values.iter().map(|&v| if v >= 0.0 { v as f64 } else { 0.0 }).collect(),
            valid: values.iter().map(|&v| v >= 0.0).collect(),
        })
    }
}

pub fn encode_field<T: Raster>(field: &T) -> Result<Vec<u8>> {
    let (w, h) = field.dims();
    let values = field.encode()?;
    let mut out = format!("{MAGIC} {} {w} {h} {}\n", T::TAG, T::CHANNELS).into_bytes();
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_field<T: Raster>(bytes: &[u8]) -> Result<T> {
    let newline = bytes
        .iter()
        .take(128)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("missing raster header"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::format("header is not ASCII"))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 5 || parts[0] != MAGIC {
        return Err(Error::format(format!("malformed header {header:?}")));
    }
    if parts[1] != T::TAG {
        return Err(Error::format(format!("expected {} raster, found {}", T::TAG, parts[1])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::format(format!("bad header field {s:?}")));
    let (w, h, c) = (num(parts[2])?, num(parts[3])?, num(parts[4])?);
    if c != T::CHANNELS {
        return Err(Error::format(format!("{} raster must have {} channels, found {c}", T::TAG, T::CHANNELS)));
    }
    if w == 0 || h == 0 {
        return Err(Error::format("zero-sized raster"));
    }
    let count = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| Error::format("raster dimensions overflow"))?;
    let payload = &bytes[newline + 1..];
    if payload.len() != count * 4 {
        return Err(Error::format(format!("payload has {} bytes, expected {}", payload.len(), count * 4)));
    }
    let mut values = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if v.is_nan() {
            return Err(Error::format("NaN in raster payload"));
        }
        values.push(v);
    }
    T::decode(w, h, &values)
}

pub fn write_field<T: Raster>(path: impl AsRef<Path>, field: &T) -> Result<()> {
    let bytes = encode_field(field)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_field<T: Raster>(path: impl AsRef<Path>) -> Result<T> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes)
}
