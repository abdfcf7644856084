//! Shared pieces of the binary model formats (`HPMO`, `CDPM`, `BINP`).
//!
//! Every model file starts with a 4-byte magic and a little-endian `u16`
//! version, followed by model-specific `u32` dimensions and `f64` scalars,
//! then dense layers as `weights (out × in, row-major)` followed by `bias`,
//! each value a little-endian `f64`. The per-model layouts are documented on
//! the `write_to` method of each model.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::Dense;

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], version: u16) -> Result<()> {
    w.write_all(magic)?;
    w.write_u16::<LittleEndian>(version)?;
    Ok(())
}

pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], version: u16) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(truncated)?;
    if &got != magic {
        return Err(Error::MalformedHeader(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&got)
        )));
    }
    let v = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if v != version {
        return Err(Error::MalformedHeader(format!("unsupported version {v}")));
    }
    Ok(())
}

pub(crate) fn write_dim<W: Write>(w: &mut W, d: usize) -> Result<()> {
    let d = u32::try_from(d).map_err(|_| Error::MalformedHeader(format!("dimension {d} exceeds u32")))?;
    w.write_u32::<LittleEndian>(d)?;
    Ok(())
}

pub(crate) fn read_dim<R: Read>(r: &mut R) -> Result<usize> {
    Ok(r.read_u32::<LittleEndian>().map_err(truncated)? as usize)
}

pub(crate) fn write_f64<W: Write>(w: &mut W, x: f64) -> Result<()> {
    w.write_f64::<LittleEndian>(x)?;
    Ok(())
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    r.read_f64::<LittleEndian>().map_err(truncated)
}

pub(crate) fn write_u8<W: Write>(w: &mut W, x: u8) -> Result<()> {
    w.write_u8(x)?;
    Ok(())
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    r.read_u8().map_err(truncated)
}

pub(crate) fn write_dense<W: Write>(w: &mut W, layer: &Dense) -> Result<()> {
    for &x in layer.weights.iter().chain(&layer.bias) {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

pub(crate) fn read_dense<R: Read>(r: &mut R, in_dim: usize, out_dim: usize) -> Result<Dense> {
    let mut layer = Dense::zeros(in_dim, out_dim);
    r.read_f64_into::<LittleEndian>(&mut layer.weights).map_err(truncated)?;
    r.read_f64_into::<LittleEndian>(&mut layer.bias).map_err(truncated)?;
    if layer.weights.iter().chain(&layer.bias).any(|x| !x.is_finite()) {
        return Err(Error::MalformedHeader("non-finite weight".into()));
    }
    Ok(layer)
}

pub(crate) fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut b = [0u8; 1];
    if r.read(&mut b)? != 0 {
        return Err(Error::MalformedHeader("trailing bytes after model".into()));
    }
    Ok(())
}

/// Label table: `n × { len u16, UTF-8 bytes }`.
pub(crate) fn write_labels<W: Write>(w: &mut W, labels: &[String]) -> Result<()> {
    for l in labels {
        let len = u16::try_from(l.len())
            .map_err(|_| Error::MalformedHeader(format!("label {l:?} too long")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(l.as_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_labels<R: Read>(r: &mut R, n: usize) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(n.min(4096));
    for _ in 0..n {
        let mut len = [0u8; 2];
        r.read_exact(&mut len).map_err(truncated)?;
        let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut buf).map_err(truncated)?;
        out.push(String::from_utf8(buf).map_err(|_| Error::MalformedHeader("label is not UTF-8".into()))?);
    }
    Ok(out)
}

fn truncated(_: std::io::Error) -> Error {
    Error::MalformedHeader("file truncated".into())
}
