//! Little-endian binary record helpers shared by all on-disk formats.
//!
//! Every file starts with a 16-byte header: 4-byte magic, u32 version, and two
//! u32 fields whose meaning depends on the format. Payloads are raw
//! little-endian scalars. Round-trips are bit-exact.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const FORMAT_VERSION: u32 = 1;

pub(crate) const MAGIC_VECTORS: [u8; 4] = *b"HFVC";
pub(crate) const MAGIC_RESULTS: [u8; 4] = *b"HFRS";
pub(crate) const MAGIC_FOREST: [u8; 4] = *b"HFFO";
pub(crate) const MAGIC_CODES: [u8; 4] = *b"HFCT";
pub(crate) const MAGIC_INDEX: [u8; 4] = *b"HFIX";
pub(crate) const MAGIC_GRAPH: [u8; 4] = *b"HFGR";

pub(crate) fn write_header(w: &mut impl Write, magic: [u8; 4], a: u32, b: u32) -> io::Result<()> {
    w.write_all(&magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&a.to_le_bytes())?;
    w.write_all(&b.to_le_bytes())
}

/// Reads and checks a 16-byte header, returning the two format-specific fields.
pub(crate) fn read_header(r: &mut impl Read, magic: [u8; 4], path: &Path) -> Result<(u32, u32)> {
    let mut buf = [0u8; 16];
    r.read_exact(&mut buf).map_err(|e| map_read_err(e, path))?;
    if buf[0..4] != magic {
        return Err(Error::MalformedHeader {
            path: path.display().to_string(),
            reason: format!(
                "bad magic {:?}, expected {:?}",
                &buf[0..4],
                std::str::from_utf8(&magic).unwrap_or("?")
            ),
        });
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::MalformedHeader {
            path: path.display().to_string(),
            reason: format!("unsupported version {version}"),
        });
    }
    let a = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    let b = u32::from_le_bytes(buf[12..16].try_into().unwrap());
    Ok((a, b))
}

pub(crate) fn map_read_err(e: io::Error, path: &Path) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated {
            path: path.display().to_string(),
        }
    } else {
        Error::io(path, e)
    }
}

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| map_read_err(e, path))?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| map_read_err(e, path))?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn write_u32_slice(w: &mut impl Write, vs: &[u32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 4);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn write_u64_slice(w: &mut impl Write, vs: &[u64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 8);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn write_f32_slice(w: &mut impl Write, vs: &[f32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 4);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn read_u32_vec(r: &mut impl Read, n: usize, path: &Path) -> Result<Vec<u32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|e| map_read_err(e, path))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn read_u64_vec(r: &mut impl Read, n: usize, path: &Path) -> Result<Vec<u64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|e| map_read_err(e, path))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn read_f32_vec(r: &mut impl Read, n: usize, path: &Path) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|e| map_read_err(e, path))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Fails if the reader still has bytes left; keeps loaders total.
pub(crate) fn expect_eof(r: &mut impl Read, path: &Path) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::MalformedHeader {
            path: path.display().to_string(),
            reason: "trailing bytes after payload".to_string(),
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}
