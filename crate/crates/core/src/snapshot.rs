//! KWSP binary snapshots of a [`SpectralField`].
//!
//! Layout, little-endian: `b"KWSP"`, version `u32`, `n: u64`,
//! `box_length: f64`, `t: f64`, then `n` pairs `(re, im)` of `f64` in FFT
//! slot order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::spectral::{Grid, SpectralError, SpectralField};

pub const MAGIC: [u8; 4] = *b"KWSP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}, expected \"KWSP\"")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {found} (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("snapshot truncated while reading {0}")]
    Truncated(&'static str),
    #[error("invalid grid in snapshot: {0}")]
    Grid(#[from] SpectralError),
}

pub fn write_snapshot<W: Write>(mut w: W, field: &SpectralField, t: f64) -> Result<(), SnapshotError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(field.grid().n() as u64).to_le_bytes())?;
    w.write_all(&field.grid().box_length().to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    for c in field.coeffs() {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_bytes<const K: usize, R: Read>(r: &mut R, what: &'static str) -> Result<[u8; K], SnapshotError> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => SnapshotError::Truncated(what),
        _ => SnapshotError::Io(e),
    })?;
    Ok(buf)
}

/// Reads one snapshot, returning the field and its time stamp.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SpectralField, f64), SnapshotError> {
    let magic = read_bytes::<4, _>(&mut r, "magic")?;
    if magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_bytes::<4, _>(&mut r, "version")?);
    if version != VERSION {
        return Err(SnapshotError::UnsupportedVersion { found: version });
    }
    let n = u64::from_le_bytes(read_bytes::<8, _>(&mut r, "n")?);
    let box_length = f64::from_le_bytes(read_bytes::<8, _>(&mut r, "box_length")?);
    let t = f64::from_le_bytes(read_bytes::<8, _>(&mut r, "t")?);
    let grid = Grid::new(usize::try_from(n).unwrap_or(0), box_length)?;
    let mut coeffs = Vec::with_capacity(grid.n());
    for _ in 0..grid.n() {
        let re = f64::from_le_bytes(read_bytes::<8, _>(&mut r, "coefficients")?);
        let im = f64::from_le_bytes(read_bytes::<8, _>(&mut r, "coefficients")?);
        coeffs.push(Complex64::new(re, im));
    }
    Ok((SpectralField::new(grid, coeffs)?, t))
}

pub fn save_snapshot(path: impl AsRef<Path>, field: &SpectralField, t: f64) -> Result<(), SnapshotError> {
    write_snapshot(BufWriter::new(File::create(path)?), field, t)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<(SpectralField, f64), SnapshotError> {
    read_snapshot(BufReader::new(File::open(path)?))
}
