//! Matrix files.
//!
//! BOCM is a little-endian binary layout: the magic bytes `BOCM`, then `u32`
//! version, rows and cols, then `rows·cols` row-major `f64` values. A file may
//! hold several such blocks back to back.
//!
//! The CSV form starts with a `rows,cols` line giving the shape, followed by
//! one line per row.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"BOCM";
pub const VERSION: u32 = 1;

pub fn write_bocm_block<T: Real, W: Write>(out: &mut W, m: &DMatrix<T>) -> Result<()> {
    let rows = u32::try_from(m.nrows()).map_err(|_| Error::InvalidArgument("too many rows".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::InvalidArgument("too many columns".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&rows.to_le_bytes())?;
    out.write_all(&cols.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&m[(r, c)].as_f64().to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads one block; `Ok(None)` at a clean end of input.
pub fn read_bocm_block<T: Real, R: Read>(input: &mut R) -> Result<Option<DMatrix<T>>> {
    let mut magic = [0u8; 4];
    match input.read(&mut magic[..1])? {
        0 => return Ok(None),
        _ => input.read_exact(&mut magic[1..]).map_err(truncated)?,
    }
    if &magic != MAGIC {
        return Err(Error::Format("missing BOCM magic".into()));
    }
    let version = read_u32(input).map_err(truncated_err)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported BOCM version {version}")));
    }
    let rows = read_u32(input).map_err(truncated_err)? as usize;
    let cols = read_u32(input).map_err(truncated_err)? as usize;
    let mut buf = vec![0u8; rows * cols * 8];
    input.read_exact(&mut buf).map_err(truncated)?;
    let values: Vec<T> = buf
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Ok(Some(DMatrix::from_row_slice(rows, cols, &values)))
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated BOCM block".into())
    } else {
        Error::Io(e)
    }
}

fn truncated_err(e: Error) -> Error {
    match e {
        Error::Io(io) => truncated(io),
        other => other,
    }
}

pub fn write_bocm<T: Real>(path: &Path, blocks: &[&DMatrix<T>]) -> Result<()> {
    let mut buf = Vec::new();
    for b in blocks {
        write_bocm_block(&mut buf, b)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_bocm<T: Real>(path: &Path) -> Result<Vec<DMatrix<T>>> {
    let bytes = fs::read(path)?;
    let mut cursor = io::Cursor::new(bytes);
    let mut out = Vec::new();
    while let Some(m) = read_bocm_block(&mut cursor)? {
        out.push(m);
    }
    if out.is_empty() {
        return Err(Error::Format(format!("{}: no BOCM blocks", path.display())));
    }
    Ok(out)
}

/// Formats a matrix as CSV; floats use the shortest round-trip representation.
pub fn to_csv<T: Real>(m: &DMatrix<T>) -> String {
    let mut s = format!("{},{}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?}", m[(r, c)].as_f64())).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Parses [`to_csv`] output. A literal `rows,cols` header line before the
/// shape line is also accepted.
pub fn from_csv<T: Real>(text: &str) -> Result<DMatrix<T>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
    if header.eq_ignore_ascii_case("rows,cols") {
        header = lines.next().ok_or_else(|| Error::Format("missing shape line".into()))?;
    }
    let shape: Vec<usize> = header
        .split(',')
        .map(|f| f.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad shape line {header:?}")))?;
    let [rows, cols] = shape[..] else {
        return Err(Error::Format(format!("bad shape line {header:?}")));
    };
    let mut values = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for line in lines {
        seen += 1;
        let before = values.len();
        for f in line.split(',') {
            let v: f64 = f.trim().parse().map_err(|_| Error::Format(format!("bad number {f:?}")))?;
            values.push(T::lit(v));
        }
        if values.len() - before != cols {
            return Err(Error::Format(format!("row {seen} has {} fields, expected {cols}", values.len() - before)));
        }
    }
    if seen != rows {
        return Err(Error::Format(format!("expected {rows} rows, found {seen}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_csv<T: Real>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    fs::write(path, to_csv(m))?;
    Ok(())
}

pub fn read_csv<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    from_csv(&fs::read_to_string(path)?)
}

/// Reads either format, chosen by extension (`.csv`, else BOCM first block).
pub fn read_matrix<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv(path)
    } else {
        Ok(read_bocm(path)?.swap_remove(0))
    }
}

pub fn write_matrix<T: Real>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_csv(path, m)
    } else {
        write_bocm(path, &[m])
    }
}
