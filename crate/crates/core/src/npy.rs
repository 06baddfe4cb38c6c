//! Minimal NPY v1.0 codec for 2-D little-endian float arrays.
//!
//! Only what the vector bundle import needs: C-order `<f4` (and `<f8` on
//! read) arrays with a two-element shape.

use std::io::{Read, Write};

use thiserror::Error;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an NPY file (bad magic)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1}")]
    Version(u8, u8),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported dtype {0:?}, expected '<f4' or '<f8'")]
    Dtype(String),
    #[error("fortran-order arrays are not supported")]
    FortranOrder,
    #[error("expected a 2-D array, got shape {0:?}")]
    Shape(Vec<usize>),
    #[error("data section holds {got} bytes, expected {expected}")]
    Truncated { expected: usize, got: usize },
}

/// Row-major 2-D array of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Array2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Array2 {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

fn header_value<'a>(header: &'a str, key: &str) -> Result<&'a str, NpyError> {
    let needle = format!("'{key}':");
    let start = header.find(&needle).ok_or_else(|| NpyError::Header(format!("missing key {key}")))? + needle.len();
    Ok(header[start..].trim_start())
}

fn parse_header(header: &str) -> Result<(String, bool, Vec<usize>), NpyError> {
    let descr_raw = header_value(header, "descr")?;
    let descr = descr_raw
        .strip_prefix('\'')
        .and_then(|s| s.split('\'').next())
        .ok_or_else(|| NpyError::Header("descr is not a string".into()))?
        .to_string();

    let fortran = header_value(header, "fortran_order")?;
    let fortran = if fortran.starts_with("True") {
        true
    } else if fortran.starts_with("False") {
        false
    } else {
        return Err(NpyError::Header("fortran_order is not a bool".into()));
    };

    let shape_raw = header_value(header, "shape")?;
    let inner = shape_raw
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| NpyError::Header("shape is not a tuple".into()))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| NpyError::Header(format!("bad shape element {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((descr, fortran, shape))
}

pub fn read_npy<R: Read>(mut reader: R) -> Result<Array2, NpyError> {
    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let mut version = [0u8; 2];
    reader.read_exact(&mut version)?;
    let header_len = match version {
        [1, 0] => {
            let mut len = [0u8; 2];
            reader.read_exact(&mut len)?;
            u16::from_le_bytes(len) as usize
        }
        [2, 0] | [3, 0] => {
            let mut len = [0u8; 4];
            reader.read_exact(&mut len)?;
            u32::from_le_bytes(len) as usize
        }
        [major, minor] => return Err(NpyError::Version(major, minor)),
    };
    let mut header = vec![0u8; header_len];
    reader.read_exact(&mut header)?;
    let header = String::from_utf8_lossy(&header);
    let (descr, fortran, shape) = parse_header(&header)?;
    if fortran {
        return Err(NpyError::FortranOrder);
    }
    let width = match descr.as_str() {
        "<f4" => 4,
        "<f8" => 8,
        _ => return Err(NpyError::Dtype(descr)),
    };
    let (rows, cols) = match shape.as_slice() {
        [r, c] => (*r, *c),
        _ => return Err(NpyError::Shape(shape)),
    };

    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let expected = rows * cols * width;
    if bytes.len() < expected {
        return Err(NpyError::Truncated { expected, got: bytes.len() });
    }
    let data = if width == 4 {
        bytes[..expected].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect()
    } else {
        bytes[..expected].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect()
    };
    Ok(Array2 { rows, cols, data })
}

/// Writes `array` as a v1.0 `<f4` file; values are rounded to `f32`.
pub fn write_npy_f32<W: Write>(mut writer: W, array: &Array2) -> Result<(), NpyError> {
    let dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({}, {}), }}", array.rows, array.cols);
    // magic(6) + version(2) + len(2) + dict + padding + '\n' is a multiple of 64
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header = format!("{dict}{}\n", " ".repeat(pad));
    writer.write_all(MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&(header.len() as u16).to_le_bytes())?;
    writer.write_all(header.as_bytes())?;
    for v in &array.data {
        writer.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}
