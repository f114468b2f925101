//! NPY version 1.0 reader and writer (little-endian, C order).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8] = b"\x93NUMPY";
const PREAMBLE: usize = 10;

/// Element types stored by the dataset format.
pub trait NpyElement: Copy + Sized {
    const DESCR: &'static str;
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl NpyElement for f32 {
    const DESCR: &'static str = "<f4";
    const SIZE: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl NpyElement for f64 {
    const DESCR: &'static str = "<f8";
    const SIZE: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl NpyElement for u8 {
    const DESCR: &'static str = "|u1";
    const SIZE: usize = 1;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn get(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset,
        reason: reason.into(),
    }
}

/// Serializes an array. The header is space-padded so that the data starts
/// on a 64-byte boundary.
pub fn encode<T: NpyElement>(shape: &[usize], data: &[T]) -> Result<Vec<u8>> {
    let n: usize = shape.iter().product();
    if n != data.len() {
        return Err(Error::shape(format!("{n} elements for {shape:?}"), data.len()));
    }
    let dims = match shape {
        [d] => format!("({d},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        T::DESCR,
        dims
    );
    let unpadded = PREAMBLE + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let hlen = u16::try_from(header.len()).map_err(|_| format_err(8, "header too long"))?;
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + data.len() * T::SIZE);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&hlen.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for &v in data {
        v.put(&mut out);
    }
    Ok(out)
}

/// Value of `'key': ` in the header dict, up to the next top-level comma.
fn dict_value<'a>(header: &'a str, key: &str) -> Option<(usize, &'a str)> {
    let pat = format!("'{key}':");
    let start = header.find(&pat)? + pat.len();
    let rest = &header[start..];
    let trimmed = rest.trim_start();
    let skip = rest.len() - trimmed.len();
    let end = if trimmed.starts_with('(') {
        trimmed.find(')')? + 1
    } else {
        trimmed.find([',', '}'])?
    };
    Some((start + skip, trimmed[..end].trim()))
}

fn parse_shape(text: &str, offset: usize) -> Result<Vec<usize>> {
    let inner = text
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format_err(offset, format!("shape is not a tuple: {text}")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format_err(offset, format!("bad dimension {s:?}")))
        })
        .collect()
}

pub fn decode<T: NpyElement>(bytes: &[u8]) -> Result<NpyArray<T>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(format_err(0, "missing \\x93NUMPY magic"));
    }
    if bytes.len() < PREAMBLE {
        return Err(format_err(bytes.len(), "truncated preamble"));
    }
    if bytes[6] != 1 {
        return Err(format_err(6, format!("unsupported version {}.{}", bytes[6], bytes[7])));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + hlen;
    if bytes.len() < data_start {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE..data_start])
        .map_err(|e| format_err(PREAMBLE + e.valid_up_to(), "header is not ASCII"))?;
    let field = |key: &str| {
        dict_value(header, key)
            .map(|(at, v)| (PREAMBLE + at, v))
            .ok_or_else(|| format_err(PREAMBLE, format!("header lacks '{key}'")))
    };
    let (at, descr) = field("descr")?;
    if descr.trim_matches('\'') != T::DESCR {
        return Err(format_err(at, format!("dtype {descr}, expected '{}'", T::DESCR)));
    }
    let (at, order) = field("fortran_order")?;
    if order != "False" {
        return Err(format_err(at, "only C-order arrays are supported"));
    }
    let (at, shape) = field("shape")?;
    let shape = parse_shape(shape, at)?;
    let n: usize = shape.iter().product();
    let body = &bytes[data_start..];
    if body.len() != n * T::SIZE {
        return Err(format_err(
            data_start + body.len().min(n * T::SIZE),
            format!("expected {} data bytes, found {}", n * T::SIZE, body.len()),
        ));
    }
    let data = body.chunks_exact(T::SIZE).map(T::get).collect();
    Ok(NpyArray { shape, data })
}

pub fn write_array<T: NpyElement>(path: &Path, shape: &[usize], data: &[T]) -> Result<()> {
    let bytes = encode(shape, data)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_array<T: NpyElement>(path: &Path) -> Result<NpyArray<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
