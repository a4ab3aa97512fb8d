//! Binary weight container: a text header naming each tensor, then all
//! tensor data as little-endian f64, row-major, concatenated in header
//! order. Round-trips are bit-exact.
//!
//! ```text
//! radlab-weights v1\n
//! count <n>\n
//! tensor <name> <rows> <cols>\n    (n times)
//! data\n
//! <8 * total bytes>
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use radlab_core::matrix::DenseMatrix;

pub const MAGIC: &str = "radlab-weights v1";

#[derive(Debug)]
pub struct ContainerError {
    /// Byte offset in the file where parsing failed.
    pub offset: usize,
    pub what: String,
}

impl fmt::Display for ContainerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "weight container parse error at byte {}: {}", self.offset, self.what)
    }
}

impl std::error::Error for ContainerError {}

fn err<T>(offset: usize, what: impl Into<String>) -> Result<T, ContainerError> {
    Err(ContainerError {
        offset,
        what: what.into(),
    })
}

pub fn encode(tensors: &[(String, DenseMatrix)]) -> Result<Vec<u8>, ContainerError> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("count {}\n", tensors.len()));
    for (name, m) in tensors {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return err(0, format!("invalid tensor name {name:?}"));
        }
        header.push_str(&format!("tensor {name} {} {}\n", m.rows(), m.cols()));
    }
    header.push_str("data\n");
    let mut bytes = header.into_bytes();
    for (_, m) in tensors {
        for v in m.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, DenseMatrix)>, ContainerError> {
    let mut offset = 0usize;
    let mut next_line = |bytes: &[u8]| -> Result<(String, usize), ContainerError> {
        let start = offset;
        let rel = bytes[offset..].iter().position(|&b| b == b'\n');
        let Some(rel) = rel else {
            return err(start, "unterminated header line");
        };
        let line = &bytes[offset..offset + rel];
        offset += rel + 1;
        match std::str::from_utf8(line) {
            Ok(s) => Ok((s.to_string(), start)),
            Err(_) => err(start, "header is not UTF-8"),
        }
    };

    let (magic, at) = next_line(bytes)?;
    if magic != MAGIC {
        return err(at, format!("bad magic {magic:?}"));
    }
    let (count_line, at) = next_line(bytes)?;
    let count: usize = match count_line.strip_prefix("count ") {
        Some(rest) => rest
            .parse()
            .map_err(|_| ContainerError {
                offset: at,
                what: format!("bad count line {count_line:?}"),
            })?,
        None => return err(at, format!("expected count line, got {count_line:?}")),
    };

    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, at) = next_line(bytes)?;
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return err(at, format!("expected tensor line, got {line:?}"));
        }
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| ContainerError {
                offset: at,
                what: format!("bad row count in {line:?}"),
            })?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| ContainerError {
                offset: at,
                what: format!("bad column count in {line:?}"),
            })?;
        specs.push((parts[1].to_string(), rows, cols));
    }
    let (data_line, at) = next_line(bytes)?;
    if data_line != "data" {
        return err(at, format!("expected data marker, got {data_line:?}"));
    }

    let total: usize = specs.iter().map(|(_, r, c)| r * c).sum();
    let expected = total * 8;
    let payload = &bytes[offset..];
    if payload.len() != expected {
        return err(
            offset + payload.len().min(expected),
            format!(
                "payload holds {} bytes, header declares {expected}",
                payload.len()
            ),
        );
    }

    let mut tensors = Vec::with_capacity(count);
    let mut pos = 0usize;
    for (name, rows, cols) in specs {
        let n = rows * cols;
        let mut data = Vec::with_capacity(n);
        for k in 0..n {
            let b = &payload[(pos + k) * 8..(pos + k + 1) * 8];
            data.push(f64::from_le_bytes(b.try_into().expect("8 bytes")));
        }
        pos += n;
        let m = DenseMatrix::from_vec(rows, cols, data).map_err(|e| ContainerError {
            offset: offset + pos * 8,
            what: format!("tensor {name}: {e}"),
        })?;
        tensors.push((name, m));
    }
    Ok(tensors)
}

pub fn save_weights(
    path: &Path,
    tensors: &[(String, DenseMatrix)],
) -> Result<(), Box<dyn std::error::Error>> {
    let bytes = encode(tensors)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Vec<(String, DenseMatrix)>, Box<dyn std::error::Error>> {
    let bytes = fs::read(path)?;
    Ok(decode(&bytes)?)
}
