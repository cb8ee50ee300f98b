//! Lossless text encoding of `f64` matrices: base64 over little-endian bytes,
//! row-major, with the shape stored alongside.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

/// Decodes exactly `expected` values; any mismatch is reported as a string.
pub fn decode_f64s(text: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| format!("bad base64 payload: {e}"))?;
    if bytes.len() != expected * 8 {
        return Err(format!(
            "payload holds {} bytes, expected {} values ({} bytes)",
            bytes.len(),
            expected,
            expected * 8
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl EncodedMatrix {
    pub fn encode(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: encode_f64s(m.as_slice()),
        }
    }

    pub fn decode(&self) -> std::result::Result<Matrix, String> {
        let values = decode_f64s(&self.data, self.rows * self.cols)?;
        Matrix::from_vec(self.rows, self.cols, values).map_err(|e| e.to_string())
    }
}
