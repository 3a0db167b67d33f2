//! Value function and controller files.
//!
//! Coefficient arrays are little-endian `f64` either inlined as base64 or, when
//! longer than [`INLINE_LIMIT`] entries, appended to a flat binary sidecar
//! next to the JSON file and referenced by byte offset.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ppr_core::control::PolyController;
use ppr_core::kronalg::KronVector;
use ppr_core::{Matrix, ValueFunction};
use serde::{Deserialize, Serialize};

use crate::IoError;

pub const INLINE_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "storage", rename_all = "snake_case")]
pub enum ArrayRef {
    Base64 { data: String },
    Sidecar { file: String, offset: u64, len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub order: usize,
    pub len: usize,
    pub array: ArrayRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueFile {
    pub format: String,
    pub n: usize,
    pub d: usize,
    pub coeffs: Vec<CoeffEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub format: String,
    pub n: usize,
    pub m: usize,
    pub degree: usize,
    /// Gain `K^{[j]}` as an `m × n^j` column-major array.
    pub gains: Vec<CoeffEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

const VALUE_FORMAT: &str = "ppr-value/1";
const CONTROLLER_FORMAT: &str = "ppr-controller/1";

fn encode(data: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn decode(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

fn sidecar_path(json: &Path) -> PathBuf {
    json.with_extension("bin")
}

struct ArrayWriter {
    sidecar: PathBuf,
    writer: Option<BufWriter<File>>,
    offset: u64,
}

impl ArrayWriter {
    fn new(json: &Path) -> Self {
        Self {
            sidecar: sidecar_path(json),
            writer: None,
            offset: 0,
        }
    }

    fn put(&mut self, data: &[f64]) -> Result<ArrayRef, IoError> {
        if data.len() <= INLINE_LIMIT {
            return Ok(ArrayRef::Base64 {
                data: STANDARD.encode(encode(data)),
            });
        }
        if self.writer.is_none() {
            self.writer = Some(BufWriter::new(File::create(&self.sidecar)?));
        }
        let w = self.writer.as_mut().expect("opened above");
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
        let offset = self.offset;
        self.offset += 8 * data.len() as u64;
        Ok(ArrayRef::Sidecar {
            file: self
                .sidecar
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string(),
            offset,
            len: data.len(),
        })
    }

    fn finish(self) -> Result<(), IoError> {
        if let Some(mut w) = self.writer {
            w.flush()?;
        }
        Ok(())
    }
}

fn read_array(json: &Path, entry: &CoeffEntry) -> Result<Vec<f64>, IoError> {
    let data = match &entry.array {
        ArrayRef::Base64 { data } => {
            let bytes = STANDARD
                .decode(data)
                .map_err(|e| IoError::Format(format!("coefficient {}: {e}", entry.order)))?;
            if bytes.len() % 8 != 0 {
                return Err(IoError::Format(format!("coefficient {}: truncated data", entry.order)));
            }
            decode(&bytes)
        }
        ArrayRef::Sidecar { file, offset, len } => {
            let path = json.parent().unwrap_or(Path::new(".")).join(file);
            let mut f = File::open(&path)?;
            f.seek(SeekFrom::Start(*offset))?;
            let mut bytes = vec![0u8; len * 8];
            f.read_exact(&mut bytes)?;
            decode(&bytes)
        }
    };
    if data.len() != entry.len {
        return Err(IoError::Format(format!(
            "coefficient {}: expected {} entries, found {}",
            entry.order,
            entry.len,
            data.len()
        )));
    }
    Ok(data)
}

pub fn save_value(path: &Path, value: &ValueFunction, meta: serde_json::Value) -> Result<(), IoError> {
    let mut writer = ArrayWriter::new(path);
    let mut coeffs = Vec::new();
    for c in value.coeffs() {
        coeffs.push(CoeffEntry {
            order: c.order(),
            len: c.len(),
            array: writer.put(c.as_slice())?,
        });
    }
    writer.finish()?;
    let file = ValueFile {
        format: VALUE_FORMAT.into(),
        n: value.n(),
        d: value.degree(),
        coeffs,
        meta,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_value(path: &Path) -> Result<ValueFunction, IoError> {
    let file: ValueFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.format != VALUE_FORMAT {
        return Err(IoError::Format(format!("unsupported value format {:?}", file.format)));
    }
    let mut coeffs = Vec::new();
    for entry in &file.coeffs {
        let data = read_array(path, entry)?;
        coeffs.push(KronVector::new(data, file.n, entry.order)?);
    }
    let value = ValueFunction::new(file.n, coeffs)?;
    if value.degree() != file.d {
        return Err(IoError::Format(format!("declared degree {} but found {}", file.d, value.degree())));
    }
    Ok(value)
}

pub fn save_controller(path: &Path, ctrl: &PolyController, meta: serde_json::Value) -> Result<(), IoError> {
    let mut writer = ArrayWriter::new(path);
    let mut gains = Vec::new();
    for (j, k) in ctrl.gains().iter().enumerate() {
        gains.push(CoeffEntry {
            order: j + 1,
            len: k.len(),
            array: writer.put(k.as_slice())?,
        });
    }
    writer.finish()?;
    let file = ControllerFile {
        format: CONTROLLER_FORMAT.into(),
        n: ctrl.n(),
        m: ctrl.m(),
        degree: ctrl.degree(),
        gains,
        meta,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_controller(path: &Path) -> Result<PolyController, IoError> {
    let file: ControllerFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.format != CONTROLLER_FORMAT {
        return Err(IoError::Format(format!("unsupported controller format {:?}", file.format)));
    }
    let mut gains = Vec::new();
    for entry in &file.gains {
        let data = read_array(path, entry)?;
        let cols = if file.m == 0 { 0 } else { data.len() / file.m };
        gains.push(Matrix::from_vec(file.m, cols, data));
    }
    let ctrl = PolyController::new(file.n, file.m, gains)?;
    if ctrl.degree() != file.degree {
        return Err(IoError::Format(format!("declared degree {} but found {}", file.degree, ctrl.degree())));
    }
    Ok(ctrl)
}
