//! Named f64 tensors plus JSON metadata in one file.
//!
//! Layout (little-endian): `"GSCK"`, u32 version, u64 metadata length, the
//! metadata as JSON, u64 section count, then per section a u32 name length,
//! the UTF-8 name, u64 rows, u64 cols, u64 payload offset. Payloads follow the
//! table as row-major f64 values; offsets count from the first payload byte.

use std::path::Path;

use serde_json::Value;

use crate::data_io::write_file;
use crate::error::{GsecError, Result};
use crate::inner::{BatchEnsembleLayer, InnerModel};
use crate::numerics::Matrix;
use crate::outer::{Dense, TaskEncoder};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub metadata: Value,
    pub sections: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new(metadata: Value) -> Self {
        Self {
            metadata,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, matrix: Matrix) {
        self.sections.push((name.into(), matrix));
    }

    pub fn section(&self, name: &str) -> Result<&Matrix> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| GsecError::InvalidInput(format!("checkpoint has no section '{name}'")))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata)
            .map_err(|e| GsecError::InvalidInput(format!("checkpoint metadata: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.sections.len() as u64).to_le_bytes());
        let mut offset = 0u64;
        for (name, m) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += (m.as_slice().len() * 8) as u64;
        }
        for (_, m) in &self.sections {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { path, bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(r.format("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.format(&format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.len()?;
        let metadata = serde_json::from_slice(r.take(meta_len)?).map_err(|e| r.format(&format!("metadata: {e}")))?;
        let count = r.len()?;
        let mut table = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| r.format("section name is not UTF-8"))?
                .to_string();
            let (rows, cols, offset) = (r.len()?, r.len()?, r.len()?);
            table.push((name, rows, cols, offset));
        }
        let payload = &bytes[r.pos..];
        let mut sections = Vec::with_capacity(table.len());
        for (name, rows, cols, offset) in table {
            let bytes_needed = rows
                .checked_mul(cols)
                .and_then(|c| c.checked_mul(8))
                .and_then(|b| b.checked_add(offset))
                .ok_or_else(|| r.format("section size overflows"))?;
            if bytes_needed > payload.len() {
                return Err(GsecError::Corruption {
                    path: path.to_path_buf(),
                    reason: format!("section '{name}' runs past the end of the file"),
                });
            }
            let values = payload[offset..bytes_needed]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let matrix = Matrix::from_vec(rows, cols, values).map_err(|e| GsecError::Corruption {
                path: path.to_path_buf(),
                reason: format!("section '{name}': {e}"),
            })?;
            sections.push((name, matrix));
        }
        Ok(Self { metadata, sections })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| GsecError::io(path, e))?;
        Self::decode(path, &bytes)
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            GsecError::Corruption {
                path: self.path.to_path_buf(),
                reason: "file is truncated".into(),
            }
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| self.format("length does not fit in memory"))
    }

    fn format(&self, reason: &str) -> GsecError {
        GsecError::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

fn row(values: &[f64]) -> Matrix {
    Matrix::from_vec(1, values.len(), values.to_vec()).expect("finite parameters")
}

fn push_layer(ck: &mut Checkpoint, prefix: &str, layer: &BatchEnsembleLayer) {
    ck.push(format!("{prefix}.weight"), layer.weight.clone());
    ck.push(format!("{prefix}.input_mod"), layer.input_mod.clone());
    ck.push(format!("{prefix}.output_mod"), layer.output_mod.clone());
    ck.push(format!("{prefix}.bias"), layer.bias.clone());
}

fn read_layer(ck: &Checkpoint, prefix: &str) -> Result<BatchEnsembleLayer> {
    let layer = BatchEnsembleLayer {
        weight: ck.section(&format!("{prefix}.weight"))?.clone(),
        input_mod: ck.section(&format!("{prefix}.input_mod"))?.clone(),
        output_mod: ck.section(&format!("{prefix}.output_mod"))?.clone(),
        bias: ck.section(&format!("{prefix}.bias"))?.clone(),
    };
    layer.validate()?;
    Ok(layer)
}

pub fn inner_checkpoint(model: &InnerModel, metadata: Value) -> Checkpoint {
    let mut ck = Checkpoint::new(metadata);
    push_layer(&mut ck, "image", &model.image);
    push_layer(&mut ck, "text", &model.text);
    ck
}

pub fn inner_from_checkpoint(ck: &Checkpoint) -> Result<InnerModel> {
    InnerModel::new(read_layer(ck, "image")?, read_layer(ck, "text")?)
}

pub fn encoder_checkpoint(encoder: &TaskEncoder, metadata: Value) -> Checkpoint {
    let mut ck = Checkpoint::new(metadata);
    if let Some(h) = &encoder.hidden {
        ck.push("hidden.weight", h.weight.clone());
        ck.push("hidden.bias", row(&h.bias));
    }
    ck.push("output.weight", encoder.output.weight.clone());
    ck.push("output.bias", row(&encoder.output.bias));
    ck
}

pub fn encoder_from_checkpoint(ck: &Checkpoint) -> Result<TaskEncoder> {
    let dense = |prefix: &str| -> Result<Dense> {
        Ok(Dense {
            weight: ck.section(&format!("{prefix}.weight"))?.clone(),
            bias: ck.section(&format!("{prefix}.bias"))?.as_slice().to_vec(),
        })
    };
    let hidden = if ck.sections.iter().any(|(n, _)| n == "hidden.weight") {
        Some(dense("hidden")?)
    } else {
        None
    };
    let output = dense("output")?;
    let expected_in = hidden.as_ref().map_or(output.weight.cols(), |h| h.bias.len());
    if output.weight.cols() != expected_in
        || output.weight.rows() != output.bias.len()
        || hidden.as_ref().is_some_and(|h| h.weight.rows() != h.bias.len())
    {
        return Err(GsecError::Shape("checkpoint encoder sections disagree".into()));
    }
    Ok(TaskEncoder { hidden, output })
}
