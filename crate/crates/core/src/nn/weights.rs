//! `.kwnn` weights files.
//!
//! ```text
//! "KWNN" | version u16 | input_side u16
//! conv count u16, then per conv layer: in u16, out u16
//! dense count u16, then per dense layer: in u32, out u32
//! weights: f32 LE, canonical tensor order
//! crc32 u32 over the weight bytes
//! ```

use std::fs;
use std::path::Path;

use super::model::ModelParams;
use super::NnError;

pub const MAGIC: &[u8; 4] = b"KWNN";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.input_side() as u16).to_le_bytes());
    out.extend_from_slice(&(params.conv.len() as u16).to_le_bytes());
    for c in &params.conv {
        out.extend_from_slice(&(c.in_channels as u16).to_le_bytes());
        out.extend_from_slice(&(c.out_channels as u16).to_le_bytes());
    }
    out.extend_from_slice(&(params.dense.len() as u16).to_le_bytes());
    for d in &params.dense {
        out.extend_from_slice(&(d.inputs as u32).to_le_bytes());
        out.extend_from_slice(&(d.outputs as u32).to_le_bytes());
    }
    let start = out.len();
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Format("missing KWNN magic".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let side = r.u16()? as usize;
    let n_conv = r.u16()? as usize;
    let mut conv_shapes = Vec::new();
    for _ in 0..n_conv.min(16) {
        conv_shapes.push((r.u16()? as usize, r.u16()? as usize));
    }
    if n_conv != 3 {
        return Err(NnError::Shape(format!("expected 3 conv layers, file has {n_conv}")));
    }
    let n_dense = r.u16()? as usize;
    if n_dense != 5 {
        return Err(NnError::Shape(format!("expected 5 dense layers, file has {n_dense}")));
    }
    let mut dense_shapes = Vec::new();
    for _ in 0..n_dense {
        dense_shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    // Size the weight region from the table before allocating anything.
    let declared = conv_shapes
        .iter()
        .map(|&(i, o)| o * (i * 9 + 1))
        .chain(dense_shapes.iter().map(|&(i, o)| o.saturating_mul(i).saturating_add(o)))
        .fold(0usize, usize::saturating_add);
    if declared.saturating_mul(4).saturating_add(4) != bytes.len() - r.pos {
        return Err(NnError::Format("weight region length disagrees with the layer table".into()));
    }
    let filters = [conv_shapes[0].1, conv_shapes[1].1, conv_shapes[2].1];
    let last = side / 8;
    if last * last * filters[2] != dense_shapes[0].0 {
        return Err(NnError::Shape(format!("input side {side} does not match the first dense layer")));
    }
    let expected = ModelParams::zeros(side, filters)?;
    let conv_match =
        expected.conv.iter().zip(&conv_shapes).all(|(c, &(i, o))| c.in_channels == i && c.out_channels == o);
    let dense_match = expected.dense.iter().zip(&dense_shapes).all(|(d, &(i, o))| d.inputs == i && d.outputs == o);
    if !conv_match || !dense_match {
        return Err(NnError::Shape("layer-shape table does not describe a valid network".into()));
    }

    let n_weights = expected.param_count();
    let weight_bytes = r.take(n_weights * 4)?;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(NnError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let actual = crc32fast::hash(weight_bytes);
    if stored != actual {
        return Err(NnError::Corrupt { stored, actual });
    }

    let mut values = weight_bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut params = expected;
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().expect("length checked above");
        }
    }
    params.validate()?;
    Ok(params)
}

pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<(), NnError> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams, NnError> {
    decode_params(&fs::read(path)?)
}

/// Loads and checks that the model takes `input_side`×`input_side` images.
pub fn load_params_for_side(path: impl AsRef<Path>, input_side: usize) -> Result<ModelParams, NnError> {
    let params = load_params(path)?;
    if params.input_side() != input_side {
        return Err(NnError::Shape(format!(
            "model expects {0}×{0} input, configuration uses {1}×{1}",
            params.input_side(),
            input_side
        )));
    }
    Ok(params)
}
