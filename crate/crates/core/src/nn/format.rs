//! `RESW` weight files.
//!
//! ```text
//! "RESW"  u32 version  u32 layer_count
//! per layer, in role order:
//!   u16 name_len  name (utf-8)  u8 kind (0 dense, 1 gru)  u8 activation
//!   u32 inputs  u32 outputs
//!   dense: weights[outputs * inputs] bias[outputs]
//!   gru:   input_weights[3h * inputs] recurrent_weights[3h * h] bias[3h]
//! u32 crc32 of every preceding byte
//! ```
//!
//! All integers and f32 values are little-endian; matrices are row-major.

use super::layers::{Activation, DenseLayer, GruLayer};
use super::model::{Layer, LayerKind, LayerRef, NetworkWeights, ROLES};
use crate::{AecError, Result};

pub const MAGIC: &[u8; 4] = b"RESW";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_weights(weights: &NetworkWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * weights.param_count() + 32 * ROLES.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ROLES.len() as u32).to_le_bytes());
    for (role, layer) in ROLES.iter().zip(weights.layers()) {
        out.extend_from_slice(&(role.name.len() as u16).to_le_bytes());
        out.extend_from_slice(role.name.as_bytes());
        let (kind, act, inputs, outputs, data): (u8, u8, usize, usize, Vec<&[f32]>) = match layer {
            LayerRef::Dense(d) => (0, d.activation.id(), d.inputs, d.outputs, vec![&d.weights, &d.bias]),
            LayerRef::Gru(g) => (
                1,
                Activation::Tanh.id(),
                g.inputs,
                g.hidden,
                vec![&g.input_weights, &g.recurrent_weights, &g.bias],
            ),
        };
        out.push(kind);
        out.push(act);
        out.extend_from_slice(&(inputs as u32).to_le_bytes());
        out.extend_from_slice(&(outputs as u32).to_le_bytes());
        for block in data {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(AecError::model(format!("file truncated in {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parse and validate a weight file. Magic, version, role names, shapes
/// and checksum are all checked before the weights are accepted.
pub fn load_weights(bytes: &[u8]) -> Result<NetworkWeights> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "header")? != MAGIC {
        return Err(AecError::model("bad magic (expected \"RESW\")"));
    }
    let version = c.u32("header")?;
    if version != FORMAT_VERSION {
        return Err(AecError::model(format!(
            "unsupported version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = c.u32("header")? as usize;
    if count != ROLES.len() {
        return Err(AecError::model(format!(
            "layer count {count}, expected {}",
            ROLES.len()
        )));
    }
    let mut layers = Vec::with_capacity(count);
    for role in &ROLES {
        let what = format!("layer {}", role.name);
        let name_len = c.u16(&what)? as usize;
        let name = c.take(name_len, &what)?;
        if name != role.name.as_bytes() {
            return Err(AecError::model(format!(
                "expected layer {}, found {:?}",
                role.name,
                String::from_utf8_lossy(name)
            )));
        }
        let kind = c.u8(&what)?;
        let act_id = c.u8(&what)?;
        let inputs = c.u32(&what)? as usize;
        let outputs = c.u32(&what)? as usize;
        let expected_kind = match role.kind {
            LayerKind::Dense => 0,
            LayerKind::Gru => 1,
        };
        if kind != expected_kind {
            return Err(AecError::model(format!("{} has wrong layer kind {kind}", role.name)));
        }
        if (inputs, outputs) != (role.inputs, role.outputs) {
            return Err(AecError::model(format!(
                "{} expects {}→{}, found {}→{}",
                role.name, role.inputs, role.outputs, inputs, outputs
            )));
        }
        let activation = Activation::from_id(act_id)
            .ok_or_else(|| AecError::model(format!("{} has unknown activation id {act_id}", role.name)))?;
        let layer = match role.kind {
            LayerKind::Dense => Layer::Dense(DenseLayer {
                inputs,
                outputs,
                weights: c.f32s(inputs * outputs, &what)?,
                bias: c.f32s(outputs, &what)?,
                activation,
            }),
            LayerKind::Gru => Layer::Gru(GruLayer {
                inputs,
                hidden: outputs,
                input_weights: c.f32s(3 * outputs * inputs, &what)?,
                recurrent_weights: c.f32s(3 * outputs * outputs, &what)?,
                bias: c.f32s(3 * outputs, &what)?,
            }),
        };
        layers.push(layer);
    }
    let body_end = c.pos;
    let stored = c.u32("checksum")?;
    if c.pos != bytes.len() {
        return Err(AecError::model(format!(
            "{} trailing bytes after checksum",
            bytes.len() - c.pos
        )));
    }
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(AecError::model(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    NetworkWeights::from_layers(layers)
}
