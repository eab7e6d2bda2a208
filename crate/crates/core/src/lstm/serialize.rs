//! Binary model file.
//!
//! All integers are `u32` and all reals IEEE-754 `f64`, little-endian.
//!
//! ```text
//! magic        8 bytes   "LSTMICA\0"
//! version      u32       1
//! n_inputs     u32       N_c
//! n_layers     u32
//! hidden       u32       H
//! n_outputs    u32
//! dropout      f64 × n_layers
//! n_tensors    u32
//! tensor × n_tensors:
//!   name_len   u32
//!   name       UTF-8 bytes
//!   rows       u32
//!   cols       u32
//!   values     f64 × rows·cols, row-major
//! ```
//!
//! Tensors appear in this order: for each layer `k` (0-based)
//! `layer{k}.W_f, W_i, W_s, W_o` (`H × (H + D_in)`, columns `[h, x]`), then
//! `layer{k}.b_f, b_i, b_s, b_o` (`H × 1`); finally `head.W` (`N_out × H`)
//! and `head.b` (`N_out × 1`).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::model::{DeepLstmModel, Gate, LstmLayerParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LSTMICA\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &DeepLstmModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.n_params());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, model.n_inputs() as u32);
    put_u32(&mut out, model.layers.len() as u32);
    put_u32(&mut out, model.hidden() as u32);
    put_u32(&mut out, model.n_outputs() as u32);
    for &r in &model.dropout {
        out.extend_from_slice(&r.to_le_bytes());
    }
    put_u32(&mut out, (model.layers.len() * 8 + 2) as u32);
    for (k, layer) in model.layers.iter().enumerate() {
        for g in Gate::ALL {
            put_tensor(&mut out, &format!("layer{k}.W_{}", g.suffix()), layer.gate_weights(g));
        }
        for g in Gate::ALL {
            let b = layer.gate_bias(g).insert_axis(Axis(1));
            put_tensor(&mut out, &format!("layer{k}.b_{}", g.suffix()), b);
        }
    }
    put_tensor(&mut out, "head.W", model.head_w.view());
    put_tensor(&mut out, "head.b", model.head_b.view().insert_axis(Axis(1)));
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<DeepLstmModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let n_inputs = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let n_outputs = r.u32()? as usize;
    if n_inputs == 0 || n_layers == 0 || hidden == 0 || n_outputs == 0 {
        return Err(Error::ModelFormat("zero-sized architecture".into()));
    }
    let dropout = (0..n_layers).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let n_tensors = r.u32()? as usize;
    if n_tensors != n_layers * 8 + 2 {
        return Err(Error::ModelFormat(format!(
            "expected {} tensors, header says {n_tensors}",
            n_layers * 8 + 2
        )));
    }

    let mut layers = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let d_in = if k == 0 { n_inputs } else { hidden };
        let mut w = Vec::with_capacity(4);
        for g in Gate::ALL {
            w.push(r.tensor(&format!("layer{k}.W_{}", g.suffix()), hidden, hidden + d_in)?);
        }
        let mut b = Vec::with_capacity(4);
        for g in Gate::ALL {
            let t = r.tensor(&format!("layer{k}.b_{}", g.suffix()), hidden, 1)?;
            b.push(t.column(0).to_owned());
        }
        let wv = [w[0].view(), w[1].view(), w[2].view(), w[3].view()];
        let bv = [b[0].view(), b[1].view(), b[2].view(), b[3].view()];
        layers.push(LstmLayerParams::from_gates(wv, bv)?);
    }
    let head_w = r.tensor("head.W", n_outputs, hidden)?;
    let head_b: Array1<f64> = r.tensor("head.b", n_outputs, 1)?.column(0).to_owned();
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(DeepLstmModel {
        layers,
        dropout,
        head_w,
        head_b,
    })
}

pub fn save(path: &Path, model: &DeepLstmModel) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DeepLstmModel> {
    from_bytes(&fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: ArrayView2<f64>) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.nrows() as u32);
    put_u32(out, t.ncols() as u32);
    for v in t.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let len = self.u32()? as usize;
        let got = std::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::ModelFormat("tensor name is not UTF-8".into()))?;
        if got != name {
            return Err(Error::ModelFormat(format!("expected tensor `{name}`, found `{got}`")));
        }
        let (r, c) = (self.u32()? as usize, self.u32()? as usize);
        if (r, c) != (rows, cols) {
            return Err(Error::ModelFormat(format!(
                "`{name}` is {r}x{c}, expected {rows}x{cols}"
            )));
        }
        let values = (0..r * c).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat(format!("`{name}` has non-finite values")));
        }
        Ok(Array2::from_shape_vec((r, c), values).expect("shape checked"))
    }
}
