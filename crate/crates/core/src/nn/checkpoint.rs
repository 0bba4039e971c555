//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "CMCK" u32:version str:meta
//! u32:n_nets    { str:name u32:n_layers { u32:out u32:in u8:activation
//!                  f64[out*in]:weight f64[out]:bias
//!                  u8:has_weight_mask [f64[out*in]]
//!                  u8:has_unit_mask [u8[out]] } }
//! u32:n_optims  { str:name f64:lr f64:beta1 f64:beta2 f64:eps u64:step
//!                  u64:len f64[len]:m f64[len]:v }
//! ```
//! `str` is a u32 byte length followed by UTF-8.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AdamState, DenseLayer, DenseNet, NnError};

const MAGIC: &[u8; 4] = b"CMCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub nets: Vec<(String, DenseNet)>,
    pub optimizers: Vec<(String, AdamState)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Option<&DenseNet> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn optimizer(&self, name: &str) -> Option<&AdamState> {
        self.optimizers.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, FORMAT_VERSION)?;
        put_str(&mut w, &self.meta)?;
        put_u32(&mut w, self.nets.len() as u32)?;
        for (name, net) in &self.nets {
            put_str(&mut w, name)?;
            put_u32(&mut w, net.layers().len() as u32)?;
            for l in net.layers() {
                put_u32(&mut w, l.outputs() as u32)?;
                put_u32(&mut w, l.inputs() as u32)?;
                w.write_all(&[l.activation.code()])?;
                put_f64s(&mut w, l.weight.iter())?;
                put_f64s(&mut w, l.bias.iter())?;
                match l.weight_mask() {
                    Some(m) => {
                        w.write_all(&[1])?;
                        put_f64s(&mut w, m.iter())?;
                    }
                    None => w.write_all(&[0])?,
                }
                match l.unit_mask() {
                    Some(m) => {
                        w.write_all(&[1])?;
                        w.write_all(&m.iter().map(|&b| b as u8).collect::<Vec<_>>())?;
                    }
                    None => w.write_all(&[0])?,
                }
            }
        }
        put_u32(&mut w, self.optimizers.len() as u32)?;
        for (name, a) in &self.optimizers {
            put_str(&mut w, name)?;
            put_f64s(&mut w, [a.lr, a.beta1, a.beta2, a.eps].iter())?;
            w.write_all(&a.step.to_le_bytes())?;
            w.write_all(&(a.m.len() as u64).to_le_bytes())?;
            put_f64s(&mut w, a.m.iter())?;
            put_f64s(&mut w, a.v.iter())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("not a checkpoint file".into()));
        }
        let version = get_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let meta = get_str(&mut r)?;
        let n_nets = get_u32(&mut r)?;
        let mut nets = Vec::with_capacity(n_nets as usize);
        for _ in 0..n_nets {
            let name = get_str(&mut r)?;
            let n_layers = get_u32(&mut r)?;
            let mut layers = Vec::new();
            let mut masks = Vec::new();
            for _ in 0..n_layers {
                let out = get_u32(&mut r)? as usize;
                let inp = get_u32(&mut r)? as usize;
                let act = Activation::from_code(get_u8(&mut r)?)
                    .ok_or_else(|| NnError::Checkpoint("unknown activation code".into()))?;
                let weight = Array2::from_shape_vec((out, inp), get_f64s(&mut r, out * inp)?).expect("shape");
                let bias = Array1::from(get_f64s(&mut r, out)?);
                let wmask = match get_u8(&mut r)? {
                    0 => None,
                    _ => Some(Array2::from_shape_vec((out, inp), get_f64s(&mut r, out * inp)?).expect("shape")),
                };
                let umask = match get_u8(&mut r)? {
                    0 => None,
                    _ => {
                        let mut bytes = vec![0u8; out];
                        r.read_exact(&mut bytes)?;
                        Some(bytes.into_iter().map(|b| b != 0).collect())
                    }
                };
                layers.push(DenseLayer::new(weight, bias, act));
                masks.push((wmask, umask));
            }
            let mut net = DenseNet::from_layers(layers)?;
            for (i, (wm, um)) in masks.into_iter().enumerate() {
                net.restore_masks(i, wm, um);
            }
            nets.push((name, net));
        }
        let n_opt = get_u32(&mut r)?;
        let mut optimizers = Vec::with_capacity(n_opt as usize);
        for _ in 0..n_opt {
            let name = get_str(&mut r)?;
            let h = get_f64s(&mut r, 4)?;
            let step = get_u64(&mut r)?;
            let len = get_u64(&mut r)? as usize;
            let m = get_f64s(&mut r, len)?;
            let v = get_f64s(&mut r, len)?;
            optimizers.push((name, AdamState { lr: h[0], beta1: h[1], beta2: h[2], eps: h[3], step, m, v }));
        }
        Ok(Self { meta, nets, optimizers })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn put_f64s<'a, W: Write>(w: &mut W, vals: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String, NnError> {
    let len = get_u32(r)? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| NnError::Checkpoint("invalid UTF-8 string".into()))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
