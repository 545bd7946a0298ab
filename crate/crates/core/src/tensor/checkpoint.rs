//! Binary checkpoint container.
//!
//! All integers and floats are little-endian. Strings are a `u32` byte
//! length followed by UTF-8 bytes.
//!
//! ```text
//! magic        4 bytes   "VTL1"
//! version      u32       1
//! family       string    model-family tag, e.g. "ptrnet"
//! meta         string    JSON object (training step, config snapshot, ...)
//! n_tensors    u32
//!   name       string
//!   ndim       u32
//!   dims       u64 × ndim
//!   payload    f32 × product(dims)
//! n_groups     u32       optimizer groups
//!   name       string
//!   step       u64
//!   beta1      f64
//!   beta2      f64
//!   epsilon    f64
//!   n_params   u32
//!     param    string    name of a tensor in the table above
//!     m        f32 × len(param)
//!     v        f32 × len(param)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Adam, AdamState, Element, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VTL1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerRecord {
    pub name: String,
    pub param_names: Vec<String>,
    pub state: AdamState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub family: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub optimizers: Vec<OptimizerRecord>,
}

impl Checkpoint {
    pub fn from_store<T: Element>(family: &str, meta: serde_json::Value, store: &ParamStore<T>) -> Self {
        let tensors = store
            .iter()
            .map(|(name, t)| {
                let plain = Tensor::new(t.shape(), t.data().iter().map(|v| v.to_f64() as f32).collect())
                    .expect("shape preserved");
                (name.to_string(), plain)
            })
            .collect();
        Self {
            family: family.to_string(),
            meta,
            tensors,
            optimizers: Vec::new(),
        }
    }

    pub fn with_optimizer<T: Element>(mut self, name: &str, store: &ParamStore<T>, opt: &Adam) -> Self {
        self.optimizers.push(OptimizerRecord {
            name: name.to_string(),
            param_names: opt.params.iter().map(|&id| store.name(id).to_string()).collect(),
            state: opt.state.clone(),
        });
        self
    }

    pub fn optimizer(&self, name: &str) -> Option<&OptimizerRecord> {
        self.optimizers.iter().find(|o| o.name == name)
    }

    /// Copy tensors into `store` by name. See [`ParamStore::load_named`].
    pub fn load_into<T: Element>(&self, store: &mut ParamStore<T>, strict: bool) -> Result<usize> {
        let cast: Vec<(String, Tensor<T>)> = self
            .tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.cast()))
            .collect();
        store.load_named(cast.iter().map(|(n, t)| (n.as_str(), t)), strict)
    }

    /// Restore an optimizer's moments, matching parameters by name.
    pub fn restore_optimizer<T: Element>(&self, name: &str, store: &ParamStore<T>, opt: &mut Adam) -> Result<()> {
        let rec = self
            .optimizer(name)
            .ok_or_else(|| Error::Data(format!("checkpoint has no optimizer group {name}")))?;
        let names: Vec<&str> = opt.params.iter().map(|&id| store.name(id)).collect();
        if names != rec.param_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Data(format!(
                "optimizer group {name} parameter list differs from the checkpoint"
            )));
        }
        opt.state = rec.state.clone();
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(w, &self.family)?;
        write_str(w, &self.meta.to_string())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            write_f32s(w, t.data())?;
        }
        w.write_all(&(self.optimizers.len() as u32).to_le_bytes())?;
        for o in &self.optimizers {
            write_str(w, &o.name)?;
            w.write_all(&o.state.step.to_le_bytes())?;
            w.write_all(&o.state.beta1.to_le_bytes())?;
            w.write_all(&o.state.beta2.to_le_bytes())?;
            w.write_all(&o.state.epsilon.to_le_bytes())?;
            w.write_all(&(o.param_names.len() as u32).to_le_bytes())?;
            for (i, p) in o.param_names.iter().enumerate() {
                write_str(w, p)?;
                write_f32s(w, &o.state.first_moment[i])?;
                write_f32s(w, &o.state.second_moment[i])?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Data(format!("bad checkpoint magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {version}")));
        }
        let family = read_str(r)?;
        let meta = serde_json::from_str(&read_str(r)?)
            .map_err(|e| Error::Data(format!("checkpoint meta: {e}")))?;
        let n = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = read_str(r)?;
            let ndim = read_u32(r)? as usize;
            let shape = (0..ndim)
                .map(|_| read_u64(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = shape.iter().product();
            let data = read_f32s(r, len)?;
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        let groups = read_u32(r)? as usize;
        let mut optimizers = Vec::with_capacity(groups);
        for _ in 0..groups {
            let name = read_str(r)?;
            let step = read_u64(r)?;
            let beta1 = read_f64(r)?;
            let beta2 = read_f64(r)?;
            let epsilon = read_f64(r)?;
            let np = read_u32(r)? as usize;
            let mut param_names = Vec::with_capacity(np);
            let mut first_moment = Vec::with_capacity(np);
            let mut second_moment = Vec::with_capacity(np);
            for _ in 0..np {
                let p = read_str(r)?;
                let len = tensors
                    .iter()
                    .find(|(n, _)| *n == p)
                    .map(|(_, t)| t.len())
                    .ok_or_else(|| Error::Data(format!("optimizer references unknown tensor {p}")))?;
                first_moment.push(read_f32s(r, len)?);
                second_moment.push(read_f32s(r, len)?);
                param_names.push(p);
            }
            optimizers.push(OptimizerRecord {
                name,
                param_names,
                state: AdamState {
                    step,
                    beta1,
                    beta2,
                    epsilon,
                    first_moment,
                    second_moment,
                },
            });
        }
        Ok(Self {
            family,
            meta,
            tensors,
            optimizers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}

fn truncated(e: std::io::Error) -> Error {
    Error::Data(format!("truncated checkpoint: {e}"))
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn write_f32s(w: &mut impl Write, v: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 4);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(truncated)?;
    String::from_utf8(b).map_err(|e| Error::Data(format!("checkpoint string: {e}")))
}

fn read_f32s(r: &mut impl Read, len: usize) -> Result<Vec<f32>> {
    let mut b = vec![0u8; len * 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b.chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LrPolicy;

    #[test]
    fn header_layout_is_stable() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::new(&[2], vec![1.0, -0.5]).unwrap());
        let ck = Checkpoint::from_store("seq2seq", serde_json::json!({}), &store);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"VTL1");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &7u32.to_le_bytes());
        assert_eq!(&buf[12..19], b"seq2seq");
        // meta "{}" then one tensor
        assert_eq!(&buf[19..23], &2u32.to_le_bytes());
        assert_eq!(&buf[23..25], b"{}");
        assert_eq!(&buf[25..29], &1u32.to_le_bytes());
        let tail = &buf[buf.len() - 12..];
        assert_eq!(&tail[..4], &1.0f32.to_le_bytes());
        assert_eq!(&tail[4..8], &(-0.5f32).to_le_bytes());
        assert_eq!(&tail[8..], &0u32.to_le_bytes());
    }

    #[test]
    fn optimizer_state_survives() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let mut opt = Adam::new(&store, vec![id], LrPolicy::Constant { lr: 0.01 });
        store.get_mut(id).grad = Some(vec![0.1, -0.2, 0.3]);
        opt.step(&mut store).unwrap();
        let ck = Checkpoint::from_store("ptrnet", serde_json::json!({"step": 1}), &store)
            .with_optimizer("all", &store, &opt);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);

        let mut fresh = Adam::new(&store, vec![id], LrPolicy::Constant { lr: 0.01 });
        back.restore_optimizer("all", &store, &mut fresh).unwrap();
        assert_eq!(fresh.state, opt.state);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"NOPE\x01\x00\x00\x00".to_vec();
        assert!(matches!(
            Checkpoint::read_from(&mut buf.as_slice()),
            Err(Error::Data(_))
        ));
    }
}
