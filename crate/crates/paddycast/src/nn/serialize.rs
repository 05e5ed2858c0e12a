//! Versioned binary model container: magic bytes "RCNS1", little-endian
//! 64-bit reals, a layer manifest header, and the run's seed plus config
//! hash so every artifact is self-describing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::regressors::ElasticNetParams;

use super::{Activation, LayerSpec, Model, ModelSpec, NodeSpec};

pub const MAGIC: &[u8; 5] = b"RCNS1";

/// Run provenance embedded in every model file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelMeta {
    pub config_hash: String,
    pub seed: u64,
}

/// Either a trained network or a fitted linear baseline, tagged by kind.
#[derive(Debug, Clone)]
pub enum ModelContainer {
    Neural(Model),
    ElasticNet(ElasticNetParams),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Serialization("unexpected end of model file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
        Activation::Silu => 2,
        Activation::Tanh => 3,
        Activation::Linear => 4,
    }
}

fn activation_from_tag(t: u8) -> Result<Activation> {
    Ok(match t {
        0 => Activation::Relu,
        1 => Activation::Sigmoid,
        2 => Activation::Silu,
        3 => Activation::Tanh,
        4 => Activation::Linear,
        _ => return Err(Error::Serialization(format!("unknown activation tag {t}"))),
    })
}

fn write_layer(w: &mut Writer, layer: &LayerSpec) {
    match layer {
        LayerSpec::Dense { units } => {
            w.u8(0);
            w.u32(*units as u32);
        }
        LayerSpec::Conv1d {
            filters,
            kernel,
            stride,
        } => {
            w.u8(1);
            w.u32(*filters as u32);
            w.u32(*kernel as u32);
            w.u32(*stride as u32);
        }
        LayerSpec::Activation(a) => {
            w.u8(2);
            w.u8(activation_tag(*a));
        }
        LayerSpec::Flatten => w.u8(3),
        LayerSpec::Concat => w.u8(4),
    }
}

fn read_layer(r: &mut Reader) -> Result<LayerSpec> {
    Ok(match r.u8()? {
        0 => LayerSpec::Dense {
            units: r.u32()? as usize,
        },
        1 => LayerSpec::Conv1d {
            filters: r.u32()? as usize,
            kernel: r.u32()? as usize,
            stride: r.u32()? as usize,
        },
        2 => LayerSpec::Activation(activation_from_tag(r.u8()?)?),
        3 => LayerSpec::Flatten,
        4 => LayerSpec::Concat,
        t => return Err(Error::Serialization(format!("unknown layer tag {t}"))),
    })
}

/// Serialize a container to bytes.
pub fn encode(container: &ModelContainer, meta: &ModelMeta) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u64(meta.seed);
    w.u8(meta.config_hash.len() as u8);
    w.bytes(meta.config_hash.as_bytes());
    match container {
        ModelContainer::Neural(model) => {
            w.u8(0);
            let spec = model.spec();
            w.u32(spec.input_dim as u32);
            w.u32(spec.nodes.len() as u32);
            for node in &spec.nodes {
                write_layer(&mut w, &node.layer);
                w.u32(node.inputs.len() as u32);
                for &i in &node.inputs {
                    w.u32(i as u32);
                }
            }
            w.u32(spec.output as u32);
            match spec.aux_output {
                Some(aux) => {
                    w.u8(1);
                    w.u32(aux as u32);
                }
                None => w.u8(0),
            }
            let params = model.get_params();
            w.u64(params.len() as u64);
            for v in params {
                w.f64(v);
            }
        }
        ModelContainer::ElasticNet(p) => {
            w.u8(1);
            w.u32(p.weights.len() as u32);
            for v in &p.weights {
                w.f64(*v);
            }
            w.f64(p.intercept);
            w.f64(p.l1_mix);
            w.f64(p.penalty);
        }
    }
    w.buf
}

/// Parse a container from bytes.
pub fn decode(bytes: &[u8]) -> Result<(ModelContainer, ModelMeta)> {
    let mut r = Reader::new(bytes);
    if r.take(5)? != MAGIC {
        return Err(Error::Serialization("bad magic bytes".into()));
    }
    let seed = r.u64()?;
    let hash_len = r.u8()? as usize;
    let config_hash = String::from_utf8(r.take(hash_len)?.to_vec())
        .map_err(|_| Error::Serialization("config hash is not UTF-8".into()))?;
    let meta = ModelMeta { config_hash, seed };
    let kind = r.u8()?;
    let container = match kind {
        0 => {
            let input_dim = r.u32()? as usize;
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let layer = read_layer(&mut r)?;
                let n_inputs = r.u32()? as usize;
                let inputs = (0..n_inputs)
                    .map(|_| r.u32().map(|v| v as usize))
                    .collect::<Result<Vec<_>>>()?;
                nodes.push(NodeSpec { layer, inputs });
            }
            let output = r.u32()? as usize;
            let aux_output = if r.u8()? == 1 {
                Some(r.u32()? as usize)
            } else {
                None
            };
            let n_params = r.u64()? as usize;
            let params = (0..n_params)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            let spec = ModelSpec {
                input_dim,
                nodes,
                output,
                aux_output,
            };
            ModelContainer::Neural(Model::from_parts(spec, &params)?)
        }
        1 => {
            let n = r.u32()? as usize;
            let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            ModelContainer::ElasticNet(ElasticNetParams {
                weights,
                intercept: r.f64()?,
                l1_mix: r.f64()?,
                penalty: r.f64()?,
            })
        }
        t => return Err(Error::Serialization(format!("unknown container kind {t}"))),
    };
    Ok((container, meta))
}

/// Write a container to disk via a temp file and atomic rename.
pub fn save(path: &Path, container: &ModelContainer, meta: &ModelMeta) -> Result<()> {
    let bytes = encode(container, meta);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ModelContainer, ModelMeta)> {
    decode(&fs::read(path)?)
}
