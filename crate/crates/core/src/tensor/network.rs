//! Sequential networks with parameter registry and checkpoint container.

use super::layer::{shape4, Layer};
use super::{Param, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use std::io::{Read, Write};

const CKPT_MAGIC: &[u8; 8] = b"LCKPT\0v1";

/// An ordered layer stack over NCHW tensors. The declared input shape is
/// (channels, height, width); any batch size is accepted.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: (usize, usize, usize),
    output_shape: (usize, usize, usize),
    forward_done: bool,
}

impl Network {
    /// Builds the network and validates that layer shapes chain together
    /// for the declared input.
    pub fn new(input_shape: (usize, usize, usize), layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape;
        for layer in &layers {
            shape = layer.out_shape(shape)?;
        }
        Ok(Self { layers, input_shape, output_shape: shape, forward_done: false })
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        self.output_shape
    }

    /// Glorot-uniform initialization of every conv in layer order.
    pub fn init(&mut self, rng: &mut SplitMix64) {
        for layer in &mut self.layers {
            layer.init(rng);
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [_, c, h, w] = shape4(x)?;
        if (c, h, w) != self.input_shape {
            return Err(Error::ShapeMismatch {
                expected: vec![self.input_shape.0, self.input_shape.1, self.input_shape.2],
                got: vec![c, h, w],
            });
        }
        let mut y = x.clone();
        for layer in &mut self.layers {
            y = layer.forward(&y)?;
        }
        self.forward_done = true;
        Ok(y)
    }

    /// Propagates an output gradient back through the layers in exact
    /// reverse order, accumulating parameter gradients, and returns the
    /// gradient with respect to the input.
    pub fn backward(&mut self, output_grad: &Tensor) -> Result<Tensor> {
        if !self.forward_done {
            return Err(Error::BackwardBeforeForward);
        }
        let mut g = output_grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn visit_params<'a>(&'a self, f: &mut impl FnMut(String, &'a Param)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit_params(&format!("l{i}"), f);
        }
    }

    pub fn visit_params_mut<'a>(&'a mut self, f: &mut impl FnMut(String, &'a mut Param)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("l{i}"), f);
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.push(p));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.visit_params_mut(&mut |_, p| out.push(p));
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, p| out.push((name, p)));
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_element_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }

    /// Flat copy of all parameter values, for freeze-contract assertions.
    pub fn snapshot_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_element_count());
        for p in self.params() {
            out.extend_from_slice(p.value.data());
        }
        out
    }
}

/// Writes named networks into the `LCKPT` container: magic, param count
/// u32, then per parameter: name length u32, UTF-8 name, ndim u32, dims
/// u32 each, payload f32 LE (values narrowed from f64).
pub fn save_checkpoint(networks: &[(&str, &Network)], sink: &mut impl Write) -> Result<()> {
    let mut entries: Vec<(String, &Param)> = Vec::new();
    for (prefix, net) in networks {
        for (name, p) in net.named_params() {
            entries.push((format!("{prefix}.{name}"), p));
        }
    }
    sink.write_all(CKPT_MAGIC)?;
    sink.write_all(&u32::try_from(entries.len()).unwrap().to_le_bytes())?;
    for (name, p) in entries {
        let bytes = name.as_bytes();
        sink.write_all(&u32::try_from(bytes.len()).unwrap().to_le_bytes())?;
        sink.write_all(bytes)?;
        let shape = p.value.shape();
        sink.write_all(&u32::try_from(shape.len()).unwrap().to_le_bytes())?;
        for &d in shape {
            sink.write_all(&u32::try_from(d).unwrap().to_le_bytes())?;
        }
        for &v in p.value.data() {
            sink.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Loads a checkpoint written by [`save_checkpoint`] into the given
/// networks. Every stored entry must match a parameter by name and shape;
/// values widen from f32 to f64.
pub fn load_checkpoint(networks: &mut [(&str, &mut Network)], source: &mut impl Read) -> Result<()> {
    let mut magic = [0u8; 8];
    read_exact(source, &mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::BadMagic("checkpoint"));
    }
    let count = read_u32(source)? as usize;

    let mut stored: std::collections::HashMap<String, (Vec<usize>, Vec<f64>)> =
        std::collections::HashMap::new();
    for _ in 0..count {
        let name_len = read_u32(source)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(source, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Config("checkpoint entry name is not UTF-8".into()))?;
        let ndim = read_u32(source)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(source)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 4];
        read_exact(source, &mut payload)?;
        let values = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        stored.insert(name, (shape, values));
    }

    for (prefix, net) in networks.iter_mut() {
        let mut err = None;
        let prefix = prefix.to_string();
        net.visit_params_mut(&mut |name, p| {
            if err.is_some() {
                return;
            }
            let full = format!("{prefix}.{name}");
            match stored.remove(&full) {
                None => err = Some(Error::Config(format!("checkpoint missing parameter '{full}'"))),
                Some((shape, values)) => {
                    if shape != p.value.shape() {
                        err = Some(Error::ShapeMismatch {
                            expected: p.value.shape().to_vec(),
                            got: shape,
                        });
                    } else {
                        p.value.data_mut().copy_from_slice(&values);
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    if let Some(name) = stored.keys().next() {
        return Err(Error::Config(format!("checkpoint has unexpected parameter '{name}'")));
    }
    Ok(())
}

fn read_exact(source: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => return Err(Error::Truncated { expected: buf.len() - filled, got: filled }),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn read_u32(source: &mut impl Read) -> Result<u32> {
    let mut word = [0u8; 4];
    read_exact(source, &mut word)?;
    Ok(u32::from_le_bytes(word))
}
