//! `TTWT` named-parameter files.
//!
//! Layout (little-endian): magic `TTWT`, version byte, `u32` block count,
//! then per block a `u32` name length, UTF-8 name, rank byte, `u32` dims and
//! `f32` values. Adam moments are stored as extra blocks named
//! `{param}.adam_m` / `{param}.adam_v` plus a one-element `adam.step`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::network::Sequential;
use crate::scalar::Scalar;
use crate::tensor::{read_dims, read_f32_values, write_dims, write_f32_values, DenseTensor};

const MAGIC: &[u8; 4] = b"TTWT";
const VERSION: u8 = 1;
const ADAM_STEP: &str = "adam.step";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelWeights {
    pub blocks: Vec<(String, DenseTensor<f64>)>,
}

impl ModelWeights {
    pub fn from_network<T: Scalar>(net: &Sequential<T>) -> Self {
        Self {
            blocks: net.params().map(|(n, p)| (n, p.cast())).collect(),
        }
    }

    pub fn with_adam<T: Scalar>(mut self, net: &Sequential<T>, adam: &AdamState<T>) -> Self {
        if adam.m.is_empty() {
            return self;
        }
        for (suffix, moments) in [("adam_m", &adam.m), ("adam_v", &adam.v)] {
            for ((name, _), m) in net.params().zip(moments) {
                self.blocks.push((format!("{name}.{suffix}"), m.cast()));
            }
        }
        self.blocks
            .push((ADAM_STEP.into(), DenseTensor::new(&[1], vec![adam.step as f64]).unwrap()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&DenseTensor<f64>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies every parameter of `net` from the block with the same name.
    pub fn apply_to<T: Scalar>(&self, net: &mut Sequential<T>) -> Result<()> {
        self.apply_prefixed(net, "")
    }

    /// Like [`apply_to`](Self::apply_to) but reads block `"{prefix}{name}"`
    /// (used to load a sub-network from a larger file).
    pub fn apply_prefixed<T: Scalar>(&self, net: &mut Sequential<T>, prefix: &str) -> Result<()> {
        for (name, p) in net.params_mut() {
            let key = format!("{prefix}{name}");
            let src = self
                .get(&key)
                .ok_or_else(|| Error::Format(format!("weights lack block {key}")))?;
            src.expect_shape(&format!("weight block {key}"), p.shape())?;
            *p = src.cast();
        }
        Ok(())
    }

    pub fn adam_state<T: Scalar>(&self, net: &Sequential<T>, config: AdamConfig) -> Result<Option<AdamState<T>>> {
        let Some(step) = self.get(ADAM_STEP) else {
            return Ok(None);
        };
        let mut state = AdamState::new(config);
        state.step = step.data()[0] as u64;
        for (name, p) in net.params() {
            for (suffix, dst) in [("adam_m", &mut state.m), ("adam_v", &mut state.v)] {
                let key = format!("{name}.{suffix}");
                let t = self
                    .get(&key)
                    .ok_or_else(|| Error::Format(format!("weights lack block {key}")))?;
                t.expect_shape(&key, p.shape())?;
                dst.push(t.cast());
            }
        }
        Ok(Some(state))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.blocks.len() as u32).to_le_bytes())?;
        for (name, t) in &self.blocks {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[t.rank() as u8])?;
            write_dims(&mut w, t.shape())?;
            write_f32_values(&mut w, t.data())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 9];
        r.read_exact(&mut head)
            .map_err(|e| Error::Format(format!("TTWT header: {e}")))?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("missing TTWT magic".into()));
        }
        if head[4] != VERSION {
            return Err(Error::Format(format!("unsupported TTWT version {}", head[4])));
        }
        let count = u32::from_le_bytes([head[5], head[6], head[7], head[8]]) as usize;
        let mut blocks = Vec::with_capacity(count.min(4096));
        for i in 0..count {
            let mut len = [0u8; 4];
            r.read_exact(&mut len)
                .map_err(|e| Error::Format(format!("block {i}: {e}")))?;
            let mut name = vec![0u8; u32::from_le_bytes(len) as usize];
            r.read_exact(&mut name)
                .map_err(|e| Error::Format(format!("block {i} name: {e}")))?;
            let name = String::from_utf8(name).map_err(|_| Error::Format(format!("block {i} name is not UTF-8")))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)
                .map_err(|e| Error::Format(format!("block {name}: {e}")))?;
            let shape = read_dims(&mut r, rank[0] as usize)?;
            let data = read_f32_values(&mut r, shape.iter().product())?;
            blocks.push((name, DenseTensor::new(&shape, data)?));
        }
        Ok(Self { blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Sequential<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n = Sequential::new();
        n.push("fc", Dense::new(3, 2, &mut rng));
        n
    }

    #[test]
    fn round_trip_with_adam() {
        let mut a = net(1);
        let mut adam = AdamState::new(AdamConfig::default());
        let g = a.zero_grads().blocks.iter().map(|b| b.map(|_| 0.5)).collect::<Vec<_>>();
        adam.update(a.params_mut().map(|(_, p)| p), &g).unwrap();
        let w = ModelWeights::from_network(&a).with_adam(&a, &adam);
        let mut bytes = Vec::new();
        w.write(&mut bytes).unwrap();
        let back = ModelWeights::read(bytes.as_slice()).unwrap();
        assert_eq!(back.blocks.len(), 2 + 4 + 1);

        let mut b = net(9);
        back.apply_to(&mut b).unwrap();
        for ((_, x), (_, y)) in a.params().zip(b.params()) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert_eq!(*u as f32, *v as f32);
            }
        }
        let restored = back.adam_state(&b, AdamConfig::default()).unwrap().unwrap();
        assert_eq!(restored.step, 1);
    }

    #[test]
    fn shape_and_truncation_errors() {
        let w = ModelWeights::from_network(&net(1));
        let mut other = Sequential::<f64>::new();
        other.push("fc", Dense::new(4, 2, &mut ChaCha8Rng::seed_from_u64(0)));
        assert!(matches!(w.apply_to(&mut other), Err(Error::Shape { .. })));
        let mut bytes = Vec::new();
        w.write(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(ModelWeights::read(bytes.as_slice()), Err(Error::Format(_))));
    }
}
