//! Binary model file.
//!
//! Layout (little-endian):
//!
//! ```text
//! "BVNM" | version u8 | flags u8 (bit 0: mixture present) | activation u8 | layers u32
//! per layer: in u32 | out u32 | theta f64[out*in] | log_sigma2 f64[out*in] | bias f64[out]
//! mixture:   K u32 | zero_index i32 (-1 = none) | fixed_mask u8[K] | log_pi f64[K] | mu f64[K] | log_lambda f64[K]
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, Network, VariationalDenseLayer};
use crate::vb::{GaussianPosterior, MixturePrior};

pub const MODEL_MAGIC: &[u8; 4] = b"BVNM";
pub const MODEL_VERSION: u8 = 1;

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn model_to_bytes(net: &Network, prior: Option<&MixturePrior>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.push(prior.is_some() as u8);
    out.push(match net.activation {
        Activation::Relu => 0,
    });
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        put_f64s(&mut out, &layer.posterior.theta);
        put_f64s(&mut out, &layer.posterior.log_sigma2);
        put_f64s(&mut out, &layer.bias);
    }
    if let Some(p) = prior {
        out.extend_from_slice(&(p.k() as u32).to_le_bytes());
        out.extend_from_slice(&p.zero_index.map_or(-1i32, |z| z as i32).to_le_bytes());
        out.extend(p.fixed_mask.iter().map(|&b| b as u8));
        put_f64s(&mut out, &p.log_pi);
        put_f64s(&mut out, &p.mu);
        put_f64s(&mut out, &p.log_lambda);
    }
    out
}

/// Little-endian cursor shared by the binary formats.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt("model file truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(Network, Option<MixturePrior>)> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Corrupt("not a model file (bad magic)".into()));
    }
    let version = r.u8()?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let flags = r.u8()?;
    if flags > 1 {
        return Err(Error::Corrupt(format!("unknown flags {flags:#x}")));
    }
    let activation = match r.u8()? {
        0 => Activation::Relu,
        a => return Err(Error::Corrupt(format!("unknown activation {a}"))),
    };
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let d = in_dim
            .checked_mul(out_dim)
            .ok_or_else(|| Error::Corrupt("layer size overflow".into()))?;
        let theta = r.f64s(d)?;
        let log_sigma2 = r.f64s(d)?;
        let bias = r.f64s(out_dim)?;
        let post = GaussianPosterior::new(theta, log_sigma2)?;
        layers.push(VariationalDenseLayer::new(in_dim, out_dim, post, bias)?);
    }
    let net = Network::new(layers, activation)?;
    let prior = if flags & 1 == 1 {
        let k = r.u32()? as usize;
        let zero = r.i32()?;
        let mask: Vec<bool> = r.take(k)?.iter().map(|&b| b != 0).collect();
        let log_pi = r.f64s(k)?;
        let mu = r.f64s(k)?;
        let log_lambda = r.f64s(k)?;
        let zero_index = match zero {
            -1 => None,
            z if z >= 0 && (z as usize) < k => Some(z as usize),
            z => return Err(Error::Corrupt(format!("zero index {z} out of range"))),
        };
        if zero_index.is_some_and(|z| mu[z] != 0.0) {
            return Err(Error::Corrupt("zero-spike mean is not 0".into()));
        }
        Some(MixturePrior {
            log_pi,
            mu,
            log_lambda,
            zero_index,
            fixed_mask: mask,
        })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after model",
            bytes.len() - r.pos
        )));
    }
    Ok((net, prior))
}

pub fn save_model(path: impl AsRef<Path>, net: &Network, prior: Option<&MixturePrior>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(net, prior)).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Network, Option<MixturePrior>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> (Network, MixturePrior) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::random(&[5, 4, 3], -10.0, &mut rng).unwrap();
        net.layers[1].bias = vec![0.1, -0.2, 0.3];
        net.layers[0].posterior.log_sigma2[2] = -3.25;
        let prior = MixturePrior::from_proportions(&[0.2, 0.6, 0.2], &[-0.5, 0.0, 0.5], &[10.0, 20.0, 10.0])
            .unwrap()
            .with_zero_spike(1)
            .unwrap();
        (net, prior)
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let (net, prior) = sample();
        for p in [None, Some(&prior)] {
            let bytes = model_to_bytes(&net, p);
            let (net2, prior2) = model_from_bytes(&bytes).unwrap();
            assert_eq!(net2, net);
            assert_eq!(prior2.as_ref(), p);
            assert_eq!(model_to_bytes(&net2, prior2.as_ref()), bytes);
        }
    }

    #[test]
    fn tampered_version_is_refused() {
        let (net, _) = sample();
        let mut bytes = model_to_bytes(&net, None);
        bytes[4] = 9;
        assert!(matches!(
            model_from_bytes(&bytes),
            Err(Error::Version { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn corrupt_inputs() {
        let (net, prior) = sample();
        let bytes = model_to_bytes(&net, Some(&prior));
        assert!(model_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(model_from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(model_from_bytes(&bad).is_err());
        // second layer claims a different input width
        let mut shape = model_to_bytes(&net, None);
        let second = 11 + 8 + 8 * (2 * 20 + 4);
        shape[second..second + 4].copy_from_slice(&7u32.to_le_bytes());
        assert!(model_from_bytes(&shape).is_err());
    }
}
