use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::Parameters;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "han-affect/params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameter names mapped to shape and row-major data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn from_params<P: Parameters + ?Sized>(params: &P) -> Self {
        let params = params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| {
                (
                    name,
                    StoredTensor {
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params,
        }
    }

    /// Overwrites every tensor of `params`; names and shapes must match
    /// exactly.
    pub fn restore_into<P: Parameters + ?Sized>(&self, params: &mut P) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, checkpoint has {}",
                names.len(),
                self.params.len()
            )));
        }
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            let stored = self
                .params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if stored.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    stored.shape,
                    t.shape()
                )));
            }
            *t = Tensor::from_vec(&stored.shape, stored.data.clone())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GruParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_exact() {
        let p = GruParams::init(3, 2, &mut ChaCha8Rng::seed_from_u64(4));
        let json = serde_json::to_string(&Checkpoint::from_params(&p)).unwrap();
        let ckpt: Checkpoint = serde_json::from_str(&json).unwrap();
        let mut q = GruParams::zeros(3, 2);
        ckpt.restore_into(&mut q).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = GruParams::zeros(3, 2);
        let mut q = GruParams::zeros(4, 2);
        assert!(Checkpoint::from_params(&p).restore_into(&mut q).is_err());
    }
}
