//! Minimal differentiable core: dense tensors, GRU encoders, attention
//! pooling, classifier ops, Adam and finite-difference gradient checking.
//!
//! Backward passes are written by hand. Every layer exposes a forward that
//! returns a cache and a backward that consumes it and accumulates into a
//! gradient structure shaped like the parameters.

mod adam;
mod attention;
mod checkpoint;
mod gradcheck;
mod gru;
mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{
    attend_backward, attend_cached, attention_pool, conditioned_attention_pool, AttentionCache,
    AttentionOutput, AttnParams, MASK_PENALTY,
};
pub use checkpoint::{Checkpoint, StoredTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use gru::{bigru_backward, bigru_encode, bigru_forward, gru_cell, BiGruCache, GruParams};
pub use ops::{
    cross_entropy, dense, dropout, dropout_mask, softmax, softmax_cross_entropy_grad, PROB_FLOOR,
};
pub use tensor::Tensor;
pub(crate) use attention::concat_columns;
pub(crate) use tensor::axpy;

/// A structure owning a fixed, ordered list of named tensors.
pub trait Parameters {
    fn named_tensors(&self) -> Vec<(String, &Tensor)>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_parameters());
        for t in self.tensors() {
            flat.extend_from_slice(t.data());
        }
        flat
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, inner: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    inner
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}
