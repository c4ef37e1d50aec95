//! Network roles: the encoder-decoder deblurring generator, the linear
//! blur-kernel generator, and the multi-scale patch discriminators.

pub mod checkpoint;
mod discriminator;
mod generator;

pub use discriminator::{DiscriminatorBank, DiscriminatorConfig};
pub use generator::{BlurKernel, Generator, GeneratorConfig, KernelConstraint};

use crate::tensor::Tensor;

/// Anything owning trainable tensors. Parameter order is stable per model,
/// which checkpoints and optimizers rely on.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, Tensor)>;

    fn params(&self) -> Vec<Tensor> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn zero_grads(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    /// Load data into parameters by name; shapes must match.
    fn load_named(&self, values: &[(String, Vec<usize>, Vec<f64>)]) -> crate::Result<()> {
        let mine = self.named_params();
        for (name, shape, data) in values {
            let Some((_, p)) = mine.iter().find(|(n, _)| n == name) else {
                return Err(crate::CoreError::Config(format!(
                    "checkpoint parameter '{name}' not present in model"
                )));
            };
            if p.shape() != shape.as_slice() {
                return Err(crate::CoreError::Shape(format!(
                    "checkpoint parameter '{name}' has shape {:?}, model expects {:?}",
                    shape,
                    p.shape()
                )));
            }
            p.set_data(data);
        }
        Ok(())
    }
}

/// Stable digest of parameter data, used by tests that assert one update
/// phase never touches the other phase's parameters.
pub fn param_checksum<P: Parameterized>(model: &P) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in model.params() {
        for v in p.data().iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}
