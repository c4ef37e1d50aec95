//! Multi-scale patch discriminators.
//!
//! Three independent classifiers score the volume at full, half, and
//! quarter resolution (average-pooled inputs). Each classifier is three
//! stride-2 conv blocks with leaky ReLU (instance norm from the second
//! block on) and a final linear score map; no output nonlinearity, the
//! least-squares adversarial losses consume raw scores.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::error::{CoreError, Result};
use crate::tensor::{PadMode, Tensor};

const IN_EPS: f64 = 1e-5;
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { base_channels: 16 }
    }
}

struct Classifier {
    name: String,
    conv1: Tensor,
    bias1: Tensor,
    conv2: Tensor,
    gamma2: Tensor,
    beta2: Tensor,
    conv3: Tensor,
    gamma3: Tensor,
    beta3: Tensor,
    score: Tensor,
    score_bias: Tensor,
}

impl Classifier {
    fn new(name: String, base: usize, rng: &mut ChaCha8Rng) -> Self {
        let init = |shape: &[usize], rng: &mut ChaCha8Rng| -> Tensor {
            let fan_in: usize = shape[1..].iter().product();
            let std = (2.0 / fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n)
                .map(|_| {
                    use rand_distr::{Distribution, StandardNormal};
                    let g: f64 = StandardNormal.sample(rng);
                    g * std
                })
                .collect();
            Tensor::from_vec(shape, data).unwrap().requires_grad()
        };
        Classifier {
            conv1: init(&[base, 1, 3, 3, 3], rng),
            bias1: Tensor::zeros(&[base]).requires_grad(),
            conv2: init(&[2 * base, base, 3, 3, 3], rng),
            gamma2: Tensor::full(&[2 * base], 1.0).requires_grad(),
            beta2: Tensor::zeros(&[2 * base]).requires_grad(),
            conv3: init(&[4 * base, 2 * base, 3, 3, 3], rng),
            gamma3: Tensor::full(&[4 * base], 1.0).requires_grad(),
            beta3: Tensor::zeros(&[4 * base]).requires_grad(),
            score: init(&[1, 4 * base, 3, 3, 3], rng),
            score_bias: Tensor::zeros(&[1]).requires_grad(),
            name,
        }
    }

    fn forward(&self, v: &Tensor) -> Result<Tensor> {
        let h = v
            .conv3_strided(&self.conv1, PadMode::Same, 2)?
            .add_channel_bias(&self.bias1)?
            .leaky_relu(LEAKY_SLOPE);
        let h = h
            .conv3_strided(&self.conv2, PadMode::Same, 2)?
            .instance_norm(&self.gamma2, &self.beta2, IN_EPS)?
            .leaky_relu(LEAKY_SLOPE);
        let h = h
            .conv3_strided(&self.conv3, PadMode::Same, 2)?
            .instance_norm(&self.gamma3, &self.beta3, IN_EPS)?
            .leaky_relu(LEAKY_SLOPE);
        h.conv3(&self.score, PadMode::Same)?
            .add_channel_bias(&self.score_bias)
    }

    fn named(&self, out: &mut Vec<(String, Tensor)>) {
        let n = &self.name;
        out.push((format!("{n}.conv1"), self.conv1.clone()));
        out.push((format!("{n}.bias1"), self.bias1.clone()));
        out.push((format!("{n}.conv2"), self.conv2.clone()));
        out.push((format!("{n}.gamma2"), self.gamma2.clone()));
        out.push((format!("{n}.beta2"), self.beta2.clone()));
        out.push((format!("{n}.conv3"), self.conv3.clone()));
        out.push((format!("{n}.gamma3"), self.gamma3.clone()));
        out.push((format!("{n}.beta3"), self.beta3.clone()));
        out.push((format!("{n}.score"), self.score.clone()));
        out.push((format!("{n}.score_bias"), self.score_bias.clone()));
    }
}

/// Three patch classifiers at scales 1, 1/2, 1/4.
pub struct DiscriminatorBank {
    scales: Vec<Classifier>,
}

impl DiscriminatorBank {
    pub fn new(name: &str, config: &DiscriminatorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if config.base_channels == 0 {
            return Err(CoreError::Config("discriminator: base_channels must be positive".into()));
        }
        Ok(DiscriminatorBank {
            scales: (0..3)
                .map(|s| Classifier::new(format!("{name}.scale{s}"), config.base_channels, rng))
                .collect(),
        })
    }

    /// Score maps at the three scales for a [N, 1, D, H, W] batch whose
    /// spatial extents are divisible by 4.
    pub fn forward(&self, v: &Tensor) -> Result<[Tensor; 3]> {
        let s = v.shape();
        if s.len() != 5 || s[1] != 1 {
            return Err(CoreError::Shape(format!(
                "discriminator expects [N,1,D,H,W], got {:?}",
                s
            )));
        }
        if s[2..].iter().any(|e| e % 4 != 0) {
            return Err(CoreError::Shape(format!(
                "discriminator: extents {:?} must be divisible by 4",
                &s[2..]
            )));
        }
        let half = v.avg_pool2()?;
        let quarter = half.avg_pool2()?;
        Ok([
            self.scales[0].forward(v)?,
            self.scales[1].forward(&half)?,
            self.scales[2].forward(&quarter)?,
        ])
    }
}

impl Parameterized for DiscriminatorBank {
    fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for c in &self.scales {
            c.named(&mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff_at, max_rel_err, FD_STEP, FD_TOL};
    use crate::rng::stream_rng;

    fn rnd_input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = stream_rng(seed, "disc-test");
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn tiny_bank(seed: u64) -> DiscriminatorBank {
        let mut rng = stream_rng(seed, "disc-init");
        DiscriminatorBank::new("d", &DiscriminatorConfig { base_channels: 2 }, &mut rng).unwrap()
    }

    #[test]
    fn deterministic_score_maps_and_shapes() {
        let bank = tiny_bank(1);
        let v = rnd_input(&[1, 1, 16, 16, 16], 2);
        let a = bank.forward(&v).unwrap();
        let b = bank.forward(&v).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x.data(), *y.data());
        }
        assert_eq!(a[0].shape(), &[1, 1, 2, 2, 2]);
        assert_eq!(a[1].shape(), &[1, 1, 1, 1, 1]);
        assert_eq!(a[2].shape(), &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn rejects_indivisible_extents() {
        let bank = tiny_bank(3);
        let v = rnd_input(&[1, 1, 6, 6, 6], 4);
        assert!(bank.forward(&v).is_err());
    }

    #[test]
    fn translation_by_one_stride_unit_translates_score_map() {
        // overall stride of a classifier is 8; translate a compact blob by 8
        // voxels along x inside a large zero volume and compare interior
        // score positions
        let bank = tiny_bank(5);
        let quiet = Tensor::zeros(&[1, 1, 64, 64, 64]);
        let blob = rnd_input(&[1, 1, 4, 4, 4], 6);
        let place = |at: usize| -> Tensor {
            let mut data = quiet.to_vec();
            for z in 0..4 {
                for y in 0..4 {
                    for x in 0..4 {
                        data[((28 + z) * 64 + 28 + y) * 64 + at + x] =
                            blob.data()[(z * 4 + y) * 4 + x];
                    }
                }
            }
            Tensor::from_vec(&[1, 1, 64, 64, 64], data).unwrap()
        };
        let s0 = bank.scales[0].forward(&place(28)).unwrap(); // 8^3 score map
        let s1 = bank.scales[0].forward(&place(36)).unwrap();
        // compare interior positions: map index x in s0 corresponds to x+1 in s1
        let d0 = s0.data();
        let d1 = s1.data();
        for z in 2..6 {
            for y in 2..6 {
                for x in 2..5 {
                    let a = d0[(z * 8 + y) * 8 + x];
                    let b = d1[(z * 8 + y) * 8 + x + 1];
                    assert!(
                        (a - b).abs() < 1e-9,
                        "score at ({z},{y},{x}): {a} vs shifted {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn sampled_parameter_gradients_match_finite_differences() {
        let bank = tiny_bank(7);
        let v = rnd_input(&[1, 1, 8, 8, 8], 8);
        let w: Vec<Tensor> = (0..3)
            .map(|i| rnd_input(&[1, 1, 1, 1, 1], 9 + i), )
            .collect();
        let forward = |bank: &DiscriminatorBank| -> f64 {
            let maps = bank.forward(&v).unwrap();
            let mut loss = Tensor::scalar(0.0);
            for (m, wi) in maps.iter().zip(&w) {
                // weight each scale differently so every branch matters
                loss = loss.add(&m.sq_mean().mul(wi).unwrap()).unwrap();
            }
            loss.item()
        };

        let maps = bank.forward(&v).unwrap();
        let mut loss = Tensor::scalar(0.0);
        for (m, wi) in maps.iter().zip(&w) {
            loss = loss.add(&m.sq_mean().mul(wi).unwrap()).unwrap();
        }
        loss.backward().unwrap();

        for (name, p) in bank.named_params() {
            // probe a bounded sample of elements per parameter
            let n = p.numel();
            let idx: Vec<usize> = (0..n.min(6)).map(|i| i * (n / n.min(6)).max(1)).collect();
            let num = central_diff_at(&mut || forward(&bank), &p, &idx, FD_STEP);
            let got: Vec<f64> = {
                let g = p.grad_to_vec();
                idx.iter().map(|&i| g[i]).collect()
            };
            let err = max_rel_err(&got, &num);
            assert!(err < FD_TOL, "{name}: rel err {err}");
        }
    }
}
