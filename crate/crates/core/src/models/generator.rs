//! The deblurring generator (a 3D U-Net) and the linear blur-kernel
//! generator that replaces the second deep network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::error::{CoreError, Result};
use crate::tensor::{PadMode, Tensor};

const IN_EPS: f64 = 1e-5;

/// U-Net geometry. `depth` counts encoder levels including the bottleneck;
/// inputs must be divisible by 2^(depth-1). Channels double per level from
/// `base_channels`. The final activation is a sigmoid, fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub kernel_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            depth: 3,
            base_channels: 16,
            kernel_size: 3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(CoreError::Config("generator: depth must be at least 2".into()));
        }
        if self.base_channels == 0 {
            return Err(CoreError::Config("generator: base_channels must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(CoreError::Config("generator: kernel size must be odd".into()));
        }
        Ok(())
    }

    pub fn divisor(&self) -> usize {
        1 << (self.depth - 1)
    }
}

/// conv3 -> instance norm -> relu, the repeated building block.
struct ConvBlock {
    name: String,
    kernel: Tensor,
    gamma: Tensor,
    beta: Tensor,
}

impl ConvBlock {
    fn new(name: String, cin: usize, cout: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        ConvBlock {
            name,
            kernel: he_init(&[cout, cin, k, k, k], rng),
            gamma: Tensor::full(&[cout], 1.0).requires_grad(),
            beta: Tensor::zeros(&[cout]).requires_grad(),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.conv3(&self.kernel, PadMode::Same)?
            .instance_norm(&self.gamma, &self.beta, IN_EPS)?
            .relu())
    }

    fn named(&self, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{}.kernel", self.name), self.kernel.clone()));
        out.push((format!("{}.gamma", self.name), self.gamma.clone()));
        out.push((format!("{}.beta", self.name), self.beta.clone()));
    }
}

fn he_init(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| gauss(rng) * std).collect();
    Tensor::from_vec(shape, data).unwrap().requires_grad()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Modified 3D U-Net: per level two conv blocks, average pooling between
/// encoder levels, nearest upsampling plus skip concatenation in the
/// decoder, and a final single-channel convolution under a sigmoid.
pub struct Generator {
    config: GeneratorConfig,
    encoder: Vec<(ConvBlock, ConvBlock)>,
    decoder: Vec<(ConvBlock, ConvBlock)>,
    final_kernel: Tensor,
    final_bias: Tensor,
}

impl Generator {
    pub fn new(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let ch = |level: usize| config.base_channels << level;

        let mut encoder = Vec::new();
        for level in 0..config.depth {
            let cin = if level == 0 { 1 } else { ch(level - 1) };
            let cout = ch(level);
            encoder.push((
                ConvBlock::new(format!("enc{level}a"), cin, cout, k, rng),
                ConvBlock::new(format!("enc{level}b"), cout, cout, k, rng),
            ));
        }
        let mut decoder = Vec::new();
        for level in (0..config.depth - 1).rev() {
            let cin = ch(level + 1) + ch(level); // upsampled + skip
            let cout = ch(level);
            decoder.push((
                ConvBlock::new(format!("dec{level}a"), cin, cout, k, rng),
                ConvBlock::new(format!("dec{level}b"), cout, cout, k, rng),
            ));
        }
        Ok(Generator {
            final_kernel: he_init(&[1, config.base_channels, k, k, k], rng),
            final_bias: Tensor::zeros(&[1]).requires_grad(),
            config: config.clone(),
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Forward pass over a [N, 1, D, H, W] batch; output has the same
    /// extents with values strictly inside (0, 1).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 5 || s[1] != 1 {
            return Err(CoreError::Shape(format!(
                "generator expects [N,1,D,H,W], got {:?}",
                s
            )));
        }
        let div = self.config.divisor();
        if s[2..].iter().any(|e| e % div != 0) {
            return Err(CoreError::Shape(format!(
                "generator: extents {:?} must be divisible by {div} at depth {}",
                &s[2..],
                self.config.depth
            )));
        }

        let mut skips = Vec::new();
        let mut h = x.clone();
        for (level, (a, b)) in self.encoder.iter().enumerate() {
            h = b.forward(&a.forward(&h)?)?;
            if level + 1 < self.config.depth {
                skips.push(h.clone());
                h = h.avg_pool2()?;
            }
        }
        for (a, b) in &self.decoder {
            let up = h.upsample2()?;
            let skip = skips.pop().expect("skip per decoder level");
            h = b.forward(&a.forward(&up.concat_channels(&skip)?)?)?;
        }
        Ok(h
            .conv3(&self.final_kernel, PadMode::Same)?
            .add_channel_bias(&self.final_bias)?
            .sigmoid())
    }
}

impl Parameterized for Generator {
    fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (a, b) in &self.encoder {
            a.named(&mut out);
            b.named(&mut out);
        }
        for (a, b) in &self.decoder {
            a.named(&mut out);
            b.named(&mut out);
        }
        out.push(("final.kernel".into(), self.final_kernel.clone()));
        out.push(("final.bias".into(), self.final_bias.clone()));
        out
    }
}

/// Optional constraint projected onto the learned kernel after each step.
/// Training is unconstrained by default; the learned kernels are inspected
/// raw (plus smoothing), so constraints exist only for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelConstraint {
    None,
    NonNegUnitSum,
}

/// The linear blur generator: a single trainable convolution kernel.
pub struct BlurKernel {
    weights: Tensor,
    extents: [usize; 3],
    constraint: KernelConstraint,
}

impl BlurKernel {
    /// Delta initialization with small Gaussian jitter
    /// (sigma = 0.01 / extent) so training starts near the identity map.
    pub fn new(extents: [usize; 3], constraint: KernelConstraint, rng: &mut ChaCha8Rng) -> Result<Self> {
        if extents.iter().any(|e| e % 2 == 0 || *e == 0) {
            return Err(CoreError::Config(format!(
                "blur kernel extents must be odd, got {:?}",
                extents
            )));
        }
        let [kd, kh, kw] = extents;
        let sigma = 0.01 / kd as f64;
        let mut data: Vec<f64> = (0..kd * kh * kw).map(|_| gauss(rng) * sigma).collect();
        data[(kd / 2 * kh + kh / 2) * kw + kw / 2] += 1.0;
        Ok(BlurKernel {
            weights: Tensor::from_vec(&[1, 1, kd, kh, kw], data)
                .unwrap()
                .requires_grad(),
            extents,
            constraint,
        })
    }

    /// Fixed (non-trainable) kernel from a volume, for non-blind training.
    pub fn fixed(kernel: &crate::Volume) -> Result<Self> {
        let [kd, kh, kw] = kernel.extents();
        if [kd, kh, kw].iter().any(|e| e % 2 == 0) {
            return Err(CoreError::Config("blur kernel extents must be odd".into()));
        }
        Ok(BlurKernel {
            weights: Tensor::from_vec(&[1, 1, kd, kh, kw], kernel.to_vec()).unwrap(),
            extents: [kd, kh, kw],
            constraint: KernelConstraint::None,
        })
    }

    pub fn is_trainable(&self) -> bool {
        self.weights.is_grad_tracked()
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    /// Differentiable blur of a [N, 1, D, H, W] batch.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv3(&self.weights, PadMode::Same)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// Current kernel as a volume.
    pub fn to_volume(&self) -> crate::Volume {
        crate::Volume::new(self.extents, self.weights.to_vec()).expect("extents match")
    }

    /// Apply the configured constraint in place (no-op for `None`).
    pub fn project(&self) {
        if self.constraint == KernelConstraint::NonNegUnitSum {
            let mut data = self.weights.to_vec();
            for v in &mut data {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let s: f64 = data.iter().sum();
            if s > 0.0 {
                for v in &mut data {
                    *v /= s;
                }
            }
            self.weights.set_data(&data);
        }
    }
}

impl Parameterized for BlurKernel {
    fn named_params(&self) -> Vec<(String, Tensor)> {
        vec![("blur.kernel".into(), self.weights.clone())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_err, FD_STEP, FD_TOL};
    use crate::rng::stream_rng;

    fn tiny_config() -> GeneratorConfig {
        GeneratorConfig {
            depth: 2,
            base_channels: 2,
            kernel_size: 3,
        }
    }

    fn rnd_input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = stream_rng(seed, "gen-test");
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn output_extents_match_input_and_range_is_unit_interval() {
        let mut rng = stream_rng(1, "init");
        let g = Generator::new(&GeneratorConfig::default(), &mut rng).unwrap();
        for extent in [16usize, 32] {
            let x = rnd_input(&[1, 1, extent, extent, extent], extent as u64);
            let y = g.forward(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert!(y.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn rejects_indivisible_extents_before_compute() {
        let mut rng = stream_rng(2, "init");
        let g = Generator::new(&GeneratorConfig::default(), &mut rng).unwrap();
        let x = rnd_input(&[1, 1, 18, 18, 18], 3);
        assert!(matches!(g.forward(&x), Err(CoreError::Shape(_))));
    }

    #[test]
    fn generator_is_deterministic() {
        let mut rng = stream_rng(3, "init");
        let g = Generator::new(&tiny_config(), &mut rng).unwrap();
        let x = rnd_input(&[1, 1, 8, 8, 8], 4);
        let a = g.forward(&x).unwrap();
        let b = g.forward(&x).unwrap();
        assert_eq!(*a.data(), *b.data());
    }

    #[test]
    fn all_parameter_gradients_match_finite_differences_on_16cube() {
        let mut rng = stream_rng(5, "init");
        let g = Generator::new(&tiny_config(), &mut rng).unwrap();
        let x = rnd_input(&[1, 1, 16, 16, 16], 6);
        let loss = g.forward(&x).unwrap().mean();
        loss.backward().unwrap();
        for (name, p) in g.named_params() {
            let num = central_diff(&mut || g.forward(&x).unwrap().mean().item(), &p, FD_STEP);
            let err = max_rel_err(&p.grad_to_vec(), &num);
            assert!(err < FD_TOL, "{name}: rel err {err}");
        }
    }

    #[test]
    fn blur_kernel_delta_init_is_near_identity() {
        let mut rng = stream_rng(7, "init");
        let bk = BlurKernel::new([5, 5, 5], KernelConstraint::None, &mut rng).unwrap();
        let x = rnd_input(&[1, 1, 8, 8, 8], 8);
        let y = bk.forward(&x).unwrap();
        let max_dev = x
            .data()
            .iter()
            .zip(y.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 0.05, "delta+jitter init should be near identity, dev {max_dev}");

        // exact delta (fixed kernel) is exactly the identity
        let delta = crate::Volume::delta([5, 5, 5]);
        let fixed = BlurKernel::fixed(&delta).unwrap();
        let y = fixed.forward(&x).unwrap();
        assert_eq!(*y.data(), *x.data());
    }

    #[test]
    fn blur_kernel_gradient_matches_finite_differences() {
        let mut rng = stream_rng(9, "init");
        let bk = BlurKernel::new([3, 3, 3], KernelConstraint::None, &mut rng).unwrap();
        let x = rnd_input(&[1, 1, 6, 6, 6], 10);
        let target = rnd_input(&[1, 1, 6, 6, 6], 11);
        let forward = || -> f64 {
            let out = bk.forward(&x).unwrap();
            out.sub(&target).unwrap().sq_mean().item()
        };
        let loss = bk.forward(&x).unwrap().sub(&target).unwrap().sq_mean();
        loss.backward().unwrap();
        let p = &bk.params()[0];
        let num = central_diff(&mut || forward(), p, FD_STEP);
        let err = max_rel_err(&p.grad_to_vec(), &num);
        assert!(err < FD_TOL, "kernel rel err {err}");
    }

    #[test]
    fn blur_path_is_linear() {
        let mut rng = stream_rng(12, "init");
        let bk = BlurKernel::new([3, 3, 3], KernelConstraint::None, &mut rng).unwrap();
        let x = rnd_input(&[1, 1, 6, 6, 6], 13);
        let z = rnd_input(&[1, 1, 6, 6, 6], 14);
        let (a, b) = (0.8, -1.3);
        let lhs = bk.forward(&x.scale(a).add(&z.scale(b)).unwrap()).unwrap();
        let rhs = bk
            .forward(&x)
            .unwrap()
            .scale(a)
            .add(&bk.forward(&z).unwrap().scale(b))
            .unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data().iter()) {
            assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn parameter_count_asymmetry() {
        let mut rng = stream_rng(15, "init");
        let g = Generator::new(&GeneratorConfig::default(), &mut rng).unwrap();
        let bk = BlurKernel::new([9, 9, 9], KernelConstraint::None, &mut rng).unwrap();
        assert_eq!(bk.param_count(), 729);
        assert!(
            g.param_count() > 100 * bk.param_count(),
            "generator {} vs kernel {}",
            g.param_count(),
            bk.param_count()
        );
        // paper-scale kernel
        let bk31 = BlurKernel::new([31, 31, 31], KernelConstraint::None, &mut rng).unwrap();
        assert_eq!(bk31.param_count(), 29_791);
    }

    #[test]
    fn kernel_projection_constraint() {
        let mut rng = stream_rng(16, "init");
        let bk = BlurKernel::new([3, 3, 3], KernelConstraint::NonNegUnitSum, &mut rng).unwrap();
        let mut data = bk.weights().to_vec();
        data[0] = -0.4;
        bk.weights().set_data(&data);
        bk.project();
        let v = bk.to_volume();
        assert!(v.min() >= 0.0);
        assert!((v.sum() - 1.0).abs() < 1e-12);
    }
}
