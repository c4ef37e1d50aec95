//! Forward simulation: synthetic phantoms, the blur + noise measurement
//! model, patch handling, dataset generation, and volume I/O.

pub mod dataset;
pub mod noise;
pub mod patches;
pub mod phantom;
pub mod volume;

pub use dataset::{generate_dataset, Dataset, DatasetManifest, DatasetSpec};
pub use noise::{add_noise, NoiseSpec};
pub use patches::{crop_patches, merge_patches, Patch};
pub use phantom::make_phantom;
pub use volume::Volume;

use crate::error::{CoreError, Result};

/// Zero-padded "same" blur of a volume by a kernel.
///
/// Cross-correlation semantics, matching `Tensor::conv3`; the Born & Wolf
/// and Gaussian PSFs are symmetric, so physical convolution coincides. For
/// an asymmetric kernel, flip it once at construction (`Volume::flipped`).
///
/// This is a deliberately independent implementation from the tensor path;
/// the two are cross-checked in tests.
pub fn blur(x: &Volume, kernel: &Volume) -> Result<Volume> {
    let [d, h, w] = x.extents();
    let [kd, kh, kw] = kernel.extents();
    if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
        return Err(CoreError::Config(format!(
            "blur: kernel extents must be odd, got {kd}x{kh}x{kw}"
        )));
    }
    if kd > d || kh > h || kw > w {
        return Err(CoreError::Shape(format!(
            "blur: kernel {kd}x{kh}x{kw} exceeds volume {d}x{h}x{w}"
        )));
    }
    let (cz, cy, cx) = ((kd / 2) as i64, (kh / 2) as i64, (kw / 2) as i64);
    let xin = x.data();
    let kdat = kernel.data();
    let mut out = vec![0.0f64; d * h * w];
    for kz in 0..kd as i64 {
        let oz = kz - cz;
        let zlo = (-oz).max(0) as usize;
        let zhi = ((d as i64 - oz).min(d as i64)) as usize;
        for ky in 0..kh as i64 {
            let oy = ky - cy;
            let ylo = (-oy).max(0) as usize;
            let yhi = ((h as i64 - oy).min(h as i64)) as usize;
            for kx in 0..kw as i64 {
                let a = kdat[((kz as usize * kh) + ky as usize) * kw + kx as usize];
                if a == 0.0 {
                    continue;
                }
                let ox = kx - cx;
                let xlo = (-ox).max(0) as usize;
                let xhi = ((w as i64 - ox).min(w as i64)) as usize;
                for z in zlo..zhi {
                    let src_z = (z as i64 + oz) as usize;
                    for y in ylo..yhi {
                        let src_row = (src_z * h + (y as i64 + oy) as usize) * w;
                        let dst_row = (z * h + y) * w;
                        let src = &xin[src_row + (xlo as i64 + ox) as usize..];
                        let dst = &mut out[dst_row + xlo..dst_row + xhi];
                        for (o, i) in dst.iter_mut().zip(src) {
                            *o += a * i;
                        }
                    }
                }
            }
        }
    }
    let mut v = Volume::new([d, h, w], out)?;
    if let Some(vs) = x.voxel_size() {
        v = v.with_voxel_size(vs);
    }
    Ok(v)
}

/// Blur with the adjoint (flipped) kernel; the transpose of [`blur`] as a
/// linear operator under zero padding. Used by the classical solvers.
pub fn blur_adjoint(x: &Volume, kernel: &Volume) -> Result<Volume> {
    blur(x, &kernel.flipped())
}
