//! Crop-and-merge patch handling.
//!
//! Cropping tiles a volume with strided cubic patches (the final position
//! per axis is clamped so the volume edge is always covered) and can apply
//! random axis flips and lateral-plane 90-degree rotations. Merging blends
//! patches back with linear feathering weights that normalize to a
//! partition of unity per voxel.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::simulate::volume::Volume;

/// A cropped (possibly augmented) patch and its origin in the source volume.
#[derive(Debug, Clone)]
pub struct Patch {
    pub volume: Volume,
    pub position: [usize; 3],
}

/// Strided tiling positions covering [0, extent) with cube side `patch`.
pub fn tile_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut pos = Vec::new();
    let mut p = 0usize;
    loop {
        if p + patch >= extent {
            pos.push(extent - patch);
            break;
        }
        pos.push(p);
        p += stride;
    }
    pos.dedup();
    pos
}

fn extract(v: &Volume, origin: [usize; 3], patch: usize) -> Volume {
    let mut out = Volume::zeros([patch, patch, patch]);
    for z in 0..patch {
        for y in 0..patch {
            let src = v.index(origin[0] + z, origin[1] + y, origin[2]);
            let dst = out.index(z, y, 0);
            let (sd, od) = (v.data(), out.data_mut());
            od[dst..dst + patch].copy_from_slice(&sd[src..src + patch]);
        }
    }
    out
}

/// Flip a cubic patch along one axis (0 = z, 1 = y, 2 = x).
pub fn flip_axis(v: &Volume, axis: usize) -> Volume {
    let [d, h, w] = v.extents();
    let mut out = Volume::zeros([d, h, w]);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let (sz, sy, sx) = match axis {
                    0 => (d - 1 - z, y, x),
                    1 => (z, h - 1 - y, x),
                    _ => (z, y, w - 1 - x),
                };
                let idx = out.index(z, y, x);
                out.data_mut()[idx] = v.at(sz, sy, sx);
            }
        }
    }
    out
}

/// Rotate a patch by k * 90 degrees in the lateral (H, W) plane.
/// Requires H == W.
pub fn rotate_lateral(v: &Volume, k: usize) -> Volume {
    let [d, h, w] = v.extents();
    assert_eq!(h, w, "lateral rotation requires square lateral extents");
    let mut out = Volume::zeros([d, h, w]);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = match k % 4 {
                    0 => (y, x),
                    1 => (w - 1 - x, y),
                    2 => (h - 1 - y, w - 1 - x),
                    _ => (x, h - 1 - y),
                };
                let idx = out.index(z, y, x);
                out.data_mut()[idx] = v.at(z, sy, sx);
            }
        }
    }
    out
}

/// Crop a volume into strided cubic patches. With `augment`, each patch is
/// independently flipped per axis with probability 1/2 and rotated by a
/// uniform multiple of 90 degrees in the lateral plane; draws are
/// deterministic under `seed`.
pub fn crop_patches(
    v: &Volume,
    patch: usize,
    stride: usize,
    augment: bool,
    seed: u64,
) -> Result<Vec<Patch>> {
    let [d, h, w] = v.extents();
    if patch == 0 || stride == 0 {
        return Err(CoreError::Config("crop: patch and stride must be positive".into()));
    }
    if patch > d || patch > h || patch > w {
        return Err(CoreError::Config(format!(
            "crop: patch {patch} exceeds volume extents {d}x{h}x{w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &z in &tile_positions(d, patch, stride) {
        for &y in &tile_positions(h, patch, stride) {
            for &x in &tile_positions(w, patch, stride) {
                let mut cube = extract(v, [z, y, x], patch);
                if augment {
                    for axis in 0..3 {
                        if rng.random::<bool>() {
                            cube = flip_axis(&cube, axis);
                        }
                    }
                    let k = rng.random_range(0..4usize);
                    if k > 0 {
                        cube = rotate_lateral(&cube, k);
                    }
                }
                out.push(Patch {
                    volume: cube,
                    position: [z, y, x],
                });
            }
        }
    }
    Ok(out)
}

/// Per-axis feathering weight: a linear ramp over `overlap` voxels at each
/// patch border, flat 1 in the interior.
fn feather_weight(i: usize, len: usize, overlap: usize) -> f64 {
    let mut w = 1.0f64;
    if overlap > 0 {
        if i < overlap {
            w = w.min((i + 1) as f64 / (overlap + 1) as f64);
        }
        if i >= len - overlap.min(len) {
            w = w.min((len - i) as f64 / (overlap + 1) as f64);
        }
    }
    w
}

/// Reassemble patches into a volume of the given extents by per-voxel
/// weighted averaging with feathering weights. The weights are normalized
/// per voxel, forming a partition of unity wherever coverage exists; a
/// voxel covered by no patch is a structured error.
pub fn merge_patches(patches: &[Patch], extents: [usize; 3], overlap: usize) -> Result<Volume> {
    let [d, h, w] = extents;
    let mut acc = vec![0.0f64; d * h * w];
    let mut wsum = vec![0.0f64; d * h * w];
    for p in patches {
        let [pd, ph, pw] = p.volume.extents();
        let [oz, oy, ox] = p.position;
        if oz + pd > d || oy + ph > h || ox + pw > w {
            return Err(CoreError::Shape(format!(
                "merge: patch at {:?} with extents {:?} exceeds volume {:?}",
                p.position,
                p.volume.extents(),
                extents
            )));
        }
        for z in 0..pd {
            let wz = feather_weight(z, pd, overlap);
            for y in 0..ph {
                let wy = feather_weight(y, ph, overlap);
                for x in 0..pw {
                    let wx = feather_weight(x, pw, overlap);
                    let wgt = wz * wy * wx;
                    let idx = ((oz + z) * h + oy + y) * w + ox + x;
                    acc[idx] += wgt * p.volume.at(z, y, x);
                    wsum[idx] += wgt;
                }
            }
        }
    }
    for (i, ws) in wsum.iter().enumerate() {
        if *ws == 0.0 {
            let z = i / (h * w);
            let y = (i / w) % h;
            let x = i % w;
            return Err(CoreError::CoverageGap(z, y, x));
        }
    }
    for (a, ws) in acc.iter_mut().zip(&wsum) {
        *a /= ws;
    }
    Volume::new(extents, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_volume(extents: [usize; 3]) -> Volume {
        let mut v = Volume::zeros(extents);
        for (i, d) in v.data_mut().iter_mut().enumerate() {
            *d = (i % 251) as f64 / 251.0;
        }
        v
    }

    #[test]
    fn tiling_without_augment_partitions_exactly() {
        let v = ramp_volume([16, 16, 16]);
        let patches = crop_patches(&v, 8, 8, false, 0).unwrap();
        assert_eq!(patches.len(), 8);
        let merged = merge_patches(&patches, [16, 16, 16], 0).unwrap();
        assert_eq!(merged.data(), v.data());
    }

    #[test]
    fn augmented_patches_preserve_value_sets() {
        let v = ramp_volume([16, 16, 16]);
        let plain = crop_patches(&v, 8, 8, false, 0).unwrap();
        let aug = crop_patches(&v, 8, 8, true, 3).unwrap();
        for (p, a) in plain.iter().zip(&aug) {
            let mut pv = p.volume.to_vec();
            let mut av = a.volume.to_vec();
            pv.sort_by(f64::total_cmp);
            av.sort_by(f64::total_cmp);
            assert_eq!(pv, av, "augmentation must permute voxels, not change them");
        }
    }

    #[test]
    fn flip_is_involution_and_rot4_is_identity() {
        let v = ramp_volume([8, 8, 8]);
        for axis in 0..3 {
            let back = flip_axis(&flip_axis(&v, axis), axis);
            assert_eq!(back.data(), v.data());
        }
        let mut r = v.clone();
        for _ in 0..4 {
            r = rotate_lateral(&r, 1);
        }
        assert_eq!(r.data(), v.data());
        let direct = rotate_lateral(&v, 3);
        let composed = rotate_lateral(&rotate_lateral(&rotate_lateral(&v, 1), 1), 1);
        assert_eq!(direct.data(), composed.data());
    }

    #[test]
    fn constant_patches_merge_to_constant() {
        let v = Volume::full([20, 20, 20], 0.7);
        let patches = crop_patches(&v, 8, 6, false, 0).unwrap();
        let merged = merge_patches(&patches, [20, 20, 20], 4).unwrap();
        for x in merged.data() {
            assert!((x - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn single_patch_covering_volume_is_identity() {
        let v = ramp_volume([12, 12, 12]);
        let patches = crop_patches(&v, 12, 12, false, 0).unwrap();
        assert_eq!(patches.len(), 1);
        let merged = merge_patches(&patches, [12, 12, 12], 4).unwrap();
        for (a, b) in merged.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_crop_merge_roundtrip_with_overlap() {
        let v = ramp_volume([24, 24, 24]);
        let patches = crop_patches(&v, 12, 8, false, 0).unwrap();
        let merged = merge_patches(&patches, [24, 24, 24], 4).unwrap();
        for (a, b) in merged.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_gap_names_first_uncovered_voxel() {
        let v = ramp_volume([16, 16, 16]);
        let mut patches = crop_patches(&v, 8, 8, false, 0).unwrap();
        patches.remove(0); // drop the patch at the origin
        match merge_patches(&patches, [16, 16, 16], 0) {
            Err(CoreError::CoverageGap(0, 0, 0)) => {}
            other => panic!("expected coverage gap at origin, got {other:?}"),
        }
    }

    #[test]
    fn clamped_tiling_covers_non_divisible_extents() {
        let v = ramp_volume([18, 18, 18]);
        let patches = crop_patches(&v, 8, 8, false, 0).unwrap();
        let merged = merge_patches(&patches, [18, 18, 18], 2).unwrap();
        for (a, b) in merged.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
