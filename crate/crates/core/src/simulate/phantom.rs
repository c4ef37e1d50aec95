//! Synthetic microtubule-like phantom volumes.
//!
//! Filaments are random cubic Bezier space curves rendered with a
//! 1-voxel-FWHM Gaussian cross-section via max compositing, intensities
//! drawn from [0.5, 1], zero background. Deterministic under the seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::simulate::volume::Volume;

/// FWHM of 1 voxel.
const CROSS_SECTION_SIGMA: f64 = 0.424_660_900_144_009_5;

pub fn make_phantom(extents: [usize; 3], n_filaments: usize, seed: u64) -> Result<Volume> {
    if extents.iter().any(|e| *e < 16) {
        return Err(CoreError::Config(format!(
            "phantom: extents must be at least 16 per axis, got {:?}",
            extents
        )));
    }
    if n_filaments == 0 {
        return Err(CoreError::Config("phantom: need at least one filament".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vol = Volume::zeros(extents);
    for _ in 0..n_filaments {
        let ctrl: Vec<[f64; 3]> = (0..4)
            .map(|_| {
                [
                    rng.random_range(1.0..extents[0] as f64 - 2.0),
                    rng.random_range(1.0..extents[1] as f64 - 2.0),
                    rng.random_range(1.0..extents[2] as f64 - 2.0),
                ]
            })
            .collect();
        let intensity = rng.random_range(0.5..=1.0);
        render_bezier(&mut vol, &ctrl, intensity);
    }
    Ok(vol)
}

fn bezier(ctrl: &[[f64; 3]], t: f64) -> [f64; 3] {
    let u = 1.0 - t;
    let w = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
    let mut p = [0.0; 3];
    for (wi, c) in w.iter().zip(ctrl) {
        for a in 0..3 {
            p[a] += wi * c[a];
        }
    }
    p
}

fn render_bezier(vol: &mut Volume, ctrl: &[[f64; 3]], intensity: f64) {
    let polyline: f64 = (0..3)
        .map(|i| {
            let d: f64 = (0..3)
                .map(|a| (ctrl[i + 1][a] - ctrl[i][a]).powi(2))
                .sum();
            d.sqrt()
        })
        .sum();
    let samples = (polyline * 4.0).ceil().max(16.0) as usize;
    let [de, he, we] = vol.extents();
    let radius = 2i64;
    for s in 0..=samples {
        let p = bezier(ctrl, s as f64 / samples as f64);
        let (pz, py, px) = (p[0], p[1], p[2]);
        let z0 = pz.round() as i64;
        let y0 = py.round() as i64;
        let x0 = px.round() as i64;
        for z in (z0 - radius).max(0)..=(z0 + radius).min(de as i64 - 1) {
            for y in (y0 - radius).max(0)..=(y0 + radius).min(he as i64 - 1) {
                for x in (x0 - radius).max(0)..=(x0 + radius).min(we as i64 - 1) {
                    let d2 = (z as f64 - pz).powi(2)
                        + (y as f64 - py).powi(2)
                        + (x as f64 - px).powi(2);
                    let v = intensity * (-d2 / (2.0 * CROSS_SECTION_SIGMA * CROSS_SECTION_SIGMA)).exp();
                    let idx = vol.index(z as usize, y as usize, x as usize);
                    let cur = vol.data()[idx];
                    if v > cur {
                        vol.data_mut()[idx] = v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let a = make_phantom([16, 16, 16], 3, 99).unwrap();
        let b = make_phantom([16, 16, 16], 3, 99).unwrap();
        assert_eq!(a.data(), b.data());
        let c = make_phantom([16, 16, 16], 3, 100).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn rejects_zero_filaments_and_small_extents() {
        assert!(make_phantom([16, 16, 16], 0, 1).is_err());
        assert!(make_phantom([15, 16, 16], 1, 1).is_err());
    }

    #[test]
    fn values_stay_in_unit_interval_with_zero_background() {
        let v = make_phantom([32, 32, 32], 5, 7).unwrap();
        assert!(v.min() >= 0.0);
        assert!(v.max() <= 1.0);
        assert!(v.max() >= 0.5, "brightest filament core should be >= 0.5");
    }

    #[test]
    fn sparse_structure_band() {
        // fraction of voxels above 0.1 for 32^3, 5 filaments
        for seed in [1u64, 2, 3, 4, 5] {
            let v = make_phantom([32, 32, 32], 5, seed).unwrap();
            let frac = v.data().iter().filter(|x| **x > 0.1).count() as f64 / v.numel() as f64;
            assert!(
                frac > 0.001 && frac < 0.3,
                "seed {seed}: occupied fraction {frac} outside (0.001, 0.3)"
            );
        }
    }
}
