//! Dataset generation and access.
//!
//! A generated dataset directory holds paired sharp/blurred volume files, a
//! manifest with content digests and the shuffled unpaired view, and a
//! per-volume achieved-SNR log. Loaded datasets hand samples to trainers
//! either paired (supervised modes) or through independent draws that never
//! expose the index correspondence (unpaired modes).

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::rng;
use crate::simulate::noise::{add_noise, NoiseSpec};
use crate::simulate::phantom::make_phantom;
use crate::simulate::volume::{write_atomic, Volume};
use crate::simulate::blur;

/// Parameters for synthetic dataset generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_volumes: usize,
    pub extents: [usize; 3],
    pub n_filaments: usize,
    pub target_avg_snr_db: f64,
    pub poisson_peak_photons: f64,
    pub gaussian_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_volumes: 10,
            extents: [32, 32, 32],
            n_filaments: 5,
            target_avg_snr_db: 20.0,
            poisson_peak_photons: 1000.0,
            gaussian_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeEntry {
    pub sharp: String,
    pub blurred: String,
    pub sharp_digest: String,
    pub blurred_digest: String,
    /// Achieved average SNR in dB; None when noise was disabled.
    pub achieved_snr_db: Option<f64>,
    pub peak_snr_db: Option<f64>,
}

/// On-disk dataset description. `unpaired_order` is a seeded shuffle of the
/// blurred-domain indices: listing order carries no correspondence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub kernel: String,
    pub kernel_digest: String,
    pub volumes: Vec<VolumeEntry>,
    pub unpaired_order: Vec<usize>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Generate a dataset directory: sharp/blurred OTDV pairs, the kernel used,
/// the manifest, and an SNR log CSV. Per-volume noise streams derive from
/// (seed, volume index), so outputs are independent of generation order.
pub fn generate_dataset(dir: &Path, spec: &DatasetSpec, kernel: &Volume) -> Result<DatasetManifest> {
    if spec.n_volumes == 0 {
        return Err(CoreError::Config("dataset: need at least one volume".into()));
    }
    std::fs::create_dir_all(dir)?;

    let kernel_name = "kernel.otdv".to_string();
    let kernel_bytes = kernel.to_bytes();
    write_atomic(&dir.join(&kernel_name), &kernel_bytes)?;

    let mut volumes = Vec::with_capacity(spec.n_volumes);
    let mut snr_log = String::from("volume,achieved_avg_snr_db,peak_snr_db\n");
    for i in 0..spec.n_volumes {
        let sharp = make_phantom(
            spec.extents,
            spec.n_filaments,
            rng::indexed_seed(spec.seed, "phantom", i as u64),
        )?;
        let g = blur(&sharp, kernel)?;
        let noise = NoiseSpec {
            target_avg_snr_db: spec.target_avg_snr_db,
            poisson_peak_photons: spec.poisson_peak_photons,
            gaussian_fraction: spec.gaussian_fraction,
            seed: rng::indexed_seed(spec.seed, "noise", i as u64),
        };
        let (noisy, achieved) = add_noise(&g, &noise)?;
        let peak = crate::metrics::psnr(&g, &noisy, 1.0)?;

        let sharp_name = format!("sharp_{i:03}.otdv");
        let blurred_name = format!("blurred_{i:03}.otdv");
        let sharp_bytes = sharp.to_bytes();
        let blurred_bytes = noisy.to_bytes();
        write_atomic(&dir.join(&sharp_name), &sharp_bytes)?;
        write_atomic(&dir.join(&blurred_name), &blurred_bytes)?;

        let (ach, pk) = if achieved.is_finite() {
            (Some(achieved), Some(peak))
        } else {
            (None, None)
        };
        snr_log.push_str(&format!(
            "{},{},{}\n",
            blurred_name,
            ach.map_or("inf".to_string(), |v| format!("{v}")),
            pk.map_or("inf".to_string(), |v| format!("{v}")),
        ));
        volumes.push(VolumeEntry {
            sharp: sharp_name,
            blurred: blurred_name,
            sharp_digest: sha256_hex(&sharp_bytes),
            blurred_digest: sha256_hex(&blurred_bytes),
            achieved_snr_db: ach,
            peak_snr_db: pk,
        });
    }

    let mut order: Vec<usize> = (0..spec.n_volumes).collect();
    let mut shuffle_rng: ChaCha8Rng = rng::stream_rng(spec.seed, "unpaired-order");
    order.shuffle(&mut shuffle_rng);

    let manifest = DatasetManifest {
        spec: spec.clone(),
        kernel: kernel_name,
        kernel_digest: sha256_hex(&kernel_bytes),
        volumes,
        unpaired_order: order,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CoreError::Format(format!("manifest serialization: {e}")))?;
    write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    write_atomic(&dir.join("snr_log.csv"), snr_log.as_bytes())?;
    Ok(manifest)
}

/// In-memory dataset. In unpaired mode the two domains are sampled with
/// independent index draws; the paired accessor is rejected.
pub struct Dataset {
    sharp: Vec<Volume>,
    blurred: Vec<Volume>,
    paired: bool,
}

impl Dataset {
    pub fn from_volumes(sharp: Vec<Volume>, blurred: Vec<Volume>, paired: bool) -> Result<Self> {
        if sharp.is_empty() || blurred.is_empty() {
            return Err(CoreError::Config("dataset: empty domain".into()));
        }
        if paired && sharp.len() != blurred.len() {
            return Err(CoreError::Config(
                "dataset: paired mode requires matched domain sizes".into(),
            ));
        }
        Ok(Dataset {
            sharp,
            blurred,
            paired,
        })
    }

    /// Load from a generated directory. `paired` controls whether index
    /// correspondence is honored or hidden.
    pub fn load(dir: &Path, paired: bool) -> Result<Self> {
        let manifest = load_manifest(dir)?;
        let mut sharp = Vec::new();
        let mut blurred = Vec::new();
        for e in &manifest.volumes {
            sharp.push(Volume::load(&dir.join(&e.sharp))?);
        }
        // the unpaired view loads domain Y in shuffled manifest order
        if paired {
            for e in &manifest.volumes {
                blurred.push(Volume::load(&dir.join(&e.blurred))?);
            }
        } else {
            for &i in &manifest.unpaired_order {
                blurred.push(Volume::load(&dir.join(&manifest.volumes[i].blurred))?);
            }
        }
        Dataset::from_volumes(sharp, blurred, paired)
    }

    pub fn len_sharp(&self) -> usize {
        self.sharp.len()
    }

    pub fn len_blurred(&self) -> usize {
        self.blurred.len()
    }

    pub fn is_paired(&self) -> bool {
        self.paired
    }

    pub fn sharp_at(&self, i: usize) -> &Volume {
        &self.sharp[i]
    }

    pub fn blurred_at(&self, i: usize) -> &Volume {
        &self.blurred[i]
    }

    /// Independent draw from the sharp domain.
    pub fn sample_sharp<R: Rng>(&self, rng: &mut R) -> &Volume {
        &self.sharp[rng.random_range(0..self.sharp.len())]
    }

    /// Independent draw from the blurred domain.
    pub fn sample_blurred<R: Rng>(&self, rng: &mut R) -> &Volume {
        &self.blurred[rng.random_range(0..self.blurred.len())]
    }

    /// Matched pair; configuration error in unpaired mode.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> Result<(&Volume, &Volume)> {
        if !self.paired {
            return Err(CoreError::Config(
                "dataset: paired sampling requested on an unpaired dataset".into(),
            ));
        }
        let i = rng.random_range(0..self.sharp.len());
        Ok((&self.sharp[i], &self.blurred[i]))
    }

    /// Split off the last `n` entries as a held-out set (kept paired).
    pub fn split_holdout(mut self, n: usize) -> Result<(Dataset, Dataset)> {
        if !self.paired {
            return Err(CoreError::Config(
                "dataset: hold-out split requires a paired source".into(),
            ));
        }
        if n == 0 || n >= self.sharp.len() {
            return Err(CoreError::Config(format!(
                "dataset: cannot hold out {n} of {}",
                self.sharp.len()
            )));
        }
        let keep = self.sharp.len() - n;
        let hold_sharp = self.sharp.split_off(keep);
        let hold_blurred = self.blurred.split_off(keep);
        Ok((
            self,
            Dataset {
                sharp: hold_sharp,
                blurred: hold_blurred,
                paired: true,
            },
        ))
    }

    /// Forget pairing: shuffles the blurred domain under the given seed.
    pub fn into_unpaired(mut self, seed: u64) -> Dataset {
        let mut rng = rng::stream_rng(seed, "forget-pairing");
        self.blurred.shuffle(&mut rng);
        self.paired = false;
        self
    }
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| CoreError::Format(format!("manifest parse: {e}")))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            n_volumes: 3,
            extents: [16, 16, 16],
            n_filaments: 2,
            target_avg_snr_db: 15.0,
            poisson_peak_photons: 1e4,
            seed: 5,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_digested() {
        let k = crate::optics::gaussian_psf([1.0; 3], [5, 5, 5]).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = generate_dataset(d1.path(), &small_spec(), &k).unwrap();
        let m2 = generate_dataset(d2.path(), &small_spec(), &k).unwrap();
        for (a, b) in m1.volumes.iter().zip(&m2.volumes) {
            assert_eq!(a.sharp_digest, b.sharp_digest);
            assert_eq!(a.blurred_digest, b.blurred_digest);
            let bytes = std::fs::read(d1.path().join(&a.sharp)).unwrap();
            assert_eq!(sha256_hex(&bytes), a.sharp_digest);
        }
        assert_eq!(m1.unpaired_order, m2.unpaired_order);
    }

    #[test]
    fn unpaired_dataset_rejects_pair_sampling() {
        let k = crate::optics::gaussian_psf([1.0; 3], [5, 5, 5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(dir.path(), &small_spec(), &k).unwrap();
        let ds = Dataset::load(dir.path(), false).unwrap();
        let mut rng = crate::rng::stream_rng(1, "t");
        assert!(ds.sample_pair(&mut rng).is_err());
        let ds = Dataset::load(dir.path(), true).unwrap();
        assert!(ds.sample_pair(&mut rng).is_ok());
    }

    #[test]
    fn snr_hits_target_for_every_volume() {
        let k = crate::optics::gaussian_psf([1.0; 3], [5, 5, 5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(dir.path(), &small_spec(), &k).unwrap();
        for e in &m.volumes {
            let snr = e.achieved_snr_db.unwrap();
            assert!((snr - 15.0).abs() <= 0.1, "achieved {snr}");
        }
    }

    #[test]
    fn holdout_split_keeps_pairs() {
        let k = crate::optics::gaussian_psf([1.0; 3], [5, 5, 5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(dir.path(), &small_spec(), &k).unwrap();
        let ds = Dataset::load(dir.path(), true).unwrap();
        let (train, hold) = ds.split_holdout(1).unwrap();
        assert_eq!(train.len_sharp(), 2);
        assert_eq!(hold.len_sharp(), 1);
        assert!(hold.is_paired());
    }
}
