//! 3D intensity volumes and the OTDV container format.
//!
//! OTDV layout (little-endian throughout): magic bytes `OTDV`, format
//! version `u16 = 1`, three `u32` extents (D, H, W), three `f64` voxel sizes
//! in meters (0 when absent), then D*H*W `f32` values, z-major row-major.
//! Kernels reuse the same container with voxel sizes set. The format is
//! bit-exact: loading and re-saving reproduces the file byte for byte.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"OTDV";
const VERSION: u16 = 1;

/// Dense 3D intensity image (depth x height x width) with optional
/// voxel-size metadata. Values are held in f64 in memory and stored as f32
/// on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    extents: [usize; 3],
    voxel_size: Option<[f64; 3]>,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(extents: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let n = extents[0] * extents[1] * extents[2];
        if n != data.len() {
            return Err(CoreError::Shape(format!(
                "extents {:?} imply {} voxels, got {}",
                extents,
                n,
                data.len()
            )));
        }
        Ok(Volume {
            extents,
            voxel_size: None,
            data,
        })
    }

    pub fn zeros(extents: [usize; 3]) -> Self {
        Volume {
            extents,
            voxel_size: None,
            data: vec![0.0; extents[0] * extents[1] * extents[2]],
        }
    }

    pub fn full(extents: [usize; 3], v: f64) -> Self {
        Volume {
            extents,
            voxel_size: None,
            data: vec![v; extents[0] * extents[1] * extents[2]],
        }
    }

    /// Delta volume: 1 at the center voxel, 0 elsewhere.
    pub fn delta(extents: [usize; 3]) -> Self {
        let mut v = Self::zeros(extents);
        let c = v.index(extents[0] / 2, extents[1] / 2, extents[2] / 2);
        v.data[c] = 1.0;
        v
    }

    pub fn with_voxel_size(mut self, vs: [f64; 3]) -> Self {
        self.voxel_size = Some(vs);
        self
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn voxel_size(&self) -> Option<[f64; 3]> {
        self.voxel_size
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Flat index of voxel (z, y, x).
    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.extents[1] + y) * self.extents[2] + x
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(z, y, x)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Scale all values so the total equals `target`.
    pub fn rescale_sum_to(&mut self, target: f64) {
        let s = self.sum();
        if s != 0.0 {
            let f = target / s;
            for v in &mut self.data {
                *v *= f;
            }
        }
    }

    /// View as a [1, 1, D, H, W] tensor batch.
    pub fn to_tensor(&self) -> Tensor {
        let [d, h, w] = self.extents;
        Tensor::from_vec(&[1, 1, d, h, w], self.data.clone()).expect("extents match data")
    }

    /// Rebuild from a [1, 1, D, H, W] tensor batch.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 5 || s[0] != 1 || s[1] != 1 {
            return Err(CoreError::Shape(format!(
                "expected a [1,1,D,H,W] tensor, got {:?}",
                s
            )));
        }
        Volume::new([s[2], s[3], s[4]], t.to_vec())
    }

    /// Flip the volume along all three axes (kernel adjoint orientation).
    pub fn flipped(&self) -> Volume {
        let [d, h, w] = self.extents;
        let mut out = vec![0.0; self.data.len()];
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    out[self.index(z, y, x)] = self.at(d - 1 - z, h - 1 - y, w - 1 - x);
                }
            }
        }
        Volume {
            extents: self.extents,
            voxel_size: self.voxel_size,
            data: out,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 2 + 12 + 24 + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for e in self.extents {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        let vs = self.voxel_size.unwrap_or([0.0; 3]);
        for v in vs {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(CoreError::Format(format!(
                "bad magic {:?}, expected OTDV",
                &magic
            )));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(CoreError::Format(format!(
                "unsupported OTDV version {version}"
            )));
        }
        let mut extents = [0usize; 3];
        for e in &mut extents {
            *e = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        }
        let mut vs = [0.0f64; 3];
        for v in &mut vs {
            *v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
        let n = extents[0] * extents[1] * extents[2];
        let payload = r.take(4 * n)?;
        if r.pos != bytes.len() {
            return Err(CoreError::Format(format!(
                "trailing bytes after {} voxels",
                n
            )));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in payload.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        Ok(Volume {
            extents,
            voxel_size: if vs == [0.0; 3] { None } else { Some(vs) },
            data,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::Format("truncated OTDV file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Atomic write helper shared by dataset and run-directory writers: the
/// payload lands under its final name only once fully written.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp.partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
