//! Checkpoint container: named parameter tensors with a manifest block.
//!
//! Same primitive encodings and versioning convention as the OTDV volume
//! container (little-endian u32 dims, f32 payloads), wrapped under its own
//! magic since a multi-tensor file cannot reuse the single-volume header.
//! Layout: magic `OTDC`, version u16 = 1, u32 meta length + UTF-8 JSON meta
//! block, u32 tensor count, per-tensor manifest (u16 name length, name,
//! u8 rank, rank x u32 dims), then all payloads as f32 little-endian in
//! manifest order. Round trips are bit-exact.

use std::path::Path;

use crate::error::{CoreError, Result};
use crate::simulate::volume::write_atomic;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"OTDC";
const VERSION: u16 = 1;

/// One stored tensor: name, shape, data (f64 in memory, f32 on disk).
pub type Entry = (String, Vec<usize>, Vec<f64>);

pub fn save(path: &Path, meta_json: &str, params: &[(String, Tensor)]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let meta = meta_json.as_bytes();
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        let nb = name.as_bytes();
        if nb.len() > u16::MAX as usize {
            return Err(CoreError::Config(format!("checkpoint name too long: {name}")));
        }
        out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        out.extend_from_slice(nb);
        let shape = t.shape();
        out.push(shape.len() as u8);
        for d in shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    for (_, t) in params {
        for v in t.data().iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

pub fn load(path: &Path) -> Result<(String, Vec<Entry>)> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(String, Vec<Entry>)> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(CoreError::Format("truncated checkpoint".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(CoreError::Format("bad checkpoint magic, expected OTDC".into()));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(CoreError::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let meta = String::from_utf8(take(&mut pos, meta_len)?.to_vec())
        .map_err(|_| CoreError::Format("checkpoint meta is not UTF-8".into()))?;
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut manifest: Vec<(String, Vec<usize>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, nlen)?.to_vec())
            .map_err(|_| CoreError::Format("checkpoint name is not UTF-8".into()))?;
        let rank = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        manifest.push((name, shape));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let payload = take(&mut pos, 4 * n)?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        entries.push((name, shape, data));
    }
    if pos != bytes.len() {
        return Err(CoreError::Format("trailing bytes in checkpoint".into()));
    }
    Ok((meta, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Generator, GeneratorConfig, Parameterized};
    use crate::rng::stream_rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt_10.otdc");
        let mut rng = stream_rng(1, "ckpt");
        let g = Generator::new(
            &GeneratorConfig {
                depth: 2,
                base_channels: 2,
                kernel_size: 3,
            },
            &mut rng,
        )
        .unwrap();
        save(&p, "{\"step\":10}", &g.named_params()).unwrap();
        let first = std::fs::read(&p).unwrap();
        let (meta, entries) = load(&p).unwrap();
        assert_eq!(meta, "{\"step\":10}");
        assert_eq!(entries.len(), g.named_params().len());

        // write back what was loaded: identical bytes
        let tensors: Vec<(String, crate::Tensor)> = entries
            .iter()
            .map(|(n, s, d)| (n.clone(), crate::Tensor::from_vec(s, d.clone()).unwrap()))
            .collect();
        let p2 = dir.path().join("ckpt_10b.otdc");
        save(&p2, &meta, &tensors).unwrap();
        assert_eq!(first, std::fs::read(&p2).unwrap());
    }

    #[test]
    fn load_named_restores_model_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.otdc");
        let cfg = GeneratorConfig {
            depth: 2,
            base_channels: 2,
            kernel_size: 3,
        };
        let mut rng = stream_rng(2, "ckpt");
        let g = Generator::new(&cfg, &mut rng).unwrap();
        save(&p, "{}", &g.named_params()).unwrap();

        let mut rng2 = stream_rng(3, "ckpt");
        let g2 = Generator::new(&cfg, &mut rng2).unwrap();
        let (_, entries) = load(&p).unwrap();
        g2.load_named(&entries).unwrap();
        // parameters now match to f32 precision
        for ((_, a), (_, b)) in g.named_params().iter().zip(g2.named_params().iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"OTDC");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&100u32.to_le_bytes()); // meta longer than file
        assert!(from_bytes(&bytes).is_err());
    }
}
