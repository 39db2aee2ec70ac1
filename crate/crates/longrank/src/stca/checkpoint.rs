//! Model checkpoint: one binary file holding the config and all tensors.
//!
//! Layout: magic `"STCA1"`, then the config as length-prefixed JSON, then the
//! named f32 tensors back to back until end of file. Each tensor is
//! `name_len: u32, name bytes, rank: u32, dims: u64 * rank, row-major f32
//! payload`, everything little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::StcaConfig;
use super::params::StcaParams;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

const MAGIC: &[u8; 5] = b"STCA1";

pub fn save_checkpoint<T: Real>(
    path: &Path,
    config: &StcaConfig,
    params: &StcaParams<T>,
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    let config_json = serde_json::to_vec(config).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(&(config_json.len() as u32).to_le_bytes())?;
    w.write_all(&config_json)?;
    for p in params.params() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(p.value.rows() as u64).to_le_bytes())?;
        w.write_all(&(p.value.cols() as u64).to_le_bytes())?;
        for v in p.value.data() {
            w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_opt<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    // Distinguish clean EOF at a record boundary from a truncated record.
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(Error::Format("truncated checkpoint record".into()));
        }
        filled += n;
    }
    Ok(true)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    if !read_exact_opt(r, &mut b)? {
        return Err(Error::Format("unexpected end of checkpoint".into()));
    }
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    if !read_exact_opt(r, &mut b)? {
        return Err(Error::Format("unexpected end of checkpoint".into()));
    }
    Ok(u64::from_le_bytes(b))
}

pub fn load_checkpoint(path: &Path) -> Result<(StcaConfig, StcaParams<f32>)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 5];
    if !read_exact_opt(&mut r, &mut magic)? || &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let config_len = read_u32(&mut r)? as usize;
    let mut config_bytes = vec![0u8; config_len];
    if !read_exact_opt(&mut r, &mut config_bytes)? {
        return Err(Error::Format("truncated checkpoint config".into()));
    }
    let config: StcaConfig =
        serde_json::from_slice(&config_bytes).map_err(|e| Error::Format(e.to_string()))?;
    config.validate()?;

    // Skeleton with the right shapes, filled tensor by tensor.
    let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(0);
    let mut params: StcaParams<f32> = StcaParams::init(&config, &mut rng)?;
    let mut seen = std::collections::HashSet::new();
    loop {
        let mut len_bytes = [0u8; 4];
        if !read_exact_opt(&mut r, &mut len_bytes)? {
            break;
        }
        let name_len = u32::from_le_bytes(len_bytes) as usize;
        let mut name_bytes = vec![0u8; name_len];
        if !read_exact_opt(&mut r, &mut name_bytes)? {
            return Err(Error::Format("truncated tensor name".into()));
        }
        let name =
            String::from_utf8(name_bytes).map_err(|_| Error::Format("tensor name not utf-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank != 2 {
            return Err(Error::Format(format!(
                "tensor {name} has rank {rank}, expected 2"
            )));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = vec![0f32; rows * cols];
        for v in &mut data {
            let mut b = [0u8; 4];
            if !read_exact_opt(&mut r, &mut b)? {
                return Err(Error::Format(format!("truncated payload for {name}")));
            }
            *v = f32::from_le_bytes(b);
        }
        let matrix = Matrix::from_vec(rows, cols, data)?;
        let target = params
            .params_mut()
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Format(format!("unknown tensor {name}")))?;
        if target.value.shape() != matrix.shape() {
            return Err(Error::Format(format!(
                "tensor {name} has shape {:?}, model expects {:?}",
                matrix.shape(),
                target.value.shape()
            )));
        }
        target.value = matrix;
        seen.insert(name);
    }
    let expected: Vec<String> = params.params().iter().map(|p| p.name.clone()).collect();
    for name in expected {
        if !seen.contains(&name) {
            return Err(Error::Format(format!("checkpoint missing tensor {name}")));
        }
    }
    Ok((config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn checkpoint_roundtrip_preserves_everything() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        let config = StcaConfig::toy();
        let params: StcaParams<f32> = StcaParams::init(&config, &mut rng).unwrap();
        let dir = std::env::temp_dir().join("longrank_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.stca");
        save_checkpoint(&path, &config, &params).unwrap();
        let (config2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(config, config2);
        for (a, b) in params.params().iter().zip(params2.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join("longrank_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.stca");
        std::fs::write(&path, b"NOPE!rest").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
        std::fs::remove_file(&path).ok();
    }
}
