//! Binary checkpoint format.
//!
//! Layout: magic `PPRB`, one version byte, then per-parameter records of
//! (name length: u32 LE, name bytes, rank: u32 LE, dims: u64 LE each,
//! little-endian f64 payload) until end of file.

use super::tensor::Tensor;
use super::AdError;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PPRB";
const VERSION: u8 = 1;

pub fn save(params: &[(String, Tensor)], path: &Path) -> Result<(), AdError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    for (name, tensor) in params {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        let shape = tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in &shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.values().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>, AdError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AdError::Checkpoint(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(AdError::Checkpoint(format!(
            "unsupported version {}",
            version[0]
        )));
    }

    let mut params = Vec::new();
    loop {
        let mut len4 = [0u8; 4];
        match r.read_exact(&mut len4) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len4) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| AdError::Checkpoint("parameter name is not UTF-8".into()))?;
        r.read_exact(&mut len4)?;
        let rank = u32::from_le_bytes(len4) as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut dim8 = [0u8; 8];
        for _ in 0..rank {
            r.read_exact(&mut dim8)?;
            shape.push(u64::from_le_bytes(dim8) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            r.read_exact(&mut dim8)?;
            values.push(f64::from_le_bytes(dim8));
        }
        params.push((name, Tensor::param(shape, values)?));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_names_shapes_values() {
        let params = vec![
            (
                "gen.0.weight".to_string(),
                Tensor::param(vec![2, 3], vec![0.5, -1.0, 2.0, 3.5, -0.25, 0.0]).unwrap(),
            ),
            (
                "disc.head.bias".to_string(),
                Tensor::param(vec![1], vec![1e-9]).unwrap(),
            ),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pprb");
        save(&params, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for ((n1, t1), (n2, t2)) in params.iter().zip(&loaded) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            assert_eq!(t1.to_vec(), t2.to_vec());
        }
    }

    #[test]
    fn magic_and_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.pprb");
        std::fs::write(&path, b"NOPE\x01").unwrap();
        assert!(matches!(load(&path), Err(AdError::Checkpoint(_))));
    }
}
