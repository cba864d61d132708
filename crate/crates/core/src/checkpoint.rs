//! Flat named-tensor archive.
//!
//! Layout (all integers little-endian):
//! `b"SPCKPT01"`, `u32` entry count, then per entry `u32` name length, UTF-8
//! name, `u32` rank, `u64` per dim, and the values as `f64` bit patterns.
//! Entries are written in name order. The manifest is a text file with one
//! `name<TAB>shape<TAB>byte offset of the payload` line per entry.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SPCKPT01";

pub type TensorMap = BTreeMap<String, Tensor>;

/// Serializes the archive and its manifest text.
pub fn encode(tensors: &TensorMap) -> (Vec<u8>, String) {
    let mut buf = Vec::new();
    let mut manifest = String::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{name}\t[{}]\t{}\n", dims.join(","), buf.len()));
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    (buf, manifest)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<TensorMap, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let count = r.u32()?;
    let mut out = TensorMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| "tensor name is not UTF-8".to_string())?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("shape overflow")?;
        let payload = r.take(n.checked_mul(8).ok_or("shape overflow")?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| format!("{name}: {e}"))?;
        if out.insert(name.clone(), t).is_some() {
            return Err(format!("duplicate entry {name}"));
        }
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(out)
}

/// Writes `path` and `path.manifest`.
pub fn save(path: &Path, tensors: &TensorMap) -> Result<()> {
    let (bytes, manifest) = encode(tensors);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TensorMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::Format {
        path: path.into(),
        msg,
    })
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest");
    p.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sample() -> TensorMap {
        let mut rng = Rng::new(4);
        let mut m = TensorMap::new();
        m.insert("a.weight".into(), Tensor::trunc_normal(&[3, 4], 1.0, &mut rng));
        m.insert("b".into(), Tensor::new(&[2], vec![-0.0, f64::MIN_POSITIVE]).unwrap());
        m.insert("c.deep".into(), Tensor::trunc_normal(&[2, 1, 3], 0.02, &mut rng));
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let (bytes, manifest) = encode(&m);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.len(), m.len());
        for (k, t) in &m {
            assert!(back[k].bit_eq(t), "{k}");
        }
        assert_eq!(manifest.lines().count(), 3);
        assert!(manifest.starts_with("a.weight\t[3,4]\t"));
    }

    #[test]
    fn manifest_offsets_point_at_payload() {
        let m = sample();
        let (bytes, manifest) = encode(&m);
        for line in manifest.lines() {
            let cols: Vec<&str> = line.split('\t').collect();
            let off: usize = cols[2].parse().unwrap();
            let first = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            assert_eq!(first.to_bits(), m[cols[0]].data()[0].to_bits());
        }
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let (bytes, _) = encode(&sample());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &sample()).unwrap();
        assert!(manifest_path(&path).exists());
        let back = load(&path).unwrap();
        assert!(back["a.weight"].bit_eq(&sample()["a.weight"]));
        assert!(matches!(load(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
