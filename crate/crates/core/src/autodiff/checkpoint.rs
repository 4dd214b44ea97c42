//! Parameter checkpoint files.
//!
//! Layout: magic `CGNN`, u32 format version, then until end of file one record
//! per parameter: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
//! little-endian f32 payload. All integers are little-endian.

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CGNN";
pub const VERSION: u32 = 1;

pub fn encode(params: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Validation(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Validation("not a CGNN checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Validation(format!("unsupported checkpoint version {version}")));
    }
    let mut params = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Validation("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let payload = r.take(numel.checked_mul(4).ok_or_else(|| {
            Error::Validation(format!("parameter {name} is too large"))
        })?)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        params.push((name, Tensor::new(&shape, data)?));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_of_f32_representable_values() {
        let params = vec![
            ("enc.k.0.w".to_string(), Tensor::matrix(2, 3, vec![0.5, -1.0, 2.25, 0.0, 3.0, -0.125]).unwrap()),
            ("enc.k.0.b".to_string(), Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap()),
        ];
        let bytes = encode(&params);
        assert_eq!(&bytes[..4], b"CGNN");
        assert_eq!(decode(&bytes).unwrap(), params);
    }

    #[test]
    fn truncated_or_foreign_input_is_rejected() {
        let bytes = encode(&[("w".into(), Tensor::vector(vec![1.0, 2.0]).unwrap())]);
        assert!(decode(&bytes[..bytes.len() - 2]).is_err());
        assert!(decode(b"XXXX\x01\x00\x00\x00").is_err());
        assert!(decode(b"CGNN\x02\x00\x00\x00").is_err());
    }
}
