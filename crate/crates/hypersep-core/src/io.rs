//! Little-endian byte primitives shared by the HSNN checkpoint and HSRC
//! representation-cache containers. Strings are u32-length-prefixed UTF-8;
//! metadata is a count followed by key/value string pairs in sorted key
//! order, so encoding is canonical and round-trips are bitwise exact.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

pub(crate) fn put_meta(buf: &mut Vec<u8>, meta: &BTreeMap<String, String>) {
    put_u32(buf, meta.len() as u32);
    for (k, v) in meta {
        put_str(buf, k);
        put_str(buf, v);
    }
}

pub(crate) fn put_tensor(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_str(buf, name);
    put_u32(buf, 2);
    put_u32(buf, t.rows() as u32);
    put_u32(buf, t.cols() as u32);
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn put_bytes(buf: &mut Vec<u8>, name: &str, data: &[u8]) {
    put_str(buf, name);
    put_u32(buf, data.len() as u32);
    buf.extend_from_slice(data);
}

/// Cursor over a byte buffer; every failure reports the cursor offset.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn fail(&self, msg: impl Into<String>) -> Error {
        Error::format(self.pos, msg)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated: need {n} bytes for {what}, have {}",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::format(
                0,
                format!("bad magic {:?}, expected {:?}", got, magic),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn str_(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.fail(format!("{what} is not UTF-8")))
    }

    pub fn meta(&mut self) -> Result<BTreeMap<String, String>> {
        let count = self.u32("metadata count")?;
        let mut meta = BTreeMap::new();
        for _ in 0..count {
            let k = self.str_("metadata key")?;
            let v = self.str_("metadata value")?;
            meta.insert(k, v);
        }
        Ok(meta)
    }

    pub fn tensor(&mut self, expected_name: &str) -> Result<Tensor> {
        let name = self.str_("tensor name")?;
        if name != expected_name {
            return Err(self.fail(format!(
                "tensor record {name:?} where {expected_name:?} was expected"
            )));
        }
        let rank = self.u32("tensor rank")?;
        if rank != 2 {
            return Err(self.fail(format!("tensor rank {rank}, expected 2")));
        }
        let rows = self.u32("tensor rows")? as usize;
        let cols = self.u32("tensor cols")? as usize;
        let count = rows.checked_mul(cols).ok_or_else(|| self.fail("tensor size overflow"))?;
        let payload = self.take(count * 8, "tensor payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(rows, cols, data)
    }

    pub fn byte_record(&mut self, expected_name: &str) -> Result<Vec<u8>> {
        let name = self.str_("byte record name")?;
        if name != expected_name {
            return Err(self.fail(format!(
                "byte record {name:?} where {expected_name:?} was expected"
            )));
        }
        let len = self.u32("byte record length")? as usize;
        Ok(self.take(len, "byte record payload")?.to_vec())
    }

    /// Every byte must be consumed; trailing garbage is corruption.
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.fail(format!(
                "{} trailing bytes after final record",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
