//! Little-endian framing shared by the binary file formats: a 4-byte magic,
//! a `u32` version, a body, and a trailing CRC32 of everything before it.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32, capacity: usize) -> Self {
        let mut buf = Vec::with_capacity(capacity + 12);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: &[f32]) {
        self.buf.reserve(vs.len() * 4);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the cursor at the start of the body.
    pub fn open(buf: &'a [u8], magic: &'static str, version: u32, what: &'static str) -> Result<Self> {
        if buf.len() < 12 {
            return Err(Error::Truncated { what });
        }
        if &buf[..4] != magic.as_bytes() {
            return Err(Error::BadMagic { what, expected: magic });
        }
        let found = u32::from_le_bytes(buf[4..8].try_into().unwrap());
        if found != version {
            return Err(Error::VersionMismatch {
                what,
                found,
                expected: version,
            });
        }
        Ok(Self { buf, pos: 8, what })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        // The last four bytes are the checksum, never body.
        let end = self.pos.checked_add(n).ok_or(Error::Truncated { what: self.what })?;
        if end + 4 > self.buf.len() {
            return Err(Error::Truncated { what: self.what });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::Truncated { what: self.what })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    /// Confirms exactly `n` body bytes remain before the checksum.
    pub fn expect_remaining(&self, n: usize) -> Result<()> {
        let remaining = self.buf.len().saturating_sub(self.pos + 4);
        if remaining < n {
            Err(Error::Truncated { what: self.what })
        } else if remaining > n {
            Err(Error::invalid(
                "file length",
                format!("{} trailing bytes in {}", remaining - n, self.what),
            ))
        } else {
            Ok(())
        }
    }

    pub fn verify_checksum(&self) -> Result<()> {
        let n = self.buf.len();
        let stored = u32::from_le_bytes(self.buf[n - 4..].try_into().unwrap());
        let computed = crc32fast::hash(&self.buf[..n - 4]);
        if stored == computed {
            Ok(())
        } else {
            Err(Error::Checksum {
                what: self.what,
                stored,
                computed,
            })
        }
    }

    pub fn finish(self) -> Result<()> {
        self.expect_remaining(0)
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
