//! Little-endian framing shared by the binary file formats.
//!
//! Every file is `magic (4 bytes) | version u16 | body | crc32`, where the
//! CRC covers everything before it.

use crate::error::{MsnnError, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u16) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u16(version);
        w
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
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
    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    /// u16 length prefix then UTF-8.
    pub fn short_str(&mut self, s: &str) -> Result<()> {
        let n = u16::try_from(s.len()).map_err(|_| MsnnError::Format(format!("name too long: {s:?}")))?;
        self.u16(n);
        self.bytes(s.as_bytes());
        Ok(())
    }
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions the cursor after them.
    pub fn open(buf: &'a [u8], magic: &[u8; 4], version: u16) -> Result<Self> {
        if buf.len() < 4 {
            return Err(MsnnError::Truncated("shorter than the magic string".into()));
        }
        let found: [u8; 4] = buf[..4].try_into().unwrap();
        if &found != magic {
            return Err(MsnnError::BadMagic { expected: *magic, found });
        }
        let mut r = Reader { buf, pos: 4 };
        let v = r.u16()?;
        if v != version {
            return Err(MsnnError::Version { expected: version, found: v });
        }
        Ok(r)
    }

    /// Bytes left before the trailing CRC (saturating).
    pub fn remaining_body(&self) -> usize {
        self.buf.len().saturating_sub(4).saturating_sub(self.pos)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e + 4 <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(MsnnError::Truncated(format!(
                "needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            ))),
        }
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
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
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| MsnnError::Format("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }
    pub fn short_str(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        utf8(self.take(n)?)
    }

    /// Verifies the trailing CRC against everything before it.
    pub fn verify_crc(&self) -> Result<()> {
        if self.buf.len() < 10 {
            return Err(MsnnError::Truncated("missing checksum".into()));
        }
        let split = self.buf.len() - 4;
        let stored = u32::from_le_bytes(self.buf[split..].try_into().unwrap());
        let computed = crc32fast::hash(&self.buf[..split]);
        if stored != computed {
            return Err(MsnnError::Checksum { stored, computed });
        }
        Ok(())
    }

    /// Fails if body bytes remain unread.
    pub fn expect_end(&self) -> Result<()> {
        match self.remaining_body() {
            0 => Ok(()),
            n => Err(MsnnError::Format(format!("{n} trailing bytes before checksum"))),
        }
    }
}

pub(crate) fn utf8(b: &[u8]) -> Result<String> {
    String::from_utf8(b.to_vec()).map_err(|_| MsnnError::Format("invalid UTF-8".into()))
}

/// Runs a structural parse and the CRC check, reporting truncation first,
/// then checksum failures, then any other parse error.
pub(crate) fn decode<T>(
    buf: &[u8],
    magic: &[u8; 4],
    version: u16,
    parse: impl FnOnce(&mut Reader<'_>) -> Result<T>,
) -> Result<T> {
    let mut r = Reader::open(buf, magic, version)?;
    let parsed = parse(&mut r);
    if let Err(MsnnError::Truncated(_)) = parsed {
        return parsed;
    }
    r.verify_crc()?;
    parsed
}
