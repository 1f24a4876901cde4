//! Little-endian primitives shared by the binary formats.

use std::io::Write;
use std::path::Path;

use crate::{HoodError, Result};

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| HoodError::Truncated {
            path: self.path.to_path_buf(),
            detail: format!("{what}: need {n} bytes at offset {}, file has {}", self.pos, self.buf.len()),
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// `count` floats plus the raw bytes they came from.
    pub fn f32s(&mut self, count: usize, what: &str) -> Result<(Vec<f32>, &'a [u8])> {
        let n = count.checked_mul(4).ok_or_else(|| self.schema(format!("{what}: element count overflows")))?;
        let raw = self.take(n, what)?;
        Ok((raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(), raw))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn schema(&self, detail: String) -> HoodError {
        HoodError::Schema { path: self.path.to_path_buf(), detail }
    }

    pub fn magic(&mut self, want: &[u8; 8]) -> Result<()> {
        if self.buf.len() < 8 && want.starts_with(self.buf) {
            return Err(HoodError::Truncated { path: self.path.to_path_buf(), detail: "inside magic bytes".into() });
        }
        if self.buf.len() < 8 || &self.buf[..8] != want {
            return Err(HoodError::BadMagic { path: self.path.to_path_buf() });
        }
        self.pos = 8;
        Ok(())
    }

    pub fn version(&mut self, expected: u16) -> Result<()> {
        let found = self.u16("version")?;
        if found != expected {
            return Err(HoodError::VersionMismatch { path: self.path.to_path_buf(), found, expected });
        }
        Ok(())
    }

    /// Checks the trailing CRC32 of `payload` and that nothing follows it.
    pub fn checksum(&mut self, payload: &[u8]) -> Result<()> {
        let stored = self.u32("checksum")?;
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(HoodError::Checksum { path: self.path.to_path_buf(), stored, computed });
        }
        if self.remaining() != 0 {
            return Err(self.schema(format!("{} unexpected trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| HoodError::InvalidConfig(format!("{what} {v} does not fit in 32 bits")))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
