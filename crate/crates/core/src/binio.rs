//! Little-endian helpers shared by the binary file formats.

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        ByteReader { buf, pos: 0, what }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::data(format!(
                "{}: truncated at byte offset {}: expected {n} more bytes, found {}",
                self.what,
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::data(format!(
                "{}: bad magic at byte offset 0: expected {:?}, found {:?}",
                self.what,
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    pub fn expect_version(&mut self, version: u8) -> Result<()> {
        let at = self.pos;
        let got = self.u8()?;
        if got != version {
            return Err(Error::data(format!(
                "{}: unsupported version {got} at byte offset {at}, expected {version}",
                self.what
            )));
        }
        Ok(())
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

    /// Reads `count` floats, naming the expected and available byte counts
    /// when the payload is short.
    pub fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let need = count
            .checked_mul(4)
            .ok_or_else(|| Error::data(format!("{}: float count overflows", self.what)))?;
        if self.remaining() < need {
            return Err(Error::data(format!(
                "{}: float payload truncated at byte offset {}: expected {need} bytes, found {}",
                self.what,
                self.pos,
                self.remaining()
            )));
        }
        let start = self.pos;
        let bytes = self.take(need)?;
        let out: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = out.iter().position(|x| !x.is_finite()) {
            return Err(Error::data(format!(
                "{}: non-finite float at byte offset {}",
                self.what,
                start + 4 * i
            )));
        }
        Ok(out)
    }

    /// A `u32` length followed by that many UTF-8 bytes.
    pub fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| {
            Error::data(format!("{}: invalid UTF-8 in string at byte offset {at}", self.what))
        })
    }

    pub fn strings(&mut self, count: usize) -> Result<Vec<String>> {
        (0..count).map(|_| self.string()).collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::data(format!(
                "{}: {} trailing bytes at byte offset {}",
                self.what,
                self.remaining(),
                self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::config(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn put_strings(out: &mut Vec<u8>, words: &[String]) -> Result<()> {
    for w in words {
        put_u32(out, w.len())?;
        out.extend_from_slice(w.as_bytes());
    }
    Ok(())
}
