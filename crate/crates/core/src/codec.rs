//! Length-prefixed canonical encoding shared by block hashing, signed messages
//! and proof serialization. Every field is a big-endian `u32` length followed by
//! the raw octets, so concatenations are unambiguous.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input truncated at offset {0}")]
    Truncated(usize),
    #[error("field at offset {offset} has length {len}, expected {expected}")]
    BadLength { offset: usize, len: usize, expected: usize },
    #[error("trailing {0} octets after the last field")]
    Trailing(usize),
    #[error("invalid tag {tag} at offset {offset}")]
    BadTag { offset: usize, tag: u8 },
}

#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.u64(n as u64)
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    pub fn field(&mut self) -> Result<&'a [u8], DecodeError> {
        let start = self.pos;
        let header = self.buf.get(start..start + 4).ok_or(DecodeError::Truncated(start))?;
        let len = u32::from_be_bytes(header.try_into().expect("4 octets")) as usize;
        let body = self
            .buf
            .get(start + 4..start + 4 + len)
            .ok_or(DecodeError::Truncated(start))?;
        self.pos = start + 4 + len;
        Ok(body)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let offset = self.pos;
        let f = self.field()?;
        f.try_into()
            .map_err(|_| DecodeError::BadLength { offset, len: f.len(), expected: N })
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.fixed::<8>()?))
    }

    /// A count prefix, bounded by the remaining input so a hostile length cannot
    /// trigger a huge allocation.
    pub fn count(&mut self) -> Result<usize, DecodeError> {
        let offset = self.pos;
        let n = self.u64()?;
        if n > self.remaining() as u64 {
            return Err(DecodeError::Truncated(offset));
        }
        Ok(n as usize)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}
