//! Bit-string helpers shared by the whole stack.
//!
//! Protocol data is handled as `Vec<u8>` holding one bit (0 or 1) per
//! element, which keeps indexing and restriction trivial. On the wire,
//! bit strings are packed MSB-first within each byte, and index sets are
//! serialized as sorted (start, length) runs of big-endian u64.

/// Packs a 0/1 slice into bytes, most significant bit first.
///
/// The final byte is zero-padded on the low end when the length is not a
/// multiple of eight.
pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        debug_assert!(b <= 1, "bit value out of range");
        if b == 1 {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

/// Unpacks `n_bits` bits from an MSB-first packed buffer.
///
/// Returns `None` if the buffer is too short.
pub fn unpack_bits(bytes: &[u8], n_bits: usize) -> Option<Vec<u8>> {
    if bytes.len() < n_bits.div_ceil(8) {
        return None;
    }
    Some(
        (0..n_bits)
            .map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1)
            .collect(),
    )
}

/// XOR of two equal-length bit strings.
pub fn xor_bits(a: &[u8], b: &[u8]) -> Vec<u8> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Hamming distance between two equal-length bit strings.
pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Restriction of `bits` to the given positions.
pub fn restrict(bits: &[u8], positions: &[u64]) -> Vec<u8> {
    positions.iter().map(|&i| bits[i as usize]).collect()
}

/// Encodes a sorted index set as (start, length) runs, 16 bytes per run.
pub fn encode_index_runs(sorted: &[u64]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        let mut len = 1u64;
        while i + (len as usize) < sorted.len() && sorted[i + len as usize] == start + len {
            len += 1;
        }
        out.extend_from_slice(&start.to_be_bytes());
        out.extend_from_slice(&len.to_be_bytes());
        i += len as usize;
    }
    out
}

/// Decodes an index set produced by [`encode_index_runs`].
///
/// Returns `None` on truncated input, zero-length runs, overflowing runs,
/// or runs that are not strictly increasing.
pub fn decode_index_runs(bytes: &[u8]) -> Option<Vec<u64>> {
    if bytes.len() % 16 != 0 {
        return None;
    }
    let mut out = Vec::new();
    let mut prev_end: Option<u64> = None;
    for chunk in bytes.chunks_exact(16) {
        let start = u64::from_be_bytes(chunk[..8].try_into().unwrap());
        let len = u64::from_be_bytes(chunk[8..].try_into().unwrap());
        if len == 0 || start.checked_add(len).is_none() {
            return None;
        }
        if let Some(end) = prev_end {
            // runs must not touch or overlap; a touching run would be a
            // non-canonical encoding of the same set
            if start <= end {
                return None;
            }
        }
        out.extend(start..start + len);
        prev_end = Some(start + len);
    }
    Some(out)
}

/// Length-prefixed field writer: each field is a u32 big-endian byte
/// count followed by the bytes.
#[derive(Default)]
pub struct FieldWriter {
    buf: Vec<u8>,
}

impl FieldWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, field: &[u8]) -> &mut Self {
        self.buf
            .extend_from_slice(&(field.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.put(&v.to_be_bytes())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Reader for [`FieldWriter`] payloads.
pub struct FieldReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> FieldReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self) -> Option<&'a [u8]> {
        if self.buf.len() - self.pos < 4 {
            return None;
        }
        let len = u32::from_be_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap()) as usize;
        self.pos += 4;
        if self.buf.len() - self.pos < len {
            return None;
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Some(out)
    }

    pub fn take_u64(&mut self) -> Option<u64> {
        let f = self.take()?;
        Some(u64::from_be_bytes(f.try_into().ok()?))
    }

    /// True once every byte has been consumed.
    pub fn exhausted(&self) -> bool {
        self.pos == self.buf.len()
    }
}
