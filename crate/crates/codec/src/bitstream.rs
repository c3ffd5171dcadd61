//! Bitstream container format (all integers little-endian):
//!
//! ```text
//! magic          4 bytes  "GMSD"
//! version        u8       currently 1
//! decoder_mode   u8       0 = mixed, 1 = separate
//! k              u8       mixture components
//! reserved       u8       0
//! n              u16      hyper channel width
//! m              u16      latent channel count
//! orig_width     u32      pre-padding image width
//! orig_height    u32      pre-padding image height
//! model_hash     u64      FNV-1a of the checkpoint bytes
//! z_segment_len  u32      byte length of the hyper-latent segment
//! z segment      ...      range-coded hyper-latents
//! y segment      ...      range-coded latents (to end of stream)
//! ```

use crate::config::DecoderMode;
use crate::error::{CodecError, Result};

pub const STREAM_MAGIC: &[u8; 4] = b"GMSD";
pub const STREAM_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub decoder_mode: DecoderMode,
    pub k: u8,
    pub n: u16,
    pub m: u16,
    pub orig_width: u32,
    pub orig_height: u32,
    pub model_hash: u64,
    pub z_segment_len: u32,
}

impl StreamHeader {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.push(match self.decoder_mode {
            DecoderMode::Mixed => 0,
            DecoderMode::Separate => 1,
        });
        out.push(self.k);
        out.push(0); // reserved
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.orig_width.to_le_bytes());
        out.extend_from_slice(&self.orig_height.to_le_bytes());
        out.extend_from_slice(&self.model_hash.to_le_bytes());
        out.extend_from_slice(&self.z_segment_len.to_le_bytes());
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Truncated {
                offset: bytes.len(),
            });
        }
        if &bytes[0..4] != STREAM_MAGIC {
            return Err(CodecError::BadMagic);
        }
        if bytes[4] != STREAM_VERSION {
            return Err(CodecError::UnsupportedVersion(bytes[4]));
        }
        let decoder_mode = match bytes[5] {
            0 => DecoderMode::Mixed,
            1 => DecoderMode::Separate,
            other => {
                return Err(CodecError::DataFormat(format!(
                    "unknown decoder mode byte {other}"
                )))
            }
        };
        let u16le = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32le = |i: usize| {
            u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]])
        };
        let mut h = [0u8; 8];
        h.copy_from_slice(&bytes[20..28]);
        Ok(Self {
            decoder_mode,
            k: bytes[6],
            n: u16le(8),
            m: u16le(10),
            orig_width: u32le(12),
            orig_height: u32le(16),
            model_hash: u64::from_le_bytes(h),
            z_segment_len: u32le(28),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> StreamHeader {
        StreamHeader {
            decoder_mode: DecoderMode::Separate,
            k: 3,
            n: 16,
            m: 16,
            orig_width: 97,
            orig_height: 333,
            model_hash: 0x0123_4567_89ab_cdef,
            z_segment_len: 42,
        }
    }

    #[test]
    fn header_round_trips() {
        let mut bytes = Vec::new();
        header().write(&mut bytes);
        assert_eq!(bytes.len(), HEADER_LEN);
        let parsed = StreamHeader::parse(&bytes).unwrap();
        assert_eq!(parsed, header());
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = Vec::new();
        header().write(&mut bytes);
        bytes[0] = b'X';
        assert!(matches!(
            StreamHeader::parse(&bytes),
            Err(CodecError::BadMagic)
        ));
    }

    #[test]
    fn short_buffer_is_truncated_error() {
        let mut bytes = Vec::new();
        header().write(&mut bytes);
        assert!(matches!(
            StreamHeader::parse(&bytes[..HEADER_LEN - 1]),
            Err(CodecError::Truncated { .. })
        ));
    }
}
