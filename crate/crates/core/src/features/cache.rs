//! Feature cache files.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `SHMF`                   |
//! | 4      | 2    | version (1)                    |
//! | 6      | 1    | kind (0 acoustic, 1 prosodic)  |
//! | 7      | 1    | reserved (0)                   |
//! | 8      | 4    | dim (u32)                      |
//! | 12     | 4    | frame count (u32)              |
//! | 16     | 8    | frame period in seconds (f64)  |
//! | 24     | 4·dim·frames | row-major f32 values    |
//!
//! Values are stored as f32, so a sequence read back from the cache equals
//! the original rounded to single precision.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{FeatureKind, FeatureSequence, MfccConfig, ProsodyConfig};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"SHMF";
const VERSION: u16 = 1;
const HEADER: usize = 24;

pub fn write_cache(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER + 4 * seq.as_flat().len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match seq.kind() {
        FeatureKind::Acoustic => 0,
        FeatureKind::Prosodic => 1,
    });
    buf.push(0);
    let dim = u32::try_from(seq.dim()).map_err(|_| Error::invalid("dimension too large for cache"))?;
    let frames = u32::try_from(seq.len()).map_err(|_| Error::invalid("too many frames for cache"))?;
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&frames.to_le_bytes());
    buf.extend_from_slice(&seq.frame_period_s().to_le_bytes());
    for &v in seq.as_flat() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < HEADER || &bytes[..4] != CACHE_MAGIC {
        return Err(bad("not a feature cache file"));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != VERSION {
        return Err(bad("unsupported cache version"));
    }
    let kind = match bytes[6] {
        0 => FeatureKind::Acoustic,
        1 => FeatureKind::Prosodic,
        _ => return Err(bad("unknown feature kind")),
    };
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let dim = u32_at(8);
    let frames = u32_at(12);
    let period = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let n = dim.checked_mul(frames).ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != HEADER + 4 * n {
        return Err(bad("payload length does not match header"));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    FeatureSequence::from_flat(data, dim, period, kind)
}

/// Stable key for `(audio path, feature configuration)`.
pub fn cache_key(audio_path: &Path, mfcc: &MfccConfig, prosody: &ProsodyConfig) -> String {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let text = format!("{}|{mfcc:?}|{prosody:?}", audio_path.display());
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}
