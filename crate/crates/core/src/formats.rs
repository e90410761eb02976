//! Little-endian binary encodings for checkpoints and feature maps.
//!
//! Checkpoint: `"S6DF"`, version `u32`, record count `u32`, then per record
//! name length `u16`, UTF-8 name, rank `u8`, dims `u32 × rank`, `f64` data.
//!
//! Feature map: `"S6FT"`, frames `u32`, channels `u32`, bins `u32`, frame
//! step `f64`, then `f32` values in `[t, c, f]` order.

use alloc::string::String;
use alloc::vec::Vec;

use crate::audio::FeatureMap;
use crate::autodiff::ParamStore;
use crate::error::bail;
use crate::Result;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"S6DF";
pub const FEATURE_MAGIC: &[u8; 4] = b"S6FT";
pub const VERSION: u32 = 1;

/// One named tensor of a checkpoint: `(name, shape, data)`.
pub type Record = (String, Vec<usize>, Vec<f64>);

pub fn encode_checkpoint(params: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        let Ok(len) = u16::try_from(name.len()) else { bail!(Data, "parameter name of {} bytes is too long", name.len()) };
        let Ok(rank) = u8::try_from(t.rank()) else { bail!(Data, "parameter `{name}` has rank {}", t.rank()) };
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            let Ok(d) = u32::try_from(d) else { bail!(Data, "parameter `{name}` has an extent above u32") };
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(CHECKPOINT_MAGIC, "checkpoint")?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let Ok(name) = core::str::from_utf8(r.take(len)?) else { bail!(Data, "parameter name is not UTF-8") };
        let name = String::from(name);
        let rank = r.take(1)?[0] as usize;
        let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let Some(n) = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)) else {
            bail!(Data, "parameter `{name}` has an overflowing shape {:?}", shape)
        };
        if n > r.remaining() / 8 {
            bail!(Data, "checkpoint truncated inside `{name}`");
        }
        let data = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
        out.push((name, shape, data));
    }
    r.finish("checkpoint")?;
    Ok(out)
}

pub fn encode_features(map: &FeatureMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(32 + 4 * map.values.len());
    out.extend_from_slice(FEATURE_MAGIC);
    for d in [map.frames, map.channels, map.bins] {
        let Ok(d) = u32::try_from(d) else { bail!(Data, "feature map extent {d} above u32") };
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&map.frame_dt.to_le_bytes());
    for v in &map.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a feature map; values come back widened from `f32`.
pub fn decode_features(bytes: &[u8]) -> Result<FeatureMap> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(FEATURE_MAGIC.as_slice()) {
        bail!(Data, "not a feature file: bad magic");
    }
    let (t, c, f) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let frame_dt = r.f64()?;
    let Some(n) = t.checked_mul(c).and_then(|v| v.checked_mul(f)) else { bail!(Data, "feature shape overflows") };
    if r.remaining() != 4 * n {
        bail!(Data, "feature file holds {} bytes of values, expected {}", r.remaining(), 4 * n);
    }
    let values = (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<_>>()?;
    FeatureMap::new(t, c, f, frame_dt, values)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            bail!(Data, "unexpected end of data at byte {}", self.pos);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("take returns N bytes"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn header(&mut self, magic: &[u8; 4], what: &str) -> Result<()> {
        if self.take(4).ok() != Some(magic.as_slice()) {
            bail!(Data, "not a {what}: bad magic");
        }
        let v = self.u32()?;
        if v != VERSION {
            bail!(Data, "{what} version {v} is not supported (expected {VERSION})");
        }
        Ok(())
    }

    fn finish(&self, what: &str) -> Result<()> {
        if self.remaining() != 0 {
            bail!(Data, "{} trailing bytes after {what}", self.remaining());
        }
        Ok(())
    }
}
