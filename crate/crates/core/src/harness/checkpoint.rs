//! `DASH` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"DASH"
//! version u32
//! block*  name_len u32 | name bytes (UTF-8) | rank u32 | dims u32 × rank | f32 × prod(dims)
//! ```
//!
//! Blocks run to the end of the file. A rank-0 block holds one value.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DASH";
pub const FORMAT_VERSION: u32 = 1;
const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Block {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, data: Vec<f32>) -> Self {
        let b = Self {
            name: name.into(),
            dims,
            data,
        };
        debug_assert_eq!(b.element_count(), b.data.len());
        b
    }

    pub fn from_f64(name: impl Into<String>, dims: Vec<u32>, data: &[f64]) -> Self {
        Self::new(name, dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn scalar(name: impl Into<String>, value: f32) -> Self {
        Self::new(name, Vec::new(), vec![value])
    }

    /// Stores a 64-bit integer exactly as four 16-bit limbs.
    pub fn from_u64(name: impl Into<String>, value: u64) -> Self {
        let limbs = (0..4).map(|i| ((value >> (16 * i)) & 0xFFFF) as f32).collect();
        Self::new(name, vec![4], limbs)
    }

    pub fn to_u64(&self) -> Result<u64> {
        if self.dims != [4] {
            return Err(Error::Corrupt(format!("block {} is not a u64", self.name)));
        }
        let mut v = 0u64;
        for (i, &limb) in self.data.iter().enumerate() {
            if !(0.0..=65535.0).contains(&limb) || limb.fract() != 0.0 {
                return Err(Error::Corrupt(format!("block {} has bad limb {limb}", self.name)));
            }
            v |= (limb as u64) << (16 * i);
        }
        Ok(v)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

pub fn encode_blocks(blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for b in blocks {
        out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        out.extend_from_slice(b.name.as_bytes());
        out.extend_from_slice(&(b.dims.len() as u32).to_le_bytes());
        for d in &b.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &b.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<Block>> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Magic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut blocks = Vec::new();
    while !c.at_end() {
        let name_len = c.u32("name length")? as usize;
        if name_len > MAX_NAME_LEN {
            return Err(Error::Corrupt(format!("block name length {name_len}")));
        }
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| Error::Corrupt("block name is not UTF-8".into()))?
            .to_owned();
        let rank = c.u32("rank")? as usize;
        if rank > MAX_RANK {
            return Err(Error::Corrupt(format!("block {name} has rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| c.u32("dims"))
            .collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Corrupt(format!("block {name} is too large")))?;
        let raw = c.take(count, "block data")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        blocks.push(Block { name, dims, data });
    }
    Ok(blocks)
}

pub fn save_checkpoint(path: &Path, blocks: &[Block]) -> Result<()> {
    std::fs::write(path, encode_blocks(blocks)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<Block>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_blocks(&bytes)
}

pub fn find_block<'a>(blocks: &'a [Block], name: &str) -> Result<&'a Block> {
    blocks
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::MissingBlock(name.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<Block> {
        vec![
            Block::new("w", vec![2, 3], vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 0.0, -0.0]),
            Block::scalar("tau", 4.5),
            Block::from_u64("seed", u64::MAX - 12345),
        ]
    }

    #[test]
    fn save_load_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.dash");
        save_checkpoint(&path, &sample()).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(sample()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.dims, b.dims);
            let ab: Vec<u32> = a.data.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(find_block(&back, "seed").unwrap().to_u64().unwrap(), u64::MAX - 12345);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_blocks(&sample());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_blocks(&bytes), Err(Error::Magic(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode_blocks(&sample());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode_blocks(&bytes), Err(Error::Version { found: 2, .. })));
    }

    #[test]
    fn truncated_final_block() {
        let bytes = encode_blocks(&sample());
        for cut in 1..12 {
            let r = decode_blocks(&bytes[..bytes.len() - cut]);
            assert!(matches!(r, Err(Error::Corrupt(_))), "cut {cut}: {r:?}");
        }
    }

    proptest! {
        #[test]
        fn arbitrary_blocks_round_trip_bitwise(
            raw in proptest::collection::vec(
                ("[a-z.]{1,12}", proptest::collection::vec(1u32..5, 0..3), any::<u64>()),
                0..5,
            )
        ) {
            let blocks: Vec<Block> = raw.into_iter().map(|(name, dims, seed)| {
                let n: usize = dims.iter().map(|&d| d as usize).product();
                let data = (0..n as u64)
                    .map(|i| f32::from_bits((seed.wrapping_mul(i + 1) >> 7) as u32))
                    .collect();
                Block::new(name, dims, data)
            }).collect();
            let bytes = encode_blocks(&blocks);
            let back = decode_blocks(&bytes).unwrap();
            prop_assert_eq!(encode_blocks(&back), bytes);
        }
    }
}
