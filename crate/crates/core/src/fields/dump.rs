//! Binary dump of realizations for reuse between runs.
//!
//! Layout: a 16-byte header followed by little-endian `f64` values.
//!
//! ```text
//!   bytes 0..4    magic: b"RF" + scheme ('L' lattice | 'R' random) + kind ('1' single | '2' paired)
//!   bytes 4..8    d            (u32 LE)
//!   bytes 8..12   q or N_p     (u32 LE)
//!   bytes 12..16  n            (u32 LE)
//! ```
//!
//! A single dump holds `n` realizations; a paired dump holds the `n`
//! realizations of the x side followed by the `n` of the y side.

use std::io::{Read, Write};

use crate::domain::FieldRealization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpLayout {
    /// `q^d` lattice sites.
    Lattice { d: u32, q: u32 },
    /// `count` random locations.
    Points { d: u32, count: u32 },
}

impl DumpLayout {
    pub fn sites(&self) -> usize {
        match *self {
            DumpLayout::Lattice { d, q } => (q as usize).pow(d),
            DumpLayout::Points { count, .. } => count as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub layout: DumpLayout,
    pub x: Vec<FieldRealization>,
    pub y: Option<Vec<FieldRealization>>,
}

impl FieldDump {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let sites = self.layout.sites();
        if let Some(y) = &self.y {
            if y.len() != self.x.len() {
                return Err(Error::config("paired dump sides differ in length"));
            }
        }
        let all = self.x.iter().chain(self.y.iter().flatten());
        let (scheme, d, extent) = match self.layout {
            DumpLayout::Lattice { d, q } => (b'L', d, q),
            DumpLayout::Points { d, count } => (b'R', d, count),
        };
        let kind = if self.y.is_some() { b'2' } else { b'1' };
        let n = u32::try_from(self.n()).map_err(|_| Error::config("too many realizations"))?;
        let mut header = Vec::with_capacity(16);
        header.extend_from_slice(&[b'R', b'F', scheme, kind]);
        header.extend_from_slice(&d.to_le_bytes());
        header.extend_from_slice(&extent.to_le_bytes());
        header.extend_from_slice(&n.to_le_bytes());
        out.write_all(&header)?;
        let mut buf = Vec::with_capacity(sites * 8);
        for r in all {
            if r.len() != sites {
                return Err(Error::config(format!(
                    "realization with {} values in a dump of {sites} sites",
                    r.len()
                )));
            }
            buf.clear();
            for v in r.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 16];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::data("dump is shorter than its 16-byte header"))?;
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        if &header[0..2] != b"RF" {
            return Err(Error::data("not a field dump (bad magic)"));
        }
        let (d, extent, n) = (word(4), word(8), word(12));
        let layout = match header[2] {
            b'L' => DumpLayout::Lattice { d, q: extent },
            b'R' => DumpLayout::Points { d, count: extent },
            other => return Err(Error::data(format!("unknown dump scheme byte {other:#x}"))),
        };
        let paired = match header[3] {
            b'1' => false,
            b'2' => true,
            other => return Err(Error::data(format!("unknown dump kind byte {other:#x}"))),
        };
        let sites = layout.sites();
        let mut read_side = || -> Result<Vec<FieldRealization>> {
            let mut buf = vec![0u8; sites * 8];
            (0..n)
                .map(|i| {
                    input
                        .read_exact(&mut buf)
                        .map_err(|_| Error::data(format!("dump truncated in realization {i}")))?;
                    Ok(FieldRealization::new(
                        buf.chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    ))
                })
                .collect()
        };
        let x = read_side()?;
        let y = if paired { Some(read_side()?) } else { None };
        Ok(Self { layout, x, y })
    }
}
