//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "NBRDFCKP"
//! version      u32      = 1
//! desc_len     u32      length of the JSON model descriptor
//! descriptor   desc_len bytes of UTF-8 JSON
//! block_count  u32
//! per block:   u64 value count, then that many f64 values
//! ```
//!
//! Blocks appear in the declaration order of [`Parameterized::param_blocks`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Parameterized;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NBRDFCKP";
pub const VERSION: u32 = 1;

pub fn write_to<W: Write, P: Parameterized + ?Sized>(mut w: W, descriptor: &str, params: &P) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(descriptor.len() as u32).to_le_bytes())?;
    w.write_all(descriptor.as_bytes())?;
    let blocks = params.param_blocks();
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for (_, b) in blocks {
        w.write_all(&(b.len() as u64).to_le_bytes())?;
        for v in b {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save<P: Parameterized + ?Sized>(path: &Path, descriptor: &str, params: &P) -> Result<()> {
    write_to(BufWriter::new(File::create(path)?), descriptor, params)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Descriptor and raw blocks of a checkpoint.
pub fn read_from<R: Read>(mut r: R) -> Result<(String, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut desc = vec![0u8; len];
    read_exact(&mut r, &mut desc)?;
    let desc = String::from_utf8(desc).map_err(|_| Error::Format("descriptor is not UTF-8".into()))?;
    let count = read_u32(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut b = [0u8; 8];
        read_exact(&mut r, &mut b)?;
        let n = u64::from_le_bytes(b) as usize;
        let mut raw = vec![0u8; n * 8];
        read_exact(&mut r, &mut raw)?;
        blocks.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
    }
    Ok((desc, blocks))
}

pub fn load(path: &Path) -> Result<(String, Vec<Vec<f64>>)> {
    read_from(BufReader::new(File::open(path)?))
}

/// Copies loaded blocks into `params`, checking the layout.
pub fn restore<P: Parameterized + ?Sized>(params: &mut P, blocks: &[Vec<f64>]) -> Result<()> {
    let mut dst = params.param_blocks_mut();
    if dst.len() != blocks.len() {
        return Err(Error::Format(format!("checkpoint has {} blocks, model has {}", blocks.len(), dst.len())));
    }
    for (d, s) in dst.iter_mut().zip(blocks) {
        if d.len() != s.len() {
            return Err(Error::Shape {
                expected: d.len(),
                got: s.len(),
            });
        }
        d.copy_from_slice(s);
    }
    Ok(())
}
