//! Binary checkpoint format for named tensor collections.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"GNIO"
//! version u32 (currently 1)
//! count   u32
//! entry*  name_len u32, name bytes (UTF-8),
//!         rank u32, dims u64 * rank,
//!         data f64 * prod(dims)
//! ```
//!
//! `f64` payloads are raw IEEE-754 bits, so save followed by load reproduces
//! every tensor bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AutodiffError, Result};

const MAGIC: &[u8; 4] = b"GNIO";
const VERSION: u32 = 1;

/// Named tensor as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn save_checkpoint(path: &Path, entries: &[CheckpointEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        let numel: usize = e.shape.iter().product();
        if numel != e.data.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "entry '{}': shape {:?} does not match {} values",
                e.name,
                e.shape,
                e.data.len()
            )));
        }
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(e.shape.len() as u32).to_le_bytes())?;
        for &d in &e.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &e.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| AutodiffError::Checkpoint(format!("truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<CheckpointEntry>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(AutodiffError::Checkpoint(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(AutodiffError::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let count = read_u32(&mut r, "entry count")? as usize;
    let mut entries = Vec::with_capacity(count);
    for idx in 0..count {
        let name_len = read_u32(&mut r, "name length")? as usize;
        if name_len > 4096 {
            return Err(AutodiffError::Checkpoint(format!(
                "entry {idx}: implausible name length {name_len}"
            )));
        }
        let mut name_buf = vec![0u8; name_len];
        read_exact_or(&mut r, &mut name_buf, "name")?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| AutodiffError::Checkpoint(format!("entry {idx}: name is not UTF-8")))?;
        let rank = read_u32(&mut r, "rank")? as usize;
        if rank > 8 {
            return Err(AutodiffError::Checkpoint(format!(
                "entry '{name}': implausible rank {rank}"
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let d = read_u64(&mut r, "dimension")? as usize;
            numel = numel.checked_mul(d).ok_or_else(|| {
                AutodiffError::Checkpoint(format!("entry '{name}': shape overflow"))
            })?;
            shape.push(d);
        }
        if numel > (1 << 31) {
            return Err(AutodiffError::Checkpoint(format!(
                "entry '{name}': implausible element count {numel}"
            )));
        }
        let mut data = vec![0.0f64; numel];
        let mut b = [0u8; 8];
        for v in data.iter_mut() {
            read_exact_or(&mut r, &mut b, "tensor data")?;
            *v = f64::from_le_bytes(b);
        }
        entries.push(CheckpointEntry { name, shape, data });
    }
    // Anything left over means the file does not match its own header.
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(AutodiffError::Checkpoint(
            "trailing bytes after last entry".into(),
        ));
    }
    Ok(entries)
}
