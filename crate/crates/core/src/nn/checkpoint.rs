//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PLCR1"
//! u64 adam step
//! u32 tensor count
//! per tensor:
//!   u32 name length, name (UTF-8)
//!   u32 rank, u64 per dimension
//!   f64 values, then f64 first moments, then f64 second moments
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{Param, ParamStore};
use super::tensor::Tensor;
use super::NnError;

pub const MAGIC: &[u8; 5] = b"PLCR1";

pub fn write_checkpoint(store: &ParamStore, out: &mut impl Write) -> Result<(), NnError> {
    out.write_all(MAGIC)?;
    out.write_all(&store.step().to_le_bytes())?;
    out.write_all(&(store.params().len() as u32).to_le_bytes())?;
    for p in store.params() {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(p.value.shape().len() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for t in [&p.value, &p.m, &p.v] {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_values(r: &mut impl Read, shape: &[usize]) -> Result<Tensor, NnError> {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(f64::from_bits(read_u64(r)?));
    }
    Tensor::new(shape.to_vec(), data)
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<ParamStore, NnError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let step = read_u64(r)?;
    let count = read_u32(r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        if len > 4096 {
            return Err(NnError::Checkpoint(format!("name length {len} too large")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let rank = read_u32(r)? as usize;
        if rank > 8 {
            return Err(NnError::Checkpoint(format!("rank {rank} too large")));
        }
        let shape = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if shape.iter().product::<usize>() > 1 << 28 {
            return Err(NnError::Checkpoint(format!("tensor `{name}` too large")));
        }
        let value = read_values(r, &shape)?;
        let m = read_values(r, &shape)?;
        let v = read_values(r, &shape)?;
        store.insert_full(Param { name, value, grad: None, m, v })?;
    }
    store.set_step(step);
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<(), NnError> {
    let mut buf = Vec::new();
    write_checkpoint(store, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore, NnError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}
