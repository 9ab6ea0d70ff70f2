//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes   "GLCK"
//! version  u32       1
//! count    u32       number of parameters
//! manifest count × { name_len u32, name utf-8, kind u8, rank u32, dims u64 × rank }
//! payload  count × numel(dims) f64, in manifest order
//! ```
//!
//! `kind` is 0 = individual, 1 = function, 2 = predicate, 3 = free.

use std::io::{Read, Write};

use super::{numel, ParamKind, Result, Tensor, TensorError};

const MAGIC: &[u8; 4] = b"GLCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

pub fn write_checkpoint<W: Write>(mut out: W, entries: &[CheckpointEntry]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        let name = e.name.as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&[e.kind.code()])?;
        out.write_all(&(e.value.rank() as u32).to_le_bytes())?;
        for &d in e.value.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    for e in entries {
        for x in e.value.data() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<CheckpointEntry>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut input)? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TensorError::Checkpoint("parameter name is not utf-8".into()))?;
        let mut kind = [0u8; 1];
        input.read_exact(&mut kind)?;
        let kind = ParamKind::from_code(kind[0])
            .ok_or_else(|| TensorError::Checkpoint(format!("bad kind code {}", kind[0])))?;
        let rank = read_u32(&mut input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut buf = [0u8; 8];
            input.read_exact(&mut buf)?;
            shape.push(u64::from_le_bytes(buf) as usize);
        }
        manifest.push((name, kind, shape));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, kind, shape) in manifest {
        let n = numel(&shape);
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push(CheckpointEntry {
            name,
            kind,
            value: Tensor::new(shape, data)?,
        });
    }
    Ok(entries)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_stable() {
        let entries = vec![CheckpointEntry {
            name: "w".into(),
            kind: ParamKind::Predicate,
            value: Tensor::vector(vec![1.5, -2.0]),
        }];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &entries).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"GLCK");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'w');
        expected.push(2);
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.5f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), entries);
    }

    #[test]
    fn rejects_truncated_payload() {
        let entries = vec![CheckpointEntry {
            name: "w".into(),
            kind: ParamKind::Function,
            value: Tensor::zeros(&[2, 2]),
        }];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &entries).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
