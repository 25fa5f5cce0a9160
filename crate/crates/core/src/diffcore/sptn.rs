//! Flat little-endian tensor blobs: magic `SPTN`, `u32` rank, `u64` dims, `f64` payload.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPTN";

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format {
        chunk: "SPTN".into(),
        msg: msg.into(),
    }
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| format_err(format!("header: {e}")))?;
    if &magic != MAGIC {
        return Err(format_err(format!("bad magic {magic:?}")));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b).map_err(|e| format_err(format!("rank: {e}")))?;
    let rank = u32::from_le_bytes(u32b) as usize;
    if rank == 0 || rank > 8 {
        return Err(format_err(format!("unsupported rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut u64b = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut u64b).map_err(|e| format_err(format!("dims: {e}")))?;
        shape.push(u64::from_le_bytes(u64b) as usize);
    }
    let n: usize = shape.iter().product();
    if n > (1 << 28) {
        return Err(format_err(format!("implausible element count {n}")));
    }
    let mut payload = vec![0u8; n * 8];
    r.read_exact(&mut payload).map_err(|e| format_err(format!("payload: {e}")))?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(shape, data)
}

pub fn save(path: &std::path::Path, t: &Tensor) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor(&mut f, t)?;
    f.flush()?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<Tensor> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tensor(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut expect = b"SPTN".to_vec();
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&2u64.to_le_bytes());
        expect.extend_from_slice(&1.0f64.to_le_bytes());
        expect.extend_from_slice(&(-0.5f64).to_le_bytes());
        assert_eq!(buf, expect);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let t = Tensor::zeros(&[3]);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_tensor(&mut buf.as_slice()), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            let mut rng = crate::diffcore::Rng::new(seed);
            let t = crate::diffcore::sample_normal(&mut rng, &[rows, cols]).unwrap();
            let mut buf = Vec::new();
            write_tensor(&mut buf, &t).unwrap();
            prop_assert_eq!(read_tensor(&mut buf.as_slice()).unwrap(), t);
        }
    }
}
