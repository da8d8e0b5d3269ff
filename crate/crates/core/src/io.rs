//! Binary tensor (`.t3b`) and mask (`.msk`) files.
//!
//! `.t3b`: `T3B1`, `n1 n2 n3` as u32 LE, then every entry as f64 LE in
//! storage order. `.msk`: `MSK1`, dims as three u32 LE, the count as u64
//! LE, then the ascending linear offsets as u64 LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::operators::SamplingMask;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor3};

const TENSOR_MAGIC: &[u8; 4] = b"T3B1";
const MASK_MAGIC: &[u8; 4] = b"MSK1";

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::from(e),
    })
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    read_exact(r, &mut m, "header")?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, "header")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_dims<R: Read>(r: &mut R) -> Result<Dims> {
    let (n1, n2, n3) = (read_u32(r)?, read_u32(r)?, read_u32(r)?);
    Dims::new(n1 as usize, n2 as usize, n3 as usize)
        .map_err(|_| Error::Format(format!("invalid dims {n1}x{n2}x{n3}")))
}

fn write_dims<W: Write>(w: &mut W, dims: Dims) -> Result<()> {
    for n in [dims.n1, dims.n2, dims.n3] {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    Ok(())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

pub fn read_tensor<T: Scalar, R: Read>(mut r: R) -> Result<Tensor3<T>> {
    read_magic(&mut r, TENSOR_MAGIC)?;
    let dims = read_dims(&mut r)?;
    let mut data = Vec::with_capacity(dims.numel());
    let mut b = [0u8; 8];
    for _ in 0..dims.numel() {
        read_exact(&mut r, &mut b, "tensor payload")?;
        data.push(T::lit(f64::from_le_bytes(b)));
    }
    expect_eof(&mut r)?;
    Tensor3::from_vec(dims, data)
}

pub fn write_tensor<T: Scalar, W: Write>(mut w: W, t: &Tensor3<T>) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    write_dims(&mut w, t.dims())?;
    for &x in t.data() {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask<R: Read>(mut r: R) -> Result<SamplingMask> {
    read_magic(&mut r, MASK_MAGIC)?;
    let dims = read_dims(&mut r)?;
    let count = read_u64(&mut r, "header")?;
    if count > dims.numel() as u64 {
        return Err(Error::Format(format!("{count} offsets for a {dims} tensor")));
    }
    let mut indices = Vec::with_capacity(count as usize);
    for _ in 0..count {
        indices.push(read_u64(&mut r, "mask payload")? as usize);
    }
    expect_eof(&mut r)?;
    SamplingMask::new(dims, indices)
}

pub fn write_mask<W: Write>(mut w: W, mask: &SamplingMask) -> Result<()> {
    w.write_all(MASK_MAGIC)?;
    write_dims(&mut w, mask.dims())?;
    w.write_all(&(mask.len() as u64).to_le_bytes())?;
    for &o in mask.indices() {
        w.write_all(&(o as u64).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor3<T>> {
    read_tensor(BufReader::new(File::open(path)?))
}

pub fn save_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor3<T>) -> Result<()> {
    write_tensor(BufWriter::new(File::create(path)?), t)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    read_mask(BufReader::new(File::open(path)?))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &SamplingMask) -> Result<()> {
    write_mask(BufWriter::new(File::create(path)?), mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_bytes() {
        let t = Tensor3::<f64>::from_vec(Dims::new(1, 2, 1).unwrap(), vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut expect = b"T3B1".to_vec();
        for n in [1u32, 2, 1] {
            expect.extend(n.to_le_bytes());
        }
        expect.extend(1.0f64.to_le_bytes());
        expect.extend((-0.5f64).to_le_bytes());
        assert_eq!(buf, expect);
        assert_eq!(read_tensor::<f64, _>(&buf[..]).unwrap(), t);
    }

    #[test]
    fn mask_round_trip() {
        let dims = Dims::new(3, 3, 2).unwrap();
        let m = SamplingMask::new(dims, vec![0, 4, 17]).unwrap();
        let mut buf = Vec::new();
        write_mask(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 4 + 12 + 8 + 24);
        assert_eq!(read_mask(&buf[..]).unwrap(), m);
    }

    #[test]
    fn malformed_inputs() {
        let t = Tensor3::<f64>::zeros(Dims::new(2, 2, 2).unwrap());
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(matches!(read_tensor::<f64, _>(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_tensor::<f64, _>(&long[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor::<f64, _>(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(read_mask(&buf[..]), Err(Error::Format(_))));

        let mut nan = buf;
        nan[16..24].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(read_tensor::<f64, _>(&nan[..]), Err(Error::NonFinite(0))));
    }

    #[test]
    fn unsorted_mask_is_rejected() {
        let mut buf = b"MSK1".to_vec();
        for n in [2u32, 2, 1] {
            buf.extend(n.to_le_bytes());
        }
        buf.extend(2u64.to_le_bytes());
        buf.extend(3u64.to_le_bytes());
        buf.extend(1u64.to_le_bytes());
        assert!(matches!(read_mask(&buf[..]), Err(Error::InvalidMask(_))));
    }
}
