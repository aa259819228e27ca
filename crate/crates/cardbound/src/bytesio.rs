//! Little-endian primitives for the binary payload sections of model files.
//! Everything is written through these helpers so the byte layout has a
//! single definition and identical inputs always produce identical bytes.

use std::io::{Read, Write};

use crate::{Error, Result};

pub fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_i64(w: &mut impl Write, v: i64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_bits().to_le_bytes())?;
    Ok(())
}

pub fn write_bytes(w: &mut impl Write, b: &[u8]) -> Result<()> {
    write_u64(w, b.len() as u64)?;
    w.write_all(b)?;
    Ok(())
}

pub fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    write_bytes(w, s.as_bytes())
}

pub fn write_opt_i64(w: &mut impl Write, v: Option<i64>) -> Result<()> {
    match v {
        Some(x) => {
            w.write_all(&[1])?;
            write_i64(w, x)
        }
        None => {
            w.write_all(&[0])?;
            Ok(())
        }
    }
}

pub fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_i64(r: &mut impl Read) -> Result<i64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(i64::from_le_bytes(buf))
}

pub fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_len(r: &mut impl Read, cap: u64) -> Result<usize> {
    let n = read_u64(r)?;
    if n > cap {
        return Err(Error::Model(format!(
            "corrupt payload: length {n} exceeds cap {cap}"
        )));
    }
    Ok(n as usize)
}

pub fn read_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let n = read_len(r, 1 << 33)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_str(r: &mut impl Read) -> Result<String> {
    String::from_utf8(read_bytes(r)?)
        .map_err(|_| Error::Model("corrupt payload: invalid utf-8 string".into()))
}

pub fn read_opt_i64(r: &mut impl Read) -> Result<Option<i64>> {
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    match tag[0] {
        0 => Ok(None),
        1 => Ok(Some(read_i64(r)?)),
        t => Err(Error::Model(format!("corrupt payload: bad option tag {t}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_primitives() {
        let mut buf = Vec::new();
        write_u64(&mut buf, 42).unwrap();
        write_i64(&mut buf, -7).unwrap();
        write_f64(&mut buf, 1.5).unwrap();
        write_str(&mut buf, "hello").unwrap();
        write_opt_i64(&mut buf, None).unwrap();
        write_opt_i64(&mut buf, Some(9)).unwrap();

        let mut r = buf.as_slice();
        assert_eq!(read_u64(&mut r).unwrap(), 42);
        assert_eq!(read_i64(&mut r).unwrap(), -7);
        assert_eq!(read_f64(&mut r).unwrap(), 1.5);
        assert_eq!(read_str(&mut r).unwrap(), "hello");
        assert_eq!(read_opt_i64(&mut r).unwrap(), None);
        assert_eq!(read_opt_i64(&mut r).unwrap(), Some(9));
        assert!(r.is_empty());
    }
}
