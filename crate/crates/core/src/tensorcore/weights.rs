//! Versioned weight container.
//!
//! Layout: header line `WEIGHTS v1 <dtype>`, one line of config JSON, a line
//! with the array count, then per array a `"<name>\t<d0,d1,...>"` line
//! followed by the raw little-endian values and a trailing newline.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::{Dtype, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

pub fn write_weights<'a, T, W, I>(out: &mut W, config_json: &str, arrays: I) -> Result<()>
where
    T: Scalar,
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a [usize], &'a [T])>,
{
    if config_json.contains('\n') {
        return Err(Error::WeightFile("config JSON must be one line".into()));
    }
    let arrays: Vec<_> = arrays.into_iter().collect();
    writeln!(out, "WEIGHTS v1 {}", T::DTYPE)?;
    writeln!(out, "{config_json}")?;
    writeln!(out, "{}", arrays.len())?;
    for (name, shape, values) in arrays {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        writeln!(out, "{name}\t{}", dims.join(","))?;
        let mut bytes = Vec::with_capacity(values.len() * T::DTYPE.size());
        for v in values {
            v.write_le(&mut bytes);
        }
        out.write_all(&bytes)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut buf = Vec::new();
    r.read_until(b'\n', &mut buf)?;
    if buf.last() == Some(&b'\n') {
        buf.pop();
    }
    String::from_utf8(buf).map_err(|_| Error::WeightFile("non-UTF8 header line".into()))
}

/// Dtype recorded in the header, without reading the arrays.
pub fn peek_dtype<R: BufRead>(r: &mut R) -> Result<Dtype> {
    let header = read_line(r)?;
    parse_header(&header)
}

fn parse_header(header: &str) -> Result<Dtype> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some("WEIGHTS") || parts.next() != Some("v1") {
        return Err(Error::WeightFile(format!("bad header {header:?}")));
    }
    parts
        .next()
        .and_then(Dtype::parse)
        .ok_or_else(|| Error::WeightFile(format!("bad dtype in header {header:?}")))
}

/// Reads the container back; errors if the stored dtype differs from `T`.
pub fn read_weights<T, R>(r: &mut R) -> Result<(String, Vec<NamedArray<T>>)>
where
    T: Scalar,
    R: BufRead,
{
    let dtype = peek_dtype(r)?;
    if dtype != T::DTYPE {
        return Err(Error::WeightFile(format!(
            "file stores {dtype}, requested {}",
            T::DTYPE
        )));
    }
    let config_json = read_line(r)?;
    let count: usize = read_line(r)?
        .trim()
        .parse()
        .map_err(|_| Error::WeightFile("bad array count".into()))?;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let meta = read_line(r)?;
        let (name, dims) = meta
            .split_once('\t')
            .ok_or_else(|| Error::WeightFile(format!("bad array header {meta:?}")))?;
        let shape: Vec<usize> = if dims.is_empty() {
            Vec::new()
        } else {
            dims.split(',')
                .map(|d| {
                    d.parse()
                        .map_err(|_| Error::WeightFile(format!("bad dim {d:?}")))
                })
                .collect::<Result<_>>()?
        };
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * T::DTYPE.size()];
        r.read_exact(&mut bytes)?;
        let mut newline = [0u8; 1];
        r.read_exact(&mut newline)?;
        if newline[0] != b'\n' {
            return Err(Error::WeightFile(format!(
                "array {name:?} not followed by newline"
            )));
        }
        let values = bytes
            .chunks_exact(T::DTYPE.size())
            .map(T::read_le)
            .collect();
        arrays.push(NamedArray {
            name: name.to_string(),
            shape,
            values,
        });
    }
    Ok((config_json, arrays))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn round_trip_f32() {
        let a: Vec<f32> = vec![1.5, -2.0, 0.25, 1e-9];
        let b: Vec<f32> = vec![7.0; 6];
        let mut buf = Vec::new();
        write_weights(
            &mut buf,
            r#"{"d":8}"#,
            vec![
                ("emb", &[2usize, 2][..], &a[..]),
                ("w0", &[3, 2][..], &b[..]),
            ],
        )
        .unwrap();
        let (cfg, arrays) = read_weights::<f32, _>(&mut Cursor::new(&buf)).unwrap();
        assert_eq!(cfg, r#"{"d":8}"#);
        assert_eq!(arrays.len(), 2);
        assert_eq!(arrays[0].name, "emb");
        assert_eq!(arrays[0].shape, vec![2, 2]);
        assert_eq!(arrays[0].values, a);
        assert_eq!(arrays[1].values, b);
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let a: Vec<f64> = vec![1.0];
        let mut buf = Vec::new();
        write_weights(&mut buf, "{}", vec![("x", &[1usize][..], &a[..])]).unwrap();
        assert_eq!(
            peek_dtype(&mut Cursor::new(&buf)).unwrap(),
            Dtype::F64
        );
        assert!(read_weights::<f32, _>(&mut Cursor::new(&buf)).is_err());
    }

    #[test]
    fn bad_header_rejected() {
        let buf = b"WRONG v9 f32\n".to_vec();
        assert!(read_weights::<f32, _>(&mut Cursor::new(&buf)).is_err());
    }
}
