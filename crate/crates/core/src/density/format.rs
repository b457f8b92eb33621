//! Text and binary serialization of grid densities.
//!
//! Text layout (one record per line):
//!
//! ```text
//! lclab-grid-density 1
//! dim <n>
//! shape <m_1> ... <m_n>
//! lo <a_1> ... <a_n>
//! hi <b_1> ... <b_n>
//! values
//! <v_0>
//! ...
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips `f64`
//! exactly. Values are row-major with the last axis fastest.
//!
//! Binary layout: magic `LCGD`, `u32` version, `u32` dim, `dim` x `u64`
//! shape, `dim` x `f64` lo, `dim` x `f64` hi, then the values as `f64`;
//! everything little-endian.

use std::io::{BufRead, Read, Write};

use super::domain::BoxDomain;
use super::grid::GridDensity;
use crate::error::{Error, Result};
use crate::scalar::Real;

const TEXT_MAGIC: &str = "lclab-grid-density 1";
const BIN_MAGIC: &[u8; 4] = b"LCGD";
const BIN_VERSION: u32 = 1;

/// Decimal text with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn join<T: Real>(xs: &[T]) -> String {
    xs.iter().map(|v| fmt17(v.f64())).collect::<Vec<_>>().join(" ")
}

pub fn write_text<T: Real, W: Write>(g: &GridDensity<T>, mut w: W) -> Result<()> {
    writeln!(w, "{TEXT_MAGIC}")?;
    writeln!(w, "dim {}", g.dim())?;
    let shape: Vec<String> = g.shape().iter().map(|m| m.to_string()).collect();
    writeln!(w, "shape {}", shape.join(" "))?;
    writeln!(w, "lo {}", join(g.domain().lo()))?;
    writeln!(w, "hi {}", join(g.domain().hi()))?;
    writeln!(w, "values")?;
    for &v in g.values() {
        writeln!(w, "{}", fmt17(v.f64()))?;
    }
    Ok(())
}

fn field<'a>(line: Option<std::io::Result<String>>, key: &str, buf: &'a mut String) -> Result<&'a str> {
    *buf = line.ok_or_else(|| Error::Parse(format!("missing `{key}` line")))??;
    buf.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| Error::Parse(format!("expected `{key}`, found `{buf}`")))
}

fn parse_reals<T: Real>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map(T::lit)
                .map_err(|e| Error::Parse(format!("bad real `{t}`: {e}")))
        })
        .collect()
}

pub fn read_text<T: Real, R: BufRead>(r: R) -> Result<GridDensity<T>> {
    let mut lines = r.lines();
    let mut buf = String::new();
    let magic = field(lines.next(), "", &mut buf)?;
    if magic != TEXT_MAGIC {
        return Err(Error::Parse(format!("unknown header `{magic}`")));
    }
    let dim: usize = field(lines.next(), "dim", &mut buf)?
        .parse()
        .map_err(|e| Error::Parse(format!("dim: {e}")))?;
    let shape: Vec<usize> = field(lines.next(), "shape", &mut buf)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Parse(format!("shape: {e}"))))
        .collect::<Result<_>>()?;
    let lo = parse_reals::<T>(field(lines.next(), "lo", &mut buf)?)?;
    let hi = parse_reals::<T>(field(lines.next(), "hi", &mut buf)?)?;
    if shape.len() != dim || lo.len() != dim || hi.len() != dim {
        return Err(Error::Parse("header lengths disagree with dim".into()));
    }
    field(lines.next(), "values", &mut buf)?;
    let mut values = Vec::with_capacity(shape.iter().product());
    for line in lines {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() {
            values.push(T::lit(t.parse::<f64>().map_err(|e| Error::Parse(format!("value `{t}`: {e}")))?));
        }
    }
    GridDensity::from_normalized_values(BoxDomain::new(lo, hi)?, &shape, values)
}

pub fn write_binary<T: Real, W: Write>(g: &GridDensity<T>, mut w: W) -> Result<()> {
    w.write_all(BIN_MAGIC)?;
    w.write_all(&BIN_VERSION.to_le_bytes())?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    for &m in g.shape() {
        w.write_all(&(m as u64).to_le_bytes())?;
    }
    for &a in g.domain().lo().iter().chain(g.domain().hi()) {
        w.write_all(&a.f64().to_le_bytes())?;
    }
    for &v in g.values() {
        w.write_all(&v.f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<T: Real, R: Read>(mut r: R) -> Result<GridDensity<T>> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    if &b4 != BIN_MAGIC {
        return Err(Error::Parse("bad magic".into()));
    }
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != BIN_VERSION {
        return Err(Error::Parse("unsupported version".into()));
    }
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    let mut shape = Vec::with_capacity(dim);
    for _ in 0..dim {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let mut read_f = |r: &mut R| -> Result<T> {
        r.read_exact(&mut b8)?;
        Ok(T::lit(f64::from_le_bytes(b8)))
    };
    let lo = (0..dim).map(|_| read_f(&mut r)).collect::<Result<Vec<T>>>()?;
    let hi = (0..dim).map(|_| read_f(&mut r)).collect::<Result<Vec<T>>>()?;
    let total: usize = shape.iter().product();
    let values = (0..total).map(|_| read_f(&mut r)).collect::<Result<Vec<T>>>()?;
    GridDensity::from_normalized_values(BoxDomain::new(lo, hi)?, &shape, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{Potential, Smoothness};
    use proptest::prelude::*;

    fn density(a: f64, b: f64, m0: usize, m1: usize) -> GridDensity<f64> {
        let d = BoxDomain::new(vec![-2.0, -1.0], vec![1.5, 3.0]).unwrap();
        let v = Potential::new(d, Smoothness::C1, move |x: &[f64]| a * x[0] * x[0] + b * (x[1] - 0.3).abs());
        GridDensity::build(&v, &[m0, m1]).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn text_round_trip_is_bit_exact(a in 0.01f64..5.0, b in 0.0f64..3.0, m0 in 8usize..20, m1 in 8usize..20) {
            let g = density(a, b, m0, m1);
            let mut buf = Vec::new();
            write_text(&g, &mut buf).unwrap();
            let h: GridDensity<f64> = read_text(&buf[..]).unwrap();
            prop_assert_eq!(h.shape(), g.shape());
            prop_assert_eq!(h.domain(), g.domain());
            for (x, y) in g.values().iter().zip(h.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let g = density(0.7, 1.1, 9, 13);
        let mut buf = Vec::new();
        write_binary(&g, &mut buf).unwrap();
        let h: GridDensity<f64> = read_binary(&buf[..]).unwrap();
        assert_eq!(g.values(), h.values());
        assert_eq!(g.digest(), h.digest());
    }

    #[test]
    fn rejects_garbage_header() {
        assert!(read_text::<f64, _>(&b"not a density\n"[..]).is_err());
    }
}
