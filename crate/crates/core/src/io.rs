//! Plain-text field files.
//!
//! ```text
//! GPAM-FIELD v1 n=<n>
//! k1 k2 re im
//! ```
//!
//! One line per nonzero mode, written in lexicographic mode order with
//! round-trip float formatting; readers accept any order.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::torus::{Grid, SpectralField};

const FIELD_HEADER: &str = "GPAM-FIELD v1";

pub fn write_field<T: Scalar>(w: &mut impl Write, u: &SpectralField<T>) -> Result<()> {
    writeln!(w, "{FIELD_HEADER} n={}", u.grid().n())?;
    let mut modes = u.nonzeros();
    modes.sort_by_key(|(k, _)| *k);
    for (k, z) in modes {
        writeln!(w, "{} {} {:?} {:?}", k[0], k[1], z.re.as_f64(), z.im.as_f64())?;
    }
    Ok(())
}

pub fn read_field<T: Scalar>(r: impl BufRead) -> Result<SpectralField<T>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
    let n = header
        .strip_prefix(FIELD_HEADER)
        .and_then(|rest| rest.trim().strip_prefix("n="))
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| Error::Parse(format!("bad field header '{header}'")))?;
    let grid = Grid::new(n)?;
    let mut u = SpectralField::zeros(grid);
    let mut seen = vec![false; grid.len()];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("line {}: '{line}'", lineno + 2));
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let k1: i64 = parts[0].parse().map_err(|_| bad())?;
        let k2: i64 = parts[1].parse().map_err(|_| bad())?;
        let re: f64 = parts[2].parse().map_err(|_| bad())?;
        let im: f64 = parts[3].parse().map_err(|_| bad())?;
        let i = grid
            .index_of([k1, k2])
            .ok_or_else(|| Error::FrequencyOutOfRange(format!("mode ({k1}, {k2}) on n={n}")))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Parse(format!("duplicate mode ({k1}, {k2})")));
        }
        u.coeffs_mut()[i] = Complex::new(T::lit(re), T::lit(im));
    }
    let tol = T::lit(1e-12) * u.max_abs_coeff().max(T::one());
    if u.hermitian_defect() > tol {
        let (i, _) = u
            .coeffs()
            .iter()
            .enumerate()
            .max_by(|a, b| {
                let da = (u.coeffs()[grid.partner_index(a.0)] - a.1.conj()).norm();
                let db = (u.coeffs()[grid.partner_index(b.0)] - b.1.conj()).norm();
                da.partial_cmp(&db).unwrap()
            })
            .expect("nonempty grid");
        let k = grid.mode_of(i);
        return Err(Error::SymmetryViolation(k[0], k[1]));
    }
    Ok(u)
}

pub fn save_field<T: Scalar>(path: impl AsRef<Path>, u: &SpectralField<T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_field(&mut w, u)?;
    w.flush()?;
    Ok(())
}

pub fn load_field<T: Scalar>(path: impl AsRef<Path>) -> Result<SpectralField<T>> {
    read_field(BufReader::new(fs::File::open(path)?))
}

/// SHA-256 of the field file text.
pub fn field_hash<T: Scalar>(u: &SpectralField<T>) -> String {
    let mut buf = Vec::new();
    write_field(&mut buf, u).expect("writing to memory");
    Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse(format!("config line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
