//! MSDE trajectory files and fixed-precision CSV.
//!
//! An MSDE file is a 44-byte little-endian header followed by the samples:
//!
//! | bytes | field |
//! |---|---|
//! | 0..4 | magic `MSDE` |
//! | 4..8 | version `u32` |
//! | 8..12 | dim `u32` |
//! | 12..20 | n_samples `u64` |
//! | 20..28 | dt `f64` |
//! | 28..36 | origin_time `f64` (time of the first row) |
//! | 36..44 | seed `u64` |
//!
//! The body is `n_samples * dim` `f64` values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pathspace::{Extension, FullPath, FuturePath};
use crate::scalar::{snap_index, Real};

pub const MAGIC: [u8; 4] = *b"MSDE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 44;

/// Decoded contents of an MSDE file.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdeFile {
    pub dim: usize,
    pub dt: f64,
    pub origin_time: f64,
    pub seed: u64,
    pub data: Vec<f64>,
}

impl MsdeFile {
    pub fn n_samples(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn from_full<S: Real>(p: &FullPath<S>, seed: u64) -> Self {
        Self {
            dim: p.dim(),
            dt: p.dt().f64(),
            origin_time: p.start_time().f64(),
            seed,
            data: p.raw().iter().map(|v| v.f64()).collect(),
        }
    }

    pub fn from_future<S: Real>(p: &FuturePath<S>, seed: u64) -> Self {
        Self {
            dim: p.dim(),
            dt: p.dt().f64(),
            origin_time: 0.0,
            seed,
            data: p.chronological().iter().map(|v| v.f64()).collect(),
        }
    }

    /// Rebuilds a full path: rows at times `<= 0` form the past.
    pub fn to_full<S: Real>(&self, extension: Extension) -> Result<FullPath<S>> {
        let n_past = (snap_index(-self.origin_time, self.dt) + 1).max(1) as usize;
        let data = self.data.iter().map(|&v| S::lit(v)).collect();
        FullPath::from_raw(self.dim, S::lit(self.dt), data, n_past.min(self.n_samples()), extension)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_samples() as u64).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&self.origin_time.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "truncated header: {} of {HEADER_LEN} bytes",
                bytes.len()
            )));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic: expected {:02x?}, found {:02x?}",
                MAGIC,
                &bytes[..4]
            )));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported version: expected {VERSION}, found {version}"
            )));
        }
        let dim = u32_at(8) as usize;
        let n = u64_at(12) as usize;
        let body = n
            .checked_mul(dim)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::Format("sample count overflows".into()))?;
        if bytes.len() != HEADER_LEN + body {
            return Err(Error::Format(format!(
                "body length mismatch: expected {body} bytes, found {}",
                bytes.len() - HEADER_LEN
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            dim,
            dt: f64_at(20),
            origin_time: f64_at(28),
            seed: u64_at(36),
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
        Self::decode(&buf)
    }
}

pub fn load_trajectory<S: Real>(path: &Path, extension: Extension) -> Result<FullPath<S>> {
    MsdeFile::read(path)?.to_full(extension)
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header row and one row per entry of `rows`.
pub fn emit_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::DimMismatch {
                expected: header.len(),
                found: r.len(),
            });
        }
        w.write_record(r.iter().map(|&v| format_float(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns as parallel series.
pub fn emit_csv_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("columns", "must have equal lengths"));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    emit_csv(path, header, &rows)
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Format(format!("{f}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::{concat, HistoryPath};
    use proptest::prelude::*;

    fn sample() -> FullPath<f64> {
        let past = HistoryPath::from_fn(0.1, 5, Extension::Constant, |t: f64| t.sin() + 1.0).unwrap();
        let fut = FuturePath::from_fn(0.1, 7, |t: f64| if t == 0.0 { 1.0 } else { t.cos() }).unwrap();
        concat(&past, &fut).unwrap()
    }

    #[test]
    fn roundtrip_full_path() {
        let p = sample();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.msde");
        MsdeFile::from_full(&p, 42).write(&f).unwrap();
        let back: FullPath<f64> = load_trajectory(&f, Extension::Constant).unwrap();
        assert_eq!(back, p);
        assert_eq!(MsdeFile::read(&f).unwrap().seed, 42);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = MsdeFile::from_full(&sample(), 1).encode();
        assert!(matches!(MsdeFile::decode(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(MsdeFile::decode(&bytes[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = MsdeFile::from_full(&sample(), 1).encode();
        bytes[4] = 2;
        let e = MsdeFile::decode(&bytes).unwrap_err().to_string();
        assert!(e.contains("expected 1, found 2"), "{e}");
        bytes[4] = 1;
        bytes[0] = b'X';
        assert!(MsdeFile::decode(&bytes).unwrap_err().to_string().contains("bad magic"));
    }

    #[test]
    fn csv_uses_seventeen_digits() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("s.csv");
        emit_csv_columns(&f, &["t", "v"], &[&[0.0, 0.1], &[1.0 / 3.0, -2.5]]).unwrap();
        let text = std::fs::read_to_string(&f).unwrap();
        assert!(text.starts_with("t,v\n"));
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        let (h, rows) = read_csv(&f).unwrap();
        assert_eq!(h, vec!["t", "v"]);
        assert_eq!(rows[0][1], 1.0 / 3.0);
    }

    proptest! {
        #[test]
        fn encode_decode_bitexact(data in proptest::collection::vec(proptest::num::f64::ANY, 0..64), seed: u64) {
            let dim = 2;
            let data: Vec<f64> = data.into_iter().take(64 / dim * dim).collect();
            let data = data[..data.len() / dim * dim].to_vec();
            let f = MsdeFile { dim, dt: 0.01, origin_time: -0.5, seed, data };
            let back = MsdeFile::decode(&f.encode()).unwrap();
            prop_assert_eq!(back.data.len(), f.data.len());
            for (a, b) in back.data.iter().zip(&f.data) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn csv_float_roundtrip(v in proptest::num::f64::NORMAL) {
            prop_assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }
}
