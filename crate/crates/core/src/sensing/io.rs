//! Binary containers for sensing matrices ("BCSM") and measurement sets ("BCSY").
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::acquire::MeasurementSet;
use super::matrix::{MatrixKind, SensingMatrix};
use crate::error::{Error, Result};

const MATRIX_MAGIC: &[u8; 4] = b"BCSM";
const MEASUREMENT_MAGIC: &[u8; 4] = b"BCSY";
const VERSION: u32 = 1;

pub(crate) struct ByteReader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> ByteReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        ByteReader { inner, offset: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.offset
    }

    pub(crate) fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Parse { offset: self.offset, message: format!("reading {what}: {e}") })?;
        self.offset += N;
        Ok(buf)
    }

    pub(crate) fn vec(&mut self, len: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Parse { offset: self.offset, message: format!("reading {what}: {e}") })?;
        self.offset += len;
        Ok(buf)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes::<1>(what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }

    /// `None` on a clean end of stream before the first byte.
    pub(crate) fn try_u32(&mut self, what: &str) -> Result<Option<u32>> {
        let mut first = [0u8; 1];
        loop {
            match self.inner.read(&mut first) {
                Ok(0) => return Ok(None),
                Ok(_) => break,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(self.error(&format!("reading {what}: {e}"))),
            }
        }
        self.offset += 1;
        let rest = self.bytes::<3>(what)?;
        Ok(Some(u32::from_le_bytes([first[0], rest[0], rest[1], rest[2]])))
    }

    pub(crate) fn f64s(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.vec(len.checked_mul(8).ok_or_else(|| self.error("length overflow"))?, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    pub(crate) fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.bytes::<4>("magic")?;
        if &got != want {
            return Err(Error::Parse {
                offset: 0,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&got),
                    String::from_utf8_lossy(want)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn version(&mut self, want: u32) -> Result<()> {
        let at = self.offset;
        let v = self.u32("version")?;
        if v != want {
            return Err(Error::Parse { offset: at, message: format!("unsupported version {v}") });
        }
        Ok(())
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.error("trailing bytes after payload")),
            Err(e) => Err(self.error(&e.to_string())),
        }
    }

    pub(crate) fn error(&self, message: &str) -> Error {
        Error::Parse { offset: self.offset, message: message.to_string() }
    }
}

fn write_all(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes).map_err(|e| Error::io("<stream>", e))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

pub fn write_matrix(w: &mut impl Write, m: &SensingMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(17 + 8 * m.rows() * m.cols());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32(m.rows(), "row count")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(m.block_size(), "block size")?.to_le_bytes());
    buf.push(m.kind().code());
    for v in m.to_row_major() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_all(w, &buf)
}

pub fn read_matrix(r: impl Read) -> Result<SensingMatrix> {
    let mut r = ByteReader::new(r);
    r.magic(MATRIX_MAGIC)?;
    r.version(VERSION)?;
    let rows = r.u32("row count")? as usize;
    let block = r.u32("block size")? as usize;
    let at = r.offset();
    let kind = MatrixKind::from_code(r.u8("kind")?)
        .ok_or_else(|| Error::Parse { offset: at, message: "unknown matrix kind".into() })?;
    if block == 0 || rows == 0 || rows > block * block {
        return Err(Error::Parse { offset: 8, message: format!("invalid dims {rows} x {block}^2") });
    }
    let values = r.f64s(rows * block * block, "matrix entries")?;
    r.expect_eof()?;
    SensingMatrix::from_row_slice(rows, block, kind, &values)
}

pub fn write_measurements(w: &mut impl Write, y: &MeasurementSet) -> Result<()> {
    let mut buf = Vec::with_capacity(40 + 8 * y.values.len());
    buf.extend_from_slice(MEASUREMENT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&y.tau.to_le_bytes());
    for (v, what) in [
        (y.block_size, "block size"),
        (y.grid_rows, "grid rows"),
        (y.grid_cols, "grid cols"),
        (y.rows, "row count"),
        (y.original.0, "height"),
        (y.original.1, "width"),
    ] {
        buf.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    for v in &y.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_all(w, &buf)
}

pub fn read_measurements(r: impl Read) -> Result<MeasurementSet> {
    let mut r = ByteReader::new(r);
    r.magic(MEASUREMENT_MAGIC)?;
    r.version(VERSION)?;
    let tau = r.f64("sampling rate")?;
    let block = r.u32("block size")? as usize;
    let gr = r.u32("grid rows")? as usize;
    let gc = r.u32("grid cols")? as usize;
    let rows = r.u32("row count")? as usize;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let count =
        gr.checked_mul(gc).and_then(|b| b.checked_mul(rows)).ok_or_else(|| r.error("measurement count overflows"))?;
    let values = r.f64s(count, "measurements")?;
    r.expect_eof()?;
    MeasurementSet::new(block, rows, (gr, gc), (h, w), tau, values)
}
