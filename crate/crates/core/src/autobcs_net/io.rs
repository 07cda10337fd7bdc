//! "ABCS" model files: magic, version, length-prefixed JSON [`NetworkConfig`],
//! then one record per parameter tensor until end of file:
//! name length (u32), UTF-8 name, four u32 dims, row-major f32 values.
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{AutoBcsModel, NetworkConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sensing::ByteReader;

const MAGIC: &[u8; 4] = b"ABCS";
const VERSION: u32 = 1;

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

pub fn write_model<T: Scalar>(w: &mut impl Write, model: &mut AutoBcsModel<T>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(model.config())?;
    buf.extend_from_slice(&u32_of(json.len(), "config length")?.to_le_bytes());
    buf.extend_from_slice(&json);
    let mut failure = None;
    model.visit_params(&mut |p| {
        if failure.is_some() {
            return;
        }
        let header = u32_of(p.name.len(), "name length").and_then(|n| {
            let dims = p.shape.iter().map(|&d| u32_of(d, "dimension")).collect::<Result<Vec<_>>>()?;
            Ok((n, dims))
        });
        match header {
            Ok((n, dims)) => {
                buf.extend_from_slice(&n.to_le_bytes());
                buf.extend_from_slice(p.name.as_bytes());
                dims.iter().for_each(|d| buf.extend_from_slice(&d.to_le_bytes()));
                p.value.iter().for_each(|v| buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()));
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    w.write_all(&buf).map_err(|e| Error::io("<stream>", e))
}

struct Record {
    offset: usize,
    shape: [usize; 4],
    values: Vec<f32>,
}

/// Reads a model; every parameter of the architecture must appear exactly
/// once with the matching shape.
pub fn read_model<T: Scalar>(r: impl Read) -> Result<AutoBcsModel<T>> {
    let mut r = ByteReader::new(r);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let len = r.u32("config length")? as usize;
    let at = r.offset();
    let json = r.vec(len, "config")?;
    let config: NetworkConfig =
        serde_json::from_slice(&json).map_err(|e| Error::Parse { offset: at, message: format!("config: {e}") })?;
    config.validate().map_err(|e| Error::Parse { offset: at, message: e.to_string() })?;

    let mut records: HashMap<String, Record> = HashMap::new();
    while let Some(name_len) = r.try_u32("name length")? {
        let offset = r.offset() - 4;
        let name = String::from_utf8(r.vec(name_len as usize, "name")?)
            .map_err(|_| Error::Parse { offset, message: "tensor name is not UTF-8".into() })?;
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = r.u32("dimension")? as usize;
        }
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| r.error("tensor size overflow"))?;
        let raw = r.vec(count, &name)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if records.insert(name.clone(), Record { offset, shape, values }).is_some() {
            return Err(Error::Parse { offset, message: format!("duplicate tensor {name}") });
        }
    }

    let mut model = AutoBcsModel::<T>::new(config, 0)?;
    let mut failure = None;
    model.visit_params(&mut |p| {
        if failure.is_some() {
            return;
        }
        match records.remove(&p.name) {
            None => failure = Some(Error::Format(format!("missing tensor {}", p.name))),
            Some(rec) if rec.shape != p.shape => {
                failure = Some(Error::Parse {
                    offset: rec.offset,
                    message: format!("tensor {} has shape {:?}, expected {:?}", p.name, rec.shape, p.shape),
                })
            }
            Some(rec) => {
                for (dst, &v) in p.value.iter_mut().zip(&rec.values) {
                    *dst = T::from_f64_lossy(v as f64);
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some((name, rec)) = records.into_iter().min_by_key(|(_, rec)| rec.offset) {
        return Err(Error::Parse { offset: rec.offset, message: format!("unknown tensor {name}") });
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(path: &Path, model: &mut AutoBcsModel<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(&mut w, model)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<AutoBcsModel<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}
