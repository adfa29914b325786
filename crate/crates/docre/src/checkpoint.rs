//! Binary checkpoint container: magic, version, config header, then named
//! tensors as little-endian f32, row-major. Round-trips bit-exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DocreError, Result};
use crate::math::Tensor;
use crate::model::{ModelConfig, Parameters};

const MAGIC: &[u8; 8] = b"DOCRECKP";
const VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Writes config and all parameter tensors.
pub fn save(path: &Path, config: &ModelConfig, params: &Parameters) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let config_bytes = serde_json::to_vec(config)?;
    write_u32(&mut w, config_bytes.len() as u32)?;
    w.write_all(&config_bytes)?;

    let mut count = 0u32;
    params.visit(|_, _| count += 1);
    write_u32(&mut w, count)?;
    let mut io_err = None;
    params.visit(|name, t| {
        if io_err.is_some() {
            return;
        }
        let result = (|| -> std::io::Result<()> {
            write_u32(&mut w, name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            write_u32(&mut w, t.shape.len() as u32)?;
            for &dim in &t.shape {
                write_u32(&mut w, dim as u32)?;
            }
            for &v in &t.data {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            io_err = Some(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back; every tensor must match the shape the config
/// implies, and none may be missing or extra.
pub fn load(path: &Path) -> Result<(ModelConfig, Parameters)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DocreError::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(DocreError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let config_len = read_u32(&mut r)? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)?;
    let config: ModelConfig = serde_json::from_slice(&config_bytes)?;

    let count = read_u32(&mut r)? as usize;
    let mut tensors: HashMap<String, Tensor> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| DocreError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 4];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        tensors.insert(name, Tensor::from_vec(&shape, data));
    }

    let mut params = Parameters::zeros(&config);
    let mut failure: Option<DocreError> = None;
    params.visit_mut(|name, t| {
        if failure.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some(loaded) if loaded.shape == t.shape => *t = loaded,
            Some(loaded) => {
                failure = Some(DocreError::Checkpoint(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    t.shape, loaded.shape
                )));
            }
            None => failure = Some(DocreError::Checkpoint(format!("{name}: missing tensor"))),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(DocreError::Checkpoint(format!("unexpected tensor {extra}")));
    }
    Ok((config, params))
}
