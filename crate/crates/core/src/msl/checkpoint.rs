//! Binary model checkpoints and the loss-history CSV.
//!
//! Checkpoint layout, all integers little-endian:
//! `"MSL1"`, 8-byte schema hash, `u32` config length + config JSON,
//! `u32` path count and per path `u32` length + `u32` relation ids,
//! `u32` tensor count and per tensor `u32` rows, `u32` cols + `f64` values
//! row-major in parameter order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{train::LossRecord, MslConfig, MslModel, Params};
use crate::error::{Error, Result};
use crate::graph::HeteroSchema;
use crate::metapath::MetaPath;

const MAGIC: &[u8; 4] = b"MSL1";

/// First eight bytes of the SHA-256 of the schema's JSON form.
pub fn schema_hash(schema: &HeteroSchema) -> [u8; 8] {
    let json = serde_json::to_vec(schema).expect("schema serializes");
    let digest = Sha256::digest(&json);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

/// A loaded checkpoint with the schema hash it was written against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema_hash: [u8; 8],
    pub model: MslModel,
}

impl Checkpoint {
    /// Fails unless the checkpoint was written for `schema`.
    pub fn into_model_for(self, schema: &HeteroSchema) -> Result<MslModel> {
        if self.schema_hash != schema_hash(schema) {
            return Err(Error::Format("checkpoint was written for a different schema".into()));
        }
        for p in &self.model.paths {
            p.check(schema)?;
        }
        Ok(self.model)
    }
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, model: &MslModel, schema: &HeteroSchema) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&schema_hash(schema))?;
    let config = serde_json::to_vec(&model.config)?;
    put_u32(&mut w, config.len())?;
    w.write_all(&config)?;
    put_u32(&mut w, model.paths.len())?;
    for p in &model.paths {
        put_u32(&mut w, p.len())?;
        for &r in p.relations() {
            put_u32(&mut w, r)?;
        }
    }
    let tensors = model.params.tensors();
    put_u32(&mut w, tensors.len())?;
    for t in tensors {
        put_u32(&mut w, t.nrows())?;
        put_u32(&mut w, t.ncols())?;
        for v in t.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("checkpoint is truncated".into()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.bytes(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    if r.bytes(4)? != MAGIC {
        return Err(Error::Format(format!("{} is not a model checkpoint", path.display())));
    }
    let mut hash = [0u8; 8];
    hash.copy_from_slice(&r.bytes(8)?);
    let len = r.u32()?;
    let config: MslConfig = serde_json::from_slice(&r.bytes(len)?)?;
    config.validate()?;

    let n_paths = r.u32()?;
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let len = r.u32()?;
        let rels = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        paths.push(MetaPath::from_relations(rels));
    }

    let n_tensors = r.u32()?;
    let n_input = n_tensors
        .checked_sub(n_paths * config.num_hops)
        .ok_or_else(|| Error::Format("too few tensors for the stored meta-paths".into()))?;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let (rows, cols) = (r.u32()?, r.u32()?);
        let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push(Array2::from_shape_vec((rows, cols), data).expect("length matches shape"));
    }
    let mut rest = tensors.into_iter();
    let input: Vec<_> = rest.by_ref().take(n_input).collect();
    let path_params = (0..n_paths)
        .map(|_| rest.by_ref().take(config.num_hops).collect())
        .collect();
    let model = MslModel {
        config,
        paths,
        params: Params {
            input,
            path: path_params,
        },
    };
    let d = model.config.hidden_dim;
    if model.params.tensors().iter().any(|t| t.ncols() != d)
        || model.params.path.iter().flatten().any(|t| t.nrows() != d)
    {
        return Err(Error::Format("tensor shapes disagree with the stored configuration".into()));
    }
    Ok(Checkpoint {
        schema_hash: hash,
        model,
    })
}

/// Writes `epoch,phase,loss_<path>...,lambda_<path>...` rows.
pub fn write_loss_csv(path: &Path, history: &[LossRecord], labels: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = vec!["epoch".to_string(), "phase".to_string()];
    header.extend(labels.iter().map(|l| format!("loss_{l}")));
    header.extend(labels.iter().map(|l| format!("lambda_{l}")));
    writeln!(w, "{}", header.join(","))?;
    for rec in history {
        let mut row = vec![rec.epoch.to_string(), rec.phase.as_str().to_string()];
        row.extend(rec.losses.iter().map(|v| v.to_string()));
        row.extend(rec.lambda.iter().map(|v| v.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
