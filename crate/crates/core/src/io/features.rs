//! Feature matrices: a compact binary form (`"HGF1"`, `u32` rows, `u32`
//! cols, row-major `f32`, all little-endian) and a TSV interchange form.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HGF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Tsv,
}

impl FeatureFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FeatureFormat::Binary => ".bin",
            FeatureFormat::Tsv => ".tsv",
        }
    }
}

pub fn write_features(path: &Path, x: &Array2<f32>, format: FeatureFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        FeatureFormat::Binary => {
            w.write_all(MAGIC)?;
            for dim in [x.nrows(), x.ncols()] {
                let d = u32::try_from(dim).map_err(|_| Error::Format(format!("dimension {dim} exceeds u32")))?;
                w.write_all(&d.to_le_bytes())?;
            }
            for v in x.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        FeatureFormat::Tsv => {
            // header carries the shape so zero-width matrices round-trip
            writeln!(w, "#{}\t{}", x.nrows(), x.ncols())?;
            for row in x.rows() {
                let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(w, "{}", fields.join("\t"))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads either form; the binary magic decides.
pub fn read_features(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(path, &bytes)
    } else {
        read_tsv(path, &String::from_utf8_lossy(&bytes))
    }
}

fn read_binary(path: &Path, bytes: &[u8]) -> Result<Array2<f32>> {
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 {
        return Err(bad("truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (u32_at(4), u32_at(8));
    let body = &bytes[12..];
    if body.len() != rows * cols * 4 {
        return Err(bad(&format!("expected {} feature bytes, found {}", rows * cols * 4, body.len())));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

fn read_tsv(path: &Path, text: &str) -> Result<Array2<f32>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (rows, cols) = match lines.next() {
        Some((_, header)) if header.starts_with('#') => {
            let dims: Vec<usize> = header[1..]
                .split('\t')
                .map(|f| f.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(1, "malformed shape header".into()))?;
            match dims[..] {
                [r, c] => (r, c),
                _ => return Err(parse_err(1, "shape header needs rows and cols".into())),
            }
        }
        _ => return Err(parse_err(1, "missing '#rows<TAB>cols' header".into())),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        seen += 1;
        let before = data.len();
        for f in line.split('\t') {
            let v: f32 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("'{f}' is not a number")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(parse_err(idx + 1, format!("expected {cols} values, found {}", data.len() - before)));
        }
    }
    if seen != rows && cols > 0 {
        return Err(Error::Format(format!("{}: expected {rows} rows, found {seen}", path.display())));
    }
    data.resize(rows * cols, 0.0);
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}
