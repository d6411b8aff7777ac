//! Dataset directories and the synthetic planted-homophily generator.
//!
//! A dataset directory holds `manifest.json`, one `edges_<relation>.tsv` per
//! relation (`src TAB dst`, 0-based within each type), one feature file per
//! node type, `labels.tsv` (`node TAB label`) and `splits.tsv`
//! (`node TAB train|val|test`). Target nodes missing from the label file are
//! unlabeled; nodes missing from the split file belong to no split.

mod features;
mod synth;

pub use features::{read_features, write_features, FeatureFormat};
pub use synth::{synth_generate, SynthConfig};

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, HeteroSchema, NodeType, Relation, Split, UNLABELED};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTypeEntry {
    pub name: String,
    pub count: usize,
    pub feature_file: String,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub name: String,
    pub src: String,
    pub dst: String,
    pub edge_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub node_types: Vec<NodeTypeEntry>,
    pub relations: Vec<RelationEntry>,
    pub target_type: String,
    pub num_classes: usize,
    pub label_file: String,
    pub split_file: String,
}

/// File-name-safe form of a relation or type name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Distinct file names derived from `names` as `<prefix><stem><ext>`.
fn file_names(names: &[&str], prefix: &str, ext: &str) -> Vec<String> {
    let mut used = HashSet::new();
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut f = format!("{prefix}{}{ext}", file_stem(n));
            if !used.insert(f.clone()) {
                f = format!("{prefix}{}_{i}{ext}", file_stem(n));
                used.insert(f.clone());
            }
            f
        })
        .collect()
}

pub fn save_graph(g: &HeteroGraph, dir: &Path, format: FeatureFormat) -> Result<()> {
    g.ensure_valid()?;
    fs::create_dir_all(dir)?;
    let schema = &g.schema;
    let type_names: Vec<&str> = schema.node_types.iter().map(|t| t.name.as_str()).collect();
    let rel_names: Vec<&str> = schema.relations.iter().map(|r| r.name.as_str()).collect();
    let feature_files = file_names(&type_names, "features_", format.extension());
    let edge_files = file_names(&rel_names, "edges_", ".tsv");

    for ((t, x), file) in schema.node_types.iter().zip(&g.features).zip(&feature_files) {
        debug_assert_eq!(x.nrows(), t.count);
        write_features(&dir.join(file), x, format)?;
    }
    for (adj, file) in g.adjacency.iter().zip(&edge_files) {
        let mut w = BufWriter::new(File::create(dir.join(file))?);
        for (s, d) in adj.iter_entries() {
            writeln!(w, "{s}\t{d}")?;
        }
        w.flush()?;
    }

    let mut w = BufWriter::new(File::create(dir.join("labels.tsv"))?);
    for (i, &l) in g.labels.iter().enumerate() {
        if l != UNLABELED {
            writeln!(w, "{i}\t{l}")?;
        }
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("splits.tsv"))?);
    for (i, &s) in g.splits.iter().enumerate() {
        if s != Split::None {
            writeln!(w, "{i}\t{}", s.as_str())?;
        }
    }
    w.flush()?;

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        node_types: schema
            .node_types
            .iter()
            .zip(feature_files)
            .map(|(t, feature_file)| NodeTypeEntry {
                name: t.name.clone(),
                count: t.count,
                feature_file,
                feature_dim: t.feature_dim,
            })
            .collect(),
        relations: schema
            .relations
            .iter()
            .zip(edge_files)
            .map(|(r, edge_file)| RelationEntry {
                name: r.name.clone(),
                src: type_names[r.src].to_string(),
                dst: type_names[r.dst].to_string(),
                edge_file,
                inverse: r.inverse.map(|i| rel_names[i].to_string()),
            })
            .collect(),
        target_type: type_names[g.target_type].to_string(),
        num_classes: g.num_classes,
        label_file: "labels.tsv".into(),
        split_file: "splits.tsv".into(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn existing(dir: &Path, file: &str) -> Result<PathBuf> {
    let p = dir.join(file);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingFile(p))
    }
}

/// Calls `f(line_number, fields)` for every non-empty line of a TSV file.
fn for_each_record(path: &Path, mut f: impl FnMut(usize, &[&str]) -> std::result::Result<(), String>) -> Result<()> {
    let reader = BufReader::new(File::open(path)?);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        f(idx + 1, &fields).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        })?;
    }
    Ok(())
}

fn parse_index(field: &str, bound: usize, what: &str) -> std::result::Result<usize, String> {
    let v: usize = field
        .trim()
        .parse()
        .map_err(|_| format!("{what} '{field}' is not a non-negative integer"))?;
    if v >= bound {
        return Err(format!("{what} {v} out of range (count {bound})"));
    }
    Ok(v)
}

fn two_fields<'a>(fields: &[&'a str]) -> std::result::Result<(&'a str, &'a str), String> {
    match fields {
        [a, b] => Ok((a, b)),
        _ => Err(format!("expected 2 tab-separated fields, found {}", fields.len())),
    }
}

pub fn load_graph(dir: &Path) -> Result<HeteroGraph> {
    let manifest_path = existing(dir, MANIFEST)?;
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format version {}",
            manifest.format_version
        )));
    }
    let type_id = |name: &str| {
        manifest
            .node_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("manifest references unknown node type '{name}'")))
    };
    let rel_id = |name: &str| {
        manifest
            .relations
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::Format(format!("manifest references unknown relation '{name}'")))
    };

    let node_types: Vec<NodeType> = manifest
        .node_types
        .iter()
        .map(|t| NodeType {
            name: t.name.clone(),
            count: t.count,
            feature_dim: t.feature_dim,
        })
        .collect();
    let mut relations = Vec::with_capacity(manifest.relations.len());
    for r in &manifest.relations {
        relations.push(Relation {
            name: r.name.clone(),
            src: type_id(&r.src)?,
            dst: type_id(&r.dst)?,
            inverse: r.inverse.as_deref().map(rel_id).transpose()?,
        });
    }
    let schema = HeteroSchema { node_types, relations };
    let target_type = type_id(&manifest.target_type)?;

    let mut features = Vec::with_capacity(schema.node_types.len());
    for (entry, t) in manifest.node_types.iter().zip(&schema.node_types) {
        let path = existing(dir, &entry.feature_file)?;
        let x = read_features(&path)?;
        if x.nrows() != t.count || x.ncols() != t.feature_dim {
            return Err(Error::Format(format!(
                "{}: {}x{} features, manifest declares {}x{}",
                path.display(),
                x.nrows(),
                x.ncols(),
                t.count,
                t.feature_dim
            )));
        }
        features.push(x);
    }

    let mut adjacency = Vec::with_capacity(schema.relations.len());
    for (entry, r) in manifest.relations.iter().zip(&schema.relations) {
        let path = existing(dir, &entry.edge_file)?;
        let (rows, cols) = (schema.node_types[r.src].count, schema.node_types[r.dst].count);
        let mut edges = Vec::new();
        for_each_record(&path, |_, fields| {
            let (s, d) = two_fields(fields)?;
            edges.push((parse_index(s, rows, "source")?, parse_index(d, cols, "destination")?));
            Ok(())
        })?;
        adjacency.push(CsrMatrix::from_edges(rows, cols, edges)?);
    }

    let n = schema.node_types[target_type].count;
    let mut labels = vec![UNLABELED; n];
    let num_classes = manifest.num_classes;
    for_each_record(&existing(dir, &manifest.label_file)?, |_, fields| {
        let (node, label) = two_fields(fields)?;
        let i = parse_index(node, n, "node")?;
        labels[i] = parse_index(label, num_classes, "label")? as i64;
        Ok(())
    })?;
    let mut splits = vec![Split::None; n];
    for_each_record(&existing(dir, &manifest.split_file)?, |_, fields| {
        let (node, split) = two_fields(fields)?;
        let i = parse_index(node, n, "node")?;
        splits[i] = match Split::parse(split.trim()) {
            Some(Split::None) | None => return Err(format!("unknown split '{split}'")),
            Some(s) => s,
        };
        Ok(())
    })?;

    let g = HeteroGraph {
        schema,
        adjacency,
        features,
        labels,
        splits,
        target_type,
        num_classes,
    };
    g.ensure_valid()?;
    Ok(g)
}
