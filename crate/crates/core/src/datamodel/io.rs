//! File formats: feature stores (CSV and binary), embeddings, weights and
//! the class manifest.
//!
//! Feature CSV: header `class_id,split,f0,...,f{d-1}`, split is `support` or
//! `query`. Binary feature store: magic `FSCF`, then little-endian
//! `u32 version (1)`, `u32 n`, `u32 d`, and `n` records of
//! `(u32 class_id, u8 split_tag, d x f32)`. Embedding CSV:
//! `class_id,e0,...`. Weight CSV: `class_id,w0,...`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{
    ClassId, ClassRegistry, EmbeddingSource, EmbeddingTable, FeatureStore, FeatureVector, Split,
    WeightMatrix,
};
use crate::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"FSCF";
pub const BINARY_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA: u32 = 1;

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: bad number {field:?}")))
}

fn parse_class(field: &str, line: u64) -> Result<ClassId> {
    field
        .trim()
        .parse::<u32>()
        .map(ClassId)
        .map_err(|_| Error::Format(format!("line {line}: bad class_id {field:?}")))
}

/// Checks a `class_id,[split,]p0,p1,...` header and returns the vector width.
fn check_header(headers: &csv::StringRecord, with_split: bool, prefix: char) -> Result<usize> {
    let fixed = if with_split { 2 } else { 1 };
    let mut ok = headers.get(0) == Some("class_id");
    if with_split {
        ok &= headers.get(1) == Some("split");
    }
    for (i, h) in headers.iter().skip(fixed).enumerate() {
        ok &= h == format!("{prefix}{i}");
    }
    let width = headers.len().saturating_sub(fixed);
    if !ok || width == 0 {
        let expected = if with_split {
            format!("class_id,split,{prefix}0,...")
        } else {
            format!("class_id,{prefix}0,...")
        };
        return Err(Error::Format(format!("header must be {expected}")));
    }
    Ok(width)
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<FeatureStore> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let dim = check_header(rdr.headers()?, true, 'f')?;
    let mut store = FeatureStore::new(dim)?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        if rec.len() != dim + 2 {
            return Err(Error::Format(format!(
                "line {line}: expected {} fields, got {}",
                dim + 2,
                rec.len()
            )));
        }
        let class = parse_class(&rec[0], line)?;
        let split: Split = rec[1].parse()?;
        let values = rec
            .iter()
            .skip(2)
            .map(|f| parse_f64(f, line))
            .collect::<Result<Vec<_>>>()?;
        store.push(class, split, FeatureVector::new(values)?)?;
    }
    Ok(store)
}

pub fn write_features_csv<W: Write>(store: &FeatureStore, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["class_id".to_string(), "split".to_string()];
    header.extend((0..store.dim()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (class, split, f) in store.records() {
        let mut row = vec![class.to_string(), split.name().to_string()];
        row.extend(f.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_binary<R: Read>(mut reader: R) -> Result<FeatureStore> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("missing FSCF magic".into()));
    }
    let version = reader.read_u32::<LittleEndian>()?;
    if version != BINARY_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: BINARY_VERSION,
        });
    }
    let n = reader.read_u32::<LittleEndian>()?;
    let d = reader.read_u32::<LittleEndian>()? as usize;
    let mut store = FeatureStore::new(d)?;
    let mut buf = vec![0f32; d];
    for _ in 0..n {
        let class = ClassId(reader.read_u32::<LittleEndian>()?);
        let split = Split::from_tag(reader.read_u8()?)?;
        reader.read_f32_into::<LittleEndian>(&mut buf)?;
        let values = buf.iter().map(|&v| v as f64).collect();
        store.push(class, split, FeatureVector::new(values)?)?;
    }
    Ok(store)
}

/// Values are narrowed to `f32`.
pub fn write_features_binary<W: Write>(store: &FeatureStore, mut writer: W) -> Result<()> {
    let n = u32::try_from(store.len())
        .map_err(|_| Error::Format("too many records for the binary format".into()))?;
    writer.write_all(BINARY_MAGIC)?;
    writer.write_u32::<LittleEndian>(BINARY_VERSION)?;
    writer.write_u32::<LittleEndian>(n)?;
    writer.write_u32::<LittleEndian>(store.dim() as u32)?;
    for (class, split, f) in store.records() {
        writer.write_u32::<LittleEndian>(class.0)?;
        writer.write_u8(split.tag())?;
        for &v in f.as_slice() {
            writer.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Loads a feature store, choosing the binary reader when the file starts
/// with the `FSCF` magic.
pub fn load_features(path: &Path) -> Result<FeatureStore> {
    let mut file = BufReader::new(File::open(path)?);
    let mut head = [0u8; 4];
    let got = file.read(&mut head)?;
    let rest = head[..got].chain(file);
    if got == 4 && &head == BINARY_MAGIC {
        read_features_binary(rest)
    } else {
        read_features_csv(rest)
    }
}

pub fn save_features(store: &FeatureStore, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("fscf") => write_features_binary(store, file),
        _ => write_features_csv(store, file),
    }
}

fn read_rows<R: Read>(reader: R, prefix: char) -> Result<(usize, Vec<(ClassId, Vec<f64>)>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let dim = check_header(rdr.headers()?, false, prefix)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        if rec.len() != dim + 1 {
            return Err(Error::Format(format!(
                "line {line}: expected {} fields, got {}",
                dim + 1,
                rec.len()
            )));
        }
        let class = parse_class(&rec[0], line)?;
        let values = rec
            .iter()
            .skip(1)
            .map(|f| parse_f64(f, line))
            .collect::<Result<Vec<_>>>()?;
        rows.push((class, values));
    }
    Ok((dim, rows))
}

fn write_rows<'a, W: Write>(
    writer: W,
    dim: usize,
    prefix: char,
    rows: impl Iterator<Item = (ClassId, &'a [f64])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["class_id".to_string()];
    header.extend((0..dim).map(|i| format!("{prefix}{i}")));
    w.write_record(&header)?;
    for (class, values) in rows {
        let mut row = vec![class.to_string()];
        row.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings_csv<R: Read>(reader: R, source: EmbeddingSource) -> Result<EmbeddingTable> {
    let (dim, rows) = read_rows(reader, 'e')?;
    let mut table = EmbeddingTable::new(dim, source);
    for (c, e) in rows {
        table.insert(c, e)?;
    }
    Ok(table)
}

pub fn write_embeddings_csv<W: Write>(table: &EmbeddingTable, writer: W) -> Result<()> {
    write_rows(writer, table.dim(), 'e', table.iter())
}

pub fn load_embeddings(path: &Path, source: EmbeddingSource) -> Result<EmbeddingTable> {
    read_embeddings_csv(BufReader::new(File::open(path)?), source)
}

pub fn read_weights_csv<R: Read>(reader: R) -> Result<WeightMatrix> {
    let (dim, rows) = read_rows(reader, 'w')?;
    let mut w = WeightMatrix::new(dim);
    for (c, r) in rows {
        w.insert(c, r)?;
    }
    Ok(w)
}

pub fn write_weights_csv<W: Write>(weights: &WeightMatrix, writer: W) -> Result<()> {
    write_rows(writer, weights.dim(), 'w', weights.iter())
}

pub fn load_weights(path: &Path) -> Result<WeightMatrix> {
    read_weights_csv(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    pub session: usize,
}

/// Human-readable labels and session assignment per class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub classes: BTreeMap<ClassId, ManifestEntry>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest {
            schema: MANIFEST_SCHEMA,
            classes: BTreeMap::new(),
        }
    }

    pub fn from_registry(registry: &ClassRegistry, label: impl Fn(ClassId) -> String) -> Self {
        let mut m = Manifest::new();
        for t in 0..registry.num_sessions() {
            for &c in registry.session_classes(t) {
                m.classes.insert(
                    c,
                    ManifestEntry {
                        label: label(c),
                        session: t,
                    },
                );
            }
        }
        m
    }

    /// Sessions must be numbered contiguously from 0.
    pub fn registry(&self) -> Result<ClassRegistry> {
        let mut sessions: BTreeMap<usize, Vec<ClassId>> = BTreeMap::new();
        for (&c, entry) in &self.classes {
            sessions.entry(entry.session).or_default().push(c);
        }
        let mut reg = ClassRegistry::new();
        for (expected, (&t, classes)) in sessions.iter().enumerate() {
            if t != expected {
                return Err(Error::Format(format!(
                    "manifest sessions must be contiguous from 0; session {expected} is empty"
                )));
            }
            reg.register_session(classes.iter().copied())?;
        }
        Ok(reg)
    }

    pub fn label(&self, class: ClassId) -> Option<&str> {
        self.classes.get(&class).map(|e| e.label.as_str())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let m: Manifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::SchemaVersion {
                found: m.schema,
                expected: MANIFEST_SCHEMA,
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}
