//! On-disk formats for the evaluation harness: embeddings as a JSON header
//! plus little-endian f32 binary (or CSV for small fixtures), labels as
//! JSON-lines keyed by sample id.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, Labels, TaskKind};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingHeader {
    n: usize,
    d: usize,
}

pub fn write_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let header_path = path.with_extension("json");
    let bin_path = path.with_extension("bin");
    let header = serde_json::to_string(&EmbeddingHeader { n: table.n, d: table.d })
        .map_err(|e| Error::Invalid(e.to_string()))?;
    fs::write(&header_path, header).map_err(|e| Error::io(&header_path, e))?;
    let mut buf = Vec::with_capacity(table.values.len() * 4);
    for v in &table.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&bin_path, e))?;
    Ok(())
}

/// Reads `<stem>.json` + `<stem>.bin`, or a CSV of float rows when the path
/// ends in `.csv`.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    if path.extension().map(|e| e == "csv").unwrap_or(false) {
        return read_embeddings_csv(path);
    }
    let header_path = path.with_extension("json");
    let bin_path = path.with_extension("bin");
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: EmbeddingHeader = serde_json::from_str(&text).map_err(|e| Error::Decode {
        path: header_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let mut bytes = Vec::new();
    fs::File::open(&bin_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(&bin_path, e))?;
    if bytes.len() != header.n * header.d * 4 {
        return Err(Error::Invalid(format!(
            "{}: expected {} bytes, found {}",
            bin_path.display(),
            header.n * header.d * 4,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    EmbeddingTable::new(header.n, header.d, values)
}

fn read_embeddings_csv(path: &Path) -> Result<EmbeddingTable> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut n = 0;
    let mut d = 0;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Decode {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        if n == 0 {
            d = row.len();
        } else if row.len() != d {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {d} columns, found {}", row.len()),
            });
        }
        values.extend(row);
        n += 1;
    }
    EmbeddingTable::new(n, d, values)
}

#[derive(Debug, Deserialize)]
struct LabelLine {
    id: usize,
    y: serde_json::Value,
}

/// JSON-lines `{id, y}`; ids must be the contiguous range 0..n matching the
/// embedding row order.
pub fn read_labels(path: &Path, kind: TaskKind) -> Result<Labels> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(usize, serde_json::Value)> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(&line).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        rows.push((parsed.id, parsed.y));
    }
    rows.sort_by_key(|(id, _)| *id);
    for (expect, (id, _)) in rows.iter().enumerate() {
        if *id != expect {
            return Err(Error::Invalid(format!(
                "label ids must be contiguous from 0; found {id} at position {expect}"
            )));
        }
    }
    let vec_of = |v: &serde_json::Value| -> Result<Vec<f64>> {
        v.as_array()
            .ok_or_else(|| Error::Invalid("expected an array label".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::Invalid("non-numeric label entry".into())))
            .collect()
    };
    match kind {
        TaskKind::Classification => {
            let ys = rows
                .iter()
                .map(|(_, v)| {
                    v.as_u64()
                        .map(|u| u as usize)
                        .ok_or_else(|| Error::Invalid("expected an integer class label".into()))
                })
                .collect::<Result<_>>()?;
            Ok(Labels::Class(ys))
        }
        TaskKind::Multilabel => {
            Ok(Labels::Multilabel(rows.iter().map(|(_, v)| vec_of(v)).collect::<Result<_>>()?))
        }
        TaskKind::Regression => {
            Ok(Labels::Continuous(rows.iter().map(|(_, v)| vec_of(v)).collect::<Result<_>>()?))
        }
        TaskKind::Distribution => {
            Ok(Labels::Distribution(rows.iter().map(|(_, v)| vec_of(v)).collect::<Result<_>>()?))
        }
    }
}
