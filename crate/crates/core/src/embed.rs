//! Instance- and node-level embeddings from a checkpoint, plus the
//! mean-readout and label-propagation baselines.

use std::fs;
use std::io::{self, Read as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bigraph::{BipartiteGraph, FEATURE_DIM};
use crate::diffcore::Tensor;
use crate::trainer::Checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEmbedding {
    pub instance: String,
    pub checkpoint: String,
    pub normalized: bool,
    pub values: Vec<f64>,
}

/// Code histogram of length `k`; divided by the node count when
/// `normalized`.
pub fn code_histogram(codes: &[usize], k: usize, normalized: bool) -> Vec<f64> {
    let mut hist = vec![0.0; k];
    for &c in codes {
        hist[c] += 1.0;
    }
    if normalized && !codes.is_empty() {
        let n = codes.len() as f64;
        for v in &mut hist {
            *v /= n;
        }
    }
    hist
}

/// Codes and codeword rows for every node of `graph`, which must already
/// carry the checkpoint's feature scaling.
pub fn node_embeddings(graph: &BipartiteGraph, checkpoint: &Checkpoint) -> (Vec<usize>, Tensor) {
    let input = crate::vqgae::GraphInput::new(graph, checkpoint.config.model.aggregator);
    let h = checkpoint.model.encode(&input);
    checkpoint.model.quantize(&h)
}

pub fn instance_embedding(graph: &BipartiteGraph, checkpoint: &Checkpoint, normalized: bool) -> InstanceEmbedding {
    let (codes, _) = node_embeddings(graph, checkpoint);
    InstanceEmbedding {
        instance: graph.name.clone(),
        checkpoint: checkpoint.id(),
        normalized,
        values: code_histogram(&codes, checkpoint.model.codebook.k(), normalized),
    }
}

/// Row mean of the encoder output.
pub fn mean_readout(graph: &BipartiteGraph, checkpoint: &Checkpoint) -> Vec<f64> {
    let input = crate::vqgae::GraphInput::new(graph, checkpoint.config.model.aggregator);
    checkpoint.model.encode(&input).mean_rows().into_vec()
}

/// Two rounds of averaging each node's features with its neighbours'
/// (the node itself included), then the mean over nodes.
pub fn label_propagation_embedding(graph: &BipartiteGraph) -> Vec<f64> {
    let n = graph.n_nodes();
    let neighbors = graph.neighbors();
    let mut x = graph.node_features.clone();
    for _ in 0..2 {
        let mut next = vec![0.0; x.len()];
        for i in 0..n {
            let out = &mut next[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
            for &j in std::iter::once(&i).chain(&neighbors[i]) {
                for (o, v) in out.iter_mut().zip(&x[j * FEATURE_DIM..(j + 1) * FEATURE_DIM]) {
                    *o += v;
                }
            }
            let w = 1.0 / (1 + neighbors[i].len()) as f64;
            out.iter_mut().for_each(|o| *o *= w);
        }
        x = next;
    }
    let mut mean = vec![0.0; FEATURE_DIM];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(&x[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]) {
            *m += v;
        }
    }
    if n > 0 {
        mean.iter_mut().for_each(|m| *m /= n as f64);
    }
    mean
}

/// One row of an embedding store.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub name: String,
    pub family: String,
    pub size: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("malformed embedding store: {0}")]
    Format(String),
}

/// CSV layout: `name,family,size,k,v0,...,v{k-1}`.
pub fn write_store_csv(path: &Path, records: &[EmbeddingRecord]) -> Result<(), StoreError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    let k = records.first().map_or(0, |r| r.vector.len());
    let mut header = vec!["name".to_string(), "family".into(), "size".into(), "k".into()];
    header.extend((0..k).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.name.clone(), r.family.clone(), r.size.clone(), r.vector.len().to_string()];
        row.extend(r.vector.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_store_csv(path: &Path) -> Result<Vec<EmbeddingRecord>, StoreError> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let bad = |m: &str| StoreError::Format(m.to_string());
        let k: usize = row.get(3).ok_or_else(|| bad("missing k"))?.parse().map_err(|_| bad("bad k"))?;
        if row.len() != 4 + k {
            return Err(bad("row length does not match k"));
        }
        let vector = (4..4 + k)
            .map(|i| row[i].parse::<f64>().map_err(|_| bad("bad value")))
            .collect::<Result<_, _>>()?;
        out.push(EmbeddingRecord {
            name: row[0].to_string(),
            family: row[1].to_string(),
            size: row[2].to_string(),
            vector,
        });
    }
    Ok(out)
}

const STORE_MAGIC: &[u8; 8] = b"FORGEEMB";

/// Binary layout: magic, `u64` record count, then per record three
/// length-prefixed UTF-8 strings (`u32` length), a `u32` vector length and
/// the little-endian `f64` values.
pub fn write_store_binary(path: &Path, records: &[EmbeddingRecord]) -> io::Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(STORE_MAGIC);
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        for s in [&r.name, &r.family, &r.size] {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        }
        buf.extend_from_slice(&(r.vector.len() as u32).to_le_bytes());
        for v in &r.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)
}

pub fn read_store_binary(path: &Path) -> Result<Vec<EmbeddingRecord>, StoreError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != STORE_MAGIC {
        return Err(StoreError::Format("bad magic".into()));
    }
    let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let name = cur.string()?;
        let family = cur.string()?;
        let size = cur.string()?;
        let k = cur.u32()? as usize;
        let vector = cur
            .take(k * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(EmbeddingRecord {
            name,
            family,
            size,
            vector,
        });
    }
    if cur.pos != bytes.len() {
        return Err(StoreError::Format("trailing bytes".into()));
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| StoreError::Format("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, StoreError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| StoreError::Format("bad utf-8".into()))
    }
}
