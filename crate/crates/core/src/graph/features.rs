//! Node feature tables and the NFV1 binary layout.
//!
//! NFV1: the magic bytes `NFV1`, a little-endian `u32` row count, a
//! little-endian `u32` dimension, then `rows × dim` little-endian `f32`
//! values in row-major order. Row identities live in a JSON sidecar.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::StaticGraph;
use crate::artifact::{atomic_write, ArtifactError, FORMAT_VERSION};
use crate::ingestion::Id;
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"NFV1";
pub const SIDECAR_FORMAT: &str = "rumorsage.feature_ids";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed feature file: {0}")]
    Format(String),
    #[error("feature dimension {actual} does not match expected {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("graph {graph_id} has no feature rows for nodes {nodes:?}")]
    MissingRows { graph_id: usize, nodes: Vec<usize> },
    #[error("duplicate feature row for id {0}")]
    DuplicateId(Id),
    #[error("sidecar lists {ids} ids but the feature file has {rows} rows")]
    RowCount { rows: usize, ids: usize },
    #[error("non-finite feature value for id {0}")]
    NonFinite(Id),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// Writes an NFV1 stream. `data` holds `rows × dim` values.
pub fn write_nfv1<W: Write>(mut w: W, rows: usize, dim: usize, data: &[f32]) -> std::io::Result<()> {
    assert_eq!(data.len(), rows * dim, "NFV1 payload length");
    let rows32 = u32::try_from(rows).map_err(|_| std::io::Error::other("too many rows for NFV1"))?;
    let dim32 = u32::try_from(dim).map_err(|_| std::io::Error::other("dimension too large for NFV1"))?;
    w.write_all(MAGIC)?;
    w.write_all(&rows32.to_le_bytes())?;
    w.write_all(&dim32.to_le_bytes())?;
    for x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

/// Reads an NFV1 stream into `(rows, dim, data)`.
pub fn read_nfv1<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f32>), FeatureError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| FeatureError::Format(format!("read failed: {e}")))?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(FeatureError::Format("missing NFV1 header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FeatureError::Format("header overflows".into()))?;
    let body = &bytes[12..];
    if body.len() != expected {
        return Err(FeatureError::Format(format!(
            "expected {expected} payload bytes for {rows}x{dim}, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, dim, data))
}

/// Row identities of an NFV1 file. Unknown fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    #[serde(default = "sidecar_format")]
    pub format: String,
    #[serde(default = "sidecar_version")]
    pub version: u32,
    pub ids: Vec<Id>,
    /// Ids whose row was computed from empty text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<Id>,
    #[serde(default)]
    pub config: serde_json::Value,
}

fn sidecar_format() -> String {
    SIDECAR_FORMAT.to_string()
}

fn sidecar_version() -> u32 {
    FORMAT_VERSION
}

/// Text-embedding rows keyed by tweet id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    ids: Vec<Id>,
    index: HashMap<Id, usize>,
    data: Vec<f32>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[Id] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn push(&mut self, id: Id, row: &[f32]) -> Result<(), FeatureError> {
        if row.len() != self.dim {
            return Err(FeatureError::DimMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(FeatureError::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, id: &Id) -> Option<&[f32]> {
        self.index.get(id).map(|&r| &self.data[r * self.dim..(r + 1) * self.dim])
    }

    /// The sidecar conventionally sits next to the feature file.
    pub fn sidecar_path(features: &Path) -> PathBuf {
        let mut name = features.as_os_str().to_owned();
        name.push(".ids.json");
        PathBuf::from(name)
    }

    pub fn from_parts(dim: usize, ids: Vec<Id>, data: Vec<f32>) -> Result<Self, FeatureError> {
        if dim == 0 || data.len() != ids.len() * dim {
            return Err(FeatureError::RowCount {
                rows: data.len().checked_div(dim).unwrap_or(0),
                ids: ids.len(),
            });
        }
        let mut table = Self::new(dim);
        for (id, row) in ids.into_iter().zip(data.chunks_exact(dim)) {
            table.push(id, row)?;
        }
        Ok(table)
    }

    /// Writes the NFV1 file and its sidecar, each atomically.
    pub fn save(&self, features: &Path, sidecar: &Path, config: serde_json::Value) -> Result<(), FeatureError> {
        let mut bytes = Vec::with_capacity(12 + self.data.len() * 4);
        write_nfv1(&mut bytes, self.ids.len(), self.dim, &self.data).expect("in-memory write");
        atomic_write(features, &bytes)?;
        let meta = FeatureSidecar {
            format: sidecar_format(),
            version: FORMAT_VERSION,
            ids: self.ids.clone(),
            flagged: Vec::new(),
            config,
        };
        crate::artifact::write_json(sidecar, &meta)?;
        Ok(())
    }

    pub fn load(features: &Path, sidecar: &Path) -> Result<Self, FeatureError> {
        let file = File::open(features).map_err(|source| FeatureError::Io {
            path: features.to_path_buf(),
            source,
        })?;
        let (rows, dim, data) = read_nfv1(BufReader::new(file))?;
        let meta: FeatureSidecar = crate::artifact::read_json(sidecar)?;
        if meta.ids.len() != rows {
            return Err(FeatureError::RowCount {
                rows,
                ids: meta.ids.len(),
            });
        }
        Self::from_parts(dim, meta.ids, data)
    }

    /// Streams the NFV1 form to `path` without an intermediate buffer.
    pub fn write_nfv1_file(&self, path: &Path) -> Result<(), FeatureError> {
        let io = |source| FeatureError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let file = File::create(path).map_err(io)?;
        write_nfv1(BufWriter::new(file), self.ids.len(), self.dim, &self.data).map_err(io)
    }
}

/// A graph together with its `N × dim` node feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturedGraph {
    pub graph: StaticGraph,
    pub features: Tensor,
}

/// Looks up a feature row for every node of `g`.
pub fn attach_features(g: &StaticGraph, table: &FeatureTable, expected_dim: usize) -> Result<FeaturedGraph, FeatureError> {
    if table.dim() != expected_dim {
        return Err(FeatureError::DimMismatch {
            expected: expected_dim,
            actual: table.dim(),
        });
    }
    let dim = table.dim();
    let mut data = Vec::with_capacity(g.nodes.len() * dim);
    let mut missing = Vec::new();
    for node in &g.nodes {
        match table.row(&node.tweet_id) {
            Some(row) => data.extend(row.iter().map(|&x| f64::from(x))),
            None => missing.push(node.i),
        }
    }
    if !missing.is_empty() {
        return Err(FeatureError::MissingRows {
            graph_id: g.graph_id,
            nodes: missing,
        });
    }
    Ok(FeaturedGraph {
        graph: g.clone(),
        features: Tensor::from_vec(g.nodes.len(), dim, data).expect("row count matches"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphEdge, GraphNode, EdgeKind};
    use crate::ingestion::NodeKind;

    fn three_node_graph() -> StaticGraph {
        let node = |i: usize, kind| GraphNode {
            i,
            tweet_id: Id(format!("t{i}")),
            ts: i as i64,
            kind,
        };
        StaticGraph {
            graph_id: 4,
            label: Some(0),
            nodes: vec![node(0, NodeKind::Source), node(1, NodeKind::Reply), node(2, NodeKind::Reply)],
            edges: vec![
                GraphEdge { src: 1, dst: 0, kind: EdgeKind::Reply },
                GraphEdge { src: 2, dst: 1, kind: EdgeKind::Reply },
            ],
        }
    }

    fn table(n: usize, dim: usize) -> FeatureTable {
        let mut t = FeatureTable::new(dim);
        for i in 0..n {
            let row: Vec<f32> = (0..dim).map(|d| (i * dim + d) as f32 * 0.25).collect();
            t.push(Id(format!("t{i}")), &row).unwrap();
        }
        t
    }

    #[test]
    fn nfv1_layout_is_exact() {
        let mut bytes = Vec::new();
        write_nfv1(&mut bytes, 2, 1, &[1.0, -2.5]).unwrap();
        let mut expected = b"NFV1".to_vec();
        expected.extend([2, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(read_nfv1(&bytes[..]).unwrap(), (2, 1, vec![1.0, -2.5]));
        assert!(read_nfv1(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_nfv1(&b"NFV2\0\0\0\0\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.nfv1");
        let side = FeatureTable::sidecar_path(&path);
        let t = table(3, 5);
        t.save(&path, &side, serde_json::Value::Null).unwrap();
        assert_eq!(FeatureTable::load(&path, &side).unwrap(), t);
        let streamed = dir.path().join("g.nfv1");
        t.write_nfv1_file(&streamed).unwrap();
        assert_eq!(fs::read(&streamed).unwrap(), fs::read(&path).unwrap());
    }

    #[test]
    fn sidecar_ignores_unknown_fields() {
        let meta: FeatureSidecar = serde_json::from_str(r#"{"ids": ["a", 7], "model": "x"}"#).unwrap();
        assert_eq!(meta.ids, vec![Id("a".into()), Id("7".into())]);
    }

    #[test]
    fn attach_covers_every_node() {
        let g = three_node_graph();
        let fg = attach_features(&g, &table(3, 768), 768).unwrap();
        assert_eq!(fg.features.shape(), (3, 768));
        assert_eq!(fg.features.get(1, 0), 768.0 * 0.25);
    }

    #[test]
    fn attach_reports_missing_and_dim_errors() {
        let g = three_node_graph();
        match attach_features(&g, &table(2, 768), 768) {
            Err(FeatureError::MissingRows { graph_id: 4, nodes }) => assert_eq!(nodes, vec![2]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            attach_features(&g, &table(3, 8), 768),
            Err(FeatureError::DimMismatch { expected: 768, actual: 8 })
        ));
    }

    #[test]
    fn push_rejects_bad_rows() {
        let mut t = table(1, 2);
        assert!(t.push(Id("t0".into()), &[0.0, 0.0]).is_err());
        assert!(t.push(Id("x".into()), &[0.0]).is_err());
        assert!(t.push(Id("y".into()), &[f32::NAN, 0.0]).is_err());
    }
}
