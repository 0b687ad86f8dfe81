//! On-disk formats: JSON topology files and dataset manifests pointing at a
//! row-major sample matrix (little-endian binary or CSV).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphBuilder, GraphError, NeuralGraph, TaskId, Vertex, VertexId, VertexKind};
use crate::info::{ActivationDataset, InfoError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported format_version {0}, expected {FORMAT_VERSION}")]
    Version(u32),
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FormatError {
    /// True when the file parsed but describes an invalid graph structure.
    pub fn is_structural(&self) -> bool {
        matches!(self, FormatError::Graph(e) if e.is_structural())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> FormatError + '_ {
    move |source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub tasks: Vec<TaskId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexEntry {
    pub id: VertexId,
    pub kind: VertexKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub from: VertexId,
    pub to: VertexId,
    pub weight: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub format_version: u32,
    pub networks: Vec<NetworkEntry>,
    pub vertices: Vec<VertexEntry>,
    pub edges: Vec<EdgeEntry>,
}

impl TopologyFile {
    /// Networks are the distinct `network` fields of the vertex ids; each lists
    /// the tasks of its sinks.
    pub fn from_graph(g: &NeuralGraph) -> Self {
        let mut networks: BTreeMap<String, BTreeSet<TaskId>> = BTreeMap::new();
        for v in g.vertices() {
            let entry = networks.entry(v.id.network.clone()).or_default();
            if let Some(t) = &v.task {
                entry.insert(t.clone());
            }
        }
        TopologyFile {
            format_version: FORMAT_VERSION,
            networks: networks
                .into_iter()
                .map(|(name, tasks)| NetworkEntry {
                    name,
                    tasks: tasks.into_iter().collect(),
                })
                .collect(),
            vertices: g
                .vertices()
                .map(|v| VertexEntry {
                    id: v.id.clone(),
                    kind: v.kind,
                    task: v.task.clone(),
                })
                .collect(),
            edges: g
                .edges()
                .map(|(from, to, weight)| EdgeEntry {
                    from: from.clone(),
                    to: to.clone(),
                    weight,
                })
                .collect(),
        }
    }

    pub fn to_graph(&self) -> Result<NeuralGraph, FormatError> {
        if self.format_version != FORMAT_VERSION {
            return Err(FormatError::Version(self.format_version));
        }
        let mut b = GraphBuilder::new();
        for v in &self.vertices {
            b.vertex(Vertex {
                id: v.id.clone(),
                kind: v.kind,
                task: v.task.clone(),
            });
        }
        for e in &self.edges {
            b.edge(e.from.clone(), e.to.clone(), e.weight);
        }
        let g = b.build()?;
        let declared: BTreeSet<&TaskId> = self.networks.iter().flat_map(|n| &n.tasks).collect();
        let sinks: BTreeSet<&TaskId> = g.tasks().iter().collect();
        if declared != sinks {
            return Err(FormatError::Schema(format!(
                "declared tasks {:?} differ from sink tasks {:?}",
                declared.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
                sinks.iter().map(|t| t.as_str()).collect::<Vec<_>>()
            )));
        }
        Ok(g)
    }
}

pub fn read_topology(path: &Path) -> Result<NeuralGraph, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: TopologyFile = serde_json::from_str(&text).map_err(json_err(path))?;
    file.to_graph()
}

pub fn topology_json(g: &NeuralGraph) -> String {
    let mut s = serde_json::to_string_pretty(&TopologyFile::from_graph(g)).expect("topology serializes");
    s.push('\n');
    s
}

pub fn write_topology(path: &Path, g: &NeuralGraph) -> Result<(), FormatError> {
    fs::write(path, topology_json(g)).map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    Vertex(VertexId),
    Label(TaskId),
}

/// Element type of the neuron columns. Label columns are always int32.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
    Int32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Storage {
    /// Row-major, 4 bytes little-endian per entry, no header.
    Binary { path: PathBuf },
    /// One sample per line, no header row.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sample_count: usize,
    pub columns: Vec<Column>,
    pub dtype: Dtype,
    /// Relative paths resolve against the manifest's directory.
    pub storage: Storage,
}

impl DatasetManifest {
    fn validate(&self) -> Result<(), FormatError> {
        if self.format_version != FORMAT_VERSION {
            return Err(FormatError::Version(self.format_version));
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c) {
                return Err(FormatError::Schema(format!("duplicate column {c:?}")));
            }
        }
        Ok(())
    }
}

enum Cell {
    F(f64),
    I(i64),
}

fn is_label(c: &Column) -> bool {
    matches!(c, Column::Label(_))
}

pub fn read_dataset(manifest_path: &Path) -> Result<ActivationDataset, FormatError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(json_err(manifest_path))?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let width = manifest.columns.len();
    let n = manifest.sample_count;
    let mut cols: Vec<Vec<Cell>> = (0..width).map(|_| Vec::with_capacity(n)).collect();
    match &manifest.storage {
        Storage::Binary { path } => {
            let path = base.join(path);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if bytes.len() != n * width * 4 {
                return Err(FormatError::Schema(format!(
                    "{}: {} bytes, expected {} samples x {} columns x 4",
                    path.display(),
                    bytes.len(),
                    n,
                    width
                )));
            }
            for (k, chunk) in bytes.chunks_exact(4).enumerate() {
                let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
                let c = k % width;
                let cell = if is_label(&manifest.columns[c]) || manifest.dtype == Dtype::Int32 {
                    Cell::I(i32::from_le_bytes(raw) as i64)
                } else {
                    Cell::F(f32::from_le_bytes(raw) as f64)
                };
                cols[c].push(cell);
            }
        }
        Storage::Csv { path } => {
            let path = base.join(path);
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .from_path(&path)?;
            let mut rows = 0;
            for record in reader.records() {
                let record = record?;
                if record.len() != width {
                    return Err(FormatError::Schema(format!(
                        "{}: row {} has {} fields, expected {width}",
                        path.display(),
                        rows + 1,
                        record.len()
                    )));
                }
                for (c, field) in record.iter().enumerate() {
                    let bad = || {
                        FormatError::Schema(format!("{}: row {}: cannot parse {field:?}", path.display(), rows + 1))
                    };
                    let cell = if is_label(&manifest.columns[c]) || manifest.dtype == Dtype::Int32 {
                        Cell::I(field.parse::<i32>().map_err(|_| bad())? as i64)
                    } else {
                        Cell::F(field.parse::<f32>().map_err(|_| bad())? as f64)
                    };
                    cols[c].push(cell);
                }
                rows += 1;
            }
            if rows != n {
                return Err(FormatError::Schema(format!(
                    "{}: {rows} rows, manifest declares {n}",
                    path.display()
                )));
            }
        }
    }
    let mut data = ActivationDataset::new(n);
    for (col, cells) in manifest.columns.iter().zip(cols) {
        match col {
            Column::Vertex(id) => data.insert_neuron(
                id.clone(),
                cells
                    .into_iter()
                    .map(|c| match c {
                        Cell::F(x) => x,
                        Cell::I(x) => x as f64,
                    })
                    .collect(),
            )?,
            Column::Label(t) => data.insert_label(
                t.clone(),
                cells
                    .into_iter()
                    .map(|c| match c {
                        Cell::I(x) => x,
                        Cell::F(_) => unreachable!("labels are read as int32"),
                    })
                    .collect(),
            )?,
        }
    }
    data.validate_labels()?;
    Ok(data)
}

/// Storage layout for [`write_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StorageKind {
    Binary,
    Csv,
}

/// Writes `data` as float32 neuron columns followed by label columns, with the
/// matrix next to the manifest under `<stem>.bin` or `<stem>.csv`.
///
/// Values that are not exactly representable as float32 are rounded.
pub fn write_dataset(manifest_path: &Path, data: &ActivationDataset, kind: StorageKind) -> Result<(), FormatError> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let file_name = match kind {
        StorageKind::Binary => format!("{stem}.bin"),
        StorageKind::Csv => format!("{stem}.csv"),
    };
    let matrix_path = manifest_path.with_file_name(&file_name);
    let mut columns: Vec<Column> = data.neuron_ids().cloned().map(Column::Vertex).collect();
    columns.extend(data.tasks().cloned().map(Column::Label));
    let n = data.sample_count();
    let cell = |c: &Column, row: usize| -> (f32, i32) {
        match c {
            Column::Vertex(id) => (data.neuron(id).unwrap()[row] as f32, 0),
            Column::Label(t) => (0.0, data.label(t).unwrap()[row] as i32),
        }
    };
    let mut out = Vec::new();
    for row in 0..n {
        for (k, c) in columns.iter().enumerate() {
            let (f, i) = cell(c, row);
            match kind {
                StorageKind::Binary => match c {
                    Column::Vertex(_) => out.extend_from_slice(&f.to_le_bytes()),
                    Column::Label(_) => out.extend_from_slice(&i.to_le_bytes()),
                },
                StorageKind::Csv => {
                    if k > 0 {
                        out.push(b',');
                    }
                    match c {
                        Column::Vertex(_) => write!(out, "{f}").unwrap(),
                        Column::Label(_) => write!(out, "{i}").unwrap(),
                    }
                }
            }
        }
        if kind == StorageKind::Csv {
            out.push(b'\n');
        }
    }
    fs::write(&matrix_path, out).map_err(io_err(&matrix_path))?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        sample_count: n,
        columns,
        dtype: Dtype::Float32,
        storage: match kind {
            StorageKind::Binary => Storage::Binary { path: file_name.into() },
            StorageKind::Csv => Storage::Csv { path: file_name.into() },
        },
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, text + "\n").map_err(io_err(manifest_path))
}
