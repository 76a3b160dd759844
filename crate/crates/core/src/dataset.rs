//! Label sets, instance manifests, embedding matrices and label-masked views
//! of a retrieval database.
//!
//! Manifest format (UTF-8, one JSON object per line):
//!
//! ```text
//! {"labels":["dog","cat","fish"]}
//! {"id":"img_1","label":"dog","image":"dog/001.png"}
//! {"id":"img_2","label":"cat","image":"cat/001.png"}
//! ```
//!
//! Text manifests use `"text"` instead of `"image"`; a manifest never mixes
//! the two.
//!
//! Embedding file format: magic `IJEB`, `u32` version (1), `u32` dim,
//! `u64` count, then `count * dim` little-endian `f32` values, row-major,
//! rows in manifest order.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::SeedKey;

/// Sentinel used for predictions that matched no candidate label.
pub const UNMATCHED: &str = "⊥";

pub const EMBEDDING_MAGIC: &[u8; 4] = b"IJEB";
pub const EMBEDDING_VERSION: u32 = 1;
const NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("empty manifest")]
    EmptyManifest,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("line {line}: label {label:?} is not declared in the header")]
    UnknownLabel { line: usize, label: String },
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
    #[error("embedding file: bad magic or version ({0})")]
    BadHeader(String),
    #[error("embedding file holds {found} rows but the manifest has {expected} instances")]
    CountMismatch { expected: usize, found: usize },
    #[error("embedding file truncated: expected {expected} bytes of data, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("embedding row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("embedding row {row} has zero norm")]
    ZeroRow { row: usize },
    #[error("label {0:?} has no instances in the retrieval database")]
    LabelWithoutInstances(String),
    #[error("unknown label {0:?}")]
    UnknownMaskLabel(String),
    #[error("masking {masked} of {total} labels leaves nothing to retrieve from")]
    MaskAll { masked: usize, total: usize },
    #[error("missing proportion {0} is outside [0, 1)")]
    BadProportion(f64),
    #[error("embedding dims differ: {0} vs {1}")]
    DimMismatch(usize, usize),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ordered, duplicate-free list of class labels. Position `j` (0-based here,
/// rendered 1-based in prompts) identifies sub-question `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(DatasetError::InvalidLabelSet(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(DatasetError::InvalidLabelSet("empty label".into()));
            }
            if label == UNMATCHED {
                return Err(DatasetError::InvalidLabelSet(format!(
                    "{UNMATCHED:?} is reserved"
                )));
            }
            if !seen.insert(label.as_str()) {
                return Err(DatasetError::InvalidLabelSet(format!(
                    "duplicate label {label:?}"
                )));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = DatasetError;
    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(value: LabelSet) -> Self {
        value.labels
    }
}

/// What the model is shown for an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Image(PathBuf),
    Text(String),
}

impl Payload {
    pub fn is_image(&self) -> bool {
        matches!(self, Payload::Image(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub label: String,
    pub payload: Payload,
    pub embedding_row: usize,
}

/// A query to classify: payload plus its embedding(s). The gold label is
/// deliberately absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: String,
    pub payload: Payload,
    pub embedding: Vec<f32>,
    pub aux_embedding: Option<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    text: Option<String>,
}

/// Parsed manifest: header label set plus instances in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub labelset: LabelSet,
    pub instances: Vec<Instance>,
}

impl Manifest {
    pub fn gold_labels(&self) -> HashMap<String, String> {
        self.instances
            .iter()
            .map(|i| (i.id.clone(), i.label.clone()))
            .collect()
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Manifest, DatasetError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_no, header) = lines.next().ok_or(DatasetError::EmptyManifest)?;
    let header: HeaderLine =
        serde_json::from_str(header).map_err(|e| DatasetError::Malformed {
            line: header_no,
            message: format!("bad header: {e}"),
        })?;
    let labelset = LabelSet::new(header.labels).map_err(|e| DatasetError::Malformed {
        line: header_no,
        message: e.to_string(),
    })?;

    let mut instances = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut image_kind: Option<bool> = None;
    for (line_no, line) in lines {
        let record: RecordLine =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if let Some(&first_line) = first_seen.get(&record.id) {
            return Err(DatasetError::DuplicateId {
                id: record.id,
                first_line,
                second_line: line_no,
            });
        }
        if !labelset.contains(&record.label) {
            return Err(DatasetError::UnknownLabel {
                line: line_no,
                label: record.label,
            });
        }
        let payload = match (record.image, record.text) {
            (Some(image), None) => Payload::Image(PathBuf::from(image)),
            (None, Some(text)) => Payload::Text(text),
            _ => {
                return Err(DatasetError::Malformed {
                    line: line_no,
                    message: "record needs exactly one of \"image\" or \"text\"".into(),
                })
            }
        };
        match image_kind {
            None => image_kind = Some(payload.is_image()),
            Some(kind) if kind != payload.is_image() => {
                return Err(DatasetError::Malformed {
                    line: line_no,
                    message: "manifest mixes image and text payloads".into(),
                })
            }
            _ => {}
        }
        first_seen.insert(record.id.clone(), line_no);
        instances.push(Instance {
            embedding_row: instances.len(),
            id: record.id,
            label: record.label,
            payload,
        });
    }
    Ok(Manifest {
        labelset,
        instances,
    })
}

pub fn render_manifest(manifest: &Manifest) -> String {
    let mut out = serde_json::to_string(&HeaderLine {
        labels: manifest.labelset.labels().to_vec(),
    })
    .expect("header serializes");
    out.push('\n');
    for inst in &manifest.instances {
        let (image, text) = match &inst.payload {
            Payload::Image(p) => (Some(p.to_string_lossy().into_owned()), None),
            Payload::Text(t) => (None, Some(t.clone())),
        };
        let line = serde_json::to_string(&RecordLine {
            id: inst.id.clone(),
            label: inst.label.clone(),
            image,
            text,
        })
        .expect("record serializes");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, render_manifest(manifest)).map_err(io_err(path))
}

/// Row-major `count x dim` matrix of `f32`, rows stored L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

/// Rows that were renormalized on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormReport {
    pub renormalized_rows: Vec<usize>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from raw rows, normalizing each one.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<(Self, NormReport), DatasetError> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(DatasetError::BadHeader("dim must be positive".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(DatasetError::DimMismatch(dim, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(dim, data)
    }

    fn from_flat(dim: usize, mut data: Vec<f32>) -> Result<(Self, NormReport), DatasetError> {
        let mut report = NormReport::default();
        for (row, chunk) in data.chunks_mut(dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite { row });
            }
            let norm = chunk
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(DatasetError::ZeroRow { row });
            }
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                for v in chunk.iter_mut() {
                    *v = (f64::from(*v) / norm) as f32;
                }
                report.renormalized_rows.push(row);
            }
        }
        Ok((Self { dim, data }, report))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.dim)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

pub fn parse_embeddings(
    bytes: &[u8],
    expected_count: usize,
) -> Result<(EmbeddingMatrix, NormReport), DatasetError> {
    if bytes.len() < 20 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(DatasetError::BadHeader("missing IJEB magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(DatasetError::BadHeader(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(DatasetError::BadHeader("dim must be positive".into()));
    }
    if count != expected_count {
        return Err(DatasetError::CountMismatch {
            expected: expected_count,
            found: count,
        });
    }
    let body = &bytes[20..];
    let needed = count * dim * 4;
    if body.len() != needed {
        return Err(DatasetError::Truncated {
            expected: needed,
            found: body.len(),
        });
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (matrix, report) = EmbeddingMatrix::from_flat(dim, data)?;
    if !report.renormalized_rows.is_empty() {
        log::warn!(
            "renormalized {} embedding row(s) whose norm deviated from 1 by more than {NORM_TOLERANCE}",
            report.renormalized_rows.len()
        );
    }
    Ok((matrix, report))
}

pub fn load_embeddings(
    path: &Path,
    expected_count: usize,
) -> Result<(EmbeddingMatrix, NormReport), DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    parse_embeddings(&bytes, expected_count)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(&matrix.to_bytes())
        .and_then(|_| writer.flush())
        .map_err(io_err(path))
}

/// Labeled, embedded example pool.
#[derive(Debug, Clone)]
pub struct RetrievalDatabase {
    labelset: LabelSet,
    instances: Vec<Instance>,
    embeddings: EmbeddingMatrix,
    aux_embeddings: Option<EmbeddingMatrix>,
}

impl RetrievalDatabase {
    pub fn new(
        manifest: Manifest,
        embeddings: EmbeddingMatrix,
        aux_embeddings: Option<EmbeddingMatrix>,
    ) -> Result<Self, DatasetError> {
        let Manifest {
            labelset,
            instances,
        } = manifest;
        if embeddings.count() != instances.len() {
            return Err(DatasetError::CountMismatch {
                expected: instances.len(),
                found: embeddings.count(),
            });
        }
        if let Some(aux) = &aux_embeddings {
            if aux.count() != instances.len() {
                return Err(DatasetError::CountMismatch {
                    expected: instances.len(),
                    found: aux.count(),
                });
            }
        }
        for label in labelset.iter() {
            if !instances.iter().any(|i| i.label == label) {
                return Err(DatasetError::LabelWithoutInstances(label.to_string()));
            }
        }
        Ok(Self {
            labelset,
            instances,
            embeddings,
            aux_embeddings,
        })
    }

    /// Loads manifest + embedding files, resolving image paths against the
    /// manifest's directory.
    pub fn open(
        manifest_path: &Path,
        embeddings_path: &Path,
        aux_path: Option<&Path>,
    ) -> Result<Self, DatasetError> {
        let manifest = resolve_payload_paths(load_manifest(manifest_path)?, manifest_path);
        let (embeddings, _) = load_embeddings(embeddings_path, manifest.instances.len())?;
        let aux = aux_path
            .map(|p| load_embeddings(p, manifest.instances.len()).map(|(m, _)| m))
            .transpose()?;
        Self::new(manifest, embeddings, aux)
    }

    pub fn labelset(&self) -> &LabelSet {
        &self.labelset
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn aux_embeddings(&self) -> Option<&EmbeddingMatrix> {
        self.aux_embeddings.as_ref()
    }

    pub fn embedding(&self, instance: &Instance) -> &[f32] {
        self.embeddings.row(instance.embedding_row)
    }

    pub fn aux_embedding(&self, instance: &Instance) -> Option<&[f32]> {
        self.aux_embeddings
            .as_ref()
            .map(|m| m.row(instance.embedding_row))
    }

    pub fn find(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn query_for(&self, instance: &Instance) -> Query {
        Query {
            id: instance.id.clone(),
            payload: instance.payload.clone(),
            embedding: self.embedding(instance).to_vec(),
            aux_embedding: self.aux_embedding(instance).map(<[f32]>::to_vec),
        }
    }

    /// Stable fingerprint of the instance set, used to key masking draws.
    pub fn fingerprint(&self) -> u64 {
        let mut key = SeedKey::new("database");
        for label in self.labelset.iter() {
            key.push_str(label);
        }
        for inst in &self.instances {
            key.push_str(&inst.id).push_str(&inst.label);
        }
        key.finish()
    }
}

/// Makes relative image paths absolute with respect to the manifest file.
pub fn resolve_payload_paths(mut manifest: Manifest, manifest_path: &Path) -> Manifest {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    for inst in &mut manifest.instances {
        if let Payload::Image(p) = &mut inst.payload {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    manifest
}

/// Query instances (a test split) with their embeddings and gold labels.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub labelset: LabelSet,
    pub queries: Vec<Query>,
    pub gold: Vec<String>,
}

impl QuerySet {
    pub fn open(
        manifest_path: &Path,
        embeddings_path: &Path,
        aux_path: Option<&Path>,
    ) -> Result<Self, DatasetError> {
        let manifest = resolve_payload_paths(load_manifest(manifest_path)?, manifest_path);
        let count = manifest.instances.len();
        let (embeddings, _) = load_embeddings(embeddings_path, count)?;
        let aux = aux_path
            .map(|p| load_embeddings(p, count).map(|(m, _)| m))
            .transpose()?;
        Ok(Self::from_parts(manifest, &embeddings, aux.as_ref()))
    }

    pub fn from_parts(
        manifest: Manifest,
        embeddings: &EmbeddingMatrix,
        aux: Option<&EmbeddingMatrix>,
    ) -> Self {
        let mut queries = Vec::with_capacity(manifest.instances.len());
        let mut gold = Vec::with_capacity(manifest.instances.len());
        for inst in manifest.instances {
            queries.push(Query {
                embedding: embeddings.row(inst.embedding_row).to_vec(),
                aux_embedding: aux.map(|m| m.row(inst.embedding_row).to_vec()),
                id: inst.id,
                payload: inst.payload,
            });
            gold.push(inst.label);
        }
        Self {
            labelset: manifest.labelset,
            queries,
            gold,
        }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// The database as seen with some labels removed. Only instances of
/// `available_labels` are ever yielded.
#[derive(Debug, Clone)]
pub struct IncompleteView<'a> {
    base: &'a RetrievalDatabase,
    available_labels: Vec<String>,
    masked_labels: Vec<String>,
    seed: Option<u64>,
    members: Vec<usize>,
}

impl<'a> IncompleteView<'a> {
    fn build(
        base: &'a RetrievalDatabase,
        masked: &HashSet<&str>,
        seed: Option<u64>,
    ) -> Self {
        let (masked_labels, available_labels): (Vec<String>, Vec<String>) = base
            .labelset
            .iter()
            .map(str::to_string)
            .partition(|l| masked.contains(l.as_str()));
        let members = base
            .instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| !masked.contains(inst.label.as_str()))
            .map(|(i, _)| i)
            .collect();
        Self {
            base,
            available_labels,
            masked_labels,
            seed,
            members,
        }
    }

    /// View with nothing masked.
    pub fn complete(base: &'a RetrievalDatabase) -> Self {
        Self::build(base, &HashSet::new(), None)
    }

    pub fn base(&self) -> &'a RetrievalDatabase {
        self.base
    }

    pub fn labelset(&self) -> &'a LabelSet {
        &self.base.labelset
    }

    pub fn available_labels(&self) -> &[String] {
        &self.available_labels
    }

    pub fn masked_labels(&self) -> &[String] {
        &self.masked_labels
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_available(&self, label: &str) -> bool {
        self.available_labels.iter().any(|l| l == label)
    }

    /// Indices into the base instance list, manifest order.
    pub fn member_indices(&self) -> &[usize] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Instance> + '_ {
        self.members.iter().map(|&i| &self.base.instances[i])
    }
}

/// Number of labels masked at a given proportion: `floor(p * m)`.
pub fn masked_count(proportion: f64, label_count: usize) -> Result<usize, DatasetError> {
    if !proportion.is_finite() || !(0.0..1.0).contains(&proportion) {
        return Err(DatasetError::BadProportion(proportion));
    }
    // Small epsilon keeps products such as 0.29 * 100 = 28.999999999999996 at 29.
    let count = (proportion * label_count as f64 + 1e-9).floor() as usize;
    if count >= label_count {
        return Err(DatasetError::MaskAll {
            masked: count,
            total: label_count,
        });
    }
    Ok(count)
}

/// Masks `floor(p * m)` labels chosen uniformly without replacement,
/// deterministically in `(database, proportion, seed)`.
pub fn mask_labels(
    db: &RetrievalDatabase,
    missing_proportion: f64,
    seed: u64,
) -> Result<IncompleteView<'_>, DatasetError> {
    let m = db.labelset.len();
    let count = masked_count(missing_proportion, m)?;
    let mut rng = SeedKey::new("mask")
        .with_u64(db.fingerprint())
        .with_u64(count as u64)
        .with_u64(seed)
        .rng();
    let chosen: HashSet<&str> = index::sample(&mut rng, m, count)
        .into_iter()
        .map(|i| db.labelset.labels[i].as_str())
        .collect();
    Ok(IncompleteView::build(db, &chosen, Some(seed)))
}

pub fn mask_explicit<'a, S: AsRef<str>>(
    db: &'a RetrievalDatabase,
    masked: &[S],
) -> Result<IncompleteView<'a>, DatasetError> {
    let mut set = HashSet::new();
    for label in masked {
        let label = label.as_ref();
        if !db.labelset.contains(label) {
            return Err(DatasetError::UnknownMaskLabel(label.to_string()));
        }
        set.insert(label);
    }
    if set.len() >= db.labelset.len() {
        return Err(DatasetError::MaskAll {
            masked: set.len(),
            total: db.labelset.len(),
        });
    }
    Ok(IncompleteView::build(db, &set, None))
}
