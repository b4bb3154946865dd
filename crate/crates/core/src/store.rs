//! On-disk per-frame embedding store.
//!
//! Layout: `<root>/<video_id>/manifest.json` plus one headerless binary per
//! backend holding `num_frames * dim` little-endian `f32` values, row-major.
//! Vectors are kept raw (not L2-normalized); the scorer normalizes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("manifest not found: {0}")]
    MissingManifest(PathBuf),
    #[error("unknown schema version {0} (expected {SCHEMA_VERSION})")]
    UnknownSchemaVersion(u32),
    #[error("backend `{backend}`: expected {expected} bytes, found {actual}")]
    ShapeMismatch {
        backend: String,
        expected: usize,
        actual: usize,
    },
    #[error("backend `{backend}`: row {row} is a zero vector")]
    ZeroVectorRow { backend: String, row: usize },
    #[error("backend `{backend}`: row {row} contains a non-finite value")]
    NonFiniteValue { backend: String, row: usize },
    #[error("backend `{backend}`: unsupported dtype `{dtype}`")]
    UnsupportedDtype { backend: String, dtype: String },
    #[error("invalid video metadata: {0}")]
    InvalidMeta(String),
    #[error("embedding set has no backends")]
    EmptyBackends,
    #[error("malformed manifest {path}: {source}")]
    MalformedManifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Per-video sampling metadata. Frame `k` (zero-based) sits at `k / fps` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    video_id: String,
    fps: f64,
    num_frames: usize,
    duration_seconds: f64,
}

impl VideoMeta {
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        num_frames: usize,
        duration_seconds: f64,
    ) -> Result<Self, StoreError> {
        let video_id = video_id.into();
        if video_id.is_empty() || video_id.contains(['/', '\\']) || video_id == ".." {
            return Err(StoreError::InvalidMeta(format!(
                "video id `{video_id}` is not a valid directory name"
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(StoreError::InvalidMeta(format!("fps must be > 0, got {fps}")));
        }
        if num_frames == 0 {
            return Err(StoreError::InvalidMeta("num_frames must be >= 1".into()));
        }
        let min_duration = (num_frames - 1) as f64 / fps;
        if !duration_seconds.is_finite() || duration_seconds < min_duration {
            return Err(StoreError::InvalidMeta(format!(
                "duration {duration_seconds} s is shorter than the last frame time {min_duration} s"
            )));
        }
        Ok(Self {
            video_id,
            fps,
            num_frames,
            duration_seconds,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn duration_seconds(&self) -> f64 {
        self.duration_seconds
    }

    pub fn timestamp(&self, frame_index: usize) -> f64 {
        frame_index as f64 / self.fps
    }
}

/// One backend's `N x d` frame matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendMatrix {
    name: String,
    dim: usize,
    data: Vec<f32>,
}

impl BackendMatrix {
    /// Builds a matrix from row-major data, rejecting zero or non-finite rows.
    pub fn new(name: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self, StoreError> {
        let name = name.into();
        if dim == 0 || !data.len().is_multiple_of(dim) || data.is_empty() {
            return Err(StoreError::ShapeMismatch {
                backend: name,
                expected: dim * 4,
                actual: data.len() * 4,
            });
        }
        for (row, values) in data.chunks_exact(dim).enumerate() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFiniteValue { backend: name, row });
            }
            if values.iter().all(|&v| v == 0.0) {
                return Err(StoreError::ZeroVectorRow { backend: name, row });
            }
        }
        Ok(Self { name, dim, data })
    }

    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self, StoreError> {
        let name = name.into();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(StoreError::ShapeMismatch {
                backend: name,
                expected: rows.len() * dim * 4,
                actual: rows.iter().map(Vec::len).sum::<usize>() * 4,
            });
        }
        Self::new(name, dim, rows.concat())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Arithmetic mean of the raw rows, accumulated in `f64`.
pub fn mean_embedding(matrix: &BackendMatrix) -> Vec<f64> {
    let mut sum = vec![0.0f64; matrix.dim()];
    for row in matrix.rows() {
        for (acc, &v) in sum.iter_mut().zip(row) {
            *acc += f64::from(v);
        }
    }
    let n = matrix.num_rows() as f64;
    sum.iter_mut().for_each(|v| *v /= n);
    sum
}

/// All backend matrices for one video. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEmbeddingSet {
    meta: VideoMeta,
    backends: BTreeMap<String, BackendMatrix>,
}

impl VideoEmbeddingSet {
    pub fn new(meta: VideoMeta, matrices: Vec<BackendMatrix>) -> Result<Self, StoreError> {
        if matrices.is_empty() {
            return Err(StoreError::EmptyBackends);
        }
        let mut backends = BTreeMap::new();
        for m in matrices {
            if m.num_rows() != meta.num_frames() {
                return Err(StoreError::ShapeMismatch {
                    backend: m.name.clone(),
                    expected: meta.num_frames() * m.dim() * 4,
                    actual: m.data.len() * 4,
                });
            }
            if backends.contains_key(m.name()) {
                return Err(StoreError::InvalidMeta(format!(
                    "duplicate backend `{}`",
                    m.name()
                )));
            }
            backends.insert(m.name.clone(), m);
        }
        Ok(Self { meta, backends })
    }

    pub fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    pub fn backend(&self, name: &str) -> Option<&BackendMatrix> {
        self.backends.get(name)
    }

    pub fn backends(&self) -> impl Iterator<Item = &BackendMatrix> {
        self.backends.values()
    }

    pub fn backend_names(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }

    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.meta.num_frames())
            .map(|k| self.meta.timestamp(k))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub video_id: String,
    pub fps: f64,
    pub num_frames: usize,
    pub duration_seconds: f64,
    pub backends: Vec<ManifestBackend>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestBackend {
    pub name: String,
    pub dim: usize,
    pub dtype: String,
    pub file: String,
}

pub fn read_manifest(video_dir: &Path) -> Result<Manifest, StoreError> {
    let path = video_dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(StoreError::MissingManifest(path))
        }
        Err(e) => return Err(StoreError::io(&path, e)),
    };
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|source| StoreError::MalformedManifest { path, source })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(StoreError::UnknownSchemaVersion(manifest.schema_version));
    }
    Ok(manifest)
}

pub fn load_video_embeddings(
    store_root: &Path,
    video_id: &str,
) -> Result<VideoEmbeddingSet, StoreError> {
    let dir = store_root.join(video_id);
    let manifest = read_manifest(&dir)?;
    let meta = VideoMeta::new(
        manifest.video_id.clone(),
        manifest.fps,
        manifest.num_frames,
        manifest.duration_seconds,
    )?;
    if manifest.video_id != video_id {
        return Err(StoreError::InvalidMeta(format!(
            "manifest names video `{}` but lives under `{video_id}`",
            manifest.video_id
        )));
    }
    let mut matrices = Vec::with_capacity(manifest.backends.len());
    for entry in &manifest.backends {
        if entry.dtype != DTYPE_F32LE {
            return Err(StoreError::UnsupportedDtype {
                backend: entry.name.clone(),
                dtype: entry.dtype.clone(),
            });
        }
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
        let expected = meta.num_frames() * entry.dim * 4;
        if bytes.len() != expected || entry.dim == 0 {
            return Err(StoreError::ShapeMismatch {
                backend: entry.name.clone(),
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        matrices.push(BackendMatrix::new(entry.name.clone(), entry.dim, data)?);
    }
    VideoEmbeddingSet::new(meta, matrices)
}

pub fn save_video_embeddings(store_root: &Path, set: &VideoEmbeddingSet) -> Result<(), StoreError> {
    let meta = set.meta();
    let dir = store_root.join(meta.video_id());
    fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
    let mut entries = Vec::new();
    for m in set.backends() {
        let file = format!("{}.f32", m.name());
        let path = dir.join(&file);
        let bytes: Vec<u8> = m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).map_err(|e| StoreError::io(&path, e))?;
        entries.push(ManifestBackend {
            name: m.name().to_string(),
            dim: m.dim(),
            dtype: DTYPE_F32LE.to_string(),
            file,
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        video_id: meta.video_id().to_string(),
        fps: meta.fps(),
        num_frames: meta.num_frames(),
        duration_seconds: meta.duration_seconds(),
        backends: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| StoreError::io(&path, e))
}

/// Lists video ids (subdirectories) under a store root, sorted.
pub fn list_videos(store_root: &Path) -> Result<Vec<String>, StoreError> {
    let entries = fs::read_dir(store_root).map_err(|e| StoreError::io(store_root, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| StoreError::io(store_root, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

#[derive(Debug, Clone, Serialize)]
pub struct VideoDiagnostics {
    pub video_id: String,
    pub num_frames: Option<usize>,
    pub shapes: Vec<(String, usize, usize)>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoreReport {
    pub videos: Vec<VideoDiagnostics>,
}

impl StoreReport {
    pub fn is_clean(&self) -> bool {
        self.videos.iter().all(|v| v.violations.is_empty())
    }

    pub fn violation_count(&self) -> usize {
        self.videos.iter().map(|v| v.violations.len()).sum()
    }
}

/// Loads every video under `store_root` and collects violations instead of
/// stopping at the first one.
pub fn validate_store(store_root: &Path) -> Result<StoreReport, StoreError> {
    let mut videos = Vec::new();
    for id in list_videos(store_root)? {
        let mut diag = VideoDiagnostics {
            video_id: id.clone(),
            num_frames: None,
            shapes: Vec::new(),
            violations: Vec::new(),
        };
        match load_video_embeddings(store_root, &id) {
            Ok(set) => {
                diag.num_frames = Some(set.meta().num_frames());
                diag.shapes = set
                    .backends()
                    .map(|m| (m.name().to_string(), m.num_rows(), m.dim()))
                    .collect();
            }
            Err(e) => diag.violations.push(e.to_string()),
        }
        videos.push(diag);
    }
    Ok(StoreReport { videos })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f32>>> {
        (1usize..12, 1usize..9).prop_flat_map(|(n, d)| {
            prop::collection::vec(
                prop::collection::vec(-100.0f32..100.0, d).prop_filter("nonzero", |r| {
                    r.iter().any(|&v| v != 0.0)
                }),
                n,
            )
        })
    }

    proptest! {
        #[test]
        fn save_load_is_bitwise_identity(rows in rows_strategy(), fps in 0.5f64..4.0) {
            let dir = tempfile::tempdir().unwrap();
            let n = rows.len();
            let meta = VideoMeta::new("p", fps, n, (n as f64) / fps).unwrap();
            let set = VideoEmbeddingSet::new(meta, vec![BackendMatrix::from_rows("clip", &rows).unwrap()]).unwrap();
            save_video_embeddings(dir.path(), &set).unwrap();
            let loaded = load_video_embeddings(dir.path(), "p").unwrap();
            let a: Vec<u32> = set.backend("clip").unwrap().as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = loaded.backend("clip").unwrap().as_slice().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(loaded.meta(), set.meta());
        }

        #[test]
        fn mean_is_permutation_invariant(rows in rows_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = mean_embedding(&BackendMatrix::from_rows("clip", &rows).unwrap());
            let b = mean_embedding(&BackendMatrix::from_rows("clip", &shuffled).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
