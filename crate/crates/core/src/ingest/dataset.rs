//! Windowed datasets and their on-disk artifact format.
//!
//! A dataset directory holds three flat little-endian binaries plus a JSON
//! manifest:
//!
//! - `inputs.bin`    — N·L·5 f64, window-major then row-major
//! - `time_index.bin` — N·L i64 global day indices
//! - `targets.bin`   — N f64 normalized close-return targets
//! - `manifest.json` — shapes, split sizes, normalization params, symbol,
//!   pipeline config hash
//!
//! Serialization is a pure function of the dataset, so identical inputs and
//! config produce byte-identical artifacts.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::transform::{close_at, NormalizationParams};
use super::{PipelineConfig, FEATURE_COLUMNS};
use crate::error::IngestError;
use crate::tensor::Tensor;

pub const DATASET_FORMAT: &str = "fedseries-dataset-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// One training example: L consecutive normalized feature rows, their global
/// day indices, and the normalized close-return one horizon past the window.
#[derive(Debug, Clone)]
pub struct Window {
    pub features: Tensor,
    pub time_index: Vec<i64>,
    pub target: f64,
    pub split: Split,
}

/// Windows for every split within `range`; shorter-than-window ranges yield
/// no windows rather than an error, since 80/10/10 splits of small series
/// legitimately leave validation or test too short.
pub(crate) fn windows_in_range(
    matrix: &Tensor,
    day_index: &[i64],
    range: Range<usize>,
    seq_len: usize,
    horizon: usize,
    split: Split,
) -> Result<Vec<Window>, IngestError> {
    let cols = matrix.shape()[1];
    let span = range.len();
    if span < seq_len + horizon {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(span - seq_len - horizon + 1);
    for start in range.start..=range.end - seq_len - horizon {
        let rows = &matrix.data()[start * cols..(start + seq_len) * cols];
        out.push(Window {
            features: Tensor::new(vec![seq_len, cols], rows.to_vec()).expect("window shape"),
            time_index: day_index[start..start + seq_len].to_vec(),
            target: close_at(matrix, start + seq_len + horizon - 1),
            split,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub symbol: String,
    pub seq_len: usize,
    pub n_features: usize,
    pub horizon: usize,
    pub smooth_window: usize,
    /// Ordered train, then validation, then test.
    pub windows: Vec<Window>,
    pub norm: NormalizationParams,
    pub config_hash: String,
}

impl WindowedDataset {
    pub(crate) fn assemble(
        symbol: String,
        cfg: &PipelineConfig,
        windows: Vec<Window>,
        norm: NormalizationParams,
    ) -> Result<Self, IngestError> {
        if windows.is_empty() {
            return Err(IngestError::EmptyInput(format!(
                "series {symbol} produced no windows at seq_len {}",
                cfg.seq_len
            )));
        }
        debug_assert!(windows.windows(2).all(|p| p[0].split <= p[1].split));
        Ok(Self {
            symbol,
            seq_len: cfg.seq_len,
            n_features: FEATURE_COLUMNS.len(),
            horizon: cfg.horizon,
            smooth_window: cfg.smooth_window,
            windows,
            norm,
            config_hash: cfg.hash(),
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows_of(&self, split: Split) -> impl Iterator<Item = &Window> {
        self.windows.iter().filter(move |w| w.split == split)
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for w in &self.windows {
            counts[w.split as usize] += 1;
        }
        counts
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), IngestError> {
        let io_err = |path: &Path, e: std::io::Error| IngestError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

        let mut inputs = Vec::with_capacity(self.len() * self.seq_len * self.n_features * 8);
        let mut times = Vec::with_capacity(self.len() * self.seq_len * 8);
        let mut targets = Vec::with_capacity(self.len() * 8);
        for w in &self.windows {
            for v in w.features.data() {
                inputs.extend_from_slice(&v.to_le_bytes());
            }
            for t in &w.time_index {
                times.extend_from_slice(&t.to_le_bytes());
            }
            targets.extend_from_slice(&w.target.to_le_bytes());
        }
        for (name, bytes) in
            [("inputs.bin", &inputs), ("time_index.bin", &times), ("targets.bin", &targets)]
        {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        }

        let manifest = DatasetManifest {
            format: DATASET_FORMAT.to_string(),
            symbol: self.symbol.clone(),
            seq_len: self.seq_len,
            n_features: self.n_features,
            horizon: self.horizon,
            smooth_window: self.smooth_window,
            n_windows: self.len(),
            split_counts: self.split_counts(),
            feature_columns: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            norm_min: self.norm.min.clone(),
            norm_max: self.norm.max.clone(),
            config_hash: self.config_hash.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| IngestError::Artifact(format!("manifest serialization: {e}")))?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self, IngestError> {
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| IngestError::Io { path: manifest_path.clone(), source: e })?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| IngestError::Artifact(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format != DATASET_FORMAT {
            return Err(IngestError::Artifact(format!(
                "unsupported dataset format {:?}",
                manifest.format
            )));
        }
        let n = manifest.n_windows;
        if manifest.split_counts.iter().sum::<usize>() != n {
            return Err(IngestError::Artifact("split counts do not sum to n_windows".into()));
        }
        let (l, f) = (manifest.seq_len, manifest.n_features);

        let read = |name: &str, expected: usize| -> Result<Vec<u8>, IngestError> {
            let path = dir.join(name);
            let bytes =
                std::fs::read(&path).map_err(|e| IngestError::Io { path: path.clone(), source: e })?;
            if bytes.len() != expected {
                return Err(IngestError::Artifact(format!(
                    "{name} holds {} bytes, manifest implies {expected}",
                    bytes.len()
                )));
            }
            Ok(bytes)
        };
        let inputs = read("inputs.bin", n * l * f * 8)?;
        let times = read("time_index.bin", n * l * 8)?;
        let targets = read("targets.bin", n * 8)?;

        let f64_at = |bytes: &[u8], i: usize| {
            f64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap())
        };
        let i64_at = |bytes: &[u8], i: usize| {
            i64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap())
        };

        let mut windows = Vec::with_capacity(n);
        for w in 0..n {
            let split = if w < manifest.split_counts[0] {
                Split::Train
            } else if w < manifest.split_counts[0] + manifest.split_counts[1] {
                Split::Validation
            } else {
                Split::Test
            };
            let features = Tensor::new(
                vec![l, f],
                (0..l * f).map(|i| f64_at(&inputs, w * l * f + i)).collect(),
            )
            .map_err(|e| IngestError::Artifact(format!("window {w}: {e}")))?;
            let time_index: Vec<i64> = (0..l).map(|i| i64_at(&times, w * l + i)).collect();
            windows.push(Window { features, time_index, target: f64_at(&targets, w), split });
        }

        Ok(Self {
            symbol: manifest.symbol,
            seq_len: l,
            n_features: f,
            horizon: manifest.horizon,
            smooth_window: manifest.smooth_window,
            windows,
            norm: NormalizationParams { min: manifest.norm_min, max: manifest.norm_max },
            config_hash: manifest.config_hash,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub symbol: String,
    pub seq_len: usize,
    pub n_features: usize,
    pub horizon: usize,
    pub smooth_window: usize,
    pub n_windows: usize,
    pub split_counts: [usize; 3],
    pub feature_columns: Vec<String>,
    pub norm_min: Vec<f64>,
    pub norm_max: Vec<f64>,
    pub config_hash: String,
}
