//! Named parameter tensors with paired gradient slots.
//!
//! Entries keep insertion order, which fixes the flattening layout, the
//! initialization draw order and the byte layout of the exchange format
//! (flat little-endian f64 vector plus a JSON manifest of per-entry offsets).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NumericsError;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    /// Aggregation granularity tag; one tag per named tensor.
    pub tag: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered map name → (parameter tensor, gradient tensor).
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; the gradient slot starts at zero.
    pub fn register(&mut self, name: &str, value: Tensor) -> usize {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter {name:?}"
        );
        let grad = Tensor::zeros(value.shape());
        let idx = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tag: name.to_string(),
            value,
            grad,
        });
        self.by_name.insert(name.to_string(), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> &ParamEntry {
        &self.entries[idx]
    }

    pub fn index_of(&self, name: &str) -> Result<usize, NumericsError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor, NumericsError> {
        Ok(&self.entries[self.index_of(name)?].value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor, NumericsError> {
        Ok(&self.entries[self.index_of(name)?].grad)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor, NumericsError> {
        let idx = self.index_of(name)?;
        Ok(&mut self.entries[idx].value)
    }

    pub fn value_by_index(&self, idx: usize) -> &Tensor {
        &self.entries[idx].value
    }

    pub fn value_by_index_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.entries[idx].value
    }

    /// Concatenate parameter values in insertion order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for e in &self.entries {
            out.extend_from_slice(e.value.data());
        }
        out
    }

    /// Concatenate gradients in insertion order.
    pub fn flatten_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for e in &self.entries {
            out.extend_from_slice(e.grad.data());
        }
        out
    }

    /// Write a flat vector back into the parameter tensors.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<(), NumericsError> {
        if flat.len() != self.param_count() {
            return Err(NumericsError::InvalidArgument(format!(
                "flat vector length {} does not match parameter count {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.value.len();
            e.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Overwrite (or accumulate into) gradient slots from a flat vector.
    pub fn set_grads(&mut self, flat: &[f64], accumulate: bool) -> Result<(), NumericsError> {
        if flat.len() != self.param_count() {
            return Err(NumericsError::InvalidArgument(format!(
                "flat gradient length {} does not match parameter count {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.grad.len();
            let dst = e.grad.data_mut();
            if accumulate {
                for (d, s) in dst.iter_mut().zip(&flat[off..off + n]) {
                    *d += s;
                }
            } else {
                dst.copy_from_slice(&flat[off..off + n]);
            }
            off += n;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().fill(0.0);
        }
    }

    /// Copy parameter values from another store with identical layout.
    pub fn assign_from(&mut self, other: &ParamStore) -> Result<(), NumericsError> {
        if !self.same_layout(other) {
            return Err(NumericsError::InvalidArgument(
                "parameter stores have different layouts".into(),
            ));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    /// Euclidean norm of the flattened parameter vector.
    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.value.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Offset table of the flat layout, in insertion order.
    pub fn manifest_entries(&self) -> Vec<ParamManifestEntry> {
        let mut off = 0;
        self.entries
            .iter()
            .map(|e| {
                let entry = ParamManifestEntry {
                    name: e.name.clone(),
                    tag: e.tag.clone(),
                    shape: e.value.shape().to_vec(),
                    offset: off,
                    len: e.value.len(),
                };
                off += e.value.len();
                entry
            })
            .collect()
    }

    /// Serialize values as little-endian f64 bytes in flat layout order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 8);
        for e in &self.entries {
            for v in e.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Fill parameter values from the little-endian byte layout produced by
    /// [`to_le_bytes`](Self::to_le_bytes).
    pub fn fill_from_le_bytes(&mut self, bytes: &[u8]) -> Result<(), NumericsError> {
        if bytes.len() != self.param_count() * 8 {
            return Err(NumericsError::InvalidArgument(format!(
                "parameter payload has {} bytes, expected {}",
                bytes.len(),
                self.param_count() * 8
            )));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.unflatten(&flat)
    }

    /// Write `params.bin` + `manifest.json` into a directory.
    pub fn save_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = ParamManifest {
            format: PARAM_FORMAT.to_string(),
            total_len: self.param_count(),
            entries: self.manifest_entries(),
        };
        let mut f = std::fs::File::create(dir.join("params.bin"))?;
        f.write_all(&self.to_le_bytes())?;
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), json + "\n")
    }

    /// Load parameters saved by [`save_to_dir`](Self::save_to_dir) into a store
    /// with the same layout.
    pub fn load_into(&mut self, dir: &Path) -> Result<(), NumericsError> {
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
            NumericsError::InvalidArgument(format!("cannot read {}: {e}", manifest_path.display()))
        })?;
        let manifest: ParamManifest = serde_json::from_str(&text)
            .map_err(|e| NumericsError::InvalidArgument(format!("bad manifest: {e}")))?;
        let expected = self.manifest_entries();
        if manifest.entries != expected || manifest.total_len != self.param_count() {
            return Err(NumericsError::InvalidArgument(
                "checkpoint layout does not match model configuration".into(),
            ));
        }
        let bin_path = dir.join("params.bin");
        let mut bytes = Vec::new();
        std::fs::File::open(&bin_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| {
                NumericsError::InvalidArgument(format!("cannot read {}: {e}", bin_path.display()))
            })?;
        self.fill_from_le_bytes(&bytes)
    }
}

pub const PARAM_FORMAT: &str = "fedseries-params-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamManifestEntry {
    pub name: String,
    pub tag: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub format: String,
    pub total_len: usize,
    pub entries: Vec<ParamManifestEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.register("a", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        s.register("b", Tensor::new(vec![1, 3], vec![-1.0, 0.5, 9.0]).unwrap());
        s
    }

    #[test]
    fn flatten_layout_is_insertion_order() {
        let s = sample_store();
        assert_eq!(s.flatten(), vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 9.0]);
        let names: Vec<_> = s.entries().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn manifest_offsets() {
        let s = sample_store();
        let m = s.manifest_entries();
        assert_eq!(m[0].offset, 0);
        assert_eq!(m[0].len, 4);
        assert_eq!(m[1].offset, 4);
        assert_eq!(m[1].tag, "b");
    }

    #[test]
    fn save_load_roundtrip_and_byte_stability() {
        let s = sample_store();
        let dir = tempfile::tempdir().unwrap();
        s.save_to_dir(dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("params.bin")).unwrap();
        let first_manifest = std::fs::read(dir.path().join("manifest.json")).unwrap();

        let mut loaded = sample_store();
        loaded.unflatten(&vec![0.0; 7]).unwrap();
        loaded.load_into(dir.path()).unwrap();
        assert_eq!(loaded.flatten(), s.flatten());

        s.save_to_dir(dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("params.bin")).unwrap(), first);
        assert_eq!(
            std::fs::read(dir.path().join("manifest.json")).unwrap(),
            first_manifest
        );
    }

    proptest! {
        #[test]
        fn flatten_unflatten_identity(values in proptest::collection::vec(-1e6_f64..1e6, 7)) {
            let mut s = sample_store();
            s.unflatten(&values).unwrap();
            prop_assert_eq!(s.flatten(), values);
        }
    }
}
