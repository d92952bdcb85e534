//! Versioned JSON model files.
//!
//! Floats are written in shortest round-trip form, so a reloaded forest
//! predicts bit-identically. Resample records are rebuilt from each tree's
//! subsample on load.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::TrainingSet;
use crate::error::{Error, Result};
use crate::forest::{ForestModel, ResolvedForestConfig};
use crate::sampling::SubsampleDraw;
use crate::tree::TreeModel;

pub const MODEL_FORMAT: &str = "ijforest-model";
pub const MODEL_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = concat!("ijforest ", env!("CARGO_PKG_VERSION"));

/// SHA-256 over the shape, features and labels of a training set
/// (little-endian IEEE bytes), as lowercase hex.
pub fn fingerprint(ts: &TrainingSet) -> String {
    let mut h = Sha256::new();
    h.update((ts.n() as u64).to_le_bytes());
    h.update((ts.d() as u64).to_le_bytes());
    for v in ts.features().iter().chain(ts.labels()) {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a byte string as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub tool: String,
    pub config: ResolvedForestConfig,
    pub n: usize,
    pub d: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub fingerprint: String,
    pub trees: Vec<TreeModel>,
}

impl ModelFile {
    pub fn new(model: &ForestModel, ts: &TrainingSet) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            tool: TOOL_VERSION.into(),
            config: *model.config(),
            n: model.n(),
            d: model.d(),
            feature_names: ts.feature_names().to_vec(),
            target_name: ts.target_name().to_string(),
            fingerprint: fingerprint(ts),
            trees: model.trees().to_vec(),
        }
    }

    pub fn to_writer<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.to_writer(&mut v)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Parses a model file, refusing unknown formats and versions.
    pub fn from_reader<R: Read>(input: R) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_reader(input)?;
        let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!("not a model file (format {format:?})")));
        }
        let version = raw.get("version").cloned().unwrap_or(serde_json::Value::Null);
        if version.as_u64() != Some(MODEL_VERSION as u64) {
            return Err(Error::ModelVersion { found: version.to_string(), expected: MODEL_VERSION.to_string() });
        }
        Ok(serde_json::from_value(raw)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// Rebuilds the forest, re-checking every tree.
    pub fn into_forest(self) -> Result<ForestModel> {
        let trees = self
            .trees
            .into_iter()
            .map(|t| {
                let draw = SubsampleDraw::from_indices(t.subsample().n(), t.subsample().indices().to_vec())?;
                TreeModel::from_parts(t.d(), t.nodes().to_vec(), draw, t.partition().cloned(), *t.config())
            })
            .collect::<Result<Vec<_>>>()?;
        ForestModel::from_trees(self.n, self.d, self.config, trees)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SyntheticKind, SyntheticSpec};
    use crate::forest::{train, ForestConfig};
    use crate::tree::TreeConfig;

    #[test]
    fn round_trip_is_bit_exact() {
        let ts = gen_synthetic(&SyntheticSpec::new(SyntheticKind::Cosine, 2), 80, 3).unwrap();
        for tree in [TreeConfig::honest(), TreeConfig::greedy_cart()] {
            let model = train(&ts, &ForestConfig::new(tree).with_b(15).with_seed(4)).unwrap();
            let bytes = ModelFile::new(&model, &ts).to_bytes().unwrap();
            let back = ModelFile::from_reader(&bytes[..]).unwrap().into_forest().unwrap();
            assert_eq!(back, model);
            for x in [[0.12345, 0.6789], [0.0, 1.0]] {
                assert_eq!(back.predict(&x).unwrap().to_bits(), model.predict(&x).unwrap().to_bits());
            }
            let again = ModelFile::new(&back, &ts).to_bytes().unwrap();
            assert_eq!(bytes, again);
        }
    }

    #[test]
    fn version_mismatch_is_refused() {
        let ts = gen_synthetic(&SyntheticSpec::new(SyntheticKind::Cosine, 2), 20, 3).unwrap();
        let model = train(&ts, &ForestConfig::new(TreeConfig::honest()).with_b(2)).unwrap();
        let mut file = ModelFile::new(&model, &ts);
        file.version = 99;
        let bytes = file.to_bytes().unwrap();
        assert!(matches!(ModelFile::from_reader(&bytes[..]), Err(Error::ModelVersion { found, .. }) if found == "99"));
        assert!(ModelFile::from_reader(&b"{\"format\":\"other\"}"[..]).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let spec = SyntheticSpec::new(SyntheticKind::Cosine, 2);
        let a = gen_synthetic(&spec, 20, 1).unwrap();
        let b = gen_synthetic(&spec, 20, 2).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&a.clone()));
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
