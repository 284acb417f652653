use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame feature vectors of one video, `num_frames x feature_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub values: Array2<f32>,
}

/// Sidecar metadata stored next to the raw float file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMeta {
    pub rows: usize,
    pub cols: usize,
    pub video_id: String,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, values: Array2<f32>) -> Result<Self> {
        let seq = FeatureSequence {
            video_id: video_id.into(),
            values,
        };
        if let Some(pos) = seq.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "features of {} at flat index {pos}",
                seq.video_id
            )));
        }
        Ok(seq)
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.values.ncols()
    }

    /// Writes the little-endian float file and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in self.values.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let meta = FeatureMeta {
            rows: self.num_frames(),
            cols: self.feature_dim(),
            video_id: self.video_id.clone(),
        };
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }
}

/// `clip.features.bin` -> `clip.features.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let meta: FeatureMeta = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: side.clone(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = meta.rows * meta.cols * 4;
    if bytes.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{}: sidecar says {}x{} ({expected} bytes) but file holds {} bytes",
            path.display(),
            meta.rows,
            meta.cols,
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let values = Array2::from_shape_vec((meta.rows, meta.cols), values)
        .expect("length checked against sidecar");
    FeatureSequence::new(meta.video_id, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_load_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.features.bin");
        FeatureSequence::new("z", Array2::zeros((240, 16))).unwrap().save(&p).unwrap();
        let seq = load_features(&p).unwrap();
        assert_eq!(seq.values.dim(), (240, 16));
        assert!(seq.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_file_is_a_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.features.bin");
        FeatureSequence::new("s", Array2::zeros((240, 16))).unwrap().save(&p).unwrap();
        std::fs::write(&p, vec![0u8; 239 * 16 * 4]).unwrap();
        assert!(matches!(load_features(&p), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.features.bin");
        let mut bytes = vec![0u8; 8];
        bytes[4..].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        let meta = r#"{"rows":1,"cols":2,"video_id":"n"}"#;
        std::fs::write(sidecar_path(&p), meta).unwrap();
        assert!(matches!(load_features(&p), Err(Error::NonFinite(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_then_read_is_bit_exact(
            rows in 1usize..20,
            cols in 1usize..8,
            seed in any::<u32>(),
        ) {
            let values = Array2::from_shape_fn((rows, cols), |(i, j)| {
                let x = (seed as u64).wrapping_mul(2654435761).wrapping_add((i * 31 + j) as u64);
                f32::from_bits((x as u32 & 0x3fff_ffff) | 0x0080_0000) - 1.5
            });
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.features.bin");
            let seq = FeatureSequence::new("r", values).unwrap();
            seq.save(&p).unwrap();
            let back = load_features(&p).unwrap();
            let same = back.values.iter().zip(seq.values.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
