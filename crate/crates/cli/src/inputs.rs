use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ctxspot_core::domain::{load_annotations, load_features, VideoPrediction, FEATURES_SUFFIX, LABELS_SUFFIX};
use ctxspot_core::{FeatureSequence, SpottingConfig, VideoAnnotations};

pub const PREDICTION_SUFFIX: &str = ".pred.json";

/// `path` itself, or the files in directory `path` whose names end in
/// `suffix`, sorted.
fn files(path: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    out.sort();
    Ok(out)
}

pub fn annotations(path: &Path) -> Result<Vec<VideoAnnotations>> {
    files(path, LABELS_SUFFIX)?.iter().map(|p| Ok(load_annotations(p)?)).collect()
}

pub fn features(path: &Path) -> Result<Vec<FeatureSequence>> {
    files(path, FEATURES_SUFFIX)?.iter().map(|p| Ok(load_features(p)?)).collect()
}

pub fn predictions(path: &Path) -> Result<Vec<VideoPrediction>> {
    files(path, PREDICTION_SUFFIX)?.iter().map(|p| Ok(VideoPrediction::load(p)?)).collect()
}

/// The `--config` file or the defaults, seeded from `--seed`.
pub fn config(path: Option<&Path>, seed: u64) -> Result<SpottingConfig> {
    let mut cfg = match path {
        Some(p) => SpottingConfig::load(p)?,
        None => SpottingConfig::default(),
    };
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}
