use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xlpool_core::{load_tensor, pair_layers, LayerPair};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub local_path: PathBuf,
    pub guide_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Reads a manifest. Relative paths resolve against the manifest's directory.
pub fn load(path: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashSet::new();
    for e in &mut entries {
        if !seen.insert(e.image_id.clone()) {
            return Err(CliError::Schema(format!("duplicate image_id '{}' in manifest", e.image_id)));
        }
        e.local_path = base.join(&e.local_path);
        e.guide_path = base.join(&e.guide_path);
    }
    Ok(entries)
}

pub fn load_pair(local: &Path, guide: &Path) -> Result<LayerPair, CliError> {
    let l = load_tensor(local).map_err(|e| CliError::from(e).context(local.display()))?;
    let g = load_tensor(guide).map_err(|e| CliError::from(e).context(guide.display()))?;
    Ok(pair_layers(l, g)?)
}

/// Loads every pair in parallel, keeping manifest order.
pub fn load_pairs(entries: &[ManifestEntry]) -> Result<Vec<(String, LayerPair)>, CliError> {
    entries
        .par_iter()
        .map(|e| {
            let pair = load_pair(&e.local_path, &e.guide_path)
                .map_err(|err| err.context(format!("image '{}'", e.image_id)))?;
            Ok((e.image_id.clone(), pair))
        })
        .collect()
}
