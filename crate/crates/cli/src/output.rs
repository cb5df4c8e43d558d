//! All-or-nothing output writing and the descriptor sidecar.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xlpool_core::npy::write_npy;
use xlpool_core::postprocess::ChannelPooling;
use xlpool_core::Descriptor;

use crate::CliError;

/// Sidecar written next to every descriptor file as `<stem>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorMeta {
    #[serde(rename = "K")]
    pub channels: usize,
    /// Channel width, absent when channels differ in width.
    pub d: Option<usize>,
    pub flags: Flags,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    #[serde(default)]
    pub pca: bool,
    #[serde(default)]
    pub l2: bool,
    #[serde(default)]
    pub power: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooling: Option<ChannelPooling>,
    #[serde(default)]
    pub quantize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spm_level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spm_method: Option<String>,
}

pub fn meta_path(descriptor: &Path) -> PathBuf {
    descriptor.with_extension("meta.json")
}

pub fn trits_path(descriptor: &Path) -> PathBuf {
    descriptor.with_extension("trits")
}

pub fn npy_bytes(shape: &[usize], data: &[f32]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_npy(&mut buf, shape, data)?;
    Ok(buf)
}

/// Files for a 1-D descriptor plus its sidecar.
pub fn descriptor_files(out: &Path, desc: &Descriptor, flags: Flags) -> Result<Vec<(PathBuf, Vec<u8>)>, CliError> {
    let meta = DescriptorMeta {
        channels: desc.num_channels(),
        d: desc.channel_dim(),
        flags,
    };
    let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    Ok(vec![
        (out.to_path_buf(), npy_bytes(&[desc.len()], desc.values())?),
        (meta_path(out), json),
    ])
}

/// Writes every file or none of them: each goes to a temporary sibling
/// first and is renamed into place only after all writes succeed.
pub fn commit(files: Vec<(PathBuf, Vec<u8>)>) -> Result<(), CliError> {
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(p, _)| {
            let mut tmp = p.clone().into_os_string();
            tmp.push(".partial");
            (PathBuf::from(tmp), p.clone())
        })
        .collect();
    let cleanup = |upto: usize| {
        for (tmp, _) in &staged[..upto] {
            let _ = fs::remove_file(tmp);
        }
    };
    for (i, ((tmp, _), (_, bytes))) in staged.iter().zip(&files).enumerate() {
        if let Err(e) = fs::write(tmp, bytes) {
            cleanup(i + 1);
            return Err(e.into());
        }
    }
    for (i, (tmp, dst)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, dst) {
            for (t, _) in &staged[i..] {
                let _ = fs::remove_file(t);
            }
            return Err(e.into());
        }
    }
    Ok(())
}

pub fn read_meta(descriptor: &Path) -> Result<DescriptorMeta, CliError> {
    let path = meta_path(descriptor);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::Io(format!("missing sidecar {}", path.display())),
        _ => CliError::Io(format!("{}: {e}", path.display())),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}
