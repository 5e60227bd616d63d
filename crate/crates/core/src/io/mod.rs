//! Config text, checkpoints, frames and metrics files.

mod checkpoint;
mod config_text;
mod metrics;
mod render;

pub use checkpoint::{
    decode_state, encode_state, load_checkpoint, peek_config, read_checkpoint_bytes,
    save_checkpoint, world_hash, FORMAT_VERSION, MAGIC,
};
pub use config_text::{config_to_text, parse_config};
pub use metrics::{export_metrics, metrics_header, MetricsWriter};
pub use render::{encode_png, render_frame, write_frame, FrameMode, FrameSpec};

use std::path::Path;

use crate::error::{Result, SimError};

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`.
pub fn atomic_write(path: &Path, bytes: &[u8], step: Option<u64>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| SimError::io(d, step, e))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| SimError::io(&tmp, step, e))?;
    std::fs::rename(&tmp, path).map_err(|e| SimError::io(path, step, e))
}
