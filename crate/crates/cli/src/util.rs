//! Shared I/O helpers for the subcommands.

use std::path::{Path, PathBuf};

use tsa_core::io;
use tsa_core::layout::{resolve_overlaps, validate_layout, Layout};
use tsa_core::tensor::Tensor2;

use crate::CliError;

/// Write through a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Data(format!("renaming to {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_tensor2_atomic(path: &Path, t: &Tensor2) -> Result<(), CliError> {
    let tmp = tmp_path(path);
    io::write_tensor2(&tmp, t).map_err(CliError::data)?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Data(format!("renaming to {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_tensor1_atomic(path: &Path, data: &[f32]) -> Result<(), CliError> {
    let tmp = tmp_path(path);
    io::write_tensor1(&tmp, data).map_err(CliError::data)?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Data(format!("renaming to {}: {e}", path.display())))?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn read_tensor2(path: &Path) -> Result<Tensor2, CliError> {
    io::read_tensor2(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_layout(path: &Path) -> Result<Layout, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Layout::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Resolve tolerated overlaps in every subject's event intervals, then
/// validate. Returns the normalized layout or a data error listing every
/// diagnostic.
pub fn normalize_layout(mut layout: Layout) -> Result<Layout, CliError> {
    for subject in &mut layout.text.subjects {
        let intervals: Vec<_> = subject.events.iter().map(|e| e.frames).collect();
        let plan = resolve_overlaps(&intervals, layout.video.frames)
            .map_err(|e| CliError::Data(format!("subject '{}': {e}", subject.name)))?;
        for (event, interval) in subject.events.iter_mut().zip(plan.intervals) {
            event.frames = interval;
        }
    }
    let diags = validate_layout(&layout);
    if diags.is_empty() {
        Ok(layout)
    } else {
        let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        Err(CliError::Data(format!(
            "invalid layout: {}",
            list.join("; ")
        )))
    }
}

/// Check Q/K shapes against the layout.
pub fn check_shapes(q: &Tensor2, k: &Tensor2, layout: &Layout) -> Result<(), CliError> {
    let n = layout.video.tokens();
    if q.rows() != n {
        return Err(CliError::Data(format!(
            "Q has {} rows but the grid {}x{}x{} implies {n} tokens",
            q.rows(),
            layout.video.frames,
            layout.video.height,
            layout.video.width
        )));
    }
    if k.rows() != layout.text.num_tokens {
        return Err(CliError::Data(format!(
            "K has {} rows but the layout declares {} text tokens",
            k.rows(),
            layout.text.num_tokens
        )));
    }
    if q.cols() != k.cols() {
        return Err(CliError::Data(format!(
            "Q and K disagree on the head dimension ({} vs {})",
            q.cols(),
            k.cols()
        )));
    }
    Ok(())
}

/// For multi-subject emissions: `base.tsa` stays as-is for one subject and
/// becomes `base_s{i}.tsa` otherwise.
pub fn subject_path(base: &Path, subject: usize, total: usize) -> PathBuf {
    if total == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("tsa");
    base.with_file_name(format!("{stem}_s{subject}.{ext}"))
}
