use std::fs;
use std::path::Path;

use tempfile::TempDir;

use super::AgentError;

/// Copies `source` (including any `.git` directory) into a fresh temporary
/// directory that is removed when the handle drops.
pub fn copy_workspace(source: &Path) -> Result<TempDir, AgentError> {
    if !source.is_dir() {
        return Err(AgentError::WorkspaceMissing(source.to_path_buf()));
    }
    let dest = tempfile::Builder::new()
        .prefix("propsel-ws-")
        .tempdir()
        .map_err(|e| AgentError::Copy(e.to_string()))?;
    copy_tree(source, dest.path()).map_err(|e| AgentError::Copy(format!("{}: {e}", source.display())))?;
    Ok(dest)
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let kind = entry.file_type()?;
        let target = to.join(entry.file_name());
        if kind.is_dir() {
            fs::create_dir(&target)?;
            copy_tree(&entry.path(), &target)?;
        } else if kind.is_symlink() {
            std::os::unix::fs::symlink(fs::read_link(entry.path())?, &target)?;
        } else {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}
