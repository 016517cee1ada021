//! Unified-diff parsing and git-backed patch extraction.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchArtifact {
    pub diff_text: String,
    /// Sorted, de-duplicated paths named in the file headers.
    pub files_touched: Vec<String>,
}

impl PatchArtifact {
    pub fn from_diff(diff_text: String) -> Result<Self, DiffError> {
        let files = parse_unified_diff(&diff_text)?;
        Ok(PatchArtifact {
            diff_text,
            files_touched: files.into_iter().collect(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.diff_text.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiffError {
    #[error("line {line}: malformed hunk header `{text}`")]
    BadHunkHeader { line: usize, text: String },
    #[error("line {line}: hunk body does not match its header counts")]
    HunkCountMismatch { line: usize },
    #[error("line {line}: hunk outside of a file section")]
    OrphanHunk { line: usize },
}

static HUNK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").unwrap());

/// Validates hunk structure and returns the set of touched paths.
///
/// Paths come from `---`/`+++` headers (ignoring `/dev/null`), falling back
/// to the `diff --git` line for sections without them (binary files, pure
/// mode changes).
pub fn parse_unified_diff(text: &str) -> Result<BTreeSet<String>, DiffError> {
    let mut files = BTreeSet::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    let mut in_file = false;
    let mut pending_git_paths: Option<(String, String)> = None;
    let mut section_has_headers = false;

    let flush_git = |files: &mut BTreeSet<String>, pending: &mut Option<(String, String)>, had: bool| {
        if let Some((a, b)) = pending.take() {
            if !had {
                files.insert(b);
                files.insert(a);
            }
        }
    };

    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            flush_git(&mut files, &mut pending_git_paths, section_has_headers);
            pending_git_paths = split_git_header(rest);
            section_has_headers = false;
            in_file = true;
            i += 1;
        } else if line.starts_with("--- ") && lines.get(i + 1).is_some_and(|l| l.starts_with("+++ ")) {
            for header in [&line[4..], &lines[i + 1][4..]] {
                if let Some(path) = header_path(header) {
                    files.insert(path);
                }
            }
            section_has_headers = true;
            in_file = true;
            i += 2;
        } else if line.starts_with("@@") {
            if !in_file {
                return Err(DiffError::OrphanHunk { line: i + 1 });
            }
            let caps = HUNK.captures(line).ok_or_else(|| DiffError::BadHunkHeader {
                line: i + 1,
                text: line.to_string(),
            })?;
            let count = |idx: usize| caps.get(idx).map_or(1, |m| m.as_str().parse::<usize>().unwrap_or(usize::MAX));
            let (mut old_left, mut new_left) = (count(2), count(4));
            i += 1;
            while old_left > 0 || new_left > 0 {
                let Some(body) = lines.get(i) else {
                    return Err(DiffError::HunkCountMismatch { line: i });
                };
                match body.chars().next() {
                    Some(' ') | None => {
                        old_left = old_left.checked_sub(1).ok_or(DiffError::HunkCountMismatch { line: i + 1 })?;
                        new_left = new_left.checked_sub(1).ok_or(DiffError::HunkCountMismatch { line: i + 1 })?;
                    }
                    Some('-') => {
                        old_left = old_left.checked_sub(1).ok_or(DiffError::HunkCountMismatch { line: i + 1 })?;
                    }
                    Some('+') => {
                        new_left = new_left.checked_sub(1).ok_or(DiffError::HunkCountMismatch { line: i + 1 })?;
                    }
                    Some('\\') => {}
                    _ => return Err(DiffError::HunkCountMismatch { line: i + 1 }),
                }
                i += 1;
            }
            while lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    flush_git(&mut files, &mut pending_git_paths, section_has_headers);
    Ok(files)
}

fn header_path(header: &str) -> Option<String> {
    let raw = header.split('\t').next().unwrap_or(header).trim_end();
    if raw == "/dev/null" {
        return None;
    }
    let raw = raw.trim_matches('"');
    let path = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(path.to_string())
}

fn split_git_header(rest: &str) -> Option<(String, String)> {
    // `a/<path> b/<path>`; identical paths unless renamed.
    let idx = rest.find(" b/")?;
    let a = rest[..idx].strip_prefix("a/")?.to_string();
    let b = rest[idx + 3..].to_string();
    Some((a, b))
}

fn git(workspace: &Path, args: &[&str]) -> Result<String, AgentError> {
    let out = Command::new("git")
        .arg("-C")
        .arg(workspace)
        .args(["-c", "core.quotepath=false", "-c", "core.autocrlf=false"])
        .args(args)
        .output()
        .map_err(|e| AgentError::Git(format!("failed to run git: {e}")))?;
    if !out.status.success() {
        return Err(AgentError::Git(format!(
            "git {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Records the current workspace contents as a git tree object and returns
/// its id. Initializes a repository first when the directory has none.
/// Nothing is committed; only the index and object store change.
pub fn snapshot_workspace(workspace: &Path) -> Result<String, AgentError> {
    if !workspace.join(".git").exists() {
        git(workspace, &["init", "-q"])?;
    }
    git(workspace, &["add", "-A"])?;
    Ok(git(workspace, &["write-tree"])?.trim().to_string())
}

/// Unified diff between the snapshot tree and the current workspace.
pub fn diff_since_snapshot(workspace: &Path, tree: &str) -> Result<String, AgentError> {
    git(workspace, &["add", "-A"])?;
    git(
        workspace,
        &["diff", "--cached", "--no-color", "--no-ext-diff", "--no-renames", "--binary", tree],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_FILES: &str = "diff --git a/src/a.rs b/src/a.rs
index 1111111..2222222 100644
--- a/src/a.rs
+++ b/src/a.rs
@@ -1,2 +1,3 @@
 fn a() {}
+fn b() {}
 fn c() {}
diff --git a/new.txt b/new.txt
new file mode 100644
index 0000000..3333333
--- /dev/null
+++ b/new.txt
@@ -0,0 +1 @@
+hello
";

    #[test]
    fn parses_paths() {
        let files = parse_unified_diff(TWO_FILES).unwrap();
        assert_eq!(files.into_iter().collect::<Vec<_>>(), ["new.txt", "src/a.rs"]);
    }

    #[test]
    fn deletion_and_no_newline_marker() {
        let diff = "--- a/gone.txt\n+++ /dev/null\n@@ -1 +0,0 @@\n-bye\n\\ No newline at end of file\n";
        assert_eq!(parse_unified_diff(diff).unwrap().into_iter().collect::<Vec<_>>(), ["gone.txt"]);
    }

    #[test]
    fn binary_section_uses_git_header() {
        let diff = "diff --git a/img.png b/img.png\nnew file mode 100644\nindex 0000000..1234567\nGIT binary patch\nliteral 3\nKcmZ?wbNB!K0RRF3\n\nliteral 0\nHcmV?d00001\n\n";
        assert_eq!(parse_unified_diff(diff).unwrap().into_iter().collect::<Vec<_>>(), ["img.png"]);
    }

    #[test]
    fn rejects_bad_counts() {
        let diff = "--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n-a\n+b\n";
        assert!(matches!(parse_unified_diff(diff), Err(DiffError::HunkCountMismatch { .. })));
        assert!(matches!(parse_unified_diff("@@ -1 +1 @@\n-a\n+b\n"), Err(DiffError::OrphanHunk { .. })));
        assert!(matches!(
            parse_unified_diff("--- a/x\n+++ b/x\n@@ nonsense @@\n"),
            Err(DiffError::BadHunkHeader { .. })
        ));
    }

    #[test]
    fn empty_diff_has_no_files() {
        assert!(parse_unified_diff("").unwrap().is_empty());
    }

    #[test]
    fn git_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "one\n").unwrap();
        let tree = snapshot_workspace(dir.path()).unwrap();
        assert!(diff_since_snapshot(dir.path(), &tree).unwrap().is_empty());
        std::fs::write(dir.path().join("a.txt"), "one\ntwo\n").unwrap();
        std::fs::write(dir.path().join("b.txt"), "new\n").unwrap();
        let diff = diff_since_snapshot(dir.path(), &tree).unwrap();
        let patch = PatchArtifact::from_diff(diff).unwrap();
        assert_eq!(patch.files_touched, ["a.txt", "b.txt"]);
    }
}
