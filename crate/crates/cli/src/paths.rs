use std::path::{Component, Path, PathBuf};

use crate::CliError;

/// The only directory the CLI writes into.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: &Path) -> Self {
        OutDir {
            root: root.to_path_buf(),
        }
    }

    /// Maps a requested output path into the directory. Relative paths are
    /// joined to it; absolute paths must already lie inside it; `..` is
    /// refused. Parent directories are created.
    pub fn resolve(&self, requested: &Path) -> Result<PathBuf, CliError> {
        if requested.components().any(|c| c == Component::ParentDir) {
            return Err(CliError::Usage(format!(
                "output path {} may not contain ..",
                requested.display()
            )));
        }
        let path = if requested.is_absolute() {
            let root = std::path::absolute(&self.root).map_err(|e| CliError::Input(e.to_string()))?;
            if !requested.starts_with(&root) {
                return Err(CliError::Usage(format!(
                    "output path {} is outside the output directory {}",
                    requested.display(),
                    root.display()
                )));
            }
            requested.to_path_buf()
        } else {
            self.root.join(requested)
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::Input(e.to_string()))?;
            }
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confinement() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::new(dir.path());
        assert_eq!(out.resolve(Path::new("a/b.json")).unwrap(), dir.path().join("a/b.json"));
        assert!(dir.path().join("a").is_dir());
        assert!(out.resolve(Path::new("../x")).is_err());
        assert!(out.resolve(Path::new("/tmp/elsewhere.json")).is_err());
        let inside = dir.path().join("c.json");
        assert_eq!(out.resolve(&inside).unwrap(), inside);
    }
}
