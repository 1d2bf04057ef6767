use std::path::{Path, PathBuf};

use fishlen::Error;

/// Files to write, collected in full before anything touches the disk.
#[derive(Debug, Default)]
pub struct OutputPlan {
    files: Vec<(PathBuf, String)>,
}

impl OutputPlan {
    pub fn add(&mut self, path: impl Into<PathBuf>, contents: String) {
        self.files.push((path.into(), contents));
    }

    pub fn add_json<T: serde::Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Input(format!("serialization: {e}")))?;
        text.push('\n');
        self.add(path, text);
        Ok(())
    }

    /// Refuses to replace existing files unless `force`.
    pub fn check(&self, force: bool) -> Result<(), Error> {
        if force {
            return Ok(());
        }
        let existing: Vec<String> = self
            .files
            .iter()
            .filter(|(p, _)| p.exists())
            .map(|(p, _)| p.display().to_string())
            .collect();
        if existing.is_empty() {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "refusing to overwrite {} (pass --force): {}",
                if existing.len() == 1 { "an existing file" } else { "existing files" },
                existing.join(", ")
            )))
        }
    }

    pub fn write(self, force: bool) -> Result<Vec<PathBuf>, Error> {
        self.check(force)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (path, contents) in self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            }
            std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Input(format!("{}: {e}", path.display()))
}
