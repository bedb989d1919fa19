use std::path::{Path, PathBuf};

/// Removes a command's output files unless the command commits.
///
/// Only the listed files are touched, so unrelated content in the output
/// directory survives. The directory itself is removed only if this guard
/// created it and it ends up empty.
pub struct OutputGuard {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new(dir: &Path, names: &[&str]) -> std::io::Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: names.iter().map(|n| dir.join(n)).collect(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            if f.is_file() {
                let _ = std::fs::remove_file(f);
            }
        }
        if self.created_dir {
            // Fails harmlessly when something else lives there.
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}
