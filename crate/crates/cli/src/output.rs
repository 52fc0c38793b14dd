//! Single collector for output files: everything is buffered and written
//! once, in path order, after the computation finishes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Default)]
pub struct Collector {
    files: BTreeMap<PathBuf, String>,
}

impl Collector {
    pub fn text(&mut self, rel: impl Into<PathBuf>, contents: String) {
        self.files.insert(rel.into(), contents);
    }

    pub fn json<T: Serialize>(&mut self, rel: impl Into<PathBuf>, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(daa_core::Error::from)?;
        s.push('\n');
        self.text(rel, s);
        Ok(())
    }

    pub fn write_to(self, dir: &Path) -> Result<()> {
        for (rel, contents) in self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// File-name-safe version of a pair or study id.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-~".contains(c) { c } else { '_' })
        .collect()
}
