//! Output directory where every file lands by write-then-rename.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";

pub struct OutDir {
    path: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(path: &Path) -> io::Result<Self> {
        fs::create_dir_all(path)?;
        Ok(OutDir { path: path.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn atomic(&self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let tmp = self.path.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path.join(name))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        self.atomic(name, bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Last file of a run; its presence means every listed file is complete.
    pub fn write_manifest<T: Serialize>(self, manifest: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
        text.push('\n');
        self.atomic(MANIFEST, text.as_bytes())
    }
}
