use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Output directory of one run; remembers what was written.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    /// CSV with `header` and pre-formatted rows.
    pub fn csv<H: AsRef<str>>(&mut self, name: &str, header: &[H], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.open(name)?);
        w.write_record(header.iter().map(|h| h.as_ref()))?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        use std::io::Write;
        let mut f = self.open(name)?;
        f.write_all(body.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Writer for modules that emit their own CSV.
    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.open(name)
    }
}

/// Shortest round-trip form; scientific outside [1e-3, 1e6).
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-3..1e6).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn flag(b: bool) -> String {
    (if b { "1" } else { "0" }).to_string()
}

/// Hz from rad/s.
pub fn to_hz(omega: f64) -> f64 {
    omega / (2.0 * std::f64::consts::PI)
}
