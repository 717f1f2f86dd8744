//! Artifact emission under the configured output directory.
//!
//! Every command writes `resolved.cfg` (all keys plus the config hash);
//! CSV files carry the hash as their last column, except `metrics.csv`,
//! whose columns are fixed and which sits beside `resolved.cfg`.

use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub struct Output {
    pub dir: PathBuf,
    pub hash: String,
}

fn write_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Write { path: path.to_path_buf(), source }
}

impl Output {
    /// Creates the output directory and records the resolved configuration.
    pub fn create(c: &Config) -> CliResult<Self> {
        let dir = c.require_path("run.output")?;
        std::fs::create_dir_all(&dir).map_err(|e| write_err(&dir, e))?;
        let out = Self { dir, hash: c.hash() };
        out.write("resolved.cfg", &format!("# config_hash = {}\n{}", out.hash, c.canonical()))?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes through a temporary file so readers never see partial files.
    pub fn write_io(&self, name: &str, text: &str) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn write(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        self.write_io(name, text).map_err(|e| write_err(&self.path(name), e))
    }

    /// A CSV with `header` plus a trailing `config_hash` column.
    pub fn csv(&self, name: &str, header: &str, rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut s = format!("{header},config_hash\n");
        for r in rows {
            s.push_str(&r.join(","));
            s.push(',');
            s.push_str(&self.hash);
            s.push('\n');
        }
        self.write(name, &s)
    }
}

/// Shortest round-trip decimal representation (`inf`, `NaN` spelled out).
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// CSV field for a file name; quotes names containing separators.
pub fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_appends_the_hash_and_quotes_fields() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("run.output = {}\n", dir.path().display());
        let c = Config::parse("eval", &text, &[], Path::new("/")).unwrap();
        let out = Output::create(&c).unwrap();
        let p = out.csv("a.csv", "file,value", &[vec![field("x,y"), num(f64::INFINITY)]]).unwrap();
        let s = std::fs::read_to_string(p).unwrap();
        assert_eq!(s, format!("file,value,config_hash\n\"x,y\",inf,{}\n", c.hash()));
        let cfg = std::fs::read_to_string(out.path("resolved.cfg")).unwrap();
        assert!(cfg.starts_with(&format!("# config_hash = {}\n", c.hash())));
    }
}
