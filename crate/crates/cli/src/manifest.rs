use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Record of one invocation, written as `key=value` lines next to its outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self {
            entries: Vec::new(),
        };
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn path(&mut self, key: &str, value: &Path) -> &mut Self {
        self.set(key, value.display())
    }

    pub fn opt_path(&mut self, key: &str, value: Option<&Path>) -> &mut Self {
        match value {
            Some(p) => self.path(key, p),
            None => self.set(key, "-"),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.to_text().as_bytes())
    }
}

/// `<output>.manifest` beside a single-file output.
pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    output.with_file_name(name)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut m = RunManifest::new("synth");
        m.set("seed", 7).path("out", Path::new("data"));
        let text = m.to_text();
        assert!(text.starts_with("command=synth\nversion="));
        assert!(text.ends_with("seed=7\nout=data\n"));
    }

    #[test]
    fn sibling_name() {
        assert_eq!(
            beside(Path::new("out/w.bin")),
            PathBuf::from("out/w.bin.manifest")
        );
    }
}
