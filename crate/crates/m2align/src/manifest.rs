//! Manifest files: one clip per line, `id<TAB>class<TAB>relative-path`,
//! with an optional fourth `train|val|test` column (default `test`).
//! Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use m2align_core::episode::{Manifest, ManifestEntry, Split};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{}:{line}: {message}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: m2align_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest, ManifestError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let err = |message: String| ManifestError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!(
                "expected 3 or 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if let Some(empty) = ["id", "class", "path"]
            .iter()
            .zip(&fields)
            .find(|(_, f)| f.trim().is_empty())
        {
            return Err(err(format!("empty {} field", empty.0)));
        }
        let split = match fields.get(3) {
            None => Split::Test,
            Some(s) => Split::parse(s.trim())
                .ok_or_else(|| err(format!("unknown split {:?}", s.trim())))?,
        };
        entries.push(ManifestEntry {
            id: fields[0].trim().to_string(),
            class: fields[1].trim().to_string(),
            path: fields[2].trim().to_string(),
            split,
        });
    }
    Manifest::new(entries).map_err(|source| ManifestError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, path)
}

pub fn format_manifest(manifest: &Manifest) -> String {
    let mut out = String::from("# id\tclass\tpath\tsplit\n");
    for e in manifest.entries() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.id, e.class, e.path, e.split);
    }
    out
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), ManifestError> {
    fs::write(path, format_manifest(manifest)).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
