//! Dataset manifest: a UTF-8 CSV with header `id,image_path,mask_path,label,source`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class label of a lesion sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Benign = 0,
    Malignant = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Malignant),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }
}

/// One manifest row. Paths are kept as written; [`Manifest::resolve`] turns
/// them into absolute paths relative to the manifest location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub label: Label,
    pub source: String,
}

/// Ordered list of manifest rows with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    rows: Vec<ManifestRow>,
    base_dir: PathBuf,
}

pub const MANIFEST_HEADER: [&str; 5] = ["id", "image_path", "mask_path", "label", "source"];

impl Manifest {
    /// Load a manifest CSV. Row order is preserved; malformed rows and
    /// duplicate ids are reported with their line number.
    pub fn load(path: &Path) -> Result<Manifest> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                line: 0,
                message: e.to_string(),
            })?;

        let err_at = |line: u64, message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };

        {
            let headers = reader
                .headers()
                .map_err(|e| err_at(1, e.to_string()))?
                .clone();
            let got: Vec<&str> = headers.iter().collect();
            if got != MANIFEST_HEADER {
                return Err(err_at(
                    1,
                    format!("expected header {:?}, found {:?}", MANIFEST_HEADER, got),
                ));
            }
        }

        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                err_at(line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 5 {
                return Err(err_at(line, format!("expected 5 fields, found {}", record.len())));
            }
            let id = record[0].to_string();
            if id.is_empty() {
                return Err(err_at(line, "empty id".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(err_at(line, format!("duplicate id {id:?}")));
            }
            let label_raw = &record[3];
            let label = label_raw
                .parse::<u8>()
                .ok()
                .and_then(Label::from_u8)
                .ok_or_else(|| err_at(line, format!("invalid label {label_raw:?} at line {line} (expected 0 or 1)")))?;
            rows.push(ManifestRow {
                id,
                image_path: PathBuf::from(&record[1]),
                mask_path: PathBuf::from(&record[2]),
                label,
                source: record[4].to_string(),
            });
        }

        let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok(Manifest { rows, base_dir })
    }

    /// Build a manifest in memory (used by the generator and tests).
    pub fn from_rows(rows: Vec<ManifestRow>, base_dir: PathBuf) -> Manifest {
        Manifest { rows, base_dir }
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Resolve a row path against the manifest directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Write the manifest CSV (paths as stored).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_record(MANIFEST_HEADER).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        for row in &self.rows {
            writer
                .write_record([
                    row.id.as_str(),
                    &row.image_path.to_string_lossy(),
                    &row.mask_path.to_string_lossy(),
                    &row.label.as_u8().to_string(),
                    row.source.as_str(),
                ])
                .map_err(|e| Error::Manifest {
                    path: path.to_path_buf(),
                    line: 0,
                    message: e.to_string(),
                })?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_manifest(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_well_formed_rows_in_order() {
        let (_d, path) = write_manifest(
            "id,image_path,mask_path,label,source\n\
             a,images/a.pgm,masks/a.pgm,0,busi\n\
             b,images/b.pgm,masks/b.pgm,1,udiat\n\
             c,images/c.pgm,masks/c.pgm,0,busi\n",
        );
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.rows()[0].id, "a");
        assert_eq!(m.rows()[1].label, Label::Malignant);
        assert_eq!(m.rows()[2].source, "busi");
    }

    #[test]
    fn header_only_file_is_empty_manifest() {
        let (_d, path) = write_manifest("id,image_path,mask_path,label,source\n");
        let m = Manifest::load(&path).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn invalid_label_names_line_number() {
        let (_d, path) = write_manifest(
            "id,image_path,mask_path,label,source\n\
             a,i.pgm,m.pgm,0,x\n\
             b,i.pgm,m.pgm,2,x\n",
        );
        let err = Manifest::load(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("invalid label"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let (_d, path) = write_manifest(
            "id,image_path,mask_path,label,source\n\
             a,i.pgm,m.pgm,0,x\n\
             a,j.pgm,n.pgm,1,x\n",
        );
        let err = Manifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate id"));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![ManifestRow {
            id: "s1".into(),
            image_path: "images/s1.pgm".into(),
            mask_path: "masks/s1.pgm".into(),
            label: Label::Malignant,
            source: "synth0".into(),
        }];
        let m = Manifest::from_rows(rows.clone(), dir.path().to_path_buf());
        let path = dir.path().join("manifest.csv");
        m.save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back.rows(), &rows[..]);
    }
}
