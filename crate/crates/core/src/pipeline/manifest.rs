use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcheval::{sample_id, CaptureKind, SampleInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub finger_position: String,
    pub impression_index: u32,
    pub capture_kind: CaptureKind,
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<PathBuf>,
    #[serde(default)]
    pub device: String,
}

impl ManifestEntry {
    pub fn id(&self) -> String {
        sample_id(&self.subject_id, &self.finger_position, self.capture_kind, self.impression_index)
    }

    pub fn sample_info(&self) -> SampleInfo {
        SampleInfo {
            subject_id: self.subject_id.clone(),
            finger_position: self.finger_position.clone(),
            impression_index: self.impression_index,
            capture_kind: self.capture_kind,
            id: self.id(),
        }
    }
}

/// Validated list of captures. Relative paths are resolved against the
/// manifest's directory when loaded from a file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl DatasetManifest {
    /// Checks tuple uniqueness; with `check_paths`, also that every file exists.
    pub fn new(entries: Vec<ManifestEntry>, check_paths: bool) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.subject_id.is_empty() || e.finger_position.is_empty() {
                return Err(Error::Format("manifest entry with empty subject or finger".into()));
            }
            if !seen.insert(e.id()) {
                return Err(Error::Format(format!("duplicate manifest entry {}", e.id())));
            }
            if check_paths {
                for p in std::iter::once(&e.image_path).chain(e.mask_path.as_ref()) {
                    if !p.exists() {
                        return Err(Error::Format(format!("{}: file {} not found", e.id(), p.display())));
                    }
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn samples(&self) -> Vec<SampleInfo> {
        self.entries.iter().map(|e| e.sample_info()).collect()
    }

    fn rebase(mut entries: Vec<ManifestEntry>, base: &Path) -> Vec<ManifestEntry> {
        for e in &mut entries {
            e.image_path = resolve(base, &e.image_path);
            e.mask_path = e.mask_path.as_ref().map(|m| resolve(base, m));
        }
        entries
    }

    /// JSON Lines, one entry per line; blank lines and `#` comments are skipped.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(t)
                .map_err(|err| Error::Format(format!("{}:{}: {err}", path.display(), n + 1)))?;
            entries.push(e);
        }
        Self::new(Self::rebase(entries, base), true)
    }

    /// CSV with a header naming at least `subject_id, finger_position,
    /// impression_index, capture_kind, image_path`; `mask_path` and `device`
    /// are optional columns.
    pub fn import_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut entries = Vec::new();
        for row in r.deserialize() {
            let mut e: ManifestEntry = row?;
            if e.mask_path.as_ref().is_some_and(|m| m.as_os_str().is_empty()) {
                e.mask_path = None;
            }
            entries.push(e);
        }
        Self::new(Self::rebase(entries, base), true)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.entries {
            writeln!(f, "{}", serde_json::to_string(e)?)?;
        }
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(s: &str, kind: CaptureKind, i: u32, path: &str) -> ManifestEntry {
        ManifestEntry {
            subject_id: s.into(),
            finger_position: "L-index".into(),
            impression_index: i,
            capture_kind: kind,
            image_path: path.into(),
            mask_path: None,
            device: "dev".into(),
        }
    }

    #[test]
    fn jsonl_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"x").unwrap();
        std::fs::write(dir.path().join("b.png"), b"x").unwrap();
        let m = DatasetManifest::new(
            vec![entry("1", CaptureKind::Contact, 0, "a.png"), entry("1", CaptureKind::Contactless, 0, "b.png")],
            false,
        )
        .unwrap();
        let p = dir.path().join("m.jsonl");
        m.write_jsonl(&p).unwrap();
        let back = DatasetManifest::load_jsonl(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.entries[0].image_path, dir.path().join("a.png"));
    }

    #[test]
    fn rejects_duplicates_and_missing_files() {
        let dup = vec![entry("1", CaptureKind::Contact, 0, "a"), entry("1", CaptureKind::Contact, 0, "b")];
        assert!(DatasetManifest::new(dup, false).is_err());
        let missing = vec![entry("1", CaptureKind::Contact, 0, "/nonexistent/a.png")];
        assert!(DatasetManifest::new(missing, true).is_err());
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"x").unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(
            &p,
            "subject_id,finger_position,impression_index,capture_kind,image_path,mask_path,device\n7, R-thumb ,2,contactless,a.png,,phone\n",
        )
        .unwrap();
        let m = DatasetManifest::import_csv(&p).unwrap();
        assert_eq!(m.entries[0].finger_position, "R-thumb");
        assert_eq!(m.entries[0].mask_path, None);
        assert_eq!(m.entries[0].id(), "7_R-thumb_contactless_2");
    }
}
