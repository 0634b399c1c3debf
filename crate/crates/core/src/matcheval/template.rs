//! Enrolled templates: texture embedding plus minutiae, with a binary
//! (`C2TP`) and a JSON encoding, and a directory store with an index file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minutiae::{Minutia, MinutiaKind, MinutiaeSet};
use crate::representation::Embedding;

const MAGIC: &[u8; 4] = b"C2TP";
const VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureKind {
    Contact,
    Contactless,
}

impl CaptureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptureKind::Contact => "contact",
            CaptureKind::Contactless => "contactless",
        }
    }
}

impl fmt::Display for CaptureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaptureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "contact" => Ok(CaptureKind::Contact),
            "contactless" => Ok(CaptureKind::Contactless),
            other => Err(Error::Format(format!("unknown capture kind {other:?}"))),
        }
    }
}

/// Canonical sample id shared by manifests, templates and score files.
pub fn sample_id(subject_id: &str, finger_position: &str, kind: CaptureKind, impression_index: u32) -> String {
    format!("{subject_id}_{finger_position}_{kind}_{impression_index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub subject_id: String,
    pub finger_position: String,
    pub impression_index: u32,
    capture_kind: CaptureKind,
    pub embedding: Embedding<f64>,
    pub minutiae: MinutiaeSet,
    /// Device or source tag.
    pub provenance: String,
    /// Extraction warnings.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Template {
    pub fn new(
        subject_id: impl Into<String>,
        finger_position: impl Into<String>,
        impression_index: u32,
        capture_kind: CaptureKind,
        embedding: Embedding<f64>,
        minutiae: MinutiaeSet,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if !embedding.normalized {
            return Err(Error::param("template embedding must be normalized"));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            finger_position: finger_position.into(),
            impression_index,
            capture_kind,
            embedding,
            minutiae,
            provenance: provenance.into(),
            warnings: Vec::new(),
        })
    }

    pub fn capture_kind(&self) -> CaptureKind {
        self.capture_kind
    }

    pub fn id(&self) -> String {
        sample_id(&self.subject_id, &self.finger_position, self.capture_kind, self.impression_index)
    }

    pub fn finger_key(&self) -> (&str, &str) {
        (&self.subject_id, &self.finger_position)
    }

    /// Little-endian binary form; all reals as `f64` so the round trip is exact.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.str(&self.subject_id);
        w.str(&self.finger_position);
        w.u32(self.impression_index);
        w.u8(match self.capture_kind {
            CaptureKind::Contact => 0,
            CaptureKind::Contactless => 1,
        });
        w.str(&self.provenance);
        w.u8(self.embedding.informative as u8);
        w.u32(self.embedding.dim() as u32);
        for v in &self.embedding.values {
            w.f64(*v);
        }
        w.u32(self.minutiae.source_dims.0 as u32);
        w.u32(self.minutiae.source_dims.1 as u32);
        w.u32(self.minutiae.len() as u32);
        for m in self.minutiae.iter() {
            w.f64(m.x);
            w.f64(m.y);
            w.f64(m.theta);
            w.u8(match m.kind {
                MinutiaKind::Ending => 0,
                MinutiaKind::Bifurcation => 1,
            });
            w.f64(m.quality);
        }
        w.u32(self.warnings.len() as u32);
        for s in &self.warnings {
            w.str(s);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing C2TP magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported template version {version}")));
        }
        let subject_id = r.str()?;
        let finger_position = r.str()?;
        let impression_index = r.u32()?;
        let capture_kind = match r.u8()? {
            0 => CaptureKind::Contact,
            1 => CaptureKind::Contactless,
            k => return Err(Error::Format(format!("bad capture kind byte {k}"))),
        };
        let provenance = r.str()?;
        let informative = r.u8()? != 0;
        let dim = r.u32()? as usize;
        let values = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut embedding = Embedding::new(values)?;
        embedding.normalized = (embedding.norm() - 1.0).abs() < 1e-6;
        embedding.informative = informative;
        let w = r.u32()? as usize;
        let h = r.u32()? as usize;
        let n = r.u32()? as usize;
        let mut minutiae = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let x = r.f64()?;
            let y = r.f64()?;
            let theta = r.f64()?;
            let kind = match r.u8()? {
                0 => MinutiaKind::Ending,
                1 => MinutiaKind::Bifurcation,
                k => return Err(Error::Format(format!("bad minutia kind byte {k}"))),
            };
            let quality = r.f64()?;
            minutiae.push(Minutia { x, y, theta, kind, quality });
        }
        let nw = r.u32()? as usize;
        let warnings = (0..nw).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after template".into()));
        }
        let mut t = Self::new(
            subject_id,
            finger_position,
            impression_index,
            capture_kind,
            embedding,
            MinutiaeSet {
                minutiae,
                source_dims: (w, h),
            },
            provenance,
        )?;
        t.warnings = warnings;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Template = serde_json::from_str(s)?;
        if !t.embedding.normalized {
            return Err(Error::Format("template embedding is not normalized".into()));
        }
        Ok(t)
    }

    /// Binary form unless the path ends in `.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            std::fs::write(path, self.to_json())?;
        } else {
            std::fs::write(path, self.to_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format("template is neither C2TP nor JSON".into()))?;
            Self::from_json(text)
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated template".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::Format("non-finite value in template".into()));
        }
        Ok(v)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("template string is not UTF-8".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub subject_id: String,
    pub finger_position: String,
    pub impression_index: u32,
    pub capture_kind: CaptureKind,
    pub file: String,
}

/// Directory of `.c2tp` files plus `index.json` mapping sample ids to files.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    dir: PathBuf,
    index: BTreeMap<String, IndexEntry>,
}

fn file_name_for(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.c2tp")
}

impl TemplateStore {
    /// Opens (or creates) a store; an existing index is read.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let idx = dir.join(INDEX_FILE);
        let index = if idx.exists() {
            serde_json::from_str(&std::fs::read_to_string(&idx)?)?
        } else {
            BTreeMap::new()
        };
        Ok(Self { dir, index })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Writes the template file; call [`TemplateStore::flush`] to persist the index.
    pub fn insert(&mut self, t: &Template) -> Result<()> {
        let id = t.id();
        let file = file_name_for(&id);
        t.save(self.dir.join(&file))?;
        self.index.insert(
            id,
            IndexEntry {
                subject_id: t.subject_id.clone(),
                finger_position: t.finger_position.clone(),
                impression_index: t.impression_index,
                capture_kind: t.capture_kind,
                file,
            },
        );
        Ok(())
    }

    pub fn flush(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.index)?;
        std::fs::write(self.dir.join(INDEX_FILE), text)?;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Option<Template>> {
        match self.index.get(id) {
            None => Ok(None),
            Some(e) => Template::load(self.dir.join(&e.file)).map(Some),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_template(rng: &mut ChaCha8Rng, subject: &str, kind: CaptureKind, imp: u32) -> Template {
        let e = Embedding::unit((0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let m: Vec<Minutia> = (0..rng.gen_range(0..30))
            .map(|_| {
                Minutia::new(
                    rng.gen_range(0.0..480.0),
                    rng.gen_range(0.0..480.0),
                    rng.gen_range(0.0..6.28),
                    if rng.gen() { MinutiaKind::Ending } else { MinutiaKind::Bifurcation },
                    rng.gen(),
                )
            })
            .collect();
        let mut t = Template::new(subject, "R-index", imp, kind, e, MinutiaeSet { minutiae: m, source_dims: (480, 480) }, "synthetic").unwrap();
        if rng.gen_bool(0.3) {
            t.warnings.push("low ridge coverage".into());
        }
        t
    }

    #[test]
    fn binary_and_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..10 {
            let t = random_template(&mut rng, &format!("s{i}"), CaptureKind::Contactless, i);
            let b = Template::from_bytes(&t.to_bytes()).unwrap();
            assert_eq!(b, t);
            assert_eq!(b.to_bytes(), t.to_bytes());
            let j = Template::from_json(&t.to_json()).unwrap();
            assert_eq!(j.id(), t.id());
            assert_eq!(j.minutiae.len(), t.minutiae.len());
        }
        let t = random_template(&mut rng, "x", CaptureKind::Contact, 0);
        let mut bytes = t.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(Template::from_bytes(&bytes).is_err());
        let raw = Embedding::new(vec![1.0, 2.0]).unwrap();
        assert!(Template::new("a", "b", 0, CaptureKind::Contact, raw, MinutiaeSet::empty((1, 1)), "").is_err());
    }

    #[test]
    fn store_persists_index() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_template(&mut rng, "s/1", CaptureKind::Contact, 0);
        let b = random_template(&mut rng, "s2", CaptureKind::Contactless, 3);
        {
            let mut s = TemplateStore::open(dir.path()).unwrap();
            s.insert(&a).unwrap();
            s.insert(&b).unwrap();
            s.flush().unwrap();
        }
        let s = TemplateStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(&a.id()).unwrap().unwrap(), a);
        assert_eq!(s.get(&b.id()).unwrap().unwrap(), b);
        assert!(s.get("missing").unwrap().is_none());
    }
}
