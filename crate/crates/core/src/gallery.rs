//! Persistent store of enrolled individuals and their scale samples.
//!
//! On disk a gallery is a directory:
//!
//! ```text
//! manifest.json                  individuals → scales, with metadata
//! masks/<individual>_<scale>.png 8-bit mask, foreground 255
//! clouds/<individual>_<scale>.csv centroid cache, header `x,y`
//! ```
//!
//! The centroid cache is derived data: it is recomputed from the mask and
//! checked on every load. Writers use the manifest version as a
//! compare-and-swap token, so two concurrent enrollments never silently
//! overwrite each other.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;
use crate::matching::extract_centroids;
use crate::registration::SpotCloud;

pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".manifest.lock";
const CLOUD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LightCondition {
    #[default]
    Normal,
    Ideal,
    HardExposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    GroundTruth,
    Automatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordMetadata {
    pub light_condition: LightCondition,
    pub provenance: Provenance,
}

/// `(individual_id, scale_id)`; displayed as `individual:scale`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScaleKey {
    pub individual_id: String,
    pub scale_id: String,
}

impl ScaleKey {
    pub fn new(individual_id: impl Into<String>, scale_id: impl Into<String>) -> Self {
        Self {
            individual_id: individual_id.into(),
            scale_id: scale_id.into(),
        }
    }

    /// Parses `individual:scale`.
    pub fn parse(label: &str) -> Result<Self> {
        let (ind, scale) = label
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("label `{label}` is not of the form individual:scale")))?;
        validate_id(ind)?;
        validate_id(scale)?;
        Ok(Self::new(ind, scale))
    }

    fn file_stem(&self) -> String {
        format!("{}_{}", self.individual_id, self.scale_id)
    }
}

impl fmt::Display for ScaleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.individual_id, self.scale_id)
    }
}

/// Identifiers are non-empty ASCII alphanumerics and dashes, so that
/// `<individual>_<scale>` file names and `individual:scale` labels stay unambiguous.
pub fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return Err(Error::InvalidInput(format!(
            "identifier `{id}` must be non-empty and contain only ASCII letters, digits and `-`"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryRecord {
    pub individual_id: String,
    pub scale_id: String,
    /// Mask location relative to the gallery root.
    pub mask_path: PathBuf,
    pub mask: BinaryMask,
    pub cloud: SpotCloud,
    pub width: usize,
    pub height: usize,
    pub light_condition: LightCondition,
    pub provenance: Provenance,
}

impl GalleryRecord {
    /// Builds a record, deriving its centroid cache and canonical file location.
    pub fn from_mask(
        individual_id: &str,
        scale_id: &str,
        mask: BinaryMask,
        metadata: RecordMetadata,
    ) -> Result<Self> {
        validate_id(individual_id)?;
        validate_id(scale_id)?;
        let key = ScaleKey::new(individual_id, scale_id);
        Ok(Self {
            individual_id: individual_id.to_string(),
            scale_id: scale_id.to_string(),
            mask_path: PathBuf::from("masks").join(format!("{}.png", key.file_stem())),
            cloud: extract_centroids(&mask),
            width: mask.width(),
            height: mask.height(),
            light_condition: metadata.light_condition,
            provenance: metadata.provenance,
            mask,
        })
    }

    pub fn key(&self) -> ScaleKey {
        ScaleKey::new(self.individual_id.clone(), self.scale_id.clone())
    }

    fn cloud_path(&self) -> PathBuf {
        PathBuf::from("clouds").join(format!("{}.csv", self.key().file_stem()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gallery {
    records: Vec<GalleryRecord>,
    pub manifest_version: u64,
}

impl Gallery {
    pub fn records(&self) -> &[GalleryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &ScaleKey) -> Option<&GalleryRecord> {
        self.records.iter().find(|r| r.individual_id == key.individual_id && r.scale_id == key.scale_id)
    }

    pub fn keys(&self) -> Vec<ScaleKey> {
        self.records.iter().map(GalleryRecord::key).collect()
    }

    /// Distinct individuals in manifest order.
    pub fn individuals(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.individual_id.as_str()) {
                out.push(&r.individual_id);
            }
        }
        out
    }

    /// In-memory append. Records stay grouped by individual (manifest order),
    /// so a save/load round trip reproduces the same sequence.
    pub fn insert(&mut self, record: GalleryRecord) -> Result<()> {
        if self.get(&record.key()).is_some() {
            return Err(Error::Duplicate(record.key().to_string()));
        }
        let pos = self
            .records
            .iter()
            .rposition(|r| r.individual_id == record.individual_id)
            .map_or(self.records.len(), |p| p + 1);
        self.records.insert(pos, record);
        Ok(())
    }

    /// Next free `s<n>` scale id for an individual.
    pub fn next_scale_id(&self, individual_id: &str) -> String {
        (1..)
            .map(|n| format!("s{n}"))
            .find(|s| self.get(&ScaleKey::new(individual_id, s.clone())).is_none())
            .expect("unbounded search")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    manifest_version: u64,
    individuals: Vec<ManifestIndividual>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestIndividual {
    individual_id: String,
    scales: Vec<ManifestScale>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestScale {
    scale_id: String,
    mask: PathBuf,
    cloud: PathBuf,
    width: usize,
    height: usize,
    light_condition: LightCondition,
    provenance: Provenance,
}

fn manifest_of(gallery: &Gallery) -> Manifest {
    let mut individuals: Vec<ManifestIndividual> = Vec::new();
    for r in &gallery.records {
        let scale = ManifestScale {
            scale_id: r.scale_id.clone(),
            mask: r.mask_path.clone(),
            cloud: r.cloud_path(),
            width: r.width,
            height: r.height,
            light_condition: r.light_condition,
            provenance: r.provenance,
        };
        match individuals.iter_mut().find(|i| i.individual_id == r.individual_id) {
            Some(ind) => ind.scales.push(scale),
            None => individuals.push(ManifestIndividual {
                individual_id: r.individual_id.clone(),
                scales: vec![scale],
            }),
        }
    }
    Manifest {
        manifest_version: gallery.manifest_version,
        individuals,
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

fn gallery_root(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

fn check_relative(record: &str, p: &Path) -> Result<()> {
    if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
        return Err(Error::Record {
            record: record.to_string(),
            reason: format!("path {} escapes the gallery directory", p.display()),
        });
    }
    Ok(())
}

/// Loads and fully validates a gallery from its manifest (or its directory).
pub fn load_gallery(manifest: &Path) -> Result<Gallery> {
    let mpath = manifest_path(manifest);
    let root = gallery_root(&mpath);
    let m = read_manifest(&mpath)?;
    let mut gallery = Gallery {
        records: Vec::new(),
        manifest_version: m.manifest_version,
    };
    for ind in m.individuals {
        for s in ind.scales {
            let key = ScaleKey::new(ind.individual_id.clone(), s.scale_id.clone());
            let name = key.to_string();
            let rec_err = |reason: String| Error::Record {
                record: name.clone(),
                reason,
            };
            validate_id(&ind.individual_id).map_err(|e| rec_err(e.to_string()))?;
            validate_id(&s.scale_id).map_err(|e| rec_err(e.to_string()))?;
            check_relative(&name, &s.mask)?;
            check_relative(&name, &s.cloud)?;
            let mask_file = root.join(&s.mask);
            if !mask_file.is_file() {
                return Err(rec_err(format!("mask file {} is missing", mask_file.display())));
            }
            let mask = BinaryMask::open_png(&mask_file).map_err(|e| rec_err(e.to_string()))?;
            if (mask.width(), mask.height()) != (s.width, s.height) {
                return Err(rec_err(format!(
                    "manifest says {}x{} but mask is {}x{}",
                    s.width,
                    s.height,
                    mask.width(),
                    mask.height()
                )));
            }
            let cloud_file = root.join(&s.cloud);
            let cached = SpotCloud::open_csv(&cloud_file).map_err(|e| rec_err(e.to_string()))?;
            let derived = extract_centroids(&mask);
            let consistent = cached.len() == derived.len()
                && cached
                    .points
                    .iter()
                    .zip(&derived.points)
                    .all(|(a, b)| (a - b).amax() <= CLOUD_TOLERANCE);
            if !consistent {
                return Err(rec_err(format!(
                    "cached cloud ({} points) disagrees with mask centroids ({} points)",
                    cached.len(),
                    derived.len()
                )));
            }
            let record = GalleryRecord {
                individual_id: ind.individual_id.clone(),
                scale_id: s.scale_id,
                mask_path: s.mask,
                mask,
                cloud: derived,
                width: s.width,
                height: s.height,
                light_condition: s.light_condition,
                provenance: s.provenance,
            };
            if gallery.get(&record.key()).is_some() {
                return Err(Error::Duplicate(name));
            }
            gallery.records.push(record);
        }
    }
    Ok(gallery)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_record_files(root: &Path, record: &GalleryRecord) -> Result<()> {
    for dir in ["masks", "clouds"] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mask_file = root.join(&record.mask_path);
    if let Some(parent) = mask_file.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_atomic(&mask_file, &record.mask.encode_png()?)?;
    let mut csv = Vec::new();
    record.cloud.write_csv(&mut csv)?;
    write_atomic(&root.join(record.cloud_path()), &csv)
}

fn write_manifest(root: &Path, gallery: &Gallery) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&manifest_of(gallery))?;
    text.push('\n');
    write_atomic(&root.join(MANIFEST_FILE), text.as_bytes())
}

/// Writes every record and the manifest under `dir` (created if needed).
pub fn save_gallery(gallery: &Gallery, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in &gallery.records {
        check_relative(&r.key().to_string(), &r.mask_path)?;
        write_record_files(dir, r)?;
    }
    write_manifest(dir, gallery)
}

/// Exclusive writer lock on a gallery directory, released on drop.
struct WriteLock(PathBuf);

impl WriteLock {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Conflict(
                "another writer holds the gallery lock".into(),
            )),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Adds a new scale sample to the gallery stored at `dir` and returns the
/// updated gallery. `gallery` must be the current on-disk state (same
/// manifest version), otherwise a conflict is reported and nothing is written.
pub fn enroll(
    dir: &Path,
    gallery: &Gallery,
    individual_id: &str,
    scale_id: Option<&str>,
    mask: BinaryMask,
    metadata: RecordMetadata,
) -> Result<Gallery> {
    let scale_id = scale_id.map_or_else(|| gallery.next_scale_id(individual_id), str::to_string);
    let record = GalleryRecord::from_mask(individual_id, &scale_id, mask, metadata)?;
    if gallery.get(&record.key()).is_some() {
        return Err(Error::Duplicate(record.key().to_string()));
    }

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let _lock = WriteLock::acquire(dir)?;
    let mpath = dir.join(MANIFEST_FILE);
    let on_disk = if mpath.exists() {
        read_manifest(&mpath)?.manifest_version
    } else {
        0
    };
    if on_disk != gallery.manifest_version {
        return Err(Error::Conflict(format!(
            "expected manifest version {}, found {on_disk}",
            gallery.manifest_version
        )));
    }

    let mut next = gallery.clone();
    next.insert(record.clone())?;
    next.manifest_version += 1;
    write_record_files(dir, &record)?;
    write_manifest(dir, &next)?;
    Ok(next)
}
