//! Object-sound database: asset ingestion, label retrieval and bindings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{decode_wav, AssetResolver, PcmBuffer, ResolveError, WavError};
use crate::gain::{Gain, GainOutOfRange};
use crate::scene::{normalize_label, Scene, SceneError};
use crate::store::write_canonical_json;

pub const MANIFEST_FILE: &str = "catalog.json";
pub const PAYLOAD_DIR: &str = "payloads";
pub const MAX_PAGE_SIZE: usize = 200;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("asset is shorter than one millisecond")]
    TooShort,
    #[error(transparent)]
    Label(#[from] SceneError),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("unknown asset {0}")]
    UnknownAsset(String),
    #[error("asset {asset_id} has role {role:?}; only effects can be bound to objects")]
    RoleMismatch { asset_id: String, role: Role },
    #[error(transparent)]
    GainOutOfRange(#[from] GainOutOfRange),
    #[error("page size {0} outside 1..={MAX_PAGE_SIZE}")]
    PageSizeOutOfRange(usize),
    #[error("catalog manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("catalog i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Music,
    Ambient,
    Effect,
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "music" => Ok(Role::Music),
            "ambient" => Ok(Role::Ambient),
            "effect" => Ok(Role::Effect),
            other => Err(format!("unknown role {other:?} (expected music, ambient or effect)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundAsset {
    pub id: String,
    pub role: Role,
    /// Ordered and de-duplicated; the first entry is the primary label.
    pub labels: Vec<String>,
    pub loopable: bool,
    pub duration_ms: u64,
    pub sample_rate: u32,
    pub channels: u16,
    /// Payload path relative to the catalog root.
    pub payload: String,
}

impl SoundAsset {
    pub fn primary_label(&self) -> Option<&str> {
        self.labels.first().map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    assets: BTreeMap<String, SoundAsset>,
    label_index: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Page<'a> {
    pub items: Vec<&'a SoundAsset>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

impl Catalog {
    pub fn from_assets(assets: impl IntoIterator<Item = SoundAsset>) -> Self {
        let mut catalog = Catalog::default();
        for asset in assets {
            catalog.insert(asset);
        }
        catalog
    }

    pub fn insert(&mut self, asset: SoundAsset) {
        if let Some(old) = self.assets.remove(&asset.id) {
            for label in &old.labels {
                if let Some(ids) = self.label_index.get_mut(label) {
                    ids.remove(&old.id);
                    if ids.is_empty() {
                        self.label_index.remove(label);
                    }
                }
            }
        }
        for label in &asset.labels {
            self.label_index
                .entry(label.clone())
                .or_default()
                .insert(asset.id.clone());
        }
        self.assets.insert(asset.id.clone(), asset);
    }

    pub fn get(&self, id: &str) -> Option<&SoundAsset> {
        self.assets.get(id)
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn assets(&self) -> impl Iterator<Item = &SoundAsset> {
        self.assets.values()
    }

    pub fn label_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.label_index
    }

    pub fn rebuilt_index(&self) -> BTreeMap<String, BTreeSet<String>> {
        Catalog::from_assets(self.assets.values().cloned()).label_index
    }

    pub fn duration_ms(&self, id: &str) -> Option<u64> {
        self.get(id).map(|a| a.duration_ms)
    }

    /// Assets whose primary label is `label` first, then those carrying it
    /// anywhere in their label set; ascending id within each tier.
    pub fn lookup_by_label(&self, label: &str, role: Option<Role>) -> Vec<&SoundAsset> {
        let Some(ids) = self.label_index.get(label) else {
            return Vec::new();
        };
        let matching: Vec<&SoundAsset> = ids
            .iter()
            .filter_map(|id| self.assets.get(id))
            .filter(|a| role.is_none_or(|r| a.role == r))
            .collect();
        let (mut ranked, secondary): (Vec<_>, Vec<_>) = matching
            .into_iter()
            .partition(|a| a.primary_label() == Some(label));
        ranked.extend(secondary);
        ranked
    }

    pub fn browse(
        &self,
        role: Option<Role>,
        page: usize,
        page_size: usize,
    ) -> Result<Page<'_>, CatalogError> {
        if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
            return Err(CatalogError::PageSizeOutOfRange(page_size));
        }
        let filtered: Vec<&SoundAsset> = self
            .assets
            .values()
            .filter(|a| role.is_none_or(|r| a.role == r))
            .collect();
        let total = filtered.len();
        let items = filtered
            .into_iter()
            .skip(page.saturating_mul(page_size))
            .take(page_size)
            .collect();
        Ok(Page { items, total, page, page_size })
    }

    fn next_id(&self) -> String {
        let max = self
            .assets
            .keys()
            .filter_map(|id| id.strip_prefix("snd-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        format!("snd-{:06}", max + 1)
    }
}

fn normalize_labels(labels: &[String]) -> Result<Vec<String>, CatalogError> {
    let mut out: Vec<String> = Vec::with_capacity(labels.len());
    for raw in labels {
        let label = normalize_label(raw)?;
        if !out.contains(&label) {
            out.push(label);
        }
    }
    Ok(out)
}

/// A catalog persisted as `catalog.json` plus one WAV payload per asset.
#[derive(Debug)]
pub struct CatalogStore {
    root: PathBuf,
    catalog: Catalog,
}

impl CatalogStore {
    /// Opens (creating if needed) the catalog rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let root = root.into();
        fs::create_dir_all(root.join(PAYLOAD_DIR))?;
        let path = root.join(MANIFEST_FILE);
        let catalog = match fs::read(&path) {
            Ok(bytes) => {
                let assets: Vec<SoundAsset> =
                    serde_json::from_slice(&bytes).map_err(|e| CatalogError::Manifest {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                Catalog::from_assets(assets)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Catalog::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(CatalogStore { root, catalog })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn payload_path(&self, asset: &SoundAsset) -> PathBuf {
        self.root.join(&asset.payload)
    }

    pub fn read_payload(&self, id: &str) -> Result<Vec<u8>, CatalogError> {
        let asset = self
            .catalog
            .get(id)
            .ok_or_else(|| CatalogError::UnknownAsset(id.to_string()))?;
        Ok(fs::read(self.payload_path(asset))?)
    }

    /// Validates `bytes` as WAV, stores the payload and records the asset.
    /// Ambient assets are always marked loopable.
    pub fn ingest(
        &mut self,
        bytes: &[u8],
        role: Role,
        labels: &[String],
        loopable: bool,
    ) -> Result<SoundAsset, CatalogError> {
        let pcm = decode_wav(bytes)?;
        let duration_ms = pcm.duration_ms();
        if duration_ms == 0 {
            return Err(CatalogError::TooShort);
        }
        let labels = normalize_labels(labels)?;
        let id = self.catalog.next_id();
        let payload = format!("{PAYLOAD_DIR}/{id}.wav");
        fs::write(self.root.join(&payload), bytes)?;
        let asset = SoundAsset {
            id,
            role,
            labels,
            loopable: loopable || role == Role::Ambient,
            duration_ms,
            sample_rate: pcm.sample_rate,
            channels: pcm.channel_count() as u16,
            payload,
        };
        self.catalog.insert(asset.clone());
        self.save()?;
        Ok(asset)
    }

    pub fn save(&self) -> Result<(), CatalogError> {
        let assets: Vec<&SoundAsset> = self.catalog.assets().collect();
        write_canonical_json(&self.root.join(MANIFEST_FILE), &assets)?;
        Ok(())
    }
}

impl AssetResolver for CatalogStore {
    fn resolve(&self, asset_id: &str) -> Result<PcmBuffer, ResolveError> {
        let asset = self.catalog.get(asset_id).ok_or(ResolveError::Missing)?;
        let bytes = match fs::read(self.payload_path(asset)) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ResolveError::Missing),
            Err(e) => return Err(ResolveError::Invalid(e.to_string())),
        };
        decode_wav(&bytes).map_err(|e| ResolveError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundBinding {
    pub object_id: String,
    pub asset_id: String,
    pub gain: Gain,
}

/// Attaches an effect to an object, replacing any earlier binding for it.
pub fn bind_sound(
    bindings: &mut BTreeMap<String, SoundBinding>,
    scene: Option<&Scene>,
    catalog: &Catalog,
    object_id: &str,
    asset_id: &str,
    gain: f64,
) -> Result<SoundBinding, CatalogError> {
    if scene.and_then(|s| s.object(object_id)).is_none() {
        return Err(CatalogError::UnknownObject(object_id.to_string()));
    }
    let asset = catalog
        .get(asset_id)
        .ok_or_else(|| CatalogError::UnknownAsset(asset_id.to_string()))?;
    if asset.role != Role::Effect {
        return Err(CatalogError::RoleMismatch {
            asset_id: asset_id.to_string(),
            role: asset.role,
        });
    }
    let binding = SoundBinding {
        object_id: object_id.to_string(),
        asset_id: asset_id.to_string(),
        gain: Gain::new(gain)?,
    };
    bindings.insert(object_id.to_string(), binding.clone());
    Ok(binding)
}
