//! Images, the objects found in them, and box-to-label resolution.

use std::fmt;
use std::fs;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Minimum overlap for an existing object to be offered as a label candidate.
pub const LABEL_IOU_THRESHOLD: f64 = 0.1;

/// Label assigned to a manual box when nothing in the scene overlaps it.
pub const UNKNOWN_LABEL: &str = "unknown";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),
    #[error("box {bbox} does not fit a {width}x{height} image")]
    OutOfBounds {
        bbox: BoundingBox,
        width: u32,
        height: u32,
    },
    #[error("invalid label {0:?}")]
    InvalidLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Jpeg,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpeg => "jpg",
        }
    }

    /// Maps a MIME type onto a supported format. `None` means the type is
    /// not one we accept.
    pub fn from_mime(mime: &str) -> Option<Self> {
        match mime.split(';').next().unwrap_or("").trim() {
            "image/png" => Some(ImageFormat::Png),
            "image/jpeg" | "image/jpg" => Some(ImageFormat::Jpeg),
            _ => None,
        }
    }
}

/// SHA-256 of the raw image bytes, serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> Self {
        ContentHash(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for ContentHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(ContentHash(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub format: ImageFormat,
    pub content_hash: ContentHash,
}

impl ImageRef {
    /// File name used when the image is stored in a project's asset area.
    pub fn file_name(&self) -> String {
        format!("{}.{}", self.id, self.format.extension())
    }
}

/// Pixel rectangle with its origin at the top-left corner of the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{}x{})", self.x, self.y, self.w, self.h)
    }
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && self.right() <= u64::from(width)
            && self.bottom() <= u64::from(height)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let left = u64::from(self.x.max(other.x));
        let top = u64::from(self.y.max(other.y));
        let right = self.right().min(other.right());
        let bottom = self.bottom().min(other.bottom());
        if right <= left || bottom <= top {
            0
        } else {
            (right - left) * (bottom - top)
        }
    }
}

/// Intersection over union of two boxes; 0 when they do not overlap.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectSource {
    Auto,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: String,
    pub confidence: f64,
    pub source: ObjectSource,
}

/// Canonical catalog key: trimmed, lowercase ASCII, inner whitespace folded
/// to `_`. Only `[a-z0-9_-]` survive.
pub fn normalize_label(raw: &str) -> Result<String, SceneError> {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push('_');
        }
        out.push_str(&word.to_ascii_lowercase());
    }
    let valid = !out.is_empty()
        && out
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
    if valid {
        Ok(out)
    } else {
        Err(SceneError::InvalidLabel(raw.to_string()))
    }
}

/// Reads dimensions from a PNG or JPEG header and fingerprints the bytes.
pub fn import_image(bytes: &[u8], format_hint: Option<ImageFormat>) -> Result<ImageRef, SceneError> {
    if bytes.is_empty() {
        return Err(SceneError::CorruptImage("empty input".into()));
    }
    let format = sniff_format(bytes)?;
    if let Some(hint) = format_hint {
        if hint != format {
            return Err(SceneError::CorruptImage(format!(
                "declared {hint:?} but content is {format:?}"
            )));
        }
    }
    let size = imagesize::blob_size(bytes)
        .map_err(|e| SceneError::CorruptImage(format!("unreadable {format:?} header: {e}")))?;
    let width = u32::try_from(size.width).unwrap_or(0);
    let height = u32::try_from(size.height).unwrap_or(0);
    if width == 0 || height == 0 {
        return Err(SceneError::CorruptImage(format!(
            "invalid dimensions {}x{}",
            size.width, size.height
        )));
    }
    let content_hash = ContentHash::of(bytes);
    Ok(ImageRef {
        id: format!("img-{}", &content_hash.to_hex()[..16]),
        width,
        height,
        format,
        content_hash,
    })
}

fn sniff_format(bytes: &[u8]) -> Result<ImageFormat, SceneError> {
    const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG_SIGNATURE) {
        return Ok(ImageFormat::Png);
    }
    if bytes.starts_with(&[0xFF, 0xD8]) {
        return Ok(ImageFormat::Jpeg);
    }
    match imagesize::image_type(bytes) {
        // a looser PNG/JPEG match than ours means a damaged header
        Ok(imagesize::ImageType::Png | imagesize::ImageType::Jpeg) => {
            Err(SceneError::CorruptImage("damaged image signature".into()))
        }
        Ok(other) => Err(SceneError::UnsupportedFormat(format!("{other:?}"))),
        Err(_) => Err(SceneError::CorruptImage("unrecognized image header".into())),
    }
}

/// One raw detection as produced by a detector backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub confidence: f64,
}

/// Object detection backend.
pub trait DetectorPort: Send + Sync {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Annotation>, String>;
}

/// Detector that echoes a JSON sidecar named `<image_hash>.annotations.json`.
///
/// A missing sidecar means "nothing annotated" and yields no detections; an
/// unreadable or malformed one is a port failure.
#[derive(Debug, Clone)]
pub struct AnnotationFileDetector {
    dir: PathBuf,
}

impl AnnotationFileDetector {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        AnnotationFileDetector { dir: dir.into() }
    }

    pub fn sidecar_path(&self, image: &ImageRef) -> PathBuf {
        self.dir
            .join(format!("{}.annotations.json", image.content_hash.to_hex()))
    }
}

impl DetectorPort for AnnotationFileDetector {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Annotation>, String> {
        let path = self.sidecar_path(image);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(format!("{}: {e}", path.display())),
        };
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Detector returning a fixed list, for tests and demos.
#[derive(Debug, Clone, Default)]
pub struct StaticDetector(pub Vec<Annotation>);

impl DetectorPort for StaticDetector {
    fn detect(&self, _image: &ImageRef) -> Result<Vec<Annotation>, String> {
        Ok(self.0.clone())
    }
}

/// Runs the detector and validates every result against the image. Object ids
/// are assigned `obj-1`, `obj-2`, ... in detector order.
pub fn detect_objects(
    image: &ImageRef,
    detector: &dyn DetectorPort,
) -> Result<Vec<DetectedObject>, SceneError> {
    let raw = detector.detect(image).map_err(SceneError::DetectorUnavailable)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, a)| {
            let bbox = BoundingBox::new(a.x, a.y, a.w, a.h);
            if !bbox.fits(image.width, image.height) {
                return Err(SceneError::DetectorUnavailable(format!(
                    "detection {i} ({}) box {bbox} outside {}x{} image",
                    a.label, image.width, image.height
                )));
            }
            if !(0.0..=1.0).contains(&a.confidence) {
                return Err(SceneError::DetectorUnavailable(format!(
                    "detection {i} confidence {} outside [0, 1]",
                    a.confidence
                )));
            }
            let label = normalize_label(&a.label)
                .map_err(|e| SceneError::DetectorUnavailable(format!("detection {i}: {e}")))?;
            Ok(DetectedObject {
                id: format!("obj-{}", i + 1),
                bbox,
                label,
                confidence: a.confidence,
                source: ObjectSource::Auto,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub image: ImageRef,
    pub objects: Vec<DetectedObject>,
}

impl Scene {
    pub fn new(image: ImageRef, objects: Vec<DetectedObject>) -> Result<Self, SceneError> {
        for object in &objects {
            image_bounds_check(&image, &object.bbox)?;
        }
        Ok(Scene { image, objects })
    }

    pub fn object(&self, id: &str) -> Option<&DetectedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn labels(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.label.clone()).collect()
    }

    fn next_object_id(&self) -> String {
        let max = self
            .objects
            .iter()
            .filter_map(|o| o.id.strip_prefix("obj-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        format!("obj-{}", max + 1)
    }

    /// Existing objects ranked by overlap with `query`, best first. Each label
    /// appears once with its best score; overlaps below
    /// [`LABEL_IOU_THRESHOLD`] are dropped and ties go to the smaller label.
    pub fn resolve_label(&self, query: &BoundingBox) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = Vec::new();
        for object in &self.objects {
            let score = iou(&object.bbox, query);
            if score < LABEL_IOU_THRESHOLD {
                continue;
            }
            match ranked.iter_mut().find(|(label, _)| *label == object.label) {
                Some(entry) => entry.1 = entry.1.max(score),
                None => ranked.push((object.label.clone(), score)),
            }
        }
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked
    }

    /// Appends a hand-drawn box. Without a label the best-overlapping existing
    /// object names it, falling back to [`UNKNOWN_LABEL`].
    pub fn add_manual_box(
        &mut self,
        bbox: BoundingBox,
        label: Option<&str>,
    ) -> Result<DetectedObject, SceneError> {
        image_bounds_check(&self.image, &bbox)?;
        let label = match label {
            Some(raw) => normalize_label(raw)?,
            None => self
                .resolve_label(&bbox)
                .into_iter()
                .next()
                .map(|(label, _)| label)
                .unwrap_or_else(|| UNKNOWN_LABEL.to_string()),
        };
        let object = DetectedObject {
            id: self.next_object_id(),
            bbox,
            label,
            confidence: 1.0,
            source: ObjectSource::Manual,
        };
        self.objects.push(object.clone());
        Ok(object)
    }
}

fn image_bounds_check(image: &ImageRef, bbox: &BoundingBox) -> Result<(), SceneError> {
    if bbox.fits(image.width, image.height) {
        Ok(())
    } else {
        Err(SceneError::OutOfBounds {
            bbox: *bbox,
            width: image.width,
            height: image.height,
        })
    }
}
