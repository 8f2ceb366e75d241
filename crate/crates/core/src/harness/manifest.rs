//! Manifest ingestion: sample ids plus optional mask, image and feature
//! artifacts, all validated at load time.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmDecoder, PnmSubtype, SampleEncoding};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ids::{Sample, SampleId};
use crate::metrics::{BinaryMask, PixelImage};

pub const MANIFEST_VERSION: u32 = 1;

/// Mask pixels at or above this value are foreground.
pub const MASK_THRESHOLD: u16 = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    /// Zero-based row in the features file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub samples: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

/// Samples with their decoded artifacts, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    pub samples: Vec<Sample>,
    pub masks: BTreeMap<SampleId, BinaryMask>,
    pub images: BTreeMap<SampleId, PixelImage>,
    pub features: BTreeMap<SampleId, Vec<f64>>,
}

impl Pool {
    pub fn ids(&self) -> Vec<SampleId> {
        self.samples.iter().map(|s| s.id).collect()
    }

    /// Feature vectors for `ids`, in that order.
    pub fn features_for(&self, ids: &[SampleId]) -> Result<Vec<(SampleId, Vec<f64>)>, HarnessError> {
        ids.iter()
            .map(|id| {
                self.features
                    .get(id)
                    .map(|v| (*id, v.clone()))
                    .ok_or(HarnessError::MissingFeature(*id))
            })
            .collect()
    }
}

/// Loads and validates a manifest. Relative paths resolve against the
/// manifest's directory.
pub fn ingest_manifest(path: &Path) -> Result<Pool, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(HarnessError::Parse {
            path: path.display().to_string(),
            message: format!("unsupported manifest version {}", manifest.version),
        });
    }
    let base = path.parent().unwrap_or(Path::new(""));

    let rows = match &manifest.features {
        Some(f) => read_features(&base.join(f))?,
        None => Vec::new(),
    };

    let mut pool = Pool::default();
    let mut seen = HashSet::new();
    for entry in &manifest.samples {
        let id = SampleId(entry.id);
        if !seen.insert(id) {
            return Err(HarnessError::Parse {
                path: path.display().to_string(),
                message: format!("sample {id} listed twice"),
            });
        }
        let mask = entry
            .mask
            .as_ref()
            .map(|p| load_mask(&base.join(p)).map_err(|e| e.for_sample(id)))
            .transpose()?;
        let image = entry
            .image
            .as_ref()
            .map(|p| load_image(&base.join(p)).map_err(|e| e.for_sample(id)))
            .transpose()?;
        if let (Some(m), Some(i)) = (&mask, &image) {
            if (m.width(), m.height()) != (i.width(), i.height()) {
                return Err(HarnessError::ShapeMismatch {
                    id,
                    message: format!(
                        "mask is {}x{} but image is {}x{}",
                        m.width(),
                        m.height(),
                        i.width(),
                        i.height()
                    ),
                });
            }
        }
        if let Some(r) = entry.feature_row {
            let Some((row_id, v)) = rows.get(r) else {
                return Err(HarnessError::ShapeMismatch {
                    id,
                    message: format!("feature_row {r} but the features file has {} rows", rows.len()),
                });
            };
            if *row_id != id {
                return Err(HarnessError::ShapeMismatch {
                    id,
                    message: format!("feature_row {r} holds id {row_id}"),
                });
            }
            pool.features.insert(id, v.clone());
        }
        pool.samples.push(Sample {
            id,
            label_ref: entry.mask.clone().or_else(|| entry.image.clone()),
            feature_ref: entry.feature_row,
        });
        if let Some(m) = mask {
            pool.masks.insert(id, m);
        }
        if let Some(i) = image {
            pool.images.insert(id, i);
        }
    }
    Ok(pool)
}

/// Reads `id,x1,x2,...` rows without a header. Every row must have the same
/// dimension as the first.
pub fn read_features(path: &Path) -> Result<Vec<(SampleId, Vec<f64>)>, HarnessError> {
    let file = File::open(path).map_err(|_| HarnessError::MissingFile {
        what: "features".into(),
        path: path.to_path_buf(),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let parse_err = |row: usize, message: String| HarnessError::Parse {
        path: path.display().to_string(),
        message: format!("row {row}: {message}"),
    };
    let mut rows: Vec<(SampleId, Vec<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(i, e.to_string()))?;
        let mut fields = record.iter();
        let id: u64 = fields
            .next()
            .ok_or_else(|| parse_err(i, "empty row".into()))?
            .parse()
            .map_err(|e| parse_err(i, format!("bad id: {e}")))?;
        let v = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(i, format!("bad component {f:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some((_, first)) = rows.first() {
            if first.len() != v.len() {
                return Err(HarnessError::DimensionMismatch {
                    row: i,
                    id: SampleId(id),
                    expected: first.len(),
                    found: v.len(),
                });
            }
        }
        rows.push((SampleId(id), v));
    }
    Ok(rows)
}

/// Header plus raw samples of a binary PGM/PPM file.
struct RawPnm {
    width: usize,
    height: usize,
    channels: usize,
    maxval: u32,
    samples: Vec<u16>,
}

fn read_pnm(path: &Path, allow_color: bool) -> Result<RawPnm, ArtifactError> {
    let file = File::open(path).map_err(|_| ArtifactError::Missing(path.to_path_buf()))?;
    let mut reader = BufReader::new(file);
    let head = reader
        .fill_buf()
        .map_err(|e| ArtifactError::Decode(path.to_path_buf(), e.to_string()))?;
    let magic = head.get(..2).unwrap_or(head);
    let ok = magic == b"P5" || (allow_color && magic == b"P6");
    if !ok {
        return Err(ArtifactError::Decode(
            path.to_path_buf(),
            format!("unsupported magic {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let decoder = PnmDecoder::new(reader).map_err(|e| ArtifactError::Decode(path.to_path_buf(), e.to_string()))?;
    let (mut rest, header) = decoder.into_inner();
    let channels = match header.subtype() {
        PnmSubtype::Graymap(SampleEncoding::Binary) => 1,
        PnmSubtype::Pixmap(SampleEncoding::Binary) => 3,
        other => {
            return Err(ArtifactError::Decode(path.to_path_buf(), format!("unsupported subtype {other:?}")));
        }
    };
    let (width, height) = (header.width() as usize, header.height() as usize);
    let maxval = header.maximal_sample();
    let n = width * height * channels;
    let wide = maxval > 255;
    let mut bytes = vec![0u8; if wide { 2 * n } else { n }];
    rest.read_exact(&mut bytes)
        .map_err(|e| ArtifactError::Decode(path.to_path_buf(), format!("truncated pixel data: {e}")))?;
    let samples: Vec<u16> = if wide {
        bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        bytes.into_iter().map(u16::from).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| u32::from(s) > maxval) {
        return Err(ArtifactError::Decode(path.to_path_buf(), format!("sample {s} exceeds maxval {maxval}")));
    }
    Ok(RawPnm {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

/// Binary PGM with maxval 255; pixels `>= 128` are foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask, ArtifactError> {
    let raw = read_pnm(path, false)?;
    if raw.maxval != 255 {
        return Err(ArtifactError::Decode(path.to_path_buf(), format!("mask maxval {} != 255", raw.maxval)));
    }
    let bits = raw.samples.iter().map(|&s| s >= MASK_THRESHOLD).collect();
    BinaryMask::new(raw.width, raw.height, bits).map_err(|e| ArtifactError::Decode(path.to_path_buf(), e.to_string()))
}

/// Binary PPM or PGM, each sample divided by the file's maxval.
pub fn load_image(path: &Path) -> Result<PixelImage, ArtifactError> {
    let raw = read_pnm(path, true)?;
    let scale = f64::from(raw.maxval);
    let values = raw.samples.iter().map(|&s| f64::from(s) / scale).collect();
    PixelImage::new(raw.width, raw.height, raw.channels, values)
        .map_err(|e| ArtifactError::Decode(path.to_path_buf(), e.to_string()))
}

/// Writes an 8-bit binary PGM (maxval 255).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> std::io::Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    std::fs::write(path, out)
}

/// Writes an 8-bit binary PPM (maxval 255), pixels interleaved RGB.
pub fn write_ppm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> std::io::Result<()> {
    assert_eq!(pixels.len(), 3 * width * height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    std::fs::write(path, out)
}

/// Artifact failure before the owning sample is known.
#[derive(Debug)]
pub enum ArtifactError {
    Missing(PathBuf),
    Decode(PathBuf, String),
}

impl ArtifactError {
    fn for_sample(self, id: SampleId) -> HarnessError {
        match self {
            ArtifactError::Missing(path) => HarnessError::MissingFile {
                what: format!("sample {id}"),
                path,
            },
            ArtifactError::Decode(path, message) => HarnessError::ShapeMismatch {
                id,
                message: format!("{}: {message}", path.display()),
            },
        }
    }
}

impl std::fmt::Display for ArtifactError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArtifactError::Missing(p) => write!(f, "missing file {}", p.display()),
            ArtifactError::Decode(p, m) => write!(f, "{}: {m}", p.display()),
        }
    }
}

impl std::error::Error for ArtifactError {}
