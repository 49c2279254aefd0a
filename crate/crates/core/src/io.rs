//! File formats: binary PGM maps with JSON sidecars, CSV grids, and trained
//! models as a JSON header plus a raw little-endian `f64` blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::segtoy::LabelMap;
use crate::uncertainty::{MapKind, ScalarMap};

pub const LEGEND_SCHEMA: &str = "lsk.legend/1";
pub const MAP_SCHEMA: &str = "lsk.scalar_map/1";
pub const MODEL_SCHEMA: &str = "lsk.model/1";

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse { line: 1, message: "truncated PGM header".into() });
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(Error::Parse { line: 1, message: format!("expected P5 magic, found '{}'", fields[0]) });
        }
        let num = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse { line: 1, message: format!("invalid PGM header field '{s}'") })
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Parse { line: 1, message: format!("only 8-bit PGM is supported, maxval {maxval}") });
        }
        let raster = bytes.get(pos..).unwrap_or_default();
        if raster.len() != width * height {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected {} raster bytes, found {}", width * height, raster.len()),
            });
        }
        Ok(Self { width, height, pixels: raster.to_vec() })
    }
}

/// Class index as gray level.
pub fn label_map_pgm(map: &LabelMap) -> Result<Pgm> {
    let pixels = map
        .labels
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| Error::Usage(format!("class index {l} does not fit in 8 bits"))))
        .collect::<Result<_>>()?;
    Ok(Pgm { width: map.width, height: map.height, pixels })
}

pub fn label_map_from_pgm(pgm: &Pgm, legend: Vec<String>) -> LabelMap {
    LabelMap {
        height: pgm.height,
        width: pgm.width,
        labels: pgm.pixels.iter().map(|&v| v as usize).collect(),
        legend,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendFile {
    pub schema: String,
    pub height: usize,
    pub width: usize,
    pub legend: Vec<String>,
}

/// Min-max normalized to 0..=255.
pub fn scalar_map_pgm(map: &ScalarMap) -> Pgm {
    let pixels = map.normalized().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    Pgm { width: map.width, height: map.height, pixels }
}

/// One CSV row per image row.
pub fn scalar_map_csv(map: &ScalarMap) -> String {
    let mut s = String::new();
    for row in map.values.chunks(map.width.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub schema: String,
    pub kind: MapKind,
    pub height: usize,
    pub width: usize,
    pub normalization: String,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl MapSidecar {
    pub fn of(map: &ScalarMap) -> Self {
        Self {
            schema: MAP_SCHEMA.into(),
            kind: map.kind,
            height: map.height,
            width: map.width,
            normalization: "per_image_min_max".into(),
            min: map.min,
            max: map.max,
            warning: map.warning.clone(),
        }
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: format!("{}: {e}", path.display()) })
}

/// Writes `<stem>.pgm` and `<stem>.json`; returns both paths.
pub fn write_label_map(stem: &Path, map: &LabelMap) -> Result<Vec<PathBuf>> {
    let pgm = with_ext(stem, "pgm");
    let json = with_ext(stem, "json");
    create_parent(&pgm)?;
    fs::write(&pgm, label_map_pgm(map)?.encode())?;
    let legend = LegendFile { schema: LEGEND_SCHEMA.into(), height: map.height, width: map.width, legend: map.legend.clone() };
    write_json(&json, &legend)?;
    Ok(vec![pgm, json])
}

pub fn read_label_map(stem: &Path) -> Result<LabelMap> {
    let pgm = Pgm::decode(&fs::read(with_ext(stem, "pgm"))?)?;
    let legend: LegendFile = read_json(&with_ext(stem, "json"))?;
    Ok(label_map_from_pgm(&pgm, legend.legend))
}

/// Writes `<stem>.pgm`, `<stem>.csv` and `<stem>.json`.
pub fn write_scalar_map(stem: &Path, map: &ScalarMap) -> Result<Vec<PathBuf>> {
    let paths = vec![with_ext(stem, "pgm"), with_ext(stem, "csv"), with_ext(stem, "json")];
    create_parent(&paths[0])?;
    fs::write(&paths[0], scalar_map_pgm(map).encode())?;
    fs::write(&paths[1], scalar_map_csv(map))?;
    write_json(&paths[2], &MapSidecar::of(map))?;
    Ok(paths)
}

/// JSON half of a saved model; `meta` carries shapes and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader<M> {
    pub schema: String,
    pub kind: String,
    pub param_count: usize,
    /// File name of the blob, relative to the header.
    pub blob: String,
    pub meta: M,
}

pub fn encode_blob(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_blob(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Parse { line: 0, message: format!("blob length {} is not a multiple of 8", bytes.len()) });
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

/// Writes `path` (JSON) and a sibling `.bin` blob.
pub fn save_model<M: Serialize>(path: &Path, kind: &str, meta: &M, params: &[f64]) -> Result<Vec<PathBuf>> {
    let blob_path = path.with_extension("bin");
    let blob = blob_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Usage(format!("invalid model path {}", path.display())))?
        .to_string();
    let header = ModelHeader { schema: MODEL_SCHEMA.into(), kind: kind.into(), param_count: params.len(), blob, meta };
    write_json(path, &header)?;
    fs::write(&blob_path, encode_blob(params))?;
    Ok(vec![path.to_path_buf(), blob_path])
}

pub fn load_model<M: DeserializeOwned>(path: &Path, kind: &str) -> Result<(ModelHeader<M>, Vec<f64>)> {
    let header: ModelHeader<M> = read_json(path)?;
    if header.schema != MODEL_SCHEMA {
        return Err(Error::Parse { line: 0, message: format!("unsupported model schema '{}'", header.schema) });
    }
    if header.kind != kind {
        return Err(Error::Usage(format!("{} holds a '{}' model, expected '{kind}'", path.display(), header.kind)));
    }
    let blob_path = path.parent().unwrap_or(Path::new("")).join(&header.blob);
    let params = decode_blob(&fs::read(&blob_path)?)?;
    check_dim(header.param_count, params.len())?;
    Ok((header, params))
}
