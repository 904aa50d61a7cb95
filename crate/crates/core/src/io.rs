//! MetaImage volume files.
//!
//! Supported: three-dimensional, uncompressed, little-endian images with a
//! detached payload (`.mhd` + `.raw`) or an inline one (`.mha`,
//! `ElementDataFile = LOCAL`). Reading a bare `.raw` path looks for a
//! sidecar `.mhd` with the same stem. Payload order is x fastest.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, ScalarVolume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementType {
    UChar,
    Short,
    Float,
    Double,
}

impl ElementType {
    pub fn met_name(self) -> &'static str {
        match self {
            ElementType::UChar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
            ElementType::Float => "MET_FLOAT",
            ElementType::Double => "MET_DOUBLE",
        }
    }

    pub fn from_met_name(name: &str) -> Result<Self> {
        match name {
            "MET_UCHAR" => Ok(ElementType::UChar),
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_FLOAT" => Ok(ElementType::Float),
            "MET_DOUBLE" => Ok(ElementType::Double),
            other => Err(Error::UnsupportedElementType(other.to_string())),
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short => 2,
            ElementType::Float => 4,
            ElementType::Double => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub element_type: ElementType,
    /// `None` for an inline payload.
    pub data_file: Option<String>,
}

/// A parsed file: header plus the raw little-endian payload.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeFile {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl VolumeFile {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.header.dims, self.header.spacing)
    }

    pub fn values(&self) -> Vec<f64> {
        let p = &self.payload;
        match self.header.element_type {
            ElementType::UChar => p.iter().map(|&b| b as f64).collect(),
            ElementType::Short => p
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
                .collect(),
            ElementType::Float => p
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            ElementType::Double => p
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        }
    }
}

fn header_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn is_inline(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("mha"))
}

/// Read and validate a volume file without converting the payload.
pub fn read_volume_file(path: &Path) -> Result<VolumeFile> {
    let header_path = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("raw"))
    {
        let sidecar = path.with_extension("mhd");
        if !sidecar.exists() {
            return Err(header_error(
                path,
                0,
                "raw payload without a sidecar .mhd header",
            ));
        }
        sidecar
    } else {
        path.to_path_buf()
    };
    let bytes = fs::read(&header_path)?;
    let (header, consumed) = parse_header(&header_path, &bytes)?;
    let payload = match &header.data_file {
        None => bytes[consumed..].to_vec(),
        Some(name) => {
            let dir = header_path.parent().unwrap_or(Path::new("."));
            fs::read(dir.join(name))?
        }
    };
    let expected = (header.dims.iter().product::<usize>() * header.element_type.size()) as u64;
    if payload.len() as u64 != expected {
        let payload_path = match &header.data_file {
            None => header_path.clone(),
            Some(name) => header_path.parent().unwrap_or(Path::new(".")).join(name),
        };
        return Err(Error::PayloadSize {
            path: payload_path,
            expected,
            found: payload.len() as u64,
        });
    }
    Ok(VolumeFile { header, payload })
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(Header, usize)> {
    let mut dims = None;
    let mut spacing = [1.0; 3];
    let mut element_type = None;
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |p| offset + p + 1);
        let raw = std::str::from_utf8(&bytes[offset..end])
            .map_err(|_| header_error(path, line_no, "header is not valid text"))?;
        offset = end;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            header_error(
                path,
                line_no,
                format!("expected `key = value`, got {line:?}"),
            )
        })?;
        let (key, value) = (key.trim(), value.trim());
        let numbers = |n: usize| -> Result<Vec<f64>> {
            let parts: Vec<f64> = value
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    header_error(path, line_no, format!("{key}: bad number in {value:?}"))
                })?;
            if parts.len() != n {
                return Err(header_error(
                    path,
                    line_no,
                    format!("{key}: expected {n} values, got {}", parts.len()),
                ));
            }
            Ok(parts)
        };
        let flag = |expected: bool| -> Result<()> {
            let v = value.eq_ignore_ascii_case("true") || value == "1";
            let known = v || value.eq_ignore_ascii_case("false") || value == "0";
            if !known || v != expected {
                return Err(header_error(
                    path,
                    line_no,
                    format!("unsupported {key} = {value}"),
                ));
            }
            Ok(())
        };
        match key {
            "NDims" => {
                if value != "3" {
                    return Err(header_error(
                        path,
                        line_no,
                        format!("NDims must be 3, got {value}"),
                    ));
                }
            }
            "DimSize" => {
                let v = numbers(3)?;
                if v.iter().any(|&d| d < 1.0 || d.fract() != 0.0) {
                    return Err(header_error(
                        path,
                        line_no,
                        "DimSize must be positive integers",
                    ));
                }
                dims = Some([v[0] as usize, v[1] as usize, v[2] as usize]);
            }
            "ElementSpacing" | "ElementSize" => {
                let v = numbers(3)?;
                spacing = [v[0], v[1], v[2]];
            }
            "ElementType" => {
                element_type = Some(ElementType::from_met_name(value)?);
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => flag(false)?,
            "CompressedData" => flag(false)?,
            "BinaryData" => flag(true)?,
            "ElementNumberOfChannels" => {
                if value != "1" {
                    return Err(header_error(
                        path,
                        line_no,
                        "only single-channel images are supported",
                    ));
                }
            }
            "ElementDataFile" => {
                let dims = dims.ok_or_else(|| header_error(path, line_no, "DimSize missing"))?;
                let element_type = element_type
                    .ok_or_else(|| header_error(path, line_no, "ElementType missing"))?;
                Grid::new(dims, spacing).map_err(|e| header_error(path, line_no, e.to_string()))?;
                let data_file = if value == "LOCAL" {
                    None
                } else {
                    Some(value.to_string())
                };
                return Ok((
                    Header {
                        dims,
                        spacing,
                        element_type,
                        data_file,
                    },
                    offset,
                ));
            }
            _ => {}
        }
    }
    Err(header_error(path, line_no, "ElementDataFile missing"))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let file = read_volume_file(path.as_ref())?;
    ScalarVolume::new(file.grid()?, file.values())
}

/// Read a volume as a mask; every non-zero voxel is foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let file = read_volume_file(path.as_ref())?;
    BinaryMask::new(
        file.grid()?,
        file.values().iter().map(|&v| v != 0.0).collect(),
    )
}

fn encode(data: &[f64], element_type: ElementType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() * element_type.size());
    let integral = |i: usize, v: f64, lo: f64, hi: f64| {
        if v.fract() != 0.0 || v < lo || v > hi {
            Err(Error::InvalidArgument(format!(
                "value {v} at voxel {i} is not representable as {}",
                element_type.met_name()
            )))
        } else {
            Ok(v)
        }
    };
    for (i, &v) in data.iter().enumerate() {
        match element_type {
            ElementType::UChar => out.push(integral(i, v, 0.0, 255.0)? as u8),
            ElementType::Short => {
                out.extend_from_slice(&(integral(i, v, -32768.0, 32767.0)? as i16).to_le_bytes())
            }
            ElementType::Float => out.extend_from_slice(&(v as f32).to_le_bytes()),
            ElementType::Double => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

fn header_text(grid: &Grid, element_type: ElementType, data_file: &str) -> String {
    let [nx, ny, nz] = grid.dims();
    let [sx, sy, sz] = grid.spacing();
    format!(
        "ObjectType = Image\n\
         NDims = 3\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         DimSize = {nx} {ny} {nz}\n\
         ElementSpacing = {sx:?} {sy:?} {sz:?}\n\
         ElementType = {}\n\
         ElementDataFile = {data_file}\n",
        element_type.met_name()
    )
}

/// Write `vol` as `.mha` (inline) or `.mhd` + `.raw`, returning every path
/// written. Integer element types reject values they cannot hold exactly;
/// `Float` rounds to single precision.
pub fn write_volume(
    vol: &ScalarVolume,
    path: impl AsRef<Path>,
    element_type: ElementType,
) -> Result<Vec<PathBuf>> {
    write_values(&vol.grid(), vol.data(), path, element_type)
}

/// Like [`write_volume`] for raw values, which may include infinities
/// (e.g. unreached voxels of a distance field).
pub fn write_values(
    grid: &Grid,
    data: &[f64],
    path: impl AsRef<Path>,
    element_type: ElementType,
) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    if data.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values for a grid of {} voxels",
            data.len(),
            grid.len()
        )));
    }
    let payload = encode(data, element_type)?;
    if is_inline(path) {
        let mut bytes = header_text(grid, element_type, "LOCAL").into_bytes();
        bytes.extend_from_slice(&payload);
        fs::write(path, bytes)?;
        return Ok(vec![path.to_path_buf()]);
    }
    let raw = path.with_extension("raw");
    let raw_name = raw
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad output path {}", path.display())))?;
    fs::write(path, header_text(grid, element_type, raw_name))?;
    fs::write(&raw, payload)?;
    Ok(vec![path.to_path_buf(), raw])
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    write_volume(&ScalarVolume::from_mask(mask), path, ElementType::UChar)
}
