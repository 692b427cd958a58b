//! Raster ingestion and encoding.
//!
//! Labels and masks are 8-bit single-channel PNGs. Images may be single or
//! three channel. Non-image fields use the flat `FBRT` format: the magic
//! bytes `FBRT`, then `C`, `H`, `W` as little-endian `u32`, then `C*H*W`
//! little-endian `f64` values in channel-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use png::{BitDepth, ColorType};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ChannelField, SoftMask, TernaryLabelMap};

pub const FBRT_MAGIC: &[u8; 4] = b"FBRT";
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Decoded 8-bit raster as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub bytes: Vec<u8>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn decode_err(path: &Path, message: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads an 8-bit PNG with one or three channels.
pub fn read_png(path: &Path) -> Result<GrayRaster> {
    let file = File::open(path).map_err(io_err(path))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
    let (color, depth) = reader.output_color_type();
    if depth != BitDepth::Eight {
        return Err(decode_err(path, format!("expected 8-bit samples, got {depth:?}")));
    }
    let channels = match color {
        ColorType::Grayscale => 1,
        ColorType::Rgb => 3,
        other => {
            return Err(decode_err(
                path,
                format!("unsupported color type {other:?}; expected grayscale or RGB"),
            ))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| decode_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let row = width * channels;
    let mut bytes = Vec::with_capacity(row * height);
    for r in 0..height {
        let start = r * info.line_size;
        bytes.extend_from_slice(&buf[start..start + row]);
    }
    Ok(GrayRaster {
        height,
        width,
        channels,
        bytes,
    })
}

fn read_single_channel(path: &Path) -> Result<GrayRaster> {
    let raster = read_png(path)?;
    if raster.channels != 1 {
        return Err(decode_err(
            path,
            format!("expected a single-channel PNG, got {} channels", raster.channels),
        ));
    }
    Ok(raster)
}

/// Writes 8-bit samples as a grayscale (1 channel) or RGB (3 channel) PNG.
pub fn write_png(path: &Path, raster: &GrayRaster) -> Result<()> {
    let color = match raster.channels {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        n => {
            return Err(Error::InvalidArgument(format!(
                "cannot encode {n}-channel raster as PNG"
            )))
        }
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), raster.width as u32, raster.height as u32);
    encoder.set_color(color);
    encoder.set_depth(BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| decode_err(path, e))?;
    writer
        .write_image_data(&raster.bytes)
        .map_err(|e| decode_err(path, e))?;
    writer.finish().map_err(|e| decode_err(path, e))?;
    Ok(())
}

pub fn load_label_map(path: &Path) -> Result<TernaryLabelMap> {
    let raster = read_single_channel(path)?;
    TernaryLabelMap::from_codes(raster.height, raster.width, &raster.bytes).map_err(|e| match e {
        Error::MalformedLabel { value, row, col, .. } => Error::MalformedLabel {
            value,
            row,
            col,
            path: Some(path.to_path_buf()),
        },
        other => other,
    })
}

pub fn save_label_map(path: &Path, labels: &TernaryLabelMap) -> Result<()> {
    write_png(
        path,
        &GrayRaster {
            height: labels.height(),
            width: labels.width(),
            channels: 1,
            bytes: labels.codes(),
        },
    )
}

/// A mask as loaded from disk: the soft values and their thresholded view.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedMask {
    pub soft: SoftMask,
    pub binary: BinaryMask,
}

pub fn load_mask(path: &Path, threshold: f64) -> Result<LoadedMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "mask threshold {threshold} outside [0, 1]"
        )));
    }
    let raster = read_single_channel(path)?;
    let soft = mask_from_bytes(raster.height, raster.width, &raster.bytes)?;
    let binary = soft.binarize(threshold);
    Ok(LoadedMask { soft, binary })
}

pub fn mask_from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<SoftMask> {
    SoftMask::new(height, width, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
}

/// Inverse of the `pixel / 255` mask encoding.
pub fn mask_to_bytes(mask: &SoftMask) -> Vec<u8> {
    mask.values().iter().map(|&v| (v * 255.0).round() as u8).collect()
}

pub fn save_mask(path: &Path, mask: &SoftMask) -> Result<()> {
    write_png(
        path,
        &GrayRaster {
            height: mask.height(),
            width: mask.width(),
            channels: 1,
            bytes: mask_to_bytes(mask),
        },
    )
}

pub fn save_binary_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    save_mask(path, &SoftMask::from(mask))
}

/// Loads an 8-bit image as a field with values in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ChannelField> {
    let raster = read_png(path)?;
    let (c, h, w) = (raster.channels, raster.height, raster.width);
    // interleaved HWC -> planar CHW
    ChannelField::from_fn(c, h, w, |ch, y, x| {
        f64::from(raster.bytes[(y * w + x) * c + ch]) / 255.0
    })
}

/// Lists `<dir>/<id>.png` files as `(id, path)`, sorted by id.
pub fn list_png_ids(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Loads every label map in a directory, ordered by image id.
pub fn load_label_dir(dir: &Path) -> Result<Vec<(String, TernaryLabelMap)>> {
    list_png_ids(dir)?
        .into_iter()
        .map(|(id, path)| Ok((id, load_label_map(&path)?)))
        .collect()
}

pub fn write_fbrt<W: Write>(mut out: W, field: &ChannelField) -> std::io::Result<()> {
    out.write_all(FBRT_MAGIC)?;
    for dim in [field.channels(), field.height(), field.width()] {
        let dim = u32::try_from(dim)
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
        out.write_all(&dim.to_le_bytes())?;
    }
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

pub fn read_fbrt<R: Read>(mut input: R) -> Result<ChannelField> {
    let src = PathBuf::from("<fbrt>");
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|e| decode_err(&src, format!("truncated header: {e}")))?;
    if &header[..4] != FBRT_MAGIC {
        return Err(decode_err(&src, "bad magic, expected FBRT"));
    }
    let dim = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let n = c
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| decode_err(&src, "dimensions overflow"))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| decode_err(&src, e))?;
    if bytes.len() != n * 8 {
        return Err(decode_err(
            &src,
            format!("expected {} payload bytes, found {}", n * 8, bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ChannelField::new(c, h, w, data)
}

pub fn save_fbrt(path: &Path, field: &ChannelField) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_fbrt(BufWriter::new(file), field).map_err(io_err(path))
}

pub fn load_fbrt(path: &Path) -> Result<ChannelField> {
    let file = File::open(path).map_err(io_err(path))?;
    read_fbrt(BufReader::new(file)).map_err(|e| match e {
        Error::Decode { message, .. } => decode_err(path, message),
        other => other,
    })
}
