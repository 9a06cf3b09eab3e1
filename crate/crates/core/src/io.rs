//! Image file I/O.
//!
//! * PNG: 8-bit or 16-bit, gray or RGB (alpha is dropped) on load; 8-bit on save.
//! * PGM/PPM: binary, 8-bit or 16-bit.
//! * Score maps are stored as 16-bit PGM with `round(score * 65535)`.
//! * Decision and boundary masks are stored as 8-bit PGM with values {0, 255}.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Image, ScoreMap};

/// Sample depth used when writing a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn format_err(path: &Path, message: impl ToString) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn map_image_err(path: &Path, err: image::ImageError) -> Error {
    match err {
        image::ImageError::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => format_err(path, other),
    }
}

/// Loads a PNG or PNM file, scaling intensities to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let dynamic = reader.decode().map_err(|e| map_image_err(path, e))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match dynamic {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLumaA8(_) => {
            let buf = dynamic.into_luma8();
            (1, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(buf) => (1, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageLumaA16(_) => {
            let buf = dynamic.into_luma16();
            (1, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let buf = dynamic.into_rgb16();
            (3, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        other => {
            let buf = other.into_rgb8();
            (3, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        }
    };
    Image::new(h, w, channels, data).map_err(|e| format_err(path, e))
}

fn is_pnm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("pgm" | "ppm" | "pnm")
    )
}

/// Saves at 8-bit depth; the format follows the extension (`.png`, `.pgm`, `.ppm`).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    save_image_with_depth(img, path, BitDepth::Eight)
}

pub fn save_image_with_depth(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    if depth == BitDepth::Sixteen && is_pnm(path) {
        // the pnm encoder only handles 8-bit samples; netpbm 16-bit is big-endian
        let magic = if img.channels() == 1 { "P5" } else { "P6" };
        write!(writer, "{magic}\n{w} {h}\n65535\n").map_err(io_err)?;
        for &v in img.data() {
            writer.write_all(&((v * 65535.0).round() as u16).to_be_bytes()).map_err(io_err)?;
        }
        return writer.flush().map_err(io_err);
    }
    let color = match (img.channels(), depth) {
        (1, BitDepth::Eight) => ExtendedColorType::L8,
        (1, BitDepth::Sixteen) => ExtendedColorType::L16,
        (_, BitDepth::Eight) => ExtendedColorType::Rgb8,
        (_, BitDepth::Sixteen) => ExtendedColorType::Rgb16,
    };
    let bytes: Vec<u8> = match depth {
        BitDepth::Eight => img.data().iter().map(|&v| (v * 255.0).round() as u8).collect(),
        BitDepth::Sixteen => img
            .data()
            .iter()
            .flat_map(|&v| ((v * 65535.0).round() as u16).to_ne_bytes())
            .collect(),
    };
    let result = if is_pnm(path) {
        let subtype = if img.channels() == 1 {
            PnmSubtype::Graymap(SampleEncoding::Binary)
        } else {
            PnmSubtype::Pixmap(SampleEncoding::Binary)
        };
        PnmEncoder::new(writer).with_subtype(subtype).write_image(&bytes, w, h, color)
    } else {
        image::codecs::png::PngEncoder::new(writer).write_image(&bytes, w, h, color)
    };
    result.map_err(|e| map_image_err(path, e))
}

/// Writes a score map as a 16-bit PGM.
pub fn save_score_map(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    let img = Image::from_raw(map.height(), map.width(), 1, map.scores().to_vec());
    save_image_with_depth(&img, path, BitDepth::Sixteen)
}

pub fn load_score_map(path: impl AsRef<Path>) -> Result<ScoreMap> {
    let img = load_image(path)?;
    let gray = crate::raster::to_grayscale(&img)?;
    ScoreMap::new(gray.height(), gray.width(), gray.into_data())
}

/// Writes a binary mask as an 8-bit PGM with values {0, 255}.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_image_with_depth(&mask.to_image(), path, BitDepth::Eight)
}

/// Loads a mask or matte; gray values `>= 0.5` become 1.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    BinaryMask::from_matte(&load_image(path)?)
}
