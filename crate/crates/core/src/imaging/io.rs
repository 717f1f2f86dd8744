use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use super::{Image, Shape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

/// Reads a PNG or PGM/PPM raster, mapping integer levels linearly onto
/// `[0, 1]`, or a PFM float map, whose values are kept as stored.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if has_extension(path, "pfm") {
        return read_pfm(path);
    }
    let dynamic = image::open(path).map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Unreadable {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let img = match dynamic {
        DynamicImage::ImageLuma8(b) => to_image(w, h, 1, b.as_raw().iter().map(|&v| v as f64 / 255.0)),
        DynamicImage::ImageLuma16(b) => {
            to_image(w, h, 1, b.as_raw().iter().map(|&v| v as f64 / 65535.0))
        }
        DynamicImage::ImageRgb8(b) => to_image(w, h, 3, b.as_raw().iter().map(|&v| v as f64 / 255.0)),
        DynamicImage::ImageRgb16(b) => {
            to_image(w, h, 3, b.as_raw().iter().map(|&v| v as f64 / 65535.0))
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let b = dynamic.into_luma16();
            to_image(w, h, 1, b.as_raw().iter().map(|&v| v as f64 / 65535.0))
        }
        other => {
            let b = other.into_rgb16();
            to_image(w, h, 3, b.as_raw().iter().map(|&v| v as f64 / 65535.0))
        }
    };
    Ok(img)
}

fn to_image(w: usize, h: usize, c: usize, values: impl Iterator<Item = f64>) -> Image {
    Image::new(w, h, c, values.collect()).expect("decoder buffer matches its dimensions")
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

fn has_extension(path: &Path, ext: &str) -> bool {
    extension(path) == ext
}

/// Writes a 1- or 3-channel image; the format follows the file extension
/// (`png`, `pgm`, `ppm`, `pnm`, `pfm`). Integer formats clamp values to
/// `[0, 1]` and round; PFM stores unclamped single-precision values and
/// ignores `depth`.
pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let ext = extension(path);
    let format = match ext.as_str() {
        "png" => image::ImageFormat::Png,
        "pgm" | "ppm" | "pnm" => image::ImageFormat::Pnm,
        "pfm" => return write_pfm(img, path),
        other => return Err(Error::UnsupportedFormat(format!("extension '{other}'"))),
    };
    let Shape { width, height, channels } = img.shape();
    let (w, h) = (width as u32, height as u32);
    let dynamic = match (channels, depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, quantize(img, 255.0)).unwrap(),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, quantize(img, 65535.0)).unwrap(),
        ),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, quantize(img, 255.0)).unwrap(),
        ),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, quantize(img, 65535.0)).unwrap(),
        ),
        (c, _) => return Err(Error::UnsupportedFormat(format!("{c}-channel images"))),
    };
    create_parent(path)?;
    if format == image::ImageFormat::Pnm && depth == BitDepth::Sixteen {
        return write_pnm16(img, path);
    }
    dynamic.save_with_format(path, format).map_err(|e| Error::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Binary PGM/PPM with maxval 65535 (big-endian samples); the image encoder
/// only writes 8-bit pixmaps.
fn write_pnm16(img: &Image, path: &Path) -> Result<()> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut bytes = format!("{magic}\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for v in quantize::<u16>(img, 65535.0) {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(std::fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}

/// Little-endian PFM (negative scale), rows stored bottom to top.
fn write_pfm(img: &Image, path: &Path) -> Result<()> {
    let magic = match img.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::UnsupportedFormat(format!("{c}-channel images"))),
    };
    create_parent(path)?;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut bytes = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for v in &img.data()[y * w * c..(y + 1) * w * c] {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn read_pfm(path: &Path) -> Result<Image> {
    let unreadable = |reason: &str| Error::Unreadable { path: path.to_path_buf(), reason: reason.into() };
    let bytes = std::fs::read(path).map_err(|e| unreadable(&e.to_string()))?;
    // magic, width, height and scale, each followed by one whitespace byte
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(unreadable("truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        pos += 1;
    }
    let c = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(unreadable("not a PFM file")),
    };
    let dim = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| unreadable("bad PFM size"));
    let (w, h) = (dim(&fields[1])?, dim(&fields[2])?);
    let scale: f64 = fields[3].parse().map_err(|_| unreadable("bad PFM scale"))?;
    let body = &bytes[pos..];
    if body.len() != w * h * c * 4 {
        return Err(unreadable("PFM data length does not match its header"));
    }
    let mut data = vec![0.0; w * h * c];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = chunk.try_into().expect("4 bytes");
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, col) = (i / (w * c), i % (w * c));
        data[(h - 1 - row) * w * c + col] = v as f64;
    }
    Image::new(w, h, c, data)
}

fn quantize<T: TryFrom<u32>>(img: &Image, max: f64) -> Vec<T>
where
    T::Error: std::fmt::Debug,
{
    img.data()
        .iter()
        .map(|&v| {
            let q = (v.clamp(0.0, 1.0) * max).round() as u32;
            T::try_from(q).expect("level within range")
        })
        .collect()
}
