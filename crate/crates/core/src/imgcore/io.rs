//! PGM (binary P5) and grayscale PNG reading. Resolution never comes from the
//! file; callers pass it in from the corpus manifest.

use std::fs;
use std::path::Path;

use super::FingerprintImage;
use crate::error::{Error, Result};

pub fn encode_pgm(img: &FingerprintImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn decode_pgm(bytes: &[u8], dpi: u32) -> Result<FingerprintImage> {
    let mut pos = 0usize;
    let mut fields: Vec<usize> = Vec::with_capacity(3);
    let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::Format("empty PGM".into()))?;
    if magic != b"P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    while fields.len() < 3 {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| Error::Format("truncated PGM header".into()))?;
        let value = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
        fields.push(value);
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let end = pos + width * height;
    if bytes.len() < end {
        return Err(Error::Format("truncated PGM raster".into()));
    }
    FingerprintImage::new(width, height, bytes[pos..end].to_vec(), dpi)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

pub fn decode_png(bytes: &[u8], dpi: u32) -> Result<FingerprintImage> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?
        .into_luma8();
    let (w, h) = decoded.dimensions();
    FingerprintImage::new(w as usize, h as usize, decoded.into_raw(), dpi)
}

pub fn encode_png(img: &FingerprintImage) -> Result<Vec<u8>> {
    let buffer = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .ok_or_else(|| Error::Format("raster size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buffer
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    Ok(out.into_inner())
}

/// Loads a `.pgm` or `.png` file.
pub fn load_image(path: &Path, dpi: u32) -> Result<FingerprintImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "png" => decode_png(&bytes, dpi),
        _ => decode_pgm(&bytes, dpi),
    }
}

pub fn save_pgm(img: &FingerprintImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
