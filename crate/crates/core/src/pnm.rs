//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::PixelField;

/// Parses a `P5` or `P6` image into a field with values in `[0, 255]`.
pub fn parse(bytes: &[u8]) -> Result<PixelField> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => {
            return Err(Error::MalformedImage(format!(
                "magic {:?} is not P5 or P6",
                String::from_utf8_lossy(magic)
            )))
        }
    };
    let width = number(bytes, &mut pos, "width")?;
    let height = number(bytes, &mut pos, "height")?;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage(format!("dimensions {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval as u32));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedImage("missing whitespace after header".into())),
    }
    let n = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| Error::MalformedImage("image too large".into()))?;
    let raster = bytes.get(pos..pos + n).ok_or_else(|| {
        Error::MalformedImage(format!("raster needs {n} bytes, got {}", bytes.len().saturating_sub(pos)))
    })?;
    let pixels = width * height;
    let mut planes = vec![vec![0.0; pixels]; channels];
    for (i, px) in raster.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            planes[c][i] = v as f64;
        }
    }
    PixelField::from_planes(width, height, planes)
}

/// Serialises a one- or three-channel field, rounding and clamping to `[0, 255]`.
pub fn serialize(image: &PixelField) -> Result<Vec<u8>> {
    let magic = match image.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidParameter(format!("cannot write {c} channels as PNM"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.reserve(image.pixel_count() * image.channels());
    for i in 0..image.pixel_count() {
        for c in 0..image.channels() {
            out.push(to_byte(image.channel(c)[i]));
        }
    }
    Ok(out)
}

pub fn to_byte(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

pub fn read(path: impl AsRef<Path>) -> Result<PixelField> {
    parse(&std::fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, image: &PixelField) -> Result<()> {
    std::fs::write(path, serialize(image)?)?;
    Ok(())
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while let Some(&b) = bytes.get(*pos) {
        if b == b'#' {
            while bytes.get(*pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedImage("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedImage(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
}
