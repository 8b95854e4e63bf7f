//! The `EKD1` container.
//!
//! Layout (little endian):
//!
//! ```text
//! 0   4  magic "EKD1"
//! 4   4  width  u32
//! 8   4  height u32
//! 12  1  channels u8
//! 13  1  quant_bits u8
//! 14  2  subsample_d u16
//! 16  1  method_tag u8
//! 17  …  one raw DEFLATE stream holding
//!          mask bitmap, row-major, MSB first, ⌈W·H/8⌉ bytes, zero padding
//!          per channel: one quantisation level (u8) per kept stored pixel
//! ```

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::encoder::{dequantize, kept_positions, upsample_chain, Method};
use crate::error::{Error, Result};
use crate::field::{InpaintMask, PixelField};

pub const MAGIC: &[u8; 4] = b"EKD1";
pub const HEADER_LEN: usize = 17;
/// Compression level used by [`CompressedImage::to_bytes`].
pub const DEFAULT_LEVEL: u32 = 9;

/// Mask plus quantised stored-pixel data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedImage {
    pub mask: InpaintMask,
    pub channels: u8,
    pub quant_bits: u8,
    pub subsample_d: u16,
    pub method: Method,
    /// Per channel, the levels of the kept stored pixels in row-major order.
    pub payload: Vec<Vec<u8>>,
}

impl CompressedImage {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    /// Values per channel implied by the mask and the subsampling distance.
    pub fn kept_count(&self) -> usize {
        kept_positions(self.mask.stored_count(), self.subsample_d as usize).len()
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedContainer(msg));
        if self.width() == 0 || self.height() == 0 {
            return bad("image dimensions must be positive".into());
        }
        if u32::try_from(self.width()).is_err() || u32::try_from(self.height()).is_err() {
            return bad(format!("dimensions {}x{} exceed u32", self.width(), self.height()));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channel count {} is not 1 or 3", self.channels));
        }
        if !(1..=8).contains(&self.quant_bits) {
            return bad(format!("quantisation bits {} outside 1..=8", self.quant_bits));
        }
        if self.subsample_d == 0 {
            return bad("subsampling distance 0".into());
        }
        if self.payload.len() != self.channels as usize {
            return bad(format!("{} payload planes for {} channels", self.payload.len(), self.channels));
        }
        let kept = self.kept_count();
        let top = (1u16 << self.quant_bits) - 1;
        for (c, plane) in self.payload.iter().enumerate() {
            if plane.len() != kept {
                return bad(format!("channel {c} has {} values, expected {kept}", plane.len()));
            }
            if let Some(&q) = plane.iter().find(|&&q| q as u16 > top) {
                return bad(format!("level {q} exceeds {}-bit range", self.quant_bits));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_bytes_with_level(DEFAULT_LEVEL)
    }

    /// Serialises with the given DEFLATE level (0–9).
    pub fn to_bytes_with_level(&self, level: u32) -> Result<Vec<u8>> {
        if !self.mask.has_stored() {
            return Err(Error::EmptyMask);
        }
        self.validate()?;
        if level > 9 {
            return Err(Error::InvalidParameter(format!("DEFLATE level {level} outside 0..=9")));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.mask.len() / 8 + 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width() as u32).to_le_bytes());
        out.extend_from_slice(&(self.height() as u32).to_le_bytes());
        out.push(self.channels);
        out.push(self.quant_bits);
        out.extend_from_slice(&self.subsample_d.to_le_bytes());
        out.push(self.method.tag());

        let mut body = pack_bits(self.mask.bits());
        for plane in &self.payload {
            body.extend_from_slice(plane);
        }
        let mut enc = DeflateEncoder::new(out, Compression::new(level));
        enc.write_all(&body)?;
        Ok(enc.finish()?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() {
            return Err(Error::TruncatedStream(format!("{} bytes, no magic", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedStream(format!(
                "header needs {HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let width = u32_at(4) as usize;
        let height = u32_at(8) as usize;
        let channels = bytes[12];
        let quant_bits = bytes[13];
        let subsample_d = u16::from_le_bytes([bytes[14], bytes[15]]);
        let method = Method::from_tag(bytes[16])
            .ok_or_else(|| Error::MalformedContainer(format!("unknown method tag {}", bytes[16])))?;
        if width == 0 || height == 0 {
            return Err(Error::MalformedContainer(format!("dimensions {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::MalformedContainer(format!("channel count {channels}")));
        }
        if !(1..=8).contains(&quant_bits) {
            return Err(Error::MalformedContainer(format!("quantisation bits {quant_bits}")));
        }
        if subsample_d == 0 {
            return Err(Error::MalformedContainer("subsampling distance 0".into()));
        }
        let pixels = width
            .checked_mul(height)
            .ok_or_else(|| Error::MalformedContainer("pixel count overflow".into()))?;

        let compressed = &bytes[HEADER_LEN..];
        let mut dec = DeflateDecoder::new(compressed);
        let mut body = Vec::new();
        let mask_len = pixels.div_ceil(8);
        // Bound the output: a valid body never exceeds the mask plus one byte per pixel and channel.
        let limit = (mask_len + pixels * channels as usize + 1) as u64;
        (&mut dec).take(limit).read_to_end(&mut body).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::TruncatedStream(e.to_string()),
            _ => Error::InflateError(e.to_string()),
        })?;
        if (dec.total_in() as usize) < compressed.len() {
            return Err(Error::MalformedContainer(format!(
                "{} bytes after the compressed stream",
                compressed.len() - dec.total_in() as usize
            )));
        }
        if body.len() < mask_len {
            return Err(Error::TruncatedStream(format!(
                "mask bitmap needs {mask_len} bytes, stream holds {}",
                body.len()
            )));
        }
        let bits = unpack_bits(&body[..mask_len], pixels)?;
        let mask = InpaintMask::from_bits(width, height, bits)?;
        if !mask.has_stored() {
            return Err(Error::EmptyMask);
        }
        let kept = kept_positions(mask.stored_count(), subsample_d as usize).len();
        let expected = mask_len + kept * channels as usize;
        if body.len() < expected {
            return Err(Error::TruncatedStream(format!(
                "payload needs {expected} bytes, stream holds {}",
                body.len()
            )));
        }
        if body.len() > expected {
            return Err(Error::MalformedContainer(format!(
                "payload has {} bytes, expected {expected}",
                body.len()
            )));
        }
        let payload = body[mask_len..].chunks_exact(kept.max(1)).take(channels as usize).map(<[u8]>::to_vec).collect();
        let image = CompressedImage {
            mask,
            channels,
            quant_bits,
            subsample_d,
            method,
            payload,
        };
        image.validate()?;
        Ok(image)
    }

    /// Dequantised (and upsampled) stored values per channel, in row-major mask order.
    pub fn stored_values(&self) -> Result<Vec<Vec<f64>>> {
        let count = self.mask.stored_count();
        self.payload
            .iter()
            .map(|plane| upsample_chain(count, &dequantize(plane, self.quant_bits)?, self.subsample_d as usize))
            .collect()
    }

    /// The compressed image `b = c∘f`: stored values in place, zeros elsewhere.
    pub fn compressed_field(&self) -> Result<PixelField> {
        let stored = self.mask.stored_indices();
        let planes = self
            .stored_values()?
            .into_iter()
            .map(|values| {
                let mut plane = vec![0.0; self.mask.len()];
                for (&i, v) in stored.iter().zip(values) {
                    plane[i] = v;
                }
                plane
            })
            .collect();
        PixelField::from_planes(self.width(), self.height(), planes)
    }
}

/// Row-major, most significant bit first, zero padded.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        out[i / 8] |= 0x80 >> (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8], count: usize) -> Result<Vec<bool>> {
    if bytes.len() != count.div_ceil(8) {
        return Err(Error::MalformedContainer(format!(
            "{} bitmap bytes for {count} bits",
            bytes.len()
        )));
    }
    let bits: Vec<bool> = (0..count).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
    if count % 8 != 0 {
        let pad_mask = 0xFFu8 >> (count % 8);
        if bytes[bytes.len() - 1] & pad_mask != 0 {
            return Err(Error::MalformedContainer("non-zero bitmap padding".into()));
        }
    }
    Ok(bits)
}

/// `8 · bytes / (W·H)`.
pub fn bits_per_pixel(container_len: usize, width: usize, height: usize) -> f64 {
    8.0 * container_len as f64 / (width * height) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_pixel() -> CompressedImage {
        CompressedImage {
            mask: InpaintMask::full(1, 1),
            channels: 1,
            quant_bits: 8,
            subsample_d: 1,
            method: Method::Threshold,
            payload: vec![vec![0xFF]],
        }
    }

    #[test]
    fn smallest_container() {
        let img = single_pixel();
        let bytes = img.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"EKD1");
        assert_eq!(&bytes[4..17], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 8, 1, 0, 2]);
        let mut body = Vec::new();
        DeflateDecoder::new(&bytes[17..]).read_to_end(&mut body).unwrap();
        assert_eq!(body, vec![0x80, 0xFF]);
        assert_eq!(CompressedImage::from_bytes(&bytes).unwrap(), img);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let img = CompressedImage {
            mask: InpaintMask::empty(3, 3),
            payload: vec![vec![]],
            ..single_pixel()
        };
        assert!(matches!(img.to_bytes(), Err(Error::EmptyMask)));
    }

    #[test]
    fn decode_errors() {
        let bytes = single_pixel().to_bytes().unwrap();
        assert!(matches!(CompressedImage::from_bytes(b"EK"), Err(Error::TruncatedStream(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(CompressedImage::from_bytes(&bad), Err(Error::BadMagic)));
        assert!(matches!(CompressedImage::from_bytes(&bytes[..10]), Err(Error::TruncatedStream(_))));
        assert!(matches!(
            CompressedImage::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedStream(_)) | Err(Error::InflateError(_))
        ));
        let mut junk = bytes[..17].to_vec();
        junk.extend_from_slice(&[0xFF, 0xFF, 0xFF, 0xFF]);
        assert!(matches!(CompressedImage::from_bytes(&junk), Err(Error::InflateError(_))));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(CompressedImage::from_bytes(&trailing), Err(Error::MalformedContainer(_))));
        let mut tag = bytes;
        tag[16] = 9;
        assert!(matches!(CompressedImage::from_bytes(&tag), Err(Error::MalformedContainer(_))));
    }

    #[test]
    fn bitmap_packing() {
        let bits = [true, false, false, false, false, false, false, true, true];
        let packed = pack_bits(&bits);
        assert_eq!(packed, vec![0x81, 0x80]);
        assert_eq!(unpack_bits(&packed, 9).unwrap(), bits.to_vec());
        assert!(unpack_bits(&[0x81, 0x81], 9).is_err());
    }

    #[test]
    fn subsampled_payload_length() {
        let mask = InpaintMask::from_rows(&[&[1, 1, 1], &[1, 0, 1]]).unwrap();
        let img = CompressedImage {
            mask,
            channels: 3,
            quant_bits: 4,
            subsample_d: 2,
            method: Method::Dither,
            payload: vec![vec![1, 2, 3], vec![0, 0, 0], vec![15, 15, 15]],
        };
        assert_eq!(img.kept_count(), 3);
        let back = CompressedImage::from_bytes(&img.to_bytes().unwrap()).unwrap();
        assert_eq!(back, img);
        let field = back.compressed_field().unwrap();
        assert_eq!(field.channel(0)[4], 0.0);
    }

    #[test]
    fn bpp_of_raw_rgb() {
        assert_eq!(bits_per_pixel(3 * 64 * 64 + 0, 64, 64), 24.0);
        assert_eq!(bits_per_pixel(HEADER_LEN, 1, 1), 8.0 * HEADER_LEN as f64);
    }
}
