//! Mask selection, quantisation and chain subsampling.

use crate::container::CompressedImage;
use crate::error::{Error, Result};
use crate::field::{InpaintMask, PixelField};

/// How the stored pixels are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Zero crossings of the Laplacian of Gaussian with a gradient threshold.
    Edge,
    /// Floyd–Steinberg dithering of the Laplacian magnitude.
    Dither,
    /// The largest Laplacian magnitudes.
    Threshold,
}

impl Method {
    pub fn tag(self) -> u8 {
        match self {
            Method::Edge => 0,
            Method::Dither => 1,
            Method::Threshold => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Method> {
        match tag {
            0 => Some(Method::Edge),
            1 => Some(Method::Dither),
            2 => Some(Method::Threshold),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Edge => "edge",
            Method::Dither => "dither",
            Method::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub method: Method,
    /// Target fraction of stored pixels (dither and threshold).
    pub density: f64,
    /// Gaussian presmoothing for edge detection, in pixels.
    pub sigma: f64,
    /// Minimal gradient magnitude of a retained edge, in grey levels per pixel.
    pub grad_threshold: f64,
    pub quant_bits: u8,
    /// Keep every `d`-th stored value along the row-major traversal.
    pub subsample_d: u16,
}

impl Default for EncoderParams {
    fn default() -> Self {
        EncoderParams {
            method: Method::Dither,
            density: 0.10,
            sigma: 1.0,
            grad_threshold: 8.0,
            quant_bits: 8,
            subsample_d: 1,
        }
    }
}

impl EncoderParams {
    pub fn validate(&self) -> Result<()> {
        check_density(self.density)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.grad_threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gradient threshold must be >= 0, got {}",
                self.grad_threshold
            )));
        }
        check_bits(self.quant_bits)?;
        if self.subsample_d < 1 {
            return Err(Error::InvalidParameter("subsampling distance must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_density(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("density must lie in (0, 1], got {p}")));
    }
    Ok(())
}

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=8).contains(&bits) {
        return Err(Error::InvalidParameter(format!("quantisation bits must lie in 1..=8, got {bits}")));
    }
    Ok(())
}

/// Half-sample symmetric reflection of an index into `0..n`.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let r = i.rem_euclid(period);
    (if r < n { r } else { period - 1 - r }) as usize
}

/// Channel-summed five-point Laplacian with Neumann boundaries.
fn summed_laplacian(image: &PixelField) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let mut out = vec![0.0; w * h];
    for plane in image.planes() {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let c = plane[i];
                let mut acc = 0.0;
                if x > 0 {
                    acc += plane[i - 1] - c;
                }
                if x + 1 < w {
                    acc += plane[i + 1] - c;
                }
                if y > 0 {
                    acc += plane[i - w] - c;
                }
                if y + 1 < h {
                    acc += plane[i + w] - c;
                }
                out[i] += acc;
            }
        }
    }
    out
}

/// `|Σ_c Δ f_c|` per pixel.
pub fn laplacian_magnitude(image: &PixelField) -> PixelField {
    let mag = summed_laplacian(image).into_iter().map(f64::abs).collect();
    PixelField::from_gray(image.width(), image.height(), mag).expect("same shape")
}

/// Exactly `⌊p·N⌋` pixels of largest magnitude; ties go to the smaller index.
///
/// `p·N` is floored with a `1e-9` allowance so that e.g. `0.29 · 100` keeps 29.
pub fn threshold_mask(magnitude: &PixelField, p: f64) -> Result<InpaintMask> {
    check_density(p)?;
    let values = magnitude.channel(0);
    let n = values.len();
    let k = ((p * n as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut bits = vec![false; n];
    for &i in &order[..k.min(n)] {
        bits[i] = true;
    }
    InpaintMask::from_bits(magnitude.width(), magnitude.height(), bits)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with mirrored boundaries.
pub fn gaussian_smooth(image: &PixelField, sigma: f64) -> PixelField {
    if sigma == 0.0 {
        return image.clone();
    }
    let (w, h) = (image.width(), image.height());
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let mut planes = Vec::with_capacity(image.channels());
    for plane in image.planes() {
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &g)| g * plane[y * w + mirror(x as isize + k as isize - r, w)])
                    .sum();
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &g)| g * tmp[mirror(y as isize + k as isize - r, h) * w + x])
                    .sum();
            }
        }
        planes.push(out);
    }
    PixelField::from_planes(w, h, planes).expect("same shape")
}

/// Gradient magnitude from central differences over all channels.
fn gradient_magnitude(image: &PixelField) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let mut sq = vec![0.0; w * h];
    for plane in image.planes() {
        for y in 0..h {
            for x in 0..w {
                let at = |xx: isize, yy: isize| plane[mirror(yy, h) * w + mirror(xx, w)];
                let (xi, yi) = (x as isize, y as isize);
                let gx = 0.5 * (at(xi + 1, yi) - at(xi - 1, yi));
                let gy = 0.5 * (at(xi, yi + 1) - at(xi, yi - 1));
                sq[y * w + x] += gx * gx + gy * gy;
            }
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Marr–Hildreth edges: a pixel and its right or bottom neighbour are stored
/// when the smoothed Laplacian changes sign between them and the larger of
/// their gradient magnitudes reaches `grad_threshold`.
pub fn marr_hildreth_mask(image: &PixelField, params: &EncoderParams) -> Result<InpaintMask> {
    if !(params.sigma >= 0.0 && params.sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {}", params.sigma)));
    }
    let (w, h) = (image.width(), image.height());
    let smooth = gaussian_smooth(image, params.sigma);
    let lap = summed_laplacian(&smooth);
    let grad = gradient_magnitude(&smooth);
    let mut bits = vec![false; w * h];
    let mut visit = |i: usize, j: usize| {
        if lap[i] * lap[j] < 0.0 && grad[i].max(grad[j]) >= params.grad_threshold {
            bits[i] = true;
            bits[j] = true;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                visit(i, i + 1);
            }
            if y + 1 < h {
                visit(i, i + w);
            }
        }
    }
    InpaintMask::from_bits(w, h, bits)
}

/// Classic raster Floyd–Steinberg on values in `[0, 255]`; `true` marks white.
pub fn floyd_steinberg(values: &[f64], width: usize, height: usize) -> Vec<bool> {
    let mut buf = values.to_vec();
    let mut out = vec![false; buf.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let v = buf[i];
            let white = v >= 127.5;
            out[i] = white;
            let err = v - if white { 255.0 } else { 0.0 };
            if x + 1 < width {
                buf[i + 1] += err * 7.0 / 16.0;
            }
            if y + 1 < height {
                if x > 0 {
                    buf[i + width - 1] += err * 3.0 / 16.0;
                }
                buf[i + width] += err * 5.0 / 16.0;
                if x + 1 < width {
                    buf[i + width + 1] += err * 1.0 / 16.0;
                }
            }
        }
    }
    out
}

/// Scale `s` with `mean(min(s·mag, 255)) = target`, found by bisection.
fn dither_scale(mag: &[f64], target: f64) -> f64 {
    let clamped_mean = |s: f64| mag.iter().map(|&v| (s * v).min(255.0)).sum::<f64>() / mag.len() as f64;
    let mean = mag.iter().sum::<f64>() / mag.len() as f64;
    // Linear scaling undershoots once values clamp, so it is a lower bound.
    let lo0 = target / mean;
    let mut hi = lo0;
    let mut doublings = 0;
    while clamped_mean(hi) < target && doublings < 200 {
        hi *= 2.0;
        doublings += 1;
    }
    if clamped_mean(hi) < target {
        return hi;
    }
    let mut lo = lo0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clamped_mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// The magnitude scaled so that, after clamping to `[0, 255]`, its mean is `p·255`.
pub fn dither_input(magnitude: &PixelField, p: f64) -> Result<Vec<f64>> {
    check_density(p)?;
    let mag = magnitude.channel(0);
    if mag.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSignal(
            "Laplacian magnitude is identically zero (constant image)".into(),
        ));
    }
    let s = dither_scale(mag, p * 255.0);
    Ok(mag.iter().map(|&v| (s * v).clamp(0.0, 255.0)).collect())
}

/// Floyd–Steinberg dithering of the rescaled Laplacian magnitude.
pub fn dither_mask(magnitude: &PixelField, p: f64) -> Result<InpaintMask> {
    let scaled = dither_input(magnitude, p)?;
    let bits = floyd_steinberg(&scaled, magnitude.width(), magnitude.height());
    InpaintMask::from_bits(magnitude.width(), magnitude.height(), bits)
}

/// Mask with the four corner pixels set.
pub fn corner_mask(width: usize, height: usize) -> InpaintMask {
    let mut m = InpaintMask::empty(width, height);
    for i in [0, width - 1, (height - 1) * width, height * width - 1] {
        m.set(i, true);
    }
    m
}

/// Uniform quantiser output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantized {
    pub levels: Vec<u8>,
    /// Inputs outside `[0, 255]` (or NaN) that were clamped.
    pub clamped: usize,
}

fn step(bits: u8) -> f64 {
    255.0 / (1u32 << bits) as f64
}

/// Mid-rise quantiser with `2^bits` cells over `[0, 255]`.
pub fn quantize(values: &[f64], bits: u8) -> Result<Quantized> {
    check_bits(bits)?;
    let delta = step(bits);
    let top = (1u32 << bits) - 1;
    let mut clamped = 0;
    let levels = values
        .iter()
        .map(|&v| {
            let v = if !(0.0..=255.0).contains(&v) {
                clamped += 1;
                if v > 255.0 {
                    255.0
                } else {
                    0.0
                }
            } else {
                v
            };
            ((v / delta).floor() as u32).min(top) as u8
        })
        .collect();
    Ok(Quantized { levels, clamped })
}

/// Cell midpoints `(q + 1/2)·255/2^bits`.
pub fn dequantize(levels: &[u8], bits: u8) -> Result<Vec<f64>> {
    check_bits(bits)?;
    let delta = step(bits);
    let top = (1u32 << bits) - 1;
    levels
        .iter()
        .map(|&q| {
            if q as u32 > top {
                return Err(Error::MalformedContainer(format!("level {q} exceeds {bits}-bit range")));
            }
            Ok((q as f64 + 0.5) * delta)
        })
        .collect()
}

/// Traversal positions kept by chain subsampling: every `d`-th and the last.
pub fn kept_positions(count: usize, d: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    let d = d.max(1);
    let mut kept: Vec<usize> = (0..count).step_by(d).collect();
    if *kept.last().expect("non-empty") != count - 1 {
        kept.push(count - 1);
    }
    kept
}

/// Keeps every `d`-th value along the row-major traversal of stored pixels,
/// plus the last. Returns pixel indices and values.
pub fn subsample_chain<T: Copy>(mask: &InpaintMask, values: &[T], d: usize) -> Result<(Vec<usize>, Vec<T>)> {
    if d < 1 {
        return Err(Error::InvalidParameter("subsampling distance must be >= 1".into()));
    }
    let stored = mask.stored_indices();
    if values.len() != stored.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} stored pixels",
            values.len(),
            stored.len()
        )));
    }
    let kept = kept_positions(stored.len(), d);
    Ok((kept.iter().map(|&k| stored[k]).collect(), kept.iter().map(|&k| values[k]).collect()))
}

/// Reconstructs all stored values from the kept ones by linear interpolation
/// along the traversal order.
pub fn upsample_chain(count: usize, kept: &[f64], d: usize) -> Result<Vec<f64>> {
    let pos = kept_positions(count, d);
    if pos.len() != kept.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} kept values, expected {} for {count} stored pixels with d = {d}",
            kept.len(),
            pos.len()
        )));
    }
    let mut out = vec![0.0; count];
    for (k, pair) in pos.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (kept[k], kept[k + 1]);
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a) {
            let s = (i - a) as f64 / (b - a) as f64;
            *slot = va + s * (vb - va);
        }
    }
    if let (Some(&last), Some(&v)) = (pos.last(), kept.last()) {
        out[last] = v;
    }
    Ok(out)
}

/// Selects the mask for `image` according to `params.method`.
pub fn select_mask(image: &PixelField, params: &EncoderParams) -> Result<InpaintMask> {
    params.validate()?;
    match params.method {
        Method::Edge => marr_hildreth_mask(image, params),
        Method::Dither => dither_mask(&laplacian_magnitude(image), params.density),
        Method::Threshold => threshold_mask(&laplacian_magnitude(image), params.density),
    }
}

/// Side information from [`encode_image`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeStats {
    pub stored: usize,
    pub density: f64,
    /// Stored values outside `[0, 255]` that the quantiser clamped.
    pub clamped: usize,
}

/// Selects a mask, then quantises and subsamples the stored values.
pub fn encode_image(image: &PixelField, params: &EncoderParams) -> Result<(CompressedImage, EncodeStats)> {
    let mask = select_mask(image, params)?;
    encode_with_mask(image, mask, params)
}

/// Quantises and subsamples the values of `image` at the stored pixels of `mask`.
pub fn encode_with_mask(
    image: &PixelField,
    mask: InpaintMask,
    params: &EncoderParams,
) -> Result<(CompressedImage, EncodeStats)> {
    params.validate()?;
    mask.check_shape(image.shape())?;
    if !mask.has_stored() {
        return Err(Error::EmptyMask);
    }
    let channels = u8::try_from(image.channels())
        .map_err(|_| Error::InvalidParameter(format!("{} channels", image.channels())))?;
    let stored = mask.stored_indices();
    let mut clamped = 0;
    let mut payload = Vec::with_capacity(image.channels());
    for plane in image.planes() {
        let values: Vec<f64> = stored.iter().map(|&i| plane[i]).collect();
        let (_, kept) = subsample_chain(&mask, &values, params.subsample_d as usize)?;
        let q = quantize(&kept, params.quant_bits)?;
        clamped += q.clamped;
        payload.push(q.levels);
    }
    let stats = EncodeStats {
        stored: mask.stored_count(),
        density: mask.density(),
        clamped,
    };
    let image = CompressedImage {
        mask,
        channels,
        quant_bits: params.quant_bits,
        subsample_d: params.subsample_d,
        method: params.method,
        payload,
    };
    Ok((image, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, v: Vec<f64>) -> PixelField {
        PixelField::from_gray(w, h, v).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        let c = PixelField::filled(5, 4, 3, 80.0).unwrap();
        assert!(laplacian_magnitude(&c).channel(0).iter().all(|&v| v == 0.0));

        let mut v = vec![0.0; 25];
        v[12] = 255.0;
        let m = laplacian_magnitude(&gray(5, 5, v));
        assert_eq!(m.channel(0)[12], 4.0 * 255.0);
        for j in [7, 11, 13, 17] {
            assert_eq!(m.channel(0)[j], 255.0);
        }

        let ramp = gray(6, 5, (0..30).map(|i| (i % 6) as f64).collect());
        let m = laplacian_magnitude(&ramp);
        for y in 0..5 {
            for x in 1..5 {
                assert_eq!(m.channel(0)[y * 6 + x], 0.0);
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let mag = gray(4, 4, (0..16).map(|i| i as f64).collect());
        assert_eq!(threshold_mask(&mag, 1.0).unwrap().stored_count(), 16);
        let one = threshold_mask(&mag, 1.0 / 16.0).unwrap();
        assert_eq!(one.stored_indices(), vec![15]);
        let flat = gray(4, 4, vec![2.0; 16]);
        assert_eq!(threshold_mask(&flat, 0.25).unwrap().stored_indices(), vec![0, 1, 2, 3]);
        assert!(threshold_mask(&flat, 0.0).is_err());
    }

    fn step_image(w: usize, h: usize, k: usize) -> PixelField {
        gray(w, h, (0..w * h).map(|i| if i % w >= k { 200.0 } else { 20.0 }).collect())
    }

    #[test]
    fn edge_examples() {
        let params = EncoderParams::default();
        let c = PixelField::filled(9, 9, 1, 50.0).unwrap();
        assert_eq!(marr_hildreth_mask(&c, &params).unwrap().stored_count(), 0);

        let (w, h, k) = (16, 10, 7);
        let m = marr_hildreth_mask(&step_image(w, h, k), &params).unwrap();
        assert!(m.stored_count() > 0);
        for i in m.stored_indices() {
            let x = i % w;
            assert!((k - 2..=k + 1).contains(&x), "column {x}");
        }

        let strict = EncoderParams {
            grad_threshold: f64::INFINITY,
            ..params
        };
        assert_eq!(marr_hildreth_mask(&step_image(w, h, k), &strict).unwrap().stored_count(), 0);
    }

    #[test]
    fn dither_examples() {
        let c = gray(8, 8, vec![0.0; 64]);
        assert!(matches!(dither_mask(&c, 0.1), Err(Error::DegenerateSignal(_))));

        let flat = gray(40, 30, vec![3.0; 1200]);
        let m = dither_mask(&flat, 0.5).unwrap();
        assert!((m.density() - 0.5).abs() <= 0.01, "{}", m.density());

        let pos = gray(20, 20, (0..400).map(|i| 1.0 + (i % 7) as f64).collect());
        assert!(dither_mask(&pos, 1.0).unwrap().density() >= 0.99);
    }

    #[test]
    fn dither_scale_hits_target_mean() {
        let mag: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * if i % 13 == 0 { 50.0 } else { 1.0 }).collect();
        let f = gray(50, 20, mag);
        let scaled = dither_input(&f, 0.1).unwrap();
        let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
        assert!((mean - 25.5).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn quantizer_examples() {
        let q = quantize(&[200.0], 1).unwrap();
        assert_eq!(q.levels, vec![1]);
        assert_eq!(dequantize(&q.levels, 1).unwrap(), vec![191.25]);
        for bits in 1..=8 {
            assert_eq!(quantize(&[0.0], bits).unwrap().levels, vec![0]);
        }
        let ints: Vec<f64> = (0..=255).map(|v| v as f64).collect();
        let q8 = quantize(&ints, 8).unwrap();
        assert_eq!(q8.levels, (0..=255).map(|v| v as u8).collect::<Vec<_>>());
        for (v, d) in ints.iter().zip(dequantize(&q8.levels, 8).unwrap()) {
            assert!((v - d).abs() <= 0.5);
            assert_eq!(d.round(), *v);
        }
        let out = quantize(&[-3.0, 300.0, f64::NAN], 4).unwrap();
        assert_eq!(out.clamped, 3);
        assert_eq!(out.levels, vec![0, 15, 0]);
        assert!(quantize(&[1.0], 9).is_err());
        assert!(dequantize(&[16], 4).is_err());
    }

    #[test]
    fn chain_examples() {
        assert_eq!(kept_positions(5, 2), vec![0, 2, 4]);
        assert_eq!(kept_positions(4, 2), vec![0, 2, 3]);
        assert_eq!(kept_positions(1, 3), vec![0]);
        let mask = InpaintMask::full(5, 1);
        let v = [10.0, 20.0, 30.0, 40.0, 50.0];
        let (idx, kept) = subsample_chain(&mask, &v, 2).unwrap();
        assert_eq!(idx, vec![0, 2, 4]);
        assert_eq!(kept, vec![10.0, 30.0, 50.0]);
        assert_eq!(upsample_chain(5, &kept, 2).unwrap(), v.to_vec());

        let mask3 = InpaintMask::full(3, 1);
        let (_, kept) = subsample_chain(&mask3, &[0.0, 100.0, 0.0], 2).unwrap();
        assert_eq!(kept, vec![0.0, 0.0]);
        let up = upsample_chain(3, &kept, 2).unwrap();
        assert_eq!(up, vec![0.0, 0.0, 0.0]);

        let (idx, kept) = subsample_chain(&mask, &v, 1).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert_eq!(upsample_chain(5, &kept, 1).unwrap(), v.to_vec());
    }

    #[test]
    fn corner_mask_has_four_pixels() {
        assert_eq!(corner_mask(5, 4).stored_indices(), vec![0, 4, 15, 19]);
        assert_eq!(corner_mask(1, 1).stored_count(), 1);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in [Method::Edge, Method::Dither, Method::Threshold] {
            assert_eq!(Method::from_tag(m.tag()), Some(m));
        }
        assert_eq!(Method::from_tag(7), None);
    }
}
