//! Reconstruction quality.

use crate::error::{Error, Result};
use crate::field::PixelField;

/// Mean squared error over all pixels and channels.
pub fn mse(a: &PixelField, b: &PixelField) -> Result<f64> {
    if a.shape() != b.shape() || a.channels() != b.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let n = a.as_slice().len();
    let sum: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / n as f64)
}

/// `10·log10(255²/mse)`, infinite for identical images.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &PixelField, b: &PixelField) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Six decimals, `inf` for identical images.
pub fn format_psnr(psnr: f64) -> String {
    if psnr.is_infinite() {
        "inf".to_string()
    } else {
        format!("{psnr:.6}")
    }
}
