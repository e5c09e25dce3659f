//! Pixel-level image quality: PSNR and windowed SSIM.

use crate::data::Image;
use crate::error::{Error, Result};

/// Peak value of 8-bit images.
pub const PEAK_8BIT: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `10·log10(peak² / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("psnr on {} vs {} values", a.len(), b.len())));
    }
    if !(peak > 0.0) {
        return Err(Error::invalid("psnr peak must be positive"));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR of two images on their denormalized 8-bit values.
pub fn psnr_images(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    psnr(&a.to_u8_values(), &b.to_u8_values(), PEAK_8BIT)
}

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Channel-last planes of equal size.
#[derive(Clone, Copy, Debug)]
pub struct Planes<'a> {
    pub data: &'a [f64],
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl<'a> Planes<'a> {
    pub fn new(data: &'a [f64], height: usize, width: usize, channels: usize) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            height,
            width,
            channels,
        })
    }

    fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - mid).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of a `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|t| taps[t] * plane[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|t| taps[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows and all channels, for
/// values with dynamic range `data_range`.
pub fn ssim(a: Planes, b: Planes, data_range: f64) -> Result<f64> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(Error::Shape("ssim inputs differ in size".into()));
    }
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let (h, w) = (a.height, a.width);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..a.channels {
        let x = a.channel(ch);
        let y = b.channel(ch);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
        let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, h, w, &taps));
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM of two images on their denormalized 8-bit values.
pub fn ssim_images(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    let (va, vb) = (a.to_u8_values(), b.to_u8_values());
    let (h, w) = (a.height(), a.width());
    ssim(Planes::new(&va, h, w, 3)?, Planes::new(&vb, h, w, 3)?, PEAK_8BIT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = vec![0.3; 64];
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b: Vec<f64> = a.iter().map(|v| v + 1.0 / 255.0).collect();
        let expected = 20.0 * 255f64.log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - expected).abs() < 1e-9);
        assert!((psnr(&vec![0.0; 16], &vec![1.0; 16], 1.0).unwrap()).abs() < 1e-12);
        assert!(psnr(&a, &b[..10], 1.0).is_err());
    }

    #[test]
    fn ssim_examples() {
        let n = 16 * 16;
        let a = vec![0.5; n];
        fn p(v: &[f64]) -> Planes<'_> {
            Planes::new(v, 16, 16, 1).unwrap()
        }
        assert!((ssim(p(&a), p(&a), 1.0).unwrap() - 1.0).abs() < 1e-12);
        let noisy: Vec<f64> = (0..n)
            .map(|i| 0.5 + if i % 2 == 0 { 1e-4 } else { -1e-4 })
            .collect();
        assert!(ssim(p(&a), p(&noisy), 1.0).unwrap() > 0.99);
        let checker: Vec<f64> = (0..n).map(|i| ((i / 16 + i % 16) % 2) as f64).collect();
        let inverse: Vec<f64> = checker.iter().map(|v| 1.0 - v).collect();
        assert!(ssim(p(&checker), p(&inverse), 1.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = vec![0.0; 100];
        let p = Planes::new(&a, 10, 10, 1).unwrap();
        assert!(ssim(p, p, 1.0).is_err());
    }

    #[test]
    fn gaussian_taps_normalized_and_symmetric() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..11 {
            assert!((t[i] - t[10 - i]).abs() < 1e-15);
        }
    }
}
