//! Image quality metrics: PSNR, single-scale SSIM and circular-mask variants.

use crate::image::ImageBuffer;
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// `10 log10(1 / MSE)` for `[0, 1]` images; `+inf` when the images are identical.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_size(b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(psnr_from_mse(mse))
}

pub(crate) fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// SSIM index at every valid window position of one channel, row-major over
/// `(width - 10) x (height - 10)` top-left corners.
fn ssim_map(a: &ImageBuffer, b: &ImageBuffer, channel: usize) -> Vec<f64> {
    let (w, h) = (a.width(), a.height());
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let taps = gaussian_taps();
    let at = |img: &ImageBuffer, x: usize, y: usize| img.data()[3 * (y * w + x) + channel];

    // Horizontal pass over all rows, vertical pass over the result.
    let fields = 5;
    let mut horiz = vec![0.0; fields * ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = [0.0; 5];
            for (k, t) in taps.iter().enumerate() {
                let (p, q) = (at(a, x + k, y), at(b, x + k, y));
                acc[0] += t * p;
                acc[1] += t * q;
                acc[2] += t * p * p;
                acc[3] += t * q * q;
                acc[4] += t * p * q;
            }
            horiz[fields * (y * ow + x)..fields * (y * ow + x) + fields].copy_from_slice(&acc);
        }
    }
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = [0.0; 5];
            for (k, t) in taps.iter().enumerate() {
                let base = fields * ((y + k) * ow + x);
                for f in 0..fields {
                    acc[f] += t * horiz[base + f];
                }
            }
            let [ma, mb, saa, sbb, sab] = acc;
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            out.push(num / den);
        }
    }
    out
}

fn check_ssim_size(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    a.same_size(b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: a.width(),
            height: a.height(),
            window: SSIM_WINDOW,
        });
    }
    Ok(())
}

/// Single-scale SSIM averaged over valid windows and the three channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_ssim_size(a, b)?;
    let total: f64 = (0..3)
        .map(|c| {
            let m = ssim_map(a, b, c);
            m.iter().sum::<f64>() / m.len() as f64
        })
        .sum();
    Ok(total / 3.0)
}

/// Disk centered on the principal point (image center); a pixel belongs to
/// the mask when its center lies strictly inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularMask {
    pub width: usize,
    pub height: usize,
    pub diameter_px: f64,
}

impl CircularMask {
    pub fn new(width: usize, height: usize, diameter_px: f64) -> Self {
        CircularMask {
            width,
            height,
            diameter_px,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.contains_point(x as f64 + 0.5, y as f64 + 0.5)
    }

    fn contains_point(&self, px: f64, py: f64) -> bool {
        let dx = px - self.width as f64 / 2.0;
        let dy = py - self.height as f64 / 2.0;
        let r = self.diameter_px / 2.0;
        dx * dx + dy * dy < r * r
    }

    pub fn count(&self) -> usize {
        (0..self.height)
            .map(|y| (0..self.width).filter(|&x| self.contains(x, y)).count())
            .sum()
    }

    /// Whether every pixel of the SSIM window with top-left corner `(x, y)`
    /// is inside. The disk is convex, so checking the corner pixels suffices.
    pub fn contains_window(&self, x: usize, y: usize) -> bool {
        let e = SSIM_WINDOW - 1;
        self.contains(x, y) && self.contains(x + e, y) && self.contains(x, y + e) && self.contains(x + e, y + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    Ssim,
}

pub fn masked_psnr(a: &ImageBuffer, b: &ImageBuffer, mask: &CircularMask) -> Result<f64> {
    a.same_size(b)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            if mask.contains(x, y) {
                sum += (a.pixel(x, y) - b.pixel(x, y)).norm_squared();
                n += 3;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(psnr_from_mse(sum / n as f64))
}

pub fn masked_ssim(a: &ImageBuffer, b: &ImageBuffer, mask: &CircularMask) -> Result<f64> {
    check_ssim_size(a, b)?;
    let ow = a.width() + 1 - SSIM_WINDOW;
    let oh = a.height() + 1 - SSIM_WINDOW;
    let inside: Vec<bool> = (0..oh)
        .flat_map(|y| (0..ow).map(move |x| (x, y)))
        .map(|(x, y)| mask.contains_window(x, y))
        .collect();
    let n = inside.iter().filter(|v| **v).count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let total: f64 = (0..3)
        .map(|c| {
            let m = ssim_map(a, b, c);
            m.iter().zip(&inside).filter(|(_, i)| **i).map(|(v, _)| v).sum::<f64>() / n as f64
        })
        .sum();
    Ok(total / 3.0)
}

/// A metric restricted to a centered circle of `diameter_px` pixels.
pub fn masked_metric(a: &ImageBuffer, b: &ImageBuffer, diameter_px: f64, metric: Metric) -> Result<f64> {
    let mask = CircularMask::new(a.width(), a.height(), diameter_px);
    match metric {
        Metric::Psnr => masked_psnr(a, b, &mask),
        Metric::Ssim => masked_ssim(a, b, &mask),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    #[test]
    fn psnr_closed_forms() {
        let a = ImageBuffer::filled(4, 3, Vec3::repeat(0.5));
        let b = ImageBuffer::filled(4, 3, Vec3::zeros());
        assert!((psnr(&a, &b).unwrap() - 6.020_599_913_279_624).abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &ImageBuffer::new(3, 4)).is_err());
    }

    #[test]
    fn ssim_identical_and_constant_shift() {
        let a = ImageBuffer::filled(16, 12, Vec3::repeat(0.4));
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = ImageBuffer::filled(16, 12, Vec3::repeat(0.5));
        let expected = (2.0 * 0.4 * 0.5 + SSIM_C1) / (0.16 + 0.25 + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_white_vs_black() {
        let a = ImageBuffer::filled(11, 11, Vec3::repeat(1.0));
        let b = ImageBuffer::new(11, 11);
        let expected = SSIM_C1 / (1.0 + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_size_errors() {
        let small = ImageBuffer::new(10, 20);
        assert!(matches!(ssim(&small, &small), Err(Error::ImageTooSmall { .. })));
        assert!(matches!(ssim(&ImageBuffer::new(11, 11), &ImageBuffer::new(12, 11)), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn taps_sum_to_one() {
        assert!((gaussian_taps().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_mask() {
        let a = ImageBuffer::new(16, 16);
        assert!(matches!(masked_metric(&a, &a, 0.5, Metric::Psnr), Err(Error::EmptyMask)));
        assert!(matches!(masked_metric(&a, &a, 8.0, Metric::Ssim), Err(Error::EmptyMask)));
        assert_eq!(masked_metric(&a, &a, 8.0, Metric::Psnr).unwrap(), f64::INFINITY);
    }

    #[test]
    fn full_coverage_mask_equals_unmasked() {
        let mut a = ImageBuffer::new(20, 20);
        let mut b = ImageBuffer::new(20, 20);
        for y in 0..20 {
            for x in 0..20 {
                a.set_pixel(x, y, Vec3::repeat(((x * 7 + y * 3) % 11) as f64 / 11.0));
                b.set_pixel(x, y, Vec3::repeat(((x * 5 + y * 2) % 13) as f64 / 13.0));
            }
        }
        let d = 2f64.sqrt() * 20.0 + 1.0;
        assert!((masked_metric(&a, &b, d, Metric::Psnr).unwrap() - psnr(&a, &b).unwrap()).abs() < 1e-12);
        assert!((masked_metric(&a, &b, d, Metric::Ssim).unwrap() - ssim(&a, &b).unwrap()).abs() < 1e-12);
    }
}
