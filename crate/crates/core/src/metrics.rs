//! Full-reference image quality: PSNR and SSIM.

use crate::data::luma;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channels PSNR is computed over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PsnrMode {
    /// One MSE over all RGB samples.
    #[default]
    Rgb,
    /// BT.601 luma only.
    Luma,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)` in dB; `+inf` for identical frames.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    psnr_with(a, b, peak, PsnrMode::Rgb)
}

pub fn psnr_with(a: &Tensor, b: &Tensor, peak: f64, mode: PsnrMode) -> Result<f64> {
    same_shape("psnr", a, b)?;
    let (x, y) = match mode {
        PsnrMode::Rgb => (a.to_f64_vec(), b.to_f64_vec()),
        PsnrMode::Luma => (luma(a), luma(b)),
    };
    let mse = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalised separable Gaussian taps of odd length `n`.
fn gaussian(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n / 2) as f64;
    let g: Vec<f64> = (0..n).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM on luma over all fully contained Gaussian windows
/// (11x11, sigma 1.5, peak 1). Frames smaller than 11 pixels use the
/// largest odd window that fits.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("ssim", a, b)?;
    let s = a.shape();
    if s.len() != 3 || s[0] != 3 || s[1] < 8 || s[2] < 8 {
        return Err(Error::invalid("ssim", format!("frames must be [3, >=8, >=8], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let x = luma(a);
    let y = luma(b);
    let mut n = SSIM_WINDOW.min(h).min(w);
    if n % 2 == 0 {
        n -= 1;
    }
    let g = gaussian(n, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - n {
        for left in 0..=w - n {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let wt = g[i] * g[j];
                    let k = (top + i) * w + left + j;
                    let (p, q) = (x[k], y[k]);
                    mx += wt * p;
                    my += wt * q;
                    xx += wt * p * p;
                    yy += wt * q * q;
                    xy += wt * p * q;
                }
            }
            let vx = xx - mx * mx;
            let vy = yy - my * my;
            let cov = xy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_cases() {
        let a = Tensor::full(&[3, 4, 4], 0.5f32);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let z = Tensor::zeros(&[3, 4, 4]);
        let o = Tensor::ones(&[3, 4, 4]);
        assert_eq!(psnr(&z, &o, 1.0).unwrap(), 0.0);
        let b = Tensor::from_fn(&[3, 4, 4], |_| 0.6f32);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&a, &Tensor::zeros(&[3, 4, 5]), 1.0).is_err());
        assert!((psnr_with(&a, &b, 1.0, PsnrMode::Luma).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn ssim_identity_and_size_rules() {
        let a = Tensor::from_fn(&[3, 12, 12], |i| ((i * 31) % 17) as f32 / 17.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&Tensor::zeros(&[3, 7, 12]), &Tensor::zeros(&[3, 7, 12])).is_err());
        let small = Tensor::from_fn(&[3, 8, 9], |i| (i % 5) as f32 / 5.0);
        assert!((ssim(&small, &small).unwrap() - 1.0).abs() < 1e-12);
    }
}
