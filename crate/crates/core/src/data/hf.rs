use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Radius of the low-frequency disk as a fraction of `min(H, W)`.
pub const HF_RADIUS: f64 = 0.125;

/// BT.601 luma of a `[3, H, W]` frame, row-major `[H * W]`.
pub fn luma(frame: &Tensor) -> Vec<f64> {
    let s = frame.shape();
    let hw = s[1] * s[2];
    let d = frame.data();
    (0..hw)
        .map(|i| 0.299 * d[i] as f64 + 0.587 * d[hw + i] as f64 + 0.114 * d[2 * hw + i] as f64)
        .collect()
}

pub fn hf_ratio(frame: &Tensor) -> Result<f64> {
    hf_ratio_with(frame, HF_RADIUS)
}

/// Share of AC spectral energy of the luma lying outside the disk of
/// radius `rho * min(H, W)` around DC. A frame without AC energy scores 0.
pub fn hf_ratio_with(frame: &Tensor, rho: f64) -> Result<f64> {
    let s = frame.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::invalid("hf_ratio", format!("expected [3, H, W], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    if h * w <= 1 {
        return Err(Error::invalid("hf_ratio", format!("degenerate {h}x{w} frame")));
    }
    let mut buf: Vec<Complex<f64>> = luma(frame).into_iter().map(|v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    let signed = |k: usize, n: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    let cutoff = rho * h.min(w) as f64;
    let (mut ac, mut high) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if x == 0 && y == 0 {
                continue;
            }
            let e = buf[y * w + x].norm_sqr();
            ac += e;
            if signed(y, h).hypot(signed(x, w)) > cutoff {
                high += e;
            }
        }
    }
    // AC energy of a constant frame is pure rounding noise
    let dc = buf[0].norm_sqr();
    if ac <= 1e-20 * dc.max(1.0) {
        return Ok(0.0);
    }
    Ok((high / ac).clamp(0.0, 1.0))
}

/// Per-frame ratios and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct HfReport {
    pub frames: Vec<(String, f64)>,
    pub mean: f64,
}

impl HfReport {
    /// CSV with header `frame,ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,ratio\n");
        for (name, r) in &self.frames {
            s.push_str(&format!("{name},{r:.6}\n"));
        }
        s
    }
}

pub fn hf_report(frames: &[(String, Tensor)]) -> Result<HfReport> {
    let rows = frames
        .iter()
        .map(|(n, f)| Ok((n.clone(), hf_ratio(f)?)))
        .collect::<Result<Vec<_>>>()?;
    let mean = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64
    };
    Ok(HfReport { frames: rows, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor {
        Tensor::from_fn(&[3, h, w], |i| f((i / w) % h, i % w))
    }

    #[test]
    fn constant_and_checkerboard() {
        assert_eq!(hf_ratio(&gray(16, 16, |_, _| 0.4)).unwrap(), 0.0);
        let cb = gray(16, 16, |y, x| ((x + y) % 2) as f32);
        assert!((hf_ratio(&cb).unwrap() - 1.0).abs() < 1e-12);
        assert!(hf_ratio(&Tensor::zeros(&[3, 1, 1])).is_err());
    }

    #[test]
    fn smooth_ramp_is_low_frequency() {
        let ramp = gray(32, 32, |y, x| ((x as f32 / 31.0) * std::f32::consts::PI).sin() * 0.5 + (y as f32) * 0.001);
        assert!(hf_ratio(&ramp).unwrap() < 0.2);
    }

    #[test]
    fn report_csv() {
        let r = hf_report(&[("a".into(), gray(4, 4, |_, _| 0.0))]).unwrap();
        assert_eq!(r.to_csv(), "frame,ratio\na,0.000000\n");
    }
}
