use super::{write_png, ClipSeptuplet};
use crate::error::Result;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// A soft-edged square moving at constant velocity over a shaded
/// background.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareSpec {
    pub height: usize,
    pub width: usize,
    pub side: f64,
    /// Top-left corner at frame 0, `(x, y)` in pixels.
    pub start: (f64, f64),
    /// Displacement per frame, `(dx, dy)`.
    pub velocity: (f64, f64),
    pub color: [f64; 3],
    pub background: [f64; 3],
    /// Edge width in pixels of the logistic ramp.
    pub softness: f64,
}

impl Default for SquareSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            side: 12.0,
            start: (4.0, 6.0),
            velocity: (2.0, 1.0),
            color: [0.9, 0.3, 0.2],
            background: [0.15, 0.35, 0.55],
            softness: 1.5,
        }
    }
}

impl SquareSpec {
    pub fn frame(&self, t: usize) -> Tensor {
        let (h, w) = (self.height, self.width);
        let x0 = self.start.0 + self.velocity.0 * t as f64;
        let y0 = self.start.1 + self.velocity.1 * t as f64;
        let ramp = |d: f64| 1.0 / (1.0 + (-d / self.softness).exp());
        let mut data = vec![0.0f32; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let cov = ramp(cx - x0) * ramp(x0 + self.side - cx) * ramp(cy - y0) * ramp(y0 + self.side - cy);
                let shade = 0.1 * (cx / w as f64 - 0.5) + 0.05 * (cy / h as f64 - 0.5);
                for c in 0..3 {
                    let bg = self.background[c] + shade;
                    data[(c * h + y) * w + x] = (bg + cov * (self.color[c] - bg)) as f32;
                }
            }
        }
        Tensor::new(&[3, h, w], data).expect("sized buffer")
    }
}

/// Seven consecutive frames of `spec`.
pub fn moving_square_clip(spec: &SquareSpec) -> ClipSeptuplet {
    let gt = (0..super::CLIP_LEN).map(|t| spec.frame(t)).collect();
    let mut clip = ClipSeptuplet::new("synthetic/square", gt).expect("seven equal frames");
    clip.video = "synthetic".into();
    clip
}

/// Writes `videos` directories of `frames` numbered PNG frames each under
/// `dir`. The first and last frame of every video are all black, and the
/// content mixes a moving square with per-video texture so sharpness varies.
pub fn write_synthetic_corpus(dir: &Path, videos: usize, frames: usize, h: usize, w: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in 0..videos {
        let spec = SquareSpec {
            height: h,
            width: w,
            side: rng.random_range(0.2..0.4) * h.min(w) as f64,
            start: (rng.random_range(0.0..w as f64 / 2.0), rng.random_range(0.0..h as f64 / 2.0)),
            velocity: (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            color: [rng.random(), rng.random(), rng.random()],
            background: [rng.random_range(0.1..0.6), rng.random_range(0.1..0.6), rng.random_range(0.1..0.6)],
            softness: rng.random_range(0.3..2.0),
        };
        let texture = rng.random_range(0.0..0.15);
        let noise: Vec<f32> = (0..3 * h * w).map(|_| rng.random_range(-1.0..1.0) * texture).collect();
        let vdir = dir.join(format!("video{v:03}"));
        for t in 0..frames {
            let frame = if t == 0 || t + 1 == frames {
                Tensor::zeros(&[3, h, w])
            } else {
                let f = spec.frame(t);
                Tensor::new(f.shape(), f.data().iter().zip(&noise).map(|(a, b)| a + b).collect())?
            };
            write_png(&vdir.join(format!("frame_{:05}.png", t + 1)), &frame)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_moves_and_stays_in_range() {
        let spec = SquareSpec::default();
        let clip = moving_square_clip(&spec);
        assert_eq!(clip.gt.len(), 7);
        assert_ne!(clip.gt[0], clip.gt[1]);
        for f in &clip.gt {
            assert!(f.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
