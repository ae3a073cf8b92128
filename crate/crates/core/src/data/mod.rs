//! Septuplet clip construction: frame I/O, windowing with black-frame
//! rejection, bicubic degradation, high-frequency analysis and quality
//! tiers.

mod clip;
mod degrade;
mod hf;
mod io;
mod prepare;
mod stratify;
mod synth;

pub use clip::{clip_extract, is_black, list_frames, plan_windows, BLACK_THRESHOLD, CLIP_LEN};
pub use degrade::{bicubic_downscale, cubic, degrade, resample_taps, Taps, BICUBIC_A};
pub use hf::{hf_ratio, hf_ratio_with, hf_report, luma, HfReport, HF_RADIUS};
pub use io::{read_png, write_png};
pub use prepare::{load_clip, load_manifest, prepare, PrepareConfig, PrepareSummary};
pub use stratify::{laplacian_variance, quantile_thresholds, sharpness, stratify, Thresholds, Tier, Tiers};
pub use synth::{moving_square_clip, write_synthetic_corpus, SquareSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frame indices (0-based) of a septuplet that feed the network.
pub const INPUT_FRAMES: [usize; 4] = [0, 2, 4, 6];

/// Seven consecutive ground-truth frames and their degraded inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSeptuplet {
    pub id: String,
    /// 7 frames `[3, H, W]` in `[0, 1]`.
    pub gt: Vec<Tensor>,
    /// Frames 0, 2, 4, 6 downscaled, once [`degrade`] has run.
    pub lr: Vec<Tensor>,
    pub video: String,
    /// Index of the first frame within its source video.
    pub start: usize,
}

impl ClipSeptuplet {
    pub fn new(id: impl Into<String>, gt: Vec<Tensor>) -> Result<Self> {
        if gt.len() != CLIP_LEN {
            return Err(Error::invalid("clip", format!("expected {CLIP_LEN} frames, got {}", gt.len())));
        }
        let s = gt[0].shape().to_vec();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::invalid("clip", format!("frames must be [3, H, W], got {s:?}")));
        }
        if let Some(f) = gt.iter().find(|f| f.shape() != s.as_slice()) {
            return Err(Error::ShapeMismatch {
                op: "clip",
                expected: s,
                got: f.shape().to_vec(),
            });
        }
        Ok(Self {
            id: id.into(),
            gt,
            lr: Vec::new(),
            video: String::new(),
            start: 0,
        })
    }

    pub fn height(&self) -> usize {
        self.gt[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.gt[0].shape()[2]
    }
}
