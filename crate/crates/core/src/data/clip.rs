use super::{read_png, ClipSeptuplet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::path::{Path, PathBuf};

/// Frames per clip.
pub const CLIP_LEN: usize = 7;

/// A frame whose maximum luma does not exceed this is treated as black.
pub const BLACK_THRESHOLD: f64 = 16.0 / 255.0;

pub fn is_black(frame: &Tensor) -> bool {
    let s = frame.shape();
    let hw = s[1] * s[2];
    let d = frame.data();
    (0..hw).all(|i| {
        let y = 0.299 * d[i] as f64 + 0.587 * d[hw + i] as f64 + 0.114 * d[2 * hw + i] as f64;
        y <= BLACK_THRESHOLD
    })
}

/// Start indices of the non-overlapping 7-frame windows that contain only
/// usable frames.
pub fn plan_windows(usable: &[bool]) -> Vec<usize> {
    (0..usable.len() / CLIP_LEN)
        .map(|k| k * CLIP_LEN)
        .filter(|&s| usable[s..s + CLIP_LEN].iter().all(|&ok| ok))
        .collect()
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// PNG files of `dir`, ordered by the trailing number in their names.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    frames.sort_by(|a, b| (frame_number(a), a).cmp(&(frame_number(b), b)));
    Ok(frames)
}

/// Cuts one video's numbered frames into septuplets.
///
/// Windows are non-overlapping with stride 7; a window holding an
/// unreadable or all-black frame is skipped whole.
pub fn clip_extract(frame_dir: &Path) -> Result<Vec<ClipSeptuplet>> {
    let video = frame_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let frames = list_frames(frame_dir)?;
    let mut clips = Vec::new();
    'windows: for start in (0..frames.len() / CLIP_LEN).map(|k| k * CLIP_LEN) {
        let mut gt = Vec::with_capacity(CLIP_LEN);
        for path in &frames[start..start + CLIP_LEN] {
            match read_png(path) {
                Ok(f) if is_black(&f) => continue 'windows,
                Ok(f) => gt.push(f),
                Err(e) => {
                    log::warn!("skipping window at frame {}: {e}", start + 1);
                    continue 'windows;
                }
            }
        }
        let mut clip = match ClipSeptuplet::new(format!("{video}/{:04}", start / CLIP_LEN + 1), gt) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("skipping window at frame {}: {e}", start + 1);
                continue;
            }
        };
        clip.video = video.clone();
        clip.start = start;
        clips.push(clip);
    }
    Ok(clips)
}
