use super::{
    clip_extract, degrade, quantile_thresholds, read_png, sharpness, stratify, write_png, ClipSeptuplet, Tier,
    CLIP_LEN,
};
use crate::error::{Error, Result};
use crate::par;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareConfig {
    /// Spatial downscale factor of the stored inputs.
    pub scale: usize,
    /// Every `test_every`-th clip goes to the test list; 0 keeps all for
    /// training.
    pub test_every: usize,
    /// Target `(high, medium, low)` tier proportions.
    pub tier_proportions: [f64; 3],
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            scale: 2,
            test_every: 10,
            tier_proportions: [5120.0, 3150.0, 3140.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepareSummary {
    pub videos: usize,
    pub clips: usize,
    pub train: usize,
    pub test: usize,
    pub tiers: [usize; 3],
}

fn video_dirs(input: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        dirs.push(input.to_path_buf());
    }
    Ok(dirs)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Builds the clip tree under `out`:
///
/// * `sequences/<video>/<clip>/im1.png .. im7.png` ground truth,
/// * `lr_x<s>/<video>/<clip>/im1.png .. im4.png` degraded inputs,
/// * `sep_trainlist.txt`, `sep_testlist.txt` with one clip id per line,
/// * `tiers.csv` with each clip's sharpness score and tier.
///
/// `input` holds one directory of numbered frames per video, or is itself
/// a single video directory.
pub fn prepare(input: &Path, out: &Path, cfg: &PrepareConfig) -> Result<PrepareSummary> {
    let dirs = video_dirs(input)?;
    let per_video = par::map_indexed(dirs.len(), |i| clip_extract(&dirs[i]));
    let mut clips: Vec<ClipSeptuplet> = Vec::new();
    for r in per_video {
        clips.extend(r?);
    }
    let written = par::map_indexed(clips.len(), |i| -> Result<f64> {
        let mut clip = clips[i].clone();
        degrade(&mut clip, cfg.scale)?;
        for (k, f) in clip.gt.iter().enumerate() {
            write_png(&out.join("sequences").join(&clip.id).join(format!("im{}.png", k + 1)), f)?;
        }
        for (k, f) in clip.lr.iter().enumerate() {
            let dir = out.join(format!("lr_x{}", cfg.scale)).join(&clip.id);
            write_png(&dir.join(format!("im{}.png", k + 1)), f)?;
        }
        Ok(sharpness(&clip))
    });
    let scores = written.into_iter().collect::<Result<Vec<f64>>>()?;

    let (mut train, mut test) = (String::new(), String::new());
    let (mut n_train, mut n_test) = (0, 0);
    for (i, c) in clips.iter().enumerate() {
        if cfg.test_every > 0 && (i + 1) % cfg.test_every == 0 {
            test.push_str(&c.id);
            test.push('\n');
            n_test += 1;
        } else {
            train.push_str(&c.id);
            train.push('\n');
            n_train += 1;
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("sep_trainlist.txt"), &train)?;
    write_text(&out.join("sep_testlist.txt"), &test)?;

    let named: Vec<(String, f64)> = clips.iter().map(|c| c.id.clone()).zip(scores.iter().copied()).collect();
    let tiers = stratify(&named, quantile_thresholds(&scores, cfg.tier_proportions));
    write_text(&out.join("tiers.csv"), &tiers.to_csv())?;

    Ok(PrepareSummary {
        videos: dirs.len(),
        clips: clips.len(),
        train: n_train,
        test: n_test,
        tiers: Tier::ALL.map(|t| tiers.count(t)),
    })
}

/// Clip ids listed in a manifest, one per non-empty line.
pub fn load_manifest(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// Reads `root/sequences/<id>/im1..7.png`, filling `lr` when `scale` is
/// given.
pub fn load_clip(root: &Path, id: &str, scale: Option<usize>) -> Result<ClipSeptuplet> {
    let dir = root.join("sequences").join(id);
    let gt = (1..=CLIP_LEN)
        .map(|k| read_png(&dir.join(format!("im{k}.png"))))
        .collect::<Result<Vec<_>>>()?;
    let mut clip = ClipSeptuplet::new(id, gt)?;
    if let Some((video, _)) = id.split_once('/') {
        clip.video = video.to_string();
    }
    if let Some(s) = scale {
        degrade(&mut clip, s)?;
    }
    Ok(clip)
}
