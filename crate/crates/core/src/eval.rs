//! Clip-level evaluation with all-frame (AVG) and interpolated-frame (VFI)
//! aggregates, and CSV / JSON / plot-table reports.

use crate::data::{read_png, Tier, Tiers};
use crate::error::{Error, Result};
use crate::metrics::{psnr_with, ssim, PsnrMode};
use crate::par;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Whether a frame position was given to the network or synthesized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameRole {
    Input,
    Interpolated,
}

impl FrameRole {
    /// Role of 0-based output position `i`: odd positions are synthesized.
    pub fn of(i: usize) -> Self {
        if i % 2 == 1 {
            FrameRole::Interpolated
        } else {
            FrameRole::Input
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameScore {
    /// 1-based frame number.
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub role: FrameRole,
}

/// Mean PSNR and SSIM over a set of frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub psnr: f64,
    pub ssim: f64,
    pub frames: usize,
}

impl Aggregate {
    pub fn of<'a>(scores: impl IntoIterator<Item = &'a FrameScore>) -> Self {
        let (mut p, mut s, mut n) = (0.0, 0.0, 0);
        for f in scores {
            p += f.psnr;
            s += f.ssim;
            n += 1;
        }
        let d = n.max(1) as f64;
        Aggregate {
            psnr: p / d,
            ssim: s / d,
            frames: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipReport {
    pub clip: String,
    pub tier: Option<Tier>,
    pub frames: Vec<FrameScore>,
    pub error: Option<String>,
}

impl ClipReport {
    pub fn avg(&self) -> Aggregate {
        Aggregate::of(&self.frames)
    }

    pub fn vfi(&self) -> Aggregate {
        Aggregate::of(self.frames.iter().filter(|f| f.role == FrameRole::Interpolated))
    }

    pub fn inputs(&self) -> Aggregate {
        Aggregate::of(self.frames.iter().filter(|f| f.role == FrameRole::Input))
    }
}

/// Scores of a pair of frame lists (prediction, ground truth).
pub fn score_frames(pred: &[crate::Tensor], gt: &[crate::Tensor], mode: PsnrMode) -> Result<Vec<FrameScore>> {
    if pred.len() != gt.len() {
        return Err(Error::invalid("evaluate", format!("{} predicted vs {} target frames", pred.len(), gt.len())));
    }
    pred.iter()
        .zip(gt)
        .enumerate()
        .map(|(i, (p, g))| {
            Ok(FrameScore {
                frame: i + 1,
                psnr: psnr_with(p, g, 1.0, mode)?,
                ssim: ssim(p, g)?,
                role: FrameRole::of(i),
            })
        })
        .collect()
}

fn clip_frames(dir: &Path) -> Result<Vec<crate::Tensor>> {
    let mut frames = Vec::new();
    for k in 1.. {
        let p = dir.join(format!("im{k}.png"));
        if !p.exists() {
            break;
        }
        frames.push(read_png(&p)?);
    }
    if frames.is_empty() {
        return Err(Error::invalid("evaluate", format!("no frames in {}", dir.display())));
    }
    Ok(frames)
}

/// Directory of clip `id` under `root`, also looking below `sequences/`.
fn clip_dir(root: &Path, id: &str) -> PathBuf {
    let direct = root.join(id);
    if direct.is_dir() {
        direct
    } else {
        root.join("sequences").join(id)
    }
}

/// Evaluates every manifest clip, in manifest order. A clip whose frames
/// cannot be read on either side yields a report with `error` set.
pub fn evaluate(pred: &Path, gt: &Path, ids: &[String], tiers: Option<&Tiers>, mode: PsnrMode) -> Vec<ClipReport> {
    par::map_indexed(ids.len(), |i| {
        let id = &ids[i];
        let tier = tiers.and_then(|t| t.tier_of(id));
        let run = || -> Result<Vec<FrameScore>> {
            let g = clip_frames(&clip_dir(gt, id))?;
            let p = clip_frames(&clip_dir(pred, id))?;
            score_frames(&p, &g, mode)
        };
        match run() {
            Ok(frames) => ClipReport {
                clip: id.clone(),
                tier,
                frames,
                error: None,
            },
            Err(e) => ClipReport {
                clip: id.clone(),
                tier,
                frames: Vec::new(),
                error: Some(e.to_string()),
            },
        }
    })
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn tier_label(t: Option<Tier>) -> &'static str {
    t.map_or("-", Tier::label)
}

/// Rows `clip,frame,psnr,ssim,set,tier`. Each frame row is tagged `VFI`
/// when synthesized and `AVG` otherwise; per-clip means follow with frame
/// `mean`. Failed clips get a single row with set `ERROR`.
pub fn to_csv(reports: &[ClipReport]) -> String {
    let mut s = String::from("clip,frame,psnr,ssim,set,tier\n");
    for r in reports {
        let tier = tier_label(r.tier);
        if r.error.is_some() {
            s.push_str(&format!("{},,,,ERROR,{tier}\n", r.clip));
            continue;
        }
        for f in &r.frames {
            let set = if f.role == FrameRole::Interpolated { "VFI" } else { "AVG" };
            s.push_str(&format!("{},{},{},{:.6},{set},{tier}\n", r.clip, f.frame, fmt_psnr(f.psnr), f.ssim));
        }
        for (set, a) in [("AVG", r.avg()), ("VFI", r.vfi())] {
            s.push_str(&format!("{},mean,{},{:.6},{set},{tier}\n", r.clip, fmt_psnr(a.psnr), a.ssim));
        }
    }
    s
}

fn psnr_json(v: f64) -> (Value, bool) {
    if v.is_finite() {
        (json!(v), false)
    } else {
        (Value::Null, true)
    }
}

fn agg_json(a: Aggregate) -> Value {
    let (p, inf) = psnr_json(a.psnr);
    json!({ "psnr": p, "psnr_inf": inf, "ssim": a.ssim, "frames": a.frames })
}

/// Means per tier (and `all`) over the frames of successful clips.
pub fn tier_table(reports: &[ClipReport]) -> BTreeMap<String, (Aggregate, Aggregate, usize)> {
    let mut groups: BTreeMap<String, Vec<&ClipReport>> = BTreeMap::new();
    for r in reports.iter().filter(|r| r.error.is_none()) {
        groups.entry("all".into()).or_default().push(r);
        groups.entry(tier_label(r.tier).into()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| {
            let avg = Aggregate::of(rs.iter().flat_map(|r| &r.frames));
            let vfi = Aggregate::of(
                rs.iter()
                    .flat_map(|r| &r.frames)
                    .filter(|f| f.role == FrameRole::Interpolated),
            );
            (k, (avg, vfi, rs.len()))
        })
        .collect()
}

pub fn to_json(reports: &[ClipReport]) -> Value {
    let clips: Vec<Value> = reports
        .iter()
        .map(|r| {
            let frames: Vec<Value> = r
                .frames
                .iter()
                .map(|f| {
                    let (p, inf) = psnr_json(f.psnr);
                    json!({
                        "frame": f.frame,
                        "psnr": p,
                        "psnr_inf": inf,
                        "ssim": f.ssim,
                        "set": if f.role == FrameRole::Interpolated { "VFI" } else { "AVG" },
                    })
                })
                .collect();
            let mut v = json!({ "clip": r.clip, "tier": tier_label(r.tier), "frames": frames });
            match &r.error {
                Some(e) => v["error"] = json!(e),
                None => {
                    v["avg"] = agg_json(r.avg());
                    v["vfi"] = agg_json(r.vfi());
                }
            }
            v
        })
        .collect();
    let tiers: serde_json::Map<String, Value> = tier_table(reports)
        .into_iter()
        .map(|(k, (avg, vfi, n))| (k, json!({ "clips": n, "avg": agg_json(avg), "vfi": agg_json(vfi) })))
        .collect();
    json!({ "clips": clips, "tiers": tiers, "errors": reports.iter().filter(|r| r.error.is_some()).count() })
}

/// Tab-free table `tier,clips,avg_psnr,avg_ssim,vfi_psnr,vfi_ssim` for
/// external plotting.
pub fn to_plot_table(reports: &[ClipReport]) -> String {
    let mut s = String::from("tier,clips,avg_psnr,avg_ssim,vfi_psnr,vfi_ssim\n");
    for (k, (avg, vfi, n)) in tier_table(reports) {
        s.push_str(&format!(
            "{k},{n},{},{:.6},{},{:.6}\n",
            fmt_psnr(avg.psnr),
            avg.ssim,
            fmt_psnr(vfi.psnr),
            vfi.ssim
        ));
    }
    s
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>_plot.csv` next to `out`
/// (whose extension, if any, is ignored). Returns the three paths.
pub fn write_reports(reports: &[ClipReport], out: &Path) -> Result<[PathBuf; 3]> {
    let stem = out.with_extension("");
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let csv = stem.with_file_name(format!("{name}.csv"));
    let js = stem.with_file_name(format!("{name}.json"));
    let plot = stem.with_file_name(format!("{name}_plot.csv"));
    std::fs::write(&csv, to_csv(reports)).map_err(|e| Error::io(&csv, e))?;
    std::fs::write(&js, serde_json::to_string_pretty(&to_json(reports))?).map_err(|e| Error::io(&js, e))?;
    std::fs::write(&plot, to_plot_table(reports)).map_err(|e| Error::io(&plot, e))?;
    Ok([csv, js, plot])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_png;
    use crate::Tensor;

    fn frames(seed: usize) -> Vec<Tensor> {
        (0..7)
            .map(|t| Tensor::from_fn(&[3, 12, 12], |i| (((i + t) * (7 + seed)) % 23) as f32 / 23.0))
            .collect()
    }

    #[test]
    fn roles_and_weighting() {
        let g = frames(0);
        let p = frames(1);
        let scores = score_frames(&p, &g, PsnrMode::Rgb).unwrap();
        let r = ClipReport {
            clip: "c".into(),
            tier: None,
            frames: scores,
            error: None,
        };
        assert_eq!(r.vfi().frames, 3);
        let combined = (4.0 * r.inputs().psnr + 3.0 * r.vfi().psnr) / 7.0;
        assert!((r.avg().psnr - combined).abs() < 1e-9);
    }

    #[test]
    fn identical_clip_and_missing_clip() {
        let dir = tempfile::tempdir().unwrap();
        for (k, f) in frames(0).iter().enumerate() {
            write_png(&dir.path().join(format!("gt/sequences/v/0001/im{}.png", k + 1)), f).unwrap();
            write_png(&dir.path().join(format!("pred/v/0001/im{}.png", k + 1)), f).unwrap();
        }
        let ids = vec!["v/0001".to_string(), "v/0002".to_string()];
        let reps = evaluate(&dir.path().join("pred"), &dir.path().join("gt"), &ids, None, PsnrMode::Rgb);
        assert!(reps[0].frames.iter().all(|f| f.psnr.is_infinite() && (f.ssim - 1.0).abs() < 1e-9));
        assert!(reps[1].error.is_some());
        let csv = to_csv(&reps);
        assert!(csv.contains("v/0001,1,inf,1.000000,AVG,-"));
        assert!(csv.contains("v/0002,,,,ERROR,-"));
        let js = to_json(&reps);
        assert_eq!(js["clips"][0]["frames"][0]["psnr"], Value::Null);
        assert_eq!(js["clips"][0]["frames"][0]["psnr_inf"], json!(true));
        let paths = write_reports(&reps, &dir.path().join("out/report.csv")).unwrap();
        assert!(paths.iter().all(|p| p.exists()));
    }
}
