//! `ovsr` subcommands. [`cli_dispatch`] maps argv to an exit code.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ovsr_core::data::{hf_report, list_frames, load_clip, load_manifest, prepare, read_png, write_png, PrepareConfig, Tiers};
use ovsr_core::eval::{evaluate, write_reports};
use ovsr_core::gradcheck::{run_all, run_primitives, SuiteConfig};
use ovsr_core::metrics::PsnrMode;
use ovsr_core::train::{infer, train_loop, Checkpoint, TrainConfig};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "ovsr", version, about = "Space-time video super-resolution toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cut a frame corpus into septuplets with degraded inputs, manifests and tiers.
    Prepare(PrepareArgs),
    /// Per-frame high-frequency energy ratio of a directory of frames.
    AnalyzeHf(AnalyzeHfArgs),
    /// Train on the clips listed in `<data>/sep_trainlist.txt`.
    Train(TrainArgs),
    /// Upsample one clip of low-resolution frames with a checkpoint.
    Infer(InferArgs),
    /// Score predicted clips against ground truth.
    Evaluate(EvaluateArgs),
    /// Finite-difference gradient checks of every primitive and block.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Directory of video directories, or a single directory of frames.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Downscale factor of the stored inputs (2 or 4).
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    /// Every n-th clip goes to the test list; 0 keeps all for training.
    #[arg(long, default_value_t = 10)]
    pub test_every: usize,
}

#[derive(Args, Debug)]
pub struct AnalyzeHfArgs {
    /// Directory of PNG frames.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV destination (`frame,ratio`); printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key=value` settings file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Prepared dataset root.
    #[arg(long)]
    pub data: PathBuf,
    /// Receives `loss.csv` and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint; its stored settings win.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Extra `key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory holding the low-resolution input frames in order.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Receives `im1.png .. im<2n+1>.png`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Clip ids, one per line.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report path; `.csv`, `.json` and `_plot.csv` files are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// `tiers.csv` from `prepare`, for per-tier aggregates.
    #[arg(long)]
    pub tiers: Option<PathBuf>,
    /// PSNR on BT.601 luma instead of RGB.
    #[arg(long)]
    pub luma: bool,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random instances per primitive or block.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the composite blocks.
    #[arg(long)]
    pub primitives_only: bool,
}

/// Parses `argv` (program name first) and runs the subcommand. Returns 0 on
/// success; otherwise prints a one-line diagnostic to stderr and returns
/// 2 for usage errors or 1 for failures.
pub fn cli_dispatch<S: AsRef<str>>(argv: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: bad arguments"));
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prepare(a) => cmd_prepare(a),
        Command::AnalyzeHf(a) => cmd_analyze_hf(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    if a.scale != 2 && a.scale != 4 {
        bail!("--scale must be 2 or 4, got {}", a.scale);
    }
    let cfg = PrepareConfig {
        scale: a.scale,
        test_every: a.test_every,
        ..Default::default()
    };
    let s = prepare(&a.input, &a.out, &cfg)?;
    println!(
        "{} videos, {} clips ({} train, {} test), tiers high/medium/low {}/{}/{}",
        s.videos, s.clips, s.train, s.test, s.tiers[0], s.tiers[1], s.tiers[2]
    );
    Ok(())
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_analyze_hf(a: AnalyzeHfArgs) -> Result<()> {
    let paths = list_frames(&a.input)?;
    if paths.is_empty() {
        bail!("no PNG frames in {}", a.input.display());
    }
    let frames = paths
        .iter()
        .map(|p| Ok((file_label(p), read_png(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = hf_report(&frames)?;
    match &a.out {
        Some(out) => {
            std::fs::write(out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            println!("{} frames, mean ratio {:.4}", report.frames.len(), report.mean);
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    let ids = load_manifest(&a.data.join("sep_trainlist.txt"))?;
    if ids.is_empty() {
        bail!("empty training manifest in {}", a.data.display());
    }
    let clips = ids
        .iter()
        .map(|id| load_clip(&a.data, id, None))
        .collect::<ovsr_core::Result<Vec<_>>>()?;
    let s = train_loop(clips, &cfg, &a.out, a.resume.as_deref())?;
    let last = s.last_loss.map_or("-".to_string(), |l| format!("{l:.6}"));
    println!("{} steps, last loss {last}, wrote {}", s.steps, s.checkpoints.last().unwrap().display());
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let paths = list_frames(&a.input)?;
    if paths.is_empty() {
        bail!("no PNG frames in {}", a.input.display());
    }
    let lr = paths.iter().map(|p| read_png(p)).collect::<ovsr_core::Result<Vec<_>>>()?;
    let out = infer(&lr, &ckpt)?;
    for (k, f) in out.iter().enumerate() {
        write_png(&a.out.join(format!("im{}.png", k + 1)), f)?;
    }
    println!("{} inputs -> {} frames in {}", lr.len(), out.len(), a.out.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let ids = load_manifest(&a.manifest)?;
    let tiers = match &a.tiers {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(Tiers::from_csv(&text).with_context(|| format!("malformed tiers file {}", p.display()))?)
        }
        None => None,
    };
    let mode = if a.luma { PsnrMode::Luma } else { PsnrMode::Rgb };
    let reports = evaluate(&a.pred, &a.gt, &ids, tiers.as_ref(), mode);
    let [csv, js, plot] = write_reports(&reports, &a.out)?;
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} clips ({failed} failed); wrote {}, {}, {}",
        reports.len(),
        csv.display(),
        js.display(),
        plot.display()
    );
    if failed > 0 {
        bail!("{failed} of {} clips could not be scored", reports.len());
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let cfg = SuiteConfig {
        instances: a.instances,
        seed: a.seed,
        ..Default::default()
    };
    let reports = if a.primitives_only { run_primitives(&cfg)? } else { run_all(&cfg)? };
    let mut failed = 0;
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{verdict:4} {:32} {:3} instances {:6} coords {:4} kinks  worst rel {:.2e}",
            r.name, r.instances, r.coords, r.kinks, r.worst_rel
        );
        if !r.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} gradient checks failed", reports.len());
    }
    Ok(())
}
