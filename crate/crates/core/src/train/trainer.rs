use super::{charbonnier_loss, cosine_lr, AdaMax, Checkpoint, TrainConfig};
use crate::data::{bicubic_downscale, ClipSeptuplet};
use crate::error::{Error, Result};
use crate::model::MambaOvsr;
use crate::nn::ParamStore;
use crate::par;
use crate::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

/// One training example: `n + 1` inputs and `2n + 1` targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub lr: Vec<Tensor>,
    pub gt: Vec<Tensor>,
}

/// Mirrors a `[C, H, W]` frame left to right.
pub fn flip_h(x: &Tensor) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    Tensor::from_fn(&[c, h, w], |i| {
        let (r, col) = (i / w, i % w);
        x.data()[r * w + (w - 1 - col)]
    })
}

/// Mirrors a `[C, H, W]` frame top to bottom.
pub fn flip_v(x: &Tensor) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    Tensor::from_fn(&[c, h, w], |i| {
        let (ch, r, col) = (i / (h * w), (i / w) % h, i % w);
        x.data()[(ch * h + (h - 1 - r)) * w + col]
    })
}

/// Rotates a `[C, H, W]` frame by 90 degrees counter-clockwise.
pub fn rot90(x: &Tensor) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    // output is [C, W, H]; out[r][col] = in[col][w - 1 - r]
    Tensor::from_fn(&[c, w, h], |i| {
        let (ch, r, col) = (i / (h * w), (i / h) % w, i % h);
        x.data()[(ch * h + col) * w + (w - 1 - r)]
    })
}

fn crop(x: &Tensor, top: usize, left: usize, side_h: usize, side_w: usize) -> Tensor {
    let (c, w) = (x.shape()[0], x.shape()[2]);
    let h = x.shape()[1];
    Tensor::from_fn(&[c, side_h, side_w], |i| {
        let (ch, r, col) = (i / (side_h * side_w), (i / side_w) % side_h, i % side_w);
        x.data()[(ch * h + top + r) * w + left + col]
    })
}

/// Draws a crop and augmentation of `clip` and degrades its even frames.
pub fn make_sample(clip: &ClipSeptuplet, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let n_out = cfg.model.outputs();
    if clip.gt.len() < n_out {
        return Err(Error::invalid("sample", format!("clip {} has fewer than {n_out} frames", clip.id)));
    }
    let (h, w) = (clip.height(), clip.width());
    let (ch, cw) = if cfg.crop == 0 || cfg.crop > h.min(w) { (h, w) } else { (cfg.crop, cfg.crop) };
    let m = cfg.model.lr_multiple() * cfg.model.scale;
    if ch % m != 0 || cw % m != 0 {
        return Err(Error::invalid("sample", format!("frame {ch}x{cw} not divisible by {m}")));
    }
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    let fh = cfg.flip_h && rng.random::<bool>();
    let fv = cfg.flip_v && rng.random::<bool>();
    let rt = cfg.rot90 && rng.random::<bool>();
    let gt: Vec<Tensor> = clip.gt[..n_out]
        .iter()
        .map(|f| {
            let mut x = crop(f, top, left, ch, cw);
            if fh {
                x = flip_h(&x);
            }
            if fv {
                x = flip_v(&x);
            }
            if rt {
                x = rot90(&x);
            }
            x
        })
        .collect();
    let lr = gt
        .iter()
        .step_by(2)
        .map(|f| bicubic_downscale(f, cfg.model.scale))
        .collect::<Result<_>>()?;
    Ok(Sample { lr, gt })
}

/// Loss of one training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Model, parameters and optimiser advanced one step at a time.
pub struct Trainer {
    cfg: TrainConfig,
    model: MambaOvsr,
    params: ParamStore,
    opt: AdaMax,
    step: usize,
    data: Vec<ClipSeptuplet>,
}

fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64 + 1);
    rng
}

/// Forward pass with frozen parameters; outputs clamped to `[0, 1]`.
pub fn predict(model: &MambaOvsr, params: &ParamStore, lr: &[Tensor]) -> Result<Vec<Tensor>> {
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let inputs: Vec<_> = lr.iter().map(|f| tape.constant(f.clone())).collect();
    let out = model.forward(&p, &inputs)?;
    Ok(out.iter().map(|v| v.value().map(|x| x.clamp(0.0, 1.0))).collect())
}

/// Loss and parameter gradients of one sample.
pub fn sample_gradients(model: &MambaOvsr, params: &ParamStore, s: &Sample) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let p = params.bind(&tape);
    let lr: Vec<_> = s.lr.iter().map(|f| tape.constant(f.clone())).collect();
    let gt: Vec<_> = s.gt.iter().map(|f| tape.constant(f.clone())).collect();
    let pred = model.forward(&p, &lr)?;
    let loss = charbonnier_loss(&pred, &gt)?;
    tape.backward(loss)?;
    Ok((loss.item() as f64, p.grads()))
}

impl Trainer {
    pub fn new(cfg: TrainConfig, data: Vec<ClipSeptuplet>) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::invalid("train", "empty dataset"));
        }
        let (model, params) = MambaOvsr::init(&cfg.model, cfg.seed)?;
        let opt = AdaMax::new(&params, cfg.beta1, cfg.beta2, cfg.eps);
        Ok(Self {
            cfg,
            model,
            params,
            opt,
            step: 0,
            data,
        })
    }

    /// Restores parameters, optimiser moments and step counter.
    pub fn resume(ckpt: &Checkpoint, data: Vec<ClipSeptuplet>) -> Result<Self> {
        let cfg = TrainConfig::from_map_lenient(&ckpt.meta)?;
        let mut t = Self::new(cfg, data)?;
        load_params(&mut t.params, ckpt)?;
        for i in 0..t.params.len() {
            let name = t.params.names()[i].clone();
            for (prefix, dst) in [("optim.m.", &mut t.opt.m), ("optim.u.", &mut t.opt.u)] {
                let v = ckpt
                    .get(&format!("{prefix}{name}"))
                    .ok_or_else(|| Error::Checkpoint(format!("missing optimiser state for {name}")))?;
                if v.shape() != dst[i].shape() {
                    return Err(Error::Checkpoint(format!("optimiser state shape for {name}")));
                }
                dst[i] = v.clone();
            }
        }
        let num = |k: &str| -> Result<u64> {
            ckpt.meta
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing {k}")))
        };
        t.step = num("step")? as usize;
        t.opt.t = num("optim_t")?;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &MambaOvsr {
        &self.model
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn optimizer(&self) -> &AdaMax {
        &self.opt
    }

    /// Steps completed so far.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.total_steps
    }

    /// Samples drawn at step `step`; fixed by the seed and the step.
    pub fn batch(&self, step: usize) -> Result<Vec<Sample>> {
        let mut rng = step_rng(self.cfg.seed, step);
        (0..self.cfg.batch_size)
            .map(|_| {
                let i = rng.random_range(0..self.data.len());
                make_sample(&self.data[i], &self.cfg, &mut rng)
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<StepLog> {
        let step = self.step;
        let lr = cosine_lr(step.min(self.cfg.total_steps), self.cfg.total_steps, self.cfg.lr_init, self.cfg.lr_final)?;
        let batch = self.batch(step)?;
        let results = par::map_indexed(batch.len(), |b| sample_gradients(&self.model, &self.params, &batch[b]));
        let mut loss = 0.0;
        let mut grads: Option<Vec<Tensor>> = None;
        for r in results {
            let (l, g) = r?;
            loss += l;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
            }
        }
        let n = batch.len() as f64;
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(step));
        }
        let grads: Vec<Tensor> = grads
            .expect("non-empty batch")
            .into_iter()
            .map(|g| g.map(|v| (v as f64 / n) as f32))
            .collect();
        self.opt.step(&mut self.params, &grads, lr)?;
        self.step += 1;
        Ok(StepLog { step, lr, loss })
    }

    pub fn predict(&self, lr: &[Tensor]) -> Result<Vec<Tensor>> {
        predict(&self.model, &self.params, lr)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut meta = self.cfg.to_map();
        meta.insert("step".into(), self.step.to_string());
        meta.insert("optim_t".into(), self.opt.t.to_string());
        let names = self.params.names();
        let mut tensors: Vec<(String, Tensor)> = names.iter().cloned().zip(self.params.values().iter().cloned()).collect();
        for (prefix, state) in [("optim.m.", &self.opt.m), ("optim.u.", &self.opt.u)] {
            tensors.extend(names.iter().zip(state).map(|(n, t)| (format!("{prefix}{n}"), t.clone())));
        }
        Checkpoint { meta, tensors }
    }
}

fn load_params(params: &mut ParamStore, ckpt: &Checkpoint) -> Result<()> {
    for i in 0..params.len() {
        let name = params.names()[i].clone();
        let v = ckpt
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
        params.set(&name, v.clone())?;
    }
    Ok(())
}

/// Rebuilds the network stored in `ckpt`.
pub fn load_model(ckpt: &Checkpoint) -> Result<(MambaOvsr, ParamStore)> {
    let cfg = TrainConfig::from_map_lenient(&ckpt.meta)?;
    let (model, mut params) = MambaOvsr::init(&cfg.model, cfg.seed)?;
    load_params(&mut params, ckpt)?;
    Ok((model, params))
}

/// `n + 1` low-resolution frames to `2n + 1` frames with the network in
/// `ckpt`, clamped to `[0, 1]`.
pub fn infer(lr: &[Tensor], ckpt: &Checkpoint) -> Result<Vec<Tensor>> {
    let (model, params) = load_model(ckpt)?;
    predict(&model, &params, lr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    pub last_loss: Option<f64>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains to `cfg.total_steps`, writing `loss.csv` (`step,lr,loss`) and
/// `ckpt_<step>.bin` files under `out`, plus `final.bin`. With `resume`,
/// the configuration, weights and optimiser state come from that
/// checkpoint and rows at or after its step are replaced.
pub fn train_loop(
    data: Vec<ClipSeptuplet>,
    cfg: &TrainConfig,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainSummary> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut trainer = match resume {
        Some(p) => Trainer::resume(&Checkpoint::load(p)?, data)?,
        None => Trainer::new(cfg.clone(), data)?,
    };
    let csv_path = out.join("loss.csv");
    let mut rows = String::from("step,lr,loss\n");
    if resume.is_some() {
        if let Ok(old) = std::fs::read_to_string(&csv_path) {
            for line in old.lines().skip(1) {
                let step: Option<usize> = line.split(',').next().and_then(|s| s.parse().ok());
                if step.is_some_and(|s| s < trainer.step_index()) {
                    rows.push_str(line);
                    rows.push('\n');
                }
            }
        }
    }
    let mut csv = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    csv.write_all(rows.as_bytes()).map_err(|e| Error::io(&csv_path, e))?;
    let mut summary = TrainSummary {
        steps: 0,
        last_loss: None,
        checkpoints: Vec::new(),
    };
    let every = trainer.config().checkpoint_every;
    while !trainer.is_done() {
        let log = trainer.step()?;
        writeln!(csv, "{},{:e},{:.8}", log.step, log.lr, log.loss).map_err(|e| Error::io(&csv_path, e))?;
        log::info!("step {} lr {:.3e} loss {:.6}", log.step, log.lr, log.loss);
        summary.steps += 1;
        summary.last_loss = Some(log.loss);
        if every > 0 && trainer.step_index() % every == 0 {
            let p = out.join(format!("ckpt_{:07}.bin", trainer.step_index()));
            trainer.checkpoint().save(&p)?;
            summary.checkpoints.push(p);
        }
    }
    let p = out.join("final.bin");
    trainer.checkpoint().save(&p)?;
    summary.checkpoints.push(p);
    Ok(summary)
}
