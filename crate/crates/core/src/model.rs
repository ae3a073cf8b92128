//! The full space-time super-resolution network.

use crate::error::{Error, Result};
use crate::nn::{Builder, FeatureExtractor, GfmSynth, Msmm, NetConfig, ParamStore, Params, Reconstruct, Tfe};
use crate::tensor::{Scalar, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub net: NetConfig,
    /// Spatial upsampling factor `s`.
    pub scale: usize,
    /// Number of low-frame-rate inputs `n + 1`.
    pub inputs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            scale: 2,
            inputs: 4,
        }
    }
}

impl ModelConfig {
    /// Output frame count `2n + 1`.
    pub fn outputs(&self) -> usize {
        2 * self.inputs - 1
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.scale != 2 && self.scale != 4 {
            return Err(Error::Config(format!("scale {} not in {{2, 4}}", self.scale)));
        }
        if self.inputs < 2 {
            return Err(Error::Config("at least two input frames are needed".into()));
        }
        if self.outputs() > self.net.max_frames {
            return Err(Error::Config(format!(
                "{} output frames exceed max_frames {}",
                self.outputs(),
                self.net.max_frames
            )));
        }
        Ok(())
    }

    /// Low-resolution extents must be divisible by this.
    pub fn lr_multiple(&self) -> usize {
        (1usize << (self.net.pyramid_levels - 1)).max(2)
    }
}

#[derive(Clone, Debug)]
pub struct MambaOvsr {
    cfg: ModelConfig,
    extract: FeatureExtractor,
    gfm: GfmSynth,
    tfe: Tfe,
    msmm: Msmm,
    recon: Reconstruct,
}

impl MambaOvsr {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let net = &cfg.net;
        Ok(Self {
            cfg: cfg.clone(),
            extract: FeatureExtractor::new(&mut b.sub("extract"), net)?,
            gfm: GfmSynth::new(&mut b.sub("gfm"), net)?,
            tfe: Tfe::new(&mut b.sub("tfe"), net)?,
            msmm: Msmm::new(&mut b.sub("msmm"), net, cfg.outputs())?,
            recon: Reconstruct::new(&mut b.sub("recon"), net, cfg.scale)?,
        })
    }

    /// Builds the network and its freshly initialised parameters.
    pub fn init<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Self::new(&mut Builder::new(&mut store, &mut rng), cfg)?;
        Ok((model, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extract
    }

    pub fn gfm(&self) -> &GfmSynth {
        &self.gfm
    }

    pub fn tfe(&self) -> &Tfe {
        &self.tfe
    }

    pub fn msmm(&self) -> &Msmm {
        &self.msmm
    }

    pub fn reconstruct(&self) -> &Reconstruct {
        &self.recon
    }

    pub fn check_input(&self, shapes: &[Vec<usize>]) -> Result<(usize, usize)> {
        if shapes.len() != self.cfg.inputs {
            return Err(Error::invalid(
                "model",
                format!("expected {} input frames, got {}", self.cfg.inputs, shapes.len()),
            ));
        }
        let first = &shapes[0];
        let m = self.cfg.lr_multiple();
        if first.len() != 3 || first[0] != 3 || !first[1].is_multiple_of(m) || !first[2].is_multiple_of(m) {
            return Err(Error::invalid(
                "model",
                format!("input frames must be [3, H, W] with H, W divisible by {m}, got {first:?}"),
            ));
        }
        if let Some(s) = shapes.iter().find(|s| *s != first) {
            return Err(Error::ShapeMismatch {
                op: "model",
                expected: first.clone(),
                got: s.clone(),
            });
        }
        Ok((first[1], first[2]))
    }

    /// Low-resolution features `F^L` at even output positions.
    pub fn features<'t, T: Scalar>(&self, p: &Params<'t, T>, lr: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        lr.iter().map(|f| self.extract.forward(p, f)).collect()
    }

    /// Complete feature sequence after synthesis and refinement.
    pub fn synthesize<'t, T: Scalar>(&self, p: &Params<'t, T>, feats: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        let mut seq = Vec::with_capacity(2 * feats.len() - 1);
        for pair in feats.windows(2) {
            let mid = self.gfm.forward(p, &pair[0], &pair[1])?;
            let mid = self.tfe.forward(p, &pair[0], &mid, &pair[1])?;
            seq.push(pair[0]);
            seq.push(mid);
        }
        seq.push(*feats.last().expect("non-empty"));
        Ok(seq)
    }

    /// `n + 1` frames `[3, H, W]` to `2n + 1` frames `[3, sH, sW]`.
    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, lr: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        self.check_input(&lr.iter().map(Var::shape).collect::<Vec<_>>())?;
        let feats = self.features(p, lr)?;
        let seq = self.synthesize(p, &feats)?;
        let enhanced = self.msmm.forward(p, &seq)?;
        enhanced.iter().map(|f| self.recon.forward(p, f)).collect()
    }
}
