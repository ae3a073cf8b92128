use super::layers::{from_tokens, to_tokens, Conv2d, Conv3d, Linear, Mixer, ResBlock, Ssm};
use super::param::{Builder, Init, ParamId, Params};
use super::NetConfig;
use crate::error::{Error, Result};
use crate::sequencing::{
    add_temporal_embedding, apply_spe, build_spe_with, insert_registers, masm_orders, remove_registers, vim_order,
    FrequencyRule, RegisterLayout, ScanOrder, Slot, TokenPos,
};
use crate::tensor::{ConvGeometry, Scalar, Var};

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op,
            expected: a.to_vec(),
            got: b.to_vec(),
        });
    }
    Ok(())
}

fn spatial(x: &[usize]) -> (usize, usize) {
    (x[x.len() - 2], x[x.len() - 1])
}

/// Shallow feature extractor: a 3x3 conv to `C` channels, then residual
/// blocks.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    head: Conv2d,
    blocks: Vec<ResBlock>,
}

impl FeatureExtractor {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let head = Conv2d::new(&mut b.sub("head"), 3, cfg.channels, 3, false)?;
        let blocks = (0..cfg.res_blocks)
            .map(|i| ResBlock::new(&mut b.sub(&format!("res{i}")), cfg.channels, cfg.zero_init))
            .collect::<Result<_>>()?;
        Ok(Self { head, blocks })
    }

    pub fn head(&self) -> &Conv2d {
        &self.head
    }

    /// `frame: [3, H, W]` to `[C, H, W]`.
    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, frame: &Var<'t, T>) -> Result<Var<'t, T>> {
        let s = frame.shape();
        if s.len() != 3 || s[0] != 3 || s[1] < 8 || s[2] < 8 {
            return Err(Error::invalid("extract_features", format!("need [3, >=8, >=8], got {s:?}")));
        }
        let mut x = self.head.forward(p, frame)?;
        for blk in &self.blocks {
            x = blk.forward(p, &x)?;
        }
        Ok(x)
    }
}

/// One pyramid level of a directional fusion branch.
#[derive(Clone, Debug)]
struct GfmLevel {
    in_proj: Linear,
    scans: Vec<Ssm>,
    out_proj: Linear,
    offset: Linear,
    fuse: Conv2d,
}

impl GfmLevel {
    fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let c = cfg.channels;
        let e = cfg.mixer().inner();
        let scans = (0..4)
            .map(|i| Ssm::new(&mut b.sub(&format!("scan{i}")), e, cfg.state))
            .collect::<Result<_>>()?;
        Ok(Self {
            in_proj: Linear::new(&mut b.sub("in_proj"), c, e, false)?,
            scans,
            out_proj: Linear::new(&mut b.sub("out_proj"), e, c, false)?,
            offset: Linear::new(&mut b.sub("offset"), 2 * c, c, cfg.zero_init)?,
            fuse: Conv2d::new(&mut b.sub("fuse"), 2 * c, c, 3, false)?,
        })
    }

    /// Motion offset between two `[C, h, w]` maps, as `[C, h, w]`.
    fn offset<'t, T: Scalar>(&self, p: &Params<'t, T>, prev: &Var<'t, T>, next: &Var<'t, T>) -> Result<Var<'t, T>> {
        let (h, w) = spatial(&prev.shape());
        let hw = h * w;
        let x = Var::concat(&[to_tokens(prev)?, to_tokens(next)?], 0)?;
        let u = self.in_proj.forward(p, &x)?;
        let orders = masm_orders(h, w)?;
        let mut acc: Option<Var<'t, T>> = None;
        for (order, ssm) in orders.iter().zip(&self.scans) {
            let (y, _) = ssm.forward(p, order.gather(&u)?, None)?;
            let y = order.scatter(&y)?;
            acc = Some(match acc {
                None => y,
                Some(a) => a.add(&y)?,
            });
        }
        let hmix = self.out_proj.forward(p, &acc.expect("four orders"))?;
        let pair = Var::concat(&[hmix.narrow(0, 0, hw)?, hmix.narrow(0, hw, hw)?], 1)?;
        from_tokens(&self.offset.forward(p, &pair)?, h, w)
    }

    fn predict<'t, T: Scalar>(&self, p: &Params<'t, T>, prev: &Var<'t, T>, next: &Var<'t, T>) -> Result<Var<'t, T>> {
        let off = self.offset(p, prev, next)?;
        fuse(&self.fuse, p, &off, next)
    }
}

/// `relu(conv3x3([a; b]))`
fn fuse<'t, T: Scalar>(conv: &Conv2d, p: &Params<'t, T>, a: &Var<'t, T>, b: &Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(conv.forward(p, &Var::concat(&[*a, *b], 0)?)?.relu())
}

/// Multiscale prediction of an intermediate frame from an ordered pair.
#[derive(Clone, Debug)]
pub struct GfmDirection {
    levels: Vec<GfmLevel>,
    merge: Vec<Conv2d>,
}

impl GfmDirection {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let n = cfg.pyramid_levels;
        let levels = (0..n)
            .map(|k| GfmLevel::new(&mut b.sub(&format!("level{k}")), cfg))
            .collect::<Result<_>>()?;
        let merge = (0..n.saturating_sub(1))
            .map(|k| Conv2d::new(&mut b.sub(&format!("merge{k}")), 2 * cfg.channels, cfg.channels, 3, false))
            .collect::<Result<_>>()?;
        Ok(Self { levels, merge })
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    /// Level predictions, finest first.
    pub fn level_predictions<'t, T: Scalar>(
        &self,
        p: &Params<'t, T>,
        prev: &Var<'t, T>,
        next: &Var<'t, T>,
    ) -> Result<Vec<Var<'t, T>>> {
        let ps = prev.shape();
        check_same("gfm_direction", &ps, &next.shape())?;
        let div = 1usize << (self.levels.len() - 1);
        let (h, w) = spatial(&ps);
        if ps.len() != 3 || h % div != 0 || w % div != 0 {
            return Err(Error::invalid(
                "gfm_direction",
                format!("extent {h}x{w} not divisible by {div}"),
            ));
        }
        let (mut a, mut b) = (*prev, *next);
        let mut preds = Vec::with_capacity(self.levels.len());
        for (k, level) in self.levels.iter().enumerate() {
            if k > 0 {
                a = a.avg_pool2()?;
                b = b.avg_pool2()?;
            }
            preds.push(level.predict(p, &a, &b)?);
        }
        Ok(preds)
    }

    /// `prev, next: [C, H, W]` to the level-0 prediction `[C, H, W]`.
    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, prev: &Var<'t, T>, next: &Var<'t, T>) -> Result<Var<'t, T>> {
        let preds = self.level_predictions(p, prev, next)?;
        let mut q = *preds.last().expect("at least one level");
        for k in (0..preds.len() - 1).rev() {
            q = fuse(&self.merge[k], p, &preds[k], &q.upsample_bilinear2x()?)?;
        }
        Ok(q)
    }
}

/// Forward and backward directional predictions blended by a 1x1 conv.
#[derive(Clone, Debug)]
pub struct GfmSynth {
    fwd: GfmDirection,
    bwd: Option<GfmDirection>,
    blend: Conv2d,
}

impl GfmSynth {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let fwd = GfmDirection::new(&mut b.sub("fwd"), cfg)?;
        let bwd = if cfg.tie_gfm_branches {
            None
        } else {
            Some(GfmDirection::new(&mut b.sub("bwd"), cfg)?)
        };
        Ok(Self {
            fwd,
            bwd,
            blend: Conv2d::new(&mut b.sub("blend"), 2 * cfg.channels, cfg.channels, 1, false)?,
        })
    }

    pub fn blend(&self) -> &Conv2d {
        &self.blend
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, prev: &Var<'t, T>, next: &Var<'t, T>) -> Result<Var<'t, T>> {
        let f = self.fwd.forward(p, prev, next)?;
        let b = self.bwd.as_ref().unwrap_or(&self.fwd).forward(p, next, prev)?;
        self.blend.forward(p, &Var::concat(&[f, b], 0)?)
    }
}

/// Temporal refinement of a synthesized frame from its neighbours.
#[derive(Clone, Debug)]
pub struct Tfe {
    motion: Conv3d,
    blend1: Conv2d,
    blend2: Conv2d,
}

impl Tfe {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let c = cfg.channels;
        Ok(Self {
            motion: Conv3d::new(&mut b.sub("motion"), c, c, [3, 3, 3], ConvGeometry::same([3, 3, 3])?)?,
            blend1: Conv2d::new(&mut b.sub("blend1"), 6 * c, c, 3, false)?,
            blend2: Conv2d::new(&mut b.sub("blend2"), c, c, 3, cfg.zero_init)?,
        })
    }

    pub fn forward<'t, T: Scalar>(
        &self,
        p: &Params<'t, T>,
        prev: &Var<'t, T>,
        mid: &Var<'t, T>,
        next: &Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let s = mid.shape();
        check_same("tfe_refine", &s, &prev.shape())?;
        check_same("tfe_refine", &s, &next.shape())?;
        let (c, h, w) = (s[0], s[1], s[2]);
        let trio = Var::stack(&[*prev, *mid, *next], 1)?;
        let off = self
            .motion
            .forward(p, &trio)?
            .relu()
            .permute(&[1, 0, 2, 3])?
            .reshape(&[3 * c, h, w])?;
        let cat = Var::concat(&[off, *prev, *mid, *next], 0)?;
        let r = self.blend2.forward(p, &self.blend1.forward(p, &cat)?.relu())?;
        mid.add(&r)
    }
}

/// Frame index and grid position of one content token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenCoord {
    pub frame: usize,
    pub u: usize,
    pub v: usize,
}

impl TokenCoord {
    /// Coordinates of `frames` stacked `h x w` raster grids.
    pub fn grid(frames: usize, h: usize, w: usize) -> Vec<TokenCoord> {
        (0..frames)
            .flat_map(|frame| (0..h).flat_map(move |u| (0..w).map(move |v| TokenCoord { frame, u, v })))
            .collect()
    }
}

/// Mamba block with removable register tokens, temporal embedding and
/// rotary spatial codes.
#[derive(Clone, Debug)]
pub struct MambaVr {
    mixer: Mixer,
    registers: Option<ParamId>,
    registers_per_frame: usize,
    tpe: ParamId,
    use_spe: bool,
    spe_rule: FrequencyRule,
}

impl MambaVr {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig) -> Result<Self> {
        let c = cfg.channels;
        let n = if cfg.use_registers { cfg.registers_per_frame } else { 0 };
        Ok(Self {
            mixer: Mixer::new(&mut b.sub("mixer"), cfg.mixer(), cfg.zero_init)?,
            registers: if n > 0 {
                Some(b.param("registers", &[n, c], Init::Normal(0.02))?)
            } else {
                None
            },
            registers_per_frame: n,
            tpe: b.param("tpe", &[cfg.max_frames, c], Init::Normal(0.02))?,
            use_spe: cfg.use_spe,
            spe_rule: cfg.spe_rule,
        })
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    /// Register layout used for `frames` frames of `content_len` tokens.
    pub fn layout(&self, content_len: usize, frames: usize) -> RegisterLayout {
        RegisterLayout::new(content_len, self.registers_per_frame * frames)
    }

    /// Runs the block on `tokens: [L, C]` with the given per-token
    /// coordinates. Returns the content outputs and the forward scan's
    /// final state.
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &Params<'t, T>,
        tokens: &Var<'t, T>,
        coords: &[TokenCoord],
        layout: &RegisterLayout,
        h0: Option<Var<'t, T>>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let xs = tokens.shape();
        if xs.len() != 2 || xs[0] != coords.len() {
            return Err(Error::invalid(
                "mambavr_block",
                format!("{} coordinates for tokens {xs:?}", coords.len()),
            ));
        }
        let c = xs[1];
        let aug = match (self.registers, layout.register_count()) {
            (_, 0) => *tokens,
            (Some(r), n) => {
                let rows: Vec<usize> = (0..n).map(|k| k % self.registers_per_frame).collect();
                insert_registers(tokens, layout, &p.get(r).index_rows(&rows)?)?
            }
            (None, _) => return Err(Error::invalid("mambavr_block", "layout has registers but block has none")),
        };
        let slots = if layout.register_count() == 0 {
            (0..coords.len()).map(Slot::Content).collect()
        } else {
            layout.slots()
        };
        let mut frames = Vec::with_capacity(slots.len());
        let mut positions = Vec::with_capacity(slots.len());
        let mut last_frame = coords.first().map_or(0, |t| t.frame);
        for s in &slots {
            match *s {
                Slot::Content(i) => {
                    last_frame = coords[i].frame;
                    frames.push(last_frame);
                    positions.push(TokenPos::At(coords[i].u, coords[i].v));
                }
                Slot::Register(_) => {
                    frames.push(last_frame);
                    positions.push(TokenPos::Register);
                }
            }
        }
        let z = add_temporal_embedding(&aug, &p.get(self.tpe), &frames)?;
        let mixed_in = if self.use_spe {
            let h = coords.iter().map(|t| t.u + 1).max().unwrap_or(1);
            let w = coords.iter().map(|t| t.v + 1).max().unwrap_or(1);
            let spe = build_spe_with(h, w, c, self.spe_rule)?;
            apply_spe(&z, &positions, &spe)?
        } else {
            z
        };
        let (y, state) = self.mixer.forward(p, &mixed_in, h0)?;
        Ok((remove_registers(&z.add(&y)?, layout)?, state))
    }
}

/// Short-term window (size 3, stride 2) that frame `i` of `frames` reads
/// from: the window where it is most central, ties going to the later one.
pub fn window_for_frame(i: usize, frames: usize) -> Result<usize> {
    if frames < 3 || frames.is_multiple_of(2) || i >= frames {
        return Err(Error::invalid(
            "window_for_frame",
            format!("frame {i} of an odd-length sequence of {frames} (>= 3)"),
        ));
    }
    let windows = (frames - 1) / 2;
    Ok(if i % 2 == 1 { i / 2 } else { (i / 2).min(windows - 1) })
}

/// Multiscale alignment: global, short-window and state-guided paths fused
/// per frame through channel attention.
#[derive(Clone, Debug)]
pub struct Msmm {
    frames: usize,
    patch: Conv3d,
    global: MambaVr,
    unembed: Conv2d,
    windows: Vec<MambaVr>,
    vim: Mixer,
    attn1: Linear,
    attn2: Linear,
    proj: Conv2d,
    skip: Conv2d,
}

impl Msmm {
    /// Block for sequences of exactly `frames` (odd, >= 3) frames.
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig, frames: usize) -> Result<Self> {
        window_for_frame(0, frames)?;
        if frames > cfg.max_frames {
            return Err(Error::Config(format!("{frames} frames exceed max_frames {}", cfg.max_frames)));
        }
        let c = cfg.channels;
        let windows = (0..(frames - 1) / 2)
            .map(|j| MambaVr::new(&mut b.sub(&format!("window{j}")), cfg))
            .collect::<Result<_>>()?;
        Ok(Self {
            frames,
            patch: Conv3d::new(&mut b.sub("patch"), c, c, [1, 2, 2], ConvGeometry::new([1, 2, 2], [0, 0, 0]))?,
            global: MambaVr::new(&mut b.sub("global"), cfg)?,
            unembed: Conv2d::new(&mut b.sub("unembed"), c, 4 * c, 1, false)?,
            windows,
            vim: Mixer::new(&mut b.sub("vim"), cfg.mixer(), cfg.zero_init)?,
            attn1: Linear::new(&mut b.sub("attn1"), 3 * c, cfg.attn_hidden, false)?,
            attn2: Linear::new(&mut b.sub("attn2"), cfg.attn_hidden, 3 * c, false)?,
            proj: Conv2d::new(&mut b.sub("proj"), 3 * c, c, 1, cfg.zero_init)?,
            skip: Conv2d::new(&mut b.sub("skip"), c, c, 3, false)?,
        })
    }

    pub fn skip(&self) -> &Conv2d {
        &self.skip
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, seq: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        if seq.len() != self.frames {
            return Err(Error::invalid(
                "msmm_enhance",
                format!("block built for {} frames, got {}", self.frames, seq.len()),
            ));
        }
        let s = seq[0].shape();
        for f in seq {
            check_same("msmm_enhance", &s, &f.shape())?;
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::invalid("msmm_enhance", format!("odd extent {h}x{w}")));
        }
        let t = seq.len();

        // global path on 2x2 spatial patches of the whole sequence
        let video = Var::stack(seq, 1)?;
        let emb = self.patch.forward(p, &video)?;
        let (ph, pw) = (h / 2, w / 2);
        let g_tokens = emb.reshape(&[c, t * ph * pw])?.t()?;
        let coords = TokenCoord::grid(t, ph, pw);
        let layout = self.global.layout(coords.len(), t);
        let (eg, g_state) = self.global.forward(p, &g_tokens, &coords, &layout, None)?;
        let eg_frames = (0..t)
            .map(|i| {
                let f = from_tokens(&eg.narrow(0, i * ph * pw, ph * pw)?, ph, pw)?;
                self.unembed.forward(p, &f)?.pixel_shuffle(2)
            })
            .collect::<Result<Vec<_>>>()?;

        // short-term windows at full resolution
        let hw = h * w;
        let win_coords = TokenCoord::grid(3, h, w);
        let win_out = self
            .windows
            .iter()
            .enumerate()
            .map(|(j, blk)| {
                let toks = Var::concat(
                    &[to_tokens(&seq[2 * j])?, to_tokens(&seq[2 * j + 1])?, to_tokens(&seq[2 * j + 2])?],
                    0,
                )?;
                let layout = blk.layout(3 * hw, 3);
                Ok(blk.forward(p, &toks, &win_coords, &layout, None)?.0)
            })
            .collect::<Result<Vec<_>>>()?;

        let raster: ScanOrder = vim_order(h, w)?;
        let mut out = Vec::with_capacity(t);
        for (i, f) in seq.iter().enumerate() {
            let j = window_for_frame(i, t)?;
            let el = from_tokens(&win_out[j].narrow(0, (i - 2 * j) * hw, hw)?, h, w)?;

            // guided path seeded with the global forward state
            let toks = raster.gather(&to_tokens(f)?)?;
            let (y, _) = self.vim.forward(p, &toks, Some(g_state))?;
            let guided = from_tokens(&raster.scatter(&toks.add(&y)?)?, h, w)?;

            let fe = Var::concat(&[eg_frames[i], el, guided], 0)?;
            let pooled = fe.reshape(&[3 * c, hw])?.mean_axis(1, false).reshape(&[1, 3 * c])?;
            let gate = self
                .attn2
                .forward(p, &self.attn1.forward(p, &pooled)?.relu())?
                .sigmoid()
                .reshape(&[3 * c, 1, 1])?;
            let refined = self.proj.forward(p, &fe.mul(&gate)?)?;
            out.push(self.skip.forward(p, f)?.add(&refined)?);
        }
        Ok(out)
    }
}

/// Residual blocks, sub-pixel upsampling by `s`, and a conv to RGB.
#[derive(Clone, Debug)]
pub struct Reconstruct {
    blocks: Vec<ResBlock>,
    up: Conv2d,
    out: Conv2d,
    scale: usize,
}

impl Reconstruct {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, cfg: &NetConfig, scale: usize) -> Result<Self> {
        if scale != 2 && scale != 4 {
            return Err(Error::invalid("reconstruct", format!("scale {scale} not in {{2, 4}}")));
        }
        let c = cfg.channels;
        let blocks = (0..cfg.res_blocks)
            .map(|i| ResBlock::new(&mut b.sub(&format!("res{i}")), c, cfg.zero_init))
            .collect::<Result<_>>()?;
        Ok(Self {
            blocks,
            up: Conv2d::new(&mut b.sub("up"), c, c * scale * scale, 3, false)?,
            out: Conv2d::new(&mut b.sub("out"), c, 3, 3, false)?,
            scale,
        })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// `[C, H, W]` to `[3, sH, sW]`.
    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let mut y = *x;
        for blk in &self.blocks {
            y = blk.forward(p, &y)?;
        }
        let y = self.up.forward(p, &y)?.pixel_shuffle(self.scale)?;
        self.out.forward(p, &y)
    }
}

#[cfg(test)]
mod tests {
    use super::super::param::ParamStore;
    use super::*;
    use crate::tensor::{Tape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> NetConfig {
        NetConfig {
            channels: 4,
            state: 2,
            pyramid_levels: 2,
            res_blocks: 2,
            registers_per_frame: 2,
            attn_hidden: 3,
            ..NetConfig::default()
        }
    }

    fn build<B>(
        cfg: &NetConfig,
        seed: u64,
        make: impl FnOnce(&mut Builder<'_, f32>, &NetConfig) -> Result<B>,
    ) -> (B, ParamStore<f32>) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = make(&mut Builder::new(&mut store, &mut rng), cfg).unwrap();
        (b, store)
    }

    fn noise(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::gradcheck::randn(&mut rng, shape).cast()
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max)
    }

    #[test]
    fn extractor_on_zero_frame_is_head_bias() {
        let cfg = small();
        let (ex, store) = build(&cfg, 1, FeatureExtractor::new);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let y = ex.forward(&p, &tape.constant(Tensor::zeros(&[3, 8, 8]))).unwrap();
        let bias = store.get(ex.head().b);
        for (i, &v) in y.value().data().iter().enumerate() {
            assert_eq!(v, bias.data()[i / 64]);
        }
        assert!(ex.forward(&p, &tape.constant(Tensor::zeros(&[3, 4, 8]))).is_err());
    }

    #[test]
    fn tfe_starts_as_identity_on_mid() {
        let cfg = small();
        let (tfe, store) = build(&cfg, 2, Tfe::new);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let [a, m, b] = [3, 4, 5].map(|s| tape.constant(noise(&[4, 6, 6], s)));
        let y = tfe.forward(&p, &a, &m, &b).unwrap();
        assert_eq!(*y.value(), *m.value());
    }

    #[test]
    fn msmm_starts_as_skip_conv() {
        let cfg = small();
        let (msmm, store) = build(&cfg, 3, |b, c| Msmm::new(b, c, 5));
        let tape = Tape::new();
        let p = store.bind(&tape);
        let seq: Vec<_> = (0..5).map(|s| tape.constant(noise(&[4, 4, 6], 10 + s))).collect();
        let out = msmm.forward(&p, &seq).unwrap();
        assert_eq!(out.len(), 5);
        for (o, f) in out.iter().zip(&seq) {
            let skip = msmm.skip().forward(&p, f).unwrap();
            assert!(max_diff(&o.value(), &skip.value()) <= 1e-6);
        }
        assert!(msmm.forward(&p, &seq[..3]).is_err());
    }

    #[test]
    fn single_level_gfm_fuses_zero_offset() {
        let cfg = NetConfig {
            pyramid_levels: 1,
            ..small()
        };
        let (dir, store) = build(&cfg, 4, GfmDirection::new);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let prev = tape.constant(noise(&[4, 3, 5], 20));
        let next = tape.constant(noise(&[4, 3, 5], 21));
        let y = dir.forward(&p, &prev, &next).unwrap();
        let zero = tape.constant(Tensor::zeros(&[4, 3, 5]));
        let expect = fuse(&dir.levels[0].fuse, &p, &zero, &next).unwrap();
        assert_eq!(*y.value(), *expect.value());
    }

    #[test]
    fn gfm_pyramid_needs_divisible_extent() {
        let cfg = NetConfig {
            pyramid_levels: 3,
            ..small()
        };
        let (g, store) = build(&cfg, 5, GfmSynth::new);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let ok = tape.constant(noise(&[4, 8, 4], 22));
        assert_eq!(g.forward(&p, &ok, &ok).unwrap().shape(), vec![4, 8, 4]);
        let bad = tape.constant(noise(&[4, 6, 4], 23));
        assert!(g.forward(&p, &bad, &bad).is_err());
    }

    #[test]
    fn tied_gfm_is_symmetric_under_symmetric_blend() {
        let cfg = NetConfig {
            tie_gfm_branches: true,
            zero_init: false,
            ..small()
        };
        let (g, mut store) = build(&cfg, 6, GfmSynth::new);
        assert!(store.names().iter().all(|n| !n.contains("bwd")));
        let w = store.get(g.blend().w).clone();
        let c = 4;
        let sym = Tensor::from_fn(w.shape(), |i| {
            let (o, k) = (i / (2 * c), i % (2 * c));
            w.data()[o * 2 * c + k % c]
        });
        store.set("blend.w", sym).unwrap();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let a = tape.constant(noise(&[4, 4, 4], 30));
        let b = tape.constant(noise(&[4, 4, 4], 31));
        let ab = g.forward(&p, &a, &b).unwrap();
        let ba = g.forward(&p, &b, &a).unwrap();
        assert!(max_diff(&ab.value(), &ba.value()) <= 1e-6);
    }

    #[test]
    fn untied_gfm_has_two_branches() {
        let (_, store) = build(&small(), 7, GfmSynth::new);
        assert!(store.names().iter().any(|n| n.starts_with("bwd.")));
        assert!(store.names().iter().any(|n| n.starts_with("fwd.")));
    }

    #[test]
    fn window_assignment() {
        let seven: Vec<usize> = (0..7).map(|i| window_for_frame(i, 7).unwrap()).collect();
        assert_eq!(seven, vec![0, 0, 1, 1, 2, 2, 2]);
        let three: Vec<usize> = (0..3).map(|i| window_for_frame(i, 3).unwrap()).collect();
        assert_eq!(three, vec![0, 0, 0]);
        assert!(window_for_frame(0, 4).is_err());
        assert!(window_for_frame(7, 7).is_err());
        assert!(window_for_frame(0, 1).is_err());
    }

    #[test]
    fn mambavr_variants_keep_token_shape() {
        for (registers, spe) in [(false, false), (true, false), (false, true), (true, true)] {
            let cfg = NetConfig {
                use_registers: registers,
                use_spe: spe,
                ..small()
            };
            let (blk, store) = build(&cfg, 8, MambaVr::new);
            assert_eq!(store.names().iter().any(|n| n == "registers"), registers);
            let tape = Tape::new();
            let p = store.bind(&tape);
            let coords = TokenCoord::grid(2, 3, 3);
            let layout = blk.layout(coords.len(), 2);
            assert_eq!(layout.register_count(), if registers { 4 } else { 0 });
            let x = tape.constant(noise(&[18, 4], 40));
            let (y, h) = blk.forward(&p, &x, &coords, &layout, None).unwrap();
            assert_eq!(y.shape(), vec![18, 4]);
            assert_eq!(h.shape(), vec![8, 2]);
        }
    }

    #[test]
    fn reconstruct_shapes() {
        for s in [2, 4] {
            let (r, store) = build(&small(), 9, |b, c| Reconstruct::new(b, c, s));
            let tape = Tape::new();
            let p = store.bind(&tape);
            let y = r.forward(&p, &tape.constant(noise(&[4, 3, 5], 50))).unwrap();
            assert_eq!(y.shape(), vec![3, 3 * s, 5 * s]);
        }
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Reconstruct::new(&mut Builder::new(&mut store, &mut rng), &small(), 3).is_err());
    }
}
