use super::param::{Builder, Init, ParamId, Params};
use crate::error::{Error, Result};
use crate::ssm::{SsmParams, SsmVars};
use crate::tensor::{ConvGeometry, Scalar, Var};

/// `y = x W + b` over rows of `x: [L, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, inp: usize, out: usize, zero: bool) -> Result<Self> {
        let init = if zero { Init::Zeros } else { Init::FanIn(inp) };
        Ok(Self {
            w: b.param("w", &[inp, out], init)?,
            b: b.param("b", &[out], Init::Zeros)?,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.matmul(&p.get(self.w))?.add(&p.get(self.b))
    }
}

/// Square-kernel 2D convolution with same padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    k: usize,
}

impl Conv2d {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, ci: usize, co: usize, k: usize, zero: bool) -> Result<Self> {
        let fan = ci * k * k;
        let (wi, bi) = if zero { (Init::Zeros, Init::Zeros) } else { (Init::He(fan), Init::FanIn(fan)) };
        Ok(Self {
            w: b.param("w", &[co, ci, k, k], wi)?,
            b: b.param("b", &[co], bi)?,
            k,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(&p.get(self.w), Some(&p.get(self.b)), ConvGeometry::same([1, self.k, self.k])?)
    }
}

/// 3D convolution over `[C, T, H, W]`.
#[derive(Clone, Debug)]
pub struct Conv3d {
    pub w: ParamId,
    pub b: ParamId,
    geom: ConvGeometry,
}

impl Conv3d {
    pub fn new<T: Scalar>(
        b: &mut Builder<'_, T>,
        ci: usize,
        co: usize,
        kernel: [usize; 3],
        geom: ConvGeometry,
    ) -> Result<Self> {
        let fan = ci * kernel.iter().product::<usize>();
        Ok(Self {
            w: b.param("w", &[co, ci, kernel[0], kernel[1], kernel[2]], Init::He(fan))?,
            b: b.param("b", &[co], Init::FanIn(fan))?,
            geom,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv3d(&p.get(self.w), Some(&p.get(self.b)), self.geom)
    }
}

/// `x + conv(relu(conv(x)))`; the second conv starts at zero when
/// `zero_init` is set.
#[derive(Clone, Debug)]
pub struct ResBlock {
    c1: Conv2d,
    c2: Conv2d,
}

impl ResBlock {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, c: usize, zero_init: bool) -> Result<Self> {
        Ok(Self {
            c1: Conv2d::new(&mut b.sub("conv1"), c, c, 3, false)?,
            c2: Conv2d::new(&mut b.sub("conv2"), c, c, 3, zero_init)?,
        })
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Params<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.c1.forward(p, x)?.relu();
        x.add(&self.c2.forward(p, &h)?)
    }
}

/// Selective-scan parameters of one direction.
#[derive(Clone, Debug)]
pub struct Ssm {
    a_log: ParamId,
    d: ParamId,
    w_delta: ParamId,
    b_delta: ParamId,
    w_b: ParamId,
    w_c: ParamId,
}

impl Ssm {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, channels: usize, state: usize) -> Result<Self> {
        let p = SsmParams::<f64>::init(channels, state, b.rng());
        Ok(Self {
            a_log: b.tensor("a_log", p.a_log)?,
            d: b.tensor("d", p.d)?,
            w_delta: b.tensor("w_delta", p.w_delta)?,
            b_delta: b.tensor("b_delta", p.b_delta)?,
            w_b: b.tensor("w_b", p.w_b)?,
            w_c: b.tensor("w_c", p.w_c)?,
        })
    }

    pub fn vars<'t, T: Scalar>(&self, p: &Params<'t, T>) -> SsmVars<'t, T> {
        SsmVars {
            a_log: p.get(self.a_log),
            d: p.get(self.d),
            w_delta: p.get(self.w_delta),
            b_delta: p.get(self.b_delta),
            w_b: p.get(self.w_b),
            w_c: p.get(self.w_c),
        }
    }

    /// Scans `x: [L, E]`; returns outputs and the final state.
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &Params<'t, T>,
        x: Var<'t, T>,
        h0: Option<Var<'t, T>>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        self.vars(p).forward(x, h0)
    }
}

/// Widths of a Mamba-style mixer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MixerDims {
    pub channels: usize,
    pub expand: usize,
    pub state: usize,
}

impl MixerDims {
    pub fn inner(&self) -> usize {
        self.channels * self.expand
    }
}

/// Input projection, forward and reversed selective scans summed, output
/// projection.
#[derive(Clone, Debug)]
pub struct Mixer {
    dims: MixerDims,
    in_proj: Linear,
    fwd: Ssm,
    bwd: Ssm,
    out_proj: Linear,
}

impl Mixer {
    pub fn new<T: Scalar>(b: &mut Builder<'_, T>, dims: MixerDims, zero_out: bool) -> Result<Self> {
        let e = dims.inner();
        Ok(Self {
            dims,
            in_proj: Linear::new(&mut b.sub("in_proj"), dims.channels, e, false)?,
            fwd: Ssm::new(&mut b.sub("ssm_fwd"), e, dims.state)?,
            bwd: Ssm::new(&mut b.sub("ssm_bwd"), e, dims.state)?,
            out_proj: Linear::new(&mut b.sub("out_proj"), e, dims.channels, zero_out)?,
        })
    }

    pub fn dims(&self) -> MixerDims {
        self.dims
    }

    /// Mixes `x: [L, C]`; `h0` seeds the forward scan. Returns the output
    /// and the forward scan's final state `[E, S]`.
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &Params<'t, T>,
        x: &Var<'t, T>,
        h0: Option<Var<'t, T>>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        if let Some(h) = &h0 {
            if h.shape() != [self.dims.inner(), self.dims.state] {
                return Err(Error::ShapeMismatch {
                    op: "mixer state",
                    expected: vec![self.dims.inner(), self.dims.state],
                    got: h.shape(),
                });
            }
        }
        let u = self.in_proj.forward(p, x)?;
        let (yf, h) = self.fwd.forward(p, u, h0)?;
        let (yb, _) = self.bwd.forward(p, u.flip_rows(), None)?;
        let y = yf.add(&yb.flip_rows())?;
        Ok((self.out_proj.forward(p, &y)?, h))
    }
}

/// `[C, H, W]` feature map to `[H*W, C]` tokens in raster order.
pub fn to_tokens<'t, T: Scalar>(x: &Var<'t, T>) -> Result<Var<'t, T>> {
    let s = x.shape();
    x.reshape(&[s[0], s[1] * s[2]])?.t()
}

/// Inverse of [`to_tokens`].
pub fn from_tokens<'t, T: Scalar>(x: &Var<'t, T>, h: usize, w: usize) -> Result<Var<'t, T>> {
    let c = x.shape()[1];
    x.t()?.reshape(&[c, h, w])
}
